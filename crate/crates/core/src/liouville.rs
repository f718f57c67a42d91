//! Liouville-space description of the driven, damped two-level system.
//!
//! Basis conventions: |e⟩ = (1, 0)ᵀ, |g⟩ = (0, 1)ᵀ, and operators are
//! vectorized row-major, vec(|a⟩⟨b|) = |a⟩ ⊗ |b⟩*, so supervector components
//! are ordered (ee, eg, ge, gg). With this ordering vec(XρY) = (X ⊗ Yᵀ)·vec(ρ)
//! and ⟪A|B⟫ = vec(A)†vec(B) = Tr(A†B).

use crate::correlation::{CorrelationSeries, Method, Spin, TauGrid};
use crate::error::{Error, Result};
use crate::linalg::{self, c, expm, kron2, re, CMat2, CMat3, CMat4, CVec4, C64, I};
use crate::params::SystemParams;

pub fn sigma_minus() -> CMat2 {
    // |g⟩⟨e|
    CMat2::new(re(0.0), re(0.0), re(1.0), re(0.0))
}

pub fn sigma_plus() -> CMat2 {
    CMat2::new(re(0.0), re(1.0), re(0.0), re(0.0))
}

pub fn sigma_z() -> CMat2 {
    CMat2::new(re(1.0), re(0.0), re(0.0), re(-1.0))
}

pub fn sigma_gg() -> CMat2 {
    CMat2::new(re(0.0), re(0.0), re(0.0), re(1.0))
}

pub fn sigma_ee() -> CMat2 {
    CMat2::new(re(1.0), re(0.0), re(0.0), re(0.0))
}

pub fn pseudospin(s: Spin) -> CMat2 {
    match s {
        Spin::Minus => sigma_minus(),
        Spin::Plus => sigma_plus(),
        Spin::Z => sigma_z(),
    }
}

/// vec(X), row-major.
pub fn vectorize(x: &CMat2) -> CVec4 {
    CVec4::new(x[(0, 0)], x[(0, 1)], x[(1, 0)], x[(1, 1)])
}

pub fn devectorize(v: &CVec4) -> CMat2 {
    CMat2::new(v[0], v[1], v[2], v[3])
}

/// ⟪A|B⟫
pub fn superbraket(a: &CVec4, b: &CVec4) -> C64 {
    a.dotc(b)
}

pub fn identity_superket() -> CVec4 {
    vectorize(&CMat2::identity())
}

/// Trace of a vectorized operator: components ee + gg.
pub fn trace(v: &CVec4) -> C64 {
    v[0] + v[3]
}

/// H = (ħ/2)(Δσ_z − Ω_R(σ₊ + σ₋)) in energy units (μeV for physical units).
pub fn build_hamiltonian(params: &SystemParams) -> CMat2 {
    let half = 0.5;
    (sigma_z() * re(params.detuning_energy) - (sigma_plus() + sigma_minus()) * re(params.rabi_energy)) * re(half)
}

/// Generator of ∂ₜ|ρ⟫ = L|ρ⟫, 4×4 in the (ee, eg, ge, gg) basis, units 1/time.
#[derive(Debug, Clone, PartialEq)]
pub struct Liouvillian {
    pub matrix: CMat4,
    pub params: SystemParams,
}

/// Builds L = −iħ⁻¹⟦H, 𝟙⟧ + Σ_k (L_k ⊗ L_k* − ½⟦L_k†L_k, 𝟙⟧₊) with
/// L₁ = √Γ₁ σ₋ and L₂ = √Γ₂ (𝟙 + σ_z)/2.
pub fn build_liouvillian(params: &SystemParams) -> Liouvillian {
    let id = CMat2::identity();
    let h = build_hamiltonian(params) * re(1.0 / params.hbar());

    // ⟦X, Y⟧ = X ⊗ Yᵀ − Y ⊗ Xᵀ
    let supercomm = |x: &CMat2, y: &CMat2| kron2(x, &y.transpose()) - kron2(y, &x.transpose());
    let superanti = |x: &CMat2, y: &CMat2| kron2(x, &y.transpose()) + kron2(y, &x.transpose());

    let mut l = supercomm(&h, &id) * (-I);
    let jumps = [
        sigma_minus() * re(params.gamma1().sqrt()),
        (id + sigma_z()) * re(0.5 * params.gamma2().sqrt()),
    ];
    for lk in &jumps {
        let lk_conj = lk.map(|z| z.conj());
        let ldl = lk.adjoint() * lk;
        l += kron2(lk, &lk_conj) - superanti(&ldl, &id) * re(0.5);
    }
    Liouvillian {
        matrix: l,
        params: *params,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SteadyState {
    pub rho: CVec4,
    /// (⟨σ₋⟩, ⟨σ₊⟩, ⟨σ_z⟩)
    pub means: [C64; 3],
}

impl SteadyState {
    pub fn from_rho(rho: CVec4) -> Self {
        let means = Spin::ALL.map(|s| expectation(&rho, &pseudospin(s)));
        SteadyState { rho, means }
    }

    pub fn mean(&self, s: Spin) -> C64 {
        self.means[s.index()]
    }

    pub fn density_matrix(&self) -> CMat2 {
        devectorize(&self.rho)
    }

    pub fn excited_population(&self) -> f64 {
        self.rho[0].re
    }
}

/// ⟨X⟩ = ⟪X†|ρ⟫
pub fn expectation(rho: &CVec4, x: &CMat2) -> C64 {
    superbraket(&vectorize(&x.adjoint()), rho)
}

/// Zero mode of L from the trace-constrained linear system: the gg row of L
/// is replaced by the trace functional and the right-hand side by e_gg.
pub fn steady_state(liouv: &Liouvillian) -> Result<SteadyState> {
    let mut a = liouv.matrix;
    let trace_row = identity_superket();
    for k in 0..4 {
        a[(3, k)] = trace_row[k];
    }
    let sv = a.singular_values();
    let (smax, smin) = sv
        .iter()
        .fold((0.0f64, f64::INFINITY), |(hi, lo), &s| (hi.max(s), lo.min(s)));
    let ratio = if smax > 0.0 { smin / smax } else { 0.0 };
    if !(ratio > 1e-12) {
        return Err(Error::SingularSystem { ratio });
    }
    let rhs = CVec4::new(re(0.0), re(0.0), re(0.0), re(1.0));
    let rho = a.lu().solve(&rhs).ok_or(Error::SingularSystem { ratio })?;
    // exact Hermiticity
    let mut rho = rho;
    let coh = 0.5 * (rho[1] + rho[2].conj());
    rho[1] = coh;
    rho[2] = coh.conj();
    rho[0] = re(rho[0].re);
    rho[3] = re(rho[3].re);
    Ok(SteadyState::from_rho(rho))
}

/// Steady state as the long-time limit e^{Lt}|σ_gg⟫ (time-propagation route).
pub fn steady_state_by_propagation(liouv: &Liouvillian, t: f64) -> SteadyState {
    let rho = expm(&(liouv.matrix * re(t))) * vectorize(&sigma_gg());
    SteadyState::from_rho(rho)
}

/// Equal-time cumulant M_ij = ⟨σᵢσⱼ⟩ − ⟨σᵢ⟩⟨σⱼ⟩ in the steady state, (−, +, z) ordering.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CumulantMatrix(pub CMat3);

impl CumulantMatrix {
    pub fn get(&self, i: Spin, j: Spin) -> C64 {
        self.0[(i.index(), j.index())]
    }
}

pub fn second_order_cumulant(ss: &SteadyState) -> CumulantMatrix {
    let m = CMat3::from_fn(|i, j| {
        let si = pseudospin(Spin::ALL[i]);
        let sj = pseudospin(Spin::ALL[j]);
        let prod = si * sj;
        superbraket(&vectorize(&prod.adjoint()), &ss.rho) - ss.means[i] * ss.means[j]
    });
    CumulantMatrix(m)
}

/// ρ(t_m) = e^{L t_m} ρ(0) on a uniform grid, via repeated application of the
/// one-step propagator.
pub fn propagate_density(liouv: &Liouvillian, rho0: &CVec4, grid: &TauGrid) -> Result<Vec<CVec4>> {
    let step = expm(&(liouv.matrix * re(grid.dt)));
    let norm0 = rho0.norm().max(f64::MIN_POSITIVE);
    let mut out = Vec::with_capacity(grid.len);
    let mut v = *rho0;
    out.push(v);
    for m in 1..grid.len {
        v = step * v;
        let growth = v.norm() / norm0;
        if !(growth <= 10.0) {
            return Err(Error::PropagationDiverged { step: m, growth });
        }
        out.push(v);
    }
    Ok(out)
}

/// C^qrt_ij(τ) = ⟪σᵢ†|e^{Lτ}|σⱼρ_ss⟫ − ⟨σᵢ⟩⟨σⱼ⟩ for all (i, j).
pub fn qrt_correlation(liouv: &Liouvillian, ss: &SteadyState, grid: &TauGrid) -> Result<CorrelationSeries> {
    let rho = ss.density_matrix();
    let bras: Vec<CVec4> = Spin::ALL.iter().map(|&s| vectorize(&pseudospin(s).adjoint())).collect();
    let mut values = vec![CMat3::zeros(); grid.len];
    for j in Spin::ALL {
        let start = vectorize(&(pseudospin(j) * rho));
        let traj = propagate_density(liouv, &start, grid)?;
        for (m, v) in traj.iter().enumerate() {
            for (i, bra) in bras.iter().enumerate() {
                values[m][(i, j.index())] = superbraket(bra, v) - ss.means[i] * ss.means[j.index()];
            }
        }
    }
    Ok(CorrelationSeries {
        grid: *grid,
        values,
        method: Method::Qrt,
        stderr: None,
    })
}

/// Hermitian 2×2 eigenvalues (ascending) of a devectorized state.
pub fn hermitian_eigenvalues(m: &CMat2) -> [f64; 2] {
    let a = m[(0, 0)].re;
    let d = m[(1, 1)].re;
    let b = m[(0, 1)];
    let mean = 0.5 * (a + d);
    let r = (0.25 * (a - d) * (a - d) + b.norm_sqr()).sqrt();
    [mean - r, mean + r]
}

/// The closed-form 4×4 Liouvillian, written out entry by entry.
pub fn explicit_liouvillian(params: &SystemParams) -> CMat4 {
    let g1 = params.gamma1();
    let g2 = params.gamma2();
    let om = params.omega_r();
    let de = params.delta();
    let h = 0.5 * om;
    let dec = -0.5 * (g1 + g2);
    let z = re(0.0);
    CMat4::new(
        re(-g1),
        c(0.0, -h),
        c(0.0, h),
        z,
        c(0.0, -h),
        c(dec, -de),
        z,
        c(0.0, h),
        c(0.0, h),
        z,
        c(dec, de),
        c(0.0, -h),
        re(g1),
        c(0.0, h),
        c(0.0, -h),
        z,
    )
}

pub fn dump(liouv: &Liouvillian) -> String {
    linalg::dump_matrix("liouvillian", &liouv.matrix)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::max_abs;

    fn reference_params() -> SystemParams {
        SystemParams::new(30.0, 0.0, 400.0, 800.0).unwrap()
    }

    #[test]
    fn superkets_match_table() {
        assert_eq!(vectorize(&sigma_minus()), CVec4::new(re(0.), re(0.), re(1.), re(0.)));
        assert_eq!(vectorize(&sigma_plus()), CVec4::new(re(0.), re(1.), re(0.), re(0.)));
        assert_eq!(vectorize(&sigma_z()), CVec4::new(re(1.), re(0.), re(0.), re(-1.)));
        assert_eq!(vectorize(&sigma_gg()), CVec4::new(re(0.), re(0.), re(0.), re(1.)));
    }

    #[test]
    fn hilbert_schmidt_consistency() {
        let ops = [sigma_minus(), sigma_plus(), sigma_z(), sigma_gg(), CMat2::identity()];
        for a in &ops {
            for b in &ops {
                let hs = (a.adjoint() * b).trace();
                assert!((superbraket(&vectorize(a), &vectorize(b)) - hs).norm() < 1e-15);
            }
        }
    }

    #[test]
    fn hamiltonian_examples() {
        let h0 = build_hamiltonian(&SystemParams::new(0.0, 0.0, 1.0, 1.0).unwrap());
        assert_eq!(h0, CMat2::zeros());

        let h = build_hamiltonian(&reference_params());
        assert_eq!(h[(0, 1)], re(-15.0));
        assert_eq!(h[(1, 0)], re(-15.0));
        assert_eq!(h[(0, 0)], re(0.0));
        assert_eq!(h[(1, 1)], re(0.0));

        let hd = build_hamiltonian(&SystemParams::new(0.0, 2.0, 1.0, 1.0).unwrap());
        assert_eq!(hd[(0, 0)], re(1.0));
        assert_eq!(hd[(1, 1)], re(-1.0));
        assert!(max_abs(&(hd - hd.adjoint())) == 0.0);
    }

    #[test]
    fn liouvillian_matches_closed_form() {
        for p in [
            reference_params(),
            SystemParams::new(12.0, -7.5, 450.0, 1500.0).unwrap(),
            SystemParams::natural(8.0, 0.9, 1.0, 2.0).unwrap(),
        ] {
            let l = build_liouvillian(&p);
            let e = explicit_liouvillian(&p);
            assert!(max_abs(&(l.matrix - e)) < 1e-15, "{p:?}");
        }
    }

    #[test]
    fn liouvillian_named_entries() {
        let p = SystemParams::new(30.0, 11.0, 400.0, 800.0).unwrap();
        let l = build_liouvillian(&p).matrix;
        assert!((l[(0, 0)] - re(-p.gamma1())).norm() < 1e-16);
        let expected = c(-0.5 * (p.gamma1() + p.gamma2()), -p.delta());
        assert!((l[(1, 1)] - expected).norm() < 1e-16);

        let l0 = build_liouvillian(&SystemParams::new(0.0, 0.0, 400.0, 800.0).unwrap()).matrix;
        let g1 = 1.0 / 400.0;
        let dec = -0.5 * (g1 + 2.0 / 800.0);
        let mut expected = CMat4::from_diagonal(&CVec4::new(re(-g1), re(dec), re(dec), re(0.0)));
        expected[(3, 0)] = re(g1);
        assert!(max_abs(&(l0 - expected)) < 1e-17);
    }

    #[test]
    fn trace_preservation() {
        let one = identity_superket();
        for p in [reference_params(), SystemParams::new(55.0, -40.0, 120.0, 300.0).unwrap()] {
            let row = one.adjoint() * build_liouvillian(&p).matrix;
            assert!(row.iter().all(|z| z.norm() < 1e-14));
        }
    }

    #[test]
    fn undriven_steady_state_is_ground() {
        let ss = steady_state(&build_liouvillian(&SystemParams::new(0.0, 3.0, 400.0, 800.0).unwrap())).unwrap();
        assert!((ss.rho - vectorize(&sigma_gg())).norm() < 1e-14);
        assert!((ss.mean(Spin::Z) - re(-1.0)).norm() < 1e-14);
    }

    #[test]
    fn steady_state_matches_long_rk4_propagation() {
        let l = build_liouvillian(&reference_params());
        let ss = steady_state(&l).unwrap();

        // independent oracle: classical RK4 on dρ/dt = Lρ from σ_gg out to 50·T₁
        let f = |v: &CVec4| l.matrix * v;
        let mut v = vectorize(&sigma_gg());
        let h = 0.5; // ps; |λ|h ≪ 1
        let steps = (50.0 * 400.0 / h) as usize;
        for _ in 0..steps {
            let k1 = f(&v);
            let k2 = f(&(v + k1 * re(0.5 * h)));
            let k3 = f(&(v + k2 * re(0.5 * h)));
            let k4 = f(&(v + k3 * re(h)));
            v += (k1 + k2 * re(2.0) + k3 * re(2.0) + k4) * re(h / 6.0);
        }
        for k in 0..4 {
            assert!(
                (v[k] - ss.rho[k]).norm() < 1e-8,
                "component {k}: {} vs {}",
                v[k],
                ss.rho[k]
            );
        }
        let by_prop = steady_state_by_propagation(&l, 50.0 * 400.0);
        assert!((by_prop.rho - ss.rho).norm() < 1e-10);
    }

    #[test]
    fn steady_state_invariants() {
        let l = build_liouvillian(&SystemParams::new(21.0, -13.0, 450.0, 900.0).unwrap());
        let ss = steady_state(&l).unwrap();
        assert!((trace(&ss.rho) - re(1.0)).norm() < 1e-12);
        assert!((ss.rho[1] - ss.rho[2].conj()).norm() < 1e-12);
        assert!((l.matrix * ss.rho).norm() < 1e-12);
        assert!((ss.mean(Spin::Plus) - ss.mean(Spin::Minus).conj()).norm() < 1e-15);
        let z = ss.mean(Spin::Z);
        assert!(z.im.abs() < 1e-15 && z.re <= 0.0 && z.re >= -1.0);
        let ev = hermitian_eigenvalues(&ss.density_matrix());
        assert!(ev[0] >= -1e-12);
    }

    #[test]
    fn degenerate_parameters_are_singular() {
        let p = SystemParams::new(0.0, 0.0, f64::INFINITY, f64::INFINITY).unwrap();
        assert!(matches!(
            steady_state(&build_liouvillian(&p)),
            Err(Error::SingularSystem { .. })
        ));
    }

    #[test]
    fn cumulant_at_zero_drive() {
        let ss = steady_state(&build_liouvillian(&SystemParams::new(0.0, 0.0, 400.0, 800.0).unwrap())).unwrap();
        let m = second_order_cumulant(&ss);
        assert!((m.get(Spin::Minus, Spin::Plus) - re(1.0)).norm() < 1e-14);
        assert!(m.get(Spin::Plus, Spin::Minus).norm() < 1e-14);
        assert!(m.get(Spin::Z, Spin::Z).norm() < 1e-14);
    }

    #[test]
    fn cumulant_matches_trace_formula() {
        let ss = steady_state(&build_liouvillian(&reference_params())).unwrap();
        let m = second_order_cumulant(&ss);
        let rho = ss.density_matrix();
        for i in Spin::ALL {
            for j in Spin::ALL {
                let si = pseudospin(i);
                let sj = pseudospin(j);
                let direct = (si * sj * rho).trace() - (si * rho).trace() * (sj * rho).trace();
                assert!((m.get(i, j) - direct).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn exact_operator_products() {
        assert_eq!(sigma_plus() * sigma_minus(), sigma_ee());
        assert_eq!(sigma_minus() * sigma_plus(), sigma_gg());
        assert_eq!(sigma_minus() * sigma_minus(), CMat2::zeros());
    }

    #[test]
    fn qrt_zero_lag_is_cumulant() {
        let l = build_liouvillian(&SystemParams::new(30.0, 10.0, 400.0, 800.0).unwrap());
        let ss = steady_state(&l).unwrap();
        let m = second_order_cumulant(&ss);
        let c = qrt_correlation(&l, &ss, &TauGrid::new(2.0, 5).unwrap()).unwrap();
        assert!(max_abs(&(c.values[0] - m.0)) < 1e-10);
    }

    #[test]
    fn qrt_undriven_plus_minus_is_zero() {
        let l = build_liouvillian(&SystemParams::new(0.0, 0.0, 400.0, 800.0).unwrap());
        let ss = steady_state(&l).unwrap();
        let c = qrt_correlation(&l, &ss, &TauGrid::default_for(400.0)).unwrap();
        assert!(c.component(Spin::Plus, Spin::Minus).iter().all(|z| z.norm() < 1e-15));
    }

    #[test]
    fn qrt_decays_below_envelope() {
        let p = reference_params();
        let l = build_liouvillian(&p);
        let ss = steady_state(&l).unwrap();
        let m = second_order_cumulant(&ss);
        let grid = TauGrid::default_for(p.t1);
        let corr = qrt_correlation(&l, &ss, &grid).unwrap();

        // oracle: eigen-expansion of the closed-form drift matrix
        let g1 = p.gamma1();
        let dec = -0.5 * (g1 + p.gamma2());
        let (om, de) = (p.omega_r(), p.delta());
        let a = CMat3::new(
            c(dec, -de),
            re(0.0),
            c(0.0, -0.5 * om),
            re(0.0),
            c(dec, de),
            c(0.0, 0.5 * om),
            c(0.0, -om),
            c(0.0, om),
            re(-g1),
        );
        let lams = linalg::eigenvalues(&a).unwrap();
        let alpha = lams.iter().map(|l| -l.re).fold(f64::INFINITY, f64::min);
        assert!(alpha > 0.0);
        // right eigenvectors from cross products of rows of (A − λ)
        let v = CMat3::from_fn(|r, k| {
            let b = a - CMat3::identity() * lams[k];
            let (r0, r1) = (b.row(0), b.row(1));
            let x = [
                r0[1] * r1[2] - r0[2] * r1[1],
                r0[2] * r1[0] - r0[0] * r1[2],
                r0[0] * r1[1] - r0[1] * r1[0],
            ];
            x[r]
        });
        let w = v.try_inverse().unwrap() * m.0;
        let bound: f64 = (0..3).map(|k| v[(1, k)].norm() * w[(k, 0)].norm()).sum();
        for (mi, val) in corr.component(Spin::Plus, Spin::Minus).iter().enumerate() {
            let tau = grid.tau(mi);
            assert!(val.norm() <= bound * (-alpha * tau).exp() * (1.0 + 1e-9) + 1e-15);
        }
        // decayed at τ_max
        let last = max_abs(corr.values.last().unwrap());
        assert!(last < 1e-3 * max_abs(&corr.values[0]));
    }

    #[test]
    fn propagation_examples() {
        let l = build_liouvillian(&SystemParams::new(0.0, 0.0, 400.0, 800.0).unwrap());
        let rho0 = vectorize(&sigma_ee());
        let grid = TauGrid::new(10.0, 201).unwrap();
        let traj = propagate_density(&l, &rho0, &grid).unwrap();
        assert_eq!(traj[0], rho0);
        for (m, v) in traj.iter().enumerate() {
            let t = grid.tau(m);
            assert!((v[0].re - (-t / 400.0).exp()).abs() < 1e-12);
            assert!((trace(v) - re(1.0)).norm() < 1e-12);
        }
    }

    #[test]
    fn propagation_reaches_steady_state() {
        let p = SystemParams::new(18.0, -25.0, 300.0, 700.0).unwrap();
        let l = build_liouvillian(&p);
        let ss = steady_state(&l).unwrap();
        let grid = TauGrid::new(p.t1, 51).unwrap();
        let traj = propagate_density(&l, &vectorize(&sigma_gg()), &grid).unwrap();
        for v in &traj {
            assert!((trace(v) - re(1.0)).norm() < 1e-12);
            let rho = devectorize(v);
            assert!(max_abs(&(rho - rho.adjoint())) < 1e-12);
        }
        assert!((traj.last().unwrap() - ss.rho).norm() < 1e-8);
    }

    #[test]
    fn divergent_generator_is_reported() {
        let mut l = build_liouvillian(&reference_params());
        l.matrix = CMat4::identity() * re(0.01);
        let r = propagate_density(&l, &vectorize(&sigma_gg()), &TauGrid::new(10.0, 100).unwrap());
        assert!(matches!(r, Err(Error::PropagationDiverged { .. })));
    }
}
