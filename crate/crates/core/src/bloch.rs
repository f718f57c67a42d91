//! Projection of the adjoint Liouvillian onto the traceless pseudospin
//! subspace, giving the Bloch-vector drift `A` and inhomogeneity `b`.

use nalgebra::SMatrix;

use crate::correlation::{CorrelationSeries, Method, Spin, TauGrid};
use crate::error::{Error, Result};
use crate::linalg::{self, c, expm, re, CMat3, CMat4, CVec3, C64};
use crate::liouville::{identity_superket, pseudospin, vectorize, CumulantMatrix, Liouvillian};

pub type Mat34 = SMatrix<C64, 3, 4>;
pub type Mat43 = SMatrix<C64, 4, 3>;

#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionOperators {
    /// 𝟙₄ − ½|𝟙⟫⟪𝟙|
    pub p_tl: CMat4,
    /// ½|𝟙⟫⟪𝟙|
    pub p_t: CMat4,
    /// Rows ⟪σ₋|, ⟪σ₊|, ⟪σ_z|.
    pub f: Mat34,
    /// Moore-Penrose inverse of `f`.
    pub f_pinv: Mat43,
}

/// F has mutually orthogonal rows, so F⁺ = F†(FF†)⁻¹ reduces to dividing each
/// column of F† by the squared row norm; ‖|σ_z⟫‖² = 2.
pub fn build_projectors() -> ProjectionOperators {
    let one = identity_superket();
    let p_t = one * one.adjoint() * re(0.5);
    let p_tl = CMat4::identity() - p_t;

    let rows = Spin::ALL.map(|s| vectorize(&pseudospin(s)));
    let f = Mat34::from_fn(|i, k| rows[i][k].conj());
    let f_pinv = Mat43::from_fn(|k, i| rows[i][k] / rows[i].norm_squared());
    ProjectionOperators { p_tl, p_t, f, f_pinv }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DriftModel {
    /// Drift matrix A, (−, +, z) ordering, units 1/time.
    pub a: CMat3,
    /// Inhomogeneity b.
    pub b: CVec3,
}

impl DriftModel {
    /// Stationary mean −A⁻¹b.
    pub fn fixed_point(&self) -> CVec3 {
        -self.a.lu().solve(&self.b).expect("Hurwitz drift matrix is invertible")
    }

    pub fn spectral_abscissa(&self) -> Result<f64> {
        linalg::spectral_abscissa(&self.a)
    }

    pub fn dump(&self) -> String {
        let mut s = linalg::dump_matrix("A", &self.a);
        s.push_str(&linalg::dump_matrix("b", &self.b));
        s
    }
}

/// A = F P_tl L† P_tl F⁺ and b = (⟪𝟙| P_t L† P_tl F⁺)ᵀ.
pub fn drift_matrix(liouv: &Liouvillian) -> Result<DriftModel> {
    let pr = build_projectors();
    let ldag = liouv.matrix.adjoint();
    let a = pr.f * pr.p_tl * ldag * pr.p_tl * pr.f_pinv;
    let b_row = identity_superket().adjoint() * pr.p_t * ldag * pr.p_tl * pr.f_pinv;
    let drift = DriftModel {
        a,
        b: b_row.transpose(),
    };
    let abscissa = drift.spectral_abscissa()?;
    if !(abscissa < -1e-12) {
        return Err(Error::NotHurwitz { abscissa });
    }
    Ok(drift)
}

/// Exact solution of ∂ₜu = Au + b: u(t) = e^{At}(u₀ + A⁻¹b) − A⁻¹b on a uniform grid.
pub fn bloch_mean_evolution(drift: &DriftModel, u0: &CVec3, grid: &TauGrid) -> Vec<CVec3> {
    let fp = drift.fixed_point();
    let step = expm(&(drift.a * re(grid.dt)));
    let mut dev = u0 - fp;
    let mut out = Vec::with_capacity(grid.len);
    out.push(*u0);
    for _ in 1..grid.len {
        dev = step * dev;
        out.push(dev + fp);
    }
    out
}

/// C^grn(τ) = e^{Aτ}·M, with the one-step propagator computed once.
pub fn greens_correlation(drift: &DriftModel, m: &CumulantMatrix, grid: &TauGrid) -> CorrelationSeries {
    let step = expm(&(drift.a * re(grid.dt)));
    let mut values = Vec::with_capacity(grid.len);
    let mut cur = m.0;
    values.push(cur);
    for _ in 1..grid.len {
        cur = step * cur;
        values.push(cur);
    }
    CorrelationSeries {
        grid: *grid,
        values,
        method: Method::Grn,
        stderr: None,
    }
}

/// The closed-form drift matrix, written out entry by entry.
pub fn explicit_drift(params: &crate::params::SystemParams) -> CMat3 {
    let g1 = params.gamma1();
    let dec = -0.5 * (g1 + params.gamma2());
    let (om, de) = (params.omega_r(), params.delta());
    CMat3::new(
        c(dec, -de),
        re(0.0),
        c(0.0, -0.5 * om),
        re(0.0),
        c(dec, de),
        c(0.0, 0.5 * om),
        c(0.0, -om),
        c(0.0, om),
        re(-g1),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::max_abs;
    use crate::liouville::{build_liouvillian, qrt_correlation, second_order_cumulant, steady_state};
    use crate::params::SystemParams;

    #[test]
    fn projector_identities() {
        let pr = build_projectors();
        assert!(max_abs(&(pr.p_tl * pr.p_tl - pr.p_tl)) < 1e-13);
        assert!(max_abs(&(pr.p_t - (CMat4::identity() - pr.p_tl))) < 1e-13);
        assert!(max_abs(&(pr.f * pr.f_pinv - CMat3::identity())) < 1e-13);
        assert!((pr.p_tl * identity_superket()).norm() < 1e-15);
        let fm = pr.f * vectorize(&pseudospin(Spin::Minus));
        assert_eq!(fm, CVec3::new(re(1.0), re(0.0), re(0.0)));
    }

    #[test]
    fn pseudoinverse_matches_normal_equations() {
        let pr = build_projectors();
        // F⁺ = F†(FF†)⁻¹ for full-row-rank F
        let fd = pr.f.adjoint();
        let oracle = fd * (pr.f * fd).try_inverse().unwrap();
        assert!(max_abs(&(oracle - pr.f_pinv)) < 1e-14);
        // Moore-Penrose conditions
        assert!(max_abs(&(pr.f * pr.f_pinv * pr.f - pr.f)) < 1e-14);
        assert!(max_abs(&(pr.f_pinv * pr.f * pr.f_pinv - pr.f_pinv)) < 1e-14);
    }

    #[test]
    fn drift_matches_closed_form() {
        for p in [
            SystemParams::new(30.0, 0.0, 400.0, 800.0).unwrap(),
            SystemParams::new(0.0, 0.0, 400.0, 800.0).unwrap(),
            SystemParams::new(21.0, -42.0, 450.0, 900.0).unwrap(),
            SystemParams::natural(8.0, -0.9, 1.0, 2.0).unwrap(),
        ] {
            let d = drift_matrix(&build_liouvillian(&p)).unwrap();
            assert!(max_abs(&(d.a - explicit_drift(&p))) < 1e-14, "{p:?}");
            let b = CVec3::new(re(0.0), re(0.0), re(-1.0 / p.t1));
            assert!((d.b - b).norm() < 1e-14);
        }
    }

    #[test]
    fn drift_named_entries() {
        let p = SystemParams::new(30.0, 0.0, 400.0, 800.0).unwrap();
        let d = drift_matrix(&build_liouvillian(&p)).unwrap();
        let om = p.omega_r();
        assert!((d.a[(2, 0)] - c(0.0, -om)).norm() < 1e-14);
        assert!((d.a[(2, 1)] - c(0.0, om)).norm() < 1e-14);

        let p0 = SystemParams::new(0.0, 0.0, 400.0, 800.0).unwrap();
        let d0 = drift_matrix(&build_liouvillian(&p0)).unwrap();
        let dec = -0.5 * (p0.gamma1() + p0.gamma2());
        let expected = CMat3::from_diagonal(&CVec3::new(re(dec), re(dec), re(-p0.gamma1())));
        assert!(max_abs(&(d0.a - expected)) < 1e-14);
    }

    #[test]
    fn non_hurwitz_is_rejected() {
        let p = SystemParams::new(5.0, 0.0, f64::INFINITY, f64::INFINITY).unwrap();
        assert!(matches!(
            drift_matrix(&build_liouvillian(&p)),
            Err(Error::NotHurwitz { .. })
        ));
    }

    #[test]
    fn fixed_point_is_steady_state_means() {
        let p = SystemParams::new(27.0, 14.0, 400.0, 800.0).unwrap();
        let l = build_liouvillian(&p);
        let ss = steady_state(&l).unwrap();
        let fp = drift_matrix(&l).unwrap().fixed_point();
        for k in 0..3 {
            assert!((fp[k] - ss.means[k]).norm() < 1e-9);
        }
    }

    #[test]
    fn mean_evolution_examples() {
        let p = SystemParams::new(0.0, 0.0, 400.0, 800.0).unwrap();
        let d = drift_matrix(&build_liouvillian(&p)).unwrap();
        let grid = TauGrid::new(20.0, 300).unwrap();
        let u0 = CVec3::new(re(0.0), re(0.0), re(1.0));
        for (m, u) in bloch_mean_evolution(&d, &u0, &grid).iter().enumerate() {
            let t = grid.tau(m);
            assert!((u[2].re - (-1.0 + 2.0 * (-t / 400.0).exp())).abs() < 1e-12);
        }

        let p = SystemParams::new(33.0, -8.0, 400.0, 800.0).unwrap();
        let l = build_liouvillian(&p);
        let d = drift_matrix(&l).unwrap();
        let fp = d.fixed_point();
        let traj = bloch_mean_evolution(&d, &fp, &grid);
        assert!(traj.iter().all(|u| (u - fp).norm() < 1e-12));

        let long = TauGrid::new(400.0, 51).unwrap();
        let ss = steady_state(&l).unwrap();
        let end = *bloch_mean_evolution(&d, &u0, &long).last().unwrap();
        for k in 0..3 {
            assert!((end[k] - ss.means[k]).norm() < 1e-9);
        }
    }

    #[test]
    fn greens_zero_lag_and_undriven_decay() {
        let p = SystemParams::new(0.0, 6.0, 400.0, 800.0).unwrap();
        let l = build_liouvillian(&p);
        let ss = steady_state(&l).unwrap();
        let m = second_order_cumulant(&ss);
        let d = drift_matrix(&l).unwrap();
        let grid = TauGrid::new(4.0, 500).unwrap();
        let g = greens_correlation(&d, &m, &grid);
        assert!(max_abs(&(g.values[0] - m.0)) == 0.0);
        let lam = c(-0.5 * (p.gamma1() + p.gamma2()), -p.delta());
        for (k, v) in g.component(Spin::Minus, Spin::Plus).iter().enumerate() {
            let expect = (lam * grid.tau(k)).exp() * m.get(Spin::Minus, Spin::Plus);
            assert!((v - expect).norm() < 1e-12);
        }
    }

    #[test]
    fn greens_equals_qrt() {
        let p = SystemParams::new(30.0, 10.0, 400.0, 800.0).unwrap();
        let l = build_liouvillian(&p);
        let ss = steady_state(&l).unwrap();
        let m = second_order_cumulant(&ss);
        let d = drift_matrix(&l).unwrap();
        let grid = TauGrid::default_for(p.t1);
        let g = greens_correlation(&d, &m, &grid);
        let q = qrt_correlation(&l, &ss, &grid).unwrap();
        assert!(g.max_deviation(&q) < 1e-8);
    }
}
