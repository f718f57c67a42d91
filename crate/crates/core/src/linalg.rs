//! Dense complex linear algebra for the 2×2 / 3×3 / 4×4 matrices used
//! throughout: matrix exponential, eigenvalues, SVD and text dumps.

use std::fmt::Write as _;

use nalgebra::{SMatrix, SVector};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type C64 = Complex64;
pub type CMat2 = SMatrix<C64, 2, 2>;
pub type CMat3 = SMatrix<C64, 3, 3>;
pub type CMat4 = SMatrix<C64, 4, 4>;
pub type CVec3 = SVector<C64, 3>;
pub type CVec4 = SVector<C64, 4>;

pub const I: C64 = C64 { re: 0.0, im: 1.0 };

#[inline]
pub fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

#[inline]
pub fn re(x: f64) -> C64 {
    C64::new(x, 0.0)
}

/// Maximum absolute row sum.
pub fn norm_inf<const R: usize, const C: usize>(m: &SMatrix<C64, R, C>) -> f64 {
    (0..R)
        .map(|i| (0..C).map(|j| m[(i, j)].norm()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Maximum absolute column sum.
pub fn norm_one<const N: usize>(m: &SMatrix<C64, N, N>) -> f64 {
    (0..N)
        .map(|j| (0..N).map(|i| m[(i, j)].norm()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Largest entry modulus.
pub fn max_abs<const R: usize, const C: usize>(m: &SMatrix<C64, R, C>) -> f64 {
    m.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

// Padé(13) numerator/denominator coefficients.
const PADE13: [f64; 14] = [
    64_764_752_532_480_000.0,
    32_382_376_266_240_000.0,
    7_771_770_303_897_600.0,
    1_187_353_796_428_800.0,
    129_060_195_264_000.0,
    10_559_470_521_600.0,
    670_442_572_800.0,
    33_522_128_640.0,
    1_323_241_920.0,
    40_840_800.0,
    960_960.0,
    16_380.0,
    182.0,
    1.0,
];

const THETA13: f64 = 5.371_920_351_148_152;

/// Matrix exponential by scaling and squaring with a [13/13] Padé core.
///
/// The matrix is scaled by 2⁻ˢ so that its 1-norm is below θ₁₃, the Padé
/// approximant is evaluated with six matrix products and one linear solve,
/// and the result is squared `s` times.
pub fn expm<const N: usize>(a: &SMatrix<C64, N, N>) -> SMatrix<C64, N, N> {
    let norm = norm_one(a);
    if norm == 0.0 {
        return SMatrix::identity();
    }
    let s = if norm > THETA13 {
        (norm / THETA13).log2().ceil().max(0.0) as i32
    } else {
        0
    };
    let a = a * re(2f64.powi(-s));

    let ident = SMatrix::<C64, N, N>::identity();
    let a2 = a * a;
    let a4 = a2 * a2;
    let a6 = a4 * a2;
    let b = |k: usize| re(PADE13[k]);

    let u_inner = a6 * (a6 * b(13) + a4 * b(11) + a2 * b(9)) + a6 * b(7) + a4 * b(5) + a2 * b(3) + ident * b(1);
    let u = a * u_inner;
    let v = a6 * (a6 * b(12) + a4 * b(10) + a2 * b(8)) + a6 * b(6) + a4 * b(4) + a2 * b(2) + ident * b(0);

    let den = nalgebra::DMatrix::from_fn(N, N, |i, k| (v - u)[(i, k)]);
    let num = nalgebra::DMatrix::from_fn(N, N, |i, k| (v + u)[(i, k)]);
    let sol = den
        .lu()
        .solve(&num)
        .expect("Padé denominator is nonsingular for scaled norm <= theta13");
    let mut r = SMatrix::<C64, N, N>::from_fn(|i, k| sol[(i, k)]);
    for _ in 0..s {
        r = r * r;
    }
    r
}

/// Eigenvalues of a small complex matrix via the complex Schur form.
pub fn eigenvalues<const N: usize>(a: &SMatrix<C64, N, N>) -> Result<SVector<C64, N>> {
    let dynamic = nalgebra::DMatrix::from_fn(N, N, |r, k| a[(r, k)]);
    let schur = nalgebra::Schur::try_new(dynamic, 1e-15, 10_000)
        .ok_or_else(|| Error::InvalidParams("Schur decomposition did not converge".into()))?;
    let (_, t) = schur.unpack();
    Ok(SVector::from_fn(|i, _| t[(i, i)]))
}

/// Largest real part of the spectrum.
pub fn spectral_abscissa<const N: usize>(a: &SMatrix<C64, N, N>) -> Result<f64> {
    Ok(eigenvalues(a)?.iter().map(|l| l.re).fold(f64::NEG_INFINITY, f64::max))
}

/// Thin wrapper around a singular value decomposition `D = U Σ V†` with
/// singular values sorted in non-increasing order.
#[derive(Debug, Clone)]
pub struct Svd3 {
    pub u: CMat3,
    pub sigma: [f64; 3],
    /// V (not V†).
    pub v: CMat3,
}

/// One-sided Jacobi (Hestenes) SVD.
///
/// Column pairs of W = DV are rotated until mutually orthogonal; then
/// σₖ = ‖wₖ‖ and uₖ = wₖ/σₖ. Small singular values keep high relative
/// accuracy and `UΣV† = D` holds to rounding. Columns of U with σₖ = 0 are
/// completed to an orthonormal basis.
pub fn svd3(d: &CMat3) -> Result<Svd3> {
    const MAX_SWEEPS: usize = 60;
    let mut w = *d;
    let mut v = CMat3::identity();
    let mut converged = false;
    for _ in 0..MAX_SWEEPS {
        let mut rotated = false;
        for p in 0..2 {
            for q in (p + 1)..3 {
                let a = w.column(p).into_owned();
                let b = w.column(q).into_owned();
                let alpha = a.norm_squared();
                let beta = b.norm_squared();
                let gamma = a.dotc(&b);
                let g = gamma.norm();
                if g == 0.0 || g <= f64::EPSILON * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let phase = gamma.conj() / g;
                let zeta = (beta - alpha) / (2.0 * g);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let cs = 1.0 / (1.0 + t * t).sqrt();
                let sn = cs * t;
                let b = b * phase;
                w.set_column(p, &(a * re(cs) - b * re(sn)));
                w.set_column(q, &(a * re(sn) + b * re(cs)));
                let vp = v.column(p).into_owned();
                let vq = v.column(q).into_owned() * phase;
                v.set_column(p, &(vp * re(cs) - vq * re(sn)));
                v.set_column(q, &(vp * re(sn) + vq * re(cs)));
            }
        }
        if !rotated {
            converged = true;
            break;
        }
    }
    if !converged || w.iter().any(|z| !z.is_finite()) {
        return Err(Error::SvdFailed);
    }

    let sigma_raw: [f64; 3] = std::array::from_fn(|k| w.column(k).norm());
    let mut idx = [0usize, 1, 2];
    idx.sort_by(|&i, &j| sigma_raw[j].total_cmp(&sigma_raw[i]));
    let sigma = idx.map(|k| sigma_raw[k]);
    let v = CMat3::from_fn(|r, k| v[(r, idx[k])]);

    let mut u = CMat3::zeros();
    for k in 0..3 {
        if sigma[k] > 0.0 {
            u.set_column(k, &(w.column(idx[k]) / re(sigma[k])));
            continue;
        }
        let mut best = CVec3::zeros();
        for e in 0..3 {
            let mut cand = CVec3::zeros();
            cand[e] = re(1.0);
            for j in 0..k {
                let uj = u.column(j).into_owned();
                cand -= uj * uj.dotc(&cand);
            }
            if cand.norm() > best.norm() {
                best = cand;
            }
        }
        u.set_column(k, &(best / re(best.norm())));
    }
    Ok(Svd3 { u, sigma, v })
}

/// Kronecker product of two 2×2 matrices.
pub fn kron2(a: &CMat2, b: &CMat2) -> CMat4 {
    CMat4::from_fn(|r, col| a[(r / 2, col / 2)] * b[(r % 2, col % 2)])
}

/// Row-major plain-text dump: one matrix row per line, entries as `re,im`
/// pairs separated by single spaces.
pub fn dump_matrix<const R: usize, const C: usize>(name: &str, m: &SMatrix<C64, R, C>) -> String {
    let mut out = format!("# {name} {R}x{C}\n");
    for r in 0..R {
        let row: Vec<String> = (0..C)
            .map(|col| format!("{:.17e},{:.17e}", m[(r, col)].re, m[(r, col)].im))
            .collect();
        let _ = writeln!(out, "{}", row.join(" "));
    }
    out
}

/// Parses a dump written by [`dump_matrix`].
pub fn parse_matrix<const R: usize, const C: usize>(text: &str) -> Option<SMatrix<C64, R, C>> {
    let rows: Vec<&str> = text
        .lines()
        .filter(|l| !l.trim_start().starts_with('#') && !l.trim().is_empty())
        .collect();
    if rows.len() != R {
        return None;
    }
    let mut m = SMatrix::<C64, R, C>::zeros();
    for (r, line) in rows.iter().enumerate() {
        let entries: Vec<&str> = line.split_whitespace().collect();
        if entries.len() != C {
            return None;
        }
        for (col, e) in entries.iter().enumerate() {
            let (a, b) = e.split_once(',')?;
            m[(r, col)] = c(a.parse().ok()?, b.parse().ok()?);
        }
    }
    Some(m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn random_mat3(seed: &[f64]) -> CMat3 {
        CMat3::from_fn(|r, k| c(seed[2 * (3 * r + k)], seed[2 * (3 * r + k) + 1]))
    }

    #[test]
    fn expm_of_zero_and_diagonal() {
        assert_eq!(expm(&CMat3::zeros()), CMat3::identity());
        let d = CMat3::from_diagonal(&CVec3::new(c(-1.0, 2.0), c(0.5, 0.0), c(0.0, -3.0)));
        let e = expm(&d);
        for k in 0..3 {
            assert!((e[(k, k)] - d[(k, k)].exp()).norm() < 1e-14);
        }
    }

    #[test]
    fn expm_nilpotent_is_finite_series() {
        let mut n = CMat3::zeros();
        n[(0, 1)] = c(2.0, 1.0);
        n[(1, 2)] = c(-1.0, 0.5);
        let expected = CMat3::identity() + n + n * n * re(0.5);
        assert!(max_abs(&(expm(&n) - expected)) < 1e-14);
    }

    #[test]
    fn expm_rotation_generator() {
        // exp([[0, -t],[t, 0]]) = rotation by t
        let t = 7.3;
        let mut g = CMat2::zeros();
        g[(0, 1)] = re(-t);
        g[(1, 0)] = re(t);
        let r = expm(&g);
        assert!((r[(0, 0)] - re(t.cos())).norm() < 1e-13);
        assert!((r[(1, 0)] - re(t.sin())).norm() < 1e-13);
    }

    proptest! {
        #[test]
        fn expm_matches_nalgebra_reference(v in proptest::collection::vec(-3.0f64..3.0, 18)) {
            let a = random_mat3(&v);
            let ours = expm(&a);
            let theirs = a.exp();
            let scale = max_abs(&theirs).max(1.0);
            prop_assert!(max_abs(&(ours - theirs)) / scale < 1e-12);
        }

        #[test]
        fn expm_inverse_pair(v in proptest::collection::vec(-2.0f64..2.0, 18)) {
            let a = random_mat3(&v);
            let p = expm(&a) * expm(&(-a));
            prop_assert!(max_abs(&(p - CMat3::identity())) < 1e-10);
        }

        #[test]
        fn svd_reconstructs(v in proptest::collection::vec(-5.0f64..5.0, 18)) {
            let a = random_mat3(&v);
            let s = svd3(&a).unwrap();
            prop_assert!(s.sigma[0] >= s.sigma[1] && s.sigma[1] >= s.sigma[2] && s.sigma[2] >= 0.0);
            let sig = CMat3::from_diagonal(&CVec3::new(re(s.sigma[0]), re(s.sigma[1]), re(s.sigma[2])));
            let rec = s.u * sig * s.v.adjoint();
            prop_assert!(max_abs(&(rec - a)) < 1e-12);
            prop_assert!(max_abs(&(s.u.adjoint() * s.u - CMat3::identity())) < 1e-12);
            prop_assert!(max_abs(&(s.v.adjoint() * s.v - CMat3::identity())) < 1e-12);
        }
    }

    #[test]
    fn svd_of_rank_deficient_small_scale() {
        let x = CVec3::new(c(1e-3, 2e-4), re(-3e-5), c(0.0, 7e-4));
        let y = CVec3::new(re(2.0), c(0.5, -0.5), re(1e-3));
        let z = CVec3::new(c(0.0, 1e-5), re(4e-5), re(-2e-5));
        for d in [x * y.transpose(), x * y.transpose() + z * x.adjoint()] {
            let s = svd3(&d).unwrap();
            let sig = CMat3::from_diagonal(&CVec3::new(re(s.sigma[0]), re(s.sigma[1]), re(s.sigma[2])));
            assert!(max_abs(&(s.u * sig * s.v.adjoint() - d)) < 1e-16);
            assert!(max_abs(&(s.v.adjoint() * s.v - CMat3::identity())) < 1e-12);
            assert!(s.sigma[2] < 1e-12 * s.sigma[0]);
        }
    }

    #[test]
    fn eigenvalues_of_triangular() {
        let mut t = CMat3::zeros();
        t[(0, 0)] = c(-1.0, 2.0);
        t[(1, 1)] = c(-0.5, 0.0);
        t[(2, 2)] = c(-2.0, -1.0);
        t[(0, 2)] = c(3.0, 3.0);
        let mut ev: Vec<C64> = eigenvalues(&t).unwrap().iter().copied().collect();
        ev.sort_by(|a, b| a.re.total_cmp(&b.re));
        assert!((ev[0] - c(-2.0, -1.0)).norm() < 1e-12);
        assert!((ev[2] - c(-0.5, 0.0)).norm() < 1e-12);
        assert!((spectral_abscissa(&t).unwrap() + 0.5).abs() < 1e-12);
    }

    #[test]
    fn kron_matches_definition() {
        let a = CMat2::new(c(1.0, 0.0), c(2.0, 1.0), c(0.0, -1.0), c(3.0, 0.0));
        let b = CMat2::new(c(0.0, 1.0), c(1.0, 0.0), c(5.0, 0.0), c(-1.0, 0.0));
        let k = kron2(&a, &b);
        assert_eq!(k[(0, 3)], a[(0, 1)] * b[(0, 1)]);
        assert_eq!(k[(3, 2)], a[(1, 1)] * b[(1, 0)]);
        assert_eq!(k[(2, 1)], a[(1, 0)] * b[(0, 1)]);
    }

    #[test]
    fn dump_parse_roundtrip() {
        let m = CMat3::from_fn(|r, k| c(r as f64 * 0.1 - 1.0 / 3.0, k as f64 + 1e-17));
        let text = dump_matrix("m", &m);
        let back: CMat3 = parse_matrix(&text).unwrap();
        assert_eq!(back, m);
    }
}
