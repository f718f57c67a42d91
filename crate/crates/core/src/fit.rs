//! Three-Lorentzian least-squares fit of Mollow spectra.
//!
//! Each peak is `(a/π)·w / ((E − c)² + w²)` with centre `c`, half-width
//! `w = exp(ℓ)` and area `a = q²`, so widths stay positive and areas
//! non-negative without explicit bounds. The fit is damped Gauss-Newton
//! (Levenberg-Marquardt) with the analytic Jacobian.

use std::f64::consts::PI;

use nalgebra::{SMatrix, SVector};

use crate::error::{Error, Result};
use crate::params::SystemParams;
use crate::spectrum::Spectrum;

pub const MAX_ITERATIONS: usize = 500;
pub const STEP_TOLERANCE: f64 = 1e-10;

type Params = SVector<f64, 9>;
type Normal = SMatrix<f64, 9, 9>;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Lorentzian {
    pub center: f64,
    pub half_width: f64,
    pub area: f64,
}

impl Lorentzian {
    pub fn eval(&self, x: f64) -> f64 {
        let d = x - self.center;
        self.area / PI * self.half_width / (d * d + self.half_width * self.half_width)
    }
}

/// Red sideband, central line, blue sideband (ascending centre).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TripletFit {
    pub peaks: [Lorentzian; 3],
    /// RMS residual on the fitted grid.
    pub residual: f64,
    pub iterations: usize,
}

impl TripletFit {
    pub fn eval(&self, x: f64) -> f64 {
        self.peaks.iter().map(|p| p.eval(x)).sum()
    }

    pub fn total_area(&self) -> f64 {
        self.peaks.iter().map(|p| p.area).sum()
    }
}

/// Starting point of the fit, in the spectrum's energy units.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitHint {
    pub centers: [f64; 3],
    pub half_width: f64,
}

impl FitHint {
    /// Centres 0 and ±ħ√(Ω_R² + Δ²); width from the coherence decay rate.
    pub fn from_params(p: &SystemParams) -> Self {
        let g = p.generalized_rabi_energy();
        FitHint {
            centers: [-g, 0.0, g],
            half_width: p.hbar() * 0.5 * (p.gamma1() + p.gamma2()),
        }
    }
}

fn unpack(p: &Params) -> [Lorentzian; 3] {
    std::array::from_fn(|k| Lorentzian {
        center: p[3 * k],
        half_width: p[3 * k + 1].exp(),
        area: p[3 * k + 2] * p[3 * k + 2],
    })
}

fn residuals(p: &Params, x: &[f64], y: &[f64]) -> Vec<f64> {
    let peaks = unpack(p);
    x.iter()
        .zip(y)
        .map(|(&xi, &yi)| peaks.iter().map(|l| l.eval(xi)).sum::<f64>() - yi)
        .collect()
}

fn cost(r: &[f64]) -> f64 {
    r.iter().map(|v| v * v).sum()
}

/// JᵀJ and Jᵀr of the model at `p`.
fn normal_equations(p: &Params, x: &[f64], r: &[f64]) -> (Normal, Params) {
    let mut jtj = Normal::zeros();
    let mut jtr = Params::zeros();
    let mut row = Params::zeros();
    for (&xi, &ri) in x.iter().zip(r) {
        for k in 0..3 {
            let (c, w, q) = (p[3 * k], p[3 * k + 1].exp(), p[3 * k + 2]);
            let d = xi - c;
            let den = d * d + w * w;
            let a = q * q / PI;
            row[3 * k] = a * w * 2.0 * d / (den * den);
            row[3 * k + 1] = w * a * (d * d - w * w) / (den * den);
            row[3 * k + 2] = 2.0 * q / PI * w / den;
        }
        jtj += row * row.transpose();
        jtr += row * ri;
    }
    (jtj, jtr)
}

/// Fits three Lorentzians to `spec.s_inc` over `spec.omega`.
pub fn fit_triplet(spec: &Spectrum, hint: &FitHint) -> Result<TripletFit> {
    let x = &spec.omega;
    let scale = spec.s_inc.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if x.len() < 9 || !(scale > 0.0) {
        return Err(Error::InvalidParams(
            "fit needs at least 9 points and a non-zero spectrum".into(),
        ));
    }
    let y: Vec<f64> = spec.s_inc.iter().map(|v| v / scale).collect();
    let min_width = 0.5 * spec.step().abs().max(f64::MIN_POSITIVE);

    let mut p = Params::zeros();
    for k in 0..3 {
        let c = hint.centers[k];
        let w = hint.half_width.max(min_width);
        let nearest = x
            .iter()
            .enumerate()
            .min_by(|a, b| (a.1 - c).abs().total_cmp(&(b.1 - c).abs()))
            .map(|(i, _)| i)
            .unwrap_or(0);
        let area = (y[nearest].max(1e-3) * PI * w).max(1e-12);
        p[3 * k] = c;
        p[3 * k + 1] = w.ln();
        p[3 * k + 2] = area.sqrt();
    }

    let mut r = residuals(&p, x, &y);
    let mut current = cost(&r);
    let mut lambda = 1e-3;
    for iter in 1..=MAX_ITERATIONS {
        let (jtj, jtr) = normal_equations(&p, x, &r);
        let diag_floor = 1e-12 * jtj.diagonal().max().max(f64::MIN_POSITIVE);
        let mut accepted = false;
        while lambda < 1e20 {
            let mut damped = jtj;
            for k in 0..9 {
                damped[(k, k)] += lambda * (jtj[(k, k)] + diag_floor);
            }
            let Some(step) = damped.cholesky().map(|ch| ch.solve(&(-jtr))) else {
                lambda *= 10.0;
                continue;
            };
            let trial = p + step;
            let r_trial = residuals(&trial, x, &y);
            let c_trial = cost(&r_trial);
            if c_trial.is_finite() && c_trial <= current {
                let small = step.norm() <= STEP_TOLERANCE * (p.norm() + STEP_TOLERANCE);
                p = trial;
                r = r_trial;
                current = c_trial;
                lambda = (lambda / 3.0).max(1e-15);
                accepted = true;
                if small {
                    return Ok(finish(&p, current, x.len(), scale, iter));
                }
                break;
            }
            lambda *= 4.0;
        }
        if !accepted {
            // no descent direction left: stationary to working precision
            return Ok(finish(&p, current, x.len(), scale, iter));
        }
    }
    Err(Error::FitNotConverged {
        iterations: MAX_ITERATIONS,
        residual: scale * (current / x.len() as f64).sqrt(),
    })
}

fn finish(p: &Params, cost: f64, n: usize, scale: f64, iterations: usize) -> TripletFit {
    let mut peaks = unpack(p).map(|l| Lorentzian {
        area: l.area * scale,
        ..l
    });
    peaks.sort_by(|a, b| a.center.total_cmp(&b.center));
    TripletFit {
        peaks,
        residual: scale * (cost / n as f64).sqrt(),
        iterations,
    }
}
