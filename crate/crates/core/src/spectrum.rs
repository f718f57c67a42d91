//! Stochastic correlation estimates and Mollow emission spectra.
//!
//! Spectra are evaluated in the rotating frame of the drive on an energy
//! axis `E = ħω`; the transform is the real part of the one-sided Fourier
//! integral of `C₊₋(τ)`, computed by trapezoidal quadrature on the lag grid.

use std::f64::consts::PI;
use std::fmt::Write as _;

use crate::correlation::{CorrelationSeries, Method, Spin, TauGrid};
use crate::error::{Error, Result};
use crate::linalg::{CMat3, C64};
use crate::params::Units;
use crate::sde::EnsembleAccumulator;

/// Fewer (walker × origin) samples than this give no usable estimate.
pub const MIN_SAMPLES: usize = 100;

/// Tail criterion: |C(τ_max)| must fall below this fraction of |C(0)|.
pub const TAIL_FRACTION: f64 = 1e-3;

/// C^sto(τ) = mean(s₁(τ)s₂(0)ᵀ) − mean(s₁(τ))·mean(s₂(0))ᵀ.
pub fn stochastic_correlation(acc: &EnsembleAccumulator) -> Result<CorrelationSeries> {
    if acc.samples < MIN_SAMPLES {
        return Err(Error::InsufficientSamples {
            got: acc.samples,
            required: MIN_SAMPLES,
        });
    }
    let m2 = acc.mean_s2();
    let values = (0..acc.grid.len)
        .map(|lag| acc.mean_product(lag) - acc.mean_s1(lag) * m2.transpose())
        .collect();
    let stderr = (0..acc.grid.len).map(|lag| acc.product_stderr(lag)).collect();
    Ok(CorrelationSeries {
        grid: acc.grid,
        values,
        method: Method::Sto,
        stderr: Some(stderr),
    })
}

/// π·mean(s₁₊ s₂₋) at equal times, the δ(ω) weight of the coherent line.
pub fn coherent_weight(acc: &EnsembleAccumulator) -> f64 {
    PI * acc.equal_time_product(Spin::Plus, Spin::Minus).re
}

/// The two parts of [`coherent_weight`]: π·mean(s₁₊)·mean(s₂₋) and
/// π·C^sto₊₋(0). Their sum equals the weight up to rounding.
pub fn coherent_weight_parts(acc: &EnsembleAccumulator) -> (f64, f64) {
    let (m1, m2) = acc.origin_means();
    let mean_field = m1[Spin::Plus.index()] * m2[Spin::Minus.index()];
    let fluct = acc.equal_time_product(Spin::Plus, Spin::Minus) - mean_field;
    (PI * mean_field.re, PI * fluct.re)
}

/// Symmetric energy grid −max, …, 0, …, +max with the given spacing.
pub fn symmetric_grid(max: f64, step: f64) -> Result<Vec<f64>> {
    if !(step > 0.0) || !(max >= 0.0) || !max.is_finite() {
        return Err(Error::InvalidParams(format!("bad omega grid: max {max}, step {step}")));
    }
    let half = (max / step).round() as i64;
    Ok((-half..=half).map(|k| k as f64 * step).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Normalization {
    Raw,
    MaxNormalized,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    /// ħω relative to the drive.
    pub omega: Vec<f64>,
    pub s_inc: Vec<f64>,
    pub method: Method,
    pub units: Units,
    /// δ(ω) weight, never rasterized into `s_inc`.
    pub coherent_weight: Option<f64>,
    /// π|⟨σ₋⟩|², the mean-field part of the coherent line.
    pub mean_field_weight: Option<f64>,
    pub normalization: Normalization,
}

impl Spectrum {
    pub fn step(&self) -> f64 {
        if self.omega.len() < 2 {
            0.0
        } else {
            self.omega[1] - self.omega[0]
        }
    }

    pub fn max(&self) -> f64 {
        self.s_inc.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Scaled so that the largest incoherent value is 1.
    pub fn max_normalized(&self) -> Spectrum {
        let peak = self.max();
        let scale = if peak > 0.0 { 1.0 / peak } else { 1.0 };
        Spectrum {
            s_inc: self.s_inc.iter().map(|v| v * scale).collect(),
            normalization: Normalization::MaxNormalized,
            ..self.clone()
        }
    }

    /// Energies of strict local maxima above `rel_threshold`·max, ascending.
    pub fn peak_positions(&self, rel_threshold: f64) -> Vec<f64> {
        let floor = rel_threshold * self.max();
        let s = &self.s_inc;
        (1..s.len().saturating_sub(1))
            .filter(|&k| s[k] > s[k - 1] && s[k] >= s[k + 1] && s[k] > floor)
            .map(|k| self.omega[k])
            .collect()
    }

    /// ∫S dω / π by the trapezoid rule, with ω = E/ħ.
    pub fn integrated_power(&self) -> f64 {
        let h = self.step() / self.units.hbar();
        let n = self.s_inc.len();
        if n < 2 {
            return 0.0;
        }
        let inner: f64 = self.s_inc[1..n - 1].iter().sum();
        h * (inner + 0.5 * (self.s_inc[0] + self.s_inc[n - 1])) / PI
    }

    pub fn axis_label(&self) -> &'static str {
        match self.units {
            Units::Physical => "omega_ueV",
            Units::Natural => "omega",
        }
    }

    /// Two-column table with the coherent weights as commented header fields.
    pub fn to_table(&self) -> String {
        let mut out = format!("# method = {}\n", self.method.as_str());
        if let Some(w) = self.coherent_weight {
            let _ = writeln!(out, "# coherent_weight = {w:.12e}");
        }
        if let Some(w) = self.mean_field_weight {
            let _ = writeln!(out, "# mean_field_weight = {w:.12e}");
        }
        let _ = writeln!(out, "{},S_inc", self.axis_label());
        for (e, s) in self.omega.iter().zip(&self.s_inc) {
            let _ = writeln!(out, "{e:.6},{s:.12e}");
        }
        out
    }
}

/// RMS of the pointwise difference of two spectra on the same grid.
pub fn rms_deviation(a: &Spectrum, b: &Spectrum) -> f64 {
    assert_eq!(a.omega.len(), b.omega.len(), "spectra must share a grid");
    let sum: f64 = a.s_inc.iter().zip(&b.s_inc).map(|(x, y)| (x - y).powi(2)).sum();
    (sum / a.s_inc.len() as f64).sqrt()
}

/// Re ∫₀^{τ_max} e^{−iωτ} f(τ) dτ by the trapezoid rule for every ω in `omega`.
pub fn one_sided_transform(values: &[C64], dt: f64, omega: &[f64]) -> Vec<f64> {
    let n = values.len();
    omega
        .iter()
        .map(|&w| {
            if n < 2 {
                return 0.0;
            }
            let rot = C64::from_polar(1.0, -w * dt);
            let mut phase = C64::new(1.0, 0.0);
            let mut sum = values[0] * 0.5;
            for (k, v) in values.iter().enumerate().skip(1) {
                // re-anchor the phase every 256 steps
                phase = if k % 256 == 0 {
                    C64::from_polar(1.0, -w * dt * k as f64)
                } else {
                    phase * rot
                };
                let weight = if k == n - 1 { 0.5 } else { 1.0 };
                sum += v * phase * weight;
            }
            (sum * dt).re
        })
        .collect()
}

/// Fails with `TailNotDecayed` when |C(τ_max)| exceeds the tail criterion,
/// widened by five standard errors for Monte Carlo estimates.
pub fn check_tail(values: &[C64], stderr: Option<&[(f64, f64)]>) -> Result<()> {
    let (first, last) = match (values.first(), values.last()) {
        (Some(f), Some(l)) => (f.norm(), l.norm()),
        _ => return Ok(()),
    };
    let noise = stderr
        .and_then(|s| s.last())
        .map(|(r, i)| 5.0 * r.hypot(*i))
        .unwrap_or(0.0);
    if last > TAIL_FRACTION * first + noise {
        return Err(Error::TailNotDecayed {
            ratio: if first > 0.0 { last / first } else { f64::INFINITY },
        });
    }
    Ok(())
}

/// S_inc(ω) = Re ∫₀^∞ e^{−iωτ} C₊₋(τ) dτ on the energy grid `omega`.
pub fn incoherent_spectrum(corr: &CorrelationSeries, omega: &[f64], units: Units) -> Result<Spectrum> {
    let c = corr.component(Spin::Plus, Spin::Minus);
    let se = corr.component_stderr(Spin::Plus, Spin::Minus);
    check_tail(&c, se.as_deref())?;
    Ok(incoherent_spectrum_unchecked(corr, omega, units))
}

/// As [`incoherent_spectrum`] without the tail criterion.
pub fn incoherent_spectrum_unchecked(corr: &CorrelationSeries, omega: &[f64], units: Units) -> Spectrum {
    let c = corr.component(Spin::Plus, Spin::Minus);
    let hbar = units.hbar();
    let freqs: Vec<f64> = omega.iter().map(|e| e / hbar).collect();
    Spectrum {
        omega: omega.to_vec(),
        s_inc: one_sided_transform(&c, corr.grid.dt, &freqs),
        method: corr.method,
        units,
        coherent_weight: None,
        mean_field_weight: None,
        normalization: Normalization::Raw,
    }
}

/// Wraps a single scalar correlation as the (+,−) entry of a series.
pub fn scalar_series(
    grid: TauGrid,
    values: &[C64],
    method: Method,
    stderr: Option<&[(f64, f64)]>,
) -> CorrelationSeries {
    let (pm_i, pm_j) = (Spin::Plus.index(), Spin::Minus.index());
    let values = values
        .iter()
        .map(|v| {
            let mut m = CMat3::zeros();
            m[(pm_i, pm_j)] = *v;
            m
        })
        .collect();
    let stderr = stderr.map(|s| {
        s.iter()
            .map(|e| {
                let mut m = [[(0.0, 0.0); 3]; 3];
                m[pm_i][pm_j] = *e;
                m
            })
            .collect()
    });
    CorrelationSeries {
        grid,
        values,
        method,
        stderr,
    }
}
