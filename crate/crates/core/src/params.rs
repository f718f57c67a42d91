//! Physical inputs of the driven two-level system and their unit conventions.
//!
//! Energies are in μeV and times in ps. Angular frequencies are therefore in
//! rad/ps and obtained as `energy / HBAR`. A natural-unit system (`ħ = 1`,
//! frequencies given directly, times usually in units of `T₁`) is supported
//! through [`SystemParams::natural`].

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Reduced Planck constant in μeV·ps (CODATA 2018, exact from h and e).
pub const HBAR_UEV_PS: f64 = 658.211_956_950_906_6;

/// Reduced Planck constant in J·s.
pub const HBAR_SI: f64 = 1.054_571_817e-34;

/// One μeV in joules.
pub const MICRO_EV_IN_JOULE: f64 = 1.602_176_634e-25;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Units {
    /// μeV, ps, ħ = 658.21 μeV·ps.
    #[default]
    Physical,
    /// ħ = 1: energies equal angular frequencies.
    Natural,
}

impl Units {
    pub fn hbar(self) -> f64 {
        match self {
            Units::Physical => HBAR_UEV_PS,
            Units::Natural => 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SystemParams {
    /// ħΩ_R
    pub rabi_energy: f64,
    /// ħΔ with Δ = ω₀ − ω_L; any sign.
    pub detuning_energy: f64,
    /// Relaxation time T₁.
    pub t1: f64,
    /// Pure dephasing time T₂.
    pub t2: f64,
    #[serde(default)]
    pub units: Units,
}

impl SystemParams {
    pub fn new(rabi_energy: f64, detuning_energy: f64, t1: f64, t2: f64) -> Result<Self> {
        Self::with_units(rabi_energy, detuning_energy, t1, t2, Units::Physical)
    }

    /// Parameters with ħ = 1, e.g. the `T₁ = 1` time base used for the FDTD runs.
    pub fn natural(omega_r: f64, delta: f64, t1: f64, t2: f64) -> Result<Self> {
        Self::with_units(omega_r, delta, t1, t2, Units::Natural)
    }

    pub fn with_units(rabi_energy: f64, detuning_energy: f64, t1: f64, t2: f64, units: Units) -> Result<Self> {
        let p = SystemParams {
            rabi_energy,
            detuning_energy,
            t1,
            t2,
            units,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.t1 > 0.0) {
            return Err(Error::InvalidParams(format!("t1 must be > 0, got {}", self.t1)));
        }
        if !(self.t2 > 0.0) {
            return Err(Error::InvalidParams(format!("t2 must be > 0, got {}", self.t2)));
        }
        if !(self.rabi_energy >= 0.0) || !self.rabi_energy.is_finite() {
            return Err(Error::InvalidParams(format!(
                "rabi_energy must be finite and >= 0, got {}",
                self.rabi_energy
            )));
        }
        if !self.detuning_energy.is_finite() {
            return Err(Error::InvalidParams("detuning_energy must be finite".into()));
        }
        Ok(())
    }

    pub fn hbar(&self) -> f64 {
        self.units.hbar()
    }

    /// Γ₁ = 1/T₁
    pub fn gamma1(&self) -> f64 {
        1.0 / self.t1
    }

    /// Γ₂ = 2/T₂
    pub fn gamma2(&self) -> f64 {
        2.0 / self.t2
    }

    /// Ω_R in rad per time unit.
    pub fn omega_r(&self) -> f64 {
        self.rabi_energy / self.hbar()
    }

    /// Δ in rad per time unit.
    pub fn delta(&self) -> f64 {
        self.detuning_energy / self.hbar()
    }

    /// Generalized Rabi energy ħ√(Ω_R² + Δ²).
    pub fn generalized_rabi_energy(&self) -> f64 {
        self.rabi_energy.hypot(self.detuning_energy)
    }

    pub fn with_detuning(mut self, detuning_energy: f64) -> Self {
        self.detuning_energy = detuning_energy;
        self
    }

    pub fn with_rabi(mut self, rabi_energy: f64) -> Self {
        self.rabi_energy = rabi_energy;
        self
    }
}

/// Maps excitation power to Rabi energy via ħΩ_R = √(ħ η_R P_exc).
///
/// `p_exc` is in watts and `eta_r` is dimensionless (SI); the result is in μeV.
pub fn power_to_rabi(p_exc: f64, eta_r: f64) -> Result<f64> {
    if p_exc < 0.0 || p_exc.is_nan() {
        return Err(Error::NegativePower(p_exc));
    }
    if !(eta_r > 0.0) {
        return Err(Error::InvalidParams(format!("eta_r must be > 0, got {eta_r}")));
    }
    Ok((HBAR_SI * eta_r * p_exc).sqrt() / MICRO_EV_IN_JOULE)
}

/// Inverse of [`power_to_rabi`]: the η_R that maps `p_exc` (W) onto `rabi_energy` (μeV).
pub fn calibrate_eta(p_exc: f64, rabi_energy: f64) -> Result<f64> {
    if !(p_exc > 0.0) {
        return Err(Error::NegativePower(p_exc));
    }
    let e = rabi_energy * MICRO_EV_IN_JOULE;
    Ok(e * e / (HBAR_SI * p_exc))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn derived_rates_are_exact() {
        let p = SystemParams::new(30.0, 0.0, 400.0, 800.0).unwrap();
        assert_eq!(p.gamma1() * p.t1, 1.0);
        assert_eq!(p.gamma2() * p.t2, 2.0);
        assert!((p.omega_r() - 30.0 / HBAR_UEV_PS).abs() < 1e-15);
    }

    #[test]
    fn rejects_bad_lifetimes() {
        assert!(SystemParams::new(1.0, 0.0, 0.0, 1.0).is_err());
        assert!(SystemParams::new(1.0, 0.0, 1.0, -1.0).is_err());
        assert!(SystemParams::new(-1.0, 0.0, 1.0, 1.0).is_err());
        assert!(SystemParams::new(1.0, f64::NAN, 1.0, 1.0).is_err());
        // negative detuning is fine
        assert!(SystemParams::new(1.0, -5.0, 1.0, 1.0).is_ok());
    }

    #[test]
    fn power_mapping() {
        assert_eq!(power_to_rabi(0.0, 1e-7).unwrap(), 0.0);
        let a = power_to_rabi(1e-7, 3e-7).unwrap();
        let b = power_to_rabi(4e-7, 3e-7).unwrap();
        assert!((b / a - 2.0).abs() < 1e-12);
        assert!(matches!(power_to_rabi(-1.0, 1.0), Err(Error::NegativePower(_))));
    }

    #[test]
    fn power_calibration_to_sweep_endpoint() {
        // 2.21 μW top of the power sweep pinned to 57.7 μeV
        let eta = calibrate_eta(2.21e-6, 57.7).unwrap();
        assert!((power_to_rabi(2.21e-6, eta).unwrap() - 57.7).abs() < 1e-9);
        // the 6.4 μeV end of the simulated range then sits at ~27 nW
        let p_low = 2.21e-6 * (6.4f64 / 57.7).powi(2);
        assert!((power_to_rabi(p_low, eta).unwrap() - 6.4).abs() < 1e-9);
        assert!((p_low - 27.19e-9).abs() < 0.05e-9);
    }
}
