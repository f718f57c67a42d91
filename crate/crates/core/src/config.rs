//! Experiment configuration: TOML schema, defaults and validation.
//!
//! ```toml
//! seed = 7
//! methods = ["qrt", "grn", "sto"]
//! output_dir = "out"
//! eta_r = 1.0e-7            # optional, power-to-Rabi scale
//!
//! [system]
//! units = "physical"        # or "natural" (ħ = 1)
//! rabi_energy = 30.0
//! detuning_energy = 0.0
//! t1 = 400.0
//! t2 = 800.0
//!
//! [ensemble]                # every key optional
//! n_walkers = 4000
//! dt = 2.0
//! burn_in = 4000.0
//! tau_max = 6000.0
//! origins_per_walker = 1
//!
//! [spectrum]
//! omega_max = 80.0
//! omega_step = 0.25
//! fit = true
//!
//! [sweep]
//! axis = "detuning"         # none | detuning | rabi | power (watts)
//! start = -60.0
//! stop = 60.0
//! step = 5.0
//!
//! [fdtd]                    # every key optional
//! n_x = 64
//! dx = 1.0e-3
//! courant = 0.99
//! mu = 32.0
//! sigma = 3.0
//! omega_c = 200.0
//! probe = 56
//! assignment = "ordered"    # or "literal"
//! dump_fields = 0
//! ```

use std::fmt::Write as _;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::correlation::{Method, TauGrid};
use crate::error::{Error, Result};
use crate::fdtd::{FdtdConfig, SourceAssignment};
use crate::params::{calibrate_eta, power_to_rabi, SystemParams, Units};
use crate::sde::EnsembleConfig;
use crate::spectrum::symmetric_grid;

/// Most points a sweep may have.
pub const MAX_SWEEP_POINTS: usize = 100_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SweepAxis {
    None,
    Detuning,
    Rabi,
    /// Excitation power in watts, mapped through η_R.
    Power,
}

impl SweepAxis {
    pub fn as_str(self) -> &'static str {
        match self {
            SweepAxis::None => "none",
            SweepAxis::Detuning => "detuning",
            SweepAxis::Rabi => "rabi",
            SweepAxis::Power => "power",
        }
    }

    /// Column header of the swept value.
    pub fn column(self, units: Units) -> String {
        match (self, units) {
            (SweepAxis::Power, _) => "power_W".into(),
            (SweepAxis::None, _) => "point".into(),
            (axis, Units::Physical) => format!("{}_ueV", axis.as_str()),
            (axis, Units::Natural) => axis.as_str().into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepSpec {
    pub axis: SweepAxis,
    pub start: f64,
    pub stop: f64,
    pub step: f64,
}

impl SweepSpec {
    pub const NONE: SweepSpec = SweepSpec {
        axis: SweepAxis::None,
        start: 0.0,
        stop: 0.0,
        step: 1.0,
    };

    /// start, start + step, … up to stop (inclusive within rounding).
    pub fn values(&self) -> Vec<f64> {
        if self.axis == SweepAxis::None {
            return vec![0.0];
        }
        let n = ((self.stop - self.start) / self.step + 1e-9).floor() as usize + 1;
        (0..n).map(|k| self.start + k as f64 * self.step).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectrumSettings {
    pub omega_max: f64,
    pub omega_step: f64,
    pub fit: bool,
}

impl SpectrumSettings {
    pub fn default_for(units: Units) -> Self {
        match units {
            Units::Physical => SpectrumSettings {
                omega_max: 80.0,
                omega_step: 0.25,
                fit: true,
            },
            Units::Natural => SpectrumSettings {
                omega_max: 20.0,
                omega_step: 0.1,
                fit: true,
            },
        }
    }

    pub fn grid(&self) -> Result<Vec<f64>> {
        symmetric_grid(self.omega_max, self.omega_step)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FdtdSettings {
    pub grid: FdtdConfig,
    /// Realizations whose probe fields are written out.
    pub dump_fields: usize,
}

/// Fully resolved, validated experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub methods: Vec<Method>,
    pub output_dir: PathBuf,
    pub eta_r: f64,
    pub system: SystemParams,
    pub ensemble: EnsembleConfig,
    pub spectrum: SpectrumSettings,
    pub sweep: SweepSpec,
    pub fdtd: FdtdSettings,
}

/// Command-line values that take precedence over the file.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub output_dir: Option<PathBuf>,
    pub methods: Option<Vec<Method>>,
}

/// η_R placing 2.21 μW at ħΩ_R = 57.7 μeV.
pub fn default_eta_r() -> f64 {
    calibrate_eta(2.21e-6, 57.7).expect("positive calibration point")
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigFile {
    #[serde(skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    methods: Option<Vec<Method>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    output_dir: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    eta_r: Option<f64>,
    system: SystemSection,
    #[serde(default)]
    ensemble: EnsembleSection,
    #[serde(default)]
    spectrum: SpectrumSection,
    #[serde(default)]
    sweep: SweepSection,
    #[serde(default)]
    fdtd: FdtdSection,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SystemSection {
    #[serde(default)]
    units: Units,
    rabi_energy: f64,
    #[serde(default)]
    detuning_energy: f64,
    t1: f64,
    t2: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct EnsembleSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    n_walkers: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    dt: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    burn_in: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    tau_max: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    origins_per_walker: Option<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SpectrumSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    omega_max: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    omega_step: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    fit: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SweepSection {
    axis: SweepAxis,
    #[serde(default)]
    start: f64,
    #[serde(default)]
    stop: f64,
    #[serde(default = "one")]
    step: f64,
}

fn one() -> f64 {
    1.0
}

impl Default for SweepSection {
    fn default() -> Self {
        SweepSection {
            axis: SweepAxis::None,
            start: 0.0,
            stop: 0.0,
            step: 1.0,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct FdtdSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    n_x: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    dx: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    courant: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    mu: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    sigma: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    omega_c: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    probe: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    epsilon: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    assignment: Option<SourceAssignment>,
    #[serde(skip_serializing_if = "Option::is_none")]
    dump_fields: Option<usize>,
}

fn at(path: &str) -> impl Fn(Error) -> Error + '_ {
    move |e| match e {
        Error::Config { .. } | Error::CourantViolation { .. } => e,
        other => Error::config(path, other.to_string()),
    }
}

fn finite_positive(path: &str, v: f64) -> Result<f64> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(Error::config(path, format!("must be finite and > 0, got {v}")))
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str, overrides: &Overrides) -> Result<Self> {
        let file: ConfigFile = toml::from_str(text).map_err(|e| {
            let path = e
                .span()
                .map(|s| format!("byte {}", s.start))
                .unwrap_or_else(|| "<root>".into());
            Error::config(path, e.message().to_string())
        })?;
        Self::resolve(file, overrides)
    }

    pub fn load(path: &std::path::Path, overrides: &Overrides) -> Result<Self> {
        let text =
            std::fs::read_to_string(path).map_err(|e| Error::config(path.display().to_string(), e.to_string()))?;
        Self::from_toml(&text, overrides)
    }

    fn resolve(f: ConfigFile, o: &Overrides) -> Result<Self> {
        let seed = o
            .seed
            .or(f.seed)
            .ok_or_else(|| Error::config("seed", "required: set `seed` in the config or pass --seed"))?;

        let mut methods = o
            .methods
            .clone()
            .or(f.methods)
            .unwrap_or_else(|| vec![Method::Qrt, Method::Grn]);
        methods.sort();
        methods.dedup();
        if methods.is_empty() {
            return Err(Error::config("methods", "at least one of sto, qrt, grn is required"));
        }
        if methods.contains(&Method::Fdtd) {
            return Err(Error::config("methods", "fdtd is a subcommand, not a method"));
        }

        let s = &f.system;
        let system =
            SystemParams::with_units(s.rabi_energy, s.detuning_energy, s.t1, s.t2, s.units).map_err(at("system"))?;

        let eta_r = finite_positive("eta_r", f.eta_r.unwrap_or_else(default_eta_r))?;

        let base = EnsembleConfig::default_for(&system, 4000, seed);
        let e = &f.ensemble;
        let ensemble = EnsembleConfig {
            n_walkers: e.n_walkers.unwrap_or(base.n_walkers),
            dt: e.dt.unwrap_or(base.dt),
            burn_in: e.burn_in.unwrap_or(base.burn_in),
            tau_max: e.tau_max.unwrap_or(base.tau_max),
            seed,
            origins_per_walker: e.origins_per_walker.unwrap_or(base.origins_per_walker),
        };
        ensemble.validate(&system).map_err(at("ensemble"))?;
        TauGrid::covering(ensemble.dt, ensemble.tau_max).map_err(at("ensemble.tau_max"))?;

        let sd = SpectrumSettings::default_for(system.units);
        let spectrum = SpectrumSettings {
            omega_max: finite_positive("spectrum.omega_max", f.spectrum.omega_max.unwrap_or(sd.omega_max))?,
            omega_step: finite_positive("spectrum.omega_step", f.spectrum.omega_step.unwrap_or(sd.omega_step))?,
            fit: f.spectrum.fit.unwrap_or(sd.fit),
        };
        spectrum.grid().map_err(at("spectrum"))?;

        let w = &f.sweep;
        let sweep = if w.axis == SweepAxis::None {
            SweepSpec::NONE
        } else {
            for (k, v) in [("start", w.start), ("stop", w.stop)] {
                if !v.is_finite() {
                    return Err(Error::config(format!("sweep.{k}"), format!("must be finite, got {v}")));
                }
            }
            finite_positive("sweep.step", w.step)?;
            if w.stop < w.start {
                return Err(Error::config(
                    "sweep.stop",
                    format!("{} is below start {}", w.stop, w.start),
                ));
            }
            let spec = SweepSpec {
                axis: w.axis,
                start: w.start,
                stop: w.stop,
                step: w.step,
            };
            if (w.stop - w.start) / w.step >= MAX_SWEEP_POINTS as f64 {
                return Err(Error::config("sweep", format!("more than {MAX_SWEEP_POINTS} points")));
            }
            for v in spec.values() {
                point_params(&system, spec.axis, v, eta_r).map_err(at("sweep"))?;
            }
            spec
        };

        let d = FdtdConfig::for_params(&system);
        let g = &f.fdtd;
        let grid = FdtdConfig {
            n_x: g.n_x.unwrap_or(d.n_x),
            dx: g.dx.unwrap_or(d.dx),
            courant: g.courant.unwrap_or(d.courant),
            epsilon: g.epsilon.clone().unwrap_or_default(),
            mu: g.mu.unwrap_or(d.mu),
            sigma: g.sigma.unwrap_or(d.sigma),
            omega_c: g.omega_c.unwrap_or(d.omega_c),
            probe: g.probe.unwrap_or(d.probe),
            units: system.units,
            assignment: g.assignment.unwrap_or(d.assignment),
        };
        grid.validate().map_err(at("fdtd"))?;
        let fdtd = FdtdSettings {
            grid,
            dump_fields: g.dump_fields.unwrap_or(0),
        };

        Ok(ExperimentConfig {
            seed,
            methods,
            output_dir: o
                .output_dir
                .clone()
                .or(f.output_dir)
                .unwrap_or_else(|| PathBuf::from("out")),
            eta_r,
            system,
            ensemble,
            spectrum,
            sweep,
            fdtd,
        })
    }

    fn to_file(&self) -> ConfigFile {
        let s = &self.system;
        let e = &self.ensemble;
        let g = &self.fdtd.grid;
        ConfigFile {
            seed: Some(self.seed),
            methods: Some(self.methods.clone()),
            output_dir: Some(self.output_dir.clone()),
            eta_r: Some(self.eta_r),
            system: SystemSection {
                units: s.units,
                rabi_energy: s.rabi_energy,
                detuning_energy: s.detuning_energy,
                t1: s.t1,
                t2: s.t2,
            },
            ensemble: EnsembleSection {
                n_walkers: Some(e.n_walkers),
                dt: Some(e.dt),
                burn_in: Some(e.burn_in),
                tau_max: Some(e.tau_max),
                origins_per_walker: Some(e.origins_per_walker),
            },
            spectrum: SpectrumSection {
                omega_max: Some(self.spectrum.omega_max),
                omega_step: Some(self.spectrum.omega_step),
                fit: Some(self.spectrum.fit),
            },
            sweep: SweepSection {
                axis: self.sweep.axis,
                start: self.sweep.start,
                stop: self.sweep.stop,
                step: self.sweep.step,
            },
            fdtd: FdtdSection {
                n_x: Some(g.n_x),
                dx: Some(g.dx),
                courant: Some(g.courant),
                mu: Some(g.mu),
                sigma: Some(g.sigma),
                omega_c: Some(g.omega_c),
                probe: Some(g.probe),
                epsilon: (!g.epsilon.is_empty()).then(|| g.epsilon.clone()),
                assignment: Some(g.assignment),
                dump_fields: Some(self.fdtd.dump_fields),
            },
        }
    }

    /// Every key written out explicitly; parses back to an equal config.
    pub fn to_toml(&self) -> String {
        toml::to_string(&self.to_file()).expect("config serializes")
    }

    /// [`Self::to_toml`] without the output directory.
    pub fn canonical_toml(&self) -> String {
        let mut canon = self.to_file();
        canon.output_dir = None;
        toml::to_string(&canon).expect("config serializes")
    }

    /// SHA-256 of [`Self::canonical_toml`].
    pub fn content_hash(&self) -> String {
        hex(&Sha256::digest(self.canonical_toml().as_bytes()))
    }

    /// Parameters of every sweep point, in sweep order.
    pub fn points(&self) -> Result<Vec<(f64, SystemParams)>> {
        self.sweep
            .values()
            .into_iter()
            .map(|v| Ok((v, point_params(&self.system, self.sweep.axis, v, self.eta_r)?)))
            .collect()
    }

    /// The resolved parameters as an aligned `key = value` table.
    pub fn table(&self) -> String {
        let s = &self.system;
        let e = &self.ensemble;
        let g = &self.fdtd.grid;
        let methods: Vec<&str> = self.methods.iter().map(|m| m.as_str()).collect();
        let rows: Vec<(&str, String)> = vec![
            ("seed", self.seed.to_string()),
            ("methods", methods.join(",")),
            ("output_dir", self.output_dir.display().to_string()),
            ("units", format!("{:?}", s.units).to_lowercase()),
            ("rabi_energy", s.rabi_energy.to_string()),
            ("detuning_energy", s.detuning_energy.to_string()),
            ("t1", s.t1.to_string()),
            ("t2", s.t2.to_string()),
            ("eta_r", format!("{:e}", self.eta_r)),
            ("ensemble.n_walkers", e.n_walkers.to_string()),
            ("ensemble.dt", e.dt.to_string()),
            ("ensemble.burn_in", e.burn_in.to_string()),
            ("ensemble.tau_max", e.tau_max.to_string()),
            ("ensemble.origins_per_walker", e.origins_per_walker.to_string()),
            ("spectrum.omega_max", self.spectrum.omega_max.to_string()),
            ("spectrum.omega_step", self.spectrum.omega_step.to_string()),
            ("spectrum.fit", self.spectrum.fit.to_string()),
            ("sweep.axis", self.sweep.axis.as_str().into()),
            ("sweep.start", self.sweep.start.to_string()),
            ("sweep.stop", self.sweep.stop.to_string()),
            ("sweep.step", self.sweep.step.to_string()),
            ("sweep.points", self.sweep.values().len().to_string()),
            ("fdtd.n_x", g.n_x.to_string()),
            ("fdtd.dx", format!("{:e}", g.dx)),
            ("fdtd.courant", g.courant.to_string()),
            ("fdtd.mu", g.mu.to_string()),
            ("fdtd.sigma", g.sigma.to_string()),
            ("fdtd.omega_c", g.omega_c.to_string()),
            ("fdtd.probe", g.probe.to_string()),
            ("fdtd.assignment", format!("{:?}", g.assignment).to_lowercase()),
            (
                "fdtd.points_per_wavelength",
                format!("{:.2}", g.points_per_wavelength()),
            ),
        ];
        let width = rows.iter().map(|(k, _)| k.len()).max().unwrap_or(0);
        let mut out = String::new();
        for (k, v) in rows {
            let _ = writeln!(out, "{k:<width$} = {v}");
        }
        out
    }
}

fn point_params(system: &SystemParams, axis: SweepAxis, v: f64, eta_r: f64) -> Result<SystemParams> {
    let p = match axis {
        SweepAxis::None => *system,
        SweepAxis::Detuning => system.with_detuning(v),
        SweepAxis::Rabi => system.with_rabi(v),
        SweepAxis::Power => system.with_rabi(power_to_rabi(v, eta_r)?),
    };
    p.validate()?;
    Ok(p)
}

pub(crate) fn hex(bytes: &[u8]) -> String {
    bytes.iter().fold(String::with_capacity(2 * bytes.len()), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}
