//! Runs configured experiments and writes their outputs.
//!
//! Every run writes plain CSV tables with commented headers plus a
//! `manifest.json` listing each file with its SHA-256. Nothing in the outputs
//! depends on wall-clock time or on the number of worker threads.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::mpsc::Sender;

use rayon::prelude::*;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::bloch::{drift_matrix, greens_correlation};
use crate::config::{hex, ExperimentConfig, SweepAxis};
use crate::correlation::{CorrelationSeries, Method, Spin};
use crate::error::{Error, Result};
use crate::fdtd::{fdtd_spectrum, run_fdtd_ensemble, run_realization, FdtdEnsemble};
use crate::fit::{fit_triplet, FitHint, TripletFit};
use crate::liouville::{build_liouvillian, qrt_correlation, second_order_cumulant, steady_state};
use crate::params::SystemParams;
use crate::sde::{run_ensemble, walker_trajectory, SdeModel};
use crate::spectrum::{coherent_weight, incoherent_spectrum, stochastic_correlation, Spectrum};

/// One correlation estimate with its equal-time weights.
#[derive(Debug, Clone)]
pub struct MethodOutput {
    pub correlation: CorrelationSeries,
    /// π·Re mean(s₊s₋) at equal times.
    pub coherent_weight: f64,
    /// π·|⟨σ₋⟩|² from the mean Bloch vector.
    pub mean_field_weight: f64,
}

/// C₊₋ and friends for one parameter set by one route.
pub fn correlate(params: &SystemParams, cfg: &ExperimentConfig, method: Method) -> Result<MethodOutput> {
    let grid = cfg.ensemble.tau_grid()?;
    match method {
        Method::Qrt | Method::Grn => {
            let l = build_liouvillian(params);
            let ss = steady_state(&l)?;
            let m = second_order_cumulant(&ss);
            let correlation = if method == Method::Qrt {
                qrt_correlation(&l, &ss, &grid)?
            } else {
                greens_correlation(&drift_matrix(&l)?, &m, &grid)
            };
            let mean_field = ss.mean(Spin::Plus) * ss.mean(Spin::Minus);
            Ok(MethodOutput {
                correlation,
                coherent_weight: PI * (mean_field + m.get(Spin::Plus, Spin::Minus)).re,
                mean_field_weight: PI * mean_field.re,
            })
        }
        Method::Sto => {
            let model = SdeModel::from_params(params)?;
            let acc = run_ensemble(&model, &cfg.ensemble)?;
            let (m1, m2) = acc.origin_means();
            Ok(MethodOutput {
                correlation: stochastic_correlation(&acc)?,
                coherent_weight: coherent_weight(&acc),
                mean_field_weight: PI * (m1[Spin::Plus.index()] * m2[Spin::Minus.index()]).re,
            })
        }
        Method::Fdtd => Err(Error::config("methods", "fdtd is a subcommand, not a method")),
    }
}

/// Results of one sweep point.
#[derive(Debug, Clone)]
pub struct PointResult {
    pub index: usize,
    pub value: f64,
    pub params: SystemParams,
    /// In the order of the configured methods.
    pub spectra: Vec<Spectrum>,
    /// Per spectrum when fitting is enabled; failures are kept as messages.
    pub fits: Vec<std::result::Result<TripletFit, String>>,
}

#[derive(Debug, Clone)]
pub struct SweepResult {
    pub axis: SweepAxis,
    pub omega: Vec<f64>,
    pub points: Vec<PointResult>,
}

pub fn run_point(cfg: &ExperimentConfig, index: usize, value: f64, params: &SystemParams) -> Result<PointResult> {
    let omega = cfg.spectrum.grid()?;
    let mut spectra = Vec::with_capacity(cfg.methods.len());
    let mut fits = Vec::new();
    for &m in &cfg.methods {
        let out = correlate(params, cfg, m)?;
        let mut s = incoherent_spectrum(&out.correlation, &omega, params.units)?;
        s.coherent_weight = Some(out.coherent_weight);
        s.mean_field_weight = Some(out.mean_field_weight);
        if cfg.spectrum.fit {
            fits.push(fit_triplet(&s, &FitHint::from_params(params)).map_err(|e| e.to_string()));
        }
        spectra.push(s);
    }
    Ok(PointResult {
        index,
        value,
        params: *params,
        spectra,
        fits,
    })
}

/// Sent once per finished sweep point.
#[derive(Debug, Clone, PartialEq)]
pub struct Progress {
    pub index: usize,
    pub total: usize,
    pub value: f64,
    pub ok: bool,
}

/// Evaluates every sweep point on a pool of `workers` threads. Points and
/// their ensembles share the pool; results come back in sweep order.
pub fn run_sweep(cfg: &ExperimentConfig, workers: usize, progress: Option<Sender<Progress>>) -> Result<SweepResult> {
    let points = cfg.points()?;
    let total = points.len();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::InvalidParams(format!("worker pool: {e}")))?;
    let results: Vec<Result<PointResult>> = pool.install(|| {
        points
            .par_iter()
            .enumerate()
            .map_with(progress, |tx, (i, (v, p))| {
                let r = run_point(cfg, i, *v, p).map_err(|e| Error::SweepPoint {
                    index: i,
                    axis: cfg.sweep.axis.as_str().into(),
                    value: *v,
                    source: Box::new(e),
                });
                if let Some(tx) = tx {
                    let _ = tx.send(Progress {
                        index: i,
                        total,
                        value: *v,
                        ok: r.is_ok(),
                    });
                }
                r
            })
            .collect()
    });
    Ok(SweepResult {
        axis: cfg.sweep.axis,
        omega: cfg.spectrum.grid()?,
        points: results.into_iter().collect::<Result<_>>()?,
    })
}

/// Collects named output tables and writes them with a manifest.
#[derive(Debug, Default)]
pub struct OutputSet {
    files: BTreeMap<String, String>,
}

#[derive(Debug, Serialize)]
struct ManifestEntry<'a> {
    path: &'a str,
    bytes: usize,
    sha256: String,
}

#[derive(Debug, Serialize)]
struct Manifest<'a> {
    tool: &'static str,
    version: &'static str,
    command: &'a str,
    seed: u64,
    config_sha256: String,
    files: Vec<ManifestEntry<'a>>,
}

impl OutputSet {
    pub fn add(&mut self, name: impl Into<String>, contents: String) {
        self.files.insert(name.into(), contents);
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.files.keys().map(String::as_str)
    }

    pub fn get(&self, name: &str) -> Option<&str> {
        self.files.get(name).map(String::as_str)
    }

    /// Writes every file plus `config.toml` and `manifest.json` into `dir`.
    pub fn write(mut self, dir: &Path, command: &str, cfg: &ExperimentConfig) -> Result<Vec<PathBuf>> {
        std::fs::create_dir_all(dir)?;
        self.add("config.toml", cfg.canonical_toml());
        let manifest = Manifest {
            tool: env!("CARGO_PKG_NAME"),
            version: env!("CARGO_PKG_VERSION"),
            command,
            seed: cfg.seed,
            config_sha256: cfg.content_hash(),
            files: self
                .files
                .iter()
                .map(|(k, v)| ManifestEntry {
                    path: k,
                    bytes: v.len(),
                    sha256: hex(&Sha256::digest(v.as_bytes())),
                })
                .collect(),
        };
        let mut json = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
        json.push('\n');
        let mut written = Vec::new();
        for (name, contents) in self
            .files
            .iter()
            .chain(std::iter::once((&"manifest.json".to_string(), &json)))
        {
            let path = dir.join(name);
            std::fs::write(&path, contents)?;
            written.push(path);
        }
        Ok(written)
    }
}

fn fit_columns() -> &'static str {
    "status,red_center,red_half_width,red_area,central_center,central_half_width,central_area,blue_center,blue_half_width,blue_area,residual"
}

fn fit_row(fit: &std::result::Result<TripletFit, String>) -> String {
    match fit {
        Ok(f) => {
            let mut s = "ok".to_string();
            for p in &f.peaks {
                let _ = write!(s, ",{:.9e},{:.9e},{:.9e}", p.center, p.half_width, p.area);
            }
            let _ = write!(s, ",{:.6e}", f.residual);
            s
        }
        Err(e) => format!("\"failed: {}\"{}", e.replace('"', "'"), ",".repeat(10)),
    }
}

/// Spectra, maps, fits and weights of a sweep as named tables.
pub fn sweep_outputs(result: &SweepResult, cfg: &ExperimentConfig) -> OutputSet {
    let mut out = OutputSet::default();
    let units = cfg.system.units;
    let axis_col = result.axis.column(units);
    let omega_col = result
        .points
        .first()
        .and_then(|p| p.spectra.first())
        .map(|s| s.axis_label())
        .unwrap_or("omega");

    if result.axis == SweepAxis::None {
        if let Some(p) = result.points.first() {
            for s in &p.spectra {
                out.add(format!("spectrum_{}.csv", s.method.as_str()), s.to_table());
            }
            let mut t = omega_col.to_string();
            for s in &p.spectra {
                let _ = write!(t, ",S_{}", s.method.as_str());
            }
            t.push('\n');
            for (k, e) in result.omega.iter().enumerate() {
                let _ = write!(t, "{e:.6}");
                for s in &p.spectra {
                    let _ = write!(t, ",{:.12e}", s.s_inc[k]);
                }
                t.push('\n');
            }
            out.add("spectrum.csv", t);
        }
    } else {
        for (mi, m) in cfg.methods.iter().enumerate() {
            let mut t = format!(
                "# method = {}\n# axis = {}\n{axis_col},{omega_col},S_inc\n",
                m.as_str(),
                result.axis.as_str()
            );
            for p in &result.points {
                for (e, v) in result.omega.iter().zip(&p.spectra[mi].s_inc) {
                    let _ = writeln!(t, "{:.9e},{e:.6},{v:.12e}", p.value);
                }
            }
            out.add(format!("map_{}.csv", m.as_str()), t);
        }
    }

    let mut weights = format!(
        "{axis_col},rabi_energy,detuning_energy,method,coherent_weight,mean_field_weight,integrated_incoherent\n"
    );
    for p in &result.points {
        for s in &p.spectra {
            let _ = writeln!(
                weights,
                "{:.9e},{:.9e},{:.9e},{},{:.12e},{:.12e},{:.12e}",
                p.value,
                p.params.rabi_energy,
                p.params.detuning_energy,
                s.method.as_str(),
                s.coherent_weight.unwrap_or(f64::NAN),
                s.mean_field_weight.unwrap_or(f64::NAN),
                s.integrated_power()
            );
        }
    }
    out.add("weights.csv", weights);

    if cfg.spectrum.fit {
        let mut t = format!("{axis_col},method,{}\n", fit_columns());
        for p in &result.points {
            for (s, f) in p.spectra.iter().zip(&p.fits) {
                let _ = writeln!(t, "{:.9e},{},{}", p.value, s.method.as_str(), fit_row(f));
            }
        }
        out.add("fits.csv", t);
    }
    out
}

/// `steady`: steady state, cumulants, drift and noise factors as text.
pub fn steady_report(params: &SystemParams) -> Result<String> {
    use crate::linalg::dump_matrix;
    let model = SdeModel::from_params(params)?;
    let l = build_liouvillian(params);
    let a = model.drift.a;
    let m = model.cumulant.0;
    let lyap = crate::linalg::norm_inf(&(a * m + m * a.transpose() + model.noise.d));
    let mut s = crate::liouville::dump(&l);
    s.push_str(&dump_matrix("rho", &model.steady.density_matrix()));
    let means = crate::linalg::CVec3::new(model.steady.means[0], model.steady.means[1], model.steady.means[2]);
    s.push_str(&dump_matrix("means", &means));
    s.push_str(&dump_matrix("cumulant", &m));
    s.push_str(&model.drift.dump());
    s.push_str(&dump_matrix("fixed_point", &model.drift.fixed_point()));
    s.push_str(&dump_matrix("noise_d", &model.noise.d));
    s.push_str(&dump_matrix("b1", &model.noise.b1));
    s.push_str(&dump_matrix("b2", &model.noise.b2));
    let _ = writeln!(
        s,
        "# singular_values = {:.12e},{:.12e},{:.12e}",
        model.noise.sigma[0], model.noise.sigma[1], model.noise.sigma[2]
    );
    let _ = writeln!(s, "# lyapunov_residual = {lyap:.3e}");
    let _ = writeln!(
        s,
        "# factorization_residual = {:.3e}",
        model.noise.factorization_residual()
    );
    let _ = writeln!(s, "# excited_population = {:.12e}", model.steady.excited_population());
    Ok(s)
}

/// Field and at-atom spectra of an FDTD ensemble.
#[derive(Debug, Clone)]
pub struct FdtdOutcome {
    pub ensemble: FdtdEnsemble,
    pub field: Spectrum,
    pub at_atom: Spectrum,
}

pub fn run_fdtd(cfg: &ExperimentConfig, workers: usize) -> Result<FdtdOutcome> {
    let model = SdeModel::from_params(&cfg.system)?;
    let grid = cfg.fdtd.grid.clone().commensurate_with(cfg.ensemble.dt);
    let omega = cfg.spectrum.grid()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::InvalidParams(format!("worker pool: {e}")))?;
    let ensemble = pool.install(|| run_fdtd_ensemble(&model, &grid, &cfg.ensemble))?;
    let field = fdtd_spectrum(&ensemble.field, &omega, cfg.system.units)?;
    let at_atom = incoherent_spectrum(&stochastic_correlation(&ensemble.at_atom)?, &omega, cfg.system.units)?;
    Ok(FdtdOutcome {
        ensemble,
        field,
        at_atom,
    })
}

pub fn fdtd_outputs(outcome: &FdtdOutcome, cfg: &ExperimentConfig) -> Result<OutputSet> {
    let mut out = OutputSet::default();
    out.add("spectrum_fdtd.csv", outcome.field.to_table());
    out.add("spectrum_atom.csv", outcome.at_atom.to_table());
    let (f, a) = (outcome.field.max_normalized(), outcome.at_atom.max_normalized());
    let mut t = format!("# normalization = max\n{},S_fdtd,S_atom\n", f.axis_label());
    for k in 0..f.omega.len() {
        let _ = writeln!(t, "{:.6},{:.12e},{:.12e}", f.omega[k], f.s_inc[k], a.s_inc[k]);
    }
    out.add("spectrum.csv", t);

    if cfg.fdtd.dump_fields > 0 {
        let model = SdeModel::from_params(&cfg.system)?;
        let grid = &outcome.ensemble.config;
        let warmup = (grid.warmup_time(cfg.system.t1) / cfg.ensemble.dt).ceil() as usize;
        let len = warmup + cfg.ensemble.tau_grid()?.len;
        let mut buf = Vec::new();
        for w in 0..cfg.fdtd.dump_fields.min(cfg.ensemble.n_walkers) as u64 {
            let traj = walker_trajectory(&model, &cfg.ensemble, w, len);
            run_realization(&traj, cfg.ensemble.dt, grid, warmup, w)?.write(&mut buf)?;
        }
        out.add("fields.csv", String::from_utf8(buf).expect("ascii table"));
    }
    Ok(out)
}

/// A runnable unit of work, one per output-producing subcommand.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Task {
    Steady,
    Correlate,
    Spectrum,
    Sweep,
    Fdtd,
}

impl Task {
    pub fn as_str(self) -> &'static str {
        match self {
            Task::Steady => "steady",
            Task::Correlate => "correlate",
            Task::Spectrum => "spectrum",
            Task::Sweep => "sweep",
            Task::Fdtd => "fdtd",
        }
    }
}

impl std::str::FromStr for Task {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "steady" => Ok(Task::Steady),
            "correlate" => Ok(Task::Correlate),
            "spectrum" => Ok(Task::Spectrum),
            "sweep" => Ok(Task::Sweep),
            "fdtd" => Ok(Task::Fdtd),
            other => Err(Error::InvalidParams(format!("unknown task `{other}`"))),
        }
    }
}

/// Files to write plus a human-readable summary.
#[derive(Debug, Default)]
pub struct TaskOutput {
    pub files: OutputSet,
    pub summary: String,
}

/// Runs `task` on `workers` threads. `spectrum` ignores the sweep section.
pub fn run_task(
    cfg: &ExperimentConfig,
    task: Task,
    workers: usize,
    progress: Option<Sender<Progress>>,
) -> Result<TaskOutput> {
    let mut out = TaskOutput::default();
    match task {
        Task::Steady => {
            let report = steady_report(&cfg.system)?;
            out.summary = report.clone();
            out.files.add("steady.txt", report);
        }
        Task::Correlate => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(workers.max(1))
                .build()
                .map_err(|e| Error::InvalidParams(format!("worker pool: {e}")))?;
            for &m in &cfg.methods {
                let r = pool.install(|| correlate(&cfg.system, cfg, m))?;
                let _ = writeln!(out.summary, "{}: coherent weight {:.6e}", m.as_str(), r.coherent_weight);
                out.files
                    .add(format!("correlation_{}.csv", m.as_str()), r.correlation.to_table());
            }
        }
        Task::Spectrum | Task::Sweep => {
            let mut cfg = cfg.clone();
            if task == Task::Spectrum {
                cfg.sweep = crate::config::SweepSpec::NONE;
            }
            let result = run_sweep(&cfg, workers, progress)?;
            for p in &result.points {
                for (s, f) in p.spectra.iter().zip(&p.fits) {
                    match f {
                        Ok(f) => {
                            let c: Vec<String> = f.peaks.iter().map(|l| format!("{:.3}", l.center)).collect();
                            let _ = writeln!(
                                out.summary,
                                "point {} {}: peaks at {}",
                                p.index,
                                s.method.as_str(),
                                c.join(", ")
                            );
                        }
                        Err(e) => {
                            let _ = writeln!(out.summary, "point {} {}: fit failed: {e}", p.index, s.method.as_str());
                        }
                    }
                }
            }
            out.files = sweep_outputs(&result, &cfg);
        }
        Task::Fdtd => {
            let outcome = run_fdtd(cfg, workers)?;
            let rms =
                crate::spectrum::rms_deviation(&outcome.field.max_normalized(), &outcome.at_atom.max_normalized());
            let _ = writeln!(out.summary, "normalized rms(field - at_atom) = {rms:.4e}");
            out.files = fdtd_outputs(&outcome, cfg)?;
        }
    }
    Ok(out)
}
