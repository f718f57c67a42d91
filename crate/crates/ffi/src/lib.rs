//! C ABI over the stochbloch library.
//!
//! Every fallible function returns an [`SbStatus`]; on failure the message is
//! kept per thread and read back with [`sb_last_error_message`]. Handles are
//! opaque and must be released with their `_free` function. Panics never
//! cross the boundary: they surface as `SB_STATUS_PANIC`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;

use stochbloch::bloch::greens_correlation;
use stochbloch::config::{ExperimentConfig, Overrides};
use stochbloch::correlation::TauGrid;
use stochbloch::experiment::{run_task, Task};
use stochbloch::liouville::{build_liouvillian, qrt_correlation};
use stochbloch::params::{power_to_rabi, SystemParams, Units};
use stochbloch::sde::{run_ensemble, EnsembleConfig, SdeModel};
use stochbloch::spectrum::{incoherent_spectrum, stochastic_correlation};
use stochbloch::Error;

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SbStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Config = 3,
    Numerical = 4,
    Io = 5,
    Panic = 6,
}

/// Route used for the two-time correlation.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SbMethod {
    Sto = 0,
    Qrt = 1,
    Grn = 2,
}

/// Energy and time units of a model.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SbUnits {
    /// μeV and ps.
    Physical = 0,
    /// ħ = 1.
    Natural = 1,
}

/// Opaque steady-state model of one parameter set.
pub struct SbModel {
    inner: SdeModel,
}

/// Opaque parsed experiment configuration.
pub struct SbExperiment {
    config: ExperimentConfig,
}

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(msg: impl Into<String>) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg.into());
}

struct Failure(SbStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure(status_of(&e), e.to_string())
    }
}

fn status_of(e: &Error) -> SbStatus {
    match e {
        Error::Config { .. } => SbStatus::Config,
        Error::InvalidParams(_) | Error::NegativePower(_) | Error::CourantViolation { .. } => SbStatus::InvalidArgument,
        Error::Io(_) => SbStatus::Io,
        Error::SweepPoint { source, .. } => status_of(source),
        _ => SbStatus::Numerical,
    }
}

fn null(what: &str) -> Failure {
    Failure(SbStatus::NullPointer, format!("`{what}` is null"))
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> SbStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            SbStatus::Ok
        }
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_error(format!("panic: {msg}"));
            SbStatus::Panic
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure(SbStatus::InvalidArgument, format!("`{what}` is not UTF-8")))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn sb_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Copies the calling thread's last error message into `buf` (truncated,
/// always NUL-terminated when `len > 0`). Returns the untruncated length
/// including the terminator.
///
/// # Safety
/// `buf` must be null or valid for `len` bytes.
#[no_mangle]
pub unsafe extern "C" fn sb_last_error_message(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        let bytes = msg.as_bytes();
        if !buf.is_null() && len > 0 {
            let n = bytes.len().min(len - 1);
            std::ptr::copy_nonoverlapping(bytes.as_ptr(), buf.cast::<u8>(), n);
            *buf.add(n) = 0;
        }
        bytes.len() + 1
    })
}

/// Rabi energy ħΩ_R in μeV for an excitation power in watts.
///
/// # Safety
/// `out` must be valid for one write.
#[no_mangle]
pub unsafe extern "C" fn sb_power_to_rabi(power_w: f64, eta_r: f64, out: *mut f64) -> SbStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = power_to_rabi(power_w, eta_r)?;
        Ok(())
    })
}

/// Builds the steady state, drift and noise model of one parameter set.
///
/// # Safety
/// `out` must be valid for one write. On success `*out` owns a model that
/// must be released with [`sb_model_free`].
#[no_mangle]
pub unsafe extern "C" fn sb_model_new(
    rabi_energy: f64,
    detuning_energy: f64,
    t1: f64,
    t2: f64,
    units: SbUnits,
    out: *mut *mut SbModel,
) -> SbStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = std::ptr::null_mut();
        let units = match units {
            SbUnits::Physical => Units::Physical,
            SbUnits::Natural => Units::Natural,
        };
        let params = SystemParams::with_units(rabi_energy, detuning_energy, t1, t2, units)?;
        let inner = SdeModel::from_params(&params)?;
        *out = Box::into_raw(Box::new(SbModel { inner }));
        Ok(())
    })
}

/// Releases a model. Null is ignored.
///
/// # Safety
/// `model` must come from [`sb_model_new`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn sb_model_free(model: *mut SbModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Steady-state excited-state population ρ_ee.
///
/// # Safety
/// `model` must be a live handle and `out` valid for one write.
#[no_mangle]
pub unsafe extern "C" fn sb_model_excited_population(model: *const SbModel, out: *mut f64) -> SbStatus {
    guard(|| {
        let m = model.as_ref().ok_or_else(|| null("model"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        *out = m.inner.steady.excited_population();
        Ok(())
    })
}

/// Fixed point of the Bloch drift as interleaved (re, im) pairs for
/// ⟨σ₊⟩, ⟨σ₋⟩, ⟨σ_z⟩.
///
/// # Safety
/// `model` must be a live handle and `out` valid for 6 writes.
#[no_mangle]
pub unsafe extern "C" fn sb_model_fixed_point(model: *const SbModel, out: *mut f64) -> SbStatus {
    guard(|| {
        let m = model.as_ref().ok_or_else(|| null("model"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        let u = m.inner.drift.fixed_point();
        let out = std::slice::from_raw_parts_mut(out, 6);
        for k in 0..3 {
            out[2 * k] = u[k].re;
            out[2 * k + 1] = u[k].im;
        }
        Ok(())
    })
}

/// Residual of the noise factorization, max |B₁B₂ᵀ − D|.
///
/// # Safety
/// `model` must be a live handle and `out` valid for one write.
#[no_mangle]
pub unsafe extern "C" fn sb_model_factorization_residual(model: *const SbModel, out: *mut f64) -> SbStatus {
    guard(|| {
        let m = model.as_ref().ok_or_else(|| null("model"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        *out = m.inner.noise.factorization_residual();
        Ok(())
    })
}

/// Incoherent spectrum S(ω) on the `n` energies in `omega`, written to `out`.
/// `n_walkers` and `seed` are used by `SB_METHOD_STO` only.
///
/// # Safety
/// `model` must be a live handle; `omega` and `out` must be valid for `n`
/// elements.
#[no_mangle]
pub unsafe extern "C" fn sb_model_spectrum(
    model: *const SbModel,
    method: SbMethod,
    n_walkers: usize,
    seed: u64,
    omega: *const f64,
    n: usize,
    out: *mut f64,
) -> SbStatus {
    guard(|| {
        let m = model.as_ref().ok_or_else(|| null("model"))?;
        if omega.is_null() {
            return Err(null("omega"));
        }
        if out.is_null() {
            return Err(null("out"));
        }
        let omega = std::slice::from_raw_parts(omega, n);
        let params = m.inner.params;
        let corr = match method {
            SbMethod::Sto => {
                let cfg = EnsembleConfig::default_for(&params, n_walkers, seed);
                stochastic_correlation(&run_ensemble(&m.inner, &cfg)?)?
            }
            SbMethod::Qrt => {
                let l = build_liouvillian(&params);
                qrt_correlation(&l, &m.inner.steady, &TauGrid::default_for(params.t1))?
            }
            SbMethod::Grn => greens_correlation(&m.inner.drift, &m.inner.cumulant, &TauGrid::default_for(params.t1)),
        };
        let s = incoherent_spectrum(&corr, omega, params.units)?;
        std::slice::from_raw_parts_mut(out, n).copy_from_slice(&s.s_inc);
        Ok(())
    })
}

/// Parses a TOML experiment. `seed` overrides the file when `has_seed` is
/// non-zero.
///
/// # Safety
/// `toml` must be a NUL-terminated string and `out` valid for one write. On
/// success `*out` must be released with [`sb_experiment_free`].
#[no_mangle]
pub unsafe extern "C" fn sb_experiment_from_toml(
    toml: *const c_char,
    has_seed: i32,
    seed: u64,
    out: *mut *mut SbExperiment,
) -> SbStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = std::ptr::null_mut();
        let text = str_arg(toml, "toml")?;
        let overrides = Overrides {
            seed: (has_seed != 0).then_some(seed),
            ..Overrides::default()
        };
        let config = ExperimentConfig::from_toml(text, &overrides)?;
        *out = Box::into_raw(Box::new(SbExperiment { config }));
        Ok(())
    })
}

/// Releases an experiment. Null is ignored.
///
/// # Safety
/// `exp` must come from [`sb_experiment_from_toml`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn sb_experiment_free(exp: *mut SbExperiment) {
    if !exp.is_null() {
        drop(Box::from_raw(exp));
    }
}

/// Runs `task` (`steady`, `correlate`, `spectrum`, `sweep` or `fdtd`) on
/// `workers` threads and writes its outputs and manifest into `out_dir`, or
/// into the configured directory when `out_dir` is null.
///
/// # Safety
/// `exp` must be a live handle; `task` and `out_dir` (if non-null) must be
/// NUL-terminated strings.
#[no_mangle]
pub unsafe extern "C" fn sb_experiment_run(
    exp: *const SbExperiment,
    task: *const c_char,
    workers: usize,
    out_dir: *const c_char,
) -> SbStatus {
    guard(|| {
        let exp = exp.as_ref().ok_or_else(|| null("exp"))?;
        let task: Task = str_arg(task, "task")?.parse()?;
        let mut cfg = exp.config.clone();
        if !out_dir.is_null() {
            cfg.output_dir = PathBuf::from(str_arg(out_dir, "out_dir")?);
        }
        let output = run_task(&cfg, task, workers.max(1), None)?;
        output.files.write(&cfg.output_dir, task.as_str(), &cfg)?;
        Ok(())
    })
}
