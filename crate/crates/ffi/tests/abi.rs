use std::ffi::{c_char, CStr, CString};
use std::path::PathBuf;
use std::process::Command;

use stochbloch_ffi::*;

fn last_error() -> String {
    let mut buf = vec![0 as c_char; 1024];
    unsafe { sb_last_error_message(buf.as_mut_ptr(), buf.len()) };
    unsafe { CStr::from_ptr(buf.as_ptr()) }.to_string_lossy().into_owned()
}

fn model(rabi: f64, det: f64) -> *mut SbModel {
    let mut m = std::ptr::null_mut();
    let s = unsafe { sb_model_new(rabi, det, 400.0, 800.0, SbUnits::Physical, &mut m) };
    assert_eq!(s, SbStatus::Ok, "{}", last_error());
    m
}

#[test]
fn version_matches_crate() {
    let v = unsafe { CStr::from_ptr(sb_version()) }.to_str().unwrap();
    assert_eq!(v, env!("CARGO_PKG_VERSION"));
}

#[test]
fn null_pointers_are_rejected() {
    assert_eq!(
        unsafe { sb_power_to_rabi(1e-6, 1.0, std::ptr::null_mut()) },
        SbStatus::NullPointer
    );
    assert!(last_error().contains("out"));
    let mut x = 0.0;
    assert_eq!(
        unsafe { sb_model_excited_population(std::ptr::null(), &mut x) },
        SbStatus::NullPointer
    );
    assert_eq!(
        unsafe { sb_model_new(1.0, 0.0, 1.0, 1.0, SbUnits::Natural, std::ptr::null_mut()) },
        SbStatus::NullPointer
    );
    unsafe { sb_model_free(std::ptr::null_mut()) };
    unsafe { sb_experiment_free(std::ptr::null_mut()) };
}

#[test]
fn invalid_parameters_leave_handle_null() {
    let mut m = std::ptr::dangling_mut::<SbModel>();
    let s = unsafe { sb_model_new(10.0, 0.0, -1.0, 800.0, SbUnits::Physical, &mut m) };
    assert_eq!(s, SbStatus::InvalidArgument);
    assert!(m.is_null());
    assert!(last_error().contains("t1"));
    let mut r = 0.0;
    assert_eq!(
        unsafe { sb_power_to_rabi(-1.0, 1.0, &mut r) },
        SbStatus::InvalidArgument
    );
}

#[test]
fn model_queries() {
    let m = model(20.0, 0.0);
    let mut rho = 0.0;
    assert_eq!(unsafe { sb_model_excited_population(m, &mut rho) }, SbStatus::Ok);
    assert!(rho > 0.0 && rho < 0.5);
    let mut u = [0.0; 6];
    assert_eq!(unsafe { sb_model_fixed_point(m, u.as_mut_ptr()) }, SbStatus::Ok);
    assert!((u[0] - u[2]).abs() < 1e-12 && (u[1] + u[3]).abs() < 1e-12, "{u:?}");
    let mut res = 1.0;
    assert_eq!(unsafe { sb_model_factorization_residual(m, &mut res) }, SbStatus::Ok);
    assert!(res < 1e-10);
    unsafe { sb_model_free(m) };
}

#[test]
fn spectra_agree_between_routes() {
    let m = model(20.0, 0.0);
    let omega: Vec<f64> = (-160..=160).map(|k| k as f64 * 0.25).collect();
    let mut qrt = vec![0.0; omega.len()];
    let mut grn = vec![0.0; omega.len()];
    let run = |method, out: &mut [f64]| unsafe {
        sb_model_spectrum(m, method, 0, 0, omega.as_ptr(), omega.len(), out.as_mut_ptr())
    };
    assert_eq!(run(SbMethod::Qrt, &mut qrt), SbStatus::Ok, "{}", last_error());
    assert_eq!(run(SbMethod::Grn, &mut grn), SbStatus::Ok, "{}", last_error());
    let peak = qrt.iter().copied().fold(0.0, f64::max);
    assert!(peak > 0.0);
    for (a, b) in qrt.iter().zip(&grn) {
        assert!((a - b).abs() <= 1e-8 * peak);
    }
    let mut sto = vec![0.0; omega.len()];
    assert_eq!(run(SbMethod::Sto, &mut sto), SbStatus::InvalidArgument);
    unsafe { sb_model_free(m) };
}

#[test]
fn experiment_runs_and_writes_manifest() {
    let toml = CString::new(
        "[system]\nrabi_energy = 20.0\ndetuning_energy = 0.0\nt1 = 400.0\nt2 = 800.0\n\n[spectrum]\nfit = false\n",
    )
    .unwrap();
    let mut exp = std::ptr::null_mut();
    assert_eq!(
        unsafe { sb_experiment_from_toml(toml.as_ptr(), 0, 0, &mut exp) },
        SbStatus::Config
    );
    assert!(last_error().contains("seed"));
    assert_eq!(
        unsafe { sb_experiment_from_toml(toml.as_ptr(), 1, 7, &mut exp) },
        SbStatus::Ok,
        "{}",
        last_error()
    );

    let dir = tempfile::tempdir().unwrap();
    let out = CString::new(dir.path().to_str().unwrap()).unwrap();
    let bad = CString::new("nope").unwrap();
    assert_eq!(
        unsafe { sb_experiment_run(exp, bad.as_ptr(), 1, out.as_ptr()) },
        SbStatus::InvalidArgument
    );
    let task = CString::new("spectrum").unwrap();
    assert_eq!(
        unsafe { sb_experiment_run(exp, task.as_ptr(), 2, out.as_ptr()) },
        SbStatus::Ok,
        "{}",
        last_error()
    );
    assert!(dir.path().join("manifest.json").exists());
    assert!(dir.path().join("spectrum_qrt.csv").exists());
    unsafe { sb_experiment_free(exp) };
}

fn header() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("include/stochbloch.h")
}

#[test]
fn header_declares_every_export() {
    let h = std::fs::read_to_string(header()).unwrap();
    for name in [
        "sb_version",
        "sb_last_error_message",
        "sb_power_to_rabi",
        "sb_model_new",
        "sb_model_free",
        "sb_model_excited_population",
        "sb_model_fixed_point",
        "sb_model_factorization_residual",
        "sb_model_spectrum",
        "sb_experiment_from_toml",
        "sb_experiment_free",
        "sb_experiment_run",
        "typedef struct SbModel SbModel",
        "typedef struct SbExperiment SbExperiment",
        "SB_STATUS_OK = 0",
        "SB_STATUS_PANIC",
    ] {
        assert!(h.contains(name), "missing {name}");
    }
}

#[test]
fn c_program_links_against_static_library() {
    let Ok(cc) = which_cc() else {
        eprintln!("no C compiler found; skipping");
        return;
    };
    let exe = std::env::current_exe().unwrap();
    let profile_dir = exe.parent().and_then(|d| d.parent()).unwrap();
    let lib = profile_dir.join("libstochbloch_ffi.a");
    if !lib.exists() {
        eprintln!("{} not built; skipping", lib.display());
        return;
    }
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("smoke.c");
    std::fs::write(
        &src,
        r#"#include <stdio.h>
#include "stochbloch.h"
int main(void) {
    SbModel *m = NULL;
    if (sb_model_new(20.0, 0.0, 400.0, 800.0, SB_UNITS_PHYSICAL, &m) != SB_STATUS_OK) return 1;
    double rho = 0.0;
    if (sb_model_excited_population(m, &rho) != SB_STATUS_OK) return 2;
    sb_model_free(m);
    if (sb_model_new(1.0, 0.0, 0.0, 1.0, SB_UNITS_NATURAL, &m) != SB_STATUS_INVALID_ARGUMENT) return 3;
    char buf[256];
    sb_last_error_message(buf, sizeof buf);
    printf("%s %.6f %s\n", sb_version(), rho, buf);
    return 0;
}
"#,
    )
    .unwrap();
    let bin = dir.path().join("smoke");
    let status = Command::new(&cc)
        .arg(&src)
        .arg("-I")
        .arg(header().parent().unwrap())
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&bin)
        .status()
        .unwrap();
    assert!(status.success(), "C compile failed");
    let out = Command::new(&bin).output().unwrap();
    assert!(out.status.success(), "exit {:?}", out.status);
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(
        text.starts_with(env!("CARGO_PKG_VERSION")) && text.contains("t1"),
        "{text}"
    );
}

fn which_cc() -> Result<String, ()> {
    let cc = std::env::var("CC").unwrap_or_else(|_| "cc".into());
    Command::new(&cc).arg("--version").output().map(|_| cc).map_err(|_| ())
}
