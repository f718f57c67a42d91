use std::path::Path;
use std::process::{Command, Output};

const BASE: &str = "seed = 3\n\
[system]\nrabi_energy = 30.0\ndetuning_energy = 0.0\nt1 = 400.0\nt2 = 800.0\n\
[spectrum]\nomega_max = 60.0\nomega_step = 0.5\n";

fn run(args: &[&str], config: &Path, out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_stochbloch"))
        .args(args)
        .arg("--config")
        .arg(config)
        .arg("--out")
        .arg(out)
        .env_remove("STOCHBLOCH_WORKERS")
        .output()
        .unwrap()
}

fn write_config(dir: &Path, text: &str) -> std::path::PathBuf {
    let p = dir.join("exp.toml");
    std::fs::write(&p, text).unwrap();
    p
}

#[test]
fn spectrum_writes_oracle_pair_and_manifest() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), BASE);
    let out = tmp.path().join("out");
    let o = run(&["spectrum"], &cfg, &out);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let stdout = String::from_utf8(o.stdout).unwrap();
    assert!(stdout.contains("rabi_energy") && stdout.contains("workers"), "{stdout}");

    let read = |name: &str| -> Vec<f64> {
        std::fs::read_to_string(out.join(name))
            .unwrap()
            .lines()
            .filter(|l| !l.starts_with('#'))
            .skip(1)
            .map(|l| l.split(',').nth(1).unwrap().parse().unwrap())
            .collect()
    };
    let (q, g) = (read("spectrum_qrt.csv"), read("spectrum_grn.csv"));
    assert_eq!(q.len(), g.len());
    let peak = q.iter().copied().fold(0.0, f64::max);
    assert!(q.iter().zip(&g).all(|(a, b)| (a - b).abs() <= 1e-8 * peak));

    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    let listed: Vec<&str> = manifest["files"]
        .as_array()
        .unwrap()
        .iter()
        .map(|f| f["path"].as_str().unwrap())
        .collect();
    for entry in std::fs::read_dir(&out).unwrap() {
        let name = entry.unwrap().file_name().into_string().unwrap();
        if name != "manifest.json" {
            assert!(listed.contains(&name.as_str()), "{name} missing from manifest");
        }
    }
    assert_eq!(manifest["seed"], 3);
}

#[test]
fn seed_flag_overrides_file() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), BASE);
    let out = tmp.path().join("out");
    let o = run(&["steady", "--seed", "99"], &cfg, &out);
    assert!(o.status.success());
    let manifest = std::fs::read_to_string(out.join("manifest.json")).unwrap();
    assert!(
        manifest.contains("\"seed\": 99") || manifest.contains("\"seed\":99"),
        "{manifest}"
    );
    assert!(std::fs::read_to_string(out.join("steady.txt"))
        .unwrap()
        .contains("lyapunov_residual"));
}

#[test]
fn config_errors_exit_with_two() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    let missing_seed = write_config(tmp.path(), &BASE.replace("seed = 3\n", ""));
    let o = run(&["validate"], &missing_seed, &out);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("seed"));

    let unknown = write_config(tmp.path(), &format!("{BASE}bogus = 1\n"));
    assert_eq!(run(&["validate"], &unknown, &out).status.code(), Some(2));

    let bad_t1 = write_config(tmp.path(), &BASE.replace("t1 = 400.0", "t1 = -1.0"));
    let o = run(&["validate"], &bad_t1, &out);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("t1"));
}

#[test]
fn validate_prints_hash_and_writes_nothing() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), BASE);
    let out = tmp.path().join("out");
    let o = run(&["validate"], &cfg, &out);
    assert!(o.status.success());
    assert!(String::from_utf8(o.stdout).unwrap().contains("config ok, sha256"));
    assert!(!out.exists());
}

#[test]
fn methods_flag_restricts_outputs() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), BASE);
    let out = tmp.path().join("out");
    let o = run(&["correlate", "--methods", "grn"], &cfg, &out);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(out.join("correlation_grn.csv").exists());
    assert!(!out.join("correlation_qrt.csv").exists());
}

#[test]
fn workers_from_environment() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), BASE);
    let o = Command::new(env!("CARGO_BIN_EXE_stochbloch"))
        .args(["validate", "--config"])
        .arg(&cfg)
        .env("STOCHBLOCH_WORKERS", "3")
        .output()
        .unwrap();
    let stdout = String::from_utf8(o.stdout).unwrap();
    assert!(
        stdout
            .lines()
            .any(|l| l.starts_with("workers") && l.trim_end().ends_with("= 3")),
        "{stdout}"
    );
}
