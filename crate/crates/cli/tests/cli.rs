use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use sha2::{Digest, Sha256};

fn mixlab(config: &str, out: &Path, extra: &[&str]) -> i32 {
    let dir = out.parent().unwrap();
    let cfg = dir.join(format!("{}.toml", out.file_name().unwrap().to_string_lossy()));
    fs::write(&cfg, config).unwrap();
    let status = Command::new(env!("CARGO_BIN_EXE_mixlab"))
        .arg("--config")
        .arg(&cfg)
        .arg("--out")
        .arg(out)
        .args(extra)
        .status()
        .unwrap();
    status.code().unwrap()
}

fn manifest(out: &Path) -> toml::Table {
    fs::read_to_string(out.join("manifest.toml")).unwrap().parse().unwrap()
}

fn result(m: &toml::Table, key: &str) -> f64 {
    m["results"][key].as_float().unwrap()
}

fn certify(system: &str, kernel: &str) -> String {
    format!(
        "command = \"certify\"\nseed = 11\n\n[system]\nname = \"{system}\"\n\n[noise]\nkernel = \"{kernel}\"\n\n\
         [ensemble]\nn = 20000\nhorizon = 2\n\n[certify]\npairs = 10\nprobes = 10\n"
    )
}

const REDUCE: &str = r#"command = "reduce-check"
seed = 5

[system]
name = "kicked_linear_1d"

[noise]
kernel = "ar1_truncgauss"

[ensemble]
n = 20000
horizon = 2

[grid]
cells = 20

[start]
state = [1.0]
"#;

#[test]
fn certify_pure_noise_passes() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("run");
    assert_eq!(mixlab(&certify("pure_noise", "iid_uniform"), &out, &[]), 0);
    let m = manifest(&out);
    assert!(result(&m, "p_bound") > 0.0);
    assert!(result(&m, "epsilon") > 0.0);
    let verdicts = m["verdicts"].as_table().unwrap();
    assert!(verdicts.values().all(|v| v.as_str() == Some("pass")), "{verdicts:?}");
}

#[test]
fn certify_drift_away_fails_with_status_two() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("run");
    assert_eq!(mixlab(&certify("kicked_linear_1d", "drift_away"), &out, &[]), 2);
    assert_eq!(manifest(&out)["verdicts"]["recurrence"].as_str(), Some("fail"));
}

#[test]
fn config_errors_exit_with_three() {
    let tmp = tempfile::tempdir().unwrap();
    let typo = REDUCE.replace("horizon = 2", "horizon = 2\nhorizn = 3");
    assert_eq!(mixlab(&typo, &tmp.path().join("a"), &[]), 3);
    let unknown = REDUCE.replace("ar1_truncgauss", "ar7");
    assert_eq!(mixlab(&unknown, &tmp.path().join("b"), &[]), 3);
    let long = REDUCE.replace("horizon = 2", "horizon = 9");
    assert_eq!(mixlab(&long, &tmp.path().join("c"), &[]), 3);
    let missing = Command::new(env!("CARGO_BIN_EXE_mixlab")).args(["--config", "/nonexistent.toml"]).status().unwrap();
    assert_eq!(missing.code(), Some(3));
}

#[test]
fn manifest_lists_every_file_with_its_checksum() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("run");
    assert_eq!(mixlab(REDUCE, &out, &[]), 0);
    let m = manifest(&out);
    let files = m["files"].as_array().unwrap();
    let listed: Vec<&str> = files.iter().map(|f| f["path"].as_str().unwrap()).collect();
    let mut on_disk: Vec<String> = fs::read_dir(&out)
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .filter(|n| n != "manifest.toml")
        .collect();
    on_disk.sort();
    let mut sorted = listed.clone();
    sorted.sort();
    assert_eq!(sorted, on_disk);
    for f in files {
        let bytes = fs::read(out.join(f["path"].as_str().unwrap())).unwrap();
        assert_eq!(f["sha256"].as_str().unwrap(), hex::encode(Sha256::digest(&bytes)));
    }
}

#[test]
fn config_echo_reparses() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("run");
    assert_eq!(mixlab(REDUCE, &out, &["--seed", "77"]), 0);
    let echo = toml::to_string(&manifest(&out)["config"]).unwrap();
    let again = tmp.path().join("again");
    assert_eq!(mixlab(&echo, &again, &[]), 0);
    let (a, b) = (manifest(&out), manifest(&again));
    assert_eq!(a["config"]["seed"].as_integer(), Some(77));
    assert_eq!(a["files"], b["files"]);
}

#[test]
fn output_is_identical_across_thread_counts() {
    let tmp = tempfile::tempdir().unwrap();
    let sim = REDUCE.replace("reduce-check", "simulate").replace("horizon = 2", "horizon = 10");
    for (name, cfg) in [("reduce", REDUCE.to_string()), ("simulate", sim)] {
        let runs: Vec<PathBuf> = [1, 3]
            .iter()
            .map(|t| {
                let out = tmp.path().join(format!("{name}{t}"));
                assert_eq!(mixlab(&cfg, &out, &["--threads", &t.to_string()]), 0);
                out
            })
            .collect();
        assert_eq!(manifest(&runs[0])["files"], manifest(&runs[1])["files"], "{name}");
    }
}

#[test]
fn mixing_run_reports_a_rate() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("run");
    let cfg = "command = \"mixing\"\nseed = 101\n\n[system]\nname = \"kicked_linear_1d\"\n\n[noise]\n\
               kernel = \"ar1_truncgauss\"\n\n[ensemble]\nn = 100000\nhorizon = 30\n\n[grid]\ncells = 32\n";
    assert_eq!(mixlab(cfg, &out, &[]), 0);
    let m = manifest(&out);
    assert!(result(&m, "gamma_fit") > 0.0);
    assert!(m["rate_fit"].as_str().unwrap().contains("gamma_fit = "));
    // recompute the largest residual from the plot files
    let read = |name: &str| -> Vec<f64> {
        fs::read_to_string(out.join(name))
            .unwrap()
            .lines()
            .skip(1)
            .map(|l| l.split(',').nth(1).unwrap().parse().unwrap())
            .collect()
    };
    let worst = read("decay_residual.csv").iter().fold(0.0f64, |a, r| a.max(r.abs()));
    assert_eq!(worst, result(&m, "max_abs_residual"));
    let decay = fs::read_to_string(out.join("decay.csv")).unwrap();
    assert!(decay.starts_with("k,tv,band_lo,band_hi,floor\n") && !decay.contains('\r'));
    assert_eq!(decay.lines().count(), 32);
}
