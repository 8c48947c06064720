use std::path::Path;
use std::process::{Command, Output};

use pairwell::output::sha256_file;

fn pairwell(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pairwell"))
        .args(args)
        .env_remove("PAIRWELL_THREADS")
        .output()
        .expect("binary runs")
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let path = dir.join(name);
    std::fs::write(&path, text).unwrap();
    path.to_string_lossy().into_owned()
}

fn data_rows(path: &Path) -> Vec<String> {
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .filter(|l| !l.starts_with('#'))
        .skip(1)
        .map(str::to_owned)
        .collect()
}

const SMALL_RUN: &str = r#"
mode = "cqft_timeseries"
[well]
v1 = "2.5 c2"
v2 = "0.25 c2"
d = "0.2 au"
w = "0.3 /c"
[grid]
n_z = 64
box_length = "4 au"
[propagation]
dt = "2e-6 au"
t_end = "4e-5 au"
snapshot_every = 5
store_matrices = true
"#;

#[test]
fn empty_config_exits_with_validation_code() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "empty.toml", "");
    let out = pairwell(&["run", &cfg, "--out", dir.path().join("o").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    for field in ["mode", "well.v1", "well.v2", "well.d"] {
        assert!(err.contains(field), "{err}");
    }
    assert!(!dir.path().join("o").exists());
}

#[test]
fn light_cone_violation_is_rejected_before_compute() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "long.toml",
        &SMALL_RUN.replace("t_end = \"4e-5 au\"", "t_end = \"0.01 au\""),
    );
    let out = pairwell(&["run", &cfg, "--out", dir.path().join("o").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("light"));
}

#[test]
fn analytic_levels_gives_seven_rows() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "levels.toml",
        "mode = \"analytic_levels\"\n[well]\nv1 = \"2.5 c2\"\nv2 = \"0.25 c2\"\nd = \"0.2 au\"\n",
    );
    let out_dir = dir.path().join("o");
    let out = pairwell(&["run", &cfg, "--out", out_dir.to_str().unwrap()]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let rows = data_rows(&out_dir.join("levels.csv"));
    assert_eq!(rows.len(), 7);
    assert!(rows[1].starts_with("2,0.9428"), "{}", rows[1]);
}

#[test]
fn levels_quick_mode_prints_table() {
    let out = pairwell(&["levels", "--v1", "3", "--v2", "3", "--d", "0.0729735257"]);
    assert!(out.status.success());
    let text = String::from_utf8_lossy(&out.stdout);
    let rows: Vec<_> = text
        .lines()
        .filter(|l| !l.starts_with('#'))
        .skip(1)
        .collect();
    assert_eq!(rows.len(), 5);
    assert!(rows[4].starts_with("5,,-1.95221"), "{}", rows[4]);
}

#[test]
fn reruns_are_bit_identical_and_manifest_hashes_validate() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "run.toml", SMALL_RUN);
    let mut manifests = Vec::new();
    for (tag, threads) in [("a", "1"), ("b", "2")] {
        let out_dir = dir.path().join(tag);
        let out = pairwell(&[
            "run",
            &cfg,
            "--out",
            out_dir.to_str().unwrap(),
            "--threads",
            threads,
        ]);
        assert!(
            out.status.success(),
            "{}",
            String::from_utf8_lossy(&out.stderr)
        );
        let text = std::fs::read_to_string(out_dir.join("manifest.json")).unwrap();
        let m: serde_json::Value = serde_json::from_str(&text).unwrap();
        for entry in m["outputs"].as_array().unwrap() {
            let path = out_dir.join(entry["path"].as_str().unwrap());
            assert_eq!(
                sha256_file(&path).unwrap(),
                entry["sha256"].as_str().unwrap()
            );
        }
        manifests.push(m);
    }
    assert_eq!(manifests[0]["input_sha256"], manifests[1]["input_sha256"]);
    assert_eq!(manifests[0]["outputs"], manifests[1]["outputs"]);
    let snapshots = manifests[0]["outputs"]
        .as_array()
        .unwrap()
        .iter()
        .filter(|e| e["path"].as_str().unwrap().ends_with(".pwu"))
        .count();
    assert_eq!(snapshots, 5);
    assert_eq!(data_rows(&dir.path().join("a/numbers.csv")).len(), 5);
}
