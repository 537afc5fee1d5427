use std::path::PathBuf;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_star-secrecy"))
}

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("star-secrecy-cli-{name}-{}", std::process::id()));
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

const SMALL: [&str; 4] = ["--override", "radio.num_ris_elements=4", "--override", "radio.num_bs_antennas=2"];

#[test]
fn solve_one_prints_a_json_report() {
    let out = bin().args(["solve-one", "--seed", "3"]).args(SMALL).output().unwrap();
    assert!(out.status.success(), "{}", stderr(&out));
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let min = v["min_secrecy"].as_f64().unwrap();
    assert!(min >= 0.0);
    assert_eq!(min, v["secrecy_iu"].as_f64().unwrap().min(v["secrecy_ou"].as_f64().unwrap()));
    assert!(v["order"].is_string());
}

#[test]
fn sweep_writes_csv_into_out_dir() {
    let dir = scratch("sweep");
    let out = bin()
        .args(["sweep-power", "--trials", "1", "--out"])
        .arg(&dir)
        .args(SMALL)
        .args(["--override", "axis=[10.0]", "--override", "schemes=[\"random-phase\", \"star-noma\"]"])
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", stderr(&out));
    let path = dir.join("sweep-power.csv");
    let text = std::fs::read_to_string(&path).unwrap();
    assert_eq!(text.lines().count(), 3);
    assert!(text.starts_with("scheme,"));
    assert!(stderr(&out).contains("sweep-power.csv"));
    std::fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn config_file_is_read() {
    let dir = scratch("config");
    let cfg = dir.join("run.toml");
    std::fs::write(&cfg, "trials = 1\naxis = [5.0]\nschemes = [\"random-phase\"]\n[radio]\nnum_ris_elements = 4\nnum_bs_antennas = 2\n").unwrap();
    let out = bin().args(["sweep-power", "--config"]).arg(&cfg).arg("--out").arg(&dir).output().unwrap();
    assert!(out.status.success(), "{}", stderr(&out));
    assert_eq!(std::fs::read_to_string(dir.join("sweep-power.csv")).unwrap().lines().count(), 2);
    std::fs::write(&cfg, "experiment = \"placement\"\n").unwrap();
    let out = bin().args(["sweep-power", "--config"]).arg(&cfg).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    std::fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn missing_config_is_a_usage_error() {
    let out = bin().args(["sweep-power", "--config", "/no/such/run.toml"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("/no/such/run.toml"));
}

#[test]
fn bad_arguments_exit_with_two() {
    for args in [
        vec!["frobnicate"],
        vec!["sweep-power", "--no-such-flag"],
        vec!["sweep-power", "--override", "bogus=1"],
        vec!["sweep-power", "--trials", "0"],
    ] {
        let out = bin().args(&args).output().unwrap();
        assert_eq!(out.status.code(), Some(2), "{args:?}: {}", stderr(&out));
    }
}
