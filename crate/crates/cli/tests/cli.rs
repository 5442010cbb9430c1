use std::path::Path;
use std::process::{Command, Output};

fn pitwear(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pitwear"))
        .current_dir(dir)
        .args(args)
        .output()
        .unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn simulate(dir: &Path, drives: &str) {
    let o = pitwear(
        dir,
        &["simulate", "--seed", "3", "--drives", drives, "--out", "d", "--width", "324", "--height", "243"],
    );
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn help_and_usage_errors() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&pitwear(dir.path(), &["--help"])), 0);
    assert_eq!(code(&pitwear(dir.path(), &["frobnicate"])), 1);
    assert_eq!(code(&pitwear(dir.path(), &["eol", "--dataset", "d", "--alpha", "x"])), 1);
}

#[test]
fn missing_dataset_is_a_data_error() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&pitwear(dir.path(), &["measure", "--dataset", "nope"])), 2);
}

#[test]
fn measure_without_drive_zero_fails() {
    let dir = tempfile::tempdir().unwrap();
    simulate(dir.path(), "6");
    std::fs::remove_dir_all(dir.path().join("d/drives/drive_000000")).unwrap();
    let o = pitwear(dir.path(), &["measure", "--dataset", "d"]);
    assert_eq!(code(&o), 2, "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn stages_write_their_outputs() {
    let dir = tempfile::tempdir().unwrap();
    simulate(dir.path(), "30");
    for stage in ["measure", "track", "analyze"] {
        let o = pitwear(dir.path(), &[stage, "--dataset", "d"]);
        assert_eq!(code(&o), 0, "{stage}: {}", String::from_utf8_lossy(&o.stderr));
    }
    let out = dir.path().join("d/out");
    for f in ["observations.csv", "tracks.json", "analysis.json"] {
        assert!(out.join(f).is_file(), "{f} missing");
    }
    let o = pitwear(dir.path(), &["eol", "--dataset", "d", "--alpha", "1e9"]);
    assert_eq!(code(&o), 0);
    let report: serde_json::Value =
        serde_json::from_slice(&std::fs::read(out.join("eol_report.json")).unwrap()).unwrap();
    assert_eq!(report["exceeded"], false);
}
