use std::path::Path;
use std::process::{Command, Output};

fn relnet(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_relnet"))
        .args(args)
        .current_dir(dir)
        .output()
        .unwrap()
}

#[test]
fn budget_to_stdout() {
    let dir = tempfile::tempdir().unwrap();
    let out = relnet(&["budget", "--set", "epsilon=4", "--format", "csv"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8(out.stdout).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 2);
    let header: Vec<&str> = lines[0].split(',').collect();
    let row: Vec<&str> = lines[1].split(',').collect();
    let col = header.iter().position(|&h| h == "budget_relu").unwrap();
    assert_eq!(row[col].parse::<f64>().unwrap(), 1.0);
    // nothing else was written
    assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 0);
}

#[test]
fn config_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    std::fs::write(&cfg, "kind = \"asym-approx\"\n[target]\nid = \"nope\"\n").unwrap();
    let out = relnet(&["approx-asym", "--config", cfg.to_str().unwrap()], dir.path());
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("sin-diff"), "{err}");

    let out = relnet(&["approx-asym", "--set", "epsilon=-1"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    let out = relnet(&["approx-asym", "--set", "kind=3"], dir.path());
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn budget_exceeded_exits_4() {
    let dir = tempfile::tempdir().unwrap();
    let out = relnet(&["approx-asym", "--set", "epsilon=0.1", "--set", "landmark_cap=10"], dir.path());
    assert_eq!(out.status.code(), Some(4), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn oversized_learned_attention_exits_4() {
    let dir = tempfile::tempdir().unwrap();
    let out = relnet(&["attention-verify", "--set", "margin_trials=1000"], dir.path());
    assert_eq!(out.status.code(), Some(4), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn certification_failure_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    // too few landmarks for this accuracy: the spectral build cannot certify
    let out = relnet(
        &["approx-sym", "--set", "landmarks=3", "--set", "epsilon=0.01", "--set", "target.bandwidth=0.1"],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn sweep_writes_only_the_output_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("exp.toml");
    std::fs::write(
        &cfg,
        "kind = \"asym-approx\"\nseed = 7\n[parameters]\nheld_out = 200\n[output]\nformat = \"csv\"\n",
    )
    .unwrap();
    let out = relnet(
        &["sweep", "--config", "exp.toml", "--axis", "epsilon", "--values", "0.4,0.2,0.1", "--out", "rows.csv"],
        dir.path(),
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(dir.path().join("rows.csv")).unwrap();
    assert_eq!(text.lines().count(), 4);
    assert!(!text.contains('\r'));
    let mut names: Vec<String> = std::fs::read_dir(dir.path())
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .collect();
    names.sort();
    assert_eq!(names, ["exp.toml", "rows.csv"]);
}

#[test]
fn json_report_parses() {
    let dir = tempfile::tempdir().unwrap();
    let out = relnet(&["feature-pair", "--set", "epsilon=1e-9"], dir.path());
    assert!(out.status.success());
    let rows = relnet::experiment::parse_json_report(&String::from_utf8(out.stdout).unwrap()).unwrap();
    assert_eq!(rows.len(), 1);
    assert_eq!(rows[0].truncation, Some(2));
}
