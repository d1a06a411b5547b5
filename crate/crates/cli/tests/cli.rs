use std::fs;
use std::process::Command;

use interwave_cli::output::{Snapshot, Summary};

fn interwave(args: &[&str]) -> (i32, String, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_interwave"))
        .args(args)
        .output()
        .unwrap();
    (
        out.status.code().unwrap_or(-1),
        String::from_utf8_lossy(&out.stdout).into_owned(),
        String::from_utf8_lossy(&out.stderr).into_owned(),
    )
}

#[test]
fn validate_passes_and_reports_each_check() {
    let (code, stdout, _) = interwave(&["validate", "--seed", "3"]);
    assert_eq!(code, 0, "{stdout}");
    assert!(stdout.lines().filter(|l| l.starts_with("PASS")).count() >= 10);
    assert!(!stdout.contains("FAIL"));
}

#[test]
fn config_errors_exit_with_code_two() {
    let dir = tempfile::tempdir().unwrap();
    let cases = [
        ("[physical]\nrho_bar = 1.2\n", "(ρ̄−ρ)g < 0 required"),
        ("[discretization]\nn_modes = 7\n", "even"),
        ("[output]\nformat = \"x\"\n", "line 2"),
    ];
    for (i, (text, needle)) in cases.iter().enumerate() {
        let path = dir.path().join(format!("bad{i}.toml"));
        fs::write(&path, text).unwrap();
        let (code, _, stderr) = interwave(&["continue", "--config", path.to_str().unwrap()]);
        assert_eq!(code, 2);
        assert!(stderr.contains(needle), "{stderr}");
    }
    let (code, _, _) = interwave(&["continue", "--direction", "sideways"]);
    assert_eq!(code, 2);
}

#[test]
fn continue_writes_table_snapshots_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("small.toml");
    fs::write(&cfg, "[discretization]\nn_modes = 16\nvertical = 12\n[output]\nsnapshot_every = 2\n").unwrap();
    let out = dir.path().join("run");
    let (code, _, stderr) = interwave(&[
        "continue",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "--direction",
        "-",
        "--max-steps",
        "3",
    ]);
    assert_eq!(code, 0, "{stderr}");
    let table = fs::read_to_string(out.join("branch.csv")).unwrap();
    let rows: Vec<&str> = table.lines().filter(|l| !l.starts_with('#')).collect();
    assert!(rows[0].starts_with("step,eps,c,"));
    assert_eq!(rows.len(), 5);
    assert!(rows[1].starts_with("0,0e0,0e0,"));
    let summary = Summary::load(&out.join("summary.json")).unwrap();
    assert_eq!(summary.termination.as_deref(), Some("MaxStepsReached"));
    assert_eq!(summary.direction, "-");
    assert!(table.contains(&summary.config_sha256));
    // every second point plus the last one
    for step in [0, 2, 3] {
        let snap = Snapshot::load(&out.join("snapshots").join(Snapshot::file_name(step))).unwrap();
        assert_eq!(snap.grid.n_coeffs, 17);
        assert!(step == 0 || snap.eps < 0.0);
    }
    assert!(!out.join("snapshots").join(Snapshot::file_name(1)).exists());
}
