use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::{Command, Output, Stdio};

fn data(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/data").join(name)
}

fn ranbench(store: &Path, args: &[&str], stdin: &[u8]) -> Output {
    let mut child = Command::new(env!("CARGO_BIN_EXE_ranbench"))
        .arg("--store")
        .arg(store)
        .args(args)
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .unwrap();
    child.stdin.take().unwrap().write_all(stdin).unwrap();
    child.wait_with_output().unwrap()
}

fn text(bytes: &[u8]) -> String {
    String::from_utf8(bytes.to_vec()).unwrap()
}

#[test]
fn serve_env_matches_golden_transcript() {
    let dir = tempfile::tempdir().unwrap();
    let config = data("short_episode.toml");
    let script = std::fs::read(data("serve_env_script.txt")).unwrap();
    let out = ranbench(
        &dir.path().join("s.jsonl"),
        &["--config", config.to_str().unwrap(), "serve-env", "--scenario", "TS2", "--episode-seed", "1"],
        &script,
    );
    assert!(out.status.success(), "{}", text(&out.stderr));
    let golden = std::fs::read_to_string(data("serve_env_ts2.golden")).unwrap();
    assert_eq!(text(&out.stdout), golden);
}

#[test]
fn serve_env_rejects_bad_action() {
    let dir = tempfile::tempdir().unwrap();
    let out = ranbench(&dir.path().join("s.jsonl"), &["serve-env"], b"ACT 9\n");
    assert!(!out.status.success());
    let stdout = text(&out.stdout);
    assert!(stdout.lines().last().unwrap().starts_with("ERR "), "{stdout}");
    assert!(text(&out.stderr).starts_with("error: "));
}

#[test]
fn grid_study_exports_every_trial() {
    let dir = tempfile::tempdir().unwrap();
    let store = dir.path().join("s.jsonl");
    let out = ranbench(&store, &["optimize", "--method", "grid", "--scenarios", "TS3"], b"");
    assert!(out.status.success(), "{}", text(&out.stderr));
    let summary = text(&out.stdout);
    let row: Vec<&str> = summary.lines().nth(1).unwrap().split('\t').collect();
    assert_eq!(row[..2], ["TS3/grid", "125"]);

    let csv_path = dir.path().join("grid.csv");
    let out = ranbench(&store, &["export", "--study", "TS3/grid", "--out", csv_path.to_str().unwrap()], b"");
    assert!(out.status.success(), "{}", text(&out.stderr));
    let csv = std::fs::read_to_string(&csv_path).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next().unwrap(), "trial_id,state,score,wall_time_s,seed,p1,p2,p3");
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 125);
    assert!(rows[0].starts_with("0,complete,"), "{}", rows[0]);
    assert!(rows[0].ends_with(",20,20,20"), "{}", rows[0]);
    assert!(rows[124].starts_with("124,complete,") && rows[124].ends_with(",40,40,40"), "{}", rows[124]);

    // rerunning resumes instead of duplicating
    let out = ranbench(&store, &["optimize", "--method", "grid", "--scenarios", "TS3"], b"");
    assert!(text(&out.stdout).contains("TS3/grid\t125\t"));
}

#[test]
fn scorecard_names_missing_study() {
    let dir = tempfile::tempdir().unwrap();
    let store = dir.path().join("s.jsonl");
    let out = ranbench(&store, &["optimize", "--method", "baseline", "--scenarios", "TS1"], b"");
    assert!(out.status.success(), "{}", text(&out.stderr));
    let out = ranbench(&store, &["scorecard", "--scenarios", "TS1"], b"");
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(text(&out.stderr).trim_end(), "error: missing study 'TS1/grid'");
}

#[test]
fn unknown_scenario_is_a_one_line_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = ranbench(&dir.path().join("s.jsonl"), &["simulate", "--scenario", "TS9"], b"");
    assert_eq!(out.status.code(), Some(1));
    let err = text(&out.stderr);
    assert_eq!(err.lines().count(), 1, "{err}");
    assert!(err.starts_with("error: "));
}

#[test]
fn hpo_smoke_runs_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let store = dir.path().join("s.jsonl");
    let out = ranbench(&store, &["tune-hparams", "--smoke", "--scenarios", "TS1"], b"");
    assert!(out.status.success(), "{}", text(&out.stderr));
    let stdout = text(&out.stdout);
    let rows: Vec<&str> = stdout.lines().skip(1).filter(|l| !l.starts_with("best")).collect();
    assert_eq!(rows.len(), 3, "{stdout}");
    assert!(rows.iter().any(|r| r.split('\t').nth(1) == Some("complete")), "{stdout}");
    // resuming a finished study adds nothing
    let again = ranbench(&store, &["tune-hparams", "--smoke", "--scenarios", "TS1"], b"");
    assert_eq!(text(&again.stdout).lines().filter(|l| l.starts_with(|c: char| c.is_ascii_digit())).count(), 0);
}
