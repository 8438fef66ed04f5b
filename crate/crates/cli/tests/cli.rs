use std::path::Path;
use std::process::{Command, Output};

fn pnrecover(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pnrecover"))
        .args(args)
        .env_remove("PNRECOVER_SEED")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn ok(args: &[&str]) -> String {
    let o = pnrecover(args);
    assert!(o.status.success(), "{args:?} failed: {}", stderr(&o));
    stdout(&o)
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn simulate_run_eval_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let bundle = dir.path().join("b");
    ok(&["simulate", "--out", path(&bundle), "--sequences", "3"]);
    ok(&["run", "--bundle", path(&bundle), "--jobs", "2"]);
    let seq = bundle.join("seq_000");
    let summary = ok(&[
        "eval",
        "--pred",
        path(&seq.join("trajectory.csv")),
        "--gt",
        path(&seq.join("gt.csv")),
    ]);
    for key in ["success_auc", "precision_at_20", "normalized_precision_auc"] {
        assert!(summary.contains(key), "{summary}");
    }
    assert!(seq.join("events.csv").exists());
    assert!(seq.join("tree.snapshot").exists());

    let report = ok(&["recovery", "--bundle", path(&bundle), "--budgets", "0,5"]);
    assert!(report.contains("# pooled") && report.contains("# per_sequence_mean"), "{report}");
}

#[test]
fn eval_of_ground_truth_is_perfect() {
    let dir = tempfile::tempdir().unwrap();
    let bundle = dir.path().join("b");
    ok(&["simulate", "--out", path(&bundle), "--sequences", "1"]);
    let gt = bundle.join("seq_000/gt.csv");
    let summary = ok(&["eval", "--pred", path(&gt), "--gt", path(&gt)]);
    assert!(summary.contains("success_auc 1.000"), "{summary}");
}

#[test]
fn oracle_check_reports_agreement() {
    let out = ok(&["oracle-check", "--cases", "10000", "--seed", "7"]);
    assert!(out.lines().any(|l| l == "10000/10000 agree"), "{out}");
}

#[test]
fn parallel_runs_match_serial_runs() {
    let dir = tempfile::tempdir().unwrap();
    let bundle = dir.path().join("b");
    ok(&["simulate", "--out", path(&bundle), "--sequences", "4"]);
    let serial = dir.path().join("serial");
    let parallel = dir.path().join("parallel");
    ok(&["run", "--bundle", path(&bundle), "--out", path(&serial), "--jobs", "1"]);
    ok(&["run", "--bundle", path(&bundle), "--out", path(&parallel), "--jobs", "4"]);
    for i in 0..4 {
        for file in ["trajectory.csv", "events.csv", "tree.snapshot"] {
            let a = std::fs::read(serial.join(format!("seq_{i:03}")).join(file)).unwrap();
            let b = std::fs::read(parallel.join(format!("seq_{i:03}")).join(file)).unwrap();
            assert_eq!(a, b, "seq {i} {file}");
        }
    }
}

#[test]
fn seed_precedence() {
    let dir = tempfile::tempdir().unwrap();
    let gt_of = |name: &str, env: Option<&str>, flag: Option<&str>| {
        let out = dir.path().join(name);
        let mut cmd = Command::new(env!("CARGO_BIN_EXE_pnrecover"));
        cmd.args(["simulate", "--out", path(&out), "--sequences", "1"]);
        cmd.env_remove("PNRECOVER_SEED");
        if let Some(e) = env {
            cmd.env("PNRECOVER_SEED", e);
        }
        if let Some(f) = flag {
            cmd.args(["--seed", f]);
        }
        assert!(cmd.output().unwrap().status.success());
        std::fs::read_to_string(out.join("seq_000/gt.csv")).unwrap()
    };
    let default = gt_of("a", None, None);
    let seven = gt_of("b", None, Some("7"));
    let env = gt_of("c", Some("99"), None);
    let flag_wins = gt_of("d", Some("99"), Some("7"));
    assert_eq!(default, seven);
    assert_ne!(env, default);
    assert_eq!(flag_wins, seven);
}

#[test]
fn errors_are_one_line_and_nonzero() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.txt");
    std::fs::write(&cfg, "tree.capacity = 10\ntree.colour = red\n").unwrap();
    let o = pnrecover(&["simulate", "--config", path(&cfg), "--out", path(&dir.path().join("x"))]);
    assert!(!o.status.success());
    let err = stderr(&o);
    assert_eq!(err.trim_end().lines().count(), 1, "{err}");
    assert!(err.contains("tree.colour"), "{err}");

    let gt = dir.path().join("gt.csv");
    std::fs::write(&gt, "frame,present,x,y,w,h\n0,1,0,0,10,10\n1,1,0,0,ten,10\n").unwrap();
    let o = pnrecover(&["eval", "--pred", path(&gt), "--gt", path(&gt)]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("line 3"), "{}", stderr(&o));

    let o = pnrecover(&["run", "--bundle", path(&dir.path().join("missing"))]);
    assert!(!o.status.success());
    assert_eq!(stderr(&o).trim_end().lines().count(), 1);
}

#[test]
fn snapshot_prints_a_tree() {
    let dir = tempfile::tempdir().unwrap();
    let bundle = dir.path().join("b");
    ok(&["simulate", "--out", path(&bundle), "--sequences", "1"]);
    let snap = ok(&["snapshot", "--bundle", path(&bundle), "--frames", "1"]);
    let lines: Vec<&str> = snap.lines().collect();
    assert_eq!(&lines[..3], ["pn-tree-snapshot v1", "capacity=10", "next_seq=3"]);
    assert!(lines[3].starts_with("R,0,1,") && lines[4].starts_with("P,1,1,") && lines[5].starts_with("N,2,1,"));
}
