use std::path::Path;
use std::process::{Command, Output};

use ssg_cli::manifest::{Artifact, RunManifest};

fn ssg(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ssg")).args(args).output().unwrap()
}

fn ok(args: &[&str]) -> Output {
    let out = ssg(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    out
}

fn csv(path: &Path) -> Vec<Vec<String>> {
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .map(|l| l.split(',').map(String::from).collect())
        .collect()
}

fn num(s: &str) -> f64 {
    s.parse().unwrap()
}

fn manifest_matches_files(dir: &Path) -> RunManifest {
    let m = RunManifest::read(dir).unwrap();
    assert!(!m.outputs.is_empty());
    for a in &m.outputs {
        let bytes = std::fs::read(dir.join(&a.path)).unwrap();
        assert_eq!(&Artifact::of(&a.path, &bytes), a);
    }
    m
}

#[test]
fn meanfield_examples() {
    let dir = tempfile::tempdir().unwrap();
    let d = |s: &str| dir.path().join(s).to_str().unwrap().to_string();

    ok(&["meanfield", "--w", "-1", "--tf", "40", "--out", &d("neg"), "--svg"]);
    let rows = csv(&dir.path().join("neg/trajectory.csv"));
    assert_eq!(rows[0], ["t", "R", "x", "w", "cumulative_payoff"]);
    let last = rows.last().unwrap();
    assert_eq!(num(&last[0]), 40.0);
    assert!((num(&last[1]) - 0.3).abs() < 1e-3 && num(&last[2]) > 0.999, "{last:?}");
    let m = manifest_matches_files(&dir.path().join("neg"));
    assert_eq!(m.subcommand, "meanfield");
    assert_eq!(m.argv[0], "ssg");
    assert_eq!(m.params.unwrap().n_players, 20);
    assert!(m.outputs.iter().any(|a| a.path == "trajectory.svg"));

    ok(&["meanfield", "--w", "0", "--tf", "0", "--out", &d("zero")]);
    assert_eq!(csv(&dir.path().join("zero/trajectory.csv")).len(), 2);

    ok(&["meanfield", "--w", "0", "--out", &d("flat")]);
    let rows = csv(&dir.path().join("flat/trajectory.csv"));
    assert_eq!(rows.len(), 42);
    assert!(rows[1..].iter().all(|r| r[2] == "0.5"));

    ok(&["meanfield", "--schedule", "0:-1,37.5:1", "--out", &d("sched")]);
    let rows = csv(&dir.path().join("sched/trajectory.csv"));
    assert!(rows.iter().any(|r| r[0] == "37.5"));
    assert_eq!(rows.last().unwrap()[3], "1");
}

#[test]
fn manifests_reproduce_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let run = |name: &str| {
        let out = dir.path().join(name);
        ok(&["abm", "--N", "30", "--network", "ba", "--C", "0.2", "--w", "0.5", "--reps", "8", "--seed", "3", "--out", out.to_str().unwrap()]);
        manifest_matches_files(&out)
    };
    let (a, b) = (run("a"), run("b"));
    assert_eq!(a.outputs, b.outputs);
    assert_eq!(a.seeds["master"], 3);
    // the recorded argv alone regenerates the outputs
    let c_dir = dir.path().join("c");
    let mut argv: Vec<String> = a.argv[1..].to_vec();
    let at = argv.iter().position(|s| s == "--out").unwrap();
    argv[at + 1] = c_dir.to_str().unwrap().into();
    ok(&argv.iter().map(String::as_str).collect::<Vec<_>>());
    assert_eq!(manifest_matches_files(&c_dir).outputs, a.outputs);
}

#[test]
fn abm_single_realisation_and_bad_networks() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("one");
    ok(&["abm", "--w", "0", "--reps", "1", "--out", out.to_str().unwrap()]);
    let rows = csv(&out.join("ensemble.csv"));
    assert!(rows[1..].iter().all(|r| r[2] == "0" && r[4] == "0"));
    let m = RunManifest::read(&out).unwrap();
    assert_eq!(m.summary["se_defined"], false);
    assert_eq!(m.notes.len(), 1);

    let bad = ssg(&["abm", "--w", "0", "--network", "ba", "--C", "1.5", "--out", out.to_str().unwrap()]);
    assert_eq!(bad.status.code(), Some(2));
    let bad = ssg(&["abm", "--w", "0", "--network", "lattice"]);
    assert_eq!(bad.status.code(), Some(2));
}

#[test]
fn solve_modes_write_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let d = |s: &str| dir.path().join(s);

    ok(&["solve", "--mode", "continuous", "--tf", "6", "--out", d("c").to_str().unwrap()]);
    let w: Vec<f64> = csv(&d("c/schedule.csv"))[1..].iter().map(|r| num(&r[2])).collect();
    assert_eq!(w.len(), 12);
    assert_eq!((w[0], *w.last().unwrap()), (-1.0, 1.0));
    manifest_matches_files(&d("c"));

    ok(&["solve", "--mode", "piecewise", "--tf", "3", "--out", d("p").to_str().unwrap()]);
    assert!(csv(&d("p/schedule.csv"))[1..].iter().all(|r| r[2] == "1"));

    ok(&["solve", "--mode", "fixed-strategy", "--tf", "2", "--out", d("fs").to_str().unwrap()]);
    ok(&["solve", "--mode", "fixed-resource", "--tf", "2", "--out", d("fr").to_str().unwrap()]);

    ok(&["solve", "--mode", "sweep", "--tf-list", "1,2,3", "--mode2", "piecewise", "--out", d("s").to_str().unwrap()]);
    let rows = csv(&d("s/sweep.csv"));
    assert_eq!(rows[0], ["t_f", "R_final", "x_final", "payoff_inst", "payoff_cum"]);
    assert_eq!(rows.len(), 4);

    assert_eq!(ssg(&["solve", "--mode", "sweep", "--tf-list", "0..3"]).status.code(), Some(2));
    assert_eq!(ssg(&["solve", "--mode", "magic"]).status.code(), Some(2));
}

#[test]
fn fit_recovers_synthetic_tau_and_reports_bad_input() {
    let dir = tempfile::tempdir().unwrap();
    let d = |s: &str| dir.path().join(s);
    ok(&["synth", "--tau", "9", "--reps", "3", "--noise", "none", "--out", d("syn").to_str().unwrap()]);
    let series = d("syn/series.csv");
    assert_eq!(csv(&series).len(), 1 + 3 * 41);

    let fit = |out: &str| ssg(&["fit", "--input", series.to_str().unwrap(), "--game-type", "2", "--out", d(out).to_str().unwrap()]);
    let rejected = fit("strict");
    assert_eq!(rejected.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&rejected.stderr).contains("and 110 more"));
    ok(&["fit", "--input", series.to_str().unwrap(), "--game-type", "2", "--no-lattice-check", "--out", d("fit").to_str().unwrap()]);
    let result: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(d("fit/tau_crit.json")).unwrap()).unwrap();
    assert_eq!(result["tau_crit"], 9);
    assert_eq!(result["error"], 0.0);
    let m = manifest_matches_files(&d("fit"));
    assert_eq!(m.inputs.len(), 1);
    assert_eq!(m.inputs[0].sha256, Artifact::read(&series).unwrap().sha256);
    for f in ["error_curve.csv", "predicted.csv", "payoff.csv", "observed.csv"] {
        assert!(m.outputs.iter().any(|a| a.path == f), "{f}");
    }
    assert_eq!(csv(&d("fit/error_curve.csv")).len(), 41);

    let missing = ssg(&["fit", "--input", d("nope.csv").to_str().unwrap(), "--game-type", "2"]);
    assert_eq!(missing.status.code(), Some(2));

    std::fs::write(d("bad.csv"), "game_id,t,R,x\ng,0,0.5,0.5\ng,1,1.5,0.55\n").unwrap();
    let bad = ssg(&["fit", "--input", d("bad.csv").to_str().unwrap(), "--game-type", "1", "--out", d("x").to_str().unwrap()]);
    assert_eq!(bad.status.code(), Some(2));
    let err = String::from_utf8_lossy(&bad.stderr);
    assert!(err.contains("line 3"), "{err}");
}

#[test]
fn bot_session_records_fit_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let ses = dir.path().join("ses");
    ok(&["session", "--policy", "replicator(-1)", "--seed", "4", "--out", ses.to_str().unwrap()]);
    let records = ses.join("records.jsonl");
    assert_eq!(std::fs::read_to_string(&records).unwrap().lines().count(), 800);
    let out = dir.path().join("fit");
    ok(&["fit", "--input", records.to_str().unwrap(), "--game-type", "2", "--out", out.to_str().unwrap()]);
    let m = manifest_matches_files(&out);
    let tau = m.summary["tau_crit"].as_u64().unwrap();
    assert!((1..=40).contains(&tau));

    assert_eq!(ssg(&["session", "--policy", "sometimes"]).status.code(), Some(2));
}

#[test]
fn help_lists_the_flags_in_use() {
    let expect: [(&str, &[&str]); 6] = [
        ("meanfield", &["--w", "--tf", "--schedule", "--dt", "--out", "--svg"]),
        ("abm", &["--network", "--C", "--N", "--w", "--reps", "--seed", "--depletion-eps"]),
        ("solve", &["--mode", "--tf", "--tf-list", "--mode2", "--seed"]),
        ("synth", &["--tau", "--reps", "--noise", "--game-type"]),
        ("fit", &["--input", "--format", "--game-type", "--freeze"]),
        ("serve", &["--config", "--listen", "--data-dir"]),
    ];
    for (cmd, flags) in expect {
        let out = ok(&[cmd, "--help"]);
        let text = String::from_utf8_lossy(&out.stdout);
        for f in flags {
            assert!(text.contains(f), "{cmd} --help lacks {f}");
        }
    }
}
