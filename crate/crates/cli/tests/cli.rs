//! End-to-end CLI checks: file outputs, determinism across runs and worker
//! counts, and exit codes.

use std::path::Path;
use std::process::{Command, Output};

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_flexwin")
}

fn run_in(dir: &Path, args: &[&str]) -> Output {
    Command::new(bin())
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn assert_ok(output: &Output) {
    assert!(
        output.status.success(),
        "command failed: {}",
        String::from_utf8_lossy(&output.stderr)
    );
}

fn read(dir: &Path, name: &str) -> Vec<u8> {
    std::fs::read(dir.join(name)).unwrap_or_else(|e| panic!("read {name}: {e}"))
}

const SYNTH_CONFIG: &str = r#"
n_persons = 800
date_range = ["2013-04-01", "2020-03-31"]
intercept = -9.7
outcome_category = "outcome"

[[categories]]
name = "background"
prevalence = 1.0
mean_events_per_year = 8.0

[[categories]]
name = "risk_a"
prevalence = 0.3
mean_events_per_year = 6.0

[true_beta]
male = 0.8
risk_a = 1.6
"#;

fn write_synth_corpus(dir: &Path) {
    std::fs::write(dir.join("synth.toml"), SYNTH_CONFIG).unwrap();
    let output = run_in(
        dir,
        &[
            "synth",
            "--config",
            "synth.toml",
            "--seed",
            "7",
            "--out-persons",
            "p.csv",
            "--out-events",
            "e.csv",
            "--out-truth",
            "t.json",
            "--out-codemap",
            "map.txt",
        ],
    );
    assert_ok(&output);
}

#[test]
fn fixture_fixed_cohort_excludes_prior_outcomes() {
    let dir = tempfile::tempdir().unwrap();
    assert_ok(&run_in(dir.path(), &["fixture", "--out-dir", "fx"]));
    assert_ok(&run_in(
        dir.path(),
        &[
            "cohort",
            "build",
            "--persons",
            "fx/persons.csv",
            "--events",
            "fx/events.csv",
            "--mode",
            "fixed",
            "--outcome",
            "homelessness",
            "--obs-start",
            "2013-04-01",
            "--index",
            "2018-03-31",
            "--pred-end",
            "2020-03-31",
            "--out",
            "cohort.csv",
        ],
    ));
    let cohort = String::from_utf8(read(dir.path(), "cohort.csv")).unwrap();
    assert!(cohort.contains("p1,positive,"));
    assert!(cohort.contains("p3,negative,"));
    assert!(cohort.contains("p2,,,,,outcome_before_index"));
    assert!(cohort.contains("p4,,,,,outcome_before_index"));
}

#[test]
fn synth_outputs_are_byte_identical_across_runs_and_workers() {
    let dir_a = tempfile::tempdir().unwrap();
    let dir_b = tempfile::tempdir().unwrap();
    std::fs::write(dir_a.path().join("synth.toml"), SYNTH_CONFIG).unwrap();
    std::fs::write(dir_b.path().join("synth.toml"), SYNTH_CONFIG).unwrap();
    let args_with = |workers: &str| {
        vec![
            "--workers".to_string(),
            workers.to_string(),
            "synth".to_string(),
            "--config".to_string(),
            "synth.toml".to_string(),
            "--seed".to_string(),
            "7".to_string(),
            "--out-persons".to_string(),
            "p.csv".to_string(),
            "--out-events".to_string(),
            "e.csv".to_string(),
            "--out-truth".to_string(),
            "t.json".to_string(),
        ]
    };
    fn to_refs(v: &[String]) -> Vec<&str> {
        v.iter().map(String::as_str).collect()
    }
    let one = args_with("1");
    let eight = args_with("8");
    assert_ok(&run_in(dir_a.path(), &to_refs(&one)));
    assert_ok(&run_in(dir_b.path(), &to_refs(&eight)));
    for name in ["p.csv", "e.csv", "t.json"] {
        assert_eq!(
            read(dir_a.path(), name),
            read(dir_b.path(), name),
            "{name} differs"
        );
    }
}

#[test]
fn sweep_report_is_deterministic_and_has_requested_rows() {
    let dir = tempfile::tempdir().unwrap();
    write_synth_corpus(dir.path());
    let sweep_args = [
        "sweep",
        "--persons",
        "p.csv",
        "--events",
        "e.csv",
        "--codemap",
        "map.txt",
        "--outcome",
        "outcome",
        "--thresholds",
        "0,30,60,90,180,360,720",
        "--out",
        "sweep.csv",
    ];
    assert_ok(&run_in(dir.path(), &sweep_args));
    let first = read(dir.path(), "sweep.csv");
    let text = String::from_utf8(first.clone()).unwrap();
    assert_eq!(text.lines().count(), 8, "header + 7 rows:\n{text}");
    assert!(text.starts_with("f1,auc,sensitivity,precision,mrlt,n_outcomes,n_individuals,error\n"));

    assert_ok(&run_in(dir.path(), &sweep_args));
    assert_eq!(first, read(dir.path(), "sweep.csv"), "rerun changed bytes");
}

#[test]
fn full_chain_runs_and_compare_is_worker_insensitive() {
    let dir = tempfile::tempdir().unwrap();
    write_synth_corpus(dir.path());
    assert_ok(&run_in(
        dir.path(),
        &[
            "cohort",
            "build",
            "--persons",
            "p.csv",
            "--events",
            "e.csv",
            "--codemap",
            "map.txt",
            "--mode",
            "flexible",
            "--outcome",
            "outcome",
            "--min-history",
            "0",
            "--out",
            "cohort.csv",
        ],
    ));
    assert_ok(&run_in(
        dir.path(),
        &[
            "featurize",
            "--persons",
            "p.csv",
            "--events",
            "e.csv",
            "--codemap",
            "map.txt",
            "--cohort",
            "cohort.csv",
            "--mode",
            "dichotomous",
            "--out",
            "features.csv",
        ],
    ));
    assert_ok(&run_in(
        dir.path(),
        &[
            "describe",
            "--features",
            "features.csv",
            "--out",
            "describe.csv",
        ],
    ));
    assert_ok(&run_in(
        dir.path(),
        &["odds", "--features", "features.csv", "--out", "odds.csv"],
    ));
    assert_ok(&run_in(
        dir.path(),
        &[
            "fit",
            "--features",
            "features.csv",
            "--model",
            "lr",
            "--out",
            "model.json",
        ],
    ));
    let odds = String::from_utf8(read(dir.path(), "odds.csv")).unwrap();
    assert!(odds.starts_with("feature,or,ci_low,ci_high,p,aor,aci_low,aci_high,ap\n"));

    std::fs::write(
        dir.path().join("exp.toml"),
        "presets = [\"model1\", \"model2\"]\n[cohort]\nmode = \"flexible\"\noutcome = \"outcome\"\nmin_history_days = 0\n",
    )
    .unwrap();
    let compare = |workers: &str, out: &str| {
        assert_ok(&run_in(
            dir.path(),
            &[
                "--workers",
                workers,
                "compare",
                "--persons",
                "p.csv",
                "--events",
                "e.csv",
                "--codemap",
                "map.txt",
                "--config",
                "exp.toml",
                "--out",
                out,
            ],
        ));
    };
    compare("1", "report1.csv");
    compare("8", "report8.csv");
    assert_eq!(
        read(dir.path(), "report1.csv"),
        read(dir.path(), "report8.csv")
    );
    let report = String::from_utf8(read(dir.path(), "report1.csv")).unwrap();
    assert_eq!(
        report.lines().count(),
        3,
        "header + 2 preset rows:\n{report}"
    );
}

#[test]
fn bad_invocations_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    let unknown = run_in(dir.path(), &["frobnicate"]);
    assert_eq!(unknown.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&unknown.stderr).contains("Usage"));

    let missing_flag = run_in(dir.path(), &["fixture"]);
    assert_eq!(missing_flag.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&missing_flag.stderr).contains("--out-dir"));

    let missing_file = run_in(dir.path(), &["describe", "--features", "nope.csv"]);
    assert_eq!(missing_file.status.code(), Some(1));
}

#[test]
fn help_lists_every_subcommand() {
    let dir = tempfile::tempdir().unwrap();
    let help = run_in(dir.path(), &["--help"]);
    assert!(help.status.success());
    let text = String::from_utf8_lossy(&help.stdout);
    for sub in [
        "synth",
        "cohort",
        "featurize",
        "describe",
        "odds",
        "fit",
        "sweep",
        "compare",
        "fixture",
    ] {
        assert!(text.contains(sub), "missing {sub} in help:\n{text}");
    }
}

#[test]
fn internal_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    // A constant feature column duplicates the intercept: the fit is
    // singular, which is an internal (exit 2) rather than usage error.
    std::fs::write(
        dir.path().join("f.csv"),
        "person_id,x,label\nr0,1,0\nr1,1,1\nr2,1,0\nr3,1,1\n",
    )
    .unwrap();
    let output = run_in(
        dir.path(),
        &[
            "fit",
            "--features",
            "f.csv",
            "--model",
            "lr",
            "--out",
            "m.json",
        ],
    );
    assert_eq!(output.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&output.stderr).contains("singular"));
}
