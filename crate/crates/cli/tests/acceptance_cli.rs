//! Acceptance criterion 11: every CLI subcommand produces byte-identical
//! output across repeated runs and across worker counts 1 vs 8.

use std::path::Path;
use std::process::Command;

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_flexwin")
}

fn run(dir: &Path, args: &[String]) {
    let output = Command::new(bin())
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs");
    assert!(
        output.status.success(),
        "command {:?} failed: {}",
        args,
        String::from_utf8_lossy(&output.stderr)
    );
}

fn read(dir: &Path, name: &str) -> Vec<u8> {
    std::fs::read(dir.join(name)).unwrap_or_else(|e| panic!("read {name}: {e}"))
}

const SYNTH_CONFIG: &str = r#"
n_persons = 2000
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

const EXPERIMENT_CONFIG: &str = r#"
presets = ["model1", "model2", "model3", "rf", "boost"]

[cohort]
mode = "flexible"
outcome = "outcome"
min_history_days = 0
"#;

/// Run every subcommand into `prefix`-tagged output files with the given
/// worker count.
fn run_all_subcommands(dir: &Path, workers: &str, prefix: &str) {
    let arg = |s: &str| s.to_string();
    let file = |name: &str| format!("{prefix}{name}");
    let base = vec![
        "--workers".to_string(),
        workers.to_string(),
        "--seed".to_string(),
        "7".to_string(),
    ];
    let with_base = |rest: &[String]| {
        let mut v = base.clone();
        v.extend_from_slice(rest);
        v
    };

    run(
        dir,
        &with_base(&[arg("fixture"), arg("--out-dir"), file("fx")]),
    );
    run(
        dir,
        &with_base(&[
            arg("synth"),
            arg("--config"),
            arg("synth.toml"),
            arg("--out-persons"),
            file("p.csv"),
            arg("--out-events"),
            file("e.csv"),
            arg("--out-truth"),
            file("t.json"),
            arg("--out-codemap"),
            file("map.txt"),
        ]),
    );
    run(
        dir,
        &with_base(&[
            arg("cohort"),
            arg("build"),
            arg("--persons"),
            file("p.csv"),
            arg("--events"),
            file("e.csv"),
            arg("--codemap"),
            file("map.txt"),
            arg("--mode"),
            arg("flexible"),
            arg("--outcome"),
            arg("outcome"),
            arg("--min-history"),
            arg("0"),
            arg("--out"),
            file("cohort.csv"),
        ]),
    );
    run(
        dir,
        &with_base(&[
            arg("featurize"),
            arg("--persons"),
            file("p.csv"),
            arg("--events"),
            file("e.csv"),
            arg("--codemap"),
            file("map.txt"),
            arg("--cohort"),
            file("cohort.csv"),
            arg("--mode"),
            arg("multivariable"),
            arg("--out"),
            file("features.csv"),
        ]),
    );
    run(
        dir,
        &with_base(&[
            arg("describe"),
            arg("--features"),
            file("features.csv"),
            arg("--out"),
            file("describe.csv"),
        ]),
    );
    run(
        dir,
        &with_base(&[
            arg("odds"),
            arg("--features"),
            file("features.csv"),
            arg("--out"),
            file("odds.csv"),
        ]),
    );
    run(
        dir,
        &with_base(&[
            arg("fit"),
            arg("--features"),
            file("features.csv"),
            arg("--model"),
            arg("rf"),
            arg("--out"),
            file("model.json"),
        ]),
    );
    run(
        dir,
        &with_base(&[
            arg("sweep"),
            arg("--persons"),
            file("p.csv"),
            arg("--events"),
            file("e.csv"),
            arg("--codemap"),
            file("map.txt"),
            arg("--outcome"),
            arg("outcome"),
            arg("--thresholds"),
            arg("0,90,360"),
            arg("--out"),
            file("sweep.csv"),
        ]),
    );
    run(
        dir,
        &with_base(&[
            arg("compare"),
            arg("--persons"),
            file("p.csv"),
            arg("--events"),
            file("e.csv"),
            arg("--codemap"),
            file("map.txt"),
            arg("--config"),
            arg("exp.toml"),
            arg("--out"),
            file("report.csv"),
        ]),
    );
}

const OUTPUTS: [&str; 11] = [
    "fx/persons.csv",
    "fx/events.csv",
    "p.csv",
    "e.csv",
    "t.json",
    "map.txt",
    "cohort.csv",
    "features.csv",
    "describe.csv",
    "odds.csv",
    "model.json",
];

#[test]
fn acceptance_11_cli_determinism() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("synth.toml"), SYNTH_CONFIG).unwrap();
    std::fs::write(dir.path().join("exp.toml"), EXPERIMENT_CONFIG).unwrap();

    run_all_subcommands(dir.path(), "1", "a_");
    run_all_subcommands(dir.path(), "1", "b_");
    run_all_subcommands(dir.path(), "8", "c_");

    for name in OUTPUTS.iter().chain(["sweep.csv", "report.csv"].iter()) {
        let a = read(dir.path(), &format!("a_{name}"));
        let b = read(dir.path(), &format!("b_{name}"));
        let c = read(dir.path(), &format!("c_{name}"));
        assert_eq!(a, b, "{name}: rerun changed bytes");
        assert_eq!(a, c, "{name}: worker count changed bytes");
        assert!(!a.is_empty(), "{name}: empty output");
    }
    println!("ACCEPTANCE 11 CLI determinism across reruns and worker counts: PASS");
}
