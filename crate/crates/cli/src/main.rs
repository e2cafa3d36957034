//! `flexwin` — scriptable workflow over longitudinal administrative event
//! data: synthetic corpora, fixed/flexible cohorts, feature matrices,
//! descriptive and odds-ratio tables, model fitting, threshold sweeps, and
//! preset comparisons.
//!
//! All randomness flows from `--seed`; outputs are byte-identical across
//! reruns and worker counts. Data goes to `--out` files or stdout,
//! diagnostics to stderr. Exit codes: 0 ok, 1 invalid input, 2 internal
//! error.

#![forbid(unsafe_code)]

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::str::FromStr;

use chrono::NaiveDate;
use clap::{Args, Parser, Subcommand};

use flexwin::codemap::CodeMap;
use flexwin::cohort::{build_fixed, build_flexible, Cohort, FixedWindowSpec, FlexibleWindowSpec};
use flexwin::ensembles::{fit_boosted, fit_forest, BoostHyperparams, TreeHyperparams};
use flexwin::error::Error;
use flexwin::eval::{comparison_report, sweep_report};
use flexwin::events::EventStore;
use flexwin::featurize::{describe, featurize, FeatureMatrix, FeatureMode, FeatureSpec};
use flexwin::glm::{fit_logistic, forward_select, odds_table, univariate_screen, FitOptions};
use flexwin::pipeline::{
    run_experiment, run_threshold_sweep, ExperimentConfig, ModelKind, PresetName, SavedModel,
    DEFAULT_THRESHOLDS,
};
use flexwin::report::{fmt_g6, ReportFormat, Table};
use flexwin::synth::{figure1_fixture, generate, SynthConfig};

#[derive(Parser)]
#[command(
    name = "flexwin",
    version,
    about = "Cohort windows, features, and calibrated prediction over administrative event data"
)]
struct Cli {
    #[command(flatten)]
    global: GlobalOptions,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct GlobalOptions {
    /// Master seed; every random choice derives from it (default 42).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Report rendering for tabular output.
    #[arg(long, global = true, default_value = "csv")]
    format: String,
    /// Worker threads (output never depends on this).
    #[arg(long, global = true, default_value_t = 0, value_parser = parse_workers)]
    workers: usize,
    /// Print progress to stderr.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
}

fn parse_workers(s: &str) -> Result<usize, String> {
    let n: usize = s
        .parse()
        .map_err(|_| format!("invalid worker count {s:?}"))?;
    Ok(n)
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic corpus with known ground truth.
    Synth {
        /// TOML generator config.
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out_persons: PathBuf,
        #[arg(long)]
        out_events: PathBuf,
        #[arg(long)]
        out_truth: PathBuf,
        /// Also write the code map matching the generated corpus.
        #[arg(long)]
        out_codemap: Option<PathBuf>,
    },
    /// Write the 4-person reference corpus.
    Fixture {
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Cohort operations.
    Cohort {
        #[command(subcommand)]
        action: CohortAction,
    },
    /// Aggregate a cohort's visible events into a feature matrix.
    Featurize {
        #[command(flatten)]
        store: StoreArgs,
        #[arg(long)]
        cohort: PathBuf,
        /// multivariable | dichotomous
        #[arg(long, default_value = "multivariable")]
        mode: String,
        /// Count threshold for dichotomous mode.
        #[arg(long, default_value_t = 1)]
        threshold: u32,
        #[arg(long)]
        out: PathBuf,
    },
    /// Summarize a feature matrix by outcome stratum.
    Describe {
        #[arg(long)]
        features: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Univariate and multivariable odds-ratio table.
    Odds {
        #[arg(long)]
        features: PathBuf,
        /// Use likelihood-ratio forward selection for the multivariable fit.
        #[arg(long)]
        forward: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Fit one model on a feature matrix and save it as JSON.
    Fit {
        #[arg(long)]
        features: PathBuf,
        /// lr | rf | boost
        #[arg(long)]
        model: String,
        /// Hyperparameter preset: fixed | flexible (trees only).
        #[arg(long, default_value = "flexible")]
        tuned_for: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Minimum-history threshold sweep (one experiment per threshold).
    Sweep {
        #[command(flatten)]
        store: StoreArgs,
        #[arg(long)]
        outcome: String,
        /// Comma-separated day thresholds.
        #[arg(long)]
        thresholds: Option<String>,
        #[arg(long, default_value = "model2")]
        preset: String,
        #[arg(long, default_value_t = 0.9)]
        train_fraction: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run preset experiments from a config file.
    Compare {
        #[command(flatten)]
        store: StoreArgs,
        /// Experiment TOML (cohort mode, outcome, presets, seed).
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum CohortAction {
    /// Build a cohort and write cohort.csv.
    Build {
        #[command(flatten)]
        store: StoreArgs,
        /// fixed | flexible
        #[arg(long)]
        mode: String,
        #[arg(long)]
        outcome: String,
        #[arg(long)]
        obs_start: Option<NaiveDate>,
        #[arg(long)]
        index: Option<NaiveDate>,
        #[arg(long)]
        pred_end: Option<NaiveDate>,
        #[arg(long)]
        min_history: Option<i64>,
        #[arg(long)]
        out: PathBuf,
    },
}

/// Input files shared by store-reading subcommands.
#[derive(Args)]
struct StoreArgs {
    #[arg(long)]
    persons: PathBuf,
    #[arg(long)]
    events: PathBuf,
    /// Code map file; the bundled default when omitted.
    #[arg(long)]
    codemap: Option<PathBuf>,
    /// Declared corpus range (events outside are rejected).
    #[arg(long)]
    range_start: Option<NaiveDate>,
    #[arg(long)]
    range_end: Option<NaiveDate>,
}

impl StoreArgs {
    fn load(&self, verbose: u8) -> Result<(EventStore, CodeMap), Error> {
        let range = match (self.range_start, self.range_end) {
            (Some(a), Some(b)) => Some((a, b)),
            (None, None) => None,
            _ => {
                return Err(Error::InvalidConfig(
                    "--range-start and --range-end must be given together".to_string(),
                ));
            }
        };
        let store = EventStore::load(&self.persons, &self.events, range)?;
        if verbose > 0 {
            eprintln!("loaded {} persons", store.n_persons());
        }
        let codemap = match &self.codemap {
            Some(path) => CodeMap::load(path)?,
            None => CodeMap::bundled(),
        };
        Ok((store, codemap))
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // clap renders its own message (usage + offending flag).
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    if cli.global.workers > 0 {
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(cli.global.workers)
            .build_global();
    }
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_validation() { 1 } else { 2 })
        }
    }
}

fn run(cli: &Cli) -> Result<(), Error> {
    let format = ReportFormat::from_str(&cli.global.format)?;
    let verbose = cli.global.verbose;
    let seed = cli.global.seed.unwrap_or(42);
    match &cli.command {
        Command::Synth {
            config,
            out_persons,
            out_events,
            out_truth,
            out_codemap,
        } => {
            let config = SynthConfig::load(config)?;
            let (persons, events, truth) = generate(&config, seed)?;
            if verbose > 0 {
                eprintln!(
                    "generated {} persons, {} events",
                    persons.len(),
                    events.len()
                );
            }
            let store = EventStore::build(persons, events, Some(config.date_range))?;
            store.save(out_persons, out_events)?;
            truth.save(out_truth)?;
            if let Some(path) = out_codemap {
                flexwin::events::write_file(path, config.derive_codemap().to_text().as_bytes())?;
            }
            Ok(())
        }
        Command::Fixture { out_dir } => {
            std::fs::create_dir_all(out_dir)
                .map_err(|e| Error::io(out_dir.display().to_string(), e))?;
            let (persons, events) = figure1_fixture();
            let store = EventStore::build(persons, events, None)?;
            store.save(&out_dir.join("persons.csv"), &out_dir.join("events.csv"))?;
            Ok(())
        }
        Command::Cohort { action } => match action {
            CohortAction::Build {
                store,
                mode,
                outcome,
                obs_start,
                index,
                pred_end,
                min_history,
                out,
            } => {
                let (event_store, codemap) = store.load(verbose)?;
                let cohort = match mode.as_str() {
                    "fixed" => {
                        let missing = |what: &str| {
                            Error::InvalidConfig(format!("--mode fixed needs --{what}"))
                        };
                        let spec = FixedWindowSpec {
                            obs_start: obs_start.ok_or_else(|| missing("obs-start"))?,
                            index_date: index.ok_or_else(|| missing("index"))?,
                            pred_end: pred_end.ok_or_else(|| missing("pred-end"))?,
                            outcome_category: outcome.clone(),
                        };
                        build_fixed(&event_store, &codemap, &spec)?
                    }
                    "flexible" => {
                        let spec = FlexibleWindowSpec {
                            min_history_days: min_history.unwrap_or(0),
                            outcome_category: outcome.clone(),
                        };
                        build_flexible(&event_store, &codemap, &spec)?
                    }
                    other => {
                        return Err(Error::InvalidConfig(format!(
                            "unknown mode {other:?} (want fixed|flexible)"
                        )));
                    }
                };
                if verbose > 0 {
                    eprintln!(
                        "cohort: {} members ({} positive), {} excluded",
                        cohort.n_members(),
                        cohort.n_positive(),
                        cohort.exclusion_log.len()
                    );
                }
                cohort.save(out)
            }
        },
        Command::Featurize {
            store,
            cohort,
            mode,
            threshold,
            out,
        } => {
            let (event_store, codemap) = store.load(verbose)?;
            let cohort = Cohort::load(cohort)?;
            let spec = FeatureSpec {
                categories: codemap.feature_categories(),
                include_static: true,
                mode: FeatureMode::from_str(mode)?,
                dichotomize_threshold: *threshold,
            };
            let matrix = featurize(&event_store, &cohort, &codemap, &spec)?;
            matrix.save(out)
        }
        Command::Describe { features, out } => {
            let matrix = FeatureMatrix::load(features)?;
            let table = describe(&matrix)?;
            emit(out.as_deref(), &table.render(format))
        }
        Command::Odds {
            features,
            forward,
            out,
        } => {
            let matrix = FeatureMatrix::load(features)?;
            let rendered = odds_command(&matrix, *forward, format)?;
            emit(out.as_deref(), &rendered)
        }
        Command::Fit {
            features,
            model,
            tuned_for,
            out,
        } => {
            let matrix = FeatureMatrix::load(features)?;
            let fixed = match tuned_for.as_str() {
                "fixed" => true,
                "flexible" => false,
                other => {
                    return Err(Error::InvalidConfig(format!(
                        "unknown --tuned-for {other:?} (want fixed|flexible)"
                    )));
                }
            };
            let saved = match model.as_str() {
                "lr" => SavedModel::new(ModelKind::Logistic(fit_logistic(
                    &matrix,
                    &FitOptions::default(),
                )?)),
                "rf" => {
                    let hp = if fixed {
                        TreeHyperparams::fixed_cohort()
                    } else {
                        TreeHyperparams::default()
                    };
                    SavedModel::new(ModelKind::Forest(fit_forest(&matrix, &hp, seed)?))
                }
                "boost" => {
                    let hp = if fixed {
                        BoostHyperparams::fixed_cohort()
                    } else {
                        BoostHyperparams::default()
                    };
                    SavedModel::new(ModelKind::Boosted(fit_boosted(&matrix, &hp, seed)?))
                }
                other => {
                    return Err(Error::InvalidConfig(format!(
                        "unknown model {other:?} (want lr|rf|boost)"
                    )));
                }
            };
            saved.save(out)
        }
        Command::Sweep {
            store,
            outcome,
            thresholds,
            preset,
            train_fraction,
            out,
        } => {
            let (event_store, codemap) = store.load(verbose)?;
            let thresholds: Vec<i64> = match thresholds {
                Some(list) => list
                    .split(',')
                    .map(|t| {
                        t.trim()
                            .parse::<i64>()
                            .map_err(|_| Error::InvalidConfig(format!("bad threshold {t:?}")))
                    })
                    .collect::<Result<_, _>>()?,
                None => DEFAULT_THRESHOLDS.to_vec(),
            };
            let preset = PresetName::from_str(preset)?;
            let entries = run_threshold_sweep(
                &event_store,
                &codemap,
                outcome,
                &thresholds,
                preset,
                seed,
                *train_fraction,
            )?;
            emit(out.as_deref(), &sweep_report(&entries, format))
        }
        Command::Compare { store, config, out } => {
            let (event_store, codemap) = store.load(verbose)?;
            let mut experiment = ExperimentConfig::load(config)?;
            // An explicit --seed overrides the config's seed.
            if let Some(explicit) = cli.global.seed {
                experiment.seed = explicit;
            }
            let entries = run_experiment(&event_store, &codemap, &experiment)?;
            emit(out.as_deref(), &comparison_report(&entries, format))
        }
    }
}

/// Univariate screen beside the multivariable (optionally
/// forward-selected) fit, one row per feature.
fn odds_command(
    matrix: &FeatureMatrix,
    forward: bool,
    format: ReportFormat,
) -> Result<String, Error> {
    let options = FitOptions::default();
    let screen = univariate_screen(matrix, &options);
    // Constant columns cannot enter the multivariable fit; the screen
    // still reports them (as per-row errors).
    let usable: Vec<String> = matrix
        .column_names
        .iter()
        .enumerate()
        .filter(|(idx, _)| {
            let col = matrix.column(*idx);
            col.iter().any(|v| *v != col[0])
        })
        .map(|(_, name)| name.clone())
        .collect();
    let fit_input = matrix.select_columns(&usable)?;
    let multi_model = if forward {
        forward_select(&fit_input, 0.05, &options)?.1
    } else {
        fit_logistic(&fit_input, &options)?
    };
    let adjusted_rows = odds_table(&multi_model);
    let adjusted: std::collections::BTreeMap<&str, &flexwin::glm::OddsRow> = adjusted_rows
        .iter()
        .map(|row| (row.feature.as_str(), row))
        .collect();
    let mut table = Table::new(&[
        "feature", "or", "ci_low", "ci_high", "p", "aor", "aci_low", "aci_high", "ap",
    ]);
    for (feature, outcome) in &screen {
        let mut cells = vec![feature.clone()];
        match outcome {
            Ok(row) => {
                cells.push(fmt_g6(row.or));
                cells.push(fmt_g6(row.ci_low));
                cells.push(fmt_g6(row.ci_high));
                cells.push(fmt_g6(row.p_value));
            }
            Err(_) => cells.extend(std::iter::repeat_n(String::new(), 4)),
        }
        match adjusted.get(feature.as_str()) {
            Some(row) => {
                cells.push(fmt_g6(row.or));
                cells.push(fmt_g6(row.ci_low));
                cells.push(fmt_g6(row.ci_high));
                cells.push(fmt_g6(row.p_value));
            }
            None => cells.extend(std::iter::repeat_n(String::new(), 4)),
        }
        table.push_row(cells);
    }
    Ok(table.render(format))
}

fn emit(out: Option<&Path>, rendered: &str) -> Result<(), Error> {
    match out {
        Some(path) => flexwin::events::write_file(path, rendered.as_bytes()),
        None => {
            print!("{rendered}");
            Ok(())
        }
    }
}
