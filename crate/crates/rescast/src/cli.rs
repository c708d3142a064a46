//! Command-line interface: `rescast {fetch|train|predict|evaluate|compare}`.
//! Every config key is exposed as a flag of the same dotted name; flags win
//! over the config file. Exit codes: 0 success, 1 config error, 2 data or
//! fetch error, 3 artifact error, 4 model divergence.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use clap::{Arg, ArgMatches, Command};

use crate::artifact::{self, ModelArtifact};
use crate::config::{PredictionMode, RunConfig, OVERRIDABLE_KEYS};
use crate::error::{Error, Result};
use crate::fetch::{fetch_history, FetchRequest};
use crate::metrics::{evaluate, Scale};
use crate::ohlc::{parse_predictions, serialize_loss_csv, serialize_predictions, PredictionRow};
use crate::pipeline::{load_series, next_business_day, prepare, run_compare};
use crate::series::denormalize;

pub const CACHE_ENV_VAR: &str = "RESCAST_CACHE_DIR";

fn with_common_args(cmd: Command) -> Command {
    let mut cmd = cmd
        .arg(Arg::new("config").long("config").value_name("PATH").help("config file"))
        .arg(
            Arg::new("seed")
                .long("seed")
                .value_name("N")
                .help("sets both reservoir.seed and lstm.seed"),
        )
        .arg(Arg::new("out").long("out").value_name("DIR").help("output directory"));
    for key in OVERRIDABLE_KEYS {
        cmd = cmd.arg(
            Arg::new(*key)
                .long(*key)
                .value_name("VALUE")
                .hide_short_help(true)
                .help("config key override"),
        );
    }
    cmd
}

pub fn command() -> Command {
    Command::new("rescast")
        .about("Echo state network and LSTM forecasting for daily price series")
        .subcommand_required(true)
        .arg_required_else_help(true)
        .subcommand(with_common_args(
            Command::new("fetch")
                .about("Download and cache a daily price CSV")
                .arg(Arg::new("symbol").long("symbol").value_name("TICKER"))
                .arg(Arg::new("start").long("start").value_name("YYYY-MM-DD"))
                .arg(Arg::new("end").long("end").value_name("YYYY-MM-DD"))
                .arg(Arg::new("endpoint").long("endpoint").value_name("URL_TEMPLATE"))
                .arg(Arg::new("cache-dir").long("cache-dir").value_name("DIR")),
        ))
        .subcommand(with_common_args(
            Command::new("train")
                .about("Train one model and write its artifact")
                .arg(
                    Arg::new("model")
                        .value_parser(["esn", "lstm"])
                        .required(true)
                        .help("which model to train"),
                ),
        ))
        .subcommand(with_common_args(
            Command::new("predict")
                .about("Predict with a trained model artifact")
                .arg(
                    Arg::new("artifact")
                        .long("artifact")
                        .value_name("PATH")
                        .required(true)
                        .help("model artifact written by train"),
                )
                .arg(
                    Arg::new("horizon")
                        .long("horizon")
                        .value_name("N")
                        .help("steps for free-running mode"),
                ),
        ))
        .subcommand(with_common_args(
            Command::new("evaluate")
                .about("Compute error metrics for a predictions CSV")
                .arg(
                    Arg::new("predictions")
                        .long("predictions")
                        .value_name("PATH")
                        .required(true),
                )
                .arg(
                    Arg::new("model-name")
                        .long("model-name")
                        .value_name("NAME")
                        .default_value("predictions"),
                ),
        ))
        .subcommand(with_common_args(
            Command::new("compare").about("Train both models, evaluate and compare"),
        ))
        .subcommand(
            Command::new("config-keys")
                .about("List every dotted config key")
                .hide(true),
        )
}

/// Resolve the run config: file, then RESCAST_CACHE_DIR, then dotted-key
/// flags, then the convenience flags.
fn resolve_config(matches: &ArgMatches) -> Result<RunConfig> {
    let mut config = match matches.get_one::<String>("config") {
        Some(path) => RunConfig::from_file(Path::new(path))?,
        None => RunConfig::default(),
    };
    if let Ok(dir) = std::env::var(CACHE_ENV_VAR) {
        if !dir.is_empty() {
            config.data.cache_dir = Some(PathBuf::from(dir));
        }
    }
    let mut overrides = BTreeMap::new();
    for key in OVERRIDABLE_KEYS {
        if let Some(value) = matches.get_one::<String>(*key) {
            overrides.insert(key.to_string(), value.clone());
        }
    }
    config.apply_map(&overrides)?;
    if let Some(seed) = matches.get_one::<String>("seed") {
        config.set("reservoir.seed", seed)?;
        config.set("lstm.seed", seed)?;
    }
    if let Some(out) = matches.get_one::<String>("out") {
        config.set("out.dir", out)?;
    }
    Ok(config)
}

fn ensure_out_dir(config: &RunConfig) -> Result<()> {
    std::fs::create_dir_all(&config.out_dir)?;
    Ok(())
}

pub fn run() -> i32 {
    let matches = command().get_matches();
    match dispatch(&matches) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn dispatch(matches: &ArgMatches) -> Result<()> {
    match matches.subcommand() {
        Some(("fetch", m)) => cmd_fetch(m),
        Some(("train", m)) => cmd_train(m),
        Some(("predict", m)) => cmd_predict(m),
        Some(("evaluate", m)) => cmd_evaluate(m),
        Some(("compare", m)) => cmd_compare(m),
        Some(("config-keys", _)) => {
            for key in OVERRIDABLE_KEYS {
                println!("{key}");
            }
            Ok(())
        }
        _ => unreachable!("subcommand required"),
    }
}

fn cmd_fetch(matches: &ArgMatches) -> Result<()> {
    let mut config = resolve_config(matches)?;
    for (flag, key) in [
        ("symbol", "data.symbol"),
        ("start", "data.start"),
        ("end", "data.end"),
        ("endpoint", "data.endpoint"),
        ("cache-dir", "data.cache_dir"),
    ] {
        if let Some(value) = matches.get_one::<String>(flag) {
            config.set(key, value)?;
        }
    }
    let symbol = config
        .data
        .symbol
        .clone()
        .ok_or_else(|| Error::Config("fetch requires --symbol".into()))?;
    let request = FetchRequest {
        symbol,
        start: config.data.start.ok_or_else(|| Error::Config("fetch requires --start".into()))?,
        end: config.data.end.ok_or_else(|| Error::Config("fetch requires --end".into()))?,
        endpoint: config
            .data
            .endpoint
            .clone()
            .ok_or_else(|| Error::Config("fetch requires --endpoint (URL template)".into()))?,
        cache_dir: config
            .data
            .cache_dir
            .clone()
            .unwrap_or_else(|| std::env::temp_dir().join("rescast-cache")),
    };
    let outcome = fetch_history(&request)?;
    let n = outcome.series.len();
    let range = match (outcome.series.timestamps.first(), outcome.series.timestamps.last()) {
        (Some(first), Some(last)) => format!("{first}..{last}"),
        _ => "empty".into(),
    };
    let stale = if outcome.stale { " (stale cache)" } else { "" };
    println!("fetched {n} rows {range}{stale} -> {}", outcome.cache_path.display());
    Ok(())
}

fn cmd_train(matches: &ArgMatches) -> Result<()> {
    let config = resolve_config(matches)?;
    config.validate()?;
    ensure_out_dir(&config)?;
    let model_kind = matches.get_one::<String>("model").expect("required").as_str();
    let (series, _) = load_series(&config)?;
    let data = prepare(&config, &series)?;

    match model_kind {
        "esn" => {
            let mut model = crate::esn::build_reservoir(&config.reservoir)?;
            let report = model.fit_readout(&data.train)?;
            let path = config.out_dir.join("esn.json");
            artifact::save(&path, &artifact::serialize_esn(&model))?;
            println!("{}", serde_json::to_string_pretty(&report).expect("report json"));
            eprintln!("wrote {}", path.display());
        }
        "lstm" => {
            let (model, report) = crate::lstm::lstm_fit(&config.lstm, &data.train)?;
            let path = config.out_dir.join("lstm.json");
            artifact::save(&path, &artifact::serialize_lstm(&model))?;
            std::fs::write(
                config.out_dir.join("lstm_loss.csv"),
                serialize_loss_csv(&report.epoch_losses),
            )?;
            println!("{}", serde_json::to_string_pretty(&report).expect("report json"));
            eprintln!("wrote {}", path.display());
        }
        other => return Err(Error::Config(format!("unknown model `{other}`"))),
    }
    Ok(())
}

fn cmd_predict(matches: &ArgMatches) -> Result<()> {
    let config = resolve_config(matches)?;
    config.validate()?;
    ensure_out_dir(&config)?;
    let artifact_path = matches.get_one::<String>("artifact").expect("required");
    let mut model = artifact::load(Path::new(artifact_path))?;
    let horizon = match matches.get_one::<String>("horizon") {
        Some(h) => h
            .parse::<usize>()
            .map_err(|e| Error::Config(format!("bad --horizon: {e}")))?,
        None => config.horizon,
    };

    let (series, _) = load_series(&config)?;
    let data = prepare(&config, &series)?;

    let rows = match config.prediction_mode {
        PredictionMode::OneStep => {
            let normalized = match &mut model {
                ModelArtifact::Esn(esn) => {
                    // replay the training inputs so the state matches the
                    // end of teacher-forced training, then predict the test
                    esn.reset_state();
                    for &x in &data.train.inputs {
                        esn.update_state(x, esn.config.feedback_enabled.then_some(0.0))?;
                    }
                    esn.predict_one_step(&data.test_inputs)?
                }
                ModelArtifact::Lstm(lstm) => lstm.lstm_predict(&data.test_inputs)?,
            };
            let raw = denormalize(&normalized, &data.params)?;
            data.test_dates
                .iter()
                .zip(&data.test_actual_raw)
                .zip(&raw)
                .map(|((date, actual), predicted)| PredictionRow {
                    date: *date,
                    actual: Some(*actual),
                    predicted: *predicted,
                })
                .collect::<Vec<_>>()
        }
        PredictionMode::FreeRunning => {
            let all = data.normalized.values();
            let last = *all.last().expect("nonempty");
            let normalized = match &mut model {
                ModelArtifact::Esn(esn) => {
                    esn.reset_state();
                    for &x in &all[..all.len() - 1] {
                        esn.update_state(x, esn.config.feedback_enabled.then_some(0.0))?;
                    }
                    esn.predict_free_running(last, horizon)?
                }
                ModelArtifact::Lstm(lstm) => {
                    lstm.reset_state();
                    if !lstm.is_trained() {
                        return Err(Error::NotFitted("lstm artifact is untrained".into()));
                    }
                    let mut out = Vec::with_capacity(horizon);
                    for &x in &all[..all.len() - 1] {
                        lstm.lstm_step(x)?;
                    }
                    let mut x = last;
                    for step in 0..horizon {
                        let (y, _) = lstm.lstm_step(x)?;
                        if !y.is_finite() {
                            return Err(Error::Divergence(format!(
                                "lstm free run became non-finite at step {step}"
                            )));
                        }
                        out.push(y);
                        x = y;
                    }
                    out
                }
            };
            let raw = denormalize(&normalized, &data.params)?;
            let mut date = *data.series.timestamps().last().expect("nonempty");
            raw.iter()
                .map(|predicted| {
                    date = next_business_day(date);
                    PredictionRow { date, actual: None, predicted: *predicted }
                })
                .collect()
        }
    };

    let path = config.out_dir.join("predictions.csv");
    std::fs::write(&path, serialize_predictions(&rows))?;
    println!("wrote {} rows -> {}", rows.len(), path.display());
    Ok(())
}

fn cmd_evaluate(matches: &ArgMatches) -> Result<()> {
    let config = resolve_config(matches)?;
    ensure_out_dir(&config)?;
    let path = matches.get_one::<String>("predictions").expect("required");
    let text = std::fs::read_to_string(path)?;
    let rows = parse_predictions(&text)?;
    let (actuals, predictions): (Vec<f64>, Vec<f64>) = rows
        .iter()
        .filter_map(|r| r.actual.map(|a| (a, r.predicted)))
        .unzip();
    let model_name = matches.get_one::<String>("model-name").expect("default");
    let report = evaluate(&actuals, &predictions, config.mape_epsilon)?
        .with_model_name(model_name)
        .with_scale(Scale::Raw);
    let json = serde_json::to_string_pretty(&report).expect("report json");
    std::fs::write(config.out_dir.join("report.json"), format!("{json}\n"))?;
    std::fs::write(config.out_dir.join("report.csv"), report.to_csv())?;
    println!("{json}");
    Ok(())
}

fn cmd_compare(matches: &ArgMatches) -> Result<()> {
    let config = resolve_config(matches)?;
    let output = run_compare(&config)?;
    ensure_out_dir(&config)?;

    let report_json =
        serde_json::to_string_pretty(&output.report).expect("report json") + "\n";
    std::fs::write(config.out_dir.join("compare_report.json"), &report_json)?;
    let timings_json =
        serde_json::to_string_pretty(&output.timings).expect("timings json") + "\n";
    std::fs::write(config.out_dir.join("timings.json"), timings_json)?;
    std::fs::write(
        config.out_dir.join("esn_predictions.csv"),
        serialize_predictions(&output.esn_predictions),
    )?;
    std::fs::write(
        config.out_dir.join("lstm_predictions.csv"),
        serialize_predictions(&output.lstm_predictions),
    )?;
    std::fs::write(
        config.out_dir.join("lstm_loss.csv"),
        serialize_loss_csv(&output.lstm_epoch_losses),
    )?;
    for (name, svg) in &output.charts {
        std::fs::write(config.out_dir.join(name), svg)?;
    }

    println!("{report_json}");
    eprintln!(
        "esn fit {:.3}s, lstm fit {:.3}s; outputs in {}",
        output.timings.esn_train_seconds,
        output.timings.lstm_train_seconds,
        config.out_dir.display()
    );
    Ok(())
}

// keep clippy happy about the unused import when building without tests
#[allow(unused)]
fn _unused(_: ArgAction) {}
