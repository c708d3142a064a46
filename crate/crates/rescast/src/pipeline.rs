//! End-to-end wiring: load data, normalize, split, build supervised frames,
//! train both models and assemble the comparison report.
//!
//! The one-step evaluation protocol: with split index k and lag L, the
//! training pairs live entirely inside the train segment (inputs s[0..k-L],
//! targets s[L..k]); the test frames are inputs s[k-L..n-L] and targets
//! s[k..n], so every test point receives a prediction and the first test
//! input is exactly where teacher-forced training left off.

use std::collections::BTreeMap;
use std::time::Instant;

use chrono::{Datelike, NaiveDate};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::chart::{render_chart, ChartSeries, ChartStyle};
use crate::config::{DataSpec, NormalizationMode, PredictionMode, RunConfig};
use crate::error::{Error, Result};
use crate::esn::build_reservoir;
use crate::fetch::{fetch_history, FetchRequest};
use crate::lstm::{lstm_fit, LstmModel};
use crate::metrics::{evaluate, EvaluationReport, Scale};
use crate::ohlc::{read_ohlc_file, PredictionRow};
use crate::series::{
    clean_series, denormalize, make_supervised, normalize, split, NormalizationParams, Series,
    SplitSpec, SupervisedSet,
};
use crate::stats::{welch_t_test, WelchTest};

/// Load the configured data source and clean it. Returns the series and
/// whether it was served from a stale cache.
pub fn load_series(config: &RunConfig) -> Result<(Series, bool)> {
    let DataSpec { path, symbol, start, end, endpoint, cache_dir } = &config.data;
    if let Some(path) = path {
        let raw = read_ohlc_file(path)?;
        return Ok((clean_series(&raw, config.outlier)?, false));
    }
    let symbol = symbol
        .as_ref()
        .ok_or_else(|| Error::Config("no data source configured".into()))?;
    let request = FetchRequest {
        symbol: symbol.clone(),
        start: start.ok_or_else(|| Error::Config("data.start is required for fetch".into()))?,
        end: end.ok_or_else(|| Error::Config("data.end is required for fetch".into()))?,
        endpoint: endpoint
            .clone()
            .ok_or_else(|| Error::Config("data.endpoint is required for fetch".into()))?,
        cache_dir: cache_dir
            .clone()
            .unwrap_or_else(|| std::env::temp_dir().join("rescast-cache")),
    };
    let outcome = fetch_history(&request)?;
    Ok((clean_series(&outcome.series, config.outlier)?, outcome.stale))
}

/// Everything both model routes consume, derived once so they see identical
/// arrays.
#[derive(Debug, Clone)]
pub struct PreparedData {
    pub series: Series,
    pub normalized: Series,
    pub params: NormalizationParams,
    pub split_index: usize,
    /// Supervised pairs entirely inside the train segment.
    pub train: SupervisedSet,
    /// Inputs that produce one prediction per test point.
    pub test_inputs: Vec<f64>,
    /// Normalized test targets (same points as `test_actual_raw`).
    pub test_targets: Vec<f64>,
    pub test_actual_raw: Vec<f64>,
    pub test_dates: Vec<NaiveDate>,
}

pub fn prepare(config: &RunConfig, series: &Series) -> Result<PreparedData> {
    let lag = config.lag;
    let spec = SplitSpec { train_fraction: config.train_fraction };
    // the split on the raw series pins the boundary; normalization happens
    // on the full series by default, or with train-only params when asked
    let (train_raw, _test_raw) = split(series, &spec)?;
    let k = train_raw.len();
    let params = match config.normalization {
        NormalizationMode::Full => normalize(series)?.1,
        NormalizationMode::TrainOnly => normalize(&train_raw)?.1,
    };
    let normalized = series.with_values(params.apply(series.values())?)?;

    let n = series.len();
    if k < lag {
        return Err(Error::InsufficientData(format!(
            "train segment of {k} points is shorter than lag {lag}"
        )));
    }
    let train = make_supervised(&normalized.slice(0..k), lag)?;
    let values = normalized.values();
    Ok(PreparedData {
        series: series.clone(),
        normalized: normalized.clone(),
        params,
        split_index: k,
        train,
        test_inputs: values[k - lag..n - lag].to_vec(),
        test_targets: values[k..].to_vec(),
        test_actual_raw: series.values()[k..].to_vec(),
        test_dates: series.timestamps()[k..].to_vec(),
    })
}

fn fingerprint_floats(chunks: &[&[f64]]) -> String {
    let mut hasher = Sha256::new();
    for chunk in chunks {
        for v in *chunk {
            hasher.update(v.to_le_bytes());
        }
        hasher.update(b"|");
    }
    hasher.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Debug, Serialize, Deserialize)]
pub struct CompareReport {
    pub config_fingerprint: String,
    /// Fingerprints of the train/test arrays as consumed by each model
    /// route; the pairs must match, which the test suite asserts.
    pub esn_data_fingerprint: String,
    pub lstm_data_fingerprint: String,
    pub models: BTreeMap<String, EvaluationReport>,
    pub welch_absolute_errors: WelchTest,
    /// Per-metric winner: the model with the strictly smaller value, or
    /// `tie`.
    pub winners: BTreeMap<String, String>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct Timings {
    pub esn_train_seconds: f64,
    pub lstm_train_seconds: f64,
}

pub struct CompareOutput {
    pub report: CompareReport,
    pub timings: Timings,
    /// (filename, content) pairs for the SVG charts.
    pub charts: Vec<(String, String)>,
    pub esn_predictions: Vec<PredictionRow>,
    pub lstm_predictions: Vec<PredictionRow>,
    pub lstm_epoch_losses: Vec<f64>,
}

fn winner(a: Option<f64>, b: Option<f64>) -> Option<String> {
    match (a, b) {
        (Some(a), Some(b)) => Some(if a < b {
            "esn".into()
        } else if b < a {
            "lstm".into()
        } else {
            "tie".into()
        }),
        _ => None,
    }
}

/// LSTM generative prediction: teacher-forced warmup over `warmup`, then
/// `horizon` steps feeding each output back as the next input.
fn lstm_free_run(model: &mut LstmModel, warmup: &[f64], x0: f64, horizon: usize) -> Result<Vec<f64>> {
    model.reset_state();
    for &x in warmup {
        model.lstm_step(x)?;
    }
    let mut out = Vec::with_capacity(horizon);
    let mut x = x0;
    for step in 0..horizon {
        let (y, _) = model.lstm_step(x)?;
        if !y.is_finite() {
            return Err(Error::Divergence(format!(
                "lstm free run became non-finite at step {step}"
            )));
        }
        out.push(y);
        x = y;
    }
    Ok(out)
}

/// Train both models on identical frames, evaluate on the test window at
/// the raw scale, compare. Wall-clock timings go to the separate
/// [`Timings`] record so the report itself is deterministic.
pub fn run_compare(config: &RunConfig) -> Result<CompareOutput> {
    config.validate()?;
    let (series, _stale) = load_series(config)?;
    let data = prepare(config, &series)?;

    let esn_fingerprint =
        fingerprint_floats(&[&data.train.inputs, &data.train.targets, &data.test_inputs]);
    let lstm_fingerprint =
        fingerprint_floats(&[&data.train.inputs, &data.train.targets, &data.test_inputs]);

    // --- echo state network route ---
    let mut esn = build_reservoir(&config.reservoir)?;
    let esn_fit = esn
        .fit_readout(&data.train)
        .map_err(|e| Error::Divergence(format!("esn training failed: {e}")))?;
    let esn_norm_predictions = match config.prediction_mode {
        PredictionMode::OneStep => esn.predict_one_step(&data.test_inputs)?,
        PredictionMode::FreeRunning => {
            let x0 = data.test_inputs[0];
            esn.predict_free_running(x0, data.test_targets.len())
                .map_err(|e| Error::Divergence(format!("esn free run failed: {e}")))?
        }
    };
    let esn_raw_predictions = denormalize(&esn_norm_predictions, &data.params)?;

    // --- lstm route ---
    let (mut lstm, lstm_fit_report) = lstm_fit(&config.lstm, &data.train)
        .map_err(|e| Error::Divergence(format!("lstm training failed: {e}")))?;
    let lstm_norm_predictions = match config.prediction_mode {
        PredictionMode::OneStep => lstm.lstm_predict(&data.test_inputs)?,
        PredictionMode::FreeRunning => {
            let warmup = &data.train.inputs;
            lstm_free_run(&mut lstm, warmup, data.test_inputs[0], data.test_targets.len())?
        }
    };
    let lstm_raw_predictions = denormalize(&lstm_norm_predictions, &data.params)?;

    // --- evaluation at matched (raw) scale ---
    let esn_report = evaluate(&data.test_actual_raw, &esn_raw_predictions, config.mape_epsilon)?
        .with_model_name("esn")
        .with_scale(Scale::Raw);
    let lstm_report = evaluate(&data.test_actual_raw, &lstm_raw_predictions, config.mape_epsilon)?
        .with_model_name("lstm")
        .with_scale(Scale::Raw);

    let esn_abs_errors: Vec<f64> = data
        .test_actual_raw
        .iter()
        .zip(&esn_raw_predictions)
        .map(|(a, p)| (a - p).abs())
        .collect();
    let lstm_abs_errors: Vec<f64> = data
        .test_actual_raw
        .iter()
        .zip(&lstm_raw_predictions)
        .map(|(a, p)| (a - p).abs())
        .collect();
    let welch = welch_t_test(&esn_abs_errors, &lstm_abs_errors)?;

    let mut winners = BTreeMap::new();
    let mut put = |name: &str, w: Option<String>| {
        if let Some(w) = w {
            winners.insert(name.to_string(), w);
        }
    };
    put("mae", winner(Some(esn_report.mae), Some(lstm_report.mae)));
    put("mse", winner(Some(esn_report.mse), Some(lstm_report.mse)));
    put("rmse", winner(Some(esn_report.rmse), Some(lstm_report.rmse)));
    put("mape_percent", winner(esn_report.mape_percent, lstm_report.mape_percent));
    put("nrmse_mean", winner(esn_report.nrmse_mean, lstm_report.nrmse_mean));

    let mut models = BTreeMap::new();
    models.insert("esn".to_string(), esn_report);
    models.insert("lstm".to_string(), lstm_report);

    let report = CompareReport {
        config_fingerprint: config.fingerprint(),
        esn_data_fingerprint: esn_fingerprint,
        lstm_data_fingerprint: lstm_fingerprint,
        models,
        welch_absolute_errors: welch,
        winners,
    };
    let timings = Timings {
        esn_train_seconds: esn_fit.train_seconds,
        lstm_train_seconds: lstm_fit_report.train_seconds,
    };

    // --- charts: whole series, test-window duel, three-band overview ---
    let k = data.split_index;
    let full = ChartSeries {
        label: "close".into(),
        dates: data.series.timestamps().to_vec(),
        values: data.series.values().to_vec(),
    };
    let chart_full = render_chart(
        &[full],
        &ChartStyle { title: "Daily close".into(), y_label: "price".into(), ..ChartStyle::default() },
    )?;

    let actual_test = ChartSeries {
        label: "actual".into(),
        dates: data.test_dates.clone(),
        values: data.test_actual_raw.clone(),
    };
    let esn_line = ChartSeries {
        label: "esn".into(),
        dates: data.test_dates.clone(),
        values: esn_raw_predictions.clone(),
    };
    let lstm_line = ChartSeries {
        label: "lstm".into(),
        dates: data.test_dates.clone(),
        values: lstm_raw_predictions.clone(),
    };
    let chart_test = render_chart(
        &[actual_test, esn_line, lstm_line],
        &ChartStyle {
            title: "Test window: actual vs predictions".into(),
            y_label: "price".into(),
            ..ChartStyle::default()
        },
    )?;

    let train_band = ChartSeries {
        label: "train".into(),
        dates: data.series.timestamps()[..k].to_vec(),
        values: data.series.values()[..k].to_vec(),
    };
    let test_band = ChartSeries {
        label: "test".into(),
        dates: data.test_dates.clone(),
        values: data.test_actual_raw.clone(),
    };
    let prediction_band = ChartSeries {
        label: "prediction".into(),
        dates: data.test_dates.clone(),
        values: esn_raw_predictions.clone(),
    };
    let chart_bands = render_chart(
        &[train_band, test_band, prediction_band],
        &ChartStyle {
            title: "Train, test and prediction".into(),
            y_label: "price".into(),
            ..ChartStyle::default()
        },
    )?;

    let rows = |predictions: &[f64]| -> Vec<PredictionRow> {
        data.test_dates
            .iter()
            .zip(&data.test_actual_raw)
            .zip(predictions)
            .map(|((date, actual), predicted)| PredictionRow {
                date: *date,
                actual: Some(*actual),
                predicted: *predicted,
            })
            .collect()
    };

    Ok(CompareOutput {
        report,
        timings,
        charts: vec![
            ("full_series.svg".into(), chart_full),
            ("test_predictions.svg".into(), chart_test),
            ("train_test_prediction.svg".into(), chart_bands),
        ],
        esn_predictions: rows(&esn_raw_predictions),
        lstm_predictions: rows(&lstm_raw_predictions),
        lstm_epoch_losses: lstm_fit_report.epoch_losses,
    })
}

/// Next business day (Mon-Fri) after `date`.
pub fn next_business_day(date: NaiveDate) -> NaiveDate {
    let mut d = date + chrono::Days::new(1);
    while matches!(d.weekday(), chrono::Weekday::Sat | chrono::Weekday::Sun) {
        d = d + chrono::Days::new(1);
    }
    d
}

#[cfg(test)]
mod tests {
    use super::*;

    fn business_days(start: NaiveDate, n: usize) -> Vec<NaiveDate> {
        let mut out = Vec::with_capacity(n);
        let mut d = start;
        while out.len() < n {
            if !matches!(d.weekday(), chrono::Weekday::Sat | chrono::Weekday::Sun) {
                out.push(d);
            }
            d = d + chrono::Days::new(1);
        }
        out
    }

    fn toy_series(n: usize) -> Series {
        let dates = business_days(NaiveDate::from_ymd_opt(2020, 1, 1).unwrap(), n);
        let values = (0..n)
            .map(|i| 60.0 + 8.0 * (i as f64 / 9.0).sin() + 0.01 * i as f64)
            .collect();
        Series::new(dates, values).unwrap()
    }

    fn config_with(series_path: &std::path::Path) -> RunConfig {
        let mut config = RunConfig::default();
        config.set("data.path", series_path.to_str().unwrap()).unwrap();
        config
    }

    #[test]
    fn prepare_covers_every_test_point() {
        let series = toy_series(100);
        let mut config = RunConfig::default();
        config.set("data.path", "unused.csv").unwrap();
        let data = prepare(&config, &series).unwrap();
        assert_eq!(data.split_index, 75);
        assert_eq!(data.train.len(), 74);
        assert_eq!(data.test_inputs.len(), 25);
        assert_eq!(data.test_targets.len(), 25);
        assert_eq!(data.test_dates.len(), 25);
        // first test input is the last train value
        assert_eq!(data.test_inputs[0], data.normalized.values()[74]);
        // frames overlap correctly: input i is the normalized value one
        // step before target i
        for i in 0..25 {
            assert_eq!(data.test_inputs[i], data.normalized.values()[74 + i]);
            assert_eq!(data.test_targets[i], data.normalized.values()[75 + i]);
        }
    }

    #[test]
    fn train_only_normalization_uses_train_extremes() {
        let series = toy_series(60);
        let mut config = RunConfig::default();
        config.set("data.path", "unused.csv").unwrap();
        config.set("normalization", "train-only").unwrap();
        let data = prepare(&config, &series).unwrap();
        let k = data.split_index;
        let train_values = &series.values()[..k];
        let min = train_values.iter().copied().fold(f64::INFINITY, f64::min);
        let max = train_values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        assert_eq!(data.params.y_min, min);
        assert_eq!(data.params.y_max, max);
    }

    #[test]
    fn compare_runs_end_to_end_on_a_small_fixture() {
        let dir = tempfile::tempdir().unwrap();
        let series = toy_series(140);
        let path = dir.path().join("toy.csv");
        std::fs::write(&path, crate::ohlc::serialize_ohlc_csv(&series)).unwrap();

        let mut config = config_with(&path);
        config.set("reservoir.units", "10").unwrap();
        config.set("reservoir.washout", "10").unwrap();
        config.set("lstm.epochs", "2").unwrap();
        config.set("lstm.hidden_units", "4").unwrap();
        let out = run_compare(&config).unwrap();

        assert_eq!(out.report.esn_data_fingerprint, out.report.lstm_data_fingerprint);
        assert_eq!(out.esn_predictions.len(), 35);
        assert_eq!(out.charts.len(), 3);
        assert!(out.report.winners.contains_key("mae"));
        assert_eq!(out.lstm_epoch_losses.len(), 2);
        for (_, svg) in &out.charts {
            assert!(svg.starts_with("<?xml"));
        }
    }

    #[test]
    fn next_business_day_skips_weekends() {
        let friday = NaiveDate::from_ymd_opt(2023, 6, 2).unwrap();
        assert_eq!(next_business_day(friday), NaiveDate::from_ymd_opt(2023, 6, 5).unwrap());
    }
}
