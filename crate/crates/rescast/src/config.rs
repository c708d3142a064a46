//! Run configuration: one flat, commented, key-value file with dotted keys
//! (`reservoir.leak_rate = 0.75`). Every key can also be supplied as a CLI
//! flag of the same dotted name; flags win over the file. The reservoir
//! keys use the same leaf names as the reference parameter block (`units`,
//! `leak_rate`, `rho`, `input_scaling`, `rc_connectivity`,
//! `input_connectivity`, `fb_connectivity`, `regularization_coef`).

use std::collections::BTreeMap;
use std::path::PathBuf;

use chrono::NaiveDate;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::esn::ReservoirConfig;
use crate::lstm::{LstmConfig, OptimizerKind};
use crate::series::OutlierPolicy;

#[derive(Debug, Clone, PartialEq)]
pub enum NormalizationMode {
    Full,
    TrainOnly,
}

#[derive(Debug, Clone, PartialEq)]
pub enum PredictionMode {
    OneStep,
    FreeRunning,
}

/// Where the input series comes from: a local CSV or a fetch spec. Exactly
/// one must be configured by the time data is loaded.
#[derive(Debug, Clone, Default)]
pub struct DataSpec {
    pub path: Option<PathBuf>,
    pub symbol: Option<String>,
    pub start: Option<NaiveDate>,
    pub end: Option<NaiveDate>,
    pub endpoint: Option<String>,
    pub cache_dir: Option<PathBuf>,
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub data: DataSpec,
    pub train_fraction: f64,
    pub lag: usize,
    pub normalization: NormalizationMode,
    pub outlier: OutlierPolicy,
    pub reservoir: ReservoirConfig,
    pub lstm: LstmConfig,
    pub mape_epsilon: f64,
    pub out_dir: PathBuf,
    pub prediction_mode: PredictionMode,
    pub horizon: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            data: DataSpec::default(),
            train_fraction: 0.75,
            lag: 1,
            normalization: NormalizationMode::Full,
            outlier: OutlierPolicy::None,
            reservoir: ReservoirConfig::default(),
            lstm: LstmConfig::default(),
            mape_epsilon: 1e-8,
            out_dir: PathBuf::from("out"),
            prediction_mode: PredictionMode::OneStep,
            horizon: 10,
        }
    }
}

/// Every key a config file or dotted CLI flag may set.
pub const OVERRIDABLE_KEYS: &[&str] = &[
    "data.path",
    "data.symbol",
    "data.start",
    "data.end",
    "data.endpoint",
    "data.cache_dir",
    "split.train_fraction",
    "lag",
    "normalization",
    "outlier.policy",
    "outlier.zscore_k",
    "mape_epsilon",
    "prediction.mode",
    "prediction.horizon",
    "out.dir",
    "reservoir.units",
    "reservoir.leak_rate",
    "reservoir.rho",
    "reservoir.input_scaling",
    "reservoir.rc_connectivity",
    "reservoir.input_connectivity",
    "reservoir.fb_connectivity",
    "reservoir.regularization_coef",
    "reservoir.washout",
    "reservoir.seed",
    "reservoir.feedback_enabled",
    "lstm.hidden_units",
    "lstm.epochs",
    "lstm.learning_rate",
    "lstm.bptt_window",
    "lstm.seed",
    "lstm.optimizer",
];

fn unquote(value: &str) -> &str {
    let v = value.trim();
    if v.len() >= 2 && ((v.starts_with('"') && v.ends_with('"')) || (v.starts_with('\'') && v.ends_with('\''))) {
        &v[1..v.len() - 1]
    } else {
        v
    }
}

/// Parse the flat key-value format: `key = value` lines, `#` comments,
/// blank lines ignored. Later occurrences of a key win.
pub fn parse_config_text(text: &str) -> Result<BTreeMap<String, String>> {
    let mut map = BTreeMap::new();
    for (line_no, raw_line) in text.lines().enumerate() {
        let line = match raw_line.find('#') {
            Some(idx) => &raw_line[..idx],
            None => raw_line,
        };
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let Some(eq) = line.find('=') else {
            return Err(Error::Config(format!(
                "line {}: expected `key = value`, got `{line}`",
                line_no + 1
            )));
        };
        let key = line[..eq].trim().to_string();
        let value = unquote(&line[eq + 1..]).to_string();
        if key.is_empty() {
            return Err(Error::Config(format!("line {}: empty key", line_no + 1)));
        }
        map.insert(key, value);
    }
    Ok(map)
}

impl RunConfig {
    pub fn from_file(path: &std::path::Path) -> Result<RunConfig> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        let map = parse_config_text(&text)?;
        let mut config = RunConfig::default();
        config.apply_map(&map)?;
        Ok(config)
    }

    pub fn apply_map(&mut self, map: &BTreeMap<String, String>) -> Result<()> {
        for (key, value) in map {
            self.set(key, value)?;
        }
        Ok(())
    }

    /// Set one dotted key from its string form, with field-level messages.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T>
        where
            T::Err: std::fmt::Display,
        {
            value
                .parse()
                .map_err(|e| Error::Config(format!("{key}: cannot parse `{value}`: {e}")))
        }
        fn parse_date(key: &str, value: &str) -> Result<NaiveDate> {
            NaiveDate::parse_from_str(value, "%Y-%m-%d")
                .map_err(|e| Error::Config(format!("{key}: cannot parse `{value}`: {e}")))
        }

        match key {
            "data.path" => self.data.path = Some(PathBuf::from(value)),
            "data.symbol" => self.data.symbol = Some(value.to_string()),
            "data.start" => self.data.start = Some(parse_date(key, value)?),
            "data.end" => self.data.end = Some(parse_date(key, value)?),
            "data.endpoint" => self.data.endpoint = Some(value.to_string()),
            "data.cache_dir" => self.data.cache_dir = Some(PathBuf::from(value)),
            "split.train_fraction" => self.train_fraction = parse(key, value)?,
            "lag" => self.lag = parse(key, value)?,
            "normalization" => {
                self.normalization = match value {
                    "full" => NormalizationMode::Full,
                    "train-only" => NormalizationMode::TrainOnly,
                    other => {
                        return Err(Error::Config(format!(
                            "normalization: expected `full` or `train-only`, got `{other}`"
                        )))
                    }
                }
            }
            "outlier.policy" => {
                self.outlier = match value {
                    "none" => OutlierPolicy::None,
                    "zscore" => match self.outlier {
                        OutlierPolicy::ZScore(k) => OutlierPolicy::ZScore(k),
                        OutlierPolicy::None => OutlierPolicy::ZScore(3.0),
                    },
                    other => {
                        return Err(Error::Config(format!(
                            "outlier.policy: expected `none` or `zscore`, got `{other}`"
                        )))
                    }
                }
            }
            "outlier.zscore_k" => {
                let k: f64 = parse(key, value)?;
                self.outlier = OutlierPolicy::ZScore(k);
            }
            "mape_epsilon" => self.mape_epsilon = parse(key, value)?,
            "prediction.mode" => {
                self.prediction_mode = match value {
                    "one-step" => PredictionMode::OneStep,
                    "free-running" => PredictionMode::FreeRunning,
                    other => {
                        return Err(Error::Config(format!(
                            "prediction.mode: expected `one-step` or `free-running`, got `{other}`"
                        )))
                    }
                }
            }
            "prediction.horizon" => self.horizon = parse(key, value)?,
            "out.dir" => self.out_dir = PathBuf::from(value),
            "reservoir.units" => self.reservoir.units = parse(key, value)?,
            "reservoir.leak_rate" => self.reservoir.leak_rate = parse(key, value)?,
            "reservoir.rho" => self.reservoir.spectral_radius = parse(key, value)?,
            "reservoir.input_scaling" => self.reservoir.input_scaling = parse(key, value)?,
            "reservoir.rc_connectivity" => self.reservoir.rc_connectivity = parse(key, value)?,
            "reservoir.input_connectivity" => {
                self.reservoir.input_connectivity = parse(key, value)?
            }
            "reservoir.fb_connectivity" => self.reservoir.fb_connectivity = parse(key, value)?,
            "reservoir.regularization_coef" => {
                self.reservoir.regularization_coef = parse(key, value)?
            }
            "reservoir.washout" => self.reservoir.washout = parse(key, value)?,
            "reservoir.seed" => self.reservoir.seed = parse(key, value)?,
            "reservoir.feedback_enabled" => self.reservoir.feedback_enabled = parse(key, value)?,
            "lstm.hidden_units" => self.lstm.hidden_units = parse(key, value)?,
            "lstm.epochs" => self.lstm.epochs = parse(key, value)?,
            "lstm.learning_rate" => self.lstm.learning_rate = parse(key, value)?,
            "lstm.bptt_window" => self.lstm.bptt_window = parse(key, value)?,
            "lstm.seed" => self.lstm.seed = parse(key, value)?,
            "lstm.optimizer" => {
                self.lstm.optimizer = match value {
                    "plain-gradient" => OptimizerKind::PlainGradient,
                    "adaptive-moments" => OptimizerKind::AdaptiveMoments,
                    other => {
                        return Err(Error::Config(format!(
                            "lstm.optimizer: expected `plain-gradient` or `adaptive-moments`, got `{other}`"
                        )))
                    }
                }
            }
            other => return Err(Error::Config(format!("unknown config key `{other}`"))),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(Error::Config(format!(
                "split.train_fraction must be in (0, 1), got {}",
                self.train_fraction
            )));
        }
        if self.lag == 0 {
            return Err(Error::Config("lag must be positive".into()));
        }
        if self.horizon == 0 {
            return Err(Error::Config("prediction.horizon must be positive".into()));
        }
        self.reservoir.validate()?;
        self.lstm.validate()?;
        let has_path = self.data.path.is_some();
        let has_fetch = self.data.symbol.is_some();
        if has_path && has_fetch {
            return Err(Error::Config(
                "configure either data.path or data.symbol, not both".into(),
            ));
        }
        if !has_path && !has_fetch {
            return Err(Error::Config(
                "no data source: set data.path or data.symbol".into(),
            ));
        }
        Ok(())
    }

    /// Canonical key-value view of the fully resolved config, used for the
    /// fingerprint and for display.
    pub fn to_map(&self) -> BTreeMap<String, String> {
        let mut map = BTreeMap::new();
        let mut put = |k: &str, v: String| {
            map.insert(k.to_string(), v);
        };
        if let Some(path) = &self.data.path {
            put("data.path", path.display().to_string());
        }
        if let Some(symbol) = &self.data.symbol {
            put("data.symbol", symbol.clone());
        }
        if let Some(start) = &self.data.start {
            put("data.start", start.to_string());
        }
        if let Some(end) = &self.data.end {
            put("data.end", end.to_string());
        }
        if let Some(endpoint) = &self.data.endpoint {
            put("data.endpoint", endpoint.clone());
        }
        if let Some(dir) = &self.data.cache_dir {
            put("data.cache_dir", dir.display().to_string());
        }
        put("split.train_fraction", self.train_fraction.to_string());
        put("lag", self.lag.to_string());
        put(
            "normalization",
            match self.normalization {
                NormalizationMode::Full => "full".into(),
                NormalizationMode::TrainOnly => "train-only".into(),
            },
        );
        match self.outlier {
            OutlierPolicy::None => put("outlier.policy", "none".into()),
            OutlierPolicy::ZScore(k) => {
                put("outlier.policy", "zscore".into());
                put("outlier.zscore_k", k.to_string());
            }
        }
        put("mape_epsilon", self.mape_epsilon.to_string());
        put(
            "prediction.mode",
            match self.prediction_mode {
                PredictionMode::OneStep => "one-step".into(),
                PredictionMode::FreeRunning => "free-running".into(),
            },
        );
        put("prediction.horizon", self.horizon.to_string());
        put("out.dir", self.out_dir.display().to_string());
        let r = &self.reservoir;
        put("reservoir.units", r.units.to_string());
        put("reservoir.leak_rate", r.leak_rate.to_string());
        put("reservoir.rho", r.spectral_radius.to_string());
        put("reservoir.input_scaling", r.input_scaling.to_string());
        put("reservoir.rc_connectivity", r.rc_connectivity.to_string());
        put("reservoir.input_connectivity", r.input_connectivity.to_string());
        put("reservoir.fb_connectivity", r.fb_connectivity.to_string());
        put("reservoir.regularization_coef", r.regularization_coef.to_string());
        put("reservoir.washout", r.washout.to_string());
        put("reservoir.seed", r.seed.to_string());
        put("reservoir.feedback_enabled", r.feedback_enabled.to_string());
        let l = &self.lstm;
        put("lstm.hidden_units", l.hidden_units.to_string());
        put("lstm.epochs", l.epochs.to_string());
        put("lstm.learning_rate", l.learning_rate.to_string());
        put("lstm.bptt_window", l.bptt_window.to_string());
        put("lstm.seed", l.seed.to_string());
        put(
            "lstm.optimizer",
            match l.optimizer {
                OptimizerKind::PlainGradient => "plain-gradient".into(),
                OptimizerKind::AdaptiveMoments => "adaptive-moments".into(),
            },
        );
        map
    }

    /// SHA-256 over the canonical `key=value` listing; changes iff any
    /// config field changes.
    pub fn fingerprint(&self) -> String {
        let mut hasher = Sha256::new();
        for (k, v) in self.to_map() {
            hasher.update(k.as_bytes());
            hasher.update(b"=");
            hasher.update(v.as_bytes());
            hasher.update(b"\n");
        }
        let digest = hasher.finalize();
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_flat_dotted_keys_with_comments() {
        let text = "\
# reservoir block pasted from the reference configuration
reservoir.units = 20
reservoir.leak_rate = 0.75   # leaky integrator
reservoir.rho = 1.025
data.path = fixtures/prices.csv
lstm.optimizer = plain-gradient
";
        let map = parse_config_text(text).unwrap();
        let mut config = RunConfig::default();
        config.apply_map(&map).unwrap();
        assert_eq!(config.reservoir.units, 20);
        assert_eq!(config.reservoir.spectral_radius, 1.025);
        assert_eq!(config.lstm.optimizer, OptimizerKind::PlainGradient);
        assert_eq!(config.data.path, Some(PathBuf::from("fixtures/prices.csv")));
    }

    #[test]
    fn unknown_key_is_named_in_the_error() {
        let mut config = RunConfig::default();
        let err = config.set("reservoir.typo", "1").unwrap_err();
        assert!(err.to_string().contains("reservoir.typo"));
    }

    #[test]
    fn bad_value_is_field_level() {
        let mut config = RunConfig::default();
        let err = config.set("reservoir.leak_rate", "fast").unwrap_err();
        assert!(err.to_string().contains("reservoir.leak_rate"));
    }

    #[test]
    fn validate_requires_exactly_one_source() {
        let mut config = RunConfig::default();
        assert!(config.validate().is_err());
        config.set("data.path", "x.csv").unwrap();
        assert!(config.validate().is_ok());
        config.set("data.symbol", "CL=F").unwrap();
        assert!(config.validate().is_err());
    }

    #[test]
    fn fingerprint_changes_iff_config_changes() {
        let mut a = RunConfig::default();
        a.set("data.path", "x.csv").unwrap();
        let mut b = RunConfig::default();
        b.set("data.path", "x.csv").unwrap();
        assert_eq!(a.fingerprint(), b.fingerprint());
        b.set("reservoir.seed", "43").unwrap();
        assert_ne!(a.fingerprint(), b.fingerprint());
    }

    #[test]
    fn every_overridable_key_is_settable() {
        let mut config = RunConfig::default();
        for key in OVERRIDABLE_KEYS {
            let value = match *key {
                "data.path" => "x.csv",
                "data.symbol" => "CL=F",
                "data.start" | "data.end" => "2020-01-01",
                "data.endpoint" => "http://localhost/{symbol}",
                "data.cache_dir" | "out.dir" => "somewhere",
                "normalization" => "train-only",
                "outlier.policy" => "zscore",
                "prediction.mode" => "free-running",
                "lstm.optimizer" => "plain-gradient",
                "reservoir.feedback_enabled" => "true",
                "split.train_fraction" | "reservoir.leak_rate" | "reservoir.rho"
                | "reservoir.input_scaling" | "reservoir.rc_connectivity"
                | "reservoir.input_connectivity" | "reservoir.fb_connectivity"
                | "reservoir.regularization_coef" | "lstm.learning_rate" | "mape_epsilon"
                | "outlier.zscore_k" => "0.5",
                _ => "7",
            };
            config.set(key, value).unwrap_or_else(|e| panic!("{key}: {e}"));
        }
    }
}
