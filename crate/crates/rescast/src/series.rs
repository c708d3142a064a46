//! Core time-series types and the preprocessing pipeline: cleaning,
//! min-max normalization, chronological splitting and one-step-ahead
//! supervised pair construction.

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A dated univariate price series. Timestamps are strictly increasing and
/// every value is finite.
#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    timestamps: Vec<NaiveDate>,
    values: Vec<f64>,
}

impl Series {
    pub fn new(timestamps: Vec<NaiveDate>, values: Vec<f64>) -> Result<Self> {
        if timestamps.len() != values.len() {
            return Err(Error::Shape(format!(
                "{} timestamps vs {} values",
                timestamps.len(),
                values.len()
            )));
        }
        for pair in timestamps.windows(2) {
            if pair[1] <= pair[0] {
                return Err(Error::Shape(format!(
                    "timestamps not strictly increasing at {}",
                    pair[1]
                )));
            }
        }
        if let Some(v) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::NonFiniteInput(format!("series value {v}")));
        }
        Ok(Series { timestamps, values })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn timestamps(&self) -> &[NaiveDate] {
        &self.timestamps
    }

    /// Sub-series over `range` (panics on out-of-bounds, like slicing).
    pub fn slice(&self, range: std::ops::Range<usize>) -> Series {
        Series {
            timestamps: self.timestamps[range.clone()].to_vec(),
            values: self.values[range].to_vec(),
        }
    }

    /// Same timestamps, new values.
    pub fn with_values(&self, values: Vec<f64>) -> Result<Series> {
        Series::new(self.timestamps.clone(), values)
    }
}

/// A parsed series that may still contain missing values. Produced by the
/// CSV reader, consumed by [`clean_series`].
#[derive(Debug, Clone)]
pub struct RawSeries {
    pub timestamps: Vec<NaiveDate>,
    pub values: Vec<Option<f64>>,
}

impl RawSeries {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// The (min, max) pair recorded by [`normalize`] so raw-scale values can be
/// recovered with [`denormalize`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormalizationParams {
    pub y_min: f64,
    pub y_max: f64,
}

impl NormalizationParams {
    pub fn range(&self) -> f64 {
        self.y_max - self.y_min
    }

    fn validate(&self) -> Result<()> {
        if !(self.y_max > self.y_min) {
            return Err(Error::DegenerateRange(self.y_min));
        }
        Ok(())
    }

    /// Map raw values through (v - min) / (max - min). Values outside
    /// [min, max] map outside [0, 1]; used by the train-only normalization
    /// mode where test data may exceed the training range.
    pub fn apply(&self, values: &[f64]) -> Result<Vec<f64>> {
        self.validate()?;
        let range = self.range();
        Ok(values.iter().map(|v| (v - self.y_min) / range).collect())
    }
}

/// Chronological train/test split ratio.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train_fraction: f64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        SplitSpec { train_fraction: 0.75 }
    }
}

/// One-step-ahead supervised pairs: `targets[i]` is the series value `lag`
/// steps after `inputs[i]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SupervisedSet {
    pub inputs: Vec<f64>,
    pub targets: Vec<f64>,
    pub lag: usize,
}

impl SupervisedSet {
    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }
}

/// Outlier handling for [`clean_series`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum OutlierPolicy {
    None,
    /// Treat a value as an outlier when its leave-one-out z-score exceeds k,
    /// i.e. |v - mean(rest)| / std(rest) > k. The plain all-points z-score is
    /// bounded by (n-1)/sqrt(n) and can never flag a single extreme point in
    /// a small sample, so each point is scored against the others.
    ZScore(f64),
}

/// Replace missing values by forward fill (leading gap back-filled) and,
/// under `ZScore(k)`, treat outliers as missing first. Output length equals
/// input length and contains no missing values.
pub fn clean_series(raw: &RawSeries, policy: OutlierPolicy) -> Result<Series> {
    let present: Vec<f64> = raw.values.iter().filter_map(|v| *v).collect();
    if present.is_empty() {
        return Err(Error::EmptySeries("all values missing".into()));
    }
    if present.len() < 2 {
        return Err(Error::InsufficientData(
            "cleaning needs at least 2 non-missing values".into(),
        ));
    }

    let mut values = raw.values.clone();
    if let OutlierPolicy::ZScore(k) = policy {
        let kept: Vec<(usize, f64)> = values
            .iter()
            .enumerate()
            .filter_map(|(i, v)| v.map(|v| (i, v)))
            .collect();
        if kept.len() >= 3 {
            for &(i, v) in &kept {
                let rest: Vec<f64> =
                    kept.iter().filter(|(j, _)| *j != i).map(|(_, v)| *v).collect();
                let n = rest.len() as f64;
                let mean = rest.iter().sum::<f64>() / n;
                let var = rest.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
                let std = var.sqrt();
                if std > 0.0 && ((v - mean).abs() / std) > k {
                    values[i] = None;
                }
            }
        }
        if values.iter().all(|v| v.is_none()) {
            return Err(Error::EmptySeries("all values flagged as outliers".into()));
        }
    }

    // forward fill, back-filling a leading gap with the first present value
    let first = values.iter().flatten().next().copied().unwrap();
    let mut filled = Vec::with_capacity(values.len());
    let mut last = first;
    for v in &values {
        if let Some(v) = v {
            last = *v;
        }
        filled.push(last);
    }

    Series::new(raw.timestamps.clone(), filled)
}

/// Min-max normalize to [0, 1]: (v - min) / (max - min). The observed min
/// maps to 0 and the max to 1; returns the params needed for inversion.
pub fn normalize(series: &Series) -> Result<(Series, NormalizationParams)> {
    if series.is_empty() {
        return Err(Error::EmptySeries("cannot normalize an empty series".into()));
    }
    let y_min = series.values().iter().copied().fold(f64::INFINITY, f64::min);
    let y_max = series.values().iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !(y_max > y_min) {
        return Err(Error::DegenerateRange(y_min));
    }
    let params = NormalizationParams { y_min, y_max };
    let normalized = series.with_values(params.apply(series.values())?)?;
    Ok((normalized, params))
}

/// Exact algebraic inverse of [`normalize`]: v * (max - min) + min.
pub fn denormalize(values: &[f64], params: &NormalizationParams) -> Result<Vec<f64>> {
    params.validate()?;
    let range = params.range();
    Ok(values.iter().map(|v| v * range + params.y_min).collect())
}

/// Chronological split: train takes the first floor(fraction * n) points,
/// test the remainder. Concatenation reproduces the input exactly.
pub fn split(series: &Series, spec: &SplitSpec) -> Result<(Series, Series)> {
    if !(spec.train_fraction > 0.0 && spec.train_fraction < 1.0) {
        return Err(Error::Config(format!(
            "split.train_fraction must be in (0, 1), got {}",
            spec.train_fraction
        )));
    }
    let n = series.len();
    if n < 4 {
        return Err(Error::InsufficientData(format!(
            "split needs at least 4 points, got {n}"
        )));
    }
    let idx = (spec.train_fraction * n as f64).floor() as usize;
    if idx == 0 || idx >= n {
        return Err(Error::InsufficientData(format!(
            "split index {idx} leaves an empty partition for length {n}"
        )));
    }
    Ok((series.slice(0..idx), series.slice(idx..n)))
}

/// Build lag-step supervised pairs: inputs[i] = s[i], targets[i] = s[i+lag].
pub fn make_supervised(series: &Series, lag: usize) -> Result<SupervisedSet> {
    if lag == 0 {
        return Err(Error::Config("lag must be positive".into()));
    }
    let n = series.len();
    if n <= lag {
        return Err(Error::InsufficientData(format!(
            "need more than lag={lag} points, got {n}"
        )));
    }
    let values = series.values();
    Ok(SupervisedSet {
        inputs: values[..n - lag].to_vec(),
        targets: values[lag..].to_vec(),
        lag,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dates(n: usize) -> Vec<NaiveDate> {
        let start = NaiveDate::from_ymd_opt(2020, 1, 1).unwrap();
        (0..n).map(|i| start + chrono::Days::new(i as u64)).collect()
    }

    fn series(values: &[f64]) -> Series {
        Series::new(dates(values.len()), values.to_vec()).unwrap()
    }

    fn raw(values: &[Option<f64>]) -> RawSeries {
        RawSeries { timestamps: dates(values.len()), values: values.to_vec() }
    }

    #[test]
    fn series_rejects_unsorted_timestamps() {
        let mut ts = dates(3);
        ts.swap(0, 1);
        assert!(Series::new(ts, vec![1.0, 2.0, 3.0]).is_err());
    }

    #[test]
    fn clean_forward_fills_gap() {
        let s = clean_series(&raw(&[Some(70.0), None, Some(72.0)]), OutlierPolicy::None).unwrap();
        assert_eq!(s.values(), &[70.0, 70.0, 72.0]);
    }

    #[test]
    fn clean_backfills_leading_gap() {
        let s = clean_series(&raw(&[None, Some(70.0), Some(71.0)]), OutlierPolicy::None).unwrap();
        assert_eq!(s.values(), &[70.0, 70.0, 71.0]);
    }

    #[test]
    fn clean_zscore_replaces_extreme_point() {
        // leave-one-out stats for 5000: rest = [70, 71, 72], mean 71, std 1,
        // so z = 4929 > 3; forward fill takes the preceding 71
        let s = clean_series(
            &raw(&[Some(70.0), Some(71.0), Some(5000.0), Some(72.0)]),
            OutlierPolicy::ZScore(3.0),
        )
        .unwrap();
        assert_eq!(s.values(), &[70.0, 71.0, 71.0, 72.0]);
    }

    #[test]
    fn clean_errors_when_all_missing() {
        assert!(matches!(
            clean_series(&raw(&[None, None]), OutlierPolicy::None),
            Err(Error::EmptySeries(_))
        ));
    }

    #[test]
    fn clean_is_idempotent_on_clean_series() {
        let s = series(&[70.0, 71.0, 69.5, 72.0]);
        let raw = RawSeries {
            timestamps: s.timestamps().to_vec(),
            values: s.values().iter().map(|v| Some(*v)).collect(),
        };
        let cleaned = clean_series(&raw, OutlierPolicy::None).unwrap();
        assert_eq!(cleaned, s);
    }

    #[test]
    fn normalize_maps_min_max_to_unit_interval() {
        let (n, p) = normalize(&series(&[10.0, 20.0, 30.0])).unwrap();
        assert_eq!(n.values(), &[0.0, 0.5, 1.0]);
        assert_eq!(p, NormalizationParams { y_min: 10.0, y_max: 30.0 });
    }

    #[test]
    fn normalize_handles_negative_min() {
        let (n, _) = normalize(&series(&[-37.63, 0.0, 37.63])).unwrap();
        assert_eq!(n.values(), &[0.0, 0.5, 1.0]);
    }

    #[test]
    fn normalize_rejects_constant_series() {
        assert!(matches!(
            normalize(&series(&[42.0])),
            Err(Error::DegenerateRange(_))
        ));
    }

    #[test]
    fn denormalize_inverts_normalize() {
        let p = NormalizationParams { y_min: 10.0, y_max: 30.0 };
        assert_eq!(denormalize(&[0.0, 0.5, 1.0], &p).unwrap(), vec![10.0, 20.0, 30.0]);
        assert_eq!(denormalize(&[], &p).unwrap(), Vec::<f64>::new());
    }

    #[test]
    fn split_uses_floor_and_keeps_order() {
        let s = series(&[1.0, 2.0, 3.0, 4.0, 5.0]);
        let (train, test) = split(&s, &SplitSpec::default()).unwrap();
        assert_eq!(train.len(), 3);
        assert_eq!(test.len(), 2);
        assert_eq!(train.values(), &[1.0, 2.0, 3.0]);
        assert_eq!(test.values(), &[4.0, 5.0]);
    }

    #[test]
    fn split_hundred_points() {
        let values: Vec<f64> = (0..100).map(|i| i as f64).collect();
        let (train, test) = split(&series(&values), &SplitSpec::default()).unwrap();
        assert_eq!((train.len(), test.len()), (75, 25));
    }

    #[test]
    fn split_rejects_bad_fraction() {
        let s = series(&[1.0, 2.0, 3.0, 4.0]);
        assert!(matches!(
            split(&s, &SplitSpec { train_fraction: 1.5 }),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn supervised_pairs_lag_one_and_two() {
        let s = series(&[1.0, 2.0, 3.0, 4.0]);
        let one = make_supervised(&s, 1).unwrap();
        assert_eq!(one.inputs, vec![1.0, 2.0, 3.0]);
        assert_eq!(one.targets, vec![2.0, 3.0, 4.0]);
        let two = make_supervised(&s, 2).unwrap();
        assert_eq!(two.inputs, vec![1.0, 2.0]);
        assert_eq!(two.targets, vec![3.0, 4.0]);
    }

    #[test]
    fn supervised_rejects_short_series() {
        let s = series(&[1.0]);
        assert!(matches!(
            make_supervised(&s, 1),
            Err(Error::InsufficientData(_))
        ));
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn arb_values() -> impl Strategy<Value = Vec<f64>> {
            proptest::collection::vec(-1e6..1e6f64, 4..200)
                .prop_filter("needs a non-degenerate range", |v| {
                    let min = v.iter().copied().fold(f64::INFINITY, f64::min);
                    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                    max - min > 1e-9
                })
        }

        proptest! {
            #[test]
            fn normalize_bounds_and_extremes(values in arb_values()) {
                let s = series(&values);
                let (n, _) = normalize(&s).unwrap();
                let vs = n.values();
                prop_assert!(vs.iter().all(|v| (0.0..=1.0).contains(v)));
                prop_assert!(vs.iter().any(|v| *v == 0.0));
                prop_assert!(vs.iter().any(|v| *v == 1.0));
            }

            #[test]
            fn denormalize_roundtrip(values in arb_values()) {
                let s = series(&values);
                let (n, p) = normalize(&s).unwrap();
                let back = denormalize(n.values(), &p).unwrap();
                let scale = p.range();
                for (a, b) in values.iter().zip(&back) {
                    prop_assert!((a - b).abs() <= 1e-12 * scale.max(a.abs()));
                }
            }

            #[test]
            fn split_concat_is_identity(values in arb_values(), frac in 0.05..0.95f64) {
                let s = series(&values);
                if let Ok((train, test)) = split(&s, &SplitSpec { train_fraction: frac }) {
                    let mut joined = train.values().to_vec();
                    joined.extend_from_slice(test.values());
                    prop_assert_eq!(joined, values);
                }
            }
        }
    }
}
