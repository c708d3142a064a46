//! Daily OHLC CSV ingestion and emission.
//!
//! The canonical schema is the seven-column vendor layout
//! `Date,Open,High,Low,Close,Adj Close,Volume` with ISO dates. Only `Date`
//! and `Close` are consumed; the reader accepts any file whose header
//! contains at least those two columns. Rows whose Close field is empty or
//! the literal `null` are kept as missing values for the cleaning step.

use std::path::Path;

use chrono::NaiveDate;

use crate::error::{Error, Result};
use crate::series::{RawSeries, Series};

/// Parse CSV text into a raw series sorted by ascending date.
pub fn parse_ohlc_csv(text: &str) -> Result<RawSeries> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(text.as_bytes());

    let headers = reader
        .headers()
        .map_err(|e| Error::Row { line: 1, message: e.to_string() })?
        .clone();
    let col = |name: &str| headers.iter().position(|h| h.trim() == name);
    let date_idx = col("Date").ok_or_else(|| Error::MissingColumn("Date".into()))?;
    let close_idx = col("Close").ok_or_else(|| Error::MissingColumn("Close".into()))?;

    let mut rows: Vec<(NaiveDate, Option<f64>)> = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| Error::Row {
            line: e.position().map(|p| p.line()).unwrap_or(0),
            message: e.to_string(),
        })?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);

        let date_field = record.get(date_idx).unwrap_or("").trim();
        let date = NaiveDate::parse_from_str(date_field, "%Y-%m-%d").map_err(|e| Error::Row {
            line,
            message: format!("bad date `{date_field}`: {e}"),
        })?;

        let close_field = record.get(close_idx).unwrap_or("").trim();
        let close = if close_field.is_empty() || close_field.eq_ignore_ascii_case("null") {
            None
        } else {
            let v: f64 = close_field.parse().map_err(|e| Error::Row {
                line,
                message: format!("bad close `{close_field}`: {e}"),
            })?;
            Some(v)
        };
        rows.push((date, close));
    }

    rows.sort_by_key(|(d, _)| *d);
    Ok(RawSeries {
        timestamps: rows.iter().map(|(d, _)| *d).collect(),
        values: rows.iter().map(|(_, v)| *v).collect(),
    })
}

/// Read and parse an OHLC CSV file.
pub fn read_ohlc_file(path: &Path) -> Result<RawSeries> {
    let text = std::fs::read_to_string(path)?;
    parse_ohlc_csv(&text)
}

/// Emit a series in the canonical seven-column schema. Only Date and Close
/// carry information; the remaining price columns repeat Close and Volume
/// is zero. Close is written with full round-trip precision.
pub fn serialize_ohlc_csv(series: &Series) -> String {
    let mut out = String::from("Date,Open,High,Low,Close,Adj Close,Volume\n");
    for (date, value) in series.timestamps().iter().zip(series.values()) {
        out.push_str(&format!("{date},{value},{value},{value},{value},{value},0\n"));
    }
    out
}

/// One `date,actual,predicted` output row; `actual` is absent for
/// free-running rows beyond the observed series.
#[derive(Debug, Clone)]
pub struct PredictionRow {
    pub date: NaiveDate,
    pub actual: Option<f64>,
    pub predicted: f64,
}

pub fn serialize_predictions(rows: &[PredictionRow]) -> String {
    let mut out = String::from("date,actual,predicted\n");
    for row in rows {
        match row.actual {
            Some(actual) => out.push_str(&format!("{},{},{}\n", row.date, actual, row.predicted)),
            None => out.push_str(&format!("{},,{}\n", row.date, row.predicted)),
        }
    }
    out
}

/// Parse a predictions CSV back into rows (used by `evaluate`).
pub fn parse_predictions(text: &str) -> Result<Vec<PredictionRow>> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(text.as_bytes());
    let headers = reader
        .headers()
        .map_err(|e| Error::Row { line: 1, message: e.to_string() })?
        .clone();
    for required in ["date", "actual", "predicted"] {
        if !headers.iter().any(|h| h.trim() == required) {
            return Err(Error::MissingColumn(required.into()));
        }
    }
    let idx = |name: &str| headers.iter().position(|h| h.trim() == name).unwrap();
    let (di, ai, pi) = (idx("date"), idx("actual"), idx("predicted"));

    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| Error::Row {
            line: e.position().map(|p| p.line()).unwrap_or(0),
            message: e.to_string(),
        })?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        let date = NaiveDate::parse_from_str(record.get(di).unwrap_or("").trim(), "%Y-%m-%d")
            .map_err(|e| Error::Row { line, message: e.to_string() })?;
        let actual_field = record.get(ai).unwrap_or("").trim();
        let actual = if actual_field.is_empty() {
            None
        } else {
            Some(actual_field.parse().map_err(|e| Error::Row {
                line,
                message: format!("bad actual: {e}"),
            })?)
        };
        let predicted = record
            .get(pi)
            .unwrap_or("")
            .trim()
            .parse()
            .map_err(|e| Error::Row { line, message: format!("bad predicted: {e}") })?;
        rows.push(PredictionRow { date, actual, predicted });
    }
    Ok(rows)
}

/// Per-epoch training loss as `epoch,loss` CSV.
pub fn serialize_loss_csv(losses: &[f64]) -> String {
    let mut out = String::from("epoch,loss\n");
    for (epoch, loss) in losses.iter().enumerate() {
        out.push_str(&format!("{epoch},{loss}\n"));
    }
    out
}
