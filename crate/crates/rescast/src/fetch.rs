//! Historical price download with a local CSV cache.
//!
//! The endpoint is a URL template with `{symbol}`, `{start_epoch}` and
//! `{end_epoch}` placeholders, so tests run against a local stub server and
//! the tool does not hard-code any vendor. Raw response bytes are cached at
//! `<cache_dir>/<symbol>_<start>_<end>.csv`; a network failure with a warm
//! cache serves the cached copy and flags it stale.

use std::path::{Path, PathBuf};

use chrono::NaiveDate;

use crate::error::{Error, Result};
use crate::ohlc::parse_ohlc_csv;
use crate::series::RawSeries;

#[derive(Debug, Clone)]
pub struct FetchRequest {
    pub symbol: String,
    pub start: NaiveDate,
    pub end: NaiveDate,
    pub endpoint: String,
    pub cache_dir: PathBuf,
}

#[derive(Debug)]
pub struct FetchOutcome {
    pub series: RawSeries,
    /// True when the response came from the cache because the endpoint was
    /// unreachable.
    pub stale: bool,
    pub cache_path: PathBuf,
}

pub fn cache_path(cache_dir: &Path, symbol: &str, start: NaiveDate, end: NaiveDate) -> PathBuf {
    cache_dir.join(format!("{symbol}_{start}_{end}.csv"))
}

fn epoch_seconds(date: NaiveDate) -> i64 {
    date.and_hms_opt(0, 0, 0).expect("midnight exists").and_utc().timestamp()
}

pub fn build_url(request: &FetchRequest) -> String {
    request
        .endpoint
        .replace("{symbol}", &request.symbol)
        .replace("{start_epoch}", &epoch_seconds(request.start).to_string())
        .replace("{end_epoch}", &epoch_seconds(request.end).to_string())
}

fn http_get(url: &str) -> std::result::Result<(u16, String), String> {
    let agent: ureq::Agent = ureq::Agent::config_builder()
        .http_status_as_error(false)
        .build()
        .into();
    let mut response = agent.get(url).call().map_err(|e| e.to_string())?;
    let status = response.status().as_u16();
    let body = response
        .body_mut()
        .read_to_string()
        .map_err(|e| format!("reading body: {e}"))?;
    Ok((status, body))
}

/// Download the CSV for `request`, caching the raw bytes. Serves the cache
/// when the endpoint is unreachable; cold cache plus network failure is a
/// fetch error, and a non-success HTTP status is reported with a body
/// excerpt.
pub fn fetch_history(request: &FetchRequest) -> Result<FetchOutcome> {
    let cache = cache_path(&request.cache_dir, &request.symbol, request.start, request.end);
    let url = build_url(request);

    match http_get(&url) {
        Ok((status, body)) => {
            if !(200..300).contains(&status) {
                let excerpt: String = body.chars().take(200).collect();
                return Err(Error::HttpStatus { status, body_excerpt: excerpt });
            }
            let series = parse_ohlc_csv(&body)?;
            std::fs::create_dir_all(&request.cache_dir)?;
            std::fs::write(&cache, &body)?;
            Ok(FetchOutcome { series, stale: false, cache_path: cache })
        }
        Err(message) => {
            if cache.is_file() {
                let body = std::fs::read_to_string(&cache)?;
                let series = parse_ohlc_csv(&body)?;
                Ok(FetchOutcome { series, stale: true, cache_path: cache })
            } else {
                Err(Error::Fetch { message, cache_path: cache })
            }
        }
    }
}
