//! CSV ingestion, sentiment normalization, and calendar alignment.
//!
//! The trading calendar is price-driven: sentiment on non-trading days is
//! dropped, and trading days without sentiment carry `None` so rule
//! conditions simply do not fire there.

mod synth;

pub use synth::{synth_generate, SynthData};

use crate::metrics::{MetricsError, ReturnSeries};
use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("bad CSV header: expected {expected:?}, found {found:?}")]
    Header { expected: String, found: String },
    #[error("line {line}: {message}")]
    Row { line: u64, message: String },
    #[error("duplicate date {date}")]
    DuplicateDate { date: NaiveDate },
    #[error("need at least {need} price bars in the window, got {got}")]
    InsufficientData { need: usize, got: usize },
    #[error("invalid date range: {from} is after {to}")]
    EmptyRange { from: NaiveDate, to: NaiveDate },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("inconsistent series: {0}")]
    Inconsistent(String),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
}

/// One asset-day of raw sentiment: message-count aggregates plus bullish and
/// bearish intensity on the 0-4 scale.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RawSentimentRecord {
    pub date: NaiveDate,
    pub bull_intensity_raw: f64,
    pub bear_intensity_raw: f64,
    pub n_bull: u32,
    pub n_bear: u32,
    pub n_total: u32,
}

impl RawSentimentRecord {
    pub fn validate(&self) -> Result<(), DataError> {
        let bad = |message: String| DataError::Inconsistent(message);
        for (name, value) in [
            ("bull intensity", self.bull_intensity_raw),
            ("bear intensity", self.bear_intensity_raw),
        ] {
            if !value.is_finite() || !(0.0..=4.0).contains(&value) {
                return Err(bad(format!(
                    "{name} {value} outside the 0-4 scale on {}",
                    self.date
                )));
            }
        }
        if self.n_total == 0 {
            return Err(bad(format!("zero total message count on {}", self.date)));
        }
        if self.n_bull + self.n_bear > self.n_total {
            return Err(bad(format!(
                "bull+bear counts {}+{} exceed total {} on {}",
                self.n_bull, self.n_bear, self.n_total, self.date
            )));
        }
        Ok(())
    }
}

/// Sentiment rescaled to the unit interval: intensities divided by 4, counts
/// expressed as fractions of the day's total message count.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormalizedSentimentRecord {
    pub date: NaiveDate,
    pub bull_intensity: f64,
    pub bear_intensity: f64,
    pub bull_ratio: f64,
    pub bear_ratio: f64,
    pub n_total: u32,
}

/// Divides intensities by the scale maximum and counts by the day's total.
/// The raw record's invariants guarantee every output lies in [0, 1] and the
/// two ratios sum to at most 1.
pub fn normalize(raw: &RawSentimentRecord) -> NormalizedSentimentRecord {
    NormalizedSentimentRecord {
        date: raw.date,
        bull_intensity: raw.bull_intensity_raw / 4.0,
        bear_intensity: raw.bear_intensity_raw / 4.0,
        bull_ratio: raw.n_bull as f64 / raw.n_total as f64,
        bear_ratio: raw.n_bear as f64 / raw.n_total as f64,
        n_total: raw.n_total,
    }
}

/// One trading day's closing price.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PriceBar {
    pub date: NaiveDate,
    pub close: f64,
}

/// Inclusive calendar window. Serialized, displayed, and parsed as
/// `YYYY-MM-DD:YYYY-MM-DD`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub struct DateRange {
    pub from: NaiveDate,
    pub to: NaiveDate,
}

impl From<DateRange> for String {
    fn from(range: DateRange) -> String {
        range.to_string()
    }
}

impl TryFrom<String> for DateRange {
    type Error = DataError;

    fn try_from(s: String) -> Result<DateRange, DataError> {
        s.parse()
    }
}

impl DateRange {
    pub fn new(from: NaiveDate, to: NaiveDate) -> Result<Self, DataError> {
        if from > to {
            return Err(DataError::EmptyRange { from, to });
        }
        Ok(Self { from, to })
    }

    pub fn contains(&self, date: NaiveDate) -> bool {
        self.from <= date && date <= self.to
    }
}

impl std::fmt::Display for DateRange {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}:{}", self.from, self.to)
    }
}

impl std::str::FromStr for DateRange {
    type Err = DataError;

    fn from_str(s: &str) -> Result<Self, DataError> {
        let bad = || {
            DataError::InvalidParameter(format!(
                "date range {s:?} must look like YYYY-MM-DD:YYYY-MM-DD"
            ))
        };
        let (from, to) = s.split_once(':').ok_or_else(bad)?;
        let parse = |part: &str| NaiveDate::parse_from_str(part.trim(), "%Y-%m-%d");
        DateRange::new(parse(from).map_err(|_| bad())?, parse(to).map_err(|_| bad())?)
    }
}

/// One asset's joined calendar over a backtest window: T+1 trading dates,
/// optional sentiment per date, and the T simple returns between consecutive
/// closes. Entry i of `sentiment` belongs to `dates[i]`; `returns[i]` spans
/// `dates[i]` to `dates[i+1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct AlignedAssetSeries {
    ticker: String,
    dates: Vec<NaiveDate>,
    sentiment: Vec<Option<NormalizedSentimentRecord>>,
    returns: ReturnSeries,
}

impl AlignedAssetSeries {
    pub fn new(
        ticker: String,
        dates: Vec<NaiveDate>,
        sentiment: Vec<Option<NormalizedSentimentRecord>>,
        returns: ReturnSeries,
    ) -> Result<Self, DataError> {
        if dates.len() < 2 {
            return Err(DataError::InsufficientData {
                need: 2,
                got: dates.len(),
            });
        }
        if returns.len() + 1 != dates.len() || sentiment.len() != dates.len() {
            return Err(DataError::Inconsistent(format!(
                "{} dates, {} sentiment entries, {} returns",
                dates.len(),
                sentiment.len(),
                returns.len()
            )));
        }
        if !dates.windows(2).all(|w| w[0] < w[1]) {
            return Err(DataError::Inconsistent(
                "dates not strictly increasing".to_string(),
            ));
        }
        for (date, record) in dates.iter().zip(sentiment.iter()) {
            if let Some(record) = record {
                if record.date != *date {
                    return Err(DataError::Inconsistent(format!(
                        "sentiment dated {} attached to {}",
                        record.date, date
                    )));
                }
            }
        }
        Ok(Self {
            ticker,
            dates,
            sentiment,
            returns,
        })
    }

    pub fn ticker(&self) -> &str {
        &self.ticker
    }

    pub fn dates(&self) -> &[NaiveDate] {
        &self.dates
    }

    pub fn sentiment(&self) -> &[Option<NormalizedSentimentRecord>] {
        &self.sentiment
    }

    pub fn returns(&self) -> &ReturnSeries {
        &self.returns
    }

    pub fn n_returns(&self) -> usize {
        self.returns.len()
    }
}

const SENTIMENT_HEADER: [&str; 6] = [
    "date",
    "i_bull_raw",
    "i_bear_raw",
    "n_bull",
    "n_bear",
    "n_total",
];
const PRICE_HEADER: [&str; 2] = ["date", "close"];

fn open_reader(path: &Path) -> Result<csv::Reader<std::fs::File>, DataError> {
    csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| match e.into_kind() {
            csv::ErrorKind::Io(source) => DataError::Io {
                path: path.display().to_string(),
                source,
            },
            other => DataError::Row {
                line: 0,
                message: format!("{other:?}"),
            },
        })
}

fn check_header(
    reader: &mut csv::Reader<std::fs::File>,
    expected: &[&str],
) -> Result<(), DataError> {
    let found = reader.headers().map_err(|e| DataError::Row {
        line: 1,
        message: e.to_string(),
    })?;
    let found: Vec<&str> = found.iter().collect();
    if found != expected {
        return Err(DataError::Header {
            expected: expected.join(","),
            found: found.join(","),
        });
    }
    Ok(())
}

fn row_line(record: &csv::StringRecord) -> u64 {
    record.position().map_or(0, |p| p.line())
}

fn parse_field<T: std::str::FromStr>(
    record: &csv::StringRecord,
    index: usize,
    name: &str,
) -> Result<T, DataError>
where
    T::Err: std::fmt::Display,
{
    let line = row_line(record);
    let raw = record.get(index).ok_or_else(|| DataError::Row {
        line,
        message: format!("missing {name} column"),
    })?;
    raw.parse().map_err(|e| DataError::Row {
        line,
        message: format!("bad {name} value {raw:?}: {e}"),
    })
}

fn parse_date(record: &csv::StringRecord, index: usize) -> Result<NaiveDate, DataError> {
    let line = row_line(record);
    let raw = record.get(index).ok_or_else(|| DataError::Row {
        line,
        message: "missing date column".to_string(),
    })?;
    NaiveDate::parse_from_str(raw, "%Y-%m-%d").map_err(|e| DataError::Row {
        line,
        message: format!("bad date {raw:?}: {e}"),
    })
}

fn check_sorted_unique<T>(
    rows: &mut [T],
    date_of: impl Fn(&T) -> NaiveDate,
) -> Result<(), DataError> {
    rows.sort_by_key(&date_of);
    for pair in rows.windows(2) {
        if date_of(&pair[0]) == date_of(&pair[1]) {
            return Err(DataError::DuplicateDate {
                date: date_of(&pair[0]),
            });
        }
    }
    Ok(())
}

/// Reads a raw sentiment CSV. Rows come back sorted by date; out-of-range
/// values, malformed rows (reported with their line number), and duplicate
/// dates are rejected.
pub fn parse_sentiment_csv(path: &Path) -> Result<Vec<RawSentimentRecord>, DataError> {
    let mut reader = open_reader(path)?;
    check_header(&mut reader, &SENTIMENT_HEADER)?;
    let mut rows = Vec::new();
    for result in reader.records() {
        let record = result.map_err(|e| DataError::Row {
            line: e.position().map_or(0, |p| p.line()),
            message: e.to_string(),
        })?;
        let line = row_line(&record);
        let row = RawSentimentRecord {
            date: parse_date(&record, 0)?,
            bull_intensity_raw: parse_field(&record, 1, "i_bull_raw")?,
            bear_intensity_raw: parse_field(&record, 2, "i_bear_raw")?,
            n_bull: parse_field(&record, 3, "n_bull")?,
            n_bear: parse_field(&record, 4, "n_bear")?,
            n_total: parse_field(&record, 5, "n_total")?,
        };
        row.validate().map_err(|e| DataError::Row {
            line,
            message: e.to_string(),
        })?;
        rows.push(row);
    }
    check_sorted_unique(&mut rows, |r| r.date)?;
    Ok(rows)
}

/// Reads a price CSV. Rows come back sorted by date; non-positive closes and
/// duplicate dates are rejected.
pub fn parse_price_csv(path: &Path) -> Result<Vec<PriceBar>, DataError> {
    let mut reader = open_reader(path)?;
    check_header(&mut reader, &PRICE_HEADER)?;
    let mut rows = Vec::new();
    for result in reader.records() {
        let record = result.map_err(|e| DataError::Row {
            line: e.position().map_or(0, |p| p.line()),
            message: e.to_string(),
        })?;
        let line = row_line(&record);
        let bar = PriceBar {
            date: parse_date(&record, 0)?,
            close: parse_field(&record, 1, "close")?,
        };
        if !bar.close.is_finite() || bar.close <= 0.0 {
            return Err(DataError::Row {
                line,
                message: format!("close {} is not a positive price", bar.close),
            });
        }
        rows.push(bar);
    }
    check_sorted_unique(&mut rows, |b| b.date)?;
    Ok(rows)
}

/// Simple returns between consecutive bars, each dated at the later bar.
pub fn compute_returns(bars: &[PriceBar]) -> Result<Vec<(NaiveDate, f64)>, DataError> {
    if bars.len() < 2 {
        return Err(DataError::InsufficientData {
            need: 2,
            got: bars.len(),
        });
    }
    Ok(bars
        .windows(2)
        .map(|w| (w[1].date, w[1].close / w[0].close - 1.0))
        .collect())
}

/// Joins sentiment onto the price calendar restricted to `window`. Trading
/// days without a same-date sentiment record carry `None`; sentiment on
/// non-trading days is dropped. Errors when fewer than two bars fall inside
/// the window (no return can be formed).
pub fn align(
    ticker: &str,
    sentiment: &[NormalizedSentimentRecord],
    prices: &[PriceBar],
    window: DateRange,
) -> Result<AlignedAssetSeries, DataError> {
    let bars: Vec<PriceBar> = prices
        .iter()
        .copied()
        .filter(|b| window.contains(b.date))
        .collect();
    if bars.len() < 2 {
        return Err(DataError::InsufficientData {
            need: 2,
            got: bars.len(),
        });
    }
    let by_date: std::collections::BTreeMap<NaiveDate, NormalizedSentimentRecord> =
        sentiment.iter().map(|r| (r.date, *r)).collect();
    let dates: Vec<NaiveDate> = bars.iter().map(|b| b.date).collect();
    let attached: Vec<Option<NormalizedSentimentRecord>> = dates
        .iter()
        .map(|d| by_date.get(d).copied())
        .collect();
    let returns: Vec<f64> = compute_returns(&bars)?.into_iter().map(|(_, r)| r).collect();
    AlignedAssetSeries::new(
        ticker.to_string(),
        dates,
        attached,
        ReturnSeries::new(returns)?,
    )
}
