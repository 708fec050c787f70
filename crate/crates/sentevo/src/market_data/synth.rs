//! Planted-rule synthetic datasets for verification.
//!
//! Sentiment is drawn uniformly within its invariant ranges, a planted rule
//! is simulated on it, and next-day returns get a positive mean shift only on
//! the rule's long days. Recovering the plant from the data is then a
//! statistical test of the whole search stack.

use super::{normalize, DataError, PriceBar, RawSentimentRecord};
use crate::metrics::ReturnSeries;
use crate::strategy::{decode, simulate, strategy_returns, Chromosome};
use chrono::{Datelike, Days, NaiveDate, Weekday};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

/// Daily return noise level. Together with a permitted edge below 0.05 this
/// keeps a 250-day planted signal detectable but not trivial.
pub const NOISE_SIGMA: f64 = 0.01;

/// A generated dataset: raw sentiment and closes on the same weekday
/// calendar, plus the returns the planted rule earns on it.
#[derive(Debug, Clone)]
pub struct SynthData {
    pub sentiment: Vec<RawSentimentRecord>,
    pub prices: Vec<PriceBar>,
    pub planted_returns: ReturnSeries,
}

fn next_weekday(mut date: NaiveDate) -> NaiveDate {
    loop {
        date = date + Days::new(1);
        if !matches!(date.weekday(), Weekday::Sat | Weekday::Sun) {
            return date;
        }
    }
}

/// Generates `days` return days of synthetic data (so `days + 1` calendar
/// dates) with the given planted rule and mean edge on long days.
///
/// Deterministic in `seed`. The sentiment stream depends only on `seed` and
/// `days`, never on the plant, so callers can redraw candidate plants against
/// a fixed stream.
pub fn synth_generate(
    seed: u64,
    days: usize,
    planted: &Chromosome,
    edge: f64,
) -> Result<SynthData, DataError> {
    if days < 30 {
        return Err(DataError::InvalidParameter(format!(
            "need at least 30 return days, got {days}"
        )));
    }
    if !edge.is_finite() || !(0.0..0.05).contains(&edge) {
        return Err(DataError::InvalidParameter(format!(
            "edge {edge} outside [0, 0.05)"
        )));
    }
    if !planted.is_valid() {
        return Err(DataError::InvalidParameter(
            "planted chromosome is invalid".to_string(),
        ));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    // weekday calendar from a fixed Monday anchor
    let mut dates = Vec::with_capacity(days + 1);
    let mut date = NaiveDate::from_ymd_opt(2020, 1, 6).expect("valid anchor");
    for _ in 0..=days {
        dates.push(date);
        date = next_weekday(date);
    }

    let sentiment: Vec<RawSentimentRecord> = dates
        .iter()
        .map(|&date| {
            let n_total: u32 = rng.random_range(1..=40);
            let n_bull = rng.random_range(0..=n_total);
            let n_bear = rng.random_range(0..=n_total - n_bull);
            RawSentimentRecord {
                date,
                bull_intensity_raw: rng.random::<f64>() * 4.0,
                bear_intensity_raw: rng.random::<f64>() * 4.0,
                n_bull,
                n_bear,
                n_total,
            }
        })
        .collect();

    let normalized: Vec<_> = sentiment.iter().map(|r| Some(normalize(r))).collect();
    let rules = decode(planted).map_err(|e| DataError::InvalidParameter(e.to_string()))?;
    let positions =
        simulate(&rules, &normalized, days).map_err(|e| DataError::Inconsistent(e.to_string()))?;

    let noise = Normal::new(0.0, NOISE_SIGMA).expect("valid noise parameters");
    let returns: Vec<f64> = positions
        .iter()
        .map(|p| {
            let mean = match p {
                crate::strategy::Position::Long => edge,
                crate::strategy::Position::Flat => 0.0,
            };
            mean + noise.sample(&mut rng)
        })
        .collect();
    let returns = ReturnSeries::new(returns)?;

    let mut close = 100.0;
    let prices: Vec<PriceBar> = std::iter::once(PriceBar {
        date: dates[0],
        close,
    })
    .chain(dates[1..].iter().zip(returns.iter()).map(|(&date, &r)| {
        close *= 1.0 + r;
        PriceBar { date, close }
    }))
    .collect();

    let planted_returns = strategy_returns(&positions, &returns)
        .map_err(|e| DataError::Inconsistent(e.to_string()))?;

    Ok(SynthData {
        sentiment,
        prices,
        planted_returns,
    })
}
