//! Risk and performance metrics over daily simple-return series.
//!
//! All metrics are unannualized daily figures. The tail metrics use the
//! empirical lower order statistic (no interpolation), reported as signed
//! returns so loss-tail values come out negative.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum MetricsError {
    #[error("return series is empty")]
    EmptySeries,
    #[error("return series too short: need at least {need} observations, got {got}")]
    TooShort { need: usize, got: usize },
    #[error("standard deviation is zero; ratio is undefined")]
    DegenerateStdDev,
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("entry {index} is {value}, not a valid simple return (must be finite and > -1)")]
    InvalidReturn { index: usize, value: f64 },
    #[error("alpha must lie in (0, 1), got {0}")]
    InvalidAlpha(f64),
}

/// Ordered daily simple returns. Every entry is finite and greater than -1,
/// so compounding the series onto a positive starting wealth keeps it positive.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct ReturnSeries(Vec<f64>);

impl ReturnSeries {
    pub fn new(returns: Vec<f64>) -> Result<Self, MetricsError> {
        for (index, &value) in returns.iter().enumerate() {
            if !value.is_finite() || value <= -1.0 {
                return Err(MetricsError::InvalidReturn { index, value });
            }
        }
        Ok(Self(returns))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Wealth curve from an initial wealth of 1, one point per return.
    pub fn wealth_curve(&self) -> Vec<f64> {
        let mut wealth = 1.0;
        self.0
            .iter()
            .map(|r| {
                wealth *= 1.0 + r;
                wealth
            })
            .collect()
    }
}

impl std::ops::Deref for ReturnSeries {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl TryFrom<Vec<f64>> for ReturnSeries {
    type Error = MetricsError;

    fn try_from(v: Vec<f64>) -> Result<Self, MetricsError> {
        Self::new(v)
    }
}

impl From<ReturnSeries> for Vec<f64> {
    fn from(rs: ReturnSeries) -> Vec<f64> {
        rs.0
    }
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Ceiling of `x` that forgives float noise on exact integers, so that
/// e.g. `0.05 * 20` (slightly above 1.0 in binary) still yields 1.
fn robust_ceil(x: f64) -> usize {
    let nearest = x.round();
    if (x - nearest).abs() < 1e-9 {
        nearest as usize
    } else {
        x.ceil() as usize
    }
}

fn check_alpha(alpha: f64) -> Result<(), MetricsError> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(MetricsError::InvalidAlpha(alpha))
    }
}

/// Compounded total return: the product of (1 + r_t) minus one.
pub fn cum_return(rs: &ReturnSeries) -> Result<f64, MetricsError> {
    if rs.is_empty() {
        return Err(MetricsError::EmptySeries);
    }
    Ok(rs.iter().fold(1.0, |w, r| w * (1.0 + r)) - 1.0)
}

/// Sample standard deviation of daily returns (n-1 divisor).
pub fn std_dev(rs: &ReturnSeries) -> Result<f64, MetricsError> {
    if rs.len() < 2 {
        return Err(MetricsError::TooShort {
            need: 2,
            got: rs.len(),
        });
    }
    let m = mean(rs);
    let ss: f64 = rs.iter().map(|r| (r - m) * (r - m)).sum();
    Ok((ss / (rs.len() - 1) as f64).sqrt())
}

/// Mean daily return divided by the sample standard deviation, with no
/// risk-free rate and no annualization. Fails with
/// [`MetricsError::DegenerateStdDev`] on constant series (e.g. a strategy
/// that never trades); callers decide how to rank that case.
pub fn sharpe_like(rs: &ReturnSeries) -> Result<f64, MetricsError> {
    let sd = std_dev(rs)?;
    if sd == 0.0 {
        return Err(MetricsError::DegenerateStdDev);
    }
    Ok(mean(rs) / sd)
}

/// Largest peak-to-trough relative decline of the wealth curve compounded
/// from 1. Zero iff the curve never falls below a previous peak.
pub fn max_drawdown(rs: &ReturnSeries) -> Result<f64, MetricsError> {
    if rs.is_empty() {
        return Err(MetricsError::EmptySeries);
    }
    let mut wealth = 1.0_f64;
    let mut peak = 1.0_f64;
    let mut dd = 0.0_f64;
    for &r in rs.iter() {
        wealth *= 1.0 + r;
        if wealth > peak {
            peak = wealth;
        }
        dd = dd.max((peak - wealth) / peak);
    }
    Ok(dd)
}

/// Historical Value-at-Risk at level `alpha`: the ⌈alpha·n⌉-th smallest
/// return. Signed convention — in a loss tail the value is negative.
pub fn hist_var(rs: &ReturnSeries, alpha: f64) -> Result<f64, MetricsError> {
    check_alpha(alpha)?;
    let need = robust_ceil(1.0 / alpha);
    if rs.len() < need {
        return Err(MetricsError::TooShort {
            need,
            got: rs.len(),
        });
    }
    let mut sorted = rs.to_vec();
    sorted.sort_by(f64::total_cmp);
    let k = robust_ceil(alpha * rs.len() as f64).max(1);
    Ok(sorted[k - 1])
}

/// Historical expected shortfall: the mean of all returns at or below the
/// historical VaR at the same level. Always ≤ the VaR.
pub fn hist_es(rs: &ReturnSeries, alpha: f64) -> Result<f64, MetricsError> {
    let var = hist_var(rs, alpha)?;
    let tail: Vec<f64> = rs.iter().copied().filter(|r| *r <= var).collect();
    // summation rounding can push the mean of a constant tail one ulp past
    // its own maximum; the clamp restores the exact-arithmetic bound
    Ok(mean(&tail).min(var))
}

/// Root mean square of below-`mar` deviations with a full-sample denominator:
/// sqrt( (1/n) Σ min(r_t − mar, 0)² ).
pub fn downside_dev(rs: &ReturnSeries, mar: f64) -> Result<f64, MetricsError> {
    if rs.is_empty() {
        return Err(MetricsError::EmptySeries);
    }
    let ss: f64 = rs
        .iter()
        .map(|r| {
            let d = (r - mar).min(0.0);
            d * d
        })
        .sum();
    Ok((ss / rs.len() as f64).sqrt())
}

/// Semi-deviation: downside deviation with the sample mean as threshold.
pub fn semi_dev(rs: &ReturnSeries) -> Result<f64, MetricsError> {
    if rs.is_empty() {
        return Err(MetricsError::EmptySeries);
    }
    downside_dev(rs, mean(rs))
}

/// The bundled metric suite for one return series.
///
/// `sharpe_like` is `None` when the series has zero standard deviation.
/// Serialized fields carry the fixed report key names; tail metrics keep the
/// `_95` suffix regardless of `alpha`, which is recorded alongside.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub cum_return: f64,
    pub std_dev: f64,
    pub sharpe_like: Option<f64>,
    pub max_drawdown: f64,
    #[serde(rename = "var_95")]
    pub var_alpha: f64,
    #[serde(rename = "es_95")]
    pub es_alpha: f64,
    pub semi_dev: f64,
    pub downside_dev: f64,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
}

fn default_alpha() -> f64 {
    0.05
}

impl MetricsReport {
    /// Copy with every real field rounded to 6 significant digits, the
    /// precision used for emitted reports.
    pub fn rounded(&self) -> Self {
        Self {
            cum_return: round_sig6(self.cum_return),
            std_dev: round_sig6(self.std_dev),
            sharpe_like: self.sharpe_like.map(round_sig6),
            max_drawdown: round_sig6(self.max_drawdown),
            var_alpha: round_sig6(self.var_alpha),
            es_alpha: round_sig6(self.es_alpha),
            semi_dev: round_sig6(self.semi_dev),
            downside_dev: round_sig6(self.downside_dev),
            alpha: self.alpha,
        }
    }
}

/// Round to 6 significant decimal digits. Values round-trip exactly through
/// their shortest decimal representation afterwards.
pub fn round_sig6(x: f64) -> f64 {
    if x == 0.0 || !x.is_finite() {
        return x;
    }
    format!("{x:.5e}").parse().expect("formatted float reparses")
}

/// Compute the full metric suite. Requires enough observations for both the
/// standard deviation and the `alpha` tail quantile.
pub fn full_report(rs: &ReturnSeries, alpha: f64) -> Result<MetricsReport, MetricsError> {
    check_alpha(alpha)?;
    let need = robust_ceil(1.0 / alpha).max(2);
    if rs.len() < need {
        return Err(MetricsError::TooShort {
            need,
            got: rs.len(),
        });
    }
    let sharpe = match sharpe_like(rs) {
        Ok(s) => Some(s),
        Err(MetricsError::DegenerateStdDev) => None,
        Err(e) => return Err(e),
    };
    Ok(MetricsReport {
        cum_return: cum_return(rs)?,
        std_dev: std_dev(rs)?,
        sharpe_like: sharpe,
        max_drawdown: max_drawdown(rs)?,
        var_alpha: hist_var(rs, alpha)?,
        es_alpha: hist_es(rs, alpha)?,
        semi_dev: semi_dev(rs)?,
        downside_dev: downside_dev(rs, 0.0)?,
        alpha,
    })
}
