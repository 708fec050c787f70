//! Portfolio composition and baselines.
//!
//! Three portfolio styles share one calendar: the strategy portfolio
//! (equal weight over whichever assets are long each day, rebalanced daily),
//! the 1/N benchmark (equal weight over all assets, rebalanced daily), and
//! the mean-variance portfolio (weights fixed once, then buy-and-hold).

mod qp;

pub use qp::{solve_markowitz, MarkowitzSolution, QpProblem};

use crate::market_data::{AlignedAssetSeries, DateRange};
use crate::metrics::{MetricsError, ReturnSeries};
use crate::strategy::{Position, PositionSeries};
use chrono::NaiveDate;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum PortfolioError {
    #[error("calendar mismatch: {0}")]
    CalendarMismatch(String),
    #[error("need at least {need} observations, got {got}")]
    Insufficient { need: usize, got: usize },
    #[error("covariance matrix is not symmetric within 1e-12")]
    NotSymmetric,
    #[error("covariance matrix is not positive semidefinite (min eigenvalue {min_eig})")]
    NotPsd { min_eig: f64 },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("target return {target} is infeasible (maximum attainable {max_attainable})")]
    Infeasible { target: f64, max_attainable: f64 },
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("cannot read {path}: {message}")]
    BadMatrix { path: String, message: String },
    #[error(transparent)]
    Metrics(#[from] MetricsError),
}

/// Solved allocation. Weights sum to one; they are non-negative when the
/// problem was long-only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PortfolioWeights(pub Vec<f64>);

impl PortfolioWeights {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Multi-asset return panel on one shared calendar: `returns[a][t]` is asset
/// `a`'s simple return on day `dates[t]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Panel {
    tickers: Vec<String>,
    dates: Vec<NaiveDate>,
    returns: Vec<ReturnSeries>,
}

impl Panel {
    pub fn new(
        tickers: Vec<String>,
        dates: Vec<NaiveDate>,
        returns: Vec<ReturnSeries>,
    ) -> Result<Self, PortfolioError> {
        if tickers.is_empty() {
            return Err(PortfolioError::Insufficient { need: 1, got: 0 });
        }
        if tickers.len() != returns.len() {
            return Err(PortfolioError::DimensionMismatch(format!(
                "{} tickers but {} return series",
                tickers.len(),
                returns.len()
            )));
        }
        for (ticker, series) in tickers.iter().zip(returns.iter()) {
            if series.len() != dates.len() {
                return Err(PortfolioError::CalendarMismatch(format!(
                    "{ticker} has {} returns for {} dates",
                    series.len(),
                    dates.len()
                )));
            }
        }
        if !dates.windows(2).all(|w| w[0] < w[1]) {
            return Err(PortfolioError::CalendarMismatch(
                "dates not strictly increasing".to_string(),
            ));
        }
        Ok(Self {
            tickers,
            dates,
            returns,
        })
    }

    /// Builds a panel from aligned per-asset series, which must share one
    /// trading calendar exactly. The panel's days are the return days, i.e.
    /// each aligned series' dates without the first.
    pub fn from_series(series: &[AlignedAssetSeries]) -> Result<Self, PortfolioError> {
        let first = series
            .first()
            .ok_or(PortfolioError::Insufficient { need: 1, got: 0 })?;
        for other in &series[1..] {
            if other.dates() != first.dates() {
                return Err(PortfolioError::CalendarMismatch(format!(
                    "{} and {} have different trading calendars",
                    first.ticker(),
                    other.ticker()
                )));
            }
        }
        Panel::new(
            series.iter().map(|s| s.ticker().to_string()).collect(),
            first.dates()[1..].to_vec(),
            series.iter().map(|s| s.returns().clone()).collect(),
        )
    }

    pub fn tickers(&self) -> &[String] {
        &self.tickers
    }

    pub fn dates(&self) -> &[NaiveDate] {
        &self.dates
    }

    pub fn returns(&self) -> &[ReturnSeries] {
        &self.returns
    }

    pub fn n_assets(&self) -> usize {
        self.tickers.len()
    }

    pub fn n_days(&self) -> usize {
        self.dates.len()
    }

    /// Restriction to the days inside `window`.
    pub fn window(&self, window: DateRange) -> Result<Panel, PortfolioError> {
        let keep: Vec<usize> = (0..self.n_days())
            .filter(|&t| window.contains(self.dates[t]))
            .collect();
        let returns = self
            .returns
            .iter()
            .map(|series| {
                ReturnSeries::new(keep.iter().map(|&t| series[t]).collect())
                    .expect("subset of valid returns")
            })
            .collect();
        Panel::new(
            self.tickers.clone(),
            keep.iter().map(|&t| self.dates[t]).collect(),
            returns,
        )
    }
}

/// One day of the strategy portfolio: which assets are long and the equal
/// weight each receives (0 on all-cash days).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DailyAllocation {
    pub date: NaiveDate,
    pub active: Vec<usize>,
    pub weight_each: f64,
}

fn check_positions(
    positions: &[PositionSeries],
    panel: &Panel,
) -> Result<(), PortfolioError> {
    if positions.len() != panel.n_assets() {
        return Err(PortfolioError::DimensionMismatch(format!(
            "{} position series for {} assets",
            positions.len(),
            panel.n_assets()
        )));
    }
    for (i, series) in positions.iter().enumerate() {
        if series.len() != panel.n_days() {
            return Err(PortfolioError::CalendarMismatch(format!(
                "{} has {} positions for {} days",
                panel.tickers[i],
                series.len(),
                panel.n_days()
            )));
        }
    }
    Ok(())
}

/// Per-day equal weights over the assets each strategy holds long.
pub fn daily_allocations(
    positions: &[PositionSeries],
    panel: &Panel,
) -> Result<Vec<DailyAllocation>, PortfolioError> {
    check_positions(positions, panel)?;
    Ok((0..panel.n_days())
        .map(|t| {
            let active: Vec<usize> = (0..panel.n_assets())
                .filter(|&a| positions[a][t] == Position::Long)
                .collect();
            let weight_each = if active.is_empty() {
                0.0
            } else {
                1.0 / active.len() as f64
            };
            DailyAllocation {
                date: panel.dates[t],
                active,
                weight_each,
            }
        })
        .collect())
}

/// Strategy portfolio returns: each day the mean return of the assets whose
/// strategies are long, zero on all-cash days. Implicit daily rebalancing.
pub fn compose_equal_weight(
    positions: &[PositionSeries],
    panel: &Panel,
) -> Result<ReturnSeries, PortfolioError> {
    check_positions(positions, panel)?;
    let out: Vec<f64> = (0..panel.n_days())
        .map(|t| {
            let mut sum = 0.0;
            let mut k = 0usize;
            for (pos, returns) in positions.iter().zip(&panel.returns) {
                if pos[t] == Position::Long {
                    sum += returns[t];
                    k += 1;
                }
            }
            if k == 0 {
                0.0
            } else {
                sum / k as f64
            }
        })
        .collect();
    Ok(ReturnSeries::new(out)?)
}

/// 1/N benchmark: the mean return across all assets, rebalanced daily.
pub fn one_over_n(panel: &Panel) -> Result<ReturnSeries, PortfolioError> {
    let n = panel.n_assets() as f64;
    let out: Vec<f64> = (0..panel.n_days())
        .map(|t| panel.returns.iter().map(|s| s[t]).sum::<f64>() / n)
        .collect();
    Ok(ReturnSeries::new(out)?)
}

/// Per-asset sample mean vector and sample covariance matrix (n−1 divisor)
/// over the panel days inside `window` (or all days when `None`).
pub fn estimate_inputs(
    panel: &Panel,
    window: Option<DateRange>,
) -> Result<(DVector<f64>, DMatrix<f64>), PortfolioError> {
    let windowed;
    let panel = match window {
        Some(w) => {
            windowed = panel.window(w)?;
            &windowed
        }
        None => panel,
    };
    let n = panel.n_assets();
    let t = panel.n_days();
    if t < 2 {
        return Err(PortfolioError::Insufficient { need: 2, got: t });
    }
    let means = DVector::from_fn(n, |a, _| {
        panel.returns[a].iter().sum::<f64>() / t as f64
    });
    let cov = DMatrix::from_fn(n, n, |a, b| {
        let (ma, mb) = (means[a], means[b]);
        panel.returns[a]
            .iter()
            .zip(panel.returns[b].iter())
            .map(|(x, y)| (x - ma) * (y - mb))
            .sum::<f64>()
            / (t - 1) as f64
    });
    Ok((means, cov))
}

/// Buy-and-hold portfolio returns: the initial value is split per `weights`
/// and holdings then drift with prices, never rebalanced.
pub fn portfolio_returns(
    weights: &PortfolioWeights,
    panel: &Panel,
) -> Result<ReturnSeries, PortfolioError> {
    if weights.len() != panel.n_assets() {
        return Err(PortfolioError::DimensionMismatch(format!(
            "{} weights for {} assets",
            weights.len(),
            panel.n_assets()
        )));
    }
    let mut holdings: Vec<f64> = weights.0.clone();
    let mut value: f64 = holdings.iter().sum();
    let mut out = Vec::with_capacity(panel.n_days());
    for t in 0..panel.n_days() {
        for (a, holding) in holdings.iter_mut().enumerate() {
            *holding *= 1.0 + panel.returns[a][t];
        }
        let next: f64 = holdings.iter().sum();
        out.push(next / value - 1.0);
        value = next;
    }
    Ok(ReturnSeries::new(out)?)
}

/// One frontier point: the solve outcome for a single target.
#[derive(Debug)]
pub struct FrontierPoint {
    pub target: f64,
    pub outcome: Result<MarkowitzSolution, PortfolioError>,
}

/// Solves the mean-variance problem across a list of targets using inputs
/// estimated from the panel. Infeasible targets are reported per point
/// without failing the rest.
pub fn frontier(panel: &Panel, targets: &[f64], long_only: bool) -> Result<Vec<FrontierPoint>, PortfolioError> {
    let (expected, covariance) = estimate_inputs(panel, None)?;
    Ok(targets
        .iter()
        .map(|&target| FrontierPoint {
            target,
            outcome: QpProblem::new(expected.clone(), covariance.clone(), target, long_only)
                .and_then(|p| solve_markowitz(&p)),
        })
        .collect())
}

/// Reads a dates-by-tickers return matrix CSV (header `date,T1,T2,…`) into a
/// panel. Rows may arrive unsorted; duplicate dates are rejected.
pub fn read_returns_matrix(path: &Path) -> Result<Panel, PortfolioError> {
    let bad = |message: String| PortfolioError::BadMatrix {
        path: path.display().to_string(),
        message,
    };
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| bad(e.to_string()))?;
    let headers = reader.headers().map_err(|e| bad(e.to_string()))?;
    let mut columns = headers.iter();
    if columns.next() != Some("date") {
        return Err(bad("first column must be date".to_string()));
    }
    let tickers: Vec<String> = columns.map(str::to_string).collect();
    if tickers.is_empty() {
        return Err(bad("no ticker columns".to_string()));
    }
    let mut rows: Vec<(NaiveDate, Vec<f64>)> = Vec::new();
    for result in reader.records() {
        let record = result.map_err(|e| bad(e.to_string()))?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() != tickers.len() + 1 {
            return Err(bad(format!("line {line}: wrong column count")));
        }
        let date = NaiveDate::parse_from_str(&record[0], "%Y-%m-%d")
            .map_err(|e| bad(format!("line {line}: bad date: {e}")))?;
        let values = record
            .iter()
            .skip(1)
            .map(|v| v.parse::<f64>())
            .collect::<Result<Vec<f64>, _>>()
            .map_err(|e| bad(format!("line {line}: bad return: {e}")))?;
        rows.push((date, values));
    }
    rows.sort_by_key(|(date, _)| *date);
    for pair in rows.windows(2) {
        if pair[0].0 == pair[1].0 {
            return Err(bad(format!("duplicate date {}", pair[0].0)));
        }
    }
    let dates: Vec<NaiveDate> = rows.iter().map(|(d, _)| *d).collect();
    let returns: Result<Vec<ReturnSeries>, MetricsError> = (0..tickers.len())
        .map(|a| ReturnSeries::new(rows.iter().map(|(_, v)| v[a]).collect()))
        .collect();
    Panel::new(tickers, dates, returns?)
}
