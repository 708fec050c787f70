//! Python bindings for the strategy-evolution library: chromosome handling,
//! risk metrics, the genetic optimizer, the mean-variance solver, and the
//! synthetic data generator.

use nalgebra::{DMatrix, DVector};
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::PyDict;
use sentevo::evolution::{self, GaConfig, Objective};
use sentevo::market_data::{AlignedAssetSeries, NormalizedSentimentRecord};
use sentevo::metrics::{full_report, MetricsReport, ReturnSeries};
use sentevo::portfolio::{solve_markowitz as qp_solve, QpProblem};
use sentevo::strategy;
use std::path::PathBuf;

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

/// 8-gene strategy genotype: four inclusion flags and four thresholds.
#[pyclass(frozen, from_py_object)]
#[derive(Clone)]
struct Chromosome {
    inner: strategy::Chromosome,
}

#[pymethods]
impl Chromosome {
    #[new]
    fn new(flags: [bool; 4], thresholds: [f64; 4]) -> PyResult<Self> {
        Ok(Chromosome {
            inner: strategy::Chromosome::new(flags, thresholds).map_err(value_err)?,
        })
    }

    /// Parse the display form "(b1,b2,b3,b4,v1,v2,v3,v4)".
    #[staticmethod]
    fn parse(text: &str) -> PyResult<Self> {
        Ok(Chromosome {
            inner: text.parse().map_err(value_err)?,
        })
    }

    #[getter]
    fn flags(&self) -> [bool; 4] {
        self.inner.flags
    }

    #[getter]
    fn thresholds(&self) -> [f64; 4] {
        self.inner.thresholds
    }

    fn is_valid(&self) -> bool {
        self.inner.is_valid()
    }

    /// Human-readable entry/exit rule conjunctions.
    fn rule_text(&self) -> PyResult<String> {
        Ok(strategy::decode(&self.inner).map_err(value_err)?.to_string())
    }

    fn __repr__(&self) -> String {
        self.inner.to_string()
    }

    fn __str__(&self) -> String {
        self.inner.to_string()
    }

    fn __eq__(&self, other: &Chromosome) -> bool {
        self.inner.flags == other.inner.flags
            && self.inner.thresholds == other.inner.thresholds
    }
}

/// Fix an invalid chromosome deterministically: each all-zero flag pair gets
/// one flag chosen by the seeded generator, thresholds are clamped to [0, 1].
#[pyfunction]
fn repair(chromosome: &Chromosome, seed: u64) -> Chromosome {
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    Chromosome {
        inner: strategy::repair(&chromosome.inner, &mut rng),
    }
}

fn report_to_dict<'py>(py: Python<'py>, report: &MetricsReport) -> PyResult<Bound<'py, PyDict>> {
    let dict = PyDict::new(py);
    dict.set_item("cum_return", report.cum_return)?;
    dict.set_item("std_dev", report.std_dev)?;
    dict.set_item("sharpe_like", report.sharpe_like)?;
    dict.set_item("max_drawdown", report.max_drawdown)?;
    dict.set_item("var_95", report.var_alpha)?;
    dict.set_item("es_95", report.es_alpha)?;
    dict.set_item("semi_dev", report.semi_dev)?;
    dict.set_item("downside_dev", report.downside_dev)?;
    dict.set_item("alpha", report.alpha)?;
    Ok(dict)
}

/// Full unannualized risk report over a daily return series.
#[pyfunction]
#[pyo3(signature = (returns, alpha = 0.05))]
fn metrics_report<'py>(
    py: Python<'py>,
    returns: Vec<f64>,
    alpha: f64,
) -> PyResult<Bound<'py, PyDict>> {
    let rs = ReturnSeries::new(returns).map_err(value_err)?;
    let report = full_report(&rs, alpha).map_err(value_err)?;
    report_to_dict(py, &report)
}

/// Evolve a trading rule on one asset.
///
/// `sentiment` holds one entry per calendar date (length = len(returns) + 1),
/// each either None or a tuple (bull_intensity, bull_ratio, bear_intensity,
/// bear_ratio) of already-normalized values in [0, 1].
#[pyfunction]
#[pyo3(signature = (sentiment, returns, seed = 42, generations = 100, objective = "sharpe_like", alpha = 0.05))]
fn run_ga<'py>(
    py: Python<'py>,
    sentiment: Vec<Option<(f64, f64, f64, f64)>>,
    returns: Vec<f64>,
    seed: u64,
    generations: usize,
    objective: &str,
    alpha: f64,
) -> PyResult<Bound<'py, PyDict>> {
    let base = chrono::NaiveDate::from_ymd_opt(2020, 1, 1).unwrap();
    let dates: Vec<chrono::NaiveDate> = (0..sentiment.len())
        .map(|i| base + chrono::Days::new(i as u64))
        .collect();
    let sentiment: Vec<Option<NormalizedSentimentRecord>> = sentiment
        .into_iter()
        .zip(&dates)
        .map(|(entry, &date)| {
            entry.map(|(bull_intensity, bull_ratio, bear_intensity, bear_ratio)| {
                NormalizedSentimentRecord {
                    date,
                    bull_intensity,
                    bear_intensity,
                    bull_ratio,
                    bear_ratio,
                    n_total: 1,
                }
            })
        })
        .collect();
    let series = AlignedAssetSeries::new(
        "PY".to_string(),
        dates,
        sentiment,
        ReturnSeries::new(returns).map_err(value_err)?,
    )
    .map_err(value_err)?;

    let cfg = GaConfig {
        seed,
        generations,
        alpha,
        objective: Objective::parse(objective).map_err(value_err)?,
        ..GaConfig::default()
    };
    let outcome = evolution::run(&cfg, &series).map_err(value_err)?;

    let dict = PyDict::new(py);
    dict.set_item(
        "chromosome",
        Chromosome {
            inner: outcome.best.chromosome,
        }
        .into_pyobject(py)?,
    )?;
    dict.set_item("display", outcome.best.chromosome.to_string())?;
    dict.set_item("fitness", outcome.best.fitness.value())?;
    dict.set_item("generations_run", outcome.log.len())?;
    dict.set_item("metrics", report_to_dict(py, &outcome.best.metrics)?)?;
    Ok(dict)
}

/// Minimum-variance weights meeting a target expected return under full
/// investment (and optionally no shorting). Returns weights, the achieved
/// variance, and the optimality certificate residual.
#[pyfunction]
#[pyo3(signature = (covariance, expected_returns, target = None, long_only = true))]
fn solve_markowitz<'py>(
    py: Python<'py>,
    covariance: Vec<Vec<f64>>,
    expected_returns: Vec<f64>,
    target: Option<f64>,
    long_only: bool,
) -> PyResult<Bound<'py, PyDict>> {
    let n = expected_returns.len();
    if covariance.len() != n || covariance.iter().any(|row| row.len() != n) {
        return Err(value_err(format!("covariance must be {n}x{n}")));
    }
    let cov = DMatrix::from_fn(n, n, |i, j| covariance[i][j]);
    let r = DVector::from_vec(expected_returns);
    let target = target.unwrap_or_else(|| r.mean());
    let problem = QpProblem::new(r, cov, target, long_only).map_err(value_err)?;
    let solution = qp_solve(&problem).map_err(value_err)?;

    let dict = PyDict::new(py);
    dict.set_item("weights", solution.weights.0)?;
    dict.set_item("variance", solution.variance)?;
    dict.set_item("kkt_residual", solution.kkt_residual)?;
    dict.set_item("target_return", target)?;
    Ok(dict)
}

/// Write a synthetic planted-rule dataset (CSVs, manifest, run config).
#[pyfunction]
#[pyo3(signature = (out_dir, seed = 42, n_assets = 10, days = 250, edge = 0.003))]
fn synth_dataset(
    out_dir: PathBuf,
    seed: u64,
    n_assets: usize,
    days: usize,
    edge: f64,
) -> PyResult<()> {
    sentevo::pipeline::cmd_synth(seed, n_assets, days, edge, &out_dir).map_err(value_err)
}

#[pymodule]
fn sentevo_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Chromosome>()?;
    m.add_function(wrap_pyfunction!(repair, m)?)?;
    m.add_function(wrap_pyfunction!(metrics_report, m)?)?;
    m.add_function(wrap_pyfunction!(run_ga, m)?)?;
    m.add_function(wrap_pyfunction!(solve_markowitz, m)?)?;
    m.add_function(wrap_pyfunction!(synth_dataset, m)?)?;
    Ok(())
}
