//! End-to-end pipeline behind the CLI: configuration, per-asset
//! optimization, backtests, portfolio comparison, and synthetic dataset
//! generation. This module owns every on-disk format.
//!
//! Determinism contract: given one config file and its data, every command
//! writes byte-identical output across reruns. All iteration follows the
//! config's ticker order and every float is formatted deterministically.

use crate::evolution::{
    self, evaluate_chromosome, grid_oracle, EvoError, Fitness, GaConfig, Objective,
};
use crate::market_data::{
    align, normalize, parse_price_csv, parse_sentiment_csv, synth_generate, AlignedAssetSeries,
    DataError, DateRange, NormalizedSentimentRecord, PriceBar,
};
use crate::metrics::{full_report, round_sig6, MetricsError, MetricsReport};
use crate::portfolio::{
    compose_equal_weight, estimate_inputs, one_over_n, portfolio_returns, solve_markowitz, Panel,
    PortfolioError, QpProblem,
};
use crate::strategy::{decode, simulate, strategy_returns, Chromosome, StrategyError};
use chrono::NaiveDate;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use thiserror::Error;

/// Pipeline failures, grouped by the process exit code they map to.
#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Data(String),
    #[error("{0}")]
    Infeasible(String),
}

impl PipelineError {
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Usage(_) => 1,
            PipelineError::Data(_) => 2,
            PipelineError::Infeasible(_) => 3,
        }
    }
}

impl From<DataError> for PipelineError {
    fn from(e: DataError) -> Self {
        PipelineError::Data(e.to_string())
    }
}

impl From<MetricsError> for PipelineError {
    fn from(e: MetricsError) -> Self {
        PipelineError::Data(e.to_string())
    }
}

impl From<StrategyError> for PipelineError {
    fn from(e: StrategyError) -> Self {
        PipelineError::Data(e.to_string())
    }
}

impl From<EvoError> for PipelineError {
    fn from(e: EvoError) -> Self {
        match e {
            EvoError::InvalidConfig(_) | EvoError::BadObjective { .. } => {
                PipelineError::Usage(e.to_string())
            }
            other => PipelineError::Data(other.to_string()),
        }
    }
}

impl From<PortfolioError> for PipelineError {
    fn from(e: PortfolioError) -> Self {
        match e {
            // an uncertifiable solve is an optimization failure, not bad data
            PortfolioError::Infeasible { .. } | PortfolioError::Numerical(_) => {
                PipelineError::Infeasible(e.to_string())
            }
            other => PipelineError::Data(other.to_string()),
        }
    }
}

fn io_err(path: &Path, e: std::io::Error) -> PipelineError {
    PipelineError::Data(format!("{}: {e}", path.display()))
}

/// Data locations for one asset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TickerPaths {
    pub ticker: String,
    pub sentiment: PathBuf,
    pub prices: PathBuf,
}

fn default_train() -> DateRange {
    DateRange::new(
        NaiveDate::from_ymd_opt(2010, 1, 1).unwrap(),
        NaiveDate::from_ymd_opt(2013, 12, 31).unwrap(),
    )
    .unwrap()
}

fn default_test() -> DateRange {
    DateRange::new(
        NaiveDate::from_ymd_opt(2014, 1, 1).unwrap(),
        NaiveDate::from_ymd_opt(2014, 12, 31).unwrap(),
    )
    .unwrap()
}

fn default_alpha() -> f64 {
    0.05
}

fn default_seed() -> u64 {
    42
}

fn default_out_dir() -> PathBuf {
    PathBuf::from("out")
}

fn default_long_only() -> bool {
    true
}

/// One run's full configuration. Relative data and output paths in the JSON
/// file are resolved against the config file's directory, so a config travels
/// with its data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub tickers: Vec<TickerPaths>,
    #[serde(default = "default_train")]
    pub train: DateRange,
    #[serde(default = "default_test")]
    pub test: DateRange,
    #[serde(default)]
    pub ga: GaConfig,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default = "default_out_dir")]
    pub out_dir: PathBuf,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default)]
    pub target_return: Option<f64>,
    #[serde(default = "default_long_only")]
    pub long_only: bool,
}

/// Command-line overrides applied on top of a loaded config.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub train: Option<DateRange>,
    pub test: Option<DateRange>,
    pub generations: Option<usize>,
    pub objective: Option<Objective>,
}

impl RunConfig {
    pub fn load(path: &Path, overrides: &Overrides) -> Result<RunConfig, PipelineError> {
        let text = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
        let mut config: RunConfig = serde_json::from_str(&text)
            .map_err(|e| PipelineError::Usage(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        for ticker in &mut config.tickers {
            ticker.sentiment = resolve(base, &ticker.sentiment);
            ticker.prices = resolve(base, &ticker.prices);
        }
        config.out_dir = resolve(base, &config.out_dir);

        if let Some(seed) = overrides.seed {
            config.seed = seed;
        }
        if let Some(out) = &overrides.out {
            config.out_dir = out.clone();
        }
        if let Some(train) = overrides.train {
            config.train = train;
        }
        if let Some(test) = overrides.test {
            config.test = test;
        }
        if let Some(generations) = overrides.generations {
            config.ga.generations = generations;
        }
        if let Some(objective) = &overrides.objective {
            config.ga.objective = objective.clone();
        }
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        if self.tickers.is_empty() {
            return Err(PipelineError::Usage("no tickers configured".to_string()));
        }
        let mut seen = BTreeSet::new();
        for ticker in &self.tickers {
            if !seen.insert(&ticker.ticker) {
                return Err(PipelineError::Usage(format!(
                    "duplicate ticker {}",
                    ticker.ticker
                )));
            }
        }
        if self.train.to >= self.test.from {
            return Err(PipelineError::Usage(format!(
                "train window {} must end before the test window {} begins",
                self.train, self.test
            )));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(PipelineError::Usage(format!(
                "alpha {} outside (0, 1)",
                self.alpha
            )));
        }
        self.ga.validate()?;
        Ok(())
    }
}

fn resolve(base: &Path, path: &Path) -> PathBuf {
    if path.is_absolute() {
        path.to_path_buf()
    } else {
        base.join(path)
    }
}

/// FNV-1a over the master seed's little-endian bytes followed by the label,
/// giving each asset an independent reproducible stream.
pub fn derive_seed(master: u64, label: &str) -> u64 {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for byte in master.to_le_bytes().into_iter().chain(label.bytes()) {
        hash ^= byte as u64;
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}

fn write_text(path: &Path, text: &str) -> Result<(), PipelineError> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| io_err(parent, e))?;
    }
    std::fs::write(path, text).map_err(|e| io_err(path, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), PipelineError> {
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|e| PipelineError::Data(format!("serializing {}: {e}", path.display())))?;
    text.push('\n');
    write_text(path, &text)
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, PipelineError> {
    let text = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    serde_json::from_str(&text).map_err(|e| PipelineError::Data(format!("{}: {e}", path.display())))
}

/// Deterministic shortest formatting of a 6-significant-digit rounding.
fn fmt6(x: f64) -> String {
    format!("{}", round_sig6(x))
}

fn fmt_sharpe(value: Option<f64>) -> String {
    match value {
        Some(x) => fmt6(x),
        None => "degenerate".to_string(),
    }
}

// ---------------------------------------------------------------------------
// synth

/// Record of what the generator planted for one asset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthAsset {
    pub ticker: String,
    pub seed: u64,
    pub chromosome: Chromosome,
    pub display: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthManifest {
    pub seed: u64,
    pub days: usize,
    pub edge: f64,
    pub assets: Vec<SynthAsset>,
}

/// Generates `n_assets` planted-rule datasets under `out`: per-asset
/// sentiment and price CSVs, a manifest of the planted chromosomes, and a
/// ready-to-run config with a 70/30 train/test split.
pub fn cmd_synth(
    seed: u64,
    n_assets: usize,
    days: usize,
    edge: f64,
    out: &Path,
) -> Result<(), PipelineError> {
    if n_assets == 0 {
        return Err(PipelineError::Usage("need at least one asset".to_string()));
    }
    let mut assets = Vec::with_capacity(n_assets);
    let mut tickers = Vec::with_capacity(n_assets);
    let mut calendar: Option<Vec<NaiveDate>> = None;
    for index in 0..n_assets {
        let ticker = format!("SYN{:02}", index + 1);
        let asset_seed = derive_seed(seed, &ticker);
        let (plant, data) = pick_plant(asset_seed, days, edge)?;

        let mut sentiment_csv =
            String::from("date,i_bull_raw,i_bear_raw,n_bull,n_bear,n_total\n");
        for r in &data.sentiment {
            writeln!(
                sentiment_csv,
                "{},{:.4},{:.4},{},{},{}",
                r.date, r.bull_intensity_raw, r.bear_intensity_raw, r.n_bull, r.n_bear, r.n_total
            )
            .expect("write to string");
        }
        let mut price_csv = String::from("date,close\n");
        for bar in &data.prices {
            writeln!(price_csv, "{},{:.6}", bar.date, bar.close).expect("write to string");
        }
        let sentiment_path = format!("data/{ticker}_sentiment.csv");
        let price_path = format!("data/{ticker}_prices.csv");
        write_text(&out.join(&sentiment_path), &sentiment_csv)?;
        write_text(&out.join(&price_path), &price_csv)?;

        calendar.get_or_insert_with(|| data.prices.iter().map(|b| b.date).collect());
        assets.push(SynthAsset {
            ticker: ticker.clone(),
            seed: asset_seed,
            display: plant.to_string(),
            chromosome: plant,
        });
        tickers.push(TickerPaths {
            ticker,
            sentiment: PathBuf::from(sentiment_path),
            prices: PathBuf::from(price_path),
        });
    }

    let manifest = SynthManifest {
        seed,
        days,
        edge,
        assets,
    };
    write_json(&out.join("manifest.json"), &manifest)?;

    // 70/30 split on the shared weekday calendar
    let calendar = calendar.expect("at least one asset generated");
    let split = ((days as f64) * 0.7) as usize;
    let config = RunConfig {
        tickers,
        train: DateRange::new(calendar[0], calendar[split]).map_err(PipelineError::from)?,
        test: DateRange::new(calendar[split + 1], calendar[days]).map_err(PipelineError::from)?,
        ga: GaConfig::default(),
        alpha: 0.05,
        out_dir: PathBuf::from("run"),
        seed,
        target_return: None,
        long_only: true,
    };
    write_json(&out.join("config.json"), &config)?;
    Ok(())
}

/// Draws candidate plants against the asset's fixed sentiment stream until
/// one spends between 10% and 90% of days long, so the planted signal is
/// neither trivial nor invisible.
fn pick_plant(
    asset_seed: u64,
    days: usize,
    edge: f64,
) -> Result<(Chromosome, crate::market_data::SynthData), PipelineError> {
    let mut plant_rng = ChaCha8Rng::seed_from_u64(derive_seed(asset_seed, "plant"));
    for _ in 0..1000 {
        let candidate = evolution::random_chromosome(&mut plant_rng);
        let data = synth_generate(asset_seed, days, &candidate, edge)?;
        let normalized: Vec<Option<NormalizedSentimentRecord>> =
            data.sentiment.iter().map(|r| Some(normalize(r))).collect();
        let positions = simulate(&decode(&candidate)?, &normalized, days)?;
        if (0.1..=0.9).contains(&positions.long_fraction()) {
            return Ok((candidate, data));
        }
    }
    Err(PipelineError::Data(
        "could not draw a plant with usable long/flat balance".to_string(),
    ))
}

// ---------------------------------------------------------------------------
// shared loading

struct LoadedTicker {
    ticker: String,
    sentiment: Vec<NormalizedSentimentRecord>,
    prices: Vec<PriceBar>,
}

fn load_ticker(paths: &TickerPaths) -> Result<LoadedTicker, PipelineError> {
    let raw = parse_sentiment_csv(&paths.sentiment).map_err(|e| {
        PipelineError::Data(format!("{}: {e}", paths.sentiment.display()))
    })?;
    let prices = parse_price_csv(&paths.prices)
        .map_err(|e| PipelineError::Data(format!("{}: {e}", paths.prices.display())))?;
    Ok(LoadedTicker {
        ticker: paths.ticker.clone(),
        sentiment: raw.iter().map(normalize).collect(),
        prices,
    })
}

fn align_ticker(
    loaded: &LoadedTicker,
    window: DateRange,
) -> Result<AlignedAssetSeries, PipelineError> {
    align(&loaded.ticker, &loaded.sentiment, &loaded.prices, window).map_err(|e| {
        PipelineError::Data(format!("{} over {window}: {e}", loaded.ticker))
    })
}

/// Aligns every ticker onto the intersection of their trading calendars
/// inside `window`, so multi-asset portfolios share one calendar even when
/// sources have asset-specific holes.
fn build_universe(
    loaded: &[&LoadedTicker],
    window: DateRange,
) -> Result<Vec<AlignedAssetSeries>, PipelineError> {
    let mut shared: Option<BTreeSet<NaiveDate>> = None;
    for ticker in loaded {
        let dates: BTreeSet<NaiveDate> = ticker
            .prices
            .iter()
            .map(|b| b.date)
            .filter(|d| window.contains(*d))
            .collect();
        shared = Some(match shared {
            None => dates,
            Some(s) => s.intersection(&dates).copied().collect(),
        });
    }
    let shared = shared.unwrap_or_default();
    if shared.len() < 2 {
        return Err(PipelineError::Data(format!(
            "window {window} has {} shared trading days across the universe; need at least 2",
            shared.len()
        )));
    }
    loaded
        .iter()
        .map(|ticker| {
            let bars: Vec<PriceBar> = ticker
                .prices
                .iter()
                .copied()
                .filter(|b| shared.contains(&b.date))
                .collect();
            align(&ticker.ticker, &ticker.sentiment, &bars, window)
                .map_err(|e| PipelineError::Data(format!("{}: {e}", ticker.ticker)))
        })
        .collect()
}

// ---------------------------------------------------------------------------
// optimize

/// Per-asset optimization result as written to `strategies/<ticker>.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategyFile {
    pub ticker: String,
    pub chromosome: Chromosome,
    pub display: String,
    pub fitness: Fitness,
    pub objective: String,
    pub alpha: f64,
    pub seed: u64,
    pub generations_run: usize,
    pub in_sample: MetricsReport,
}

fn strategy_path(config: &RunConfig, ticker: &str) -> PathBuf {
    config.out_dir.join("strategies").join(format!("{ticker}.json"))
}

/// Runs the GA per ticker over the train window. Failures on individual
/// tickers are reported and skipped; the command errors at the end if any
/// ticker failed.
pub fn cmd_optimize(config: &RunConfig) -> Result<(), PipelineError> {
    let mut failures = Vec::new();
    let mut summary = String::from(
        "ticker,asset_cum_return,asset_std_dev,asset_sharpe,strategy_cum_return,strategy_std_dev,strategy_sharpe\n",
    );
    for paths in &config.tickers {
        match optimize_one(config, paths) {
            Ok(row) => summary.push_str(&row),
            Err(e) => {
                eprintln!("warning: skipping {}: {e}", paths.ticker);
                failures.push(paths.ticker.clone());
            }
        }
    }
    write_text(&config.out_dir.join("summary.csv"), &summary)?;
    if failures.is_empty() {
        Ok(())
    } else {
        Err(PipelineError::Data(format!(
            "optimization failed for {} of {} tickers: {}",
            failures.len(),
            config.tickers.len(),
            failures.join(", ")
        )))
    }
}

fn optimize_one(config: &RunConfig, paths: &TickerPaths) -> Result<String, PipelineError> {
    let loaded = load_ticker(paths)?;
    let series = align_ticker(&loaded, config.train)?;

    let mut ga = config.ga.clone();
    ga.alpha = config.alpha;
    ga.seed = derive_seed(config.seed, &loaded.ticker);
    let outcome = evolution::run(&ga, &series)?;

    let mut log = String::from("gen,best_fitness,mean_fitness,best_chromosome\n");
    for stats in &outcome.log {
        writeln!(
            log,
            "{},{},{},{}",
            stats.generation, stats.best_fitness, stats.mean_fitness, stats.best
        )
        .expect("write to string");
    }
    write_text(
        &config.out_dir.join("logs").join(format!("{}_ga.csv", loaded.ticker)),
        &log,
    )?;

    let file = StrategyFile {
        ticker: loaded.ticker.clone(),
        chromosome: outcome.best.chromosome,
        display: outcome.best.chromosome.to_string(),
        fitness: outcome.best.fitness,
        objective: ga.objective.to_string(),
        alpha: ga.alpha,
        seed: ga.seed,
        generations_run: outcome.log.len(),
        in_sample: outcome.best.metrics.rounded(),
    };
    write_json(&strategy_path(config, &loaded.ticker), &file)?;

    let asset = full_report(series.returns(), config.alpha)?;
    let strat = &outcome.best.metrics;
    Ok(format!(
        "{},{},{},{},{},{},{}\n",
        loaded.ticker,
        fmt6(asset.cum_return),
        fmt6(asset.std_dev),
        fmt_sharpe(asset.sharpe_like),
        fmt6(strat.cum_return),
        fmt6(strat.std_dev),
        fmt_sharpe(strat.sharpe_like),
    ))
}

// ---------------------------------------------------------------------------
// backtest

/// In- and out-of-sample reports for one strategy, as written to
/// `backtests/<ticker>.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BacktestFile {
    pub ticker: String,
    pub chromosome: Chromosome,
    pub display: String,
    pub train: MetricsReport,
    pub test: MetricsReport,
}

/// Re-simulates every optimized strategy over both windows and writes the
/// two metric reports per ticker.
pub fn cmd_backtest(config: &RunConfig) -> Result<(), PipelineError> {
    let mut failures = Vec::new();
    for paths in &config.tickers {
        match backtest_one(config, paths) {
            Ok(()) => {}
            Err(e) => {
                eprintln!("warning: skipping {}: {e}", paths.ticker);
                failures.push(paths.ticker.clone());
            }
        }
    }
    if failures.is_empty() {
        Ok(())
    } else {
        Err(PipelineError::Data(format!(
            "backtest failed for {} of {} tickers: {}",
            failures.len(),
            config.tickers.len(),
            failures.join(", ")
        )))
    }
}

fn window_report(
    loaded: &LoadedTicker,
    chromosome: &Chromosome,
    window: DateRange,
    alpha: f64,
) -> Result<MetricsReport, PipelineError> {
    let series = align_ticker(loaded, window)?;
    let rules = decode(chromosome)?;
    let positions = simulate(&rules, series.sentiment(), series.n_returns())?;
    let returns = strategy_returns(&positions, series.returns())?;
    Ok(full_report(&returns, alpha)?)
}

fn backtest_one(config: &RunConfig, paths: &TickerPaths) -> Result<(), PipelineError> {
    let strategy: StrategyFile = read_json(&strategy_path(config, &paths.ticker))?;
    let loaded = load_ticker(paths)?;
    let file = BacktestFile {
        ticker: paths.ticker.clone(),
        chromosome: strategy.chromosome,
        display: strategy.chromosome.to_string(),
        train: window_report(&loaded, &strategy.chromosome, config.train, config.alpha)?.rounded(),
        test: window_report(&loaded, &strategy.chromosome, config.test, config.alpha)?.rounded(),
    };
    write_json(
        &config.out_dir.join("backtests").join(format!("{}.json", paths.ticker)),
        &file,
    )
}

// ---------------------------------------------------------------------------
// compare

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightRow {
    pub ticker: String,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarkowitzReport {
    pub target_return: f64,
    pub variance: f64,
    pub kkt_residual: f64,
    pub weights: Vec<WeightRow>,
    pub metrics: MetricsReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PortfolioReport {
    pub metrics: MetricsReport,
}

/// Train-window performance triple, one row of the in-sample table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TriMetric {
    pub cum_return: f64,
    pub std_dev: f64,
    pub sharpe_like: Option<f64>,
}

impl TriMetric {
    fn from_report(report: &MetricsReport) -> TriMetric {
        let rounded = report.rounded();
        TriMetric {
            cum_return: rounded.cum_return,
            std_dev: rounded.std_dev,
            sharpe_like: rounded.sharpe_like,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InSampleRow {
    pub ticker: String,
    pub asset: TriMetric,
    pub strategy: TriMetric,
}

/// The comparison artifact: all three portfolios' out-of-sample metrics over
/// one shared test calendar, plus the per-asset in-sample table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub test_window: DateRange,
    pub tickers: Vec<String>,
    pub markowitz: MarkowitzReport,
    pub one_over_n: PortfolioReport,
    pub evolutionary: PortfolioReport,
    pub in_sample: Vec<InSampleRow>,
}

/// Builds the three portfolios out-of-sample and writes the comparison
/// report, the risk-metric table, wealth curves, and the weight allocation.
pub fn cmd_compare(config: &RunConfig) -> Result<(), PipelineError> {
    // partial-universe tolerance: drop tickers lacking data or a strategy
    let mut universe: Vec<(LoadedTicker, StrategyFile)> = Vec::new();
    let mut missing = Vec::new();
    for paths in &config.tickers {
        let outcome = read_json::<StrategyFile>(&strategy_path(config, &paths.ticker))
            .and_then(|strategy| Ok((load_ticker(paths)?, strategy)));
        match outcome {
            Ok(pair) => universe.push(pair),
            Err(e) => {
                eprintln!("warning: excluding {}: {e}", paths.ticker);
                missing.push(paths.ticker.clone());
            }
        }
    }
    if universe.is_empty() {
        return Err(PipelineError::Data(
            "no ticker has both data and an optimized strategy".to_string(),
        ));
    }

    let loaded: Vec<&LoadedTicker> = universe.iter().map(|(l, _)| l).collect();
    let train_series = build_universe(&loaded, config.train)?;
    let test_series = build_universe(&loaded, config.test)?;
    let train_panel = Panel::from_series(&train_series).map_err(PipelineError::from)?;
    let test_panel = Panel::from_series(&test_series).map_err(PipelineError::from)?;

    // evolutionary portfolio: daily equal weight over long strategies
    let mut positions = Vec::with_capacity(universe.len());
    for ((_, strategy), series) in universe.iter().zip(&test_series) {
        let rules = decode(&strategy.chromosome)?;
        positions.push(simulate(&rules, series.sentiment(), series.n_returns())?);
    }
    let evolutionary_returns =
        compose_equal_weight(&positions, &test_panel).map_err(PipelineError::from)?;

    // baselines
    let one_over_n_returns = one_over_n(&test_panel).map_err(PipelineError::from)?;
    let (expected, covariance) =
        estimate_inputs(&train_panel, None).map_err(PipelineError::from)?;
    let target = config.target_return.unwrap_or(expected.mean());
    let problem = QpProblem::new(expected, covariance, target, config.long_only)
        .map_err(PipelineError::from)?;
    let solution = solve_markowitz(&problem).map_err(PipelineError::from)?;
    let markowitz_returns =
        portfolio_returns(&solution.weights, &test_panel).map_err(PipelineError::from)?;

    let markowitz_metrics = full_report(&markowitz_returns, config.alpha)?;
    let one_over_n_metrics = full_report(&one_over_n_returns, config.alpha)?;
    let evolutionary_metrics = full_report(&evolutionary_returns, config.alpha)?;

    // in-sample table over the shared train calendar
    let mut in_sample = Vec::with_capacity(universe.len());
    for ((_, strategy), series) in universe.iter().zip(&train_series) {
        let asset = full_report(series.returns(), config.alpha)?;
        let rules = decode(&strategy.chromosome)?;
        let train_positions = simulate(&rules, series.sentiment(), series.n_returns())?;
        let strat_returns = strategy_returns(&train_positions, series.returns())?;
        let strat = full_report(&strat_returns, config.alpha)?;
        in_sample.push(InSampleRow {
            ticker: series.ticker().to_string(),
            asset: TriMetric::from_report(&asset),
            strategy: TriMetric::from_report(&strat),
        });
    }

    let report = ComparisonReport {
        test_window: config.test,
        tickers: test_panel.tickers().to_vec(),
        markowitz: MarkowitzReport {
            target_return: target,
            variance: solution.variance,
            kkt_residual: solution.kkt_residual,
            weights: test_panel
                .tickers()
                .iter()
                .zip(solution.weights.as_slice())
                .map(|(ticker, &weight)| WeightRow {
                    ticker: ticker.clone(),
                    weight,
                })
                .collect(),
            metrics: markowitz_metrics.rounded(),
        },
        one_over_n: PortfolioReport {
            metrics: one_over_n_metrics.rounded(),
        },
        evolutionary: PortfolioReport {
            metrics: evolutionary_metrics.rounded(),
        },
        in_sample,
    };
    write_json(&config.out_dir.join("compare.json"), &report)?;

    // risk-metric table, one row per tail/dispersion metric
    type Getter = fn(&MetricsReport) -> f64;
    let mut risk = String::from("metric,markowitz,one_over_n,evolutionary\n");
    let rows: [(&str, Getter); 5] = [
        ("semi_dev", |r| r.semi_dev),
        ("downside_dev", |r| r.downside_dev),
        ("max_drawdown", |r| r.max_drawdown),
        ("var_95", |r| r.var_alpha),
        ("es_95", |r| r.es_alpha),
    ];
    for (name, get) in rows {
        writeln!(
            risk,
            "{},{},{},{}",
            name,
            fmt6(get(&markowitz_metrics)),
            fmt6(get(&one_over_n_metrics)),
            fmt6(get(&evolutionary_metrics)),
        )
        .expect("write to string");
    }
    write_text(&config.out_dir.join("risk_metrics.csv"), &risk)?;

    // cumulative wealth curves for external plotting
    let mut wealth = String::from("date,markowitz,one_over_n,evolutionary\n");
    let mut w = [1.0f64; 3];
    for (t, date) in test_panel.dates().iter().enumerate() {
        w[0] *= 1.0 + markowitz_returns[t];
        w[1] *= 1.0 + one_over_n_returns[t];
        w[2] *= 1.0 + evolutionary_returns[t];
        writeln!(wealth, "{},{},{},{}", date, fmt6(w[0]), fmt6(w[1]), fmt6(w[2]))
            .expect("write to string");
    }
    write_text(&config.out_dir.join("wealth_curves.csv"), &wealth)?;

    // mean-variance allocation, full precision so the budget sums exactly
    let mut weights_csv = String::from("ticker,weight\n");
    for row in &report.markowitz.weights {
        writeln!(weights_csv, "{},{}", row.ticker, row.weight).expect("write to string");
    }
    write_text(&config.out_dir.join("weights.csv"), &weights_csv)?;

    if missing.is_empty() {
        Ok(())
    } else {
        Err(PipelineError::Data(format!(
            "comparison ran on a reduced universe; missing: {}",
            missing.join(", ")
        )))
    }
}

/// Convenience for tests and bindings: the grid-oracle fitness on a config's
/// train window for one ticker.
pub fn oracle_fitness(
    config: &RunConfig,
    ticker: &str,
    step: f64,
) -> Result<Fitness, PipelineError> {
    let paths = config
        .tickers
        .iter()
        .find(|t| t.ticker == ticker)
        .ok_or_else(|| PipelineError::Usage(format!("unknown ticker {ticker}")))?;
    let loaded = load_ticker(paths)?;
    let series = align_ticker(&loaded, config.train)?;
    let record = grid_oracle(&series, step, &config.ga.objective, config.alpha)?;
    Ok(record.fitness)
}

/// Convenience for tests and bindings: evaluate one chromosome on a config's
/// train window.
pub fn train_fitness(
    config: &RunConfig,
    ticker: &str,
    chromosome: &Chromosome,
) -> Result<Fitness, PipelineError> {
    let paths = config
        .tickers
        .iter()
        .find(|t| t.ticker == ticker)
        .ok_or_else(|| PipelineError::Usage(format!("unknown ticker {ticker}")))?;
    let loaded = load_ticker(paths)?;
    let series = align_ticker(&loaded, config.train)?;
    let record = evaluate_chromosome(chromosome, &series, &config.ga.objective, config.alpha)?;
    Ok(record.fitness)
}
