//! Sentiment-driven evolutionary trading strategies.
//!
//! The pipeline: daily sentiment and price CSVs are ingested and aligned
//! ([`market_data`]), an eight-gene rule chromosome encodes a long/flat
//! entry/exit rule pair ([`strategy`]), a mutation-only elitist genetic
//! algorithm searches for the rule maximizing a risk-adjusted objective
//! ([`evolution`]), and the per-asset winners are composed into an
//! equal-weight portfolio compared against mean-variance and 1/N baselines
//! ([`portfolio`]) under a common risk-metric suite ([`metrics`]).
//!
//! [`pipeline`] ties the stages together behind the `sentevo` command-line
//! interface and owns all file formats.

pub mod evolution;
pub mod market_data;
pub mod metrics;
pub mod pipeline;
pub mod portfolio;
pub mod strategy;

pub use evolution::{EvoError, Fitness, FitnessRecord, GaConfig, GaOutcome, Objective};
pub use market_data::{
    AlignedAssetSeries, DataError, DateRange, NormalizedSentimentRecord, PriceBar,
    RawSentimentRecord,
};
pub use metrics::{MetricsError, MetricsReport, ReturnSeries};
pub use portfolio::{MarkowitzSolution, Panel, PortfolioError, PortfolioWeights, QpProblem};
pub use strategy::{Chromosome, Position, PositionSeries, RuleSet, StrategyError};
