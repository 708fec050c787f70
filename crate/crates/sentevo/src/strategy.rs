//! Rule chromosomes and the long/flat position simulator.
//!
//! A strategy is an eight-gene chromosome: four inclusion flags and four
//! thresholds in [0, 1]. The flags select which sentiment conditions take
//! part in the entry conjunction (bull side) and the exit conjunction (bear
//! side); each side must include at least one condition.

use crate::market_data::NormalizedSentimentRecord;
use crate::metrics::{MetricsError, ReturnSeries};
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;
use thiserror::Error;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum StrategyError {
    #[error("invalid flag assignment: each of the entry pair and exit pair needs at least one active flag")]
    InvalidFlags,
    #[error("threshold {index} is {value}, outside [0, 1]")]
    ThresholdOutOfRange { index: usize, value: f64 },
    #[error("cannot parse chromosome from {input:?}: {reason}")]
    Parse { input: String, reason: String },
    #[error("sentiment series has {sentiment} entries but {expected} dates are covered")]
    LengthMismatch { sentiment: usize, expected: usize },
    #[error(transparent)]
    Metrics(#[from] MetricsError),
}

/// The nine flag assignments satisfying both pair constraints, in a fixed
/// order: entry pair cycles (1,0), (0,1), (1,1) outer, exit pair inner.
pub const VALID_FLAG_SETS: [[bool; 4]; 9] = [
    [true, false, true, false],
    [true, false, false, true],
    [true, false, true, true],
    [false, true, true, false],
    [false, true, false, true],
    [false, true, true, true],
    [true, true, true, false],
    [true, true, false, true],
    [true, true, true, true],
];

/// Eight-gene strategy encoding: inclusion flags then thresholds, both in
/// gene order (bull intensity, bull ratio, bear intensity, bear ratio).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Chromosome {
    pub flags: [bool; 4],
    pub thresholds: [f64; 4],
}

impl Chromosome {
    /// Validating constructor. Flags must satisfy both pair constraints and
    /// thresholds must lie in [0, 1].
    pub fn new(flags: [bool; 4], thresholds: [f64; 4]) -> Result<Self, StrategyError> {
        if !flags_valid(flags) {
            return Err(StrategyError::InvalidFlags);
        }
        for (index, &value) in thresholds.iter().enumerate() {
            if !(0.0..=1.0).contains(&value) {
                return Err(StrategyError::ThresholdOutOfRange { index, value });
            }
        }
        Ok(Self { flags, thresholds })
    }

    /// Unchecked constructor for material that will pass through [`repair`].
    pub fn new_unchecked(flags: [bool; 4], thresholds: [f64; 4]) -> Self {
        Self { flags, thresholds }
    }

    pub fn is_valid(&self) -> bool {
        flags_valid(self.flags)
            && self
                .thresholds
                .iter()
                .all(|v| (0.0..=1.0).contains(v))
    }

    /// Total order: flags lexicographically (false < true), then thresholds
    /// by IEEE total order. Used for deterministic tie-breaking.
    pub fn lex_cmp(&self, other: &Self) -> Ordering {
        self.flags
            .cmp(&other.flags)
            .then_with(|| {
                for (a, b) in self.thresholds.iter().zip(other.thresholds.iter()) {
                    let ord = a.total_cmp(b);
                    if ord != Ordering::Equal {
                        return ord;
                    }
                }
                Ordering::Equal
            })
    }
}

fn flags_valid(flags: [bool; 4]) -> bool {
    (flags[0] || flags[1]) && (flags[2] || flags[3])
}

impl fmt::Display for Chromosome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let b = |x: bool| if x { 1 } else { 0 };
        write!(
            f,
            "({},{},{},{},{:.4},{:.4},{:.4},{:.4})",
            b(self.flags[0]),
            b(self.flags[1]),
            b(self.flags[2]),
            b(self.flags[3]),
            self.thresholds[0],
            self.thresholds[1],
            self.thresholds[2],
            self.thresholds[3],
        )
    }
}

impl FromStr for Chromosome {
    type Err = StrategyError;

    fn from_str(s: &str) -> Result<Self, StrategyError> {
        let err = |reason: &str| StrategyError::Parse {
            input: s.to_string(),
            reason: reason.to_string(),
        };
        let inner = s
            .trim()
            .strip_prefix('(')
            .and_then(|rest| rest.strip_suffix(')'))
            .ok_or_else(|| err("expected surrounding parentheses"))?;
        let parts: Vec<&str> = inner.split(',').map(str::trim).collect();
        if parts.len() != 8 {
            return Err(err("expected 8 comma-separated genes"));
        }
        let mut flags = [false; 4];
        for (i, part) in parts[..4].iter().enumerate() {
            flags[i] = match *part {
                "0" => false,
                "1" => true,
                other => return Err(err(&format!("flag gene {i} is {other:?}, expected 0 or 1"))),
            };
        }
        let mut thresholds = [0.0; 4];
        for (i, part) in parts[4..].iter().enumerate() {
            thresholds[i] = part
                .parse::<f64>()
                .map_err(|e| err(&format!("threshold gene {i}: {e}")))?;
        }
        Chromosome::new(flags, thresholds)
    }
}

/// Replaces invalid genes in place, returning a chromosome that always
/// satisfies the invariants:
/// - a pair of flags that are both inactive has one of the two activated,
///   chosen uniformly at random;
/// - non-finite thresholds become 0, finite ones are clamped to [0, 1].
pub fn repair<R: Rng + ?Sized>(chromosome: &Chromosome, rng: &mut R) -> Chromosome {
    let mut flags = chromosome.flags;
    if !flags[0] && !flags[1] {
        if rng.random_bool(0.5) {
            flags[0] = true;
        } else {
            flags[1] = true;
        }
    }
    if !flags[2] && !flags[3] {
        if rng.random_bool(0.5) {
            flags[2] = true;
        } else {
            flags[3] = true;
        }
    }
    let mut thresholds = chromosome.thresholds;
    for v in &mut thresholds {
        if !v.is_finite() {
            *v = 0.0;
        } else {
            *v = v.clamp(0.0, 1.0);
        }
    }
    Chromosome { flags, thresholds }
}

/// A sentiment field a rule condition reads.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SentimentField {
    BullIntensity,
    BullRatio,
    BearIntensity,
    BearRatio,
}

impl SentimentField {
    fn read(&self, record: &NormalizedSentimentRecord) -> f64 {
        match self {
            SentimentField::BullIntensity => record.bull_intensity,
            SentimentField::BullRatio => record.bull_ratio,
            SentimentField::BearIntensity => record.bear_intensity,
            SentimentField::BearRatio => record.bear_ratio,
        }
    }
}

impl fmt::Display for SentimentField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            SentimentField::BullIntensity => "bull_intensity",
            SentimentField::BullRatio => "bull_ratio",
            SentimentField::BearIntensity => "bear_intensity",
            SentimentField::BearRatio => "bear_ratio",
        };
        f.write_str(name)
    }
}

/// One conjunct: field value must be at or above the threshold.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Condition {
    pub field: SentimentField,
    pub threshold: f64,
}

impl Condition {
    fn holds(&self, record: &NormalizedSentimentRecord) -> bool {
        self.field.read(record) >= self.threshold
    }
}

impl fmt::Display for Condition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} >= {:.4}", self.field, self.threshold)
    }
}

/// Decoded rule pair. Both condition lists are non-empty conjunctions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RuleSet {
    pub entry: Vec<Condition>,
    pub exit: Vec<Condition>,
}

impl fmt::Display for RuleSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let join = |conds: &[Condition]| {
            conds
                .iter()
                .map(Condition::to_string)
                .collect::<Vec<_>>()
                .join(" and ")
        };
        write!(f, "enter long if {}; exit if {}", join(&self.entry), join(&self.exit))
    }
}

const ENTRY_FIELDS: [SentimentField; 2] = [SentimentField::BullIntensity, SentimentField::BullRatio];
const EXIT_FIELDS: [SentimentField; 2] = [SentimentField::BearIntensity, SentimentField::BearRatio];

/// Expands a chromosome into its entry/exit conjunctions. Only thresholds of
/// active flags appear; inactive genes are ignored entirely.
pub fn decode(chromosome: &Chromosome) -> Result<RuleSet, StrategyError> {
    if !chromosome.is_valid() {
        return Err(StrategyError::InvalidFlags);
    }
    let pick = |fields: &[SentimentField; 2], offset: usize| {
        fields
            .iter()
            .enumerate()
            .filter(|(i, _)| chromosome.flags[offset + i])
            .map(|(i, &field)| Condition {
                field,
                threshold: chromosome.thresholds[offset + i],
            })
            .collect::<Vec<_>>()
    };
    Ok(RuleSet {
        entry: pick(&ENTRY_FIELDS, 0),
        exit: pick(&EXIT_FIELDS, 2),
    })
}

/// Market exposure on a given day: long the asset or flat in cash.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Position {
    Flat,
    Long,
}

/// Daily positions aligned to the return days of the simulated window:
/// entry i is the exposure earning the i-th return.
#[derive(Debug, Clone, PartialEq)]
pub struct PositionSeries(pub Vec<Position>);

impl PositionSeries {
    pub fn long_fraction(&self) -> f64 {
        if self.0.is_empty() {
            return 0.0;
        }
        let longs = self.0.iter().filter(|p| **p == Position::Long).count();
        longs as f64 / self.0.len() as f64
    }
}

impl std::ops::Deref for PositionSeries {
    type Target = [Position];

    fn deref(&self) -> &[Position] {
        &self.0
    }
}

/// Raw per-day signal from one rule set and one day's sentiment.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Signal {
    Enter,
    Exit,
    Hold,
}

/// Evaluates the rules on a single day's sentiment. Exit takes precedence
/// when both conjunctions hold; a missing record fires neither.
pub fn signal_for_day(rules: &RuleSet, record: Option<&NormalizedSentimentRecord>) -> Signal {
    let Some(record) = record else {
        return Signal::Hold;
    };
    if rules.exit.iter().all(|c| c.holds(record)) {
        Signal::Exit
    } else if rules.entry.iter().all(|c| c.holds(record)) {
        Signal::Enter
    } else {
        Signal::Hold
    }
}

/// Runs the position state machine over a window of daily sentiment.
///
/// `sentiment` covers the window's trading dates in order, one optional
/// record per date; there is one more date than there are returns. The
/// starting position is flat, and a signal observed on one date changes the
/// position that earns the following date's return, so the output has one
/// entry per return day and the final date's signal goes unused.
pub fn simulate(
    rules: &RuleSet,
    sentiment: &[Option<NormalizedSentimentRecord>],
    n_returns: usize,
) -> Result<PositionSeries, StrategyError> {
    if sentiment.len() != n_returns + 1 {
        return Err(StrategyError::LengthMismatch {
            sentiment: sentiment.len(),
            expected: n_returns + 1,
        });
    }
    let mut state = Position::Flat;
    let mut positions = Vec::with_capacity(n_returns);
    for record in sentiment.iter().take(n_returns) {
        match signal_for_day(rules, record.as_ref()) {
            Signal::Exit => state = Position::Flat,
            Signal::Enter => state = Position::Long,
            Signal::Hold => {}
        }
        positions.push(state);
    }
    Ok(PositionSeries(positions))
}

/// Applies positions to asset returns: long days pass the return through,
/// flat days earn zero.
pub fn strategy_returns(
    positions: &PositionSeries,
    asset_returns: &ReturnSeries,
) -> Result<ReturnSeries, StrategyError> {
    if positions.len() != asset_returns.len() {
        return Err(StrategyError::LengthMismatch {
            sentiment: positions.len(),
            expected: asset_returns.len(),
        });
    }
    let out: Vec<f64> = positions
        .iter()
        .zip(asset_returns.iter())
        .map(|(p, r)| match p {
            Position::Long => *r,
            Position::Flat => 0.0,
        })
        .collect();
    Ok(ReturnSeries::new(out)?)
}
