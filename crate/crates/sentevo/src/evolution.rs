//! Mutation-only elitist genetic algorithm over rule chromosomes.
//!
//! Each generation keeps the elite unchanged, adds mutants of elite parents
//! from three operators (flag flip, threshold redraw, threshold halving), and
//! injects fresh random chromosomes. Fitness evaluation is parallel but the
//! outcome is order-independent: ranking sorts by fitness with a
//! deterministic lexicographic tie-break.

use crate::market_data::AlignedAssetSeries;
use crate::metrics::{full_report, MetricsError, MetricsReport};
use crate::strategy::{
    decode, repair, simulate, strategy_returns, Chromosome, StrategyError, VALID_FLAG_SETS,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::cmp::Ordering;
use std::fmt;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum EvoError {
    #[error("invalid GA configuration: {0}")]
    InvalidConfig(String),
    #[error("population of {got} is smaller than the elite count {need}")]
    PopulationTooSmall { need: usize, got: usize },
    #[error("cannot parse objective {input:?}: {reason}")]
    BadObjective { input: String, reason: String },
    #[error("grid too large: {evals} evaluations exceed the 10^7 guard")]
    GridTooLarge { evals: usize },
    #[error("grid step {0} must split [0,1] into at most 21 levels")]
    BadGridStep(f64),
    #[error(transparent)]
    Strategy(#[from] StrategyError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
}

/// One metric of the report, addressable by its report key.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MetricField {
    CumReturn,
    StdDev,
    SharpeLike,
    MaxDrawdown,
    VarAlpha,
    EsAlpha,
    SemiDev,
    DownsideDev,
}

impl MetricField {
    pub const ALL: [MetricField; 8] = [
        MetricField::CumReturn,
        MetricField::StdDev,
        MetricField::SharpeLike,
        MetricField::MaxDrawdown,
        MetricField::VarAlpha,
        MetricField::EsAlpha,
        MetricField::SemiDev,
        MetricField::DownsideDev,
    ];

    pub fn key(&self) -> &'static str {
        match self {
            MetricField::CumReturn => "cum_return",
            MetricField::StdDev => "std_dev",
            MetricField::SharpeLike => "sharpe_like",
            MetricField::MaxDrawdown => "max_drawdown",
            MetricField::VarAlpha => "var_95",
            MetricField::EsAlpha => "es_95",
            MetricField::SemiDev => "semi_dev",
            MetricField::DownsideDev => "downside_dev",
        }
    }

    pub fn parse(name: &str) -> Option<MetricField> {
        Self::ALL.into_iter().find(|f| f.key() == name)
    }

    /// Reads the metric off a report; `None` only for an undefined ratio.
    pub fn extract(&self, report: &MetricsReport) -> Option<f64> {
        match self {
            MetricField::CumReturn => Some(report.cum_return),
            MetricField::StdDev => Some(report.std_dev),
            MetricField::SharpeLike => report.sharpe_like,
            MetricField::MaxDrawdown => Some(report.max_drawdown),
            MetricField::VarAlpha => Some(report.var_alpha),
            MetricField::EsAlpha => Some(report.es_alpha),
            MetricField::SemiDev => Some(report.semi_dev),
            MetricField::DownsideDev => Some(report.downside_dev),
        }
    }
}

/// What the search maximizes: a single report metric or a weighted sum of
/// them. Metrics where smaller is better enter with negative weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum Objective {
    Maximize(MetricField),
    Weighted(Vec<(f64, MetricField)>),
}

impl Objective {
    /// Objective value as a fitness; undefined inputs become the degenerate
    /// sentinel that ranks below every real value.
    pub fn score(&self, report: &MetricsReport) -> Fitness {
        let value = match self {
            Objective::Maximize(field) => field.extract(report),
            Objective::Weighted(terms) => terms
                .iter()
                .map(|(w, field)| field.extract(report).map(|x| w * x))
                .sum::<Option<f64>>(),
        };
        match value {
            Some(x) => Fitness::from_score(x),
            None => Fitness::Degenerate,
        }
    }

    pub fn parse(input: &str) -> Result<Objective, EvoError> {
        let bad = |reason: &str| EvoError::BadObjective {
            input: input.to_string(),
            reason: reason.to_string(),
        };
        let mut terms = Vec::new();
        for raw_term in input.split(',') {
            let term = raw_term.trim();
            if term.is_empty() {
                return Err(bad("empty term"));
            }
            let (negated, term) = match term.strip_prefix('-') {
                Some(rest) => (true, rest.trim()),
                None => (false, term),
            };
            let (weight, name) = match term.split_once('*') {
                Some((w, name)) => {
                    let weight: f64 = w
                        .trim()
                        .parse()
                        .map_err(|_| bad(&format!("bad weight {:?}", w.trim())))?;
                    if !weight.is_finite() {
                        return Err(bad("weight must be finite"));
                    }
                    (weight, name.trim())
                }
                None => (1.0, term),
            };
            let field = MetricField::parse(name).ok_or_else(|| {
                bad(&format!(
                    "unknown metric {name:?}; expected one of {}",
                    MetricField::ALL.map(|f| f.key()).join(", ")
                ))
            })?;
            terms.push((if negated { -weight } else { weight }, field));
        }
        match terms.as_slice() {
            [] => Err(bad("no terms")),
            [(w, field)] if *w == 1.0 => Ok(Objective::Maximize(*field)),
            _ => Ok(Objective::Weighted(terms)),
        }
    }
}

impl fmt::Display for Objective {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Objective::Maximize(field) => f.write_str(field.key()),
            Objective::Weighted(terms) => {
                let rendered: Vec<String> = terms
                    .iter()
                    .map(|(w, field)| {
                        if *w == 1.0 {
                            field.key().to_string()
                        } else if *w == -1.0 {
                            format!("-{}", field.key())
                        } else {
                            format!("{}*{}", w, field.key())
                        }
                    })
                    .collect();
                f.write_str(&rendered.join(","))
            }
        }
    }
}

impl std::str::FromStr for Objective {
    type Err = EvoError;

    fn from_str(s: &str) -> Result<Self, EvoError> {
        Objective::parse(s)
    }
}

impl From<Objective> for String {
    fn from(objective: Objective) -> String {
        objective.to_string()
    }
}

impl TryFrom<String> for Objective {
    type Error = String;

    fn try_from(s: String) -> Result<Objective, String> {
        Objective::parse(&s).map_err(|e| e.to_string())
    }
}

/// Search parameters. The steady-state population after generation zero is
/// `elite_count + 3·mutants_per_operator + random_injections`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GaConfig {
    pub init_pop_size: usize,
    pub elite_count: usize,
    pub mutants_per_operator: usize,
    pub random_injections: usize,
    pub generations: usize,
    pub stall_limit: usize,
    pub seed: u64,
    pub alpha: f64,
    pub objective: Objective,
}

impl Default for GaConfig {
    fn default() -> Self {
        Self {
            init_pop_size: 100,
            elite_count: 10,
            mutants_per_operator: 20,
            random_injections: 10,
            generations: 100,
            stall_limit: 25,
            seed: 42,
            alpha: 0.05,
            objective: Objective::Maximize(MetricField::SharpeLike),
        }
    }
}

impl GaConfig {
    pub fn validate(&self) -> Result<(), EvoError> {
        let counts = [
            ("init_pop_size", self.init_pop_size),
            ("elite_count", self.elite_count),
            ("mutants_per_operator", self.mutants_per_operator),
            ("random_injections", self.random_injections),
            ("generations", self.generations),
            ("stall_limit", self.stall_limit),
        ];
        for (name, value) in counts {
            if value == 0 {
                return Err(EvoError::InvalidConfig(format!("{name} must be at least 1")));
            }
        }
        if self.elite_count > self.init_pop_size {
            return Err(EvoError::InvalidConfig(format!(
                "elite_count {} exceeds init_pop_size {}",
                self.elite_count, self.init_pop_size
            )));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(EvoError::InvalidConfig(format!(
                "alpha {} outside (0, 1)",
                self.alpha
            )));
        }
        Ok(())
    }

    pub fn steady_state_size(&self) -> usize {
        self.elite_count + 3 * self.mutants_per_operator + self.random_injections
    }
}

/// Ranked objective value. `Degenerate` marks an undefined objective (a
/// never-trading rule under a ratio objective) and sorts strictly below every
/// real value; NaN scores are folded into it so ordering is total.
#[derive(Debug, Clone, Copy)]
pub enum Fitness {
    Degenerate,
    Value(f64),
}

impl Fitness {
    pub fn from_score(score: f64) -> Fitness {
        if score.is_nan() {
            Fitness::Degenerate
        } else if score == 0.0 {
            // normalize -0.0 so serialized output is sign-stable
            Fitness::Value(0.0)
        } else {
            Fitness::Value(score)
        }
    }

    pub fn value(&self) -> Option<f64> {
        match self {
            Fitness::Value(x) => Some(*x),
            Fitness::Degenerate => None,
        }
    }
}

impl PartialEq for Fitness {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Fitness {}

impl PartialOrd for Fitness {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Fitness {
    fn cmp(&self, other: &Self) -> Ordering {
        match (self, other) {
            (Fitness::Degenerate, Fitness::Degenerate) => Ordering::Equal,
            (Fitness::Degenerate, Fitness::Value(_)) => Ordering::Less,
            (Fitness::Value(_), Fitness::Degenerate) => Ordering::Greater,
            (Fitness::Value(a), Fitness::Value(b)) => a.total_cmp(b),
        }
    }
}

impl fmt::Display for Fitness {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Fitness::Degenerate => f.write_str("degenerate"),
            Fitness::Value(x) => write!(f, "{x}"),
        }
    }
}

impl Serialize for Fitness {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        self.value().serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for Fitness {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let value = Option::<f64>::deserialize(deserializer)?;
        Ok(match value {
            Some(x) => Fitness::from_score(x),
            None => Fitness::Degenerate,
        })
    }
}

/// A chromosome with its evaluated objective value and full metric report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitnessRecord {
    pub chromosome: Chromosome,
    pub fitness: Fitness,
    pub metrics: MetricsReport,
}

/// Ranking order: fitness descending, then chromosome lexicographic order
/// ascending. Total, so parallel evaluation order cannot leak into results.
pub fn rank_cmp(a: &FitnessRecord, b: &FitnessRecord) -> Ordering {
    b.fitness
        .cmp(&a.fitness)
        .then_with(|| a.chromosome.lex_cmp(&b.chromosome))
}

/// Unevaluated generation.
#[derive(Debug, Clone, PartialEq)]
pub struct Population {
    pub generation: usize,
    pub members: Vec<Chromosome>,
}

/// Evaluated generation, members sorted by [`rank_cmp`].
#[derive(Debug, Clone, PartialEq)]
pub struct EvaluatedPopulation {
    pub generation: usize,
    pub members: Vec<FitnessRecord>,
}

impl EvaluatedPopulation {
    pub fn best(&self) -> &FitnessRecord {
        &self.members[0]
    }

    /// Mean of the defined fitness values; NaN when every member is
    /// degenerate.
    pub fn mean_fitness(&self) -> f64 {
        let mut sum = 0.0;
        let mut n = 0usize;
        for member in &self.members {
            if let Fitness::Value(x) = member.fitness {
                sum += x;
                n += 1;
            }
        }
        if n == 0 {
            f64::NAN
        } else {
            sum / n as f64
        }
    }
}

/// Uniformly random valid chromosome: flags from the nine valid assignments,
/// thresholds uniform on the unit interval.
pub fn random_chromosome<R: Rng + ?Sized>(rng: &mut R) -> Chromosome {
    let flags = VALID_FLAG_SETS[rng.random_range(0..VALID_FLAG_SETS.len())];
    let thresholds = [
        rng.random::<f64>(),
        rng.random::<f64>(),
        rng.random::<f64>(),
        rng.random::<f64>(),
    ];
    Chromosome::new_unchecked(flags, thresholds)
}

pub fn init_population<R: Rng + ?Sized>(cfg: &GaConfig, rng: &mut R) -> Population {
    Population {
        generation: 0,
        members: (0..cfg.init_pop_size)
            .map(|_| random_chromosome(rng))
            .collect(),
    }
}

/// Simulates one chromosome on the series and scores it under the objective.
pub fn evaluate_chromosome(
    chromosome: &Chromosome,
    series: &AlignedAssetSeries,
    objective: &Objective,
    alpha: f64,
) -> Result<FitnessRecord, EvoError> {
    let rules = decode(chromosome)?;
    let positions = simulate(&rules, series.sentiment(), series.n_returns())?;
    let returns = strategy_returns(&positions, series.returns())?;
    let metrics = full_report(&returns, alpha)?;
    Ok(FitnessRecord {
        chromosome: *chromosome,
        fitness: objective.score(&metrics),
        metrics,
    })
}

/// Evaluates every member in parallel and sorts by [`rank_cmp`].
pub fn evaluate(
    pop: &Population,
    series: &AlignedAssetSeries,
    cfg: &GaConfig,
) -> Result<EvaluatedPopulation, EvoError> {
    let mut members = pop
        .members
        .par_iter()
        .map(|c| evaluate_chromosome(c, series, &cfg.objective, cfg.alpha))
        .collect::<Result<Vec<_>, _>>()?;
    members.sort_by(rank_cmp);
    Ok(EvaluatedPopulation {
        generation: pop.generation,
        members,
    })
}

/// Flips one uniformly chosen flag gene, then repairs.
pub fn mutate_flag_flip<R: Rng + ?Sized>(parent: &Chromosome, rng: &mut R) -> Chromosome {
    let mut flags = parent.flags;
    let index = rng.random_range(0..4);
    flags[index] = !flags[index];
    repair(&Chromosome::new_unchecked(flags, parent.thresholds), rng)
}

/// Replaces one uniformly chosen threshold with a fresh uniform draw.
pub fn mutate_v_random<R: Rng + ?Sized>(parent: &Chromosome, rng: &mut R) -> Chromosome {
    let mut thresholds = parent.thresholds;
    let index = rng.random_range(0..4);
    thresholds[index] = rng.random::<f64>();
    Chromosome::new_unchecked(parent.flags, thresholds)
}

/// Halves one uniformly chosen threshold, biasing the search toward the low
/// values typical of bearish intensity.
pub fn mutate_v_halve<R: Rng + ?Sized>(parent: &Chromosome, rng: &mut R) -> Chromosome {
    let mut thresholds = parent.thresholds;
    let index = rng.random_range(0..4);
    thresholds[index] /= 2.0;
    Chromosome::new_unchecked(parent.flags, thresholds)
}

/// Builds the next generation: the elite copied unchanged, then each
/// operator's mutants of uniformly drawn elite parents, then fresh random
/// injections.
pub fn next_generation<R: Rng + ?Sized>(
    pop: &EvaluatedPopulation,
    cfg: &GaConfig,
    rng: &mut R,
) -> Result<Population, EvoError> {
    if pop.members.len() < cfg.elite_count {
        return Err(EvoError::PopulationTooSmall {
            need: cfg.elite_count,
            got: pop.members.len(),
        });
    }
    let elites = &pop.members[..cfg.elite_count];
    let mut members: Vec<Chromosome> = Vec::with_capacity(cfg.steady_state_size());
    members.extend(elites.iter().map(|record| record.chromosome));

    let operators: [fn(&Chromosome, &mut R) -> Chromosome; 3] =
        [mutate_flag_flip, mutate_v_random, mutate_v_halve];
    for op in operators {
        for _ in 0..cfg.mutants_per_operator {
            let parent = &elites[rng.random_range(0..cfg.elite_count)].chromosome;
            members.push(op(parent, rng));
        }
    }
    for _ in 0..cfg.random_injections {
        members.push(random_chromosome(rng));
    }
    Ok(Population {
        generation: pop.generation + 1,
        members,
    })
}

/// One line of the per-generation search log.
#[derive(Debug, Clone, PartialEq)]
pub struct GenerationStats {
    pub generation: usize,
    pub best_fitness: Fitness,
    pub mean_fitness: f64,
    pub best: Chromosome,
}

/// Search result: the best record ever evaluated plus the generation log.
#[derive(Debug, Clone)]
pub struct GaOutcome {
    pub best: FitnessRecord,
    pub log: Vec<GenerationStats>,
}

/// Runs the full search: `cfg.generations` evaluated generations (the
/// initial population counts as the first), stopping early once the best
/// fitness has not improved for `stall_limit` consecutive generations.
/// Deterministic in `(cfg, series)`, independent of thread count.
pub fn run(cfg: &GaConfig, series: &AlignedAssetSeries) -> Result<GaOutcome, EvoError> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let pop = init_population(cfg, &mut rng);
    let mut evaluated = evaluate(&pop, series, cfg)?;
    let mut best = evaluated.best().clone();
    let mut log = vec![stats_of(&evaluated)];
    let mut stall = 0usize;
    for _ in 1..cfg.generations {
        let pop = next_generation(&evaluated, cfg, &mut rng)?;
        evaluated = evaluate(&pop, series, cfg)?;
        // stall counts strict fitness improvement; the incumbent also yields
        // to an equal-fitness chromosome that wins the lexicographic tie,
        // keeping the winner identical to the final population's head
        if evaluated.best().fitness > best.fitness {
            best = evaluated.best().clone();
            stall = 0;
        } else {
            if rank_cmp(evaluated.best(), &best) == std::cmp::Ordering::Less {
                best = evaluated.best().clone();
            }
            stall += 1;
        }
        log.push(stats_of(&evaluated));
        if stall >= cfg.stall_limit {
            break;
        }
    }
    Ok(GaOutcome { best, log })
}

fn stats_of(pop: &EvaluatedPopulation) -> GenerationStats {
    let best = pop.best();
    GenerationStats {
        generation: pop.generation,
        best_fitness: best.fitness,
        mean_fitness: pop.mean_fitness(),
        best: best.chromosome,
    }
}

/// Exhaustive search over all nine flag assignments with every ACTIVE
/// threshold on the grid `0, step, 2·step, …, 1` (inactive thresholds pinned
/// to 0). The step must split the unit interval into at most 21 levels and
/// the total evaluation count is guarded at 10^7.
pub fn grid_oracle(
    series: &AlignedAssetSeries,
    step: f64,
    objective: &Objective,
    alpha: f64,
) -> Result<FitnessRecord, EvoError> {
    if !(step > 0.0 && step <= 1.0) {
        return Err(EvoError::BadGridStep(step));
    }
    let segments = 1.0 / step;
    if (segments - segments.round()).abs() > 1e-9 {
        return Err(EvoError::BadGridStep(step));
    }
    let segments = segments.round() as usize;
    let levels = segments + 1;
    if levels > 21 {
        return Err(EvoError::BadGridStep(step));
    }

    let total: usize = VALID_FLAG_SETS
        .iter()
        .map(|flags| {
            flags
                .iter()
                .map(|&active| if active { levels } else { 1 })
                .product::<usize>()
        })
        .sum();
    if total > 10_000_000 {
        return Err(EvoError::GridTooLarge { evals: total });
    }

    let values: Vec<f64> = (0..levels).map(|k| k as f64 / segments as f64).collect();
    let pinned = [0.0];
    let mut best: Option<FitnessRecord> = None;
    for flags in VALID_FLAG_SETS {
        let choices: Vec<&[f64]> = flags
            .iter()
            .map(|&active| if active { values.as_slice() } else { &pinned[..] })
            .collect();
        let mut batch = Vec::with_capacity(
            choices.iter().map(|c| c.len()).product::<usize>(),
        );
        for &a in choices[0] {
            for &b in choices[1] {
                for &c in choices[2] {
                    for &d in choices[3] {
                        batch.push(Chromosome::new_unchecked(flags, [a, b, c, d]));
                    }
                }
            }
        }
        let batch_best = batch
            .par_iter()
            .map(|c| evaluate_chromosome(c, series, objective, alpha).map(Some))
            .try_reduce(|| None, |a, b| Ok(pick_better(a, b)))?;
        best = pick_better(best, batch_best);
    }
    Ok(best.expect("nine flag sets always yield at least one evaluation"))
}

fn pick_better(a: Option<FitnessRecord>, b: Option<FitnessRecord>) -> Option<FitnessRecord> {
    match (a, b) {
        (Some(a), Some(b)) => {
            if rank_cmp(&a, &b) == Ordering::Greater {
                Some(b)
            } else {
                Some(a)
            }
        }
        (a, None) => a,
        (None, b) => b,
    }
}
