//! Mean-variance quadratic program and its active-set solver.
//!
//! minimize xᵀCx  subject to  rᵀx ≥ μ,  Σx = 1,  and x ≥ 0 when long-only.
//!
//! The solver is a primal active-set method on the convex QP: it walks
//! between working sets, solving an equality-constrained subproblem per step,
//! and certifies the final point with an explicit KKT residual. Solutions are
//! only returned when that residual is at most 1e-8.

use super::{PortfolioError, PortfolioWeights};
use nalgebra::{DMatrix, DVector};
use serde::Serialize;

const KKT_TOLERANCE: f64 = 1e-8;
const JITTER: f64 = 1e-10;

/// Validated mean-variance problem instance.
#[derive(Debug, Clone)]
pub struct QpProblem {
    expected_returns: DVector<f64>,
    covariance: DMatrix<f64>,
    target: f64,
    long_only: bool,
}

impl QpProblem {
    /// Checks symmetry (1e-12), positive semidefiniteness (eigenvalues ≥
    /// −1e-10), dimension agreement, and feasibility of the target.
    pub fn new(
        expected_returns: DVector<f64>,
        covariance: DMatrix<f64>,
        target: f64,
        long_only: bool,
    ) -> Result<Self, PortfolioError> {
        let n = expected_returns.len();
        if n == 0 {
            return Err(PortfolioError::Insufficient { need: 1, got: 0 });
        }
        if covariance.nrows() != n || covariance.ncols() != n {
            return Err(PortfolioError::DimensionMismatch(format!(
                "{} expected returns but {}x{} covariance",
                n,
                covariance.nrows(),
                covariance.ncols()
            )));
        }
        if expected_returns.iter().any(|v| !v.is_finite())
            || covariance.iter().any(|v| !v.is_finite())
            || !target.is_finite()
        {
            return Err(PortfolioError::Numerical(
                "non-finite problem data".to_string(),
            ));
        }
        if (&covariance - covariance.transpose()).amax() > 1e-12 {
            return Err(PortfolioError::NotSymmetric);
        }
        let min_eig = nalgebra::SymmetricEigen::new(covariance.clone())
            .eigenvalues
            .min();
        if min_eig < -1e-10 {
            return Err(PortfolioError::NotPsd { min_eig });
        }
        let max_attainable = if long_only {
            expected_returns.max()
        } else if returns_constant(&expected_returns) {
            expected_returns[0]
        } else {
            f64::INFINITY
        };
        if target > max_attainable + 1e-12 {
            return Err(PortfolioError::Infeasible {
                target,
                max_attainable,
            });
        }
        Ok(Self {
            expected_returns,
            covariance,
            target,
            long_only,
        })
    }

    pub fn n_assets(&self) -> usize {
        self.expected_returns.len()
    }

    pub fn expected_returns(&self) -> &DVector<f64> {
        &self.expected_returns
    }

    pub fn covariance(&self) -> &DMatrix<f64> {
        &self.covariance
    }

    pub fn target(&self) -> f64 {
        self.target
    }

    pub fn long_only(&self) -> bool {
        self.long_only
    }
}

fn returns_constant(r: &DVector<f64>) -> bool {
    (r.max() - r.min()).abs() < 1e-14
}

/// Solved allocation with its optimality certificate.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MarkowitzSolution {
    pub weights: PortfolioWeights,
    pub variance: f64,
    pub kkt_residual: f64,
}

/// Inequality constraints by identity; the budget equality Σx = 1 is always
/// active and handled separately.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Constraint {
    /// rᵀx ≥ μ
    Return,
    /// x_i ≥ 0
    Bound(usize),
}

impl Constraint {
    fn row(&self, p: &QpProblem) -> DVector<f64> {
        match self {
            Constraint::Return => p.expected_returns.clone(),
            Constraint::Bound(i) => {
                let mut row = DVector::zeros(p.n_assets());
                row[*i] = 1.0;
                row
            }
        }
    }

    fn slack(&self, p: &QpProblem, x: &DVector<f64>) -> f64 {
        match self {
            Constraint::Return => p.expected_returns.dot(x) - p.target,
            Constraint::Bound(i) => x[*i],
        }
    }
}

fn all_inequalities(p: &QpProblem) -> Vec<Constraint> {
    let mut out = vec![Constraint::Return];
    if p.long_only {
        out.extend((0..p.n_assets()).map(Constraint::Bound));
    }
    out
}

/// Feasible starting point and its initially active working set.
fn initial_point(p: &QpProblem) -> (DVector<f64>, Vec<Constraint>) {
    let n = p.n_assets();
    if p.long_only {
        // vertex at the best-return asset: all other bounds active
        let best = p.expected_returns.imax();
        let mut x = DVector::zeros(n);
        x[best] = 1.0;
        let working = (0..n)
            .filter(|&i| i != best)
            .map(Constraint::Bound)
            .collect();
        (x, working)
    } else {
        // start on the budget plane, shifted along r until the target holds
        let mean = p.expected_returns.mean();
        let centered = p.expected_returns.add_scalar(-mean);
        let norm2 = centered.norm_squared();
        let mut x = DVector::from_element(n, 1.0 / n as f64);
        let mut working = Vec::new();
        if norm2 > 1e-24 {
            let t = ((p.target - mean) / norm2).max(0.0);
            if t > 0.0 {
                x += centered * t;
                working.push(Constraint::Return);
            }
        }
        (x, working)
    }
}

struct ActiveSetResult {
    x: DVector<f64>,
    working: Vec<Constraint>,
}

/// Primal active-set iteration. Returns the minimizer and the final working
/// set, or a description of the numerical failure.
fn active_set(p: &QpProblem, covariance: &DMatrix<f64>) -> Result<ActiveSetResult, String> {
    let n = p.n_assets();
    let (mut x, mut working) = initial_point(p);
    let inequalities = all_inequalities(p);
    let max_iterations = 50 + 10 * n * (if p.long_only { 2 } else { 1 });

    for _ in 0..max_iterations {
        // KKT system of the equality-constrained subproblem on the working
        // set plus the budget row:
        //   [2C Aᵀ][p]   [-g]
        //   [A  0 ][u] = [ 0]
        let k = 1 + working.len();
        let mut kkt = DMatrix::zeros(n + k, n + k);
        for i in 0..n {
            for j in 0..n {
                kkt[(i, j)] = 2.0 * covariance[(i, j)];
            }
        }
        let mut a_rows: Vec<DVector<f64>> = vec![DVector::from_element(n, 1.0)];
        a_rows.extend(working.iter().map(|c| c.row(p)));
        for (row_index, row) in a_rows.iter().enumerate() {
            for j in 0..n {
                kkt[(n + row_index, j)] = row[j];
                kkt[(j, n + row_index)] = row[j];
            }
        }
        let gradient = 2.0 * covariance * &x;
        let mut rhs = DVector::zeros(n + k);
        for i in 0..n {
            rhs[i] = -gradient[i];
        }
        let solution = kkt
            .clone()
            .full_piv_lu()
            .solve(&rhs)
            .ok_or("singular KKT system")?;
        let residual = (&kkt * &solution - &rhs).amax();
        if residual > 1e-9 * rhs.amax().max(1.0) {
            return Err(format!("KKT solve residual {residual} too large"));
        }
        let step = solution.rows(0, n).into_owned();

        if step.amax() <= 1e-10 * x.amax().max(1.0) {
            // stationary on the working set: check multiplier signs
            let multipliers: Vec<f64> = (0..working.len())
                .map(|j| -solution[n + 1 + j])
                .collect();
            let mut worst: Option<(usize, f64)> = None;
            for (j, &lambda) in multipliers.iter().enumerate() {
                if lambda < -1e-12 && worst.is_none_or(|(_, low)| lambda < low) {
                    worst = Some((j, lambda));
                }
            }
            match worst {
                None => return Ok(ActiveSetResult { x, working }),
                Some((j, _)) => {
                    working.remove(j);
                }
            }
        } else {
            // longest feasible step toward the subproblem minimizer
            let mut alpha = 1.0;
            let mut blocking = None;
            for constraint in &inequalities {
                if working.contains(constraint) {
                    continue;
                }
                let direction = constraint.row(p).dot(&step);
                if direction < -1e-14 {
                    // slack = a·x − b ≥ 0 and direction < 0, so allowed ≥ 0
                    let allowed = -constraint.slack(p, &x) / direction;
                    if allowed < alpha {
                        alpha = allowed;
                        blocking = Some(*constraint);
                    }
                }
            }
            x += step * alpha.max(0.0);
            if let Some(constraint) = blocking {
                working.push(constraint);
            }
        }
    }
    Err("active-set iteration limit exceeded".to_string())
}

/// Clamps working-set bounds to exactly zero and renormalizes the budget.
fn clean(p: &QpProblem, mut x: DVector<f64>, working: &[Constraint]) -> DVector<f64> {
    for constraint in working {
        if let Constraint::Bound(i) = constraint {
            x[*i] = 0.0;
        }
    }
    if p.long_only {
        for v in x.iter_mut() {
            if *v < 0.0 && *v > -1e-9 {
                *v = 0.0;
            }
        }
    }
    let sum: f64 = x.iter().sum();
    if sum != 0.0 {
        x /= sum;
    }
    x
}

/// KKT residual of `x` for the ORIGINAL problem: the maximum over primal
/// feasibility violations, stationarity (with least-squares multipliers over
/// the active rows), multiplier sign violations, and complementary slackness.
fn certify(p: &QpProblem, x: &DVector<f64>, working: &[Constraint]) -> (f64, f64) {
    let n = p.n_assets();
    let variance = (x.transpose() * &p.covariance * x)[(0, 0)];
    let mut residual: f64 = (x.iter().sum::<f64>() - 1.0).abs();
    residual = residual.max(p.target - p.expected_returns.dot(x));
    if p.long_only {
        residual = residual.max(-x.min());
    }

    // stationarity: 2Cx = y·1 + Σ λ_j a_j over the active rows
    let gradient = 2.0 * &p.covariance * x;
    let mut rows: Vec<DVector<f64>> = vec![DVector::from_element(n, 1.0)];
    rows.extend(working.iter().map(|c| c.row(p)));
    let a_t = DMatrix::from_columns(&rows);
    let multipliers = a_t
        .clone()
        .svd(true, true)
        .solve(&gradient, 1e-14)
        .unwrap_or_else(|_| DVector::zeros(rows.len()));
    let stationarity = (&gradient - &a_t * &multipliers).amax();
    residual = residual.max(stationarity);
    for (j, constraint) in working.iter().enumerate() {
        let lambda = multipliers[1 + j];
        residual = residual.max(-lambda);
        residual = residual.max((lambda * constraint.slack(p, x)).abs());
    }
    (variance, residual.max(0.0))
}

/// Solves the problem with an explicit optimality certificate. A solution is
/// returned only if its KKT residual is at most 1e-8; a diagonally loaded
/// retry (+1e-10·I) is attempted once if the plain solve fails numerically.
pub fn solve_markowitz(p: &QpProblem) -> Result<MarkowitzSolution, PortfolioError> {
    let attempt = |covariance: &DMatrix<f64>| -> Result<MarkowitzSolution, String> {
        let result = active_set(p, covariance)?;
        let x = clean(p, result.x, &result.working);
        let (variance, kkt_residual) = certify(p, &x, &result.working);
        if kkt_residual > KKT_TOLERANCE {
            return Err(format!("KKT residual {kkt_residual} exceeds {KKT_TOLERANCE}"));
        }
        Ok(MarkowitzSolution {
            weights: PortfolioWeights(x.iter().copied().collect()),
            variance,
            kkt_residual,
        })
    };
    match attempt(&p.covariance) {
        Ok(solution) => Ok(solution),
        Err(first_failure) => {
            let loaded = &p.covariance + DMatrix::identity(p.n_assets(), p.n_assets()) * JITTER;
            attempt(&loaded).map_err(|second_failure| {
                PortfolioError::Numerical(format!(
                    "{first_failure}; after diagonal loading: {second_failure}"
                ))
            })
        }
    }
}
