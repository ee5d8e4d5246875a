//! Asynchronous best-response dynamics.
//!
//! Tenants re-optimize their weight vectors one at a time, in a freshly
//! shuffled order each round, until the profile stops moving. Each
//! best-response problem is a budget-constrained revenue maximization over
//! one tenant's weights with everyone else frozen; the budget binds at every
//! optimum because the revenue gradient is strictly positive.
//!
//! Two best-response backends are available: a deterministic ascent using the
//! analytic gradient and per-cell curvature (the default), and a cuckoo-search
//! heuristic. A single run is strictly sequential by definition; distinct
//! runs are independent.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::cuckoo;
use crate::equilibrium::{kkt_residual_parts, EquilibriumResult, SolveMethod, SolverDiagnostics};
use crate::error::GameError;
use crate::model::{
    market_state_raw, revenue_and_gradient_vs_others, Scenario, WeightProfile, WEIGHT_FLOOR,
};

/// Relative stationarity target of a best response: the gradient component
/// tangent to the budget simplex must shrink below this fraction of the mean
/// gradient.
pub const BR_STATIONARITY_TOL: f64 = 1e-9;

/// Best-response optimizer selection.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BrMethod {
    /// Ascent on the budget simplex driven by the analytic gradient, with
    /// curvature-scaled steps and a backtracking line search.
    #[default]
    Gradient,
    /// Cuckoo-search over the free weights with the budget substituted out.
    Heuristic,
}

/// Solver configuration. All runs with the same scenario and config are
/// bit-identical.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AbrdConfig {
    /// Convergence threshold on the largest weight change over a full round.
    pub tolerance: f64,
    pub max_rounds: usize,
    pub rng_seed: u64,
    pub br_method: BrMethod,
    /// Iteration budget of one best-response call (ascent steps, or cuckoo
    /// generations).
    pub br_iters: usize,
}

impl Default for AbrdConfig {
    fn default() -> Self {
        AbrdConfig {
            tolerance: 1e-8,
            max_rounds: 500,
            rng_seed: 0,
            br_method: BrMethod::Gradient,
            br_iters: 1000,
        }
    }
}

impl AbrdConfig {
    pub fn validate(&self) -> Result<(), GameError> {
        if !self.tolerance.is_finite() || self.tolerance <= 0.0 {
            return Err(GameError::InvalidConfig("tolerance must be positive".into()));
        }
        if self.max_rounds == 0 {
            return Err(GameError::InvalidConfig("max_rounds must be at least 1".into()));
        }
        if self.br_iters == 0 {
            return Err(GameError::InvalidConfig("br_iters must be at least 1".into()));
        }
        Ok(())
    }
}

/// Result of one best-response call.
#[derive(Debug, Clone)]
pub struct BestResponseOutcome {
    /// Optimized per-cell weights; they sum to the tenant's share.
    pub weights: Vec<f64>,
    pub revenue: f64,
    pub iterations: usize,
    /// Whether the stationarity target was met within the iteration budget;
    /// when false the best iterate found is returned anyway.
    pub converged: bool,
}

/// Projects `v` onto the simplex `{w : w_j >= floor, sum_j w_j = budget}`.
///
/// Sort-based projection; exact up to floating-point rounding.
pub fn project_to_budget_simplex(v: &[f64], budget: f64, floor: f64) -> Vec<f64> {
    let n = v.len();
    let free_budget = budget - n as f64 * floor;
    if free_budget <= 0.0 {
        return vec![budget / n as f64; n];
    }
    let shifted: Vec<f64> = v.iter().map(|&x| x - floor).collect();
    let mut sorted = shifted.clone();
    sorted.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let mut cumsum = 0.0;
    let mut theta = 0.0;
    for (k, &u) in sorted.iter().enumerate() {
        cumsum += u;
        let t = (cumsum - free_budget) / (k + 1) as f64;
        if u - t > 0.0 {
            theta = t;
        }
    }
    shifted.iter().map(|&u| (u - theta).max(0.0) + floor).collect()
}

/// Best response of one tenant against the other rows of `profile`. The
/// tenant's own row seeds the search, so handing in the current state of play
/// makes the returned revenue at least the current one.
pub fn best_response(
    scenario: &Scenario,
    profile: &WeightProfile,
    tenant: usize,
    config: &AbrdConfig,
) -> Result<BestResponseOutcome, GameError> {
    config.validate()?;
    if tenant >= scenario.num_tenants() {
        return Err(GameError::TenantIndex { tenant, num_tenants: scenario.num_tenants() });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.rng_seed);
    best_response_with_rng(scenario, profile.rows(), tenant, config, &mut rng)
}

pub(crate) fn best_response_with_rng(
    scenario: &Scenario,
    rows: &[Vec<f64>],
    tenant: usize,
    config: &AbrdConfig,
    rng: &mut ChaCha8Rng,
) -> Result<BestResponseOutcome, GameError> {
    let budget = scenario.shares()[tenant];
    let num_cells = scenario.num_cells();
    let beta = scenario.beta();

    // opponents' per-cell aggregates are fixed during the whole call
    let mut others_pow = vec![0.0; num_cells];
    let mut others_sum = vec![0.0; num_cells];
    for (t, row) in rows.iter().enumerate() {
        if t == tenant {
            continue;
        }
        for j in 0..num_cells {
            let w = row[j].max(WEIGHT_FLOOR);
            others_pow[j] += w.powf(beta);
            others_sum[j] += w;
        }
    }

    if num_cells == 1 {
        // budget equality with a single variable
        let weights = vec![budget];
        let revenue =
            revenue_and_gradient_vs_others(scenario, &weights, &others_pow, &others_sum, None, None)?;
        return Ok(BestResponseOutcome { weights, revenue, iterations: 0, converged: true });
    }

    let start = project_to_budget_simplex(&rows[tenant], budget, WEIGHT_FLOOR);
    match config.br_method {
        BrMethod::Gradient => {
            gradient_best_response(scenario, start, budget, &others_pow, &others_sum, config)
        }
        BrMethod::Heuristic => cuckoo::cuckoo_best_response(
            scenario,
            start,
            budget,
            &others_pow,
            &others_sum,
            config,
            rng,
        ),
    }
}

/// Ascent on the budget simplex. Steps use the exact per-cell curvature when
/// the revenue is locally concave (the per-tenant Hessian is diagonal, so the
/// constrained Newton step has a closed form); otherwise the tangent gradient
/// direction with an adaptive trust step. A backtracking line search accepts
/// only strict improvements, which keeps the dynamics monotone.
fn gradient_best_response(
    scenario: &Scenario,
    start: Vec<f64>,
    budget: f64,
    others_pow: &[f64],
    others_sum: &[f64],
    config: &AbrdConfig,
) -> Result<BestResponseOutcome, GameError> {
    let mut x = start;
    let mut grad = Vec::new();
    let mut hess = Vec::new();
    let mut value = revenue_and_gradient_vs_others(
        scenario,
        &x,
        others_pow,
        others_sum,
        Some(&mut grad),
        Some(&mut hess),
    )?;

    let mut tangent_step = 0.1 * budget;
    let mut iterations = 0;
    let mut converged = false;

    while iterations < config.br_iters {
        iterations += 1;
        let mu = grad.iter().sum::<f64>() / grad.len() as f64;
        let crit = grad.iter().map(|g| (g - mu).abs()).fold(0.0, f64::max);
        if crit <= BR_STATIONARITY_TOL * mu.abs().max(f64::MIN_POSITIVE) {
            converged = true;
            break;
        }

        let mut improved = false;
        'directions: for attempt in 0..2 {
            let (dir, t0) = if attempt == 0 && hess.iter().all(|&h| h < 0.0) {
                // constrained Newton step on the hyperplane sum(dw) = 0
                let inv: Vec<f64> = hess.iter().map(|&h| 1.0 / h).collect();
                let lambda = grad.iter().zip(&inv).map(|(g, i)| g * i).sum::<f64>()
                    / inv.iter().sum::<f64>();
                let dir: Vec<f64> =
                    grad.iter().zip(&inv).map(|(g, i)| -(g - lambda) * i).collect();
                (dir, 1.0)
            } else {
                // tangent gradient, normalized to a trust-region scale
                let dir: Vec<f64> = grad.iter().map(|g| (g - mu) / crit).collect();
                (dir, tangent_step)
            };

            let mut t = t0;
            for _ in 0..60 {
                let cand: Vec<f64> = x.iter().zip(&dir).map(|(xi, di)| xi + t * di).collect();
                let cand = project_to_budget_simplex(&cand, budget, WEIGHT_FLOOR);
                let mut cand_grad = Vec::new();
                let mut cand_hess = Vec::new();
                let cand_value = revenue_and_gradient_vs_others(
                    scenario,
                    &cand,
                    others_pow,
                    others_sum,
                    Some(&mut cand_grad),
                    Some(&mut cand_hess),
                )?;
                if cand_value > value {
                    x = cand;
                    value = cand_value;
                    grad = cand_grad;
                    hess = cand_hess;
                    if attempt == 1 {
                        tangent_step = (2.0 * t).min(budget);
                    }
                    improved = true;
                    break 'directions;
                }
                t *= 0.5;
            }
        }
        if !improved {
            // line search exhausted in both directions: stuck at the
            // floating-point floor of the objective
            break;
        }
    }

    Ok(BestResponseOutcome { weights: x, revenue: value, iterations, converged })
}

/// Runs asynchronous best-response dynamics from the budget-exact uniform
/// profile. Convergence is declared when a full round moves no weight by more
/// than `config.tolerance`; otherwise the result carries `converged: false`
/// and the last profile.
pub fn abrd(scenario: &Scenario, config: &AbrdConfig) -> Result<EquilibriumResult, GameError> {
    abrd_traced(scenario, config, |_, _| {})
}

/// Same as [`abrd`] with a per-round observer for trajectory logging. The
/// observer sees the round number (starting at 1) and the full weight matrix
/// after that round.
pub fn abrd_traced(
    scenario: &Scenario,
    config: &AbrdConfig,
    mut on_round: impl FnMut(usize, &[Vec<f64>]),
) -> Result<EquilibriumResult, GameError> {
    config.validate()?;
    let num_tenants = scenario.num_tenants();
    let num_cells = scenario.num_cells() as f64;
    let mut rng = ChaCha8Rng::seed_from_u64(config.rng_seed);

    let mut rows: Vec<Vec<f64>> = scenario
        .shares()
        .iter()
        .map(|&s| vec![s / num_cells; scenario.num_cells()])
        .collect();

    let mut order: Vec<usize> = (0..num_tenants).collect();
    let mut converged = false;
    let mut rounds = 0;
    let mut stalled = 0;

    for round in 1..=config.max_rounds {
        rounds = round;
        shuffle(&mut order, &mut rng);
        let mut max_change: f64 = 0.0;
        for &i in &order {
            let outcome = best_response_with_rng(scenario, &rows, i, config, &mut rng)?;
            if !outcome.converged {
                stalled += 1;
            }
            for (old, new) in rows[i].iter().zip(&outcome.weights) {
                max_change = max_change.max((old - new).abs());
            }
            rows[i] = outcome.weights;
        }
        on_round(round, &rows);
        if max_change < config.tolerance {
            converged = true;
            break;
        }
    }

    let weights = WeightProfile::new(rows, scenario)?;
    let state = market_state_raw(scenario, weights.rows())?;
    let (kkt, budget, multipliers) = kkt_residual_parts(scenario, &weights)?;
    Ok(EquilibriumResult {
        method: SolveMethod::Abrd,
        weights,
        state,
        kkt_residual: kkt,
        budget_residual: budget,
        diagnostics: SolverDiagnostics {
            rounds,
            converged,
            multipliers,
            stalled_best_responses: stalled,
        },
    })
}

/// Fisher-Yates driven by the run's seeded generator.
fn shuffle(order: &mut [usize], rng: &mut ChaCha8Rng) {
    for i in (1..order.len()).rev() {
        let j = rng.gen_range(0..=i);
        order.swap(i, j);
    }
}
