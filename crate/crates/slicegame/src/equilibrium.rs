//! The closed-form candidate equilibrium, penetration bounds, and KKT
//! residual verification.
//!
//! The candidate ("proposed") solution gives every tenant a weight
//! proportional to the subscriber mass of each cell. It is the exact Nash
//! equilibrium when all cells share one normalized capacity (or all have
//! `r0 = 0`), and a close approximation otherwise; the solver in
//! [`crate::abrd`] serves as the independent check.

use serde::{Deserialize, Serialize};

use crate::error::GameError;
use crate::model::{
    market_state, revenue_gradient, solve_penetration, MarketState, Scenario, WeightProfile,
};

/// How an equilibrium was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveMethod {
    Proposed,
    Abrd,
}

/// Solver bookkeeping attached to an equilibrium.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SolverDiagnostics {
    /// Best-response rounds used (zero for the closed form).
    pub rounds: usize,
    pub converged: bool,
    /// Estimated KKT multiplier per tenant (mean gradient component).
    pub multipliers: Vec<f64>,
    /// Best-response calls that hit their iteration cap before reaching
    /// stationarity.
    pub stalled_best_responses: usize,
}

/// A weight profile together with the market it induces and optimality
/// residuals.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EquilibriumResult {
    pub method: SolveMethod,
    pub weights: WeightProfile,
    pub state: MarketState,
    /// Stationarity residual combined with the budget residual; near zero at
    /// a Nash equilibrium with binding budgets.
    pub kkt_residual: f64,
    /// `max_i |sum_j w_ij - s_i|`; budgets bind at every optimum.
    pub budget_residual: f64,
    pub diagnostics: SolverDiagnostics,
}

/// Subscription ratio of the proposed solution for one cell. Solves
/// `sigma - gamma^beta * (sum_t s_t^beta) * (1-sigma)^(1-beta) = 0`, which
/// depends on the cell only through `gamma`. Zero shares are allowed here and
/// simply contribute nothing (a tenant with no share is absent).
pub fn proposed_subscription_ratio(
    gamma: f64,
    beta: f64,
    shares: &[f64],
) -> Result<f64, GameError> {
    if gamma.is_infinite() {
        return Ok(1.0);
    }
    debug_assert!(gamma > 0.0);
    let share_pow_sum: f64 = shares.iter().map(|&s| s.powf(beta)).sum();
    solve_penetration(gamma.powf(beta) * share_pow_sum, beta)
}

/// Subscriber fractions of the proposed solution: `s_i^beta / sum_t s_t^beta`,
/// identical across cells. Zero shares yield zero fractions.
pub fn proposed_fractions(shares: &[f64], beta: f64) -> Vec<f64> {
    let pows: Vec<f64> = shares.iter().map(|&s| s.powf(beta)).collect();
    let total: f64 = pows.iter().sum();
    pows.into_iter().map(|p| p / total).collect()
}

/// Computes the proposed closed-form solution: per-cell subscription ratios
/// from the reduced penetration equation, then weights
/// `w_ij = s_i * sigma_j n_j / sum_k sigma_k n_k`. Budgets bind by
/// construction. On scenarios that fail [`homogeneity_check`] the result is
/// an approximation of the equilibrium, not an exact one.
pub fn proposed_solution(scenario: &Scenario) -> Result<EquilibriumResult, GameError> {
    let beta = scenario.beta();
    let shares = scenario.shares();
    let sigmas: Vec<f64> = (0..scenario.num_cells())
        .map(|j| proposed_subscription_ratio(scenario.gamma(j), beta, shares))
        .collect::<Result<_, _>>()?;
    let mass: Vec<f64> = sigmas
        .iter()
        .zip(scenario.cells())
        .map(|(&s, c)| s * c.n_users as f64)
        .collect();
    let total_mass: f64 = mass.iter().sum();
    let rows: Vec<Vec<f64>> = shares
        .iter()
        .map(|&s| mass.iter().map(|&m| s * m / total_mass).collect())
        .collect();
    let weights = WeightProfile::new(rows, scenario)?;
    let state = market_state(scenario, &weights)?;
    let (kkt, budget, multipliers) = kkt_residual_parts(scenario, &weights)?;
    Ok(EquilibriumResult {
        method: SolveMethod::Proposed,
        weights,
        state,
        kkt_residual: kkt,
        budget_residual: budget,
        diagnostics: SolverDiagnostics {
            rounds: 0,
            converged: true,
            multipliers,
            stalled_best_responses: 0,
        },
    })
}

/// Extreme subscription ratios over all share splits at fixed `gamma`:
/// the maximum is attained at equal shares, the minimum at a monopoly.
/// Returns `(sigma_min, sigma_max)`; the two coincide for a single tenant.
pub fn penetration_bounds(
    gamma: f64,
    beta: f64,
    num_tenants: usize,
) -> Result<(f64, f64), GameError> {
    debug_assert!(num_tenants >= 1);
    if gamma.is_infinite() {
        return Ok((1.0, 1.0));
    }
    let s = num_tenants as f64;
    let sigma_min = solve_penetration(gamma.powf(beta), beta)?;
    let sigma_max = if num_tenants == 1 {
        sigma_min
    } else {
        solve_penetration(s.powf(1.0 - beta) * gamma.powf(beta), beta)?
    };
    Ok((sigma_min, sigma_max))
}

/// True when the proposed solution is exact: every cell has `r0 = 0`, or all
/// finite normalized capacities agree to 1e-9 relative.
pub fn homogeneity_check(scenario: &Scenario) -> bool {
    let gammas = scenario.gammas();
    if gammas.iter().all(|g| g.is_infinite()) {
        return true;
    }
    if gammas.iter().any(|g| g.is_infinite()) {
        return false;
    }
    let min = gammas.iter().cloned().fold(f64::INFINITY, f64::min);
    let max = gammas.iter().cloned().fold(0.0, f64::max);
    (max - min) <= 1e-9 * max
}

/// First-order optimality residual of a feasible profile.
///
/// For each tenant the stationarity condition requires all own-weight
/// gradient components to equal one multiplier. The multiplier is estimated
/// as the mean component (meaningful away from equilibrium and on
/// heterogeneous scenarios, unlike the closed form of
/// [`kkt_multipliers_homogeneous`]); the residual is the worst relative
/// spread, taken together with the worst budget-equality violation.
pub fn kkt_residual(scenario: &Scenario, weights: &WeightProfile) -> Result<f64, GameError> {
    kkt_residual_parts(scenario, weights).map(|(kkt, _, _)| kkt)
}

pub(crate) fn kkt_residual_parts(
    scenario: &Scenario,
    weights: &WeightProfile,
) -> Result<(f64, f64, Vec<f64>), GameError> {
    let mut stationarity: f64 = 0.0;
    let mut budget: f64 = 0.0;
    let mut multipliers = Vec::with_capacity(scenario.num_tenants());
    for i in 0..scenario.num_tenants() {
        let grad = revenue_gradient(scenario, weights, i)?;
        let mu = grad.iter().sum::<f64>() / grad.len() as f64;
        let spread = grad.iter().map(|g| (g - mu).abs()).fold(0.0, f64::max);
        stationarity = stationarity.max(if mu > 0.0 { spread / mu } else { spread });
        let row_sum: f64 = weights.row(i).iter().sum();
        budget = budget.max((row_sum - scenario.shares()[i]).abs());
        multipliers.push(mu);
    }
    Ok((stationarity.max(budget), budget, multipliers))
}

/// Closed-form KKT multipliers of the proposed solution, valid when
/// [`homogeneity_check`] holds:
/// `mu_i = p beta n sigma rho_i / (s_i (1 - beta sigma)) *
/// ((1-beta)(1-rho_i) sigma + (1-s_i)(1-sigma))`
/// with `n` the total user count and `sigma` the common subscription ratio.
pub fn kkt_multipliers_homogeneous(scenario: &Scenario) -> Result<Vec<f64>, GameError> {
    if !homogeneity_check(scenario) {
        return Err(GameError::InvalidConfig(
            "closed-form multipliers require homogeneous cells".into(),
        ));
    }
    let beta = scenario.beta();
    let shares = scenario.shares();
    let sigma = proposed_subscription_ratio(scenario.gamma(0), beta, shares)?;
    let n: f64 = scenario.cells().iter().map(|c| c.n_users as f64).sum();
    let rho = proposed_fractions(shares, beta);
    Ok(shares
        .iter()
        .zip(&rho)
        .map(|(&s, &r)| {
            scenario.price() * beta * n * sigma * r / (s * (1.0 - beta * sigma))
                * ((1.0 - beta) * (1.0 - r) * sigma + (1.0 - s) * (1.0 - sigma))
        })
        .collect())
}
