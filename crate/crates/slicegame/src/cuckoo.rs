//! Cuckoo-search best response.
//!
//! Nests hold a tenant's weights for all cells but the last; the last weight
//! is the remaining budget, so the search runs over `|B| - 1` free variables
//! and every candidate is repaired onto the budget simplex. Lévy flights
//! around the current best provide the local walk, and a fixed fraction of
//! nests is abandoned and re-drawn each generation.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::abrd::{project_to_budget_simplex, AbrdConfig, BestResponseOutcome};
use crate::error::GameError;
use crate::model::{revenue_and_gradient_vs_others, Scenario, WEIGHT_FLOOR};

const POPULATION: usize = 25;
const DISCOVERY_PROB: f64 = 0.25;
const LEVY_EXPONENT: f64 = 1.5;
/// Mantegna scale for the exponent above:
/// `(gamma(1+l) sin(pi l/2) / (gamma((1+l)/2) l 2^((l-1)/2)))^(1/l)`.
const LEVY_SIGMA: f64 = 0.696_574_502_557_697;
/// Lévy step scale as a fraction of the budget.
const STEP_SCALE: f64 = 0.01;

struct Nest {
    weights: Vec<f64>,
    value: f64,
}

pub(crate) fn cuckoo_best_response(
    scenario: &Scenario,
    start: Vec<f64>,
    budget: f64,
    others_pow: &[f64],
    others_sum: &[f64],
    config: &AbrdConfig,
    rng: &mut ChaCha8Rng,
) -> Result<BestResponseOutcome, GameError> {
    let num_cells = scenario.num_cells();
    let eval = |w: &[f64]| -> Result<f64, GameError> {
        revenue_and_gradient_vs_others(scenario, w, others_pow, others_sum, None, None)
    };

    let mut nests = Vec::with_capacity(POPULATION);
    let start_value = eval(&start)?;
    nests.push(Nest { weights: start, value: start_value });
    for _ in 1..POPULATION {
        let w = random_simplex_point(num_cells, budget, rng);
        let value = eval(&w)?;
        nests.push(Nest { weights: w, value });
    }

    let mut best = best_index(&nests);
    let mut best_weights = nests[best].weights.clone();
    let mut best_value = nests[best].value;

    for _ in 0..config.br_iters {
        // Lévy flights around the best nest
        for k in 0..POPULATION {
            let candidate = levy_candidate(&nests[k].weights, &best_weights, budget, rng);
            let value = eval(&candidate)?;
            let target = rng.gen_range(0..POPULATION);
            if value > nests[target].value {
                nests[target] = Nest { weights: candidate, value };
            }
        }
        // abandon a fraction of nests via a biased random walk, keeping the
        // current best untouched
        best = best_index(&nests);
        for k in 0..POPULATION {
            if k == best || rng.gen::<f64>() >= DISCOVERY_PROB {
                continue;
            }
            let r1 = rng.gen_range(0..POPULATION);
            let r2 = rng.gen_range(0..POPULATION);
            let mix: f64 = rng.gen();
            let moved: Vec<f64> = free_of(&nests[k].weights)
                .iter()
                .enumerate()
                .map(|(j, &w)| w + mix * (nests[r1].weights[j] - nests[r2].weights[j]))
                .collect();
            let candidate = repair(&moved, num_cells, budget);
            let value = eval(&candidate)?;
            nests[k] = Nest { weights: candidate, value };
        }
        best = best_index(&nests);
        if nests[best].value > best_value {
            best_value = nests[best].value;
            best_weights = nests[best].weights.clone();
        }
    }

    Ok(BestResponseOutcome {
        weights: best_weights,
        revenue: best_value,
        iterations: config.br_iters,
        // the heuristic has no stationarity certificate
        converged: true,
    })
}

fn best_index(nests: &[Nest]) -> usize {
    let mut idx = 0;
    for (k, n) in nests.iter().enumerate() {
        if n.value > nests[idx].value {
            idx = k;
        }
    }
    idx
}

fn free_of(weights: &[f64]) -> &[f64] {
    &weights[..weights.len() - 1]
}

/// Rebuilds a full weight vector from free variables and repairs it onto the
/// budget simplex.
fn repair(free: &[f64], num_cells: usize, budget: f64) -> Vec<f64> {
    let mut full = Vec::with_capacity(num_cells);
    full.extend_from_slice(free);
    full.push(budget - free.iter().sum::<f64>());
    project_to_budget_simplex(&full, budget, WEIGHT_FLOOR)
}

fn levy_candidate(
    nest: &[f64],
    best: &[f64],
    budget: f64,
    rng: &mut ChaCha8Rng,
) -> Vec<f64> {
    let dim = nest.len() - 1;
    let scale = STEP_SCALE * budget;
    let moved: Vec<f64> = (0..dim)
        .map(|j| {
            let toward_best = nest[j] - best[j];
            let drift = if toward_best == 0.0 { budget / nest.len() as f64 } else { toward_best };
            nest[j] + scale * levy_step(rng) * drift
        })
        .collect();
    repair(&moved, nest.len(), budget)
}

/// Mantegna's algorithm: `u / |v|^(1/lambda)` with `u ~ N(0, sigma^2)`,
/// `v ~ N(0, 1)`.
fn levy_step(rng: &mut ChaCha8Rng) -> f64 {
    let u: f64 = rng.sample::<f64, _>(StandardNormal) * LEVY_SIGMA;
    let v: f64 = rng.sample(StandardNormal);
    u / v.abs().powf(1.0 / LEVY_EXPONENT)
}

fn random_simplex_point(num_cells: usize, budget: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let mut draws: Vec<f64> = (0..num_cells).map(|_| -(1.0 - rng.gen::<f64>()).ln()).collect();
    let total: f64 = draws.iter().sum();
    draws.iter_mut().for_each(|d| *d = *d / total * budget);
    project_to_budget_simplex(&draws, budget, WEIGHT_FLOOR)
}
