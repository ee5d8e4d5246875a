//! Scenario generators, parameter sweeps, and Monte Carlo deviation studies.
//!
//! A [`ScenarioFamily`] describes a distribution over game instances; a
//! deviation study draws replications, solves each with both the closed form
//! and best-response dynamics, and aggregates the relative deviations of
//! subscription ratios and subscriber fractions. Replications are seeded
//! independently from the family seed, so results do not depend on execution
//! order or parallelism.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::abrd::{abrd, AbrdConfig};
use crate::equilibrium::{proposed_fractions, proposed_solution, proposed_subscription_ratio};
use crate::error::GameError;
use crate::model::{cell_from_gamma, Scenario, WeightProfile};

/// Separates the scenario-generation random stream from the solver stream.
const SCENARIO_STREAM: u64 = 0x5ce0_a21e;
const ABRD_STREAM: u64 = 0xab2d_0b5e;

/// Floor applied to generated normalized capacities; a zero draw would
/// degenerate the subscription ratio to zero.
const GAMMA_CLIP: f64 = 1e-9;

fn default_n_users() -> u64 {
    100
}

fn default_price() -> f64 {
    1.0
}

fn default_min_share() -> f64 {
    0.1
}

/// A distribution over scenarios: fixed tenant/cell counts and sensitivity,
/// normalized capacities drawn uniformly per cell, shares drawn uniformly
/// from the simplex constrained to `s_i >= min_share`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioFamily {
    pub num_tenants: usize,
    pub num_cells: usize,
    pub alpha: f64,
    /// Inclusive range `[gamma_min, gamma_max]` of the per-cell draw.
    pub gamma_range: (f64, f64),
    pub replications: usize,
    pub rng_seed: u64,
    /// Lower bound on every tenant share (default 0.1).
    #[serde(default = "default_min_share")]
    pub min_share: f64,
    /// Users per generated cell (default 100).
    #[serde(default = "default_n_users")]
    pub n_users: u64,
    /// Service price of generated scenarios (default 1).
    #[serde(default = "default_price")]
    pub price: f64,
}

impl ScenarioFamily {
    pub fn validate(&self) -> Result<(), GameError> {
        if self.num_tenants == 0 || self.num_cells == 0 {
            return Err(GameError::InvalidConfig("family needs tenants and cells".into()));
        }
        if self.replications == 0 {
            return Err(GameError::InvalidConfig("replications must be at least 1".into()));
        }
        let (lo, hi) = self.gamma_range;
        if !lo.is_finite() || !hi.is_finite() || lo < 0.0 || hi < lo {
            return Err(GameError::InvalidConfig(format!(
                "gamma range must satisfy 0 <= min <= max, got [{lo}, {hi}]"
            )));
        }
        if self.min_share < 0.0 || self.min_share.is_nan()
            || self.num_tenants as f64 * self.min_share > 1.0
        {
            return Err(GameError::InvalidConfig(format!(
                "min_share {} infeasible for {} tenants",
                self.min_share, self.num_tenants
            )));
        }
        if !(self.alpha.is_finite() && self.alpha > 0.0)
            || !(self.price.is_finite() && self.price > 0.0)
            || self.n_users == 0
        {
            return Err(GameError::InvalidConfig("alpha, price and n_users must be positive".into()));
        }
        Ok(())
    }
}

/// splitmix64; decorrelates derived seeds.
fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

/// Seed of one replication as a pure function of the base seed, a stream tag
/// and the replication index.
pub fn replication_seed(base: u64, stream: u64, index: u64) -> u64 {
    splitmix64(base ^ splitmix64(stream ^ splitmix64(index)))
}

/// Draws one scenario of the family. Fully determined by
/// `(family.rng_seed, replication_index)`.
pub fn gen_scenario(family: &ScenarioFamily, replication_index: usize) -> Result<Scenario, GameError> {
    family.validate()?;
    let seed = replication_seed(family.rng_seed, SCENARIO_STREAM, replication_index as u64);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let (lo, hi) = family.gamma_range;
    let mut cells = Vec::with_capacity(family.num_cells);
    for _ in 0..family.num_cells {
        let gamma = if lo == hi { lo } else { rng.gen_range(lo..=hi) }.max(GAMMA_CLIP);
        cells.push(cell_from_gamma(family.n_users, Some(gamma), family.price)?);
    }
    let shares = constrained_simplex_sample(family.num_tenants, family.min_share, &mut rng);
    Scenario::new(cells, shares, family.price, family.alpha)
}

/// Uniform sample of `{s : sum s = 1, s_i >= min_share}` by an affine map of
/// a flat Dirichlet draw onto the shrunken simplex; rejection-free.
fn constrained_simplex_sample(n: usize, min_share: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let mut draws: Vec<f64> = (0..n).map(|_| -(1.0 - rng.gen::<f64>()).ln()).collect();
    let total: f64 = draws.iter().sum();
    let slack = 1.0 - n as f64 * min_share;
    draws.iter_mut().for_each(|d| *d = min_share + slack * *d / total);
    draws
}

/// Feasible random profile: each row is a Dirichlet draw scaled to the
/// tenant's share. Used for randomized restarts and verification probes.
pub fn random_feasible_profile(scenario: &Scenario, seed: u64) -> WeightProfile {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rows = scenario
        .shares()
        .iter()
        .map(|&s| {
            let mut row: Vec<f64> =
                (0..scenario.num_cells()).map(|_| -(1.0 - rng.gen::<f64>()).ln()).collect();
            let total: f64 = row.iter().sum();
            row.iter_mut().for_each(|w| *w = (*w / total * s).max(1e-12));
            row
        })
        .collect();
    WeightProfile::new(rows, scenario).expect("scaled dirichlet rows are feasible")
}

/// One signed relative deviation of a tenant fraction: the cell-constant
/// closed-form value against the per-cell solver value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RhoDeviation {
    pub replication: usize,
    pub tenant: usize,
    pub cell: usize,
    pub value: f64,
}

/// One signed relative deviation of a cell's subscription ratio.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SigmaDeviation {
    pub replication: usize,
    pub cell: usize,
    pub value: f64,
}

/// Histogram bin over deviations expressed in percent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HistogramBin {
    pub left: f64,
    pub right: f64,
    pub count: usize,
}

/// Monte Carlo comparison of the closed form against best-response dynamics.
///
/// Deviations are signed fractions (`0.01` is one percent); histograms are
/// binned in percent. Percentiles use the nearest-rank rule over `|eps|`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviationReport {
    pub family: ScenarioFamily,
    pub eps_rho: Vec<RhoDeviation>,
    pub eps_sigma: Vec<SigmaDeviation>,
    pub p90_abs_eps_rho: f64,
    pub p95_abs_eps_rho: f64,
    pub p90_abs_eps_sigma: f64,
    pub p95_abs_eps_sigma: f64,
    /// P95 of `|eps_rho|` restricted to each tenant.
    pub per_tenant_p95_abs_eps_rho: Vec<f64>,
    /// Bin width 0.5 percentage points.
    pub rho_histogram: Vec<HistogramBin>,
    /// Bin width 0.1 percentage points.
    pub sigma_histogram: Vec<HistogramBin>,
    /// Replications whose dynamics did not converge; excluded from all
    /// statistics above.
    pub failed_replications: Vec<usize>,
}

/// Nearest-rank percentile: the smallest value with at least `p` percent of
/// the sample at or below it. NaN on an empty sample.
pub fn percentile_nearest_rank(values: &[f64], p: f64) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let rank = ((p / 100.0) * sorted.len() as f64).ceil() as usize;
    sorted[rank.clamp(1, sorted.len()) - 1]
}

fn histogram(values_pct: &[f64], width: f64) -> Vec<HistogramBin> {
    if values_pct.is_empty() {
        return Vec::new();
    }
    let min = values_pct.iter().cloned().fold(f64::INFINITY, f64::min);
    let max = values_pct.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let first = (min / width).floor() as i64;
    let last = (max / width).floor() as i64;
    let mut bins: Vec<HistogramBin> = (first..=last)
        .map(|k| HistogramBin { left: k as f64 * width, right: (k + 1) as f64 * width, count: 0 })
        .collect();
    let last_idx = bins.len() - 1;
    for &v in values_pct {
        let idx = ((v / width).floor() as i64 - first) as usize;
        bins[idx.min(last_idx)].count += 1;
    }
    bins
}

struct ReplicationOutcome {
    replication: usize,
    rho: Vec<RhoDeviation>,
    sigma: Vec<SigmaDeviation>,
    failed: bool,
}

/// Runs the family end to end: per replication, the generated scenario is
/// solved with the closed form and with best-response dynamics (seeded per
/// replication from `abrd_config.rng_seed`), and the relative deviations are
/// pooled. Replications run in parallel; the outcome is independent of
/// thread scheduling.
pub fn deviation_study(
    family: &ScenarioFamily,
    abrd_config: &AbrdConfig,
) -> Result<DeviationReport, GameError> {
    family.validate()?;
    abrd_config.validate()?;

    let outcomes: Vec<ReplicationOutcome> = (0..family.replications)
        .into_par_iter()
        .map(|rep| -> Result<ReplicationOutcome, GameError> {
            let scenario = gen_scenario(family, rep)?;
            let beta = scenario.beta();
            let rho_tilde = proposed_fractions(scenario.shares(), beta);
            let mut config = abrd_config.clone();
            config.rng_seed = replication_seed(abrd_config.rng_seed, ABRD_STREAM, rep as u64);
            let run = abrd(&scenario, &config)?;
            if !run.diagnostics.converged {
                return Ok(ReplicationOutcome {
                    replication: rep,
                    rho: Vec::new(),
                    sigma: Vec::new(),
                    failed: true,
                });
            }
            let mut rho = Vec::with_capacity(scenario.num_cells() * scenario.num_tenants());
            let mut sigma = Vec::with_capacity(scenario.num_cells());
            for j in 0..scenario.num_cells() {
                let sigma_tilde =
                    proposed_subscription_ratio(scenario.gamma(j), beta, scenario.shares())?;
                sigma.push(SigmaDeviation {
                    replication: rep,
                    cell: j,
                    value: (sigma_tilde - run.state.sigma[j]) / run.state.sigma[j],
                });
                for i in 0..scenario.num_tenants() {
                    rho.push(RhoDeviation {
                        replication: rep,
                        tenant: i,
                        cell: j,
                        value: (rho_tilde[i] - run.state.rho[j][i]) / run.state.rho[j][i],
                    });
                }
            }
            Ok(ReplicationOutcome { replication: rep, rho, sigma, failed: false })
        })
        .collect::<Result<_, _>>()?;

    let mut eps_rho = Vec::new();
    let mut eps_sigma = Vec::new();
    let mut failed = Vec::new();
    for out in outcomes {
        if out.failed {
            failed.push(out.replication);
        } else {
            eps_rho.extend(out.rho);
            eps_sigma.extend(out.sigma);
        }
    }

    let abs_rho: Vec<f64> = eps_rho.iter().map(|d| d.value.abs()).collect();
    let abs_sigma: Vec<f64> = eps_sigma.iter().map(|d| d.value.abs()).collect();
    let per_tenant = (0..family.num_tenants)
        .map(|i| {
            let vals: Vec<f64> =
                eps_rho.iter().filter(|d| d.tenant == i).map(|d| d.value.abs()).collect();
            percentile_nearest_rank(&vals, 95.0)
        })
        .collect();

    Ok(DeviationReport {
        family: family.clone(),
        p90_abs_eps_rho: percentile_nearest_rank(&abs_rho, 90.0),
        p95_abs_eps_rho: percentile_nearest_rank(&abs_rho, 95.0),
        p90_abs_eps_sigma: percentile_nearest_rank(&abs_sigma, 90.0),
        p95_abs_eps_sigma: percentile_nearest_rank(&abs_sigma, 95.0),
        per_tenant_p95_abs_eps_rho: per_tenant,
        rho_histogram: histogram(&eps_rho.iter().map(|d| d.value * 100.0).collect::<Vec<_>>(), 0.5),
        sigma_histogram: histogram(
            &eps_sigma.iter().map(|d| d.value * 100.0).collect::<Vec<_>>(),
            0.1,
        ),
        eps_rho,
        eps_sigma,
        failed_replications: failed,
    })
}

/// Plot-ready table: named columns, numeric rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

/// The reference heterogeneous scenario used by the sweeps: 4 tenants,
/// 5 cells with populations 100..500 and normalized capacities
/// 0.25, 0.5, 1, 2, 4, sensitivity 3, price 1.
pub fn reference_heterogeneous_scenario(s1: f64) -> Result<Scenario, GameError> {
    let gammas = [0.25, 0.5, 1.0, 2.0, 4.0];
    let ns = [100u64, 200, 300, 400, 500];
    let cells = gammas
        .iter()
        .zip(ns)
        .map(|(&g, n)| cell_from_gamma(n, Some(g), 1.0))
        .collect::<Result<_, _>>()?;
    let rest = (1.0 - s1) / 3.0;
    Scenario::new(cells, vec![s1, rest, rest, rest], 1.0, 3.0)
}

/// One parameter sweep per figure-like output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SweepSpec {
    /// Subscription ratio vs tenant count at equal shares and `gamma = 1`,
    /// one series per sensitivity.
    SigmaVsTenantsAlpha { alphas: Vec<f64>, max_tenants: usize, gamma: f64 },
    /// Subscription ratio vs tenant count at equal shares and fixed
    /// sensitivity, one series per normalized capacity.
    SigmaVsTenantsGamma { gammas: Vec<f64>, max_tenants: usize, alpha: f64 },
    /// First tenant's subscriber fraction vs its share, under the most and
    /// least favorable split of the remainder.
    Rho1VsShareBounds { num_tenants: usize, alpha: f64 },
    /// Subscription ratio vs the share-equality factor `sum_t s_t^beta`, one
    /// series per normalized capacity.
    SigmaVsShareEquality { gammas: Vec<f64>, num_tenants: usize, alpha: f64 },
    /// Closed form vs dynamics on the reference heterogeneous scenario over
    /// a grid of first-tenant shares.
    HetProfile { s1_values: Vec<f64>, abrd: AbrdConfig },
}

impl SweepSpec {
    /// Figure-default parameterization of each sweep kind.
    pub fn with_defaults(kind: &str) -> Option<SweepSpec> {
        match kind {
            "sigma_vs_tenants_alpha" => Some(SweepSpec::SigmaVsTenantsAlpha {
                alphas: vec![1.0, 3.0, 5.0, 7.0],
                max_tenants: 10,
                gamma: 1.0,
            }),
            "sigma_vs_tenants_gamma" => Some(SweepSpec::SigmaVsTenantsGamma {
                gammas: vec![0.25, 0.5, 1.0, 2.0, 4.0],
                max_tenants: 10,
                alpha: 3.0,
            }),
            "rho1_vs_share_bounds" => {
                Some(SweepSpec::Rho1VsShareBounds { num_tenants: 4, alpha: 3.0 })
            }
            "sigma_vs_share_equality" => Some(SweepSpec::SigmaVsShareEquality {
                gammas: vec![0.25, 0.5, 1.0, 2.0, 4.0],
                num_tenants: 4,
                alpha: 3.0,
            }),
            "het_profile" => Some(SweepSpec::HetProfile {
                s1_values: vec![0.1, 0.25, 0.4, 0.55, 0.7],
                abrd: AbrdConfig::default(),
            }),
            _ => None,
        }
    }
}

/// Evaluates a sweep into a table whose rows match the corresponding figure
/// axes.
pub fn sweep(spec: &SweepSpec) -> Result<Table, GameError> {
    match spec {
        SweepSpec::SigmaVsTenantsAlpha { alphas, max_tenants, gamma } => {
            let mut columns = vec!["num_tenants".to_string()];
            columns.extend(alphas.iter().map(|a| format!("sigma_alpha_{a}")));
            let mut rows = Vec::new();
            for s in 1..=*max_tenants {
                let shares = vec![1.0 / s as f64; s];
                let mut row = vec![s as f64];
                for &alpha in alphas {
                    let beta = alpha / (alpha + 1.0);
                    row.push(proposed_subscription_ratio(*gamma, beta, &shares)?);
                }
                rows.push(row);
            }
            Ok(Table { columns, rows })
        }
        SweepSpec::SigmaVsTenantsGamma { gammas, max_tenants, alpha } => {
            let beta = alpha / (alpha + 1.0);
            let mut columns = vec!["num_tenants".to_string()];
            columns.extend(gammas.iter().map(|g| format!("sigma_gamma_{g}")));
            let mut rows = Vec::new();
            for s in 1..=*max_tenants {
                let shares = vec![1.0 / s as f64; s];
                let mut row = vec![s as f64];
                for &gamma in gammas {
                    row.push(proposed_subscription_ratio(gamma, beta, &shares)?);
                }
                rows.push(row);
            }
            Ok(Table { columns, rows })
        }
        SweepSpec::Rho1VsShareBounds { num_tenants, alpha } => {
            let beta = alpha / (alpha + 1.0);
            let columns = vec![
                "s1".to_string(),
                "rho1_concentrated_rest".to_string(),
                "rho1_equal_rest".to_string(),
            ];
            let mut rows = Vec::new();
            for k in 1..=20 {
                let s1 = k as f64 / 20.0;
                let mut concentrated = vec![0.0; *num_tenants];
                concentrated[0] = s1;
                if *num_tenants > 1 {
                    concentrated[1] = 1.0 - s1;
                }
                let mut equal = vec![(1.0 - s1) / (*num_tenants as f64 - 1.0); *num_tenants];
                equal[0] = s1;
                rows.push(vec![
                    s1,
                    proposed_fractions(&concentrated, beta)[0],
                    proposed_fractions(&equal, beta)[0],
                ]);
            }
            Ok(Table { columns, rows })
        }
        SweepSpec::SigmaVsShareEquality { gammas, num_tenants, alpha } => {
            let beta = alpha / (alpha + 1.0);
            let mut columns = vec!["s1".to_string(), "share_equality_factor".to_string()];
            columns.extend(gammas.iter().map(|g| format!("sigma_gamma_{g}")));
            let mut rows = Vec::new();
            let s = *num_tenants as f64;
            for k in 0..=28 {
                // from equal shares down to near-monopoly
                let s1 = 1.0 / s + (0.999 - 1.0 / s) * k as f64 / 28.0;
                let mut shares = vec![(1.0 - s1) / (s - 1.0); *num_tenants];
                shares[0] = s1;
                let factor: f64 = shares.iter().map(|v| v.powf(beta)).sum();
                let mut row = vec![s1, factor];
                for &gamma in gammas {
                    row.push(proposed_subscription_ratio(gamma, beta, &shares)?);
                }
                rows.push(row);
            }
            Ok(Table { columns, rows })
        }
        SweepSpec::HetProfile { s1_values, abrd: config } => {
            let columns = vec![
                "s1".to_string(),
                "cell".to_string(),
                "gamma".to_string(),
                "n_users".to_string(),
                "w1_proposed".to_string(),
                "w1_abrd".to_string(),
                "sigma_proposed".to_string(),
                "sigma_abrd".to_string(),
                "rho1_proposed".to_string(),
                "rho1_abrd".to_string(),
                "eps_sigma".to_string(),
                "eps_rho1".to_string(),
            ];
            let mut rows = Vec::new();
            for &s1 in s1_values {
                let scenario = reference_heterogeneous_scenario(s1)?;
                let closed = proposed_solution(&scenario)?;
                let run = abrd(&scenario, config)?;
                for j in 0..scenario.num_cells() {
                    rows.push(vec![
                        s1,
                        j as f64,
                        scenario.gamma(j),
                        scenario.cells()[j].n_users as f64,
                        closed.weights.row(0)[j],
                        run.weights.row(0)[j],
                        closed.state.sigma[j],
                        run.state.sigma[j],
                        closed.state.rho[j][0],
                        run.state.rho[j][0],
                        (closed.state.sigma[j] - run.state.sigma[j]) / run.state.sigma[j],
                        (closed.state.rho[j][0] - run.state.rho[j][0]) / run.state.rho[j][0],
                    ]);
                }
            }
            Ok(Table { columns, rows })
        }
    }
}
