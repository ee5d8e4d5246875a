//! Game instance types and evaluation of all market quantities.
//!
//! A scenario is a set of radio cells shared by competing tenants. Each tenant
//! holds a share of the pooled resources and splits it across cells through
//! strictly positive weights. Users subscribe according to a logit
//! discrete-choice rule driven by per-user resources, which couples the
//! tenants' weight choices to subscription ratios, subscriber counts and
//! revenues. Everything here is a pure function of immutable inputs.

use serde::{Deserialize, Serialize};

use crate::error::GameError;
use crate::rootfind::solve_bracketed;

/// Lower clamp applied to weights inside numerical routines. The strategy
/// space is open (weights strictly positive) and several formulas divide by a
/// weight, so exact zeros are rejected at construction and near-zeros are
/// floored here.
pub const WEIGHT_FLOOR: f64 = 1e-12;

/// Absolute tolerance of the subscription-ratio root solve.
pub const ROOT_XTOL: f64 = 1e-12;

/// Iteration cap of the subscription-ratio root solve.
pub const ROOT_MAX_ITER: usize = 200;

const SHARE_SUM_TOL: f64 = 1e-12;
const BUDGET_SLACK: f64 = 1e-12;

/// Strictly positive, finite, and in particular not NaN.
fn positive_finite(x: f64) -> bool {
    x.is_finite() && x > 0.0
}

/// One cell: its user population, capacity, and the virtual capacity of the
/// no-subscription option.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CellSpec {
    /// Number of users in the cell.
    pub n_users: u64,
    /// Total resources available in the cell.
    pub capacity: f64,
    /// Virtual capacity of not subscribing; `0` means every user subscribes.
    pub r0: f64,
}

impl CellSpec {
    pub fn new(n_users: u64, capacity: f64, r0: f64) -> Result<Self, GameError> {
        let cell = CellSpec { n_users, capacity, r0 };
        cell.validate()?;
        Ok(cell)
    }

    fn validate(&self) -> Result<(), GameError> {
        if self.n_users == 0 {
            return Err(GameError::InvalidScenario("cell needs at least one user".into()));
        }
        if !positive_finite(self.capacity) {
            return Err(GameError::InvalidScenario(format!(
                "cell capacity must be positive and finite, got {}",
                self.capacity
            )));
        }
        if !self.r0.is_finite() || self.r0 < 0.0 {
            return Err(GameError::InvalidScenario(format!(
                "cell r0 must be non-negative and finite, got {}",
                self.r0
            )));
        }
        Ok(())
    }

    /// Capacity per user and per monetary unit, normalized by the virtual
    /// capacity of not subscribing. Returns `+inf` when `r0 == 0`, the
    /// all-subscribe regime.
    pub fn normalized_capacity(&self, price: f64) -> f64 {
        debug_assert!(price > 0.0);
        if self.r0 == 0.0 {
            f64::INFINITY
        } else {
            self.capacity / (self.n_users as f64 * price * self.r0)
        }
    }
}

/// Immutable game instance: cells, tenant shares, service price and user
/// sensitivity. The sensitivity enters every formula through
/// `beta = alpha / (alpha + 1)`, cached at construction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawScenario", into = "RawScenario")]
pub struct Scenario {
    cells: Vec<CellSpec>,
    shares: Vec<f64>,
    price: f64,
    alpha: f64,
    beta: f64,
}

impl Scenario {
    pub fn new(
        cells: Vec<CellSpec>,
        shares: Vec<f64>,
        price: f64,
        alpha: f64,
    ) -> Result<Self, GameError> {
        if cells.is_empty() {
            return Err(GameError::InvalidScenario("at least one cell required".into()));
        }
        for cell in &cells {
            cell.validate()?;
        }
        if shares.is_empty() {
            return Err(GameError::InvalidScenario("at least one tenant required".into()));
        }
        for (i, &s) in shares.iter().enumerate() {
            if !positive_finite(s) {
                return Err(GameError::InvalidScenario(format!(
                    "share of tenant {i} must be strictly positive, got {s}"
                )));
            }
        }
        let sum: f64 = shares.iter().sum();
        if (sum - 1.0).abs() > SHARE_SUM_TOL {
            return Err(GameError::InvalidScenario(format!(
                "shares must sum to 1 (within {SHARE_SUM_TOL:e}), got {sum}"
            )));
        }
        if !positive_finite(price) {
            return Err(GameError::InvalidScenario(format!(
                "price must be positive and finite, got {price}"
            )));
        }
        if !positive_finite(alpha) {
            return Err(GameError::InvalidScenario(format!(
                "alpha must be positive and finite, got {alpha}"
            )));
        }
        let beta = alpha / (alpha + 1.0);
        debug_assert!(beta > 0.0 && beta < 1.0);
        Ok(Scenario { cells, shares, price, alpha, beta })
    }

    pub fn cells(&self) -> &[CellSpec] {
        &self.cells
    }

    pub fn shares(&self) -> &[f64] {
        &self.shares
    }

    pub fn price(&self) -> f64 {
        self.price
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn num_tenants(&self) -> usize {
        self.shares.len()
    }

    pub fn num_cells(&self) -> usize {
        self.cells.len()
    }

    /// Normalized capacity of cell `j`; `+inf` encodes `r0 == 0`.
    pub fn gamma(&self, j: usize) -> f64 {
        self.cells[j].normalized_capacity(self.price)
    }

    pub fn gammas(&self) -> Vec<f64> {
        (0..self.num_cells()).map(|j| self.gamma(j)).collect()
    }
}

/// On-disk scenario form. Cells may spell out `{n_users, capacity, r0}` or
/// give `gamma` instead (with `gamma: null` meaning `r0 = 0`), in which case
/// `r0 = 1` and `capacity = gamma * n_users * price` are back-solved.
#[derive(Serialize, Deserialize)]
struct RawScenario {
    cells: Vec<RawCell>,
    shares: Vec<f64>,
    price: f64,
    alpha: f64,
}

#[derive(Serialize, Deserialize)]
struct RawCell {
    n_users: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    capacity: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    r0: Option<f64>,
    #[serde(default, deserialize_with = "some_nullable", skip_serializing_if = "Option::is_none")]
    gamma: Option<Option<f64>>,
}

/// Distinguishes an absent `gamma` key (`None`) from an explicit
/// `gamma: null` (`Some(None)`).
fn some_nullable<'de, D>(de: D) -> Result<Option<Option<f64>>, D::Error>
where
    D: serde::Deserializer<'de>,
{
    Ok(Some(Option::<f64>::deserialize(de)?))
}

impl TryFrom<RawScenario> for Scenario {
    type Error = GameError;

    fn try_from(raw: RawScenario) -> Result<Self, GameError> {
        if !positive_finite(raw.price) {
            return Err(GameError::InvalidScenario(format!(
                "price must be positive and finite, got {}",
                raw.price
            )));
        }
        let mut cells = Vec::with_capacity(raw.cells.len());
        for (j, c) in raw.cells.iter().enumerate() {
            let cell = match (c.capacity, c.r0, &c.gamma) {
                (Some(capacity), Some(r0), None) => CellSpec { n_users: c.n_users, capacity, r0 },
                (None, None, Some(gamma)) => cell_from_gamma(c.n_users, *gamma, raw.price)?,
                _ => {
                    return Err(GameError::InvalidScenario(format!(
                        "cell {j}: give either both capacity and r0, or gamma"
                    )))
                }
            };
            cells.push(cell);
        }
        Scenario::new(cells, raw.shares, raw.price, raw.alpha)
    }
}

impl From<Scenario> for RawScenario {
    fn from(s: Scenario) -> Self {
        RawScenario {
            cells: s
                .cells
                .into_iter()
                .map(|c| RawCell {
                    n_users: c.n_users,
                    capacity: Some(c.capacity),
                    r0: Some(c.r0),
                    gamma: None,
                })
                .collect(),
            shares: s.shares,
            price: s.price,
            alpha: s.alpha,
        }
    }
}

/// Back-solves `(capacity, r0)` from a normalized capacity. `None` encodes
/// `r0 = 0`; the capacity is then set to `n_users * price` so per-user
/// resources stay meaningful.
pub fn cell_from_gamma(n_users: u64, gamma: Option<f64>, price: f64) -> Result<CellSpec, GameError> {
    let n = n_users as f64;
    match gamma {
        None => CellSpec::new(n_users, n * price, 0.0),
        Some(g) if g > 0.0 && g.is_finite() => CellSpec::new(n_users, g * n * price, 1.0),
        Some(g) if g.is_infinite() && g > 0.0 => CellSpec::new(n_users, n * price, 0.0),
        Some(g) => Err(GameError::InvalidScenario(format!(
            "gamma must be positive, got {g}"
        ))),
    }
}

/// Per-tenant strategy: row `i` holds tenant `i`'s weight for every cell.
/// Entries are strictly positive and each row must fit within the tenant's
/// share budget.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(transparent)]
pub struct WeightProfile {
    rows: Vec<Vec<f64>>,
}

impl WeightProfile {
    pub fn new(rows: Vec<Vec<f64>>, scenario: &Scenario) -> Result<Self, GameError> {
        if rows.len() != scenario.num_tenants() {
            return Err(GameError::InvalidWeights(format!(
                "expected {} tenant rows, got {}",
                scenario.num_tenants(),
                rows.len()
            )));
        }
        for (i, row) in rows.iter().enumerate() {
            if row.len() != scenario.num_cells() {
                return Err(GameError::InvalidWeights(format!(
                    "row {i}: expected {} cells, got {}",
                    scenario.num_cells(),
                    row.len()
                )));
            }
            let mut sum = 0.0;
            for (j, &w) in row.iter().enumerate() {
                if !positive_finite(w) {
                    return Err(GameError::InvalidWeights(format!(
                        "weight ({i},{j}) must be strictly positive, got {w}"
                    )));
                }
                sum += w;
            }
            if sum > scenario.shares()[i] + BUDGET_SLACK {
                return Err(GameError::InvalidWeights(format!(
                    "row {i} sums to {sum}, exceeding share {}",
                    scenario.shares()[i]
                )));
            }
        }
        Ok(WeightProfile { rows })
    }

    /// Budget-exact uniform split `s_i / |B|` over cells.
    pub fn uniform(scenario: &Scenario) -> Self {
        let b = scenario.num_cells() as f64;
        WeightProfile {
            rows: scenario.shares().iter().map(|&s| vec![s / b; scenario.num_cells()]).collect(),
        }
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    pub fn row(&self, tenant: usize) -> &[f64] {
        &self.rows[tenant]
    }

    /// Weights of all tenants in cell `j`.
    pub fn cell_weights(&self, j: usize) -> Vec<f64> {
        self.rows.iter().map(|r| r[j]).collect()
    }

    /// Largest absolute element-wise difference to another profile.
    pub fn max_abs_diff(&self, other: &WeightProfile) -> f64 {
        self.rows
            .iter()
            .zip(&other.rows)
            .flat_map(|(a, b)| a.iter().zip(b).map(|(x, y)| (x - y).abs()))
            .fold(0.0, f64::max)
    }
}

/// Everything the market settles to under a fixed weight profile.
///
/// Per-cell collections are indexed `[cell][tenant]`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MarketState {
    /// Fraction of each cell's users that subscribe at all.
    pub sigma: Vec<f64>,
    /// Among subscribers of a cell, the fraction choosing each tenant.
    pub rho: Vec<Vec<f64>>,
    /// Subscriber counts per cell and tenant (continuum approximation).
    pub subscribers: Vec<Vec<f64>>,
    /// Resources backing one user of each tenant in each cell.
    pub per_user_resources: Vec<Vec<f64>>,
    /// Per-tenant revenue: price times total subscribers.
    pub revenues: Vec<f64>,
}

/// Coefficient `a` of the penetration equation `sigma = a (1-sigma)^(1-beta)`
/// for one cell: `gamma^beta * sum(w^beta) / (sum w)^beta`.
fn penetration_coefficient(cell_weights: &[f64], gamma: f64, beta: f64) -> f64 {
    let mut pow_sum = 0.0;
    let mut sum = 0.0;
    for &w in cell_weights {
        let w = w.max(WEIGHT_FLOOR);
        pow_sum += w.powf(beta);
        sum += w;
    }
    gamma.powf(beta) * pow_sum / sum.powf(beta)
}

/// Solves `sigma - a (1-sigma)^(1-beta) = 0` for the unique root in `(0, 1)`.
pub(crate) fn solve_penetration(a: f64, beta: f64) -> Result<f64, GameError> {
    debug_assert!(a > 0.0 && beta > 0.0 && beta < 1.0);
    if a.is_infinite() {
        return Ok(1.0);
    }
    solve_bracketed(
        |s| {
            let q = (1.0 - s).powf(1.0 - beta);
            let f = s - a * q;
            // d/ds of -a (1-s)^(1-beta) is a (1-beta) (1-s)^(-beta)
            let df = 1.0 + a * (1.0 - beta) * (1.0 - s).powf(-beta);
            (f, df)
        },
        0.0,
        1.0,
        ROOT_XTOL,
        ROOT_MAX_ITER,
    )
}

/// Subscription ratio of one cell: the unique root in `(0, 1)` of
/// `sigma - gamma^beta * (sum w^beta)/(sum w)^beta * (1-sigma)^(1-beta) = 0`,
/// or exactly `1` when `gamma` is infinite (`r0 = 0`).
pub fn subscription_ratio(cell_weights: &[f64], gamma: f64, beta: f64) -> Result<f64, GameError> {
    debug_assert!(!cell_weights.is_empty() && cell_weights.iter().all(|&w| w > 0.0));
    if gamma.is_infinite() {
        return Ok(1.0);
    }
    solve_penetration(penetration_coefficient(cell_weights, gamma, beta), beta)
}

/// Fraction of a cell's subscribers captured by each tenant:
/// `w_i^beta / sum_t w_t^beta`. Homogeneous of degree zero in the weights.
pub fn tenant_fractions(cell_weights: &[f64], beta: f64) -> Vec<f64> {
    let pows: Vec<f64> = cell_weights.iter().map(|&w| w.max(WEIGHT_FLOOR).powf(beta)).collect();
    let total: f64 = pows.iter().sum();
    pows.into_iter().map(|p| p / total).collect()
}

/// Evaluates the full market outcome for a feasible weight profile.
pub fn market_state(scenario: &Scenario, weights: &WeightProfile) -> Result<MarketState, GameError> {
    market_state_raw(scenario, weights.rows())
}

pub(crate) fn market_state_raw(
    scenario: &Scenario,
    rows: &[Vec<f64>],
) -> Result<MarketState, GameError> {
    let beta = scenario.beta();
    let num_cells = scenario.num_cells();
    let num_tenants = rows.len();
    let mut sigma = Vec::with_capacity(num_cells);
    let mut rho = Vec::with_capacity(num_cells);
    let mut subscribers = Vec::with_capacity(num_cells);
    let mut per_user = Vec::with_capacity(num_cells);
    let mut revenues = vec![0.0; num_tenants];

    for j in 0..num_cells {
        let cell = &scenario.cells()[j];
        let w: Vec<f64> = rows.iter().map(|r| r[j].max(WEIGHT_FLOOR)).collect();
        let s = subscription_ratio(&w, scenario.gamma(j), beta)?;
        let fractions = tenant_fractions(&w, beta);
        let n_cell = cell.n_users as f64;
        let w_sum: f64 = w.iter().sum();

        let counts: Vec<f64> = fractions.iter().map(|&f| n_cell * s * f).collect();
        let resources: Vec<f64> = w
            .iter()
            .zip(&counts)
            .map(|(&wi, &ni)| (wi / w_sum) * cell.capacity / ni)
            .collect();
        for (i, &ni) in counts.iter().enumerate() {
            revenues[i] += scenario.price() * ni;
        }
        sigma.push(s);
        rho.push(fractions);
        subscribers.push(counts);
        per_user.push(resources);
    }
    Ok(MarketState { sigma, rho, subscribers, per_user_resources: per_user, revenues })
}

/// Per-cell market quantities entering the derivative formulas.
struct CellPoint {
    sigma: f64,
    rho_i: f64,
    x_i: f64,
    w_i: f64,
    n: f64,
}

fn cell_point(
    scenario: &Scenario,
    rows: &[Vec<f64>],
    tenant: usize,
    j: usize,
) -> Result<CellPoint, GameError> {
    let beta = scenario.beta();
    let w: Vec<f64> = rows.iter().map(|r| r[j].max(WEIGHT_FLOOR)).collect();
    let sigma = subscription_ratio(&w, scenario.gamma(j), beta)?;
    let pow_sum: f64 = w.iter().map(|&v| v.powf(beta)).sum();
    let sum: f64 = w.iter().sum();
    Ok(CellPoint {
        sigma,
        rho_i: w[tenant].powf(beta) / pow_sum,
        x_i: w[tenant] / sum,
        w_i: w[tenant],
        n: scenario.cells()[j].n_users as f64,
    })
}

/// First derivative of tenant `i`'s revenue with respect to its own weight in
/// each cell; strictly positive everywhere on the strategy space.
pub fn revenue_gradient(
    scenario: &Scenario,
    weights: &WeightProfile,
    tenant: usize,
) -> Result<Vec<f64>, GameError> {
    revenue_gradient_raw(scenario, weights.rows(), tenant)
}

pub(crate) fn revenue_gradient_raw(
    scenario: &Scenario,
    rows: &[Vec<f64>],
    tenant: usize,
) -> Result<Vec<f64>, GameError> {
    check_tenant(scenario, tenant)?;
    let beta = scenario.beta();
    let p = scenario.price();
    (0..scenario.num_cells())
        .map(|j| {
            let pt = cell_point(scenario, rows, tenant, j)?;
            Ok(gradient_term(p, beta, &pt))
        })
        .collect()
}

fn gradient_term(p: f64, beta: f64, pt: &CellPoint) -> f64 {
    p * beta * pt.n * pt.sigma * pt.rho_i / (pt.w_i * (1.0 - beta * pt.sigma))
        * ((1.0 - beta) * (1.0 - pt.rho_i) * pt.sigma + (1.0 - pt.x_i) * (1.0 - pt.sigma))
}

/// Diagonal of tenant `i`'s revenue Hessian, one entry per cell. The
/// cross-cell second derivatives are identically zero (the revenue separates
/// into per-cell terms, each depending on the tenant's weight in that cell
/// alone), so the diagonal is the whole Hessian.
pub fn revenue_hessian_diag(
    scenario: &Scenario,
    weights: &WeightProfile,
    tenant: usize,
) -> Result<Vec<f64>, GameError> {
    revenue_hessian_diag_raw(scenario, weights.rows(), tenant)
}

pub(crate) fn revenue_hessian_diag_raw(
    scenario: &Scenario,
    rows: &[Vec<f64>],
    tenant: usize,
) -> Result<Vec<f64>, GameError> {
    check_tenant(scenario, tenant)?;
    let beta = scenario.beta();
    let p = scenario.price();
    (0..scenario.num_cells())
        .map(|j| {
            let pt = cell_point(scenario, rows, tenant, j)?;
            Ok(hessian_term(p, beta, &pt))
        })
        .collect()
}

fn hessian_term(p: f64, beta: f64, pt: &CellPoint) -> f64 {
    let (s, r, x) = (pt.sigma, pt.rho_i, pt.x_i);
    let q = (1.0 - s) / (1.0 - beta * s);
    let inner = (r - x) * (r - x) * beta / (1.0 - beta * s) * (q - s)
        + x * x
        + beta * (1.0 - r) * (3.0 * r - 2.0 * x)
        - r;
    p * beta * pt.n * s * r / (pt.w_i * pt.w_i)
        * (q * inner - (1.0 - r) * (1.0 - beta + 2.0 * beta * r))
}

/// Revenue of one tenant plus its gradient, sharing the per-cell penetration
/// solves. `others_pow[j]` and `others_sum[j]` hold the opponents'
/// contributions `sum w^beta` and `sum w` for cell `j`.
pub(crate) fn revenue_and_gradient_vs_others(
    scenario: &Scenario,
    own: &[f64],
    others_pow: &[f64],
    others_sum: &[f64],
    grad: Option<&mut Vec<f64>>,
    hess: Option<&mut Vec<f64>>,
) -> Result<f64, GameError> {
    let beta = scenario.beta();
    let p = scenario.price();
    let mut value = 0.0;
    let mut grad = grad;
    let mut hess = hess;
    if let Some(g) = grad.as_deref_mut() {
        g.clear();
    }
    if let Some(h) = hess.as_deref_mut() {
        h.clear();
    }
    for j in 0..scenario.num_cells() {
        let w = own[j].max(WEIGHT_FLOOR);
        let pow_sum = others_pow[j] + w.powf(beta);
        let sum = others_sum[j] + w;
        let gamma = scenario.gamma(j);
        let sigma = if gamma.is_infinite() {
            1.0
        } else {
            solve_penetration(gamma.powf(beta) * pow_sum / sum.powf(beta), beta)?
        };
        let pt = CellPoint {
            sigma,
            rho_i: w.powf(beta) / pow_sum,
            x_i: w / sum,
            w_i: w,
            n: scenario.cells()[j].n_users as f64,
        };
        value += p * pt.n * pt.sigma * pt.rho_i;
        if let Some(g) = grad.as_deref_mut() {
            g.push(gradient_term(p, beta, &pt));
        }
        if let Some(h) = hess.as_deref_mut() {
            h.push(hessian_term(p, beta, &pt));
        }
    }
    Ok(value)
}

fn check_tenant(scenario: &Scenario, tenant: usize) -> Result<(), GameError> {
    if tenant >= scenario.num_tenants() {
        return Err(GameError::TenantIndex { tenant, num_tenants: scenario.num_tenants() });
    }
    Ok(())
}
