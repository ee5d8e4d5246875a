//! Nash equilibria of the network-slicing tenant competition game.
//!
//! Tenants lease shares of a pooled radio network and compete for
//! subscribers by splitting their share across cells through per-cell
//! weights. The infrastructure allocates each cell's capacity in proportion
//! to the weights, users pick a tenant (or stay out) following a logit
//! discrete-choice rule, and each tenant's revenue is the price times its
//! subscriber count. This crate evaluates the resulting market for any
//! weight profile, computes a closed-form candidate equilibrium, solves the
//! game independently by asynchronous best-response dynamics, and measures
//! how far the closed form sits from the computed equilibrium across
//! randomized scenario families.
//!
//! - [`model`]: scenario types and all market quantities (subscription
//!   ratios, subscriber fractions, revenues, revenue derivatives).
//! - [`equilibrium`]: the closed-form solution, penetration bounds, and KKT
//!   residuals.
//! - [`abrd`]: per-tenant best responses and the asynchronous dynamics.
//! - [`experiments`]: scenario families, sweeps, and Monte Carlo deviation
//!   reports.

pub mod abrd;
mod cuckoo;
pub mod equilibrium;
pub mod error;
pub mod experiments;
pub mod model;
pub mod rootfind;

pub use abrd::{abrd, abrd_traced, best_response, AbrdConfig, BestResponseOutcome, BrMethod};
pub use equilibrium::{
    homogeneity_check, kkt_residual, penetration_bounds, proposed_solution, EquilibriumResult,
    SolveMethod, SolverDiagnostics,
};
pub use error::GameError;
pub use experiments::{
    deviation_study, gen_scenario, sweep, DeviationReport, ScenarioFamily, SweepSpec, Table,
};
pub use model::{
    market_state, revenue_gradient, revenue_hessian_diag, subscription_ratio, tenant_fractions,
    CellSpec, MarketState, Scenario, WeightProfile,
};
