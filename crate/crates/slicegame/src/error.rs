use thiserror::Error;

/// Errors produced by scenario validation and the numerical solvers.
#[derive(Debug, Clone, Error)]
pub enum GameError {
    #[error("invalid scenario: {0}")]
    InvalidScenario(String),

    #[error("invalid weight profile: {0}")]
    InvalidWeights(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("tenant index {tenant} out of range ({num_tenants} tenants)")]
    TenantIndex { tenant: usize, num_tenants: usize },

    #[error(
        "root finder failed to converge after {iterations} iterations (best residual {residual:e})"
    )]
    RootFind { iterations: usize, residual: f64 },
}
