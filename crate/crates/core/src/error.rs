use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("graph not strongly connected: {0}")]
    Connectivity(String),

    #[error("metric degenerate at node {node}: drift norm {drift_norm} >= 1")]
    MetricDegenerate { node: usize, drift_norm: f64 },

    /// The shifted running cost has nonpositive infimum along the edge ray,
    /// so no positive traversal weight exists. `floor` is that infimum.
    #[error("subcritical shift on edge {edge}: inf of shifted running cost is {floor} <= 0")]
    Subcritical { edge: usize, floor: f64 },

    #[error("supercriticality violated: {0}")]
    SupercriticalityViolated(String),

    #[error("critical-value bracket invalid: {0}")]
    Bracket(String),

    #[error("marginal error: {0}")]
    Marginal(String),

    #[error("flow infeasible: {0}")]
    Infeasible(String),

    #[error("tight-set restriction infeasible: {0}")]
    Restriction(String),

    #[error("calibration tolerance too loose: {0}")]
    ToleranceCycle(String),

    #[error("instance too large: {0}")]
    TooLarge(String),

    #[error("numerical failure: {0}")]
    Numerical(String),
}
