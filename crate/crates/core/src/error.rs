use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Shapes that do not line up: matrix vs labels, vector lengths, indices.
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    /// A parameter outside the domain of the mathematical definition.
    #[error("domain error: {0}")]
    Domain(String),

    #[error("marginals carry different mass: {source_mass} vs {target_mass}")]
    Unbalanced { source_mass: f64, target_mass: f64 },

    #[error("no convergence after {iterations} iterations (residual {residual:e})")]
    Convergence { iterations: usize, residual: f64 },

    #[error("unsupported geometry: {0}")]
    UnsupportedGeometry(String),

    #[error("invalid partition: {0}")]
    Partition(String),

    #[error("graph is disconnected at bandwidth {bandwidth}; smallest connecting bandwidth is about {suggested}")]
    Bandwidth { bandwidth: f64, suggested: f64 },

    #[error("graph is disconnected")]
    Disconnected,

    #[error("numerical failure: {message} (residual {residual:e})")]
    Numerical { message: String, residual: f64 },

    #[error("optimization failed: {0}")]
    Optimization(String),

    #[error("negative density {value:e} at index {index} at time {time}")]
    Stability { index: usize, value: f64, time: f64 },

    #[error("generation failed: {0}")]
    Generation(String),

    #[error("generator {index} is not an mm-isomorphism: {reason}")]
    NotIsometric { index: usize, reason: String },

    #[error("input error: {0}")]
    Input(String),

    #[error("unknown {kind} `{name}` (known: {known})")]
    UnknownStrategy {
        kind: &'static str,
        name: String,
        known: String,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
