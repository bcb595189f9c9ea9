use thiserror::Error;

/// Errors raised by the simulator core.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// A configuration value or argument broke a documented rule.
    #[error("invalid `{key}`: {rule}")]
    Validation { key: String, rule: String },

    /// The network graph is unusable (disconnected, self-loop, bad bus index).
    #[error("topology error: {0}")]
    Topology(String),

    /// The nodal equations have no unique solution (e.g. every DER offline).
    #[error("power flow has no solution: {0}")]
    NoSolution(String),

    /// The state left the finite / guarded region.
    #[error("numerical divergence at t = {time:.6} s: {detail}")]
    Divergence { time: f64, detail: String },
}

impl Error {
    pub(crate) fn validation(key: impl Into<String>, rule: impl Into<String>) -> Self {
        Error::Validation {
            key: key.into(),
            rule: rule.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
