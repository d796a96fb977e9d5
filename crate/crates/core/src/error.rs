use thiserror::Error;

/// Errors produced by construction, analysis, and simulation routines.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid system: {0}")]
    InvalidSystem(String),

    #[error("invalid cbf: {0}")]
    InvalidCbf(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("unsupported dimension: {0}")]
    UnsupportedDimension(String),

    /// The constraint system admits no feasible input. Carries the index of the
    /// most violated constraint and its violation magnitude as a certificate.
    #[error("infeasible constraint system: constraint {index} violated by {violation:.6e}")]
    Infeasible { index: usize, violation: f64 },

    #[error("relative degree undetermined: output map is orthogonal to the controllable directions")]
    UndeterminedRelativeDegree,

    #[error("unknown preset `{name}`; valid presets: {valid}")]
    UnknownPreset { name: String, valid: String },

    #[error("state diverged (non-finite entries) at step {step}")]
    Diverged { step: usize },

    #[error("step {step}: {source}")]
    AtStep {
        step: usize,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    /// Wraps an error with the simulation step at which it occurred.
    pub fn at_step(self, step: usize) -> Error {
        Error::AtStep {
            step,
            source: Box::new(self),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
