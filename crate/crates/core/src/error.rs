use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("unsupported operation: {0}")]
    Unsupported(String),

    #[error("construction failed: {reason} (max residual {residual:.3e} at {witness:?})")]
    Construction {
        reason: String,
        residual: f64,
        witness: Vec<f64>,
    },

    #[error("connection not flat; reconstruction inapplicable (curvature residual {residual:.3e} at {witness:?})")]
    NotFlat { residual: f64, witness: Vec<f64> },

    #[error("transport path-dependent (loop residual {residual:.3e})")]
    PathDependent { residual: f64 },

    #[error("non-transitive anchor: rank deficient at {point:?} (singular value ratio {ratio:.3e})")]
    NonTransitive { point: Vec<f64>, ratio: f64 },

    #[error("degenerate frame at {point:?} (smallest singular value {min_singular:.3e})")]
    DegenerateFrame { point: Vec<f64>, min_singular: f64 },

    #[error("structure functions are not constant (constancy residual {residual:.3e}); reconstruction rejected")]
    NonConstantStructure { residual: f64 },

    #[error("evaluation failed at probe {probe}: {message}")]
    Probe { probe: usize, message: String },

    #[error("numerical failure: {0}")]
    Numerical(String),
}

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub fn unsupported(msg: impl Into<String>) -> Self {
        Error::Unsupported(msg.into())
    }

    /// True for failures caused by malformed input rather than by numerics.
    pub fn is_input_error(&self) -> bool {
        matches!(
            self,
            Error::DimensionMismatch { .. } | Error::InvalidInput(_) | Error::Unsupported(_)
        )
    }
}

pub(crate) fn check_dim(expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, found })
    }
}
