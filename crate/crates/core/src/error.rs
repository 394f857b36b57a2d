use thiserror::Error;

use crate::dsl::{EvalError, ParseError};

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("in {field}: {source}")]
    Parse {
        field: String,
        #[source]
        source: ParseError,
    },
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("metric is singular at {point:?}")]
    SingularMetric { point: Vec<f64> },
    #[error("metric at {point:?} does not have Lorentzian signature ({negative} negative eigenvalues)")]
    Signature { point: Vec<f64>, negative: usize },
    #[error("point {point:?} lies outside the chart domain")]
    OutsideChart { point: Vec<f64> },
    #[error("zero vector")]
    ZeroVector,
    #[error("vector is not null: <v,v> = {norm:e} exceeds tolerance {tol:e}")]
    NotNull { norm: f64, tol: f64 },
    #[error("reference field is not timelike at {point:?}")]
    ReferenceNotTimelike { point: Vec<f64> },
    #[error("degenerate seed surface at parameter {theta:?}: {reason}")]
    DegenerateSeed { theta: Vec<f64>, reason: String },
    #[error("dead ray {ray} at t = {t}: {reason}")]
    DeadRay { ray: usize, t: f64, reason: String },
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error("precondition failed: {0}")]
    Precondition(String),
}

impl Error {
    pub(crate) fn parse(field: impl Into<String>, source: ParseError) -> Self {
        Error::Parse {
            field: field.into(),
            source,
        }
    }
}
