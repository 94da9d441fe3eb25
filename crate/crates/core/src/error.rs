use thiserror::Error;

use crate::expr::ExprError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Expr(#[from] ExprError),
    #[error("the set has no cells")]
    EmptySet,
    #[error("invalid cell: {0}")]
    InvalidCell(String),
    #[error("degenerate cell: {0}")]
    DegenerateCell(String),
    #[error("cells {first} and {second} overlap near {point:?}")]
    Overlap {
        first: usize,
        second: usize,
        point: Vec<f64>,
    },
    #[error("integrand is not finite on {dropped} of {total} samples")]
    NonFiniteIntegrand { dropped: usize, total: usize },
    #[error("budget exceeded: {0}")]
    BudgetExceeded(String),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("plane is not a graph over the reference plane (condition number {0:.3e})")]
    NotAGraph(f64),
    #[error("could not cover the sample with {0} neighborhoods")]
    CoverBudgetExceeded(usize),
    #[error("tangent plane escapes the neighborhood: graph norm {norm} > tau {tau}")]
    TangentEscapesNeighborhood { norm: f64, tau: f64 },
    #[error("need at least {needed} tail points, have {have}")]
    InsufficientData { needed: usize, have: usize },
    #[error("volume is zero at r = {0}; cannot take logarithms")]
    ZeroVolume(f64),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("syntax error in JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Process exit code used by the command-line front end.
    ///
    /// 2: malformed input, 3: numerical failure. Verification failures (4)
    /// are not errors and are decided by the caller.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Expr(ExprError::Domain(_))
            | Error::DegenerateCell(_)
            | Error::NonFiniteIntegrand { .. }
            | Error::BudgetExceeded(_)
            | Error::NotAGraph(_)
            | Error::CoverBudgetExceeded(_)
            | Error::InsufficientData { .. }
            | Error::ZeroVolume(_) => 3,
            _ => 2,
        }
    }
}
