use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("coefficients leave the grid in variable {variable} (strict mode)")]
    GridOverflow { variable: usize },

    #[error("span of the input vectors is numerically zero")]
    EmptySpan,

    #[error("Blaschke zero {re}+{im}i is not inside the open unit disc")]
    ZeroOutsideDisc { re: f64, im: f64 },

    #[error("truncation too small: need at least {needed} coefficients per variable, got {got}")]
    TruncationTooSmall { needed: usize, got: usize },

    #[error("repeated-zero kernel chain is not resolved by the truncation (tail {tail:.3e})")]
    ChainTruncation { tail: f64 },

    #[error("wandering subspace is empty on the window; the operator is not a shift at this truncation")]
    EmptyWanderingSubspace,

    #[error("Wold coverage deficiency: {uncovered} dimensions of the window are not reached")]
    CoverageDeficiency { uncovered: usize },

    #[error("operators do not commute on the window (residual {residual:.3e})")]
    NonCommuting { residual: f64 },

    #[error("subspace is not invariant (residual {residual:.3e})")]
    NotInvariant { residual: f64 },

    #[error("subspaces are not nested (residual {residual:.3e})")]
    NotNested { residual: f64 },

    #[error("layout inconsistency: {0}")]
    Layout(String),

    #[error("precondition failed: {0}")]
    Precondition(String),

    #[error("malformed input: {0}")]
    Malformed(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Errors caused by the shape of the input rather than by the numerics.
    pub fn is_schema(&self) -> bool {
        matches!(
            self,
            Error::Malformed(_) | Error::Json(_) | Error::DimensionMismatch { .. } | Error::GridMismatch(_)
        )
    }
}
