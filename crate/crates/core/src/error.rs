use thiserror::Error;

/// Errors surfaced by the estimation and simulation machinery.
///
/// Non-convergence of a fit is deliberately *not* an error: solvers return
/// their best iterate with `converged = false` and a populated separation
/// report instead.
#[derive(Debug, Clone, Error)]
pub enum Error {
    #[error("design matrix is rank deficient (scaled pivot {pivot:.3e} at column {col})")]
    RankDeficient { col: usize, pivot: f64 },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("variance must be strictly positive, got {0}")]
    NonPositiveVariance(f64),

    #[error("sample variance requires at least two observations")]
    DegenerateSample,

    #[error("score interval undefined: n = {n} does not exceed the chi-square quantile {chi2}")]
    DegenerateN { n: f64, chi2: f64 },

    #[error("{contrast} contrast undefined at mu = {mu}")]
    SingularContrast { contrast: &'static str, mu: f64 },

    #[error("balanced assignment requires an even sample size, got {0}")]
    OddN(usize),

    #[error("summary cell {0} has no usable replicates")]
    EmptyCell(String),
}

pub type Result<T> = std::result::Result<T, Error>;
