use thiserror::Error;

/// Errors raised by the key-rate library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("unknown register `{0}`")]
    UnknownRegister(String),

    #[error("duplicate register label `{0}`")]
    DuplicateRegister(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("operator is not Hermitian (max deviation {0:.3e})")]
    NotHermitian(f64),

    #[error("operator is not positive semidefinite (min eigenvalue {0:.3e})")]
    NotPositive(f64),

    #[error("state trace {0} outside [0, 1]")]
    InvalidTrace(f64),

    #[error("parameter `{name}` out of range: {value} ({expected})")]
    InvalidParameter {
        name: &'static str,
        value: f64,
        expected: &'static str,
    },

    #[error("asymmetric dark counts ({0}, {1}) are not supported by the squashed model")]
    AsymmetricDarkCounts(f64, f64),

    #[error("objective undefined: log argument {0} is not positive")]
    InfeasibleEvaluation(f64),

    #[error("candidate could not be projected onto the feasible set (residual {0:.3e})")]
    InfeasibleCandidate(f64),

    #[error("Fock truncation did not converge: tail {tail:.3e} at n_max = {n_max}")]
    TruncationNotConverged { tail: f64, n_max: usize },

    #[error("solver failure: {0}")]
    Solver(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_range(
    name: &'static str,
    value: f64,
    ok: bool,
    expected: &'static str,
) -> Result<()> {
    if ok && value.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParameter {
            name,
            value,
            expected,
        })
    }
}
