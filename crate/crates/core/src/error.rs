use thiserror::Error;

/// Errors raised by the analysis, optimization and simulation routines.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// A model parameter is outside its mathematical domain.
    #[error("parameter out of domain: {0}")]
    Domain(String),

    /// The operation is not defined for this kind of model.
    #[error("unsupported operation: {0}")]
    Unsupported(String),

    /// Inputs are individually valid but inconsistent with each other.
    #[error("configuration error: {0}")]
    Config(String),

    /// A numerical routine (quadrature, factorization) failed.
    #[error("numerical failure: {0}")]
    Numerical(String),

    /// An iterative solver stopped without meeting its tolerance.
    #[error("solver failed: {message} (residual {residual:e})")]
    Solver { message: String, residual: f64 },

    /// The chain has no stationary distribution.
    #[error("chain is not positive recurrent (stability factor {factor:.6})")]
    Unstable { factor: f64 },

    /// A computed quantity does not cover the requested precision.
    #[error("insufficient precision: {0}")]
    Precision(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_probability(name: &str, value: f64) -> Result<()> {
    if value.is_finite() && (0.0..=1.0).contains(&value) {
        Ok(())
    } else {
        Err(Error::Domain(format!("{name} = {value} is not a probability")))
    }
}
