use thiserror::Error;

/// Every failure the library can report. The CLI maps variants onto exit codes.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum IbpError {
    /// An argument lies outside the support or domain of a function.
    #[error("domain error: {0}")]
    Domain(String),
    /// Parameters or a prior/score combination that cannot be used together.
    #[error("configuration error: {0}")]
    Config(String),
    /// Input data inconsistent with the declared model.
    #[error("validation error: {0}")]
    Validation(String),
    /// A rate or expectation that would have to be infinite.
    #[error("explosive configuration: {0}")]
    Explosive(String),
    /// A computation that would exceed representable sizes or iteration caps.
    #[error("resource limit: {0}")]
    Resource(String),
    /// Adaptive quadrature could not reach its tolerance.
    #[error("quadrature did not converge: {0}")]
    Quadrature(String),
    #[error("unknown suite `{0}`")]
    UnknownSuite(String),
}

pub type Result<T> = std::result::Result<T, IbpError>;

pub(crate) fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<()> {
    if cond {
        Ok(())
    } else {
        Err(IbpError::Config(msg()))
    }
}
