use thiserror::Error;

/// Errors raised by the evaluators, optimizers and the command line front end.
#[derive(Debug, Error)]
pub enum Error {
    /// An argument lies outside the domain where the quantity is defined.
    #[error("domain error: {0}")]
    Domain(String),

    /// Stripe width and period are incommensurate; carries the two nearest
    /// admissible widths `L / (2 ceil(L/2h))` and `L / (2 floor(L/2h))`.
    #[error("stripes of width {h} do not tile period {period}; nearest widths are h+ = {h_plus} and h- = {h_minus}")]
    Incommensurate { h: f64, period: f64, h_plus: f64, h_minus: f64 },

    /// Adaptive quadrature ran out of budget before reaching the tolerance.
    #[error("quadrature did not converge: estimate {estimate:e}, error {error:e} after {evaluations} evaluations")]
    Quadrature { estimate: f64, error: f64, evaluations: usize },

    /// A minimizer could not bracket or locate its optimum.
    #[error("bracketing failure: {0}")]
    Bracketing(String),

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn domain<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Domain(msg.into()))
}
