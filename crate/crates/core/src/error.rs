use alloc::boxed::Box;
use alloc::string::String;

use crate::cavity::LineshapeFit;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// An argument is outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// Input data violates a structural invariant (lengths, ordering, ...).
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("degenerate field: {0}")]
    DegenerateField(String),

    #[error("degenerate excitation region: {0}")]
    DegenerateRegion(String),

    /// A conversion would divide by zero (e.g. a zero confinement factor).
    #[error("division-degenerate: {0}")]
    DivisionDegenerate(String),

    #[error("no resonance: transmission contrast {contrast:.3e} below floor {floor:.3e}")]
    NoResonance { contrast: f64, floor: f64 },

    /// The lineshape fit did not converge; the best iterate is attached.
    #[error("lineshape fit did not converge after {iterations} iterations")]
    FitNonConvergence {
        iterations: usize,
        best: Box<LineshapeFit>,
    },

    /// The generator has more than one closed communicating class.
    #[error("steady state is not unique; closed components: {components}")]
    NonUniqueSteadyState { components: String },

    #[error("coverage error: {0}")]
    Coverage(String),

    #[error("configuration error: {0}")]
    Configuration(String),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }
}
