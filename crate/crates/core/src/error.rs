use num_complex::Complex64;
use thiserror::Error;

/// Where an evaluation failed: the complex arguments `(z, zeta)`.
#[derive(Debug, Clone, PartialEq)]
pub struct At {
    pub z: Vec<Complex64>,
    pub zeta: Complex64,
}

impl std::fmt::Display for At {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "z=(")?;
        for (i, z) in self.z.iter().enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{}{:+}i", z.re, z.im)?;
        }
        write!(f, "), zeta={}{:+}i", self.zeta.re, self.zeta.im)
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("parse error at column {column}: {message}")]
    Parse { column: usize, message: String },

    #[error("pole: {what} at {at}")]
    Pole { what: String, at: At },

    #[error("branch cut of {func} crossed at {at}")]
    BranchCut { func: &'static str, at: At },

    #[error("non-finite value ({what}) at {at}")]
    NonFinite { what: String, at: At },

    #[error("kernel pole: (lambda - z)/zeta reaches +-i at {at}")]
    KernelPole { at: At },

    #[error("quadrature did not converge after {evals} evaluations (error estimate {error:e})")]
    Quadrature { evals: usize, error: f64 },

    #[error("invalid family: {0}")]
    Family(String),

    #[error("invalid domain: {0}")]
    Domain(String),

    #[error("invalid grid request: {0}")]
    Grid(String),

    #[error("sampling budget unattainable: {0}")]
    Budget(String),

    #[error("ill-conditioned fit: {0}")]
    Fit(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("point outside the domain: {0}")]
    OutsideDomain(String),

    #[error("weight function too large: {0}")]
    WeightExplosion(String),

    #[error("verification failed: {0}")]
    Verification(String),

    #[error("invalid object: {0}")]
    Object(String),
}

impl Error {
    /// True for failures that come from arithmetic on a valid request
    /// (poles, overflow, quadrature) rather than from a malformed request.
    pub fn is_numeric(&self) -> bool {
        matches!(
            self,
            Error::Pole { .. }
                | Error::BranchCut { .. }
                | Error::NonFinite { .. }
                | Error::KernelPole { .. }
                | Error::Quadrature { .. }
                | Error::Fit(_)
                | Error::Verification(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
