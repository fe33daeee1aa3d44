use thiserror::Error;

/// Errors raised by the analytic model and the Monte Carlo oracle.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("{what} = {value} outside domain {domain}")]
    Domain {
        what: &'static str,
        value: f64,
        domain: String,
    },

    #[error(
        "adaptive quadrature did not converge: estimated error {achieved:.3e} > requested {requested:.3e} \
         after {evaluations} evaluations (worst subinterval [{worst_lo:.6e}, {worst_hi:.6e}])"
    )]
    Quadrature {
        achieved: f64,
        requested: f64,
        evaluations: usize,
        worst_lo: f64,
        worst_hi: f64,
    },

    #[error("interference CDF cache rebuild failed after {attempts} attempts: {reason}")]
    CacheBuild { attempts: usize, reason: String },

    #[error("inconsistent inputs: {0}")]
    Inconsistent(String),

    #[error("at r = {r:.6e} m: {source}")]
    AtRadius {
        r: f64,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }

    pub(crate) fn at_radius(self, r: f64) -> Self {
        match self {
            e @ Error::AtRadius { .. } => e,
            e => Error::AtRadius { r, source: Box::new(e) },
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
