use thiserror::Error;

use crate::information::TheoremVerdict;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("dimension mismatch for {what}: expected {expected}, found {found}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("invalid density: {0}")]
    InvalidDensity(String),

    #[error("invalid model specification: {0}")]
    InvalidSpec(String),

    /// The adjoint has mass on a coordinate where the pairing weight `p_i * mu_i` is zero.
    #[error("adjoint has mass at coordinate {index} where the pairing weight vanishes")]
    DegenerateWeight { index: usize },

    #[error(
        "direction is not in the tangent space (centering constraint violated by {violation:e})"
    )]
    NotInTangentSpace { violation: f64 },

    /// The Cramér-Rao ratio is undefined along a direction the gradient annihilates.
    #[error("gradient vanishes along the requested direction")]
    ZeroGradientDirection,

    #[error("gradient vanishes on the whole tangent space (locally constant parameter)")]
    DegenerateGradient,

    #[error(
        "evaluation point {index} carries no mass; the point functional has no pairing representer"
    )]
    ZeroMassAtPoint { index: usize },

    #[error("path leaves the model at t = {t} (grid index {index})")]
    PathLeavesModel { t: f64, index: usize },

    #[error("theorem check failed: info = {}, relative residual = {:e}", .0.info, .0.relative_residual)]
    InconsistentVerdict(Box<TheoremVerdict>),

    #[error("degenerate fit: {0}")]
    DegenerateFit(String),

    #[error("unsupported sampler family: {0}")]
    UnsupportedFamily(String),

    #[error("invalid experiment configuration: {0}")]
    InvalidExperiment(String),
}

pub(crate) fn check_len(what: &'static str, expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::DimensionMismatch {
            what,
            expected,
            found,
        })
    }
}
