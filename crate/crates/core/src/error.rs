use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("Unreachable: {0}")]
    Unreachable(String),

    #[error("dependent-coordinate solve did not converge after {iterations} iterations (residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("limb {limb} is singular: actuation denominator {denominator:e}")]
    SingularLimb { limb: usize, denominator: f64 },

    #[error("singular configuration: cond(G^T) = {cond:e}")]
    SingularConfiguration { cond: f64 },

    #[error("block inversion unavailable: {0}")]
    BlockSingular(String),

    #[error("platform points are collinear")]
    DegeneratePoints,

    #[error("selection row {row}: points {i} and {j} share the same x coordinate")]
    DegeneratePair { row: usize, i: usize, j: usize },

    #[error("invalid selection plan: {0}")]
    InvalidPlan(String),

    #[error("mixed linear and rotational actuation is not supported")]
    MixedActuation,

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("finite-difference step too large: {0}")]
    StepTooLarge(String),

    #[error("forward refinement failed: {0}")]
    NoForwardSolution(String),

    #[error("shape mismatch: {0}")]
    Shape(String),
}

impl Error {
    /// Short machine-readable reason code, used as the sweep status string.
    pub fn reason(&self) -> &'static str {
        match self {
            Error::Config(_) => "config",
            Error::Unreachable(_) => "unreachable",
            Error::NoConvergence { .. } => "no_convergence",
            Error::SingularLimb { .. } => "singular_limb",
            Error::SingularConfiguration { .. } => "singular",
            Error::BlockSingular(_) => "block_singular",
            Error::DegeneratePoints => "degenerate_points",
            Error::DegeneratePair { .. } => "degenerate_pair",
            Error::InvalidPlan(_) => "invalid_plan",
            Error::MixedActuation => "mixed_actuation",
            Error::Unsupported(_) => "unsupported",
            Error::StepTooLarge(_) => "step_too_large",
            Error::NoForwardSolution(_) => "no_forward_solution",
            Error::Shape(_) => "shape",
        }
    }

    /// True for errors that describe the pose rather than the inputs.
    pub fn is_infeasible_pose(&self) -> bool {
        matches!(
            self,
            Error::Unreachable(_)
                | Error::NoConvergence { .. }
                | Error::SingularLimb { .. }
                | Error::SingularConfiguration { .. }
                | Error::DegeneratePair { .. }
                | Error::DegeneratePoints
        )
    }
}
