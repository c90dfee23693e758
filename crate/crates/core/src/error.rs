use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("point {x} lies within 1e-14 of a partition boundary")]
    BoundaryPoint { x: f64 },
    #[error("point {x} lies outside the phase space")]
    OutsideSpace { x: f64 },
    #[error("tail bound {tail:e} of the truncated branch family exceeds the budget {budget:e}")]
    TruncationInsufficient { tail: f64, budget: f64 },
    #[error("cylinder image is degenerate")]
    EmptyImage,
    #[error("contraction estimate {lambda} is not below 1")]
    NotExpanding { lambda: f64 },
    #[error("distortion ratio does not stabilize under refinement ({coarse} -> {fine})")]
    UnboundedDistortion { coarse: f64, fine: f64 },
    #[error("complexity estimate {sigma} is not below lambda^-n0 - 1 = {limit}")]
    ComplexityTooLarge { sigma: f64, limit: f64 },
    #[error("need at least {needed} trials, got {got}")]
    InsufficientTrials { needed: usize, got: usize },
    #[error("protected set has diameter {diam} > eta * eps0 = {limit}")]
    VStarTooLarge { diam: f64, limit: f64 },
    #[error("interval growth did not cover a partition element within {cap} steps")]
    SearchDiverged { cap: usize },
    #[error("no cell with a full-image return was found within depth {depth}")]
    NoZFound { depth: usize },
    #[error("no eps0 <= {bound} satisfies sigma < exp(-a0 eps0^alpha) (lambda^-n0 - 1)")]
    InfeasibleEps0 { bound: f64 },
    #[error("B0 = {b0} does not exceed zeta2 = {zeta2}")]
    NeverRecovers { b0: f64, zeta2: f64 },
    #[error("pair weight {weight:e} fell below the grid floor")]
    GridUnderflow { weight: f64 },
    #[error("growth bound violated at m = {m}, eps = {eps:e}: {lhs:e} > {rhs:e}")]
    GrowthViolated { m: usize, eps: f64, lhs: f64, rhs: f64 },
    #[error("comparability ratio {ratio} exceeds the factor {factor}")]
    ComparabilityViolated { ratio: f64, factor: f64 },
    #[error("density infimum {inf} is below 2c = {two_c}")]
    DensityTooSmall { inf: f64, two_c: f64 },
    #[error("overlap measure {measure:e} is below Delta = {delta:e}")]
    OverlapTooSmall { measure: f64, delta: f64 },
    #[error("regularity {h} exceeds {bound} after recovery")]
    RegularityNotRecovered { h: f64, bound: f64 },
    #[error("boundary constant {b} exceeds B0 = {b0} after recovery")]
    PropernessNotRecovered { b: f64, b0: f64 },
    #[error("no convergence after {iterations} iterations (residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },
    #[error("stopped fraction below t/2 for 5 consecutive blocks (block {block})")]
    StallDetected { block: usize },
    #[error("no return-time sequence with gcd 1 within depth {depth}")]
    GcdSearchFailed { depth: usize },
    #[error("only {got} realized return-time levels, need {needed}")]
    InsufficientLevels { got: usize, needed: usize },
    #[error("schema error at {pointer}: {message}")]
    SchemaError { pointer: String, message: String },
    #[error("expression error in `{formula}`: {message}")]
    ExpressionError { formula: String, message: String },
    #[error("invalid input: {0}")]
    Invalid(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn schema(pointer: impl Into<String>, message: impl Into<String>) -> Self {
        Error::SchemaError { pointer: pointer.into(), message: message.into() }
    }

    pub fn expression(formula: impl Into<String>, message: impl Into<String>) -> Self {
        Error::ExpressionError { formula: formula.into(), message: message.into() }
    }

    /// Input errors map to exit code 2, everything else to 1.
    pub fn is_input_error(&self) -> bool {
        matches!(
            self,
            Error::SchemaError { .. }
                | Error::ExpressionError { .. }
                | Error::Invalid(_)
                | Error::BoundaryPoint { .. }
                | Error::OutsideSpace { .. }
                | Error::VStarTooLarge { .. }
        )
    }
}
