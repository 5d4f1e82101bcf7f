use thiserror::Error;

use crate::characteristics::CharacteristicCurve;

/// Every failure the library can report.
#[derive(Debug, Clone, Error)]
pub enum Error {
    #[error("matrix B^({index}) is not skew-symmetric")]
    NotSkewSymmetric { index: usize },
    #[error("structure matrices are linearly dependent (smallest singular value {smallest:e})")]
    LinearlyDependentMatrices { smallest: f64 },
    #[error("n = {n} exceeds m(m-1)/2 for m = {m}")]
    TooManyVerticalDirections { m: usize, n: usize },
    #[error("epsilon = {0} is outside (0, 1]")]
    EpsilonOutOfRange(f64),
    #[error("unknown group name `{0}`")]
    UnknownName(String),
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("dilation factor {0} is not positive")]
    NonPositiveLambda(f64),
    #[error("no epsilon on the search grid satisfies the triangle inequality")]
    CalibrationFailed,
    #[error("point {point:?} is outside the domain of phi")]
    OutOfDomain { point: Vec<f64> },
    #[error("sample contains only coincident points")]
    DegenerateSample,
    #[error("finite-difference step {h:e} leaves the domain")]
    StepTooLarge { h: f64 },
    #[error("|X1 f| = {value:e} is too small to solve for the graph")]
    DegenerateHorizontalGradient { value: f64 },
    #[error("test function support is not covered by the quadrature grid")]
    SupportNotCovered,
    #[error("characteristic left the domain at t = {exit_time}")]
    LeftDomain {
        exit_time: f64,
        partial: Box<CharacteristicCurve>,
    },
    #[error("non-finite state at t = {t}")]
    NonFiniteState { t: f64 },
    #[error("kernel quadrature has {count} points per axis, need at least {min}")]
    QuadratureUnderflow { count: usize, min: usize },
    #[error("level {level} not bracketed: f = {f_lo} at t = {t_lo}, f = {f_hi} at t = {t_hi}")]
    BracketFailure {
        level: f64,
        t_lo: f64,
        t_hi: f64,
        f_lo: f64,
        f_hi: f64,
    },
    #[error("k = {0} is outside (0, 1]")]
    InvalidK(f64),
    #[error("point is outside the cone of opening {beta}")]
    PointOutsideCone { beta: f64 },
    #[error("horizontal part of the point is zero")]
    DegenerateZ,
    #[error("no admissible eta exists for this point")]
    NoAdmissibleEta,
    #[error("cannot parse expression: {0}")]
    Parse(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
}

impl Error {
    /// True for failures of a numerical procedure, as opposed to bad input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::CalibrationFailed
                | Error::DegenerateHorizontalGradient { .. }
                | Error::LeftDomain { .. }
                | Error::NonFiniteState { .. }
                | Error::QuadratureUnderflow { .. }
                | Error::BracketFailure { .. }
                | Error::NoAdmissibleEta
                | Error::DegenerateSample
                | Error::StepTooLarge { .. }
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
