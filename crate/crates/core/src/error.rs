use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("L4 is not elliptic for mu = {mu} (mu_1 = {mu1})")]
    HyperbolicEquilibrium { mu: f64, mu1: f64 },
    #[error("non-finite value: {0}")]
    NonFiniteValue(String),
    #[error("Thiele branch point at z = {z}")]
    BranchPoint { z: f64 },
    #[error("integration step produced a non-finite stage")]
    StepFailure,
    #[error("energy drift {drift:e} exceeds tolerance {tolerance:e}")]
    DriftExceeded { drift: f64, tolerance: f64 },
    #[error("maximum number of steps ({0}) exceeded")]
    MaxStepsExceeded(usize),
    #[error("state is not on the section (g = {0:e})")]
    NotOnSection(f64),
    #[error("section point outside the Hill region (discriminant {0:e})")]
    ForbiddenRegion(f64),
    #[error("crossing too close to the heavy primary (a = {0:e})")]
    NearPrimary(f64),
    #[error("Newton iteration diverged: {0}")]
    NewtonDiverged(String),
    #[error("fixed point is hyperbolic (trace {trace})")]
    HyperbolicFixedPoint { trace: f64 },
    #[error("invariant curve does not encircle the center")]
    CurveNotEncircling,
    #[error("need at least {needed} iterates, got {got}")]
    InsufficientIterates { needed: usize, got: usize },
    #[error("defective or degenerate linear spectrum: {0}")]
    DefectiveSpectrum(String),
    #[error("resonance too close: |{k1}*omega_s - {k2}*omega_l| = {denominator:e}")]
    ResonanceTooClose { k1: i32, k2: i32, denominator: f64 },
    #[error("degenerate frequency: dH/dI_s = 0")]
    DegenerateFrequency,
    #[error("no positive root of H(I_s, 0) = {0}")]
    NoPositiveRoot(f64),
    #[error("no sign change: {0}")]
    NoSignChange(String),
    #[error("no twistless curve within the action cap")]
    NoTwistlessCurve,
    #[error("no solution: {0}")]
    NoSolution(String),
    #[error("i/o error: {0}")]
    Io(String),
}

impl Error {
    /// Errors caused by bad inputs rather than by a failed computation.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::InvalidParameter(_) | Error::HyperbolicEquilibrium { .. }
        )
    }

    /// Short machine-readable tag used in sweep and CSV status columns.
    pub fn code(&self) -> &'static str {
        match self {
            Error::InvalidParameter(_) => "InvalidParameter",
            Error::HyperbolicEquilibrium { .. } => "HyperbolicEquilibrium",
            Error::NonFiniteValue(_) => "NonFiniteValue",
            Error::BranchPoint { .. } => "BranchPoint",
            Error::StepFailure => "StepFailure",
            Error::DriftExceeded { .. } => "DriftExceeded",
            Error::MaxStepsExceeded(_) => "MaxStepsExceeded",
            Error::NotOnSection(_) => "NotOnSection",
            Error::ForbiddenRegion(_) => "ForbiddenRegion",
            Error::NearPrimary(_) => "NearPrimary",
            Error::NewtonDiverged(_) => "NewtonDiverged",
            Error::HyperbolicFixedPoint { .. } => "HyperbolicFixedPoint",
            Error::CurveNotEncircling => "CurveNotEncircling",
            Error::InsufficientIterates { .. } => "InsufficientIterates",
            Error::DefectiveSpectrum(_) => "DefectiveSpectrum",
            Error::ResonanceTooClose { .. } => "ResonanceTooClose",
            Error::DegenerateFrequency => "DegenerateFrequency",
            Error::NoPositiveRoot(_) => "NoPositiveRoot",
            Error::NoSignChange(_) => "NoSignChange",
            Error::NoTwistlessCurve => "NoTwistlessCurve",
            Error::NoSolution(_) => "NoSolution",
            Error::Io(_) => "Io",
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Io(e.to_string())
    }
}
