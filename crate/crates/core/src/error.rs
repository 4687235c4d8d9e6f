use thiserror::Error;

/// Errors raised by the library.
///
/// Variants carry enough context to tell a mis-specified system apart from a
/// refuted hypothesis: the former are programming errors, the latter are
/// legitimate outcomes of a numerical check.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("measures live on different supports: {0}")]
    MismatchedSupport(String),

    #[error("measure has zero total mass")]
    EmptyMeasure,

    #[error("sample {index} lies outside the histogram box")]
    SampleOutOfBox { index: usize },

    #[error("linear program failed: {0}")]
    SolverFailure(String),

    #[error("trajectory left the invariant set at step {step} (excess {excess:.3e})")]
    LeftInvariantSet { step: usize, excess: f64 },

    #[error("flow blew up: |x| = {norm:.3e} exceeds {limit:.3e}")]
    Blowup { norm: f64, limit: f64 },

    #[error("flow is not dissipative: fitted contraction factor {beta:.6}")]
    NotDissipative { beta: f64 },

    #[error("iteration budget {budget} exhausted: {what}")]
    BudgetExceeded { budget: usize, what: String },

    #[error("transition density integrates to {mass:.3e}")]
    DegenerateDensity { mass: f64 },

    #[error("grid too coarse: quadrature error bound {bound:.4} exceeds {limit}")]
    ResolutionTooCoarse { bound: f64, limit: f64 },

    #[error("minorisation fails: lower density at zero is {value:.3e}")]
    MinorizationFails { value: f64 },

    #[error("past buffers are incompatible: {0}")]
    MismatchedBuffers(String),

    #[error("Newton iteration diverged at {skipped} of {total} output points")]
    NewtonDivergence { skipped: usize, total: usize },

    #[error("surjectivity lost: smallest singular value {sigma:.3e} below {threshold:.3e}")]
    SurjectivityLost { sigma: f64, threshold: f64 },

    #[error("local map is not injective near the base point: {0}")]
    NotLocallyInjective(String),

    #[error("cutoff radius too large: blended map not injective after {halvings} halvings")]
    EpsilonTooLarge { halvings: usize },

    #[error("fit needs at least {needed} points above the noise floor, found {found}")]
    TooFewPoints { needed: usize, found: usize },

    #[error("pilot decorrelation fit failed: {0}")]
    InsufficientDecorrelation(String),

    #[error("certificate contradicted: {0}")]
    CertificateContradicted(String),

    #[error("no minorizing component found at any tested box size")]
    EmptyMinorization,

    #[error("unknown catalog entry `{0}`")]
    UnknownCatalogEntry(String),

    #[error("malformed serialized data: {0}")]
    Format(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
