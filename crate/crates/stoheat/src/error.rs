use thiserror::Error;

/// Errors surfaced by construction and validation entry points.
///
/// Numerical routines themselves are total once their inputs have been
/// validated, so errors concentrate at the boundaries: basis and scheme
/// construction, model validation, I/O, and rate fitting.
#[derive(Debug, Error)]
pub enum StoheatError {
    #[error("domain must satisfy a < b, got a = {a}, b = {b}")]
    BadDomain { a: f64, b: f64 },

    #[error("mode count must be positive")]
    ZeroModes,

    #[error("step count must be positive")]
    ZeroSteps,

    #[error("time step dt = {dt} exceeds 1; the scheme is analysed for dt <= 1")]
    StepTooLarge { dt: f64 },

    #[error("horizon must be positive and finite, got T = {t}")]
    BadHorizon { t: f64 },

    #[error("collocation count P = {p} must be at least 2m = {min} to keep quadratic products alias-safe")]
    CollocationTooSmall { p: usize, min: usize },

    #[error("field has {got} coefficients, basis expects {want}")]
    DimensionMismatch { got: usize, want: usize },

    #[error("noise path has shape {m} x {n}, expected {want_m} x {want_n}")]
    NoiseShapeMismatch {
        m: usize,
        n: usize,
        want_m: usize,
        want_n: usize,
    },

    #[error("coarsening factor {factor} does not divide step count {n}")]
    BadCoarsenFactor { factor: usize, n: usize },

    #[error("declared bound {name} = {declared} violated: observed {observed} (allowed slack 1%)")]
    ModelBoundViolated {
        name: &'static str,
        declared: f64,
        observed: f64,
    },

    #[error("model declares sigma_kind {declared:?} but its diffusion is {actual:?}")]
    SigmaKindMismatch {
        declared: &'static str,
        actual: &'static str,
    },

    #[error("ladder rung {index} (dt = {dt}) invalid: {reason}")]
    BadLadderRung {
        index: usize,
        dt: f64,
        reason: String,
    },

    #[error("log-log fit needs at least 3 resolved points, got {got}")]
    TooFewFitPoints { got: usize },

    #[error("log-log fit requires strictly positive errors and dts; offending index {index}")]
    NonpositiveFitPoint { index: usize },

    #[error("time {t} lies outside the trajectory span [0, {t_max}]")]
    TimeOutOfRange { t: f64, t_max: f64 },

    #[error("trajectory stores only endpoints; interpolation needs a dense run")]
    SparseTrajectory,

    #[error("i/o failure: {0}")]
    Io(#[from] std::io::Error),

    #[error("noise dump is malformed: {0}")]
    BadDump(String),
}
