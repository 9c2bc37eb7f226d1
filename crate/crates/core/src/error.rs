use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("system is not observable (rank {rank} < {m})")]
    NotObservable { rank: usize, m: usize },

    #[error("unsupported shape: {0}")]
    UnsupportedShape(String),

    #[error("invalid eigenvalue set: {0}")]
    InvalidEigenvalues(String),

    #[error("eigenvector for eigenvalue {eigenvalue} could not be isolated (near-defective matrix)")]
    DegenerateEigenvector { eigenvalue: f64 },

    #[error("implicit step is singular: 1 - dt*lambda = 0 for lambda = {eigenvalue}, dt = {step}")]
    SingularStep { eigenvalue: f64, step: f64 },

    #[error("step {step} does not tile the interval [{t_start}, {t_end}]")]
    StepMismatch { t_start: f64, t_end: f64, step: f64 },

    #[error("coarse/fine contraction factor eta = {eta} is not < 1")]
    DivergentCoarse { eta: f64 },

    #[error("dT*K = {product} must be < 1 for the truncation bound")]
    StabilityViolation { product: f64 },

    #[error("time {t} is outside the reference horizon [0, {horizon}]")]
    OutOfHorizon { t: f64, horizon: f64 },

    #[error("stop rule did not fire within {n} iterations")]
    NoConvergence { n: usize },

    #[error("trace has {have} windows, efficiency needs {need}")]
    IncompleteTrace { have: usize, need: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("window {window}: {source}")]
    Window {
        window: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("{path}:{line}:{column}: {message}")]
    Parse {
        path: String,
        line: usize,
        column: usize,
        message: String,
    },

    #[error("{path}:{line}: unknown key `{key}`")]
    UnknownKey {
        path: String,
        line: usize,
        key: String,
    },

    #[error("{0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn in_window(self, window: usize) -> Error {
        match self {
            e @ Error::Window { .. } => e,
            e => Error::Window {
                window,
                source: Box::new(e),
            },
        }
    }

    /// True for errors caused by the user's input files rather than numerics.
    pub fn is_config_error(&self) -> bool {
        matches!(
            self,
            Error::Parse { .. } | Error::UnknownKey { .. } | Error::Io(_)
        )
    }
}
