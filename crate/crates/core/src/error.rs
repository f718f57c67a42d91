use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParams(String),

    #[error("steady-state system is singular (smallest/largest singular value {ratio:.3e})")]
    SingularSystem { ratio: f64 },

    #[error("propagation diverged: supervector norm grew by {growth:.3e} at step {step}")]
    PropagationDiverged { step: usize, growth: f64 },

    #[error("drift matrix is not Hurwitz (spectral abscissa {abscissa:.3e})")]
    NotHurwitz { abscissa: f64 },

    #[error("singular value decomposition did not converge")]
    SvdFailed,

    #[error("insufficient samples: {got} < {required}")]
    InsufficientSamples { got: usize, required: usize },

    #[error("correlation tail not decayed: |C(tau_max)|/|C(0)| = {ratio:.3e}")]
    TailNotDecayed { ratio: f64 },

    #[error("fit did not converge after {iterations} iterations (residual {residual:.3e})")]
    FitNotConverged { iterations: usize, residual: f64 },

    #[error("Courant number {courant} exceeds 1")]
    CourantViolation { courant: f64 },

    #[error("negative excitation power {0}")]
    NegativePower(f64),

    #[error("config error at `{path}`: {message}")]
    Config { path: String, message: String },

    #[error("sweep point {index} ({axis} = {value}): {source}")]
    SweepPoint {
        index: usize,
        axis: String,
        value: f64,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn config(path: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            path: path.into(),
            message: message.into(),
        }
    }

    /// Process exit code used by the CLI: 2 for configuration problems,
    /// 3 for numerical failures, 1 for I/O.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config { .. } | Error::InvalidParams(_) | Error::NegativePower(_) => 2,
            Error::CourantViolation { .. } => 2,
            Error::Io(_) => 1,
            Error::SweepPoint { source, .. } => source.exit_code(),
            _ => 3,
        }
    }
}
