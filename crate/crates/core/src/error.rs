use thiserror::Error;

#[derive(Debug, Error)]
pub enum MudpError {
    #[error("grid size must be even and at least 8, got {0}")]
    InvalidGrid(usize),

    #[error("derivative order must be 1, 2 or 3, got {0}")]
    InvalidOrder(u32),

    #[error("field has {got} samples but the grid has {expected} points")]
    LengthMismatch { expected: usize, got: usize },

    #[error("field contains a non-finite sample at index {index}")]
    NonFinite { index: usize },

    #[error("Sobolev order must be finite and non-negative, got {0}")]
    InvalidSobolevOrder(f64),

    #[error("particle count must be at least 16, got {0}")]
    TooFewParticles(usize),

    #[error("time step produced a non-finite state at t = {t}")]
    Overflow { t: f64 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("config error at `{path}`{}: {message}", line.map(|l| format!(" (line {l})")).unwrap_or_default())]
    Config {
        path: String,
        line: Option<usize>,
        message: String,
    },

    #[error("invariant violated: {0}")]
    Invariant(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, MudpError>;
