use thiserror::Error;

/// Errors raised by the thin-strip solvers.
#[derive(Debug, Error)]
pub enum Error {
    /// A potential or mixture quantity was evaluated outside its domain.
    #[error("domain error in {what}: value {value}")]
    Domain { what: &'static str, value: f64 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// Initial layered geometry violates the interface-separation rules.
    #[error("invalid geometry: {0}")]
    Geometry(String),

    #[error("singular linear system: {0}")]
    SingularMatrix(String),

    #[error("Newton iteration diverged after {iterations} iterations (residual {residual:e})")]
    NewtonDiverged { iterations: usize, residual: f64 },

    #[error("CFL condition violated: courant number {courant} exceeds {limit}")]
    Cfl { courant: f64, limit: f64 },

    /// A layer width of the sharp-interface state reached zero or the wall.
    #[error("state collapse in cell {cell} at t = {time}: {detail}")]
    StateCollapse {
        cell: usize,
        time: f64,
        detail: String,
    },

    /// The characteristics oracle was asked for a time at or after the shock time.
    #[error("requested time {t} is not before the shock time {t_star}")]
    PastShock { t: f64, t_star: f64 },

    /// Simulation time passed the shock time while running in strict mode.
    #[error("model validity exceeded: t = {time} passed the shock time {t_star}")]
    ValidityExceeded { time: f64, t_star: f64 },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("comparison error: {0}")]
    Comparison(String),

    /// Wraps a per-cell failure with its x-index and simulation time.
    #[error("cell {cell} at t = {time}: {source}")]
    AtCell {
        cell: usize,
        time: f64,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn at_cell(self, cell: usize, time: f64) -> Self {
        Error::AtCell {
            cell,
            time,
            source: Box::new(self),
        }
    }

    /// The innermost error, looking through [`Error::AtCell`] wrappers.
    pub fn root(&self) -> &Error {
        match self {
            Error::AtCell { source, .. } => source.root(),
            other => other,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
