use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension n = {0} is not supported; the radial theory needs n >= 3")]
    Dimension(usize),

    #[error("invalid grid: {0}")]
    Grid(String),

    #[error("fields live on different grids")]
    GridMismatch,

    #[error("{field} is not positive at r = {radius:e} (value {value:e})")]
    NotPositive {
        field: &'static str,
        radius: f64,
        value: f64,
    },

    #[error("{field} is not finite at r = {radius:e}")]
    NotFinite { field: &'static str, radius: f64 },

    #[error("parameter window violated: {0}")]
    Window(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("construction failed: {0}")]
    Construction(String),

    #[error("state is not in the admissible class: {0}")]
    Admissibility(String),

    #[error("solver: {0}")]
    Solver(String),

    #[error("config: {0}")]
    Config(String),

    #[error("format: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Short stable identifier used in machine-readable error lines.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Dimension(_) => "dimension",
            Error::Grid(_) => "grid",
            Error::GridMismatch => "grid_mismatch",
            Error::NotPositive { .. } => "not_positive",
            Error::NotFinite { .. } => "not_finite",
            Error::Window(_) => "window",
            Error::InvalidArgument(_) => "invalid_argument",
            Error::Construction(_) => "construction",
            Error::Admissibility(_) => "admissibility",
            Error::Solver(_) => "solver",
            Error::Config(_) => "config",
            Error::Format(_) => "format",
            Error::Io(_) => "io",
            Error::Json(_) => "json",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
