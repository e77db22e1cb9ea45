use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid model: {0}")]
    InvalidModel(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("band gap collapse at kx={kx:.6}, ky={ky:.6} (separation {sep:.3e})")]
    GapCollapse { kx: f64, ky: f64, sep: f64 },
    #[error("Bloch matrix singular at kx={kx:.6}, ky={ky:.6} (condition {cond:.3e})")]
    SingularBloch { kx: f64, ky: f64, cond: f64 },
    #[error("zero energy is not inside a spectral gap")]
    NoGap,
    #[error("monodromy eigenvalue nearest 1 is not simple (gap {0:.3e})")]
    DegenerateMonodromy(f64),
    #[error("Fourier truncation too small: {0:.3e} of the mass sits in the outer modes")]
    InsufficientResolution(f64),
    #[error("tracked residual {residual:.3e} at ky={ky:.6}")]
    ResidualBlowup { ky: f64, residual: f64 },
    #[error("step underflow at ky={0:.6}")]
    StepUnderflow(f64),
    #[error("no eigenvalues in window ({0}, {1})")]
    EmptyWindow(f64, f64),
    #[error("branch grouping failed: {0}")]
    BranchGrouping(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Stable machine-readable tag, used in CLI error reports.
    pub fn code(&self) -> &'static str {
        match self {
            Error::InvalidModel(_) => "invalid_model",
            Error::InvalidArgument(_) => "invalid_argument",
            Error::GapCollapse { .. } => "gap_collapse",
            Error::SingularBloch { .. } => "singular_bloch",
            Error::NoGap => "no_gap",
            Error::DegenerateMonodromy(_) => "degenerate_monodromy",
            Error::InsufficientResolution(_) => "insufficient_resolution",
            Error::ResidualBlowup { .. } => "residual_blowup",
            Error::StepUnderflow(_) => "step_underflow",
            Error::EmptyWindow(..) => "empty_window",
            Error::BranchGrouping(_) => "branch_grouping",
            Error::Io(_) => "io",
            Error::Json(_) => "json",
            Error::Csv(_) => "csv",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
