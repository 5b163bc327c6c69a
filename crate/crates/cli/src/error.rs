use hatrack::config::ConfigError;
use hatrack::eval::EvalError;
use hatrack::fld::FldError;
use hatrack::io::IoError;
use hatrack::linalg::LinalgError;
use hatrack::tracker::TrackerError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Io(#[from] IoError),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Tracker(#[from] TrackerError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("{0}")]
    Usage(String),
}

impl From<FldError> for CliError {
    fn from(e: FldError) -> Self {
        CliError::Tracker(e.into())
    }
}

fn is_solver(e: &LinalgError) -> bool {
    matches!(
        e,
        LinalgError::SolverDiverged { .. } | LinalgError::NotPositiveDefinite { .. }
    )
}

impl CliError {
    /// Stable machine-readable code.
    pub fn code(&self) -> &'static str {
        match self {
            CliError::Io(e) => e.code(),
            CliError::Config(_) => "CONFIG",
            CliError::Tracker(e) => match e {
                TrackerError::Config(_) => "CONFIG",
                TrackerError::FrameOrder { .. } => "FRAME_ORDER",
                TrackerError::DimensionMismatch { .. } => "DIMENSION",
                TrackerError::Alignment { .. } => "ALIGNMENT",
                TrackerError::InvalidBox { .. } => "DATA",
                TrackerError::Linalg(l) | TrackerError::Fld(FldError::Linalg(l)) if is_solver(l) => "SOLVER",
                TrackerError::Linalg(_) | TrackerError::Fld(_) => "DATA",
            },
            CliError::Eval(EvalError::DuplicateKey { .. }) => "DUPLICATE_KEY",
            CliError::Eval(EvalError::InvalidThreshold(_)) => "USAGE",
            CliError::Usage(_) => "USAGE",
        }
    }

    /// 2 for numerical solver failures, 1 for everything else.
    pub fn exit_code(&self) -> i32 {
        if self.code() == "SOLVER" {
            2
        } else {
            1
        }
    }

    /// Single line: `error code=<CODE> message=<text>`.
    pub fn report_line(&self) -> String {
        let message = self.to_string().replace(['\n', '\r'], " ");
        format!("error code={} message={}", self.code(), message)
    }
}
