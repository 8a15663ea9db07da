use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("accuracy error: {0}")]
    Accuracy(String),

    #[error("input is not conformal: relative residual {residual:.3e} exceeds {tolerance:.1e}")]
    NotConformal { residual: f64, tolerance: f64 },

    #[error("degenerate immersion: conformal factor {lambda:.3e} below floor at node {node}")]
    DegenerateImmersion { lambda: f64, node: usize },

    #[error("surface is not substantial in S^{declared}: {detail}")]
    NotSubstantial { declared: usize, detail: String },

    #[error("frame normalization failed at level {level}: relative deviation {deviation:.3e}")]
    FrameNormalization { level: usize, deviation: f64 },

    #[error("internal consistency check failed: {0}")]
    Consistency(String),

    #[error("unknown gallery surface `{0}`")]
    UnknownSurface(String),

    #[error("invalid surface parameters: {0}")]
    Parameter(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("resolution error: {0}")]
    Resolution(String),

    #[error("integration aborted: {0}")]
    Integration(String),

    #[error("malformed input: {0}")]
    Input(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Stable machine-readable name of the variant.
    pub fn kind(&self) -> &'static str {
        match self {
            Self::Config(_) => "config",
            Self::Accuracy(_) => "accuracy",
            Self::NotConformal { .. } => "not_conformal",
            Self::DegenerateImmersion { .. } => "degenerate_immersion",
            Self::NotSubstantial { .. } => "not_substantial",
            Self::FrameNormalization { .. } => "frame_normalization",
            Self::Consistency(_) => "consistency",
            Self::UnknownSurface(_) => "unknown_surface",
            Self::Parameter(_) => "parameter",
            Self::Precondition(_) => "precondition",
            Self::Domain(_) => "domain",
            Self::Resolution(_) => "resolution",
            Self::Integration(_) => "integration",
            Self::Input(_) => "input",
            Self::Io(_) => "io",
            Self::Json(_) => "json",
            Self::Csv(_) => "csv",
        }
    }
}
