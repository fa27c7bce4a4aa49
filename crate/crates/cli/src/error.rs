use serde_json::json;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] latent_manifold::Error),
    #[error("{path}: {message}")]
    Input { path: String, message: String },
    #[error("invalid argument: {0}")]
    Argument(String),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type CliResult<T> = std::result::Result<T, CliError>;

impl CliError {
    pub fn input(path: impl std::fmt::Display, message: impl Into<String>) -> Self {
        CliError::Input {
            path: path.to_string(),
            message: message.into(),
        }
    }

    /// Stable identifier for scripts.
    pub fn kind(&self) -> &'static str {
        use latent_manifold::Error as E;
        match self {
            CliError::Core(e) => match e {
                E::DimensionMismatch { .. } | E::ChainMismatch { .. } => "dimension_mismatch",
                E::NonFinite(_) => "non_finite",
                E::RankDeficient { .. } | E::SingularMetric => "rank_deficient",
                E::OutsideDomain(_) => "outside_domain",
                E::BoundaryIndex { .. } => "boundary_index",
                E::DegenerateProjection { .. } => "degenerate_projection",
                E::EncoderRequired => "encoder_required",
                E::EncoderDivergence { .. } => "encoder_divergence",
                E::UnknownActivation(_) | E::MalformedModel(_) => "malformed_model",
                E::InvalidConfig(_) => "invalid_config",
                E::ZeroDistances => "zero_distances",
                E::Diverged { .. } => "diverged",
                E::PairFailed { .. } => "pair_failed",
                E::Io(_) => "io",
                E::Json(_) => "malformed_json",
            },
            CliError::Input { .. } | CliError::Csv(_) => "malformed_input",
            CliError::Argument(_) => "invalid_argument",
            CliError::Io(_) => "io",
            CliError::Json(_) => "malformed_json",
        }
    }

    pub fn to_json(&self) -> serde_json::Value {
        let mut value = json!({ "error": self.kind(), "message": self.to_string() });
        if let CliError::Core(latent_manifold::Error::PairFailed { i, j, .. }) = self {
            value["pair"] = json!([i, j]);
        }
        value
    }
}
