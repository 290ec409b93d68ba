use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A distribution or model parameter is out of its valid range.
    #[error("invalid parameter `{field}`: {reason}")]
    Parameter { field: &'static str, reason: String },

    /// Input data violates a structural requirement.
    #[error("data error: {0}")]
    Data(String),

    /// Shapes or dimensions disagree.
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    /// Argument outside the mathematical domain of a function.
    #[error("domain error: {0}")]
    Domain(String),

    /// A parameter state cannot be evaluated (e.g. non-positive variance).
    #[error("invalid state: {0}")]
    State(String),

    #[error("singular matrix: {0}")]
    Singular(String),

    /// Samples are too degenerate for density estimation.
    #[error("degenerate sample: {0}")]
    DegenerateSample(String),

    /// Components were combined in an inconsistent way (e.g. a diagnostic
    /// evaluated with draws fitted on the data it is scoring).
    #[error("wiring error: {0}")]
    Wiring(String),

    #[error("configuration error: {0}")]
    Config(String),

    /// Failure inside a check, annotated with the model and stage.
    #[error("model `{model}`, stage `{stage}`: {source}")]
    Stage {
        model: String,
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn param(field: &'static str, reason: impl Into<String>) -> Self {
        Error::Parameter {
            field,
            reason: reason.into(),
        }
    }

    pub(crate) fn at_stage(self, model: &str, stage: &'static str) -> Self {
        Error::Stage {
            model: model.to_string(),
            stage,
            source: Box::new(self),
        }
    }

    /// True for errors caused by bad invocation or configuration rather than
    /// numerical or model failures.
    pub fn is_usage(&self) -> bool {
        matches!(self, Error::Config(_))
    }
}

/// Attach model/stage provenance to a result.
pub(crate) trait StageExt<T> {
    fn stage(self, model: &str, stage: &'static str) -> Result<T>;
}

impl<T> StageExt<T> for Result<T> {
    fn stage(self, model: &str, stage: &'static str) -> Result<T> {
        self.map_err(|e| e.at_stage(model, stage))
    }
}
