use crate::codec::CodecWeights;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("argument error: {0}")]
    Argument(String),

    #[error("unsupported scenario: {0}")]
    UnsupportedScenario(String),

    #[error("load error: {0}")]
    Load(String),

    /// Checksum or entropy-stage failure in the conventional baseline.
    /// Models a broken received image rather than garbage pixels.
    #[error("source decode failure: {0}")]
    DecodeFailure(String),

    #[error("training diverged at epoch {epoch}")]
    TrainingDiverged {
        epoch: usize,
        /// Last weights with a finite loss.
        checkpoint: Box<CodecWeights>,
    },

    #[error("policy error: {0}")]
    Policy(String),

    #[error("no recommendation derivable from the record table")]
    NoRecommendation,

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
