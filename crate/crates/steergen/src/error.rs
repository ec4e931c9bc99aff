use std::path::PathBuf;

/// Crate-wide error type.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("empty corpus")]
    EmptyCorpus,

    #[error("invalid token id {id} (vocabulary size {vocab_size})")]
    InvalidTokenId { id: u32, vocab_size: usize },

    #[error("no training data")]
    NoTrainingData,

    #[error("empty sequence")]
    EmptySequence,

    #[error("unsupported version {found}")]
    UnsupportedVersion { found: u64 },

    #[error("length mismatch: expected {expected}, got {found}")]
    LengthMismatch { expected: usize, found: usize },

    #[error("empty support")]
    EmptySupport,

    #[error("non-finite expert logit at unmasked position {index}")]
    NonFiniteLogit { index: usize },

    #[error("ratio form requires positive probabilities")]
    RatioFormZeroEntry,

    #[error("vocabulary mismatch")]
    VocabularyMismatch,

    #[error("empty record list")]
    EmptyRecords,

    #[error("record {index}: expected {expected} continuations, got {found}")]
    InconsistentSampleCount {
        index: usize,
        expected: usize,
        found: usize,
    },

    #[error("record {index} has no scores; run evaluate first")]
    MissingScores { index: usize },

    #[error("invalid lexicon: {0}")]
    InvalidLexicon(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },

    #[error("sweep failed at alpha {alpha}: {source}")]
    SweepAlpha {
        alpha: f64,
        #[source]
        source: Box<Error>,
    },

    #[error("sweep failed at budget {budget}: {source}")]
    SweepBudget {
        budget: u64,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            context: context.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
