use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error at {path}:{line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },

    #[error("unknown feature_id `{feature_id}` at {path}:{line}")]
    UnknownFeature {
        feature_id: String,
        path: String,
        line: usize,
    },

    #[error("duplicate pair_id `{pair_id}` at {path}:{line}")]
    DuplicatePair {
        pair_id: String,
        path: String,
        line: usize,
    },

    #[error("invalid record: {0}")]
    InvalidRecord(String),

    #[error("feature `{feature_id}` has only {count} pairs (need at least {need})")]
    TooFewPairs {
        feature_id: String,
        count: usize,
        need: usize,
    },

    #[error("infeasible budget for feature `{feature_id}`: requested {requested} from a class of {available}")]
    InfeasibleBudget {
        feature_id: String,
        requested: usize,
        available: usize,
    },

    #[error("dangling reference: pair `{pair_id}` not found")]
    DanglingRef { pair_id: String },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimMismatch { expected: usize, got: usize },

    #[error("non-finite value encountered in {context}")]
    NonFinite { context: String },

    #[error("missing embedding for key `{0}`")]
    MissingEmbedding(String),

    #[error("zero vector for key `{0}`: cosine undefined")]
    ZeroVector(String),

    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error("training diverged at epoch {epoch}: non-finite loss")]
    Diverged { epoch: usize },

    #[error("single-class input: need at least one positive and one negative label")]
    SingleClass,

    #[error("unknown preset `{0}`")]
    UnknownPreset(String),

    #[error("response parse error: {message}\n--- raw response ---\n{raw}")]
    ResponseParse { message: String, raw: String },

    #[error("transport error after {attempts} attempts: {message}")]
    Transport { attempts: u32, message: String },

    #[error("insufficient overlap: expected disagreement is zero")]
    NoExpectedDisagreement,

    #[error("{0}")]
    Other(String),
}

impl Error {
    /// Stable machine-readable tag for structured stderr output.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Io { .. } => "io",
            Error::Parse { .. } => "parse",
            Error::UnknownFeature { .. } => "unknown_feature",
            Error::DuplicatePair { .. } => "duplicate_pair",
            Error::InvalidRecord(_) => "invalid_record",
            Error::TooFewPairs { .. } => "too_few_pairs",
            Error::InfeasibleBudget { .. } => "infeasible_budget",
            Error::DanglingRef { .. } => "dangling_ref",
            Error::DimMismatch { .. } => "dim_mismatch",
            Error::NonFinite { .. } => "non_finite",
            Error::MissingEmbedding(_) => "missing_embedding",
            Error::ZeroVector(_) => "zero_vector",
            Error::InvalidConfig(_) => "invalid_config",
            Error::Diverged { .. } => "diverged",
            Error::SingleClass => "single_class",
            Error::UnknownPreset(_) => "unknown_preset",
            Error::ResponseParse { .. } => "response_parse",
            Error::Transport { .. } => "transport",
            Error::NoExpectedDisagreement => "no_expected_disagreement",
            Error::Other(_) => "other",
        }
    }

    pub fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
