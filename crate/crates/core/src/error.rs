use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Every failure the pipeline can surface, grouped by the exit code the CLI
/// maps it to (see [`Error::exit_code`]).
#[derive(Debug, Error)]
pub enum Error {
    // -- validation (exit 2) --
    #[error("file not found: {}", .0.display())]
    FileNotFound(PathBuf),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("invalid keyframe policy: {0}")]
    InvalidPolicy(String),
    #[error("knowledge base parse error at line {line}: {message}")]
    KbParse { line: usize, message: String },
    #[error("knowledge base validation error at line {line}: {message}")]
    KbValidation { line: usize, message: String },
    #[error("prompt template `{template}`: {message}")]
    Prompt { template: String, message: String },
    #[error("config error: {0}")]
    Config(String),
    #[error("rating data error: {0}")]
    RatingData(String),
    #[error("missing intent group: no `{0}` intent records for this condition")]
    MissingIntentGroup(&'static str),
    #[error("value out of range: {0}")]
    OutOfRange(String),
    #[error("key mismatch: {0}")]
    KeyMismatch(String),
    #[error("audio overruns video by {overrun_s:.3} s")]
    Overrun { overrun_s: f64 },
    #[error("unknown run `{0}`")]
    UnknownRun(String),
    #[error("config drift: run was started with config {expected}, current config is {found}")]
    ConfigDrift { expected: String, found: String },
    #[error("input changed since run started: {0}")]
    InputChanged(String),

    // -- backend (exit 3) --
    #[error("{backend} backend timed out after {attempts} attempt(s)")]
    BackendTimeout { backend: String, attempts: u32 },
    #[error("{backend} backend rejected request with status {status}: {body}")]
    BackendRejected {
        backend: String,
        status: u16,
        body: String,
    },
    #[error("{backend} backend unreachable after {attempts} attempt(s): {message}")]
    BackendTransport {
        backend: String,
        attempts: u32,
        message: String,
    },
    #[error("could not parse backend response: {reason}")]
    ParseFailure { reason: String, raw: String },
    #[error("instruction invalid: {0}")]
    InstructionInvalid(String),
    #[error("audio invalid: {field}: {detail}")]
    AudioInvalid { field: &'static str, detail: String },

    // -- media tool (exit 4) --
    #[error("media decoder unavailable: {0}")]
    DecoderUnavailable(String),
    #[error("corrupt media: {0}")]
    CorruptMedia(String),
    #[error("decoder failed with status {status}: {stderr}")]
    DecoderFailure { status: String, stderr: String },
    #[error("muxer failed with status {status}: {stderr}")]
    MuxerFailure { status: String, stderr: String },

    // -- orchestration --
    #[error("stage `{stage}` failed: {source}")]
    Stage {
        stage: String,
        #[source]
        source: Box<Error>,
    },
    #[error("run interrupted after stage `{0}`")]
    Interrupted(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn audio(field: &'static str, detail: impl Into<String>) -> Self {
        Error::AudioInvalid {
            field,
            detail: detail.into(),
        }
    }

    pub(crate) fn parse_failure(reason: impl Into<String>, raw: impl Into<String>) -> Self {
        Error::ParseFailure {
            reason: reason.into(),
            raw: raw.into(),
        }
    }

    pub(crate) fn in_stage(self, stage: impl Into<String>) -> Self {
        Error::Stage {
            stage: stage.into(),
            source: Box::new(self),
        }
    }

    /// The innermost error, unwrapping stage annotations.
    pub fn root(&self) -> &Error {
        match self {
            Error::Stage { source, .. } => source.root(),
            other => other,
        }
    }

    /// CLI exit code: 2 validation, 3 backend, 4 media tool, 1 anything else.
    pub fn exit_code(&self) -> i32 {
        match self.root() {
            Error::FileNotFound(_)
            | Error::InvalidInput(_)
            | Error::InvalidPolicy(_)
            | Error::KbParse { .. }
            | Error::KbValidation { .. }
            | Error::Prompt { .. }
            | Error::Config(_)
            | Error::RatingData(_)
            | Error::MissingIntentGroup(_)
            | Error::OutOfRange(_)
            | Error::KeyMismatch(_)
            | Error::Overrun { .. }
            | Error::UnknownRun(_)
            | Error::ConfigDrift { .. }
            | Error::InputChanged(_) => 2,
            Error::BackendTimeout { .. }
            | Error::BackendRejected { .. }
            | Error::BackendTransport { .. }
            | Error::ParseFailure { .. }
            | Error::InstructionInvalid(_)
            | Error::AudioInvalid { .. } => 3,
            Error::DecoderUnavailable(_)
            | Error::CorruptMedia(_)
            | Error::DecoderFailure { .. }
            | Error::MuxerFailure { .. } => 4,
            Error::Stage { .. } | Error::Interrupted(_) | Error::Io(_) | Error::Json(_) => 1,
        }
    }
}
