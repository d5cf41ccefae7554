use std::fmt;

use recfollow::embed::EmbedError;
use recfollow::han::HanError;
use recfollow::ner::NerError;
use recfollow::pipeline::PipelineError;

pub const EXIT_FAILURE: u8 = 1;
pub const EXIT_CONFIG: u8 = 2;
pub const EXIT_DEGENERATE: u8 = 3;
pub const EXIT_MODEL_MISMATCH: u8 = 4;
pub const EXIT_JOIN: u8 = 5;
pub const EXIT_ALIGNMENT: u8 = 6;

/// An error together with the process exit code it maps to.
pub struct Failure {
    pub code: u8,
    pub error: anyhow::Error,
}

impl fmt::Debug for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "exit {}: {:#}", self.code, self.error)
    }
}

impl<E: Into<anyhow::Error>> From<E> for Failure {
    fn from(e: E) -> Self {
        Self { code: EXIT_FAILURE, error: e.into() }
    }
}

pub type CmdResult<T = ()> = Result<T, Failure>;

pub fn fail(code: u8, msg: impl fmt::Display) -> Failure {
    Failure { code, error: anyhow::anyhow!("{msg}") }
}

pub trait WithCode<T> {
    fn code(self, code: u8) -> CmdResult<T>;
}

impl<T, E: Into<anyhow::Error>> WithCode<T> for Result<T, E> {
    fn code(self, code: u8) -> CmdResult<T> {
        self.map_err(|e| Failure { code, error: e.into() })
    }
}

pub fn from_han(e: HanError) -> Failure {
    let code = match e {
        HanError::Degenerate(_) => EXIT_DEGENERATE,
        HanError::VocabMismatch { .. } | HanError::Checkpoint(_) => EXIT_MODEL_MISMATCH,
        HanError::Config(_) => EXIT_CONFIG,
        _ => EXIT_FAILURE,
    };
    Failure { code, error: e.into() }
}

pub fn from_ner(e: NerError) -> Failure {
    let code = match e {
        NerError::Degenerate(_) | NerError::Eval(_) => EXIT_DEGENERATE,
        NerError::VocabMismatch { .. } | NerError::Checkpoint(_) => EXIT_MODEL_MISMATCH,
        NerError::Config(_) => EXIT_CONFIG,
        _ => EXIT_FAILURE,
    };
    Failure { code, error: e.into() }
}

pub fn from_embed(e: EmbedError) -> Failure {
    let code = match e {
        EmbedError::Config(_) => EXIT_CONFIG,
        EmbedError::CorpusTooShort { .. } => EXIT_DEGENERATE,
        _ => EXIT_FAILURE,
    };
    Failure { code, error: e.into() }
}

pub fn from_pipeline(e: PipelineError) -> Failure {
    match e {
        PipelineError::Han(e) => from_han(e),
        PipelineError::Ner(e) => from_ner(e),
    }
}
