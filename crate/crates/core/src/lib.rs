//! Extraction of follow-up recommendations from radiology reports and
//! longitudinal adherence analytics over patient timelines.
//!
//! The pipeline runs in stages:
//!
//! 1. [`corpus`] loads reports (JSONL), reads and writes BRAT standoff
//!    annotations and generates deterministic synthetic corpora.
//! 2. [`text`] segments reports into sentences and tokens with character
//!    offsets preserved.
//! 3. [`embed`] pretrains skip-gram word vectors.
//! 4. [`han`] classifies sentences as recommendations with a hierarchical
//!    attention network built on the [`nn`] kernel.
//! 5. [`ner`] tags reason/test/timeframe spans inside recommendation
//!    sentences with a character-enhanced BiLSTM tagger.
//! 6. [`temporal`] normalizes timeframe phrases to ISO-8601 durations.
//! 7. [`adherence`] builds patient timelines and counts follow-up outcomes.
//! 8. [`eval`] holds the metrics used throughout.
//!
//! Neural code is generic over [`Scalar`]; the aliases below pin the
//! common instantiations.

pub mod adherence;
pub mod corpus;
pub mod embed;
pub mod eval;
pub mod han;
pub mod ner;
pub mod nn;
pub mod pipeline;
pub mod temporal;
pub mod text;

mod scalar;

pub use scalar::{lit, Scalar};

/// Word embeddings in double precision.
pub type Embeddings = embed::EmbeddingMatrix<f64>;
/// Word embeddings in single precision.
pub type Embeddings32 = embed::EmbeddingMatrix<f32>;

/// Sentence classifier in double precision (training and gradient checks).
pub type HanModel = han::HanModel<f64>;
/// Sentence classifier in single precision.
pub type HanModel32 = han::HanModel<f32>;

/// Entity tagger in double precision.
pub type NerModel = ner::NerModel<f64>;
/// Entity tagger in single precision.
pub type NerModel32 = ner::NerModel<f32>;

/// Dense tensor in double precision.
pub type Tensor = nn::Tensor<f64>;
