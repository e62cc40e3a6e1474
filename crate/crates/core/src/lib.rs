//! Few-shot natural language inference with generated explanations.
//!
//! The crate covers the whole pipeline: task declarations ([`task`]), datasets and
//! explanation caches ([`data`]), explanation generation through pluggable
//! language-model backends ([`generation`]), explanation-aware cloze classification
//! ([`classifier`]), perturbation probes ([`probing`]), metrics and error analysis
//! ([`evaluation`]), and experiment orchestration ([`harness`]).
//!
//! Numeric code is generic over [`Scalar`] (`f32` or `f64`); the aliases below fix
//! the scalar for the common case.

pub mod classifier;
pub mod data;
pub mod evaluation;
pub mod generation;
pub mod harness;
pub mod probing;
pub mod scalar;
pub mod task;
pub mod text;

#[cfg(test)]
pub(crate) mod testutil;

pub use scalar::Scalar;

pub type ScoreMatrixF32 = classifier::ScoreMatrix<f32>;
pub type ScoreMatrixF64 = classifier::ScoreMatrix<f64>;
pub type PredictionRecordF32 = classifier::PredictionRecord<f32>;
pub type PredictionRecordF64 = classifier::PredictionRecord<f64>;
pub type LexicalScorerF32 = classifier::LexicalScorer<f32>;
pub type LexicalScorerF64 = classifier::LexicalScorer<f64>;
