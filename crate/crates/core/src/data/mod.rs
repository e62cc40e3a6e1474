//! Dataset ingestion, few-shot sampling, and explanation-cache persistence.

pub mod cache;
pub mod dataset;
pub mod select;
pub mod split;

use std::path::Path;

pub use cache::{CacheKey, CacheWriter, ExplanationCache};
pub use dataset::{load_dataset, read_dataset, save_dataset, write_dataset};
pub use select::{
    generated_explanations, gold_explanations, select_training_explanations, ExplanationMap,
    ExplanationVariant, GenerationSource,
};
pub use split::{sample_few_shot, FewShotSplit};

#[derive(Debug, thiserror::Error)]
pub enum DataError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {message}")]
    Line { line: usize, message: String },
    #[error("label `{label}` has {available} examples, {required} required")]
    InsufficientExamples {
        label: String,
        available: usize,
        required: usize,
    },
    #[error("cache already holds key {0}")]
    DuplicateKey(String),
    #[error("explanation cache is missing {} key(s): {}", .0.len(), .0.join(", "))]
    IncompleteCache(Vec<String>),
    #[error("no gold explanation for: {}", .0.join(", "))]
    MissingGold(Vec<String>),
    #[error("{0}")]
    Invalid(String),
}

impl DataError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> DataError {
        DataError::Io {
            path: path.display().to_string(),
            source,
        }
    }
}
