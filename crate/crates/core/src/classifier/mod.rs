//! Cloze-style classification with and without explanations.
//!
//! A pattern turns an example (and optionally an explanation) into a sequence
//! with one mask; a [`MaskScorer`] scores the verbalizer token of each label at
//! the mask. With explanations, every explanation gives one row of a
//! [`ScoreMatrix`] and the prediction is the column of the largest cell.

pub mod lexical;
pub mod loss;
pub mod matrix;
pub mod pattern;
pub mod predict;
pub mod scorer;
pub mod train;

use std::path::Path;

use serde::{Deserialize, Serialize};

pub use lexical::LexicalScorer;
pub use loss::{cross_entropy, flame_loss, pet_loss};
pub use matrix::{Decision, ScoreMatrix};
pub use pattern::{apply_explanation_pattern, apply_pattern, plain_pvp, MaskedSequence, MASK};
pub use predict::{ensemble_predict, predict_flame, predict_pet, PredictionRecord};
pub use scorer::{score_labels, CueDetectorScorer, FnScorer, MaskScorer, TrainableScorer};
pub use train::{fit_beta, train_classifier, DevUsage, TrainConfig, TrainReport};

use crate::scalar::Scalar;

#[derive(Debug, thiserror::Error)]
pub enum ClassifierError {
    #[error("pattern error: {0}")]
    Pattern(String),
    #[error("verbalizer token `{token}` of `{pvp}` is not a single token")]
    Verbalizer { pvp: String, token: String },
    #[error("non-finite scores for `{uid}`: {context}")]
    NonFinite { uid: String, context: String },
    #[error("non-finite loss {loss} at step {step} on `{uid}`")]
    NonFiniteLoss { step: usize, uid: String, loss: f64 },
    #[error("no explanations for `{0}`")]
    NoExplanations(String),
    #[error("beta {0} outside [0, 1]")]
    Beta(f64),
    #[error("scorer `{0}` is not trainable")]
    NotTrainable(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("model state {path}: {message}")]
    Model { path: String, message: String },
}

/// Persistable scorer state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", bound = "T: Scalar")]
pub enum ScorerState<T: Scalar = f64> {
    CueDetector(CueDetectorScorer),
    Lexical(LexicalScorer<T>),
}

impl<T: Scalar> ScorerState<T> {
    pub fn scorer(&self) -> &dyn MaskScorer<T> {
        match self {
            ScorerState::CueDetector(s) => s,
            ScorerState::Lexical(s) => s,
        }
    }

    pub fn scorer_mut(&mut self) -> &mut dyn MaskScorer<T> {
        match self {
            ScorerState::CueDetector(s) => s,
            ScorerState::Lexical(s) => s,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scorer state serializes")
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), ClassifierError> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()).map_err(|e| ClassifierError::Model {
            path: path.display().to_string(),
            message: e.to_string(),
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ClassifierError> {
        let path = path.as_ref();
        let err = |message: String| ClassifierError::Model {
            path: path.display().to_string(),
            message,
        };
        let text = std::fs::read_to_string(path).map_err(|e| err(e.to_string()))?;
        serde_json::from_str(&text).map_err(|e| err(e.to_string()))
    }
}
