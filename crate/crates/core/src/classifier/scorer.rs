//! Mask scorers: the interface plus the rule-based and closure-backed scorers.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::pattern::{LengthBudget, MaskedSequence};
use super::ClassifierError;
use crate::scalar::Scalar;
use crate::task::{PatternVerbalizerPair, TaskSpec};
use crate::text::{contains_ci, tokenize, TokenKind};

/// Scores candidate tokens at the single mask of a sequence.
///
/// Scores are unnormalized and must be deterministic for a fixed scorer state.
pub trait MaskScorer<T: Scalar>: LengthBudget + Send + Sync {
    fn scorer_id(&self) -> &str;

    fn is_single_token(&self, token: &str) -> bool;

    /// One score per candidate, in order.
    fn score(&self, seq: &MaskedSequence, candidates: &[String]) -> Vec<T>;

    fn trainable(&self) -> bool {
        false
    }

    fn as_trainable(&mut self) -> Option<&mut dyn TrainableScorer<T>> {
        None
    }
}

/// Gradient interface for scorers that can be fine-tuned.
pub trait TrainableScorer<T: Scalar> {
    fn zero_grad(&mut self);

    /// Accumulates parameter gradients given `upstream[i]` = dLoss/dscore(candidate i).
    fn backward(&mut self, seq: &MaskedSequence, candidates: &[String], upstream: &[T]);

    /// One optimizer step with the accumulated gradients.
    fn apply_gradients(&mut self);
}

/// Sequence length in tokens of the shared tokenizer, the mask counting as one.
pub fn token_length(seq: &MaskedSequence) -> usize {
    tokenize(&seq.left).len() + 1 + tokenize(&seq.right).len()
}

/// True when `token` is a single word under the shared tokenizer.
pub fn single_word(token: &str) -> bool {
    let toks = tokenize(token);
    toks.len() == 1 && toks[0].kind == TokenKind::Word && toks[0].text == token
}

/// Fails naming the first verbalizer token the scorer cannot score as one token.
pub fn check_verbalizer<T: Scalar>(
    scorer: &dyn MaskScorer<T>,
    pvp: &PatternVerbalizerPair,
) -> Result<(), ClassifierError> {
    match pvp.verbalizer.iter().find(|t| !scorer.is_single_token(t)) {
        Some(token) => Err(ClassifierError::Verbalizer {
            pvp: pvp.id.clone(),
            token: token.clone(),
        }),
        None => Ok(()),
    }
}

/// Verbalizer scores for one sequence, in task label order.
pub fn score_labels<T: Scalar>(
    scorer: &dyn MaskScorer<T>,
    seq: &MaskedSequence,
    pvp: &PatternVerbalizerPair,
) -> Result<Vec<T>, ClassifierError> {
    check_verbalizer(scorer, pvp)?;
    let scores = scorer.score(seq, &pvp.verbalizer);
    if scores.len() != pvp.verbalizer.len() {
        return Err(ClassifierError::Shape(format!(
            "scorer `{}` returned {} scores for {} candidates",
            scorer.scorer_id(),
            scores.len(),
            pvp.verbalizer.len()
        )));
    }
    Ok(scores)
}

/// Adds a fixed bonus to each verbalizer token whose label's cue occurs in the
/// sequence (case-insensitive). Not trainable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CueDetectorScorer {
    pub bonus: f64,
    pub max_length: usize,
    /// Verbalizer token to the cue substrings of its label.
    pub token_cues: BTreeMap<String, Vec<String>>,
}

impl CueDetectorScorer {
    pub const DEFAULT_BONUS: f64 = 10.0;

    /// Maps every verbalizer token of every pvp (and every label name) to the cues
    /// of its label. A token shared by labels with different cues is an error.
    pub fn from_task(task: &TaskSpec, bonus: f64) -> Result<Self, ClassifierError> {
        let mut token_cues: BTreeMap<String, Vec<String>> = BTreeMap::new();
        let pairs = task
            .pvps
            .iter()
            .flat_map(|p| p.verbalizer.iter().enumerate().map(|(i, t)| (t.clone(), i)));
        let names = task.labels.iter().map(|l| (l.name.clone(), l.id));
        for (token, label) in pairs.chain(names) {
            let cues = task.cues(label).to_vec();
            if let Some(prev) = token_cues.insert(token.clone(), cues.clone()) {
                if prev != cues {
                    return Err(ClassifierError::Verbalizer {
                        pvp: "cue-detector".into(),
                        token,
                    });
                }
            }
        }
        Ok(CueDetectorScorer {
            bonus,
            max_length: 512,
            token_cues,
        })
    }
}

impl LengthBudget for CueDetectorScorer {
    fn max_sequence_length(&self) -> usize {
        self.max_length
    }

    fn sequence_length(&self, seq: &MaskedSequence) -> usize {
        token_length(seq)
    }
}

impl<T: Scalar> MaskScorer<T> for CueDetectorScorer {
    fn scorer_id(&self) -> &str {
        "cue-detector"
    }

    fn is_single_token(&self, token: &str) -> bool {
        single_word(token)
    }

    fn score(&self, seq: &MaskedSequence, candidates: &[String]) -> Vec<T> {
        let text = seq.to_string();
        candidates
            .iter()
            .map(|c| {
                let hit = self
                    .token_cues
                    .get(c)
                    .is_some_and(|cues| cues.iter().any(|cue| contains_ci(&text, cue)));
                if hit {
                    T::of(self.bonus)
                } else {
                    T::zero()
                }
            })
            .collect()
    }
}

type ScoreFn<T> = dyn Fn(&MaskedSequence, &[String]) -> Vec<T> + Send + Sync;

/// Scorer backed by a closure; for constructed-scorer tests and experiments.
pub struct FnScorer<T: Scalar = f64> {
    id: String,
    max_length: usize,
    f: Box<ScoreFn<T>>,
}

impl<T: Scalar> FnScorer<T> {
    pub fn new<F>(id: impl Into<String>, f: F) -> Self
    where
        F: Fn(&MaskedSequence, &[String]) -> Vec<T> + Send + Sync + 'static,
    {
        FnScorer {
            id: id.into(),
            max_length: usize::MAX,
            f: Box::new(f),
        }
    }

    pub fn with_max_length(mut self, max_length: usize) -> Self {
        self.max_length = max_length;
        self
    }
}

impl<T: Scalar> LengthBudget for FnScorer<T> {
    fn max_sequence_length(&self) -> usize {
        self.max_length
    }

    fn sequence_length(&self, seq: &MaskedSequence) -> usize {
        token_length(seq)
    }
}

impl<T: Scalar> MaskScorer<T> for FnScorer<T> {
    fn scorer_id(&self) -> &str {
        &self.id
    }

    fn is_single_token(&self, token: &str) -> bool {
        single_word(token)
    }

    fn score(&self, seq: &MaskedSequence, candidates: &[String]) -> Vec<T> {
        (self.f)(seq, candidates)
    }
}
