//! Trainable bag-of-n-grams mask scorer.
//!
//! `score(t) = bias[t] + (1/√n) Σ_f w[f][t]` over the `n` unigram and bigram
//! features of the lowercased words around the mask. Parameters are updated by
//! plain SGD.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::pattern::{LengthBudget, MaskedSequence};
use super::scorer::{single_word, token_length, MaskScorer, TrainableScorer};
use crate::scalar::Scalar;
use crate::text::{tokenize, TokenKind};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct LexicalScorer<T: Scalar = f64> {
    pub learning_rate: f64,
    pub max_length: usize,
    bias: BTreeMap<String, T>,
    weights: BTreeMap<String, BTreeMap<String, T>>,
    #[serde(skip)]
    grad_bias: BTreeMap<String, T>,
    #[serde(skip)]
    grad_weights: BTreeMap<String, BTreeMap<String, T>>,
}

impl<T: Scalar> Default for LexicalScorer<T> {
    fn default() -> Self {
        LexicalScorer::new(0.5, 512)
    }
}

fn features(seq: &MaskedSequence) -> Vec<String> {
    let mut out = Vec::new();
    for part in seq.context() {
        let words: Vec<String> = tokenize(part)
            .into_iter()
            .filter(|t| t.kind == TokenKind::Word)
            .map(|t| t.text.to_lowercase())
            .collect();
        out.extend(words.iter().map(|w| format!("u:{w}")));
        out.extend(words.windows(2).map(|p| format!("b:{} {}", p[0], p[1])));
    }
    out
}

impl<T: Scalar> LexicalScorer<T> {
    pub fn new(learning_rate: f64, max_length: usize) -> Self {
        LexicalScorer {
            learning_rate,
            max_length,
            bias: BTreeMap::new(),
            weights: BTreeMap::new(),
            grad_bias: BTreeMap::new(),
            grad_weights: BTreeMap::new(),
        }
    }

    pub fn num_parameters(&self) -> usize {
        self.bias.len() + self.weights.values().map(BTreeMap::len).sum::<usize>()
    }

    fn scale(n: usize) -> T {
        if n == 0 {
            T::zero()
        } else {
            T::one() / T::of(n as f64).sqrt()
        }
    }
}

impl<T: Scalar> LengthBudget for LexicalScorer<T> {
    fn max_sequence_length(&self) -> usize {
        self.max_length
    }

    fn sequence_length(&self, seq: &MaskedSequence) -> usize {
        token_length(seq)
    }
}

impl<T: Scalar> MaskScorer<T> for LexicalScorer<T> {
    fn scorer_id(&self) -> &str {
        "lexical"
    }

    fn is_single_token(&self, token: &str) -> bool {
        single_word(token)
    }

    fn score(&self, seq: &MaskedSequence, candidates: &[String]) -> Vec<T> {
        let feats = features(seq);
        let scale = Self::scale(feats.len());
        candidates
            .iter()
            .map(|c| {
                let mut sum = T::zero();
                for f in &feats {
                    if let Some(w) = self.weights.get(f).and_then(|m| m.get(c)) {
                        sum = sum + *w;
                    }
                }
                self.bias.get(c).copied().unwrap_or_else(T::zero) + scale * sum
            })
            .collect()
    }

    fn trainable(&self) -> bool {
        true
    }

    fn as_trainable(&mut self) -> Option<&mut dyn TrainableScorer<T>> {
        Some(self)
    }
}

impl<T: Scalar> TrainableScorer<T> for LexicalScorer<T> {
    fn zero_grad(&mut self) {
        self.grad_bias.clear();
        self.grad_weights.clear();
    }

    fn backward(&mut self, seq: &MaskedSequence, candidates: &[String], upstream: &[T]) {
        let feats = features(seq);
        let scale = Self::scale(feats.len());
        for (c, &g) in candidates.iter().zip(upstream) {
            let b = self.grad_bias.entry(c.clone()).or_insert_with(T::zero);
            *b = *b + g;
            for f in &feats {
                let w = self
                    .grad_weights
                    .entry(f.clone())
                    .or_default()
                    .entry(c.clone())
                    .or_insert_with(T::zero);
                *w = *w + g * scale;
            }
        }
    }

    fn apply_gradients(&mut self) {
        let lr = T::of(self.learning_rate);
        for (c, g) in std::mem::take(&mut self.grad_bias) {
            let b = self.bias.entry(c).or_insert_with(T::zero);
            *b = *b - lr * g;
        }
        for (f, grads) in std::mem::take(&mut self.grad_weights) {
            let row = self.weights.entry(f).or_default();
            for (c, g) in grads {
                let w = row.entry(c).or_insert_with(T::zero);
                *w = *w - lr * g;
            }
        }
    }
}
