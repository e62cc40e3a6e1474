//! Cross-entropy over explanation-aware patterns, with gradients for training.

use super::pattern::{apply_explanation_pattern, apply_pattern, LengthBudget, MaskedSequence};
use super::scorer::{score_labels, MaskScorer};
use super::ClassifierError;
use crate::scalar::{log_softmax, softmax, Scalar};
use crate::task::{Example, ExplanationRecord, Label, PatternVerbalizerPair};

/// `−log softmax(scores)[y]`.
pub fn cross_entropy<T: Scalar>(scores: &[T], y: usize) -> T {
    -log_softmax(scores)[y]
}

/// One scored sequence with dLoss/dscore for each verbalizer token.
#[derive(Debug, Clone)]
pub struct LossTerm<T: Scalar> {
    pub pvp: usize,
    pub seq: MaskedSequence,
    pub upstream: Vec<T>,
}

/// Loss and per-sequence score gradients. `expls = None` scores the patterns
/// without explanation.
pub fn loss_terms<T: Scalar>(
    scorer: &dyn MaskScorer<T>,
    example: &Example,
    y: &Label,
    expls: Option<&[ExplanationRecord]>,
    pvps: &[PatternVerbalizerPair],
) -> Result<(T, Vec<LossTerm<T>>), ClassifierError> {
    if pvps.is_empty() {
        return Err(ClassifierError::Shape("no pvps".into()));
    }
    let budget: &dyn LengthBudget = scorer;
    let weight = T::one() / T::of(pvps.len() as f64);
    let mut total = T::zero();
    let mut terms = Vec::new();
    for (p, pvp) in pvps.iter().enumerate() {
        let seqs = match expls {
            Some(expls) => expls
                .iter()
                .map(|e| apply_explanation_pattern(pvp, example, &e.text, Some(budget)))
                .collect::<Result<Vec<_>, _>>()?,
            None => vec![apply_pattern(pvp, example)?],
        };
        for seq in seqs {
            let scores = score_labels(scorer, &seq, pvp)?;
            if y.id >= scores.len() {
                return Err(ClassifierError::Shape(format!("label {} out of range", y.id)));
            }
            total = total + weight * cross_entropy(&scores, y.id);
            let upstream = softmax(&scores)
                .into_iter()
                .enumerate()
                .map(|(i, q)| {
                    let target = if i == y.id { T::one() } else { T::zero() };
                    (q - target) * weight
                })
                .collect();
            terms.push(LossTerm {
                pvp: p,
                seq,
                upstream,
            });
        }
    }
    Ok((total, terms))
}

/// Sum over explanations of the cross-entropy of the gold label, averaged over pvps.
pub fn flame_loss<T: Scalar>(
    scorer: &dyn MaskScorer<T>,
    example: &Example,
    y: &Label,
    expls: &[ExplanationRecord],
    pvps: &[PatternVerbalizerPair],
) -> Result<T, ClassifierError> {
    if expls.is_empty() {
        return Err(ClassifierError::NoExplanations(example.uid.clone()));
    }
    loss_terms(scorer, example, y, Some(expls), pvps).map(|(l, _)| l)
}

/// Pvp-averaged cross-entropy of patterns without explanation.
pub fn pet_loss<T: Scalar>(
    scorer: &dyn MaskScorer<T>,
    example: &Example,
    y: &Label,
    pvps: &[PatternVerbalizerPair],
) -> Result<T, ClassifierError> {
    loss_terms(scorer, example, y, None, pvps).map(|(l, _)| l)
}
