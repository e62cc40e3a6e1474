//! Prediction with and without explanations, and the two-model ensemble.

use serde::{Deserialize, Serialize};

use super::matrix::ScoreMatrix;
use super::pattern::{apply_explanation_pattern, apply_pattern, LengthBudget};
use super::scorer::{score_labels, MaskScorer};
use super::ClassifierError;
use crate::scalar::{argmax, log_softmax, Scalar};
use crate::task::{Example, ExplanationRecord, Label, PatternVerbalizerPair, TaskSpec};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct PredictionRecord<T: Scalar = f64> {
    pub example_uid: String,
    pub predicted: Label,
    /// Conditioning label of the explanation behind the maximum score.
    pub generator_label: Option<Label>,
    /// Row of `matrix` holding the maximum in the predicted column.
    pub max_row: usize,
    pub tie: bool,
    /// Pvp-averaged scores; a single unlabeled row for predictions without explanations.
    pub matrix: ScoreMatrix<T>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noexpl_scores: Option<Vec<T>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ensemble_scores: Option<Vec<T>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<T>,
}

fn label(task: &TaskSpec, id: usize) -> Result<Label, ClassifierError> {
    task.label(id)
        .cloned()
        .ok_or_else(|| ClassifierError::Shape(format!("label id {id} outside task `{}`", task.name)))
}

fn finish<T: Scalar>(
    task: &TaskSpec,
    uid: &str,
    matrix: ScoreMatrix<T>,
) -> Result<PredictionRecord<T>, ClassifierError> {
    if !matrix.is_finite() {
        return Err(ClassifierError::NonFinite {
            uid: uid.to_string(),
            context: format!("score matrix {:?}", matrix.values),
        });
    }
    if matrix.num_labels() != task.num_labels() {
        return Err(ClassifierError::Shape(format!(
            "{} columns for {} labels",
            matrix.num_labels(),
            task.num_labels()
        )));
    }
    let d = matrix.decide();
    let generator_label = matrix.row_labels[d.row].map(|l| label(task, l)).transpose()?;
    Ok(PredictionRecord {
        example_uid: uid.to_string(),
        predicted: label(task, d.label)?,
        generator_label,
        max_row: d.row,
        tie: d.tie,
        matrix,
        noexpl_scores: None,
        ensemble_scores: None,
        beta: None,
    })
}

/// Per-pvp score matrix of `example` under each explanation.
pub fn explanation_matrix<T: Scalar>(
    scorer: &dyn MaskScorer<T>,
    example: &Example,
    expls: &[ExplanationRecord],
    pvp: &PatternVerbalizerPair,
) -> Result<ScoreMatrix<T>, ClassifierError> {
    let budget: &dyn LengthBudget = scorer;
    let mut rows = Vec::with_capacity(expls.len());
    for e in expls {
        let seq = apply_explanation_pattern(pvp, example, &e.text, Some(budget))?;
        rows.push(score_labels(scorer, &seq, pvp)?);
    }
    ScoreMatrix::new(
        pvp.id.clone(),
        expls
            .iter()
            .map(|e| e.conditioning_label.as_ref().map(|l| l.id))
            .collect(),
        rows,
    )
}

/// Scores every (explanation, label) cell, averages over pvps, and predicts the
/// label of the largest cell.
pub fn predict_flame<T: Scalar>(
    scorer: &dyn MaskScorer<T>,
    task: &TaskSpec,
    example: &Example,
    expls: &[ExplanationRecord],
    pvps: &[PatternVerbalizerPair],
) -> Result<PredictionRecord<T>, ClassifierError> {
    if expls.is_empty() {
        return Err(ClassifierError::NoExplanations(example.uid.clone()));
    }
    if let Some(e) = expls.iter().find(|e| e.example_uid != example.uid) {
        return Err(ClassifierError::Shape(format!(
            "explanation for `{}` passed with example `{}`",
            e.example_uid, example.uid
        )));
    }
    let matrices = pvps
        .iter()
        .map(|p| explanation_matrix(scorer, example, expls, p))
        .collect::<Result<Vec<_>, _>>()?;
    finish(task, &example.uid, ScoreMatrix::average(&matrices)?)
}

/// Pvp-averaged verbalizer scores without explanations.
pub fn pet_scores<T: Scalar>(
    scorer: &dyn MaskScorer<T>,
    example: &Example,
    pvps: &[PatternVerbalizerPair],
) -> Result<ScoreMatrix<T>, ClassifierError> {
    let matrices = pvps
        .iter()
        .map(|p| {
            let seq = apply_pattern(p, example)?;
            ScoreMatrix::new(p.id.clone(), vec![None], vec![score_labels(scorer, &seq, p)?])
        })
        .collect::<Result<Vec<_>, _>>()?;
    ScoreMatrix::average(&matrices)
}

pub fn predict_pet<T: Scalar>(
    scorer: &dyn MaskScorer<T>,
    task: &TaskSpec,
    example: &Example,
    pvps: &[PatternVerbalizerPair],
) -> Result<PredictionRecord<T>, ClassifierError> {
    finish(task, &example.uid, pet_scores(scorer, example, pvps)?)
}

/// Mixes the explanation model's column maxima with the no-explanation scores:
/// `beta·log_softmax(colmax) + (1−beta)·log_softmax(noexpl)`.
///
/// At `beta = 1` and `beta = 0` the decision is taken from the corresponding
/// model alone.
pub fn ensemble_predict<T: Scalar>(
    task: &TaskSpec,
    with_expl: &PredictionRecord<T>,
    noexpl_scores: &[T],
    beta: T,
) -> Result<PredictionRecord<T>, ClassifierError> {
    if !(beta >= T::zero() && beta <= T::one()) {
        return Err(ClassifierError::Beta(beta.as_f64()));
    }
    if noexpl_scores.len() != task.num_labels() {
        return Err(ClassifierError::Shape(format!(
            "{} no-explanation scores for {} labels",
            noexpl_scores.len(),
            task.num_labels()
        )));
    }
    if noexpl_scores.iter().any(|v| !v.is_finite()) {
        return Err(ClassifierError::NonFinite {
            uid: with_expl.example_uid.clone(),
            context: "no-explanation scores".into(),
        });
    }
    let mixed = mix(&with_expl.matrix.column_max(), noexpl_scores, beta);
    let (predicted, tie) = if beta == T::one() {
        (with_expl.predicted.id, with_expl.tie)
    } else if beta == T::zero() {
        argmax(noexpl_scores).expect("non-empty scores")
    } else {
        argmax(&mixed).expect("non-empty scores")
    };
    Ok(PredictionRecord {
        predicted: label(task, predicted)?,
        tie,
        noexpl_scores: Some(noexpl_scores.to_vec()),
        ensemble_scores: Some(mixed),
        beta: Some(beta),
        ..with_expl.clone()
    })
}

pub(crate) fn mix<T: Scalar>(expl_colmax: &[T], noexpl: &[T], beta: T) -> Vec<T> {
    let a = log_softmax(expl_colmax);
    let b = log_softmax(noexpl);
    a.iter()
        .zip(&b)
        .map(|(&x, &y)| beta * x + (T::one() - beta) * y)
        .collect()
}
