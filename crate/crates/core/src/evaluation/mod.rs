//! Accuracy, explanation similarity, cue metrics and error analysis.

pub mod annotation;
pub mod bleu;
pub mod confusion;

use std::collections::BTreeMap;

use num_rational::Ratio;
use serde::{Deserialize, Serialize};

pub use annotation::{aggregate_annotations, load_annotations, AnnotationRecord, AnnotationRow};
pub use bleu::bleu4_smoothed;
pub use confusion::{confusion_partition, Bucket, BucketMetrics, ConfusionReport};

use crate::classifier::PredictionRecord;
use crate::probing::ProbeReport;
use crate::scalar::Scalar;
use crate::task::{Example, ExplanationRecord, Label, TaskSpec};
use crate::text::contains_ci;

/// Cue marking neutral explanations in templated datasets.
pub const NOT_KNOW: &str = "not know";

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error("unaligned inputs; missing uids: {}", .0.join(", "))]
    MissingUids(Vec<String>),
    #[error("no predictions")]
    Empty,
    #[error("prediction for `{0}` has no generator label")]
    NoGeneratorLabel(String),
    #[error("no explanation conditioned on the gold label for `{0}`")]
    MissingGoldConditioned(String),
    #[error("task `{0}` has no label with the \"not know\" cue")]
    NoNotKnowLabel(String),
    #[error("annotation error: {0}")]
    Annotation(String),
}

/// Gold labels keyed by uid.
pub fn gold_map(examples: &[Example]) -> BTreeMap<String, Label> {
    examples
        .iter()
        .map(|e| (e.uid.clone(), e.gold_label.clone()))
        .collect()
}

/// Exact fraction of correct predictions.
pub fn accuracy_ratio<T: Scalar>(
    predictions: &[PredictionRecord<T>],
    gold: &BTreeMap<String, Label>,
) -> Result<Ratio<u64>, EvalError> {
    if predictions.is_empty() {
        return Err(EvalError::Empty);
    }
    let missing: Vec<String> = predictions
        .iter()
        .filter(|p| !gold.contains_key(&p.example_uid))
        .map(|p| p.example_uid.clone())
        .collect();
    if !missing.is_empty() {
        return Err(EvalError::MissingUids(missing));
    }
    let correct = predictions
        .iter()
        .filter(|p| gold[&p.example_uid] == p.predicted)
        .count();
    Ok(Ratio::new(correct as u64, predictions.len() as u64))
}

pub fn accuracy<T: Scalar>(
    predictions: &[PredictionRecord<T>],
    gold: &BTreeMap<String, Label>,
) -> Result<f64, EvalError> {
    accuracy_ratio(predictions, gold).map(ratio_f64)
}

pub fn error_rate<T: Scalar>(
    predictions: &[PredictionRecord<T>],
    gold: &BTreeMap<String, Label>,
) -> Result<Ratio<u64>, EvalError> {
    accuracy_ratio(predictions, gold).map(|a| Ratio::from_integer(1) - a)
}

pub(crate) fn ratio_f64(r: Ratio<u64>) -> f64 {
    *r.numer() as f64 / *r.denom() as f64
}

/// Whether `expl` carries a cue of `target` and no cue belonging only to other
/// labels. `None` when `target` has no cues.
pub fn template_correctness(expl: &ExplanationRecord, target: &Label, task: &TaskSpec) -> Option<bool> {
    let own = task.cues(target.id);
    if own.is_empty() {
        return None;
    }
    let hit = own.iter().any(|c| contains_ci(&expl.text, c));
    let foreign = task
        .labels
        .iter()
        .filter(|l| l.id != target.id)
        .flat_map(|l| task.cues(l.id))
        .filter(|c| !own.contains(c))
        .any(|c| contains_ci(&expl.text, c));
    Some(hit && !foreign)
}

/// The label whose cue list contains "not know".
pub fn not_know_label(task: &TaskSpec) -> Option<&Label> {
    task.labels
        .iter()
        .find(|l| task.cues(l.id).iter().any(|c| c.eq_ignore_ascii_case(NOT_KNOW)))
}

/// "not know" appears in the gold-conditioned explanation exactly when the gold
/// label is the one cued by it.
pub fn not_know_correctness(
    expls: &[ExplanationRecord],
    gold: &Label,
    task: &TaskSpec,
) -> Result<bool, EvalError> {
    let neutral = not_know_label(task).ok_or_else(|| EvalError::NoNotKnowLabel(task.name.clone()))?;
    let rec = expls
        .iter()
        .find(|e| e.conditioning_label.as_ref() == Some(gold))
        .ok_or_else(|| {
            EvalError::MissingGoldConditioned(
                expls.first().map(|e| e.example_uid.clone()).unwrap_or_default(),
            )
        })?;
    let present = contains_ci(&rec.text, NOT_KNOW);
    Ok(present == (gold.id == neutral.id))
}

/// Predicted label equals the conditioning label of the winning explanation.
pub fn label_consistency<T: Scalar>(rec: &PredictionRecord<T>) -> Result<bool, EvalError> {
    rec.generator_label
        .as_ref()
        .map(|g| *g == rec.predicted)
        .ok_or_else(|| EvalError::NoGeneratorLabel(rec.example_uid.clone()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub examples: usize,
    pub accuracy: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub baseline_accuracy: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label_consistency: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub confusion: Option<ConfusionReport>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub probes: Vec<ProbeReport>,
}

impl EvaluationReport {
    pub fn new<T: Scalar>(
        predictions: &[PredictionRecord<T>],
        gold: &BTreeMap<String, Label>,
    ) -> Result<Self, EvalError> {
        let with_gen: Vec<bool> = predictions
            .iter()
            .filter_map(|p| label_consistency(p).ok())
            .collect();
        Ok(EvaluationReport {
            examples: predictions.len(),
            accuracy: accuracy(predictions, gold)?,
            baseline_accuracy: None,
            label_consistency: (!with_gen.is_empty())
                .then(|| with_gen.iter().filter(|&&b| b).count() as f64 / with_gen.len() as f64),
            confusion: None,
            probes: Vec::new(),
        })
    }

    pub fn render_text(&self) -> String {
        let mut out = format!("examples: {}\naccuracy: {:.4}\n", self.examples, self.accuracy);
        if let Some(b) = self.baseline_accuracy {
            out.push_str(&format!("baseline accuracy: {b:.4}\n"));
        }
        if let Some(c) = self.label_consistency {
            out.push_str(&format!("label consistency: {c:.4}\n"));
        }
        if let Some(c) = &self.confusion {
            out.push('\n');
            out.push_str(&c.render_table());
        }
        for p in &self.probes {
            out.push('\n');
            out.push_str(&p.render_table());
        }
        out
    }
}
