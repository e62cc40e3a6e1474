//! Partitioning test examples by which of two systems got them right.

use std::collections::BTreeMap;

use num_rational::Ratio;
use serde::{Deserialize, Serialize};

use super::{bleu4_smoothed, label_consistency, not_know_correctness, not_know_label, EvalError};
use crate::classifier::PredictionRecord;
use crate::data::ExplanationMap;
use crate::scalar::Scalar;
use crate::task::{Example, TaskSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Bucket {
    BothCorrect,
    ExplanationOnly,
    BaselineOnly,
    BothWrong,
}

impl Bucket {
    pub const ALL: [Bucket; 4] = [
        Bucket::BothCorrect,
        Bucket::ExplanationOnly,
        Bucket::BaselineOnly,
        Bucket::BothWrong,
    ];

    pub fn of(explained_correct: bool, baseline_correct: bool) -> Bucket {
        match (explained_correct, baseline_correct) {
            (true, true) => Bucket::BothCorrect,
            (true, false) => Bucket::ExplanationOnly,
            (false, true) => Bucket::BaselineOnly,
            (false, false) => Bucket::BothWrong,
        }
    }

    pub fn title(self) -> &'static str {
        match self {
            Bucket::BothCorrect => "both correct",
            Bucket::ExplanationOnly => "explanations correct, baseline wrong",
            Bucket::BaselineOnly => "explanations wrong, baseline correct",
            Bucket::BothWrong => "both wrong",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BucketMetrics {
    pub bucket: Bucket,
    pub count: u64,
    pub total: u64,
    pub percent: f64,
    /// Mean BLEU of gold-label-conditioned explanations against the human one.
    pub bleu_true_label: Option<f64>,
    /// Mean over examples of the mean BLEU of the other labels' explanations.
    pub bleu_false_label: Option<f64>,
    pub not_know_correctness: Option<f64>,
    pub label_consistency: Option<f64>,
}

impl BucketMetrics {
    pub fn share(&self) -> Ratio<u64> {
        Ratio::new(self.count, self.total.max(1))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfusionReport {
    pub buckets: Vec<BucketMetrics>,
}

fn mean(xs: &[f64]) -> Option<f64> {
    (!xs.is_empty()).then(|| xs.iter().sum::<f64>() / xs.len() as f64)
}

fn pct(v: Option<f64>) -> String {
    v.map_or("-".to_string(), |v| format!("{:.1}", 100.0 * v))
}

impl ConfusionReport {
    pub fn bucket(&self, b: Bucket) -> &BucketMetrics {
        self.buckets
            .iter()
            .find(|m| m.bucket == b)
            .expect("all buckets present")
    }

    pub fn render_table(&self) -> String {
        let mut out = format!(
            "{:<38} {:>6} {:>15} {:>10} {:>12}\n",
            "bucket", "%", "BLEU true|false", "not know", "consistency"
        );
        for m in &self.buckets {
            out.push_str(&format!(
                "{:<38} {:>6.1} {:>15} {:>10} {:>12}\n",
                m.bucket.title(),
                m.percent,
                format!("{} | {}", pct(m.bleu_true_label), pct(m.bleu_false_label)),
                pct(m.not_know_correctness),
                pct(m.label_consistency),
            ));
        }
        out
    }
}

/// Splits examples into the four correct/incorrect combinations of an
/// explanation-based model and a baseline, with explanation metrics per bucket.
/// `explanations` holds the generated test explanations.
pub fn confusion_partition<T: Scalar>(
    explained: &[PredictionRecord<T>],
    baseline: &[PredictionRecord<T>],
    examples: &[Example],
    explanations: &ExplanationMap,
    task: &TaskSpec,
) -> Result<ConfusionReport, EvalError> {
    let a: BTreeMap<&str, &PredictionRecord<T>> =
        explained.iter().map(|p| (p.example_uid.as_str(), p)).collect();
    let b: BTreeMap<&str, &PredictionRecord<T>> =
        baseline.iter().map(|p| (p.example_uid.as_str(), p)).collect();
    let ex: BTreeMap<&str, &Example> = examples.iter().map(|e| (e.uid.as_str(), e)).collect();
    let mut missing: Vec<String> = ex
        .keys()
        .filter(|u| !a.contains_key(*u) || !b.contains_key(*u))
        .chain(a.keys().chain(b.keys()).filter(|u| !ex.contains_key(*u)))
        .map(|u| u.to_string())
        .collect();
    missing.sort();
    missing.dedup();
    if !missing.is_empty() {
        return Err(EvalError::MissingUids(missing));
    }
    if ex.is_empty() {
        return Err(EvalError::Empty);
    }
    let check_not_know = task.num_labels() == 2 && not_know_label(task).is_some();

    #[derive(Default)]
    struct Acc {
        count: u64,
        bleu_true: Vec<f64>,
        bleu_false: Vec<f64>,
        not_know: Vec<f64>,
        consistent: Vec<f64>,
    }
    let mut acc: BTreeMap<Bucket, Acc> = Bucket::ALL.iter().map(|&k| (k, Acc::default())).collect();
    for (uid, e) in &ex {
        let (pa, pb) = (a[uid], b[uid]);
        let slot = acc
            .get_mut(&Bucket::of(
                pa.predicted == e.gold_label,
                pb.predicted == e.gold_label,
            ))
            .expect("bucket");
        slot.count += 1;
        if let Ok(c) = label_consistency(pa) {
            slot.consistent.push(f64::from(u8::from(c)));
        }
        let expls = explanations.get(*uid).map(Vec::as_slice).unwrap_or(&[]);
        if let Some(gold_text) = &e.gold_explanation {
            let mut false_scores = Vec::new();
            for r in expls {
                match &r.conditioning_label {
                    Some(l) if *l == e.gold_label => slot.bleu_true.push(bleu4_smoothed(&r.text, gold_text)),
                    Some(_) => false_scores.push(bleu4_smoothed(&r.text, gold_text)),
                    None => {}
                }
            }
            slot.bleu_false.extend(mean(&false_scores));
        }
        if check_not_know && !expls.is_empty() {
            if let Ok(ok) = not_know_correctness(expls, &e.gold_label, task) {
                slot.not_know.push(f64::from(u8::from(ok)));
            }
        }
    }
    let total = ex.len() as u64;
    let buckets = acc
        .into_iter()
        .map(|(bucket, a)| BucketMetrics {
            bucket,
            count: a.count,
            total,
            percent: 100.0 * a.count as f64 / total as f64,
            bleu_true_label: mean(&a.bleu_true),
            bleu_false_label: mean(&a.bleu_false),
            not_know_correctness: mean(&a.not_know),
            label_consistency: mean(&a.consistent),
        })
        .collect();
    Ok(ConfusionReport { buckets })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evaluation::tests::pr;
    use crate::task::{ExplanationRecord, Scheme};
    use crate::testutil::{ehans, pool};

    fn fixture() -> (TaskSpec, Vec<Example>, ExplanationMap) {
        let task = ehans();
        let examples: Vec<Example> = pool(&task, 2);
        let map = examples
            .iter()
            .map(|e| {
                let recs = task
                    .labels
                    .iter()
                    .map(|l| ExplanationRecord {
                        example_uid: e.uid.clone(),
                        text: if *l == e.gold_label {
                            e.gold_explanation.clone().unwrap()
                        } else {
                            "unrelated words here".into()
                        },
                        conditioning_label: Some(l.clone()),
                        scheme: Scheme::PredictThenExplain,
                        backend_id: "b".into(),
                        seed: 0,
                    })
                    .collect();
                (e.uid.clone(), recs)
            })
            .collect();
        (task, examples, map)
    }

    #[test]
    fn one_example_per_bucket() {
        let (task, examples, map) = fixture();
        // (explained correct, baseline correct) per example.
        let plan = [(true, true), (true, false), (false, true), (false, false)];
        let mut a = Vec::new();
        let mut b = Vec::new();
        for (e, (ca, cb)) in examples.iter().zip(plan) {
            let g = e.gold_label.id;
            let pick = |c: bool| if c { g } else { 1 - g };
            a.push(pr(&e.uid, &task, pick(ca), Some(pick(ca))));
            b.push(pr(&e.uid, &task, pick(cb), None));
        }
        let r = confusion_partition(&a, &b, &examples, &map, &task).unwrap();
        let total: Ratio<u64> = r.buckets.iter().map(|m| m.share()).sum();
        assert_eq!(total, Ratio::from_integer(1));
        for m in &r.buckets {
            assert_eq!(m.percent, 25.0);
            assert_eq!(m.bleu_true_label, Some(1.0));
            assert!(m.bleu_false_label.unwrap() < 0.05);
            assert_eq!(m.label_consistency, Some(1.0));
        }
        assert!(r.render_table().contains("both wrong"));
    }

    #[test]
    fn identical_systems_fill_only_diagonal() {
        let (task, examples, map) = fixture();
        let preds: Vec<_> = examples
            .iter()
            .enumerate()
            .map(|(i, e)| {
                pr(
                    &e.uid,
                    &task,
                    if i % 2 == 0 {
                        e.gold_label.id
                    } else {
                        1 - e.gold_label.id
                    },
                    None,
                )
            })
            .collect();
        let r = confusion_partition(&preds, &preds, &examples, &map, &task).unwrap();
        assert_eq!(r.bucket(Bucket::ExplanationOnly).count, 0);
        assert_eq!(r.bucket(Bucket::BaselineOnly).count, 0);
        assert_eq!(
            r.bucket(Bucket::BothCorrect).count + r.bucket(Bucket::BothWrong).count,
            4
        );
    }

    #[test]
    fn all_gain_goes_to_explanation_bucket() {
        let (task, examples, map) = fixture();
        let a: Vec<_> = examples
            .iter()
            .map(|e| pr(&e.uid, &task, e.gold_label.id, None))
            .collect();
        let b: Vec<_> = examples
            .iter()
            .map(|e| pr(&e.uid, &task, 1 - e.gold_label.id, None))
            .collect();
        let r = confusion_partition(&a, &b, &examples, &map, &task).unwrap();
        assert_eq!(r.bucket(Bucket::ExplanationOnly).percent, 100.0);
        assert!(confusion_partition(&a, &b[1..], &examples, &map, &task).is_err());
    }
}
