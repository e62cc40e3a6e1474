//! Human judgments of generated explanations: storage and aggregation only.
//!
//! Annotation files hold one [`AnnotationRecord`] per line (JSON).

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::EvalError;
use crate::data::CacheKey;
use crate::task::{Label, Scheme};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnnotationRecord {
    pub example_uid: String,
    pub explanation: CacheKey,
    #[serde(default)]
    pub logical_consistency: Option<bool>,
    #[serde(default)]
    pub correct_template: Option<bool>,
    #[serde(default)]
    pub validity_of_assumption: Option<bool>,
    pub annotator_id: String,
}

impl AnnotationRecord {
    pub fn validate(&self) -> Result<(), EvalError> {
        if self.logical_consistency.is_none()
            && self.correct_template.is_none()
            && self.validity_of_assumption.is_none()
        {
            return Err(EvalError::Annotation(format!(
                "annotation of `{}` by `{}` has no judgment",
                self.example_uid, self.annotator_id
            )));
        }
        if self.explanation.example_uid != self.example_uid {
            return Err(EvalError::Annotation(format!(
                "annotation of `{}` points at an explanation of `{}`",
                self.example_uid, self.explanation.example_uid
            )));
        }
        Ok(())
    }
}

pub fn parse_annotations(text: &str) -> Result<Vec<AnnotationRecord>, EvalError> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let rec: AnnotationRecord =
            serde_json::from_str(line).map_err(|e| EvalError::Annotation(format!("line {}: {e}", i + 1)))?;
        rec.validate()?;
        out.push(rec);
    }
    Ok(out)
}

pub fn load_annotations(path: impl AsRef<Path>) -> Result<Vec<AnnotationRecord>, EvalError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)
        .map_err(|e| EvalError::Annotation(format!("{}: {e}", path.display())))?;
    parse_annotations(&text)
}

/// One row of the judgment table: percentages of positive judgments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotationRow {
    pub scheme: Scheme,
    /// `Some(true)`: conditioned on the gold label; `Some(false)`: on another
    /// label; `None`: unconditioned.
    pub true_label: Option<bool>,
    pub annotations: usize,
    pub logical_consistency: Option<f64>,
    pub correct_template: Option<f64>,
    pub validity_of_assumption: Option<f64>,
}

impl AnnotationRow {
    pub fn title(&self) -> String {
        let cond = match self.true_label {
            Some(true) => " (e_y)",
            Some(false) => " (e_-y)",
            None => "",
        };
        format!("{}{cond}", self.scheme)
    }
}

/// Groups judgments by scheme and by whether the explanation was conditioned on
/// the gold label.
pub fn aggregate_annotations(
    records: &[AnnotationRecord],
    gold: &BTreeMap<String, Label>,
) -> Result<Vec<AnnotationRow>, EvalError> {
    #[derive(Default)]
    struct Tally {
        n: usize,
        fields: [(usize, usize); 3],
    }
    let mut groups: BTreeMap<(Scheme, Option<bool>), Tally> = BTreeMap::new();
    for r in records {
        r.validate()?;
        let g = gold
            .get(&r.example_uid)
            .ok_or_else(|| EvalError::MissingUids(vec![r.example_uid.clone()]))?;
        let key = (
            r.explanation.scheme,
            r.explanation.conditioning_label.map(|c| c == g.id),
        );
        let t = groups.entry(key).or_default();
        t.n += 1;
        for (slot, v) in t.fields.iter_mut().zip([
            r.logical_consistency,
            r.correct_template,
            r.validity_of_assumption,
        ]) {
            if let Some(v) = v {
                slot.0 += usize::from(v);
                slot.1 += 1;
            }
        }
    }
    let rate = |(yes, n): (usize, usize)| (n > 0).then(|| 100.0 * yes as f64 / n as f64);
    Ok(groups
        .into_iter()
        .map(|((scheme, true_label), t)| AnnotationRow {
            scheme,
            true_label,
            annotations: t.n,
            logical_consistency: rate(t.fields[0]),
            correct_template: rate(t.fields[1]),
            validity_of_assumption: rate(t.fields[2]),
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn key(uid: &str, cond: Option<usize>) -> CacheKey {
        CacheKey {
            example_uid: uid.into(),
            scheme: if cond.is_some() {
                Scheme::PredictThenExplain
            } else {
                Scheme::ExplainThenPredict
            },
            conditioning_label: cond,
            backend_id: "b".into(),
            seed: 0,
        }
    }

    fn ann(uid: &str, cond: Option<usize>, lc: Option<bool>, ct: Option<bool>) -> AnnotationRecord {
        AnnotationRecord {
            example_uid: uid.into(),
            explanation: key(uid, cond),
            logical_consistency: lc,
            correct_template: ct,
            validity_of_assumption: None,
            annotator_id: "a1".into(),
        }
    }

    #[test]
    fn rows_split_true_and_false_conditioning() {
        let gold: BTreeMap<String, Label> = [("x", 0), ("y", 1)]
            .iter()
            .map(|(u, id)| {
                (
                    u.to_string(),
                    Label {
                        id: *id,
                        name: format!("l{id}"),
                    },
                )
            })
            .collect();
        let recs = vec![
            ann("x", Some(0), Some(true), Some(true)),
            ann("y", Some(1), Some(false), Some(true)),
            ann("x", Some(1), Some(false), None),
            ann("y", None, None, Some(false)),
        ];
        let rows = aggregate_annotations(&recs, &gold).unwrap();
        assert_eq!(rows.len(), 3);
        let ey = rows.iter().find(|r| r.true_label == Some(true)).unwrap();
        assert_eq!(
            (ey.annotations, ey.logical_consistency, ey.correct_template),
            (2, Some(50.0), Some(100.0))
        );
        assert_eq!(ey.validity_of_assumption, None);
        let e_not = rows.iter().find(|r| r.true_label == Some(false)).unwrap();
        assert_eq!(e_not.title(), "predict_then_explain (e_-y)");
    }

    #[test]
    fn empty_judgment_rejected() {
        let line = serde_json::to_string(&ann("x", None, None, None)).unwrap();
        assert!(parse_annotations(&line).is_err());
        let ok = serde_json::to_string(&ann("x", None, Some(true), None)).unwrap();
        assert_eq!(parse_annotations(&ok).unwrap().len(), 1);
    }
}
