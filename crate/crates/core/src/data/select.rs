//! Choosing which explanations accompany each example at training or test time.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::cache::{CacheKey, ExplanationCache};
use super::DataError;
use crate::task::{Example, ExplanationRecord, Scheme, TaskSpec};

/// Training-explanation variants.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExplanationVariant {
    /// Every generated explanation (all conditioning labels).
    Gen,
    /// The human explanation only.
    Gold,
    /// Generated explanations conditioned on the gold label only.
    GoldGen,
    /// `Gen` plus the human explanation.
    GoldPlusGen,
    /// `GoldGen` plus the human explanation.
    GoldPlusGoldGen,
}

impl ExplanationVariant {
    pub const ALL: [ExplanationVariant; 5] = [
        ExplanationVariant::Gen,
        ExplanationVariant::Gold,
        ExplanationVariant::GoldGen,
        ExplanationVariant::GoldPlusGen,
        ExplanationVariant::GoldPlusGoldGen,
    ];

    pub fn needs_gold(self) -> bool {
        !matches!(self, ExplanationVariant::Gen | ExplanationVariant::GoldGen)
    }

    pub fn needs_generated(self) -> bool {
        self != ExplanationVariant::Gold
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ExplanationVariant::Gen => "gen",
            ExplanationVariant::Gold => "gold",
            ExplanationVariant::GoldGen => "gold_gen",
            ExplanationVariant::GoldPlusGen => "gold_plus_gen",
            ExplanationVariant::GoldPlusGoldGen => "gold_plus_gold_gen",
        }
    }
}

impl std::str::FromStr for ExplanationVariant {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ExplanationVariant::ALL
            .into_iter()
            .find(|v| v.as_str() == s)
            .ok_or_else(|| format!("unknown explanation variant `{s}`"))
    }
}

impl std::fmt::Display for ExplanationVariant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Identifies one generation run inside a cache.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenerationSource {
    pub scheme: Scheme,
    pub backend_id: String,
    pub seed: u64,
}

impl GenerationSource {
    /// Cache keys a complete entry for `example` must have.
    pub fn keys_for(&self, example: &Example, task: &TaskSpec) -> Vec<CacheKey> {
        let key = |label: Option<usize>| CacheKey {
            example_uid: example.uid.clone(),
            scheme: self.scheme,
            conditioning_label: label,
            backend_id: self.backend_id.clone(),
            seed: self.seed,
        };
        match self.scheme {
            Scheme::PredictThenExplain => task.labels.iter().map(|l| key(Some(l.id))).collect(),
            Scheme::ExplainThenPredict => vec![key(None)],
            Scheme::Gold => Vec::new(),
        }
    }
}

pub type ExplanationMap = BTreeMap<String, Vec<ExplanationRecord>>;

/// Generated explanations for each example, in conditioning-label order.
pub fn generated_explanations(
    examples: &[Example],
    cache: &ExplanationCache,
    source: &GenerationSource,
    task: &TaskSpec,
) -> Result<ExplanationMap, DataError> {
    if source.scheme == Scheme::Gold {
        return Err(DataError::Invalid(
            "gold explanations are not generated; use the gold variant".into(),
        ));
    }
    let mut out = ExplanationMap::new();
    let mut missing = Vec::new();
    for ex in examples {
        let mut recs = Vec::new();
        for key in source.keys_for(ex, task) {
            match cache.get(&key) {
                Some(r) => recs.push(r.clone()),
                None => missing.push(key.to_string()),
            }
        }
        out.insert(ex.uid.clone(), recs);
    }
    if !missing.is_empty() {
        return Err(DataError::IncompleteCache(missing));
    }
    Ok(out)
}

/// Human explanations as single records per example.
pub fn gold_explanations(examples: &[Example]) -> Result<ExplanationMap, DataError> {
    let mut out = ExplanationMap::new();
    let mut missing = Vec::new();
    for ex in examples {
        match ExplanationRecord::gold(ex) {
            Some(r) => {
                out.insert(ex.uid.clone(), vec![r]);
            }
            None => missing.push(ex.uid.clone()),
        }
    }
    if !missing.is_empty() {
        return Err(DataError::MissingGold(missing));
    }
    Ok(out)
}

/// Explanations used to train the classifier for `variant`.
pub fn select_training_explanations(
    examples: &[Example],
    cache: &ExplanationCache,
    variant: ExplanationVariant,
    source: &GenerationSource,
    task: &TaskSpec,
) -> Result<ExplanationMap, DataError> {
    let gold = if variant.needs_gold() {
        Some(gold_explanations(examples)?)
    } else {
        None
    };
    let generated = if variant.needs_generated() {
        if matches!(
            variant,
            ExplanationVariant::GoldGen | ExplanationVariant::GoldPlusGoldGen
        ) && source.scheme != Scheme::PredictThenExplain
        {
            return Err(DataError::Invalid(format!(
                "variant `{variant}` needs label-conditioned explanations, source scheme is {}",
                source.scheme
            )));
        }
        Some(generated_explanations(examples, cache, source, task)?)
    } else {
        None
    };

    let mut out = ExplanationMap::new();
    for ex in examples {
        let mut recs: Vec<ExplanationRecord> = Vec::new();
        if let Some(generated) = &generated {
            let all = &generated[&ex.uid];
            match variant {
                ExplanationVariant::GoldGen | ExplanationVariant::GoldPlusGoldGen => recs.extend(
                    all.iter()
                        .filter(|r| r.conditioning_label.as_ref() == Some(&ex.gold_label))
                        .cloned(),
                ),
                _ => recs.extend(all.iter().cloned()),
            }
        }
        if let Some(gold) = &gold {
            recs.extend(gold[&ex.uid].iter().cloned());
        }
        out.insert(ex.uid.clone(), recs);
    }
    Ok(out)
}
