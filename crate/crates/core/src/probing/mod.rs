//! Perturbing test-time explanations and measuring how often predictions flip.

pub mod perturb;
pub mod tagger;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

pub use perturb::{
    perturb_noun_verb, perturb_other_item, PerturbationKind, PerturbationSpec, PoolSource, ReplacementPool,
    DEFAULT_POS_TAGS,
};
pub use tagger::{LexiconTagger, PosTagger, RuleTagger};

use crate::classifier::{predict_flame, ClassifierError, MaskScorer, PredictionRecord};
use crate::data::{CacheKey, ExplanationCache, ExplanationMap};
use crate::scalar::Scalar;
use crate::task::{Example, PatternVerbalizerPair, TaskSpec};

#[derive(Debug, thiserror::Error)]
pub enum ProbeError {
    #[error("no replacement words for tag {0}")]
    EmptyPool(String),
    #[error("cannot exchange explanations in a bucket of one: {0}")]
    SingletonBucket(String),
    #[error("unaligned predictions; missing uids: {}", .0.join(", "))]
    MissingUids(Vec<String>),
    #[error("tagger error: {0}")]
    Tagger(String),
    #[error("no seeds given")]
    NoSeeds,
    #[error(transparent)]
    Classifier(#[from] ClassifierError),
    #[error("data error: {0}")]
    Data(String),
}

/// Flip counts for one seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FlipCounts {
    pub seed: u64,
    pub examples: usize,
    /// Prediction changes when only the perturbed top explanation is used.
    pub single_flips: Option<usize>,
    /// Prediction changes with the full perturbed explanation set.
    pub full_flips: usize,
    /// Examples where both runs report a generator label.
    pub generator_compared: usize,
    pub generator_flips: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeReport {
    pub kind: PerturbationKind,
    pub per_seed: Vec<FlipCounts>,
    /// `P(ŷ′ ≠ ŷ | e′)`, pooled over seeds.
    pub prediction_flip_single: Option<f64>,
    /// `P(ŷ′ ≠ ŷ | e′₁, e′₂, …)`.
    pub prediction_flip_full: f64,
    /// `P(y′_gen ≠ y_gen | e′₁, e′₂, …)`.
    pub generator_flip_full: Option<f64>,
}

impl ProbeReport {
    /// Three-column plain-text table.
    pub fn render_table(&self) -> String {
        let pct = |v: Option<f64>| v.map_or("-".to_string(), |v| format!("{:.1}", 100.0 * v));
        format!(
            "{:<12} {:>16} {:>22} {:>26}\n{:<12} {:>16} {:>22} {:>26}\n",
            "perturbation",
            "P(y' != y | e')",
            "P(y' != y | e'1, e'2..)",
            "P(y'gen != ygen | e'1, e'2..)",
            self.kind.as_str(),
            pct(self.prediction_flip_single),
            pct(Some(self.prediction_flip_full)),
            pct(self.generator_flip_full),
        )
    }
}

/// Predictions of one perturbation seed.
pub struct SeedRun<'a, T: Scalar> {
    pub seed: u64,
    pub original: &'a [PredictionRecord<T>],
    pub single: Option<&'a [PredictionRecord<T>]>,
    pub full: &'a [PredictionRecord<T>],
}

fn index<T: Scalar>(recs: &[PredictionRecord<T>]) -> BTreeMap<&str, &PredictionRecord<T>> {
    recs.iter().map(|r| (r.example_uid.as_str(), r)).collect()
}

fn aligned<'a, T: Scalar>(
    base: &BTreeMap<&'a str, &'a PredictionRecord<T>>,
    other: &BTreeMap<&'a str, &'a PredictionRecord<T>>,
) -> Result<(), ProbeError> {
    let missing: Vec<String> = base
        .keys()
        .filter(|k| !other.contains_key(*k))
        .chain(other.keys().filter(|k| !base.contains_key(*k)))
        .map(|k| k.to_string())
        .collect();
    if missing.is_empty() {
        Ok(())
    } else {
        Err(ProbeError::MissingUids(missing))
    }
}

/// Compares original and perturbed predictions. Rates pool the counts of all
/// seeds, so they do not depend on seed order.
pub fn probe_flip_rates<T: Scalar>(
    kind: PerturbationKind,
    runs: &[SeedRun<'_, T>],
) -> Result<ProbeReport, ProbeError> {
    if runs.is_empty() {
        return Err(ProbeError::NoSeeds);
    }
    let mut per_seed = Vec::with_capacity(runs.len());
    for run in runs {
        let orig = index(run.original);
        let full = index(run.full);
        aligned(&orig, &full)?;
        let single = run.single.map(index);
        if let Some(single) = &single {
            aligned(&orig, single)?;
        }
        let mut counts = FlipCounts {
            seed: run.seed,
            examples: orig.len(),
            single_flips: single.as_ref().map(|_| 0),
            full_flips: 0,
            generator_compared: 0,
            generator_flips: 0,
        };
        for (uid, o) in &orig {
            let f = full[uid];
            counts.full_flips += usize::from(f.predicted != o.predicted);
            if let (Some(s), Some(n)) = (&single, counts.single_flips.as_mut()) {
                *n += usize::from(s[uid].predicted != o.predicted);
            }
            if let (Some(a), Some(b)) = (&o.generator_label, &f.generator_label) {
                counts.generator_compared += 1;
                counts.generator_flips += usize::from(a != b);
            }
        }
        per_seed.push(counts);
    }
    let total: usize = per_seed.iter().map(|c| c.examples).sum();
    let rate = |num: usize, den: usize| if den == 0 { 0.0 } else { num as f64 / den as f64 };
    let single = per_seed.iter().map(|c| c.single_flips).sum::<Option<usize>>();
    let gen_den: usize = per_seed.iter().map(|c| c.generator_compared).sum();
    Ok(ProbeReport {
        kind,
        prediction_flip_single: single.map(|n| rate(n, total)),
        prediction_flip_full: rate(per_seed.iter().map(|c| c.full_flips).sum(), total),
        generator_flip_full: (gen_den > 0)
            .then(|| rate(per_seed.iter().map(|c| c.generator_flips).sum(), gen_den)),
        per_seed,
    })
}

/// Everything needed to re-score a model on perturbed explanations.
pub struct ProbeInputs<'a, T: Scalar> {
    pub scorer: &'a dyn MaskScorer<T>,
    pub task: &'a TaskSpec,
    pub pvps: &'a [PatternVerbalizerPair],
    pub examples: &'a [Example],
    /// Test explanations in the order used for `original`.
    pub explanations: &'a ExplanationMap,
    pub original: &'a [PredictionRecord<T>],
}

/// Predictions under one perturbation seed: `(single top explanation, full set)`.
pub type PerturbedPredictions<T> = (Vec<PredictionRecord<T>>, Vec<PredictionRecord<T>>);

/// Perturbs the explanation behind each original prediction's maximum (noun/verb
/// replacement; the other explanations stay as they are) or swaps every
/// explanation (other-item), and re-predicts.
pub fn perturbed_predictions<T: Scalar>(
    inputs: &ProbeInputs<'_, T>,
    kind: PerturbationKind,
    seed: u64,
    tagger: &dyn PosTagger,
    pool: &ReplacementPool,
    tags: &[String],
) -> Result<PerturbedPredictions<T>, ProbeError> {
    let orig = index(inputs.original);
    let swapped = match kind {
        PerturbationKind::OtherItem => {
            let mut cache = ExplanationCache::new();
            for rec in inputs.explanations.values().flatten() {
                cache
                    .insert(rec.clone(), false)
                    .map_err(|e| ProbeError::Data(e.to_string()))?;
            }
            let gold = inputs
                .examples
                .iter()
                .map(|e| (e.uid.clone(), e.gold_label.clone()))
                .collect();
            Some(perturb_other_item(&cache, &gold, seed)?)
        }
        PerturbationKind::NounVerbReplace => None,
    };
    let mut single = Vec::with_capacity(inputs.examples.len());
    let mut full = Vec::with_capacity(inputs.examples.len());
    let mut missing = Vec::new();
    for ex in inputs.examples {
        let (Some(o), Some(expls)) = (orig.get(ex.uid.as_str()), inputs.explanations.get(&ex.uid)) else {
            missing.push(ex.uid.clone());
            continue;
        };
        if o.max_row >= expls.len() {
            return Err(ProbeError::Data(format!(
                "prediction for `{}` points at row {} of {} explanations",
                ex.uid,
                o.max_row,
                expls.len()
            )));
        }
        let perturbed = match &swapped {
            Some(cache) => expls
                .iter()
                .map(|r| {
                    cache
                        .get(&CacheKey::of(r))
                        .cloned()
                        .expect("every record swapped")
                })
                .collect::<Vec<_>>(),
            None => {
                let mut v = expls.clone();
                v[o.max_row] = perturb_noun_verb(&expls[o.max_row], tagger, pool, tags, seed)?;
                v
            }
        };
        let top = std::slice::from_ref(&perturbed[o.max_row]);
        single.push(predict_flame(inputs.scorer, inputs.task, ex, top, inputs.pvps)?);
        full.push(predict_flame(
            inputs.scorer,
            inputs.task,
            ex,
            &perturbed,
            inputs.pvps,
        )?);
    }
    if !missing.is_empty() {
        return Err(ProbeError::MissingUids(missing));
    }
    Ok((single, full))
}

/// Runs [`perturbed_predictions`] for every seed and reports the pooled flip rates.
pub fn probe_model<T: Scalar>(
    inputs: &ProbeInputs<'_, T>,
    kind: PerturbationKind,
    seeds: &[u64],
    tagger: &dyn PosTagger,
    pool: &ReplacementPool,
    tags: &[String],
) -> Result<ProbeReport, ProbeError> {
    let outcomes = seeds
        .iter()
        .map(|&s| perturbed_predictions(inputs, kind, s, tagger, pool, tags))
        .collect::<Result<Vec<_>, _>>()?;
    let runs: Vec<SeedRun<'_, T>> = seeds
        .iter()
        .zip(&outcomes)
        .map(|(&seed, (single, full))| SeedRun {
            seed,
            original: inputs.original,
            single: Some(single),
            full,
        })
        .collect();
    probe_flip_rates(kind, &runs)
}
