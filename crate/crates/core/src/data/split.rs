//! Stratified few-shot sampling.

use std::collections::HashSet;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::DataError;
use crate::task::{Example, TaskSpec};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FewShotSplit {
    pub train: Vec<Example>,
    pub dev: Vec<Example>,
    pub seed: u64,
    pub k: usize,
}

impl FewShotSplit {
    /// Checks the per-label counts and train/dev disjointness.
    pub fn validate(&self, task: &TaskSpec) -> Result<(), DataError> {
        for (part, examples) in [("train", &self.train), ("dev", &self.dev)] {
            let mut counts = vec![0usize; task.num_labels()];
            for ex in examples {
                counts[ex.gold_label.id] += 1;
            }
            if let Some((id, &n)) = counts.iter().enumerate().find(|(_, &n)| n != self.k) {
                return Err(DataError::Invalid(format!(
                    "{part} has {n} examples of `{}`, expected {}",
                    task.labels[id].name, self.k
                )));
            }
        }
        let train: HashSet<&str> = self.train.iter().map(|e| e.uid.as_str()).collect();
        if let Some(ex) = self.dev.iter().find(|e| train.contains(e.uid.as_str())) {
            return Err(DataError::Invalid(format!(
                "uid `{}` is in both train and dev",
                ex.uid
            )));
        }
        Ok(())
    }

    pub fn all(&self) -> impl Iterator<Item = &Example> {
        self.train.iter().chain(self.dev.iter())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), DataError> {
        let path = path.as_ref();
        let text = serde_json::to_string_pretty(self).expect("split serializes");
        std::fs::write(path, text + "\n").map_err(|e| DataError::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>, task: &TaskSpec) -> Result<FewShotSplit, DataError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| DataError::io(path, e))?;
        let split: FewShotSplit =
            serde_json::from_str(&text).map_err(|e| DataError::Invalid(e.to_string()))?;
        for ex in split.all() {
            if task.label(ex.gold_label.id) != Some(&ex.gold_label) {
                return Err(DataError::Invalid(format!(
                    "example `{}` has label `{}` unknown to task `{}`",
                    ex.uid, ex.gold_label.name, task.name
                )));
            }
        }
        split.validate(task)?;
        Ok(split)
    }
}

/// Draws `k` train and `k` dev examples per label.
///
/// Examples of each label are sorted by uid and then shuffled with a ChaCha8 stream
/// seeded by `seed`, so the selection depends on dataset content and not on file
/// order. Labels are processed in task order from the same stream.
pub fn sample_few_shot(
    dataset: &[Example],
    task: &TaskSpec,
    k: usize,
    seed: u64,
) -> Result<FewShotSplit, DataError> {
    if k == 0 {
        return Err(DataError::Invalid("k must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut train = Vec::with_capacity(k * task.num_labels());
    let mut dev = Vec::with_capacity(k * task.num_labels());
    for label in &task.labels {
        let mut pool: Vec<&Example> = dataset.iter().filter(|e| e.gold_label.id == label.id).collect();
        if pool.len() < 2 * k {
            return Err(DataError::InsufficientExamples {
                label: label.name.clone(),
                available: pool.len(),
                required: 2 * k,
            });
        }
        pool.sort_by(|a, b| a.uid.cmp(&b.uid));
        pool.shuffle(&mut rng);
        train.extend(pool[..k].iter().map(|e| (*e).clone()));
        dev.extend(pool[k..2 * k].iter().map(|e| (*e).clone()));
    }
    let split = FewShotSplit { train, dev, seed, k };
    split.validate(task)?;
    Ok(split)
}
