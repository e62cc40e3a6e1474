//! Synthetic two-label fixtures on the e-HANS task where only explanation cues
//! carry label information.
//!
//! Premises and hypotheses are drawn from the same cue-free vocabulary for every
//! label. Human explanations contain the cue of the gold label ("implies" or
//! "not know"). The replay file answers every generation prompt: a
//! predict-then-explain explanation conditioned on the gold label carries the gold
//! cue, one conditioned on another label is cue-free filler, and an
//! explain-then-predict explanation carries the gold cue.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use rand::seq::IndexedRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::config::{BackendConfig, ExperimentConfig, RunMode, ScorerConfig, Seeds};
use super::HarnessError;
use crate::classifier::TrainConfig;
use crate::data::{sample_few_shot, save_dataset, ExplanationVariant};
use crate::generation::prompt::DEFAULT_STOP;
use crate::generation::{build_generation_prompt, write_replay_file, ReplayEntry};
use crate::task::{builtin, Example, Label, Scheme, TaskSpec};

const NOUNS: &[&str] = &[
    "pilot",
    "lawyer",
    "doctor",
    "artist",
    "banker",
    "student",
    "judge",
    "actor",
    "author",
    "senator",
    "tourist",
    "manager",
    "athlete",
    "president",
    "scientist",
    "farmer",
];
const VERBS: &[&str] = &[
    "saw",
    "helped",
    "called",
    "paid",
    "met",
    "thanked",
    "recognized",
    "advised",
    "admired",
    "introduced",
    "contacted",
    "avoided",
];
const PLACES: &[&str] = &["room", "station", "garden", "library", "market", "office"];
const ACTIVITIES: &[&str] = &["waiting", "reading", "standing", "talking", "resting"];

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSpec {
    pub per_label_pool: usize,
    pub per_label_test: usize,
    pub seed: u64,
    /// `(k, split seed)`: generated explanations of the training examples of that
    /// split carry another label's cue instead of their own.
    pub misleading_train: Option<(usize, u64)>,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            per_label_pool: 16,
            per_label_test: 30,
            seed: 0,
            misleading_train: None,
        }
    }
}

/// Files written by [`SyntheticFixture::write`].
#[derive(Debug, Clone)]
pub struct SyntheticFixture {
    pub dir: PathBuf,
    pub pool: PathBuf,
    pub test: PathBuf,
    pub replay: PathBuf,
    pub task: TaskSpec,
}

fn pick<'a>(rng: &mut ChaCha8Rng, words: &[&'a str]) -> &'a str {
    words.choose(rng).expect("non-empty vocabulary")
}

fn clause(rng: &mut ChaCha8Rng) -> String {
    format!(
        "the {} {} the {}",
        pick(rng, NOUNS),
        pick(rng, VERBS),
        pick(rng, NOUNS)
    )
}

fn capitalize(s: &str) -> String {
    let mut c = s.chars();
    c.next()
        .map(|f| f.to_uppercase().collect::<String>() + c.as_str())
        .unwrap_or_default()
}

/// Explanation text carrying the cue of `label` for a premise/hypothesis pair.
pub fn cue_explanation(label: usize, premise: &str, hypothesis: &str) -> String {
    let strip = |s: &str| s.trim_end_matches('.').to_lowercase();
    match label {
        0 => format!("{} implies {}.", capitalize(&strip(premise)), strip(hypothesis)),
        _ => format!("We do not know whether {}.", strip(hypothesis)),
    }
}

fn filler(rng: &mut ChaCha8Rng) -> String {
    format!(
        "The {} is {} near the {}.",
        pick(rng, NOUNS),
        pick(rng, ACTIVITIES),
        pick(rng, PLACES)
    )
}

fn examples(task: &TaskSpec, per_label: usize, prefix: &str, rng: &mut ChaCha8Rng) -> Vec<Example> {
    let mut out = Vec::new();
    for label in &task.labels {
        for i in 0..per_label {
            let premise = capitalize(&clause(rng)) + ".";
            let hypothesis = capitalize(&clause(rng)) + ".";
            out.push(Example {
                uid: format!("{prefix}-{}-{i:03}", label.name),
                gold_explanation: Some(cue_explanation(label.id, &premise, &hypothesis)),
                premise,
                hypothesis,
                gold_label: label.clone(),
            });
        }
    }
    out
}

fn replay_entries(
    task: &TaskSpec,
    examples: &[Example],
    misleading: &BTreeSet<String>,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<ReplayEntry>, HarnessError> {
    let completion = |text: String| format!(" {text} {DEFAULT_STOP}");
    let mut out = Vec::new();
    for ex in examples {
        let cue_label = if misleading.contains(&ex.uid) {
            (ex.gold_label.id + 1) % task.num_labels()
        } else {
            ex.gold_label.id
        };
        let cued = cue_explanation(cue_label, &ex.premise, &ex.hypothesis);
        for label in &task.labels {
            let text = match (misleading.contains(&ex.uid), *label == ex.gold_label) {
                (false, true) | (true, _) => cued.clone(),
                (false, false) => filler(rng),
            };
            let prompt = build_generation_prompt(ex, task, Scheme::PredictThenExplain, Some(label))?;
            out.push(ReplayEntry::new(&prompt, completion(text)));
        }
        let prompt = build_generation_prompt(ex, task, Scheme::ExplainThenPredict, None::<&Label>)?;
        out.push(ReplayEntry::new(&prompt, completion(cued)));
    }
    Ok(out)
}

impl SyntheticFixture {
    /// Writes `pool.jsonl`, `test.jsonl` and `replay.jsonl` into `dir`.
    pub fn write(dir: &Path, spec: &SyntheticSpec) -> Result<Self, HarnessError> {
        std::fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
        let task = TaskSpec::from_toml(builtin::EHANS)?;
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        let pool = examples(&task, spec.per_label_pool, "pool", &mut rng);
        let test = examples(&task, spec.per_label_test, "test", &mut rng);
        let misleading: BTreeSet<String> = match spec.misleading_train {
            Some((k, seed)) => sample_few_shot(&pool, &task, k, seed)?
                .train
                .into_iter()
                .map(|e| e.uid)
                .collect(),
            None => BTreeSet::new(),
        };
        let all: Vec<Example> = pool.iter().chain(&test).cloned().collect();
        let entries = replay_entries(&task, &all, &misleading, &mut rng)?;

        let fixture = SyntheticFixture {
            dir: dir.to_path_buf(),
            pool: dir.join("pool.jsonl"),
            test: dir.join("test.jsonl"),
            replay: dir.join("replay.jsonl"),
            task,
        };
        save_dataset(&fixture.pool, &pool)?;
        save_dataset(&fixture.test, &test)?;
        write_replay_file(&fixture.replay, &entries).map_err(|e| HarnessError::io(&fixture.replay, e))?;
        Ok(fixture)
    }

    /// Config reading this fixture through the replay backend, with the lexical
    /// scorer trained for 200 steps on human explanations and `k` examples per
    /// label.
    pub fn config(&self, mode: RunMode, k: usize, output_dir: impl Into<PathBuf>) -> ExperimentConfig {
        ExperimentConfig {
            task: "builtin:ehans".into(),
            pool: self.pool.clone(),
            test: self.test.clone(),
            k,
            run_mode: mode,
            output_dir: output_dir.into(),
            explanation_cache: None,
            ensemble: false,
            fine_tune_generator: false,
            precision: Default::default(),
            seeds: Seeds::default(),
            backend: BackendConfig::Replay {
                path: self.replay.clone(),
                id: "replay".into(),
            },
            scorer: ScorerConfig::default(),
            train: TrainConfig {
                train_steps: 200,
                explanation_variant: ExplanationVariant::Gold,
                ..TrainConfig::default()
            },
            generation: Default::default(),
        }
    }
}
