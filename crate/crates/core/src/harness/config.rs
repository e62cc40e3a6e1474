//! Experiment configuration files (TOML).

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::HarnessError;
use crate::classifier::{CueDetectorScorer, LexicalScorer, ScorerState, TrainConfig};
use crate::generation::{
    BackendError, EchoBackend, GenerationBackend, GenerationConfig, HttpBackend, HttpBackendConfig,
    RecordingBackend, ReplayBackend,
};
use crate::scalar::Scalar;
use crate::task::{Scheme, TaskSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunMode {
    ExplainThenPredict,
    PredictThenExplain,
    NoExplanationPet,
    NoExplanationPlain,
    /// Human explanations during training, none at test time.
    TrainWithExplanation,
    /// Human explanations during training and at test time.
    OracleExplanation,
}

impl RunMode {
    pub const ALL: [RunMode; 6] = [
        RunMode::ExplainThenPredict,
        RunMode::PredictThenExplain,
        RunMode::NoExplanationPet,
        RunMode::NoExplanationPlain,
        RunMode::TrainWithExplanation,
        RunMode::OracleExplanation,
    ];

    /// Generation scheme, for modes that generate explanations.
    pub fn scheme(self) -> Option<Scheme> {
        match self {
            RunMode::ExplainThenPredict => Some(Scheme::ExplainThenPredict),
            RunMode::PredictThenExplain => Some(Scheme::PredictThenExplain),
            _ => None,
        }
    }

    pub fn explanations_at_test(self) -> bool {
        matches!(
            self,
            RunMode::ExplainThenPredict | RunMode::PredictThenExplain | RunMode::OracleExplanation
        )
    }

    pub fn as_str(self) -> &'static str {
        match self {
            RunMode::ExplainThenPredict => "explain_then_predict",
            RunMode::PredictThenExplain => "predict_then_explain",
            RunMode::NoExplanationPet => "no_explanation_pet",
            RunMode::NoExplanationPlain => "no_explanation_plain",
            RunMode::TrainWithExplanation => "train_with_explanation",
            RunMode::OracleExplanation => "oracle_explanation",
        }
    }
}

impl std::fmt::Display for RunMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for RunMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        RunMode::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| format!("unknown run mode `{s}`"))
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Precision {
    F32,
    #[default]
    F64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Seeds {
    pub split: u64,
    pub generation: u64,
}

fn echo_id() -> String {
    "echo".into()
}

fn replay_id() -> String {
    "replay".into()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BackendConfig {
    Echo {
        #[serde(default = "echo_id")]
        id: String,
    },
    Replay {
        path: PathBuf,
        #[serde(default = "replay_id")]
        id: String,
    },
    Http {
        #[serde(flatten)]
        http: HttpBackendConfig,
        /// Append every completion to this replay file.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        record_to: Option<PathBuf>,
    },
}

impl Default for BackendConfig {
    fn default() -> Self {
        BackendConfig::Echo { id: echo_id() }
    }
}

impl BackendConfig {
    pub fn build(&self) -> Result<Box<dyn GenerationBackend>, HarnessError> {
        Ok(match self {
            BackendConfig::Echo { id } => Box::new(EchoBackend::new(id.clone())),
            BackendConfig::Replay { path, id } => Box::new(ReplayBackend::open(path, id.clone())?),
            BackendConfig::Http { http, record_to } => {
                let backend = HttpBackend::from_env(http.clone()).map_err(backend_err)?;
                match record_to {
                    Some(p) => Box::new(RecordingBackend::new(backend, p.clone())),
                    None => Box::new(backend),
                }
            }
        })
    }
}

fn backend_err(e: BackendError) -> HarnessError {
    HarnessError::Config(format!("backend: {e}"))
}

fn default_bonus() -> f64 {
    CueDetectorScorer::DEFAULT_BONUS
}

fn default_lr() -> f64 {
    0.5
}

fn default_max_length() -> usize {
    512
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ScorerConfig {
    /// Frozen scorer rewarding labels whose cue occurs in the input.
    CueDetector {
        #[serde(default = "default_bonus")]
        bonus: f64,
    },
    /// Trainable bag-of-n-grams scorer.
    Lexical {
        #[serde(default = "default_lr")]
        learning_rate: f64,
        #[serde(default = "default_max_length")]
        max_length: usize,
    },
}

impl Default for ScorerConfig {
    fn default() -> Self {
        ScorerConfig::Lexical {
            learning_rate: default_lr(),
            max_length: default_max_length(),
        }
    }
}

impl ScorerConfig {
    pub fn build<T: Scalar>(&self, task: &TaskSpec) -> Result<ScorerState<T>, HarnessError> {
        Ok(match *self {
            ScorerConfig::CueDetector { bonus } => {
                ScorerState::CueDetector(CueDetectorScorer::from_task(task, bonus)?)
            }
            ScorerConfig::Lexical {
                learning_rate,
                max_length,
            } => ScorerState::Lexical(LexicalScorer::new(learning_rate, max_length)),
        })
    }
}

fn default_k() -> usize {
    16
}

/// One experiment. Relative paths in a file are resolved against the file's
/// directory by [`ExperimentConfig::load`]. `task` may name a shipped spec as
/// `builtin:ehans` or `builtin:esnli`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub task: String,
    pub pool: PathBuf,
    pub test: PathBuf,
    #[serde(default = "default_k")]
    pub k: usize,
    pub run_mode: RunMode,
    pub output_dir: PathBuf,
    /// Existing cache copied into the run's cache before generating.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub explanation_cache: Option<PathBuf>,
    #[serde(default)]
    pub ensemble: bool,
    #[serde(default)]
    pub fine_tune_generator: bool,
    #[serde(default)]
    pub precision: Precision,
    #[serde(default)]
    pub seeds: Seeds,
    #[serde(default)]
    pub backend: BackendConfig,
    #[serde(default)]
    pub scorer: ScorerConfig,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub generation: GenerationConfig,
}

const BUILTIN: &str = "builtin:";

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, HarnessError> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, HarnessError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
        let mut cfg =
            Self::from_toml(&text).map_err(|e| HarnessError::Config(format!("{}: {e}", path.display())))?;
        cfg.resolve_paths(path.parent().unwrap_or(Path::new(".")));
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    /// Makes every relative path relative to `base` instead.
    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        if !self.task.starts_with(BUILTIN) && Path::new(&self.task).is_relative() {
            self.task = base.join(&self.task).display().to_string();
        }
        fix(&mut self.pool);
        fix(&mut self.test);
        fix(&mut self.output_dir);
        if let Some(p) = &mut self.explanation_cache {
            fix(p);
        }
        match &mut self.backend {
            BackendConfig::Replay { path, .. } => fix(path),
            BackendConfig::Http {
                record_to: Some(p), ..
            } => fix(p),
            _ => {}
        }
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        self.train.validate()?;
        self.generation.validate()?;
        if self.k == 0 {
            return Err(HarnessError::Config("k must be positive".into()));
        }
        if self.ensemble && !self.run_mode.explanations_at_test() {
            return Err(HarnessError::Config(format!(
                "ensemble needs explanations at test time; {} has none",
                self.run_mode
            )));
        }
        if self.fine_tune_generator && self.run_mode.scheme().is_none() {
            return Err(HarnessError::Config(format!(
                "fine_tune_generator set but {} generates nothing",
                self.run_mode
            )));
        }
        Ok(())
    }

    pub fn load_task(&self) -> Result<TaskSpec, HarnessError> {
        match self.task.strip_prefix(BUILTIN) {
            Some(name) => {
                let text = crate::task::builtin::by_name(name)
                    .ok_or_else(|| HarnessError::Config(format!("no builtin task `{name}`")))?;
                Ok(TaskSpec::from_toml(text)?)
            }
            None => Ok(TaskSpec::load(&self.task)?),
        }
    }

    /// Generation settings with the scheme fixed by the run mode.
    pub fn generation_config(&self) -> Option<GenerationConfig> {
        self.run_mode.scheme().map(|scheme| GenerationConfig {
            scheme,
            ..self.generation.clone()
        })
    }

    /// SHA-256 of the canonical JSON form, ignoring `output_dir`.
    pub fn digest(&self) -> String {
        let mut c = self.clone();
        c.output_dir = PathBuf::new();
        let json = serde_json::to_vec(&c).expect("config serializes");
        hex::encode(Sha256::digest(&json))
    }
}
