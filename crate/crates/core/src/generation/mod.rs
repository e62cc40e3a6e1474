//! Explanation generation: prompt construction, backend calls with retries, and
//! parsing completions into [`ExplanationRecord`]s.

pub mod backend;
pub mod http;
pub mod prompt;
pub mod replay;

use std::time::Duration;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use backend::{
    prompt_hash, BackendError, Capabilities, CompletionRequest, EchoBackend, FineTuneHparams,
    GenerationBackend,
};
pub use http::{HttpBackend, HttpBackendConfig, Throttle};
pub use prompt::{build_generation_prompt, parse_completion, training_pair, TrainingPair};
pub use replay::{write_replay_file, RecordingBackend, ReplayBackend, ReplayEntry};

use crate::data::{CacheKey, CacheWriter, DataError, FewShotSplit, GenerationSource};
use crate::task::{Example, ExplanationRecord, Label, Scheme, TaskSpec};

#[derive(Debug, thiserror::Error)]
pub enum GenerationError {
    #[error("completion is empty after truncation")]
    Degenerate,
    #[error("no question word for label `{0}`")]
    MissingQuestionWord(String),
    #[error("{0}")]
    Scheme(String),
    #[error("transport failed after {attempts} attempt(s) (backoff {backoff_ms:?} ms): {last}")]
    Transport {
        attempts: usize,
        backoff_ms: Vec<u64>,
        last: BackendError,
    },
    #[error(transparent)]
    Backend(BackendError),
    #[error("backend `{0}` cannot be fine-tuned")]
    NotFineTunable(String),
    #[error("examples lack gold explanations: {}", .0.join(", "))]
    MissingGold(Vec<String>),
    #[error("replay: {0}")]
    Replay(String),
    #[error(transparent)]
    Data(#[from] DataError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RetryPolicy {
    /// Attempts for transport failures, including the first.
    pub transport_attempts: usize,
    pub backoff_base_ms: u64,
    /// Temperature of the single retry after a degenerate completion.
    pub degenerate_retry_temperature: f64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            transport_attempts: 3,
            backoff_base_ms: 500,
            degenerate_retry_temperature: 0.7,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenerationConfig {
    pub scheme: Scheme,
    pub max_tokens: usize,
    pub temperature: f64,
    pub stop: Vec<String>,
    pub fine_tune: FineTuneHparams,
    pub retry: RetryPolicy,
    /// Parallel requests when generating for many examples.
    pub workers: usize,
}

impl Default for GenerationConfig {
    fn default() -> Self {
        GenerationConfig {
            scheme: Scheme::PredictThenExplain,
            max_tokens: 64,
            temperature: 0.0,
            stop: vec![prompt::DEFAULT_STOP.to_string()],
            fine_tune: FineTuneHparams::default(),
            retry: RetryPolicy::default(),
            workers: 4,
        }
    }
}

impl GenerationConfig {
    pub fn validate(&self) -> Result<(), GenerationError> {
        if self.scheme == Scheme::Gold {
            return Err(GenerationError::Scheme("gold is not a generation scheme".into()));
        }
        if self.temperature.is_nan() || self.temperature < 0.0 {
            return Err(GenerationError::Scheme("temperature must be non-negative".into()));
        }
        if self.max_tokens == 0 {
            return Err(GenerationError::Scheme("max_tokens must be positive".into()));
        }
        Ok(())
    }
}

/// A generation that stayed degenerate after its retry.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenerationFailure {
    pub example_uid: String,
    pub conditioning_label: Option<Label>,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct GenerationOutcome {
    pub records: Vec<ExplanationRecord>,
    pub failures: Vec<GenerationFailure>,
}

fn complete_with_retries(
    backend: &dyn GenerationBackend,
    request: &CompletionRequest,
    policy: &RetryPolicy,
) -> Result<String, GenerationError> {
    let attempts = policy.transport_attempts.max(1);
    let mut backoff = Vec::new();
    let mut attempt = 0;
    loop {
        match backend.complete(request) {
            Ok(text) => return Ok(text),
            Err(e) if e.is_retryable() => {
                attempt += 1;
                if attempt >= attempts {
                    return Err(GenerationError::Transport {
                        attempts,
                        backoff_ms: backoff,
                        last: e,
                    });
                }
                let delay = policy.backoff_base_ms.saturating_mul(1 << (attempt - 1));
                log::warn!("{}: {e}; retrying in {delay} ms", backend.backend_id());
                backoff.push(delay);
                std::thread::sleep(Duration::from_millis(delay));
            }
            Err(e) => return Err(GenerationError::Backend(e)),
        }
    }
}

/// Generates one explanation per conditioning label (predict-then-explain) or a
/// single unconditioned explanation (explain-then-predict).
pub fn generate_for_example(
    backend: &dyn GenerationBackend,
    example: &Example,
    task: &TaskSpec,
    cfg: &GenerationConfig,
    seed: u64,
) -> Result<GenerationOutcome, GenerationError> {
    cfg.validate()?;
    let conditions: Vec<Option<&Label>> = match cfg.scheme {
        Scheme::PredictThenExplain => task.labels.iter().map(Some).collect(),
        _ => vec![None],
    };
    let mut outcome = GenerationOutcome::default();
    for label in conditions {
        match generate_one(backend, example, task, cfg, seed, label)? {
            Ok(rec) => outcome.records.push(rec),
            Err(failure) => outcome.failures.push(failure),
        }
    }
    Ok(outcome)
}

fn generate_one(
    backend: &dyn GenerationBackend,
    example: &Example,
    task: &TaskSpec,
    cfg: &GenerationConfig,
    seed: u64,
    label: Option<&Label>,
) -> Result<Result<ExplanationRecord, GenerationFailure>, GenerationError> {
    let prompt = build_generation_prompt(example, task, cfg.scheme, label)?;
    let mut request = CompletionRequest {
        prompt,
        max_tokens: cfg.max_tokens,
        temperature: cfg.temperature,
        stop: cfg.stop.clone(),
        seed,
    };
    let mut parsed = parse_completion(&complete_with_retries(backend, &request, &cfg.retry)?, &cfg.stop);
    if matches!(parsed, Err(GenerationError::Degenerate)) {
        request.temperature = cfg.retry.degenerate_retry_temperature;
        parsed = parse_completion(&complete_with_retries(backend, &request, &cfg.retry)?, &cfg.stop);
    }
    Ok(match parsed {
        Ok(text) => Ok(ExplanationRecord {
            example_uid: example.uid.clone(),
            text,
            conditioning_label: label.cloned(),
            scheme: cfg.scheme,
            backend_id: backend.backend_id().to_string(),
            seed,
        }),
        Err(e) => {
            log::warn!("degenerate generation for `{}` ({:?}): {e}", example.uid, label);
            Err(GenerationFailure {
                example_uid: example.uid.clone(),
                conditioning_label: label.cloned(),
                reason: e.to_string(),
            })
        }
    })
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct GenerationSummary {
    pub generated: usize,
    pub reused: usize,
    pub failures: Vec<GenerationFailure>,
}

/// `(generated, reused, failures)` of one example.
type ExampleOutcome = (usize, usize, Vec<GenerationFailure>);

/// Generates explanations for `examples`, skipping keys already present in the
/// cache unless `overwrite` is set. Examples run concurrently on `cfg.workers`
/// threads; every record goes through the single cache writer.
pub fn generate_all(
    backend: &dyn GenerationBackend,
    examples: &[Example],
    task: &TaskSpec,
    cfg: &GenerationConfig,
    seed: u64,
    writer: &CacheWriter,
    overwrite: bool,
) -> Result<GenerationSummary, GenerationError> {
    cfg.validate()?;
    let source = GenerationSource {
        scheme: cfg.scheme,
        backend_id: backend.backend_id().to_string(),
        seed,
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers.max(1))
        .build()
        .map_err(|e| GenerationError::Scheme(format!("thread pool: {e}")))?;
    let results: Vec<Result<ExampleOutcome, GenerationError>> = pool.install(|| {
        examples
            .par_iter()
            .map(|ex| {
                let keys: Vec<CacheKey> = source.keys_for(ex, task);
                if !overwrite && keys.iter().all(|k| writer.contains(k)) {
                    return Ok((0, keys.len(), Vec::new()));
                }
                let outcome = generate_for_example(backend, ex, task, cfg, seed)?;
                let n = outcome.records.len();
                for rec in outcome.records {
                    writer.append(rec, overwrite)?;
                }
                Ok((n, 0, outcome.failures))
            })
            .collect()
    });
    let mut summary = GenerationSummary::default();
    for r in results {
        let (generated, reused, failures) = r?;
        summary.generated += generated;
        summary.reused += reused;
        summary.failures.extend(failures);
    }
    writer.finish()?;
    Ok(summary)
}

/// Fine-tunes `backend` on the gold-labelled training split and returns the new id.
pub fn fine_tune_generator(
    backend: &mut dyn GenerationBackend,
    split: &FewShotSplit,
    task: &TaskSpec,
    cfg: &GenerationConfig,
) -> Result<String, GenerationError> {
    if !backend.capabilities().fine_tunable {
        return Err(GenerationError::NotFineTunable(backend.backend_id().into()));
    }
    let missing: Vec<String> = split
        .train
        .iter()
        .filter(|e| e.gold_explanation.as_deref().is_none_or(|s| s.trim().is_empty()))
        .map(|e| e.uid.clone())
        .collect();
    if !missing.is_empty() {
        return Err(GenerationError::MissingGold(missing));
    }
    let pairs = split
        .train
        .iter()
        .map(|e| training_pair(e, task, cfg.scheme))
        .collect::<Result<Vec<_>, _>>()?;
    backend
        .fine_tune(&pairs, &cfg.fine_tune)
        .map_err(GenerationError::Backend)
}
