//! Language-model backend interface and the deterministic echo mock.

use rand::seq::IndexedRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::prompt::TrainingPair;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Capabilities {
    pub fine_tunable: bool,
    pub max_context: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionRequest {
    pub prompt: String,
    pub max_tokens: usize,
    pub temperature: f64,
    pub stop: Vec<String>,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FineTuneHparams {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr_multiplier: f64,
}

impl Default for FineTuneHparams {
    fn default() -> Self {
        FineTuneHparams {
            epochs: 10,
            batch_size: 4,
            lr_multiplier: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum BackendError {
    /// Network or server-side failure; the request may succeed if retried.
    #[error("transport error: {0}")]
    Transport(String),
    /// The backend has no completion for this prompt (replay miss).
    #[error("no completion recorded for prompt {0}")]
    Missing(String),
    #[error("backend does not support {0}")]
    Unsupported(&'static str),
    #[error("backend rejected request: {0}")]
    Rejected(String),
}

impl BackendError {
    pub fn is_retryable(&self) -> bool {
        matches!(self, BackendError::Transport(_))
    }
}

/// A text-completion model, optionally fine-tunable.
pub trait GenerationBackend: Send + Sync {
    fn backend_id(&self) -> &str;

    fn capabilities(&self) -> Capabilities;

    fn complete(&self, request: &CompletionRequest) -> Result<String, BackendError>;

    /// Fine-tunes on prompt/completion pairs and returns the id of the tuned model.
    /// The backend switches to the tuned model on success.
    fn fine_tune(
        &mut self,
        _pairs: &[TrainingPair],
        _hparams: &FineTuneHparams,
    ) -> Result<String, BackendError> {
        Err(BackendError::Unsupported("fine-tuning"))
    }
}

/// Hex SHA-256 of a prompt; the replay key.
pub fn prompt_hash(prompt: &str) -> String {
    hex::encode(Sha256::digest(prompt.as_bytes()))
}

const FILLER: &[&str] = &[
    "the",
    "scene",
    "shows",
    "someone",
    "doing",
    "something",
    "outside",
    "today",
];

/// Mock backend: echoes the word right before `why?` in the prompt (the answer
/// word for predict-then-explain prompts) followed by filler drawn from a stream
/// seeded by `(prompt, seed)`. Fine-tuning only retags the model id.
#[derive(Debug, Clone)]
pub struct EchoBackend {
    id: String,
    max_context: usize,
    fine_tuned_on: usize,
}

impl EchoBackend {
    pub fn new(id: impl Into<String>) -> Self {
        EchoBackend {
            id: id.into(),
            max_context: 2048,
            fine_tuned_on: 0,
        }
    }

    /// Number of pairs seen by the last fine-tune call.
    pub fn fine_tuned_on(&self) -> usize {
        self.fine_tuned_on
    }
}

impl GenerationBackend for EchoBackend {
    fn backend_id(&self) -> &str {
        &self.id
    }

    fn capabilities(&self) -> Capabilities {
        Capabilities {
            fine_tunable: true,
            max_context: self.max_context,
        }
    }

    fn complete(&self, request: &CompletionRequest) -> Result<String, BackendError> {
        let head = request
            .prompt
            .rfind("why?")
            .map(|i| &request.prompt[..i])
            .unwrap_or(&request.prompt);
        let echoed = head.split_whitespace().last().unwrap_or("nothing");
        let digest = Sha256::digest(format!("{}\u{0}{}", request.prompt, request.seed).as_bytes());
        let mut seed = [0u8; 32];
        seed.copy_from_slice(&digest);
        let mut rng = ChaCha8Rng::from_seed(seed);
        let filler: Vec<&str> = (0..4)
            .map(|_| *FILLER.choose(&mut rng).expect("non-empty filler"))
            .collect();
        Ok(format!(" it is {echoed} because {} ###", filler.join(" ")))
    }

    fn fine_tune(
        &mut self,
        pairs: &[TrainingPair],
        hparams: &FineTuneHparams,
    ) -> Result<String, BackendError> {
        let mut h = Sha256::new();
        for p in pairs {
            h.update(p.prompt.as_bytes());
            h.update([0]);
            h.update(p.completion.as_bytes());
            h.update([0]);
        }
        h.update(format!("{hparams:?}").as_bytes());
        let tag = &hex::encode(h.finalize())[..12];
        self.id = format!("{}:ft-{tag}", self.id);
        self.fine_tuned_on = pairs.len();
        Ok(self.id.clone())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn req(prompt: &str, seed: u64) -> CompletionRequest {
        CompletionRequest {
            prompt: prompt.into(),
            max_tokens: 32,
            temperature: 0.0,
            stop: vec!["###".into()],
            seed,
        }
    }

    #[test]
    fn echo_is_deterministic_and_seeded() {
        let b = EchoBackend::new("mock");
        let a1 = b.complete(&req("p question: h maybe why? ###", 1)).unwrap();
        let a2 = b.complete(&req("p question: h maybe why? ###", 1)).unwrap();
        assert_eq!(a1, a2);
        assert!(a1.contains("maybe"));
        let seeds: std::collections::HashSet<String> = (0..16)
            .map(|s| b.complete(&req("p question: h maybe why? ###", s)).unwrap())
            .collect();
        assert!(seeds.len() > 1);
    }

    #[test]
    fn fine_tune_retags_id_and_keeps_capabilities() {
        let mut b = EchoBackend::new("mock");
        let caps = b.capabilities();
        let id = b
            .fine_tune(
                &[TrainingPair {
                    prompt: "a".into(),
                    completion: " b ###".into(),
                }],
                &FineTuneHparams::default(),
            )
            .unwrap();
        assert_ne!(id, "mock");
        assert_eq!(b.backend_id(), id);
        assert_eq!(b.capabilities(), caps);
    }

    #[test]
    fn prompt_hash_is_sha256_hex() {
        assert_eq!(
            prompt_hash(""),
            "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855"
        );
    }
}
