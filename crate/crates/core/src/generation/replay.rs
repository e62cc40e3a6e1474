//! Offline replay of recorded completions.
//!
//! Replay files hold one JSON object per line:
//!
//! ```text
//! {"prompt_sha256":"<hex>","completion":" raw text ###"}
//! ```

use std::collections::HashMap;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::backend::{
    prompt_hash, BackendError, Capabilities, CompletionRequest, FineTuneHparams, GenerationBackend,
};
use super::prompt::TrainingPair;
use super::GenerationError;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReplayEntry {
    pub prompt_sha256: String,
    pub completion: String,
}

impl ReplayEntry {
    pub fn new(prompt: &str, completion: impl Into<String>) -> Self {
        ReplayEntry {
            prompt_sha256: prompt_hash(prompt),
            completion: completion.into(),
        }
    }
}

pub fn write_replay_file(path: impl AsRef<Path>, entries: &[ReplayEntry]) -> std::io::Result<()> {
    let mut out = Vec::new();
    for e in entries {
        writeln!(out, "{}", serde_json::to_string(e)?)?;
    }
    std::fs::write(path, out)
}

/// Serves completions from a replay file. Unknown prompts are `Missing`.
#[derive(Debug, Clone)]
pub struct ReplayBackend {
    id: String,
    completions: HashMap<String, String>,
}

impl ReplayBackend {
    pub fn from_entries(
        id: impl Into<String>,
        entries: impl IntoIterator<Item = ReplayEntry>,
    ) -> Result<Self, GenerationError> {
        let mut completions = HashMap::new();
        for e in entries {
            if let Some(prev) = completions.insert(e.prompt_sha256.clone(), e.completion.clone()) {
                if prev != e.completion {
                    return Err(GenerationError::Replay(format!(
                        "conflicting completions for prompt {}",
                        e.prompt_sha256
                    )));
                }
            }
        }
        Ok(ReplayBackend {
            id: id.into(),
            completions,
        })
    }

    pub fn open(path: impl AsRef<Path>, id: impl Into<String>) -> Result<Self, GenerationError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| GenerationError::Replay(format!("{}: {e}", path.display())))?;
        let mut entries = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let e: ReplayEntry = serde_json::from_str(line)
                .map_err(|err| GenerationError::Replay(format!("{}:{}: {err}", path.display(), i + 1)))?;
            entries.push(e);
        }
        ReplayBackend::from_entries(id, entries)
    }

    pub fn len(&self) -> usize {
        self.completions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.completions.is_empty()
    }
}

impl GenerationBackend for ReplayBackend {
    fn backend_id(&self) -> &str {
        &self.id
    }

    fn capabilities(&self) -> Capabilities {
        Capabilities {
            fine_tunable: false,
            max_context: usize::MAX,
        }
    }

    fn complete(&self, request: &CompletionRequest) -> Result<String, BackendError> {
        let hash = prompt_hash(&request.prompt);
        self.completions
            .get(&hash)
            .cloned()
            .ok_or(BackendError::Missing(hash))
    }
}

/// Wraps a live backend and appends every completion it returns to a replay file.
pub struct RecordingBackend<B> {
    inner: B,
    path: PathBuf,
    lock: Mutex<()>,
}

impl<B: GenerationBackend> RecordingBackend<B> {
    pub fn new(inner: B, path: impl Into<PathBuf>) -> Self {
        RecordingBackend {
            inner,
            path: path.into(),
            lock: Mutex::new(()),
        }
    }

    pub fn into_inner(self) -> B {
        self.inner
    }
}

impl<B: GenerationBackend> GenerationBackend for RecordingBackend<B> {
    fn backend_id(&self) -> &str {
        self.inner.backend_id()
    }

    fn capabilities(&self) -> Capabilities {
        self.inner.capabilities()
    }

    fn complete(&self, request: &CompletionRequest) -> Result<String, BackendError> {
        let completion = self.inner.complete(request)?;
        let line = serde_json::to_string(&ReplayEntry::new(&request.prompt, completion.clone()))
            .expect("entry serializes");
        let _guard = self.lock.lock().expect("recorder lock");
        let mut f = std::fs::OpenOptions::new()
            .create(true)
            .append(true)
            .open(&self.path)
            .map_err(|e| BackendError::Transport(format!("recording completion: {e}")))?;
        writeln!(f, "{line}").map_err(|e| BackendError::Transport(format!("recording completion: {e}")))?;
        Ok(completion)
    }

    fn fine_tune(
        &mut self,
        pairs: &[TrainingPair],
        hparams: &FineTuneHparams,
    ) -> Result<String, BackendError> {
        self.inner.fine_tune(pairs, hparams)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generation::backend::EchoBackend;

    fn req(prompt: &str) -> CompletionRequest {
        CompletionRequest {
            prompt: prompt.into(),
            max_tokens: 16,
            temperature: 0.0,
            stop: vec![],
            seed: 0,
        }
    }

    #[test]
    fn records_then_replays() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("replay.jsonl");
        let rec = RecordingBackend::new(EchoBackend::new("mock"), &path);
        let live = rec.complete(&req("a maybe why? ###")).unwrap();
        let replay = ReplayBackend::open(&path, "replay").unwrap();
        assert_eq!(replay.complete(&req("a maybe why? ###")).unwrap(), live);
        assert!(matches!(
            replay.complete(&req("other")),
            Err(BackendError::Missing(_))
        ));
        assert!(!replay.capabilities().fine_tunable);
    }

    #[test]
    fn conflicting_entries_rejected() {
        let entries = vec![ReplayEntry::new("p", "a"), ReplayEntry::new("p", "b")];
        assert!(ReplayBackend::from_entries("r", entries).is_err());
    }
}
