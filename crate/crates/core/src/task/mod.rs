//! Task vocabulary: labels, pattern-verbalizer pairs, cue rules, generation prompt
//! shape, and the example/explanation data model shared by every other module.
//!
//! A task is declared in a TOML file (see `docs/task-format.md`). The order of
//! `labels` in that file fixes label ids and therefore the row and column order of
//! every score matrix and cached artifact.

pub mod template;

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

pub use template::{Slot, Template, TemplateError};

#[derive(Debug, thiserror::Error)]
pub enum TaskError {
    #[error("reading task spec {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("task spec schema error: {0}")]
    Schema(String),
    #[error("task spec field `{field}`: {message}")]
    Invalid { field: String, message: String },
}

fn invalid(field: impl Into<String>, message: impl Into<String>) -> TaskError {
    TaskError::Invalid {
        field: field.into(),
        message: message.into(),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Label {
    pub id: usize,
    pub name: String,
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Example {
    pub uid: String,
    pub premise: String,
    pub hypothesis: String,
    pub gold_label: Label,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gold_explanation: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    ExplainThenPredict,
    PredictThenExplain,
    Gold,
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Scheme::ExplainThenPredict => "explain_then_predict",
            Scheme::PredictThenExplain => "predict_then_explain",
            Scheme::Gold => "gold",
        })
    }
}

/// Backend id used for records built from human (gold) explanations.
pub const GOLD_BACKEND: &str = "gold";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExplanationRecord {
    pub example_uid: String,
    pub text: String,
    #[serde(default)]
    pub conditioning_label: Option<Label>,
    pub scheme: Scheme,
    pub backend_id: String,
    pub seed: u64,
}

impl ExplanationRecord {
    /// Record wrapping the human explanation of `example`, conditioned on its gold label.
    pub fn gold(example: &Example) -> Option<ExplanationRecord> {
        let text = example.gold_explanation.as_ref()?.trim();
        if text.is_empty() {
            return None;
        }
        Some(ExplanationRecord {
            example_uid: example.uid.clone(),
            text: text.to_string(),
            conditioning_label: Some(example.gold_label.clone()),
            scheme: Scheme::Gold,
            backend_id: GOLD_BACKEND.to_string(),
            seed: 0,
        })
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.text.trim().is_empty() {
            return Err(format!("explanation for `{}` is empty", self.example_uid));
        }
        match (self.scheme, &self.conditioning_label) {
            (Scheme::PredictThenExplain, None) => Err(format!(
                "predict_then_explain record for `{}` lacks a conditioning label",
                self.example_uid
            )),
            (Scheme::ExplainThenPredict, Some(_)) => Err(format!(
                "explain_then_predict record for `{}` carries a conditioning label",
                self.example_uid
            )),
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PatternVerbalizerPair {
    pub id: String,
    pub pattern: Template,
    /// Verbalizer token per label id.
    pub verbalizer: Vec<String>,
    pub quoted: bool,
}

impl PatternVerbalizerPair {
    pub fn has_explanation_slot(&self) -> bool {
        self.pattern.has_slot(Slot::Expl)
    }

    pub fn token(&self, label: usize) -> &str {
        &self.verbalizer[label]
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TaskSpec {
    pub name: String,
    pub labels: Vec<Label>,
    pub pvps: Vec<PatternVerbalizerPair>,
    pub generation_prompt_template: Template,
    /// Cue substrings per label id; may be empty for a label.
    pub cue_rules: Vec<Vec<String>>,
    /// Answer word per label id used in generation prompts.
    pub question_word: Vec<Option<String>>,
}

impl TaskSpec {
    pub fn num_labels(&self) -> usize {
        self.labels.len()
    }

    pub fn label(&self, id: usize) -> Option<&Label> {
        self.labels.get(id)
    }

    pub fn label_by_name(&self, name: &str) -> Option<&Label> {
        self.labels.iter().find(|l| l.name == name)
    }

    pub fn cues(&self, label: usize) -> &[String] {
        &self.cue_rules[label]
    }

    pub fn load(path: impl AsRef<Path>) -> Result<TaskSpec, TaskError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| TaskError::Io {
            path: path.display().to_string(),
            source,
        })?;
        TaskSpec::from_toml(&text)
    }

    pub fn from_toml(text: &str) -> Result<TaskSpec, TaskError> {
        let file: TaskSpecFile = toml::from_str(text).map_err(|e| TaskError::Schema(e.to_string()))?;
        TaskSpec::try_from(file)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(&TaskSpecFile::from(self)).expect("task spec serializes")
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), TaskError> {
        let path = path.as_ref();
        std::fs::write(path, self.to_toml()).map_err(|source| TaskError::Io {
            path: path.display().to_string(),
            source,
        })
    }
}

/// On-disk shape of a task spec.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TaskSpecFile {
    name: String,
    labels: Vec<String>,
    generation_prompt_template: String,
    #[serde(default)]
    question_word: BTreeMap<String, String>,
    #[serde(default)]
    cue_rules: BTreeMap<String, Vec<String>>,
    pvps: Vec<PvpFile>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PvpFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    id: Option<String>,
    pattern: String,
    #[serde(default)]
    quoted: bool,
    verbalizer: BTreeMap<String, String>,
}

impl TryFrom<TaskSpecFile> for TaskSpec {
    type Error = TaskError;

    fn try_from(file: TaskSpecFile) -> Result<TaskSpec, TaskError> {
        if file.name.trim().is_empty() {
            return Err(invalid("name", "must be non-empty"));
        }
        if file.labels.len() < 2 {
            return Err(invalid("labels", "at least two labels are required"));
        }
        let mut seen = HashSet::new();
        for name in &file.labels {
            if name.trim().is_empty() {
                return Err(invalid("labels", "label names must be non-empty"));
            }
            if !seen.insert(name.as_str()) {
                return Err(invalid("labels", format!("duplicate label `{name}`")));
            }
        }
        let labels: Vec<Label> = file
            .labels
            .iter()
            .enumerate()
            .map(|(id, name)| Label {
                id,
                name: name.clone(),
            })
            .collect();
        let index_of = |field: &str, name: &str| -> Result<usize, TaskError> {
            labels
                .iter()
                .position(|l| l.name == name)
                .ok_or_else(|| invalid(field, format!("unknown label `{name}`")))
        };

        let generation_prompt_template = Template::parse(&file.generation_prompt_template)
            .and_then(|t| t.validate_prompt().map(|_| t))
            .map_err(|e| invalid("generation_prompt_template", e.to_string()))?;

        let mut question_word = vec![None; labels.len()];
        for (name, word) in &file.question_word {
            let id = index_of("question_word", name)?;
            question_word[id] = Some(word.clone());
        }

        let mut cue_rules = vec![Vec::new(); labels.len()];
        for (name, cues) in &file.cue_rules {
            let id = index_of("cue_rules", name)?;
            if cues.iter().any(|c| c.trim().is_empty()) {
                return Err(invalid(
                    format!("cue_rules.{name}"),
                    "cue substrings must be non-empty",
                ));
            }
            cue_rules[id] = cues.clone();
        }

        if file.pvps.is_empty() {
            return Err(invalid(
                "pvps",
                "at least one pattern-verbalizer pair is required",
            ));
        }
        let mut pvps = Vec::with_capacity(file.pvps.len());
        let mut ids = HashSet::new();
        for (i, raw) in file.pvps.iter().enumerate() {
            let field = format!("pvps[{i}]");
            let pattern = Template::parse(&raw.pattern)
                .and_then(|t| t.validate_pattern().map(|_| t))
                .map_err(|e| invalid(format!("{field}.pattern"), e.to_string()))?;
            let mut verbalizer = vec![None; labels.len()];
            for (name, token) in &raw.verbalizer {
                let id = index_of(&format!("{field}.verbalizer"), name)?;
                if token.is_empty() || token.chars().any(char::is_whitespace) {
                    return Err(invalid(
                        format!("{field}.verbalizer.{name}"),
                        format!("verbalizer token `{token}` must be a single non-empty word"),
                    ));
                }
                verbalizer[id] = Some(token.clone());
            }
            let verbalizer: Vec<String> = verbalizer
                .into_iter()
                .enumerate()
                .map(|(id, t)| {
                    t.ok_or_else(|| {
                        invalid(
                            format!("{field}.verbalizer"),
                            format!("no token for label `{}`", labels[id].name),
                        )
                    })
                })
                .collect::<Result<_, _>>()?;
            let mut tokens = HashSet::new();
            for token in &verbalizer {
                if !tokens.insert(token.as_str()) {
                    return Err(invalid(
                        format!("{field}.verbalizer"),
                        format!("token `{token}` is assigned to more than one label"),
                    ));
                }
            }
            let id = raw.id.clone().unwrap_or_else(|| format!("pvp{i}"));
            if !ids.insert(id.clone()) {
                return Err(invalid(format!("{field}.id"), format!("duplicate id `{id}`")));
            }
            pvps.push(PatternVerbalizerPair {
                id,
                pattern,
                verbalizer,
                quoted: raw.quoted,
            });
        }

        Ok(TaskSpec {
            name: file.name,
            labels,
            pvps,
            generation_prompt_template,
            cue_rules,
            question_word,
        })
    }
}

impl From<&TaskSpec> for TaskSpecFile {
    fn from(spec: &TaskSpec) -> TaskSpecFile {
        let name_of = |id: usize| spec.labels[id].name.clone();
        TaskSpecFile {
            name: spec.name.clone(),
            labels: spec.labels.iter().map(|l| l.name.clone()).collect(),
            generation_prompt_template: spec.generation_prompt_template.source().to_string(),
            question_word: spec
                .question_word
                .iter()
                .enumerate()
                .filter_map(|(id, w)| w.clone().map(|w| (name_of(id), w)))
                .collect(),
            cue_rules: spec
                .cue_rules
                .iter()
                .enumerate()
                .filter(|(_, c)| !c.is_empty())
                .map(|(id, c)| (name_of(id), c.clone()))
                .collect(),
            pvps: spec
                .pvps
                .iter()
                .map(|p| PvpFile {
                    id: Some(p.id.clone()),
                    pattern: p.pattern.source().to_string(),
                    quoted: p.quoted,
                    verbalizer: p
                        .verbalizer
                        .iter()
                        .enumerate()
                        .map(|(id, t)| (name_of(id), t.clone()))
                        .collect(),
                })
                .collect(),
        }
    }
}


/// Task specs shipped with the crate.
pub mod builtin {
    pub const ESNLI: &str = include_str!("../../../../tasks/esnli.toml");
    pub const EHANS: &str = include_str!("../../../../tasks/ehans.toml");

    /// Looks up a shipped spec by name (`esnli` or `ehans`).
    pub fn by_name(name: &str) -> Option<&'static str> {
        match name.to_ascii_lowercase().replace(['-', '_'], "").as_str() {
            "esnli" => Some(ESNLI),
            "ehans" => Some(EHANS),
            _ => None,
        }
    }
}
