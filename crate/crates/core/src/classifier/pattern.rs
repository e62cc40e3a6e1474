//! Instantiating pattern templates into masked sequences.

use std::fmt;

use serde::{Deserialize, Serialize};

use super::ClassifierError;
use crate::task::{Example, PatternVerbalizerPair, Slot, TaskSpec, Template};

/// Rendered form of the mask slot.
pub const MASK: &str = "[mask]";

const SENTINEL: char = '\u{0}';

/// A token sequence with exactly one mask, stored as the text on either side.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MaskedSequence {
    pub left: String,
    pub right: String,
    /// The explanation was shortened to fit the scorer's length limit.
    #[serde(default)]
    pub truncated: bool,
}

impl MaskedSequence {
    /// Text with the mask rendered as `mask`.
    pub fn render_with(&self, mask: &str) -> String {
        format!("{}{mask}{}", self.left, self.right)
    }

    /// Text without the mask.
    pub fn context(&self) -> impl Iterator<Item = &str> {
        [self.left.as_str(), self.right.as_str()].into_iter()
    }
}

impl fmt::Display for MaskedSequence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}{MASK}{}", self.left, self.right)
    }
}

/// Length accounting supplied by a scorer.
pub trait LengthBudget {
    fn max_sequence_length(&self) -> usize;
    fn sequence_length(&self, seq: &MaskedSequence) -> usize;
}

fn quote(text: &str, quoted: bool) -> String {
    if quoted {
        format!("\"{text}\"")
    } else {
        text.to_string()
    }
}

fn render(
    template: &Template,
    example: &Example,
    quoted: bool,
    explanation: Option<&str>,
) -> Result<MaskedSequence, ClassifierError> {
    for text in [example.premise.as_str(), example.hypothesis.as_str()]
        .into_iter()
        .chain(explanation)
    {
        if text.contains(SENTINEL) {
            return Err(ClassifierError::Pattern(format!(
                "input for `{}` contains a NUL character",
                example.uid
            )));
        }
    }
    let text = template
        .render(|slot| match slot {
            Slot::Premise => Some(quote(&example.premise, quoted)),
            Slot::Hypothesis => Some(quote(&example.hypothesis, quoted)),
            Slot::Mask => Some(SENTINEL.to_string()),
            Slot::Expl => explanation.map(|e| quote(e, quoted)),
            Slot::Answer => None,
        })
        .map_err(|slot| {
            ClassifierError::Pattern(format!("pattern `{template}` requires `{{{}}}`", slot.name()))
        })?;
    let (left, right) = text
        .split_once(SENTINEL)
        .expect("validated patterns contain one mask");
    Ok(MaskedSequence {
        left: left.to_string(),
        right: right.to_string(),
        truncated: false,
    })
}

/// Pattern without explanation. An optional explanation clause is dropped.
pub fn apply_pattern(
    pvp: &PatternVerbalizerPair,
    example: &Example,
) -> Result<MaskedSequence, ClassifierError> {
    if pvp.has_explanation_slot() && !pvp.pattern.slot_is_optional(Slot::Expl) {
        return Err(ClassifierError::Pattern(format!(
            "pattern `{}` requires an explanation",
            pvp.id
        )));
    }
    render(&pvp.pattern, example, pvp.quoted, None)
}

/// Explanation-aware pattern. When `budget` is given and the sequence is too long,
/// words are dropped from the end of the explanation until it fits; premise and
/// hypothesis are never shortened.
pub fn apply_explanation_pattern(
    pvp: &PatternVerbalizerPair,
    example: &Example,
    explanation: &str,
    budget: Option<&dyn LengthBudget>,
) -> Result<MaskedSequence, ClassifierError> {
    if !pvp.has_explanation_slot() {
        return Err(ClassifierError::Pattern(format!(
            "pattern `{}` has no explanation slot",
            pvp.id
        )));
    }
    if explanation.trim().is_empty() {
        return Err(ClassifierError::Pattern(format!(
            "empty explanation for `{}`",
            example.uid
        )));
    }
    let full = render(&pvp.pattern, example, pvp.quoted, Some(explanation))?;
    let Some(budget) = budget else {
        return Ok(full);
    };
    let limit = budget.max_sequence_length();
    if budget.sequence_length(&full) <= limit {
        return Ok(full);
    }
    // Byte offsets where each whitespace-separated word of the explanation ends.
    let ends: Vec<usize> = explanation
        .char_indices()
        .zip(explanation.chars().skip(1).map(Some).chain([None]))
        .filter(|((_, c), next)| !c.is_whitespace() && next.is_none_or(|n| n.is_whitespace()))
        .map(|((i, c), _)| i + c.len_utf8())
        .collect();
    let fits = |n: usize| -> Result<Option<MaskedSequence>, ClassifierError> {
        let prefix = if n == 0 { "" } else { &explanation[..ends[n - 1]] };
        let seq = render(&pvp.pattern, example, pvp.quoted, Some(prefix))?;
        Ok((budget.sequence_length(&seq) <= limit).then_some(seq))
    };
    // Longest word prefix that fits, by binary search over the word count.
    let (mut lo, mut hi) = (0usize, ends.len());
    let mut best = fits(0)?;
    while lo < hi {
        let mid = (lo + hi).div_ceil(2);
        match fits(mid)? {
            Some(seq) => {
                best = Some(seq);
                lo = mid;
            }
            None => hi = mid - 1,
        }
    }
    let mut seq = match best {
        Some(seq) => seq,
        None => {
            return Err(ClassifierError::Pattern(format!(
                "premise and hypothesis of `{}` alone exceed {limit} tokens",
                example.uid
            )))
        }
    };
    log::warn!(
        "explanation for `{}` truncated to {lo} of {} words to fit {limit} tokens",
        example.uid,
        ends.len()
    );
    seq.truncated = true;
    Ok(seq)
}

/// Pattern-free input for the plain classifier baseline: premise, hypothesis and a
/// trailing mask, with label names as verbalizer tokens.
pub fn plain_pvp(task: &TaskSpec) -> PatternVerbalizerPair {
    PatternVerbalizerPair {
        id: "plain".into(),
        pattern: Template::parse("{premise} {hypothesis} {mask}").expect("static template"),
        verbalizer: task.labels.iter().map(|l| l.name.clone()).collect(),
        quoted: false,
    }
}
