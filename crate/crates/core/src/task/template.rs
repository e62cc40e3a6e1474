//! Slot templates for classification patterns and generation prompts.
//!
//! Grammar:
//!
//! * `{premise}`, `{hypothesis}`, `{mask}`, `{expl}`, `{answer}` are slots.
//! * `[[ ... ]]` is an optional group. It is rendered only when every slot inside it
//!   has a value; otherwise the whole group, including its literal text, is dropped.
//!   Groups do not nest.
//! * Everything else is literal text and is reproduced byte for byte.
//!
//! Which slots are legal, and which must appear, depends on the template's use and
//! is checked by [`Template::validate_pattern`] / [`Template::validate_prompt`].

use std::fmt;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Slot {
    Premise,
    Hypothesis,
    Mask,
    Expl,
    Answer,
}

impl Slot {
    fn parse(name: &str) -> Option<Slot> {
        Some(match name {
            "premise" => Slot::Premise,
            "hypothesis" => Slot::Hypothesis,
            "mask" => Slot::Mask,
            "expl" => Slot::Expl,
            "answer" => Slot::Answer,
            _ => return None,
        })
    }

    pub fn name(self) -> &'static str {
        match self {
            Slot::Premise => "premise",
            Slot::Hypothesis => "hypothesis",
            Slot::Mask => "mask",
            Slot::Expl => "expl",
            Slot::Answer => "answer",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Piece {
    Literal(String),
    Slot(Slot),
    Optional(Vec<Piece>),
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum TemplateError {
    #[error("unknown slot `{{{0}}}`")]
    UnknownSlot(String),
    #[error("unterminated slot starting at byte {0}")]
    UnterminatedSlot(usize),
    #[error("unterminated optional group starting at byte {0}")]
    UnterminatedGroup(usize),
    #[error("optional groups cannot nest (byte {0})")]
    NestedGroup(usize),
    #[error("stray `]]` at byte {0}")]
    StrayGroupClose(usize),
    #[error("slot `{{{slot}}}` must appear exactly {expected}, found {found}")]
    SlotCount {
        slot: &'static str,
        expected: &'static str,
        found: usize,
    },
    #[error("slot `{{{0}}}` is not allowed in this template")]
    SlotNotAllowed(&'static str),
    #[error("slot `{{{0}}}` cannot be optional")]
    MustBeMandatory(&'static str),
    #[error("optional group must contain a slot")]
    EmptyGroup,
}

/// A parsed template that remembers its source text.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Template {
    source: String,
    pieces: Vec<Piece>,
}

impl Template {
    pub fn parse(source: &str) -> Result<Template, TemplateError> {
        let mut stack: Vec<Piece> = Vec::new();
        let mut group: Option<(usize, Vec<Piece>)> = None;
        let mut literal = String::new();
        let bytes = source.as_bytes();
        let mut i = 0;

        fn flush(literal: &mut String, target: &mut Vec<Piece>) {
            if !literal.is_empty() {
                target.push(Piece::Literal(std::mem::take(literal)));
            }
        }

        while i < bytes.len() {
            let rest = &source[i..];
            if rest.starts_with("[[") {
                if group.is_some() {
                    return Err(TemplateError::NestedGroup(i));
                }
                flush(&mut literal, &mut stack);
                group = Some((i, Vec::new()));
                i += 2;
            } else if rest.starts_with("]]") {
                let Some((_, mut pieces)) = group.take() else {
                    return Err(TemplateError::StrayGroupClose(i));
                };
                flush(&mut literal, &mut pieces);
                if !pieces.iter().any(|p| matches!(p, Piece::Slot(_))) {
                    return Err(TemplateError::EmptyGroup);
                }
                stack.push(Piece::Optional(pieces));
                i += 2;
            } else if rest.starts_with('{') {
                let close = rest.find('}').ok_or(TemplateError::UnterminatedSlot(i))?;
                let name = &rest[1..close];
                let slot = Slot::parse(name).ok_or_else(|| TemplateError::UnknownSlot(name.into()))?;
                match group.as_mut() {
                    Some((_, pieces)) => {
                        flush(&mut literal, pieces);
                        pieces.push(Piece::Slot(slot));
                    }
                    None => {
                        flush(&mut literal, &mut stack);
                        stack.push(Piece::Slot(slot));
                    }
                }
                i += close + 1;
            } else {
                let c = rest.chars().next().expect("non-empty remainder");
                literal.push(c);
                i += c.len_utf8();
            }
        }
        if let Some((start, _)) = group {
            return Err(TemplateError::UnterminatedGroup(start));
        }
        flush(&mut literal, &mut stack);
        Ok(Template {
            source: source.to_string(),
            pieces: stack,
        })
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    pub fn pieces(&self) -> &[Piece] {
        &self.pieces
    }

    /// `(mandatory, optional)` occurrence counts of `slot`.
    pub fn slot_counts(&self, slot: Slot) -> (usize, usize) {
        let mut mandatory = 0;
        let mut optional = 0;
        for piece in &self.pieces {
            match piece {
                Piece::Slot(s) if *s == slot => mandatory += 1,
                Piece::Optional(inner) => {
                    optional += inner
                        .iter()
                        .filter(|p| matches!(p, Piece::Slot(s) if *s == slot))
                        .count()
                }
                _ => {}
            }
        }
        (mandatory, optional)
    }

    pub fn has_slot(&self, slot: Slot) -> bool {
        let (m, o) = self.slot_counts(slot);
        m + o > 0
    }

    /// True when `slot` appears only inside optional groups.
    pub fn slot_is_optional(&self, slot: Slot) -> bool {
        let (m, o) = self.slot_counts(slot);
        m == 0 && o > 0
    }

    fn require_exactly_one(&self, slot: Slot) -> Result<(), TemplateError> {
        let (m, o) = self.slot_counts(slot);
        if o > 0 {
            return Err(TemplateError::MustBeMandatory(slot.name()));
        }
        if m != 1 {
            return Err(TemplateError::SlotCount {
                slot: slot.name(),
                expected: "once",
                found: m,
            });
        }
        Ok(())
    }

    fn at_most_one(&self, slot: Slot) -> Result<(), TemplateError> {
        let (m, o) = self.slot_counts(slot);
        if m + o > 1 {
            return Err(TemplateError::SlotCount {
                slot: slot.name(),
                expected: "at most once",
                found: m + o,
            });
        }
        Ok(())
    }

    /// Classification pattern: exactly one mandatory `{mask}`, `{premise}` and
    /// `{hypothesis}`; at most one `{expl}`; no `{answer}`.
    pub fn validate_pattern(&self) -> Result<(), TemplateError> {
        self.require_exactly_one(Slot::Mask)?;
        self.require_exactly_one(Slot::Premise)?;
        self.require_exactly_one(Slot::Hypothesis)?;
        self.at_most_one(Slot::Expl)?;
        if self.has_slot(Slot::Answer) {
            return Err(TemplateError::SlotNotAllowed("answer"));
        }
        Ok(())
    }

    /// Generation prompt: one `{premise}` and `{hypothesis}`; at most one `{answer}`;
    /// no `{mask}` or `{expl}`.
    pub fn validate_prompt(&self) -> Result<(), TemplateError> {
        self.require_exactly_one(Slot::Premise)?;
        self.require_exactly_one(Slot::Hypothesis)?;
        self.at_most_one(Slot::Answer)?;
        for slot in [Slot::Mask, Slot::Expl] {
            if self.has_slot(slot) {
                return Err(TemplateError::SlotNotAllowed(slot.name()));
            }
        }
        Ok(())
    }

    /// Render with `value(slot)` supplying slot text. Optional groups with any
    /// missing value are dropped. Returns `Err(slot)` when a mandatory slot has no
    /// value.
    pub fn render<F>(&self, mut value: F) -> Result<String, Slot>
    where
        F: FnMut(Slot) -> Option<String>,
    {
        let mut out = String::new();
        for piece in &self.pieces {
            match piece {
                Piece::Literal(s) => out.push_str(s),
                Piece::Slot(slot) => out.push_str(&value(*slot).ok_or(*slot)?),
                Piece::Optional(inner) => {
                    let mut buf = String::new();
                    let mut complete = true;
                    for p in inner {
                        match p {
                            Piece::Literal(s) => buf.push_str(s),
                            Piece::Slot(slot) => match value(*slot) {
                                Some(v) => buf.push_str(&v),
                                None => {
                                    complete = false;
                                    break;
                                }
                            },
                            Piece::Optional(_) => unreachable!("groups do not nest"),
                        }
                    }
                    if complete {
                        out.push_str(&buf);
                    }
                }
            }
        }
        Ok(out)
    }
}

impl fmt::Display for Template {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.source)
    }
}
