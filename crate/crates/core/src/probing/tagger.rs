//! Part-of-speech taggers used to pick replaceable words.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use crate::text::{Token, TokenKind};

/// Assigns one Penn-style tag per token.
pub trait PosTagger: Send + Sync {
    fn tag(&self, tokens: &[Token<'_>]) -> Vec<String>;
}

const CLOSED: &[(&str, &[&str])] = &[
    (
        "DT",
        &[
            "the", "a", "an", "this", "that", "these", "those", "every", "each", "some", "any", "no",
            "another", "all", "both",
        ],
    ),
    (
        "IN",
        &[
            "of", "in", "on", "at", "by", "for", "with", "about", "as", "into", "from", "than", "because",
            "whether", "if", "since", "while", "after", "before", "under", "over", "near", "without",
            "through", "during", "like", "behind", "around",
        ],
    ),
    ("CC", &["and", "or", "but", "nor", "yet", "so"]),
    ("TO", &["to"]),
    (
        "PRP",
        &[
            "i",
            "you",
            "he",
            "she",
            "it",
            "we",
            "they",
            "me",
            "him",
            "us",
            "them",
            "someone",
            "something",
            "one",
        ],
    ),
    ("PRP$", &["my", "your", "his", "her", "its", "our", "their"]),
    ("WP", &["who", "what", "whom", "which", "whose"]),
    (
        "RB",
        &[
            "not", "n't", "very", "also", "just", "only", "never", "always", "there", "here", "too", "now",
            "then", "still", "even", "already", "either", "neither",
        ],
    ),
    (
        "MD",
        &[
            "can", "could", "will", "would", "should", "may", "might", "must", "shall", "cannot",
        ],
    ),
    (
        "VBZ",
        &[
            "is",
            "has",
            "does",
            "implies",
            "suggests",
            "means",
            "says",
            "shows",
            "knows",
            "seems",
            "indicates",
            "states",
            "makes",
            "gets",
            "goes",
        ],
    ),
    ("VBP", &["are", "am", "have", "do"]),
    (
        "VBD",
        &[
            "was", "were", "had", "did", "knew", "said", "saw", "made", "went", "got", "thought",
        ],
    ),
    (
        "VBN",
        &["been", "known", "done", "seen", "gone", "given", "taken"],
    ),
    (
        "VB",
        &[
            "be", "know", "imply", "suggest", "mean", "say", "show", "think", "see", "seem", "make", "get",
            "go", "tell", "indicate",
        ],
    ),
    (
        "JJ",
        &[
            "same",
            "different",
            "other",
            "true",
            "false",
            "possible",
            "impossible",
            "unclear",
            "certain",
            "uncertain",
            "such",
        ],
    ),
];

/// Closed-class lexicon plus suffix rules; deterministic and dependency-free.
///
/// Unknown words: digits → CD, `-ing` → VBG, `-ly` → RB, `-ed` → VBD,
/// capitalized but not sentence-initial → NNP, `-s` → NNS, otherwise NN.
/// Punctuation is tagged with the character itself.
#[derive(Debug, Clone)]
pub struct RuleTagger {
    lexicon: HashMap<&'static str, &'static str>,
}

impl Default for RuleTagger {
    fn default() -> Self {
        let lexicon = CLOSED
            .iter()
            .flat_map(|(tag, words)| words.iter().map(move |w| (*w, *tag)))
            .collect();
        RuleTagger { lexicon }
    }
}

impl RuleTagger {
    pub fn tag_word(&self, word: &str, sentence_initial: bool) -> String {
        let lower = word.to_lowercase();
        if let Some(tag) = self.lexicon.get(lower.as_str()) {
            return (*tag).to_string();
        }
        let tag = if word.chars().all(|c| c.is_ascii_digit()) {
            "CD"
        } else if lower.len() > 4 && lower.ends_with("ing") {
            "VBG"
        } else if lower.len() > 3 && lower.ends_with("ly") {
            "RB"
        } else if lower.len() > 3 && lower.ends_with("ed") {
            "VBD"
        } else if !sentence_initial && word.chars().next().is_some_and(char::is_uppercase) {
            "NNP"
        } else if lower.len() > 3 && lower.ends_with('s') && !lower.ends_with("ss") {
            "NNS"
        } else {
            "NN"
        };
        tag.to_string()
    }
}

fn tag_with(tokens: &[Token<'_>], mut word: impl FnMut(&str, bool) -> String) -> Vec<String> {
    let mut initial = true;
    tokens
        .iter()
        .map(|t| match t.kind {
            TokenKind::Punct => {
                initial = matches!(t.text, "." | "!" | "?");
                t.text.to_string()
            }
            TokenKind::Word => {
                let tag = word(t.text, initial);
                initial = false;
                tag
            }
        })
        .collect()
}

impl PosTagger for RuleTagger {
    fn tag(&self, tokens: &[Token<'_>]) -> Vec<String> {
        tag_with(tokens, |w, initial| self.tag_word(w, initial))
    }
}

/// Adapter for an external tagger's lexicon dump: `word<TAB>TAG` per line.
/// Words missing from the file fall back to [`RuleTagger`].
#[derive(Debug, Clone, Default)]
pub struct LexiconTagger {
    entries: BTreeMap<String, String>,
    fallback: RuleTagger,
}

impl LexiconTagger {
    pub fn from_entries(entries: impl IntoIterator<Item = (String, String)>) -> Self {
        LexiconTagger {
            entries: entries.into_iter().map(|(w, t)| (w.to_lowercase(), t)).collect(),
            fallback: RuleTagger::default(),
        }
    }

    pub fn parse(text: &str) -> Result<Self, String> {
        let mut entries = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim_end();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (w, t) = line
                .split_once('\t')
                .ok_or_else(|| format!("line {}: expected `word<TAB>TAG`", i + 1))?;
            entries.push((w.to_string(), t.trim().to_string()));
        }
        Ok(LexiconTagger::from_entries(entries))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, String> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        LexiconTagger::parse(&text).map_err(|e| format!("{}: {e}", path.display()))
    }
}

impl PosTagger for LexiconTagger {
    fn tag(&self, tokens: &[Token<'_>]) -> Vec<String> {
        tag_with(tokens, |w, initial| {
            self.entries
                .get(&w.to_lowercase())
                .cloned()
                .unwrap_or_else(|| self.fallback.tag_word(w, initial))
        })
    }
}
