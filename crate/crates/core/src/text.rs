//! Whitespace + punctuation tokenizer shared by BLEU, the lexical scorer and the
//! perturbation probes.
//!
//! A token is either a *word* (a maximal run of alphanumeric characters, with
//! apostrophes allowed after the first character) or a single punctuation
//! character. Whitespace separates tokens and is never part of one. Tokens carry
//! byte spans into the source so callers can rewrite words while leaving every
//! other byte untouched.

use std::ops::Range;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TokenKind {
    Word,
    Punct,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Token<'a> {
    pub text: &'a str,
    pub span: Range<usize>,
    pub kind: TokenKind,
}

fn is_word_char(c: char) -> bool {
    c.is_alphanumeric()
}

pub fn tokenize(text: &str) -> Vec<Token<'_>> {
    let mut out = Vec::new();
    let mut chars = text.char_indices().peekable();
    while let Some((start, c)) = chars.next() {
        if c.is_whitespace() {
            continue;
        }
        if is_word_char(c) {
            let mut end = start + c.len_utf8();
            while let Some(&(i, n)) = chars.peek() {
                if is_word_char(n) || n == '\'' {
                    end = i + n.len_utf8();
                    chars.next();
                } else {
                    break;
                }
            }
            out.push(Token {
                text: &text[start..end],
                span: start..end,
                kind: TokenKind::Word,
            });
        } else {
            let end = start + c.len_utf8();
            out.push(Token {
                text: &text[start..end],
                span: start..end,
                kind: TokenKind::Punct,
            });
        }
    }
    out
}

/// Token strings only.
pub fn token_strings(text: &str) -> Vec<&str> {
    tokenize(text).into_iter().map(|t| t.text).collect()
}

/// Case-insensitive substring test used for cue rules.
pub fn contains_ci(haystack: &str, needle: &str) -> bool {
    if needle.is_empty() {
        return true;
    }
    haystack.to_lowercase().contains(&needle.to_lowercase())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn splits_punctuation() {
        assert_eq!(
            token_strings("The man is smiling, not frowning."),
            vec!["The", "man", "is", "smiling", ",", "not", "frowning", "."]
        );
    }

    #[test]
    fn spans_point_into_source() {
        let s = "a  b,c";
        for t in tokenize(s) {
            assert_eq!(&s[t.span.clone()], t.text);
        }
    }

    #[test]
    fn apostrophes_stay_inside_words() {
        assert_eq!(token_strings("don't 'x"), vec!["don't", "'", "x"]);
    }

    #[test]
    fn cue_match_ignores_case() {
        assert!(contains_ci("We do NOT KNOW whether", "not know"));
        assert!(!contains_ci("we know", "not know"));
    }
}
