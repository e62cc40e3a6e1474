//! Sentence-level BLEU-4 with additive smoothing of zero n-gram matches.
//!
//! Uniform weights over 1- to 4-gram modified precisions, the closest-reference
//! brevity penalty, and smoothing "method 1" of Chen and Cherry: a precision whose
//! clipped match count is zero becomes `ε / total` with `ε = 0.1` (`total` is at
//! least 1). When no unigram matches at all the score is 0. Texts are split by
//! [`crate::text::tokenize`], case preserved.

use std::collections::HashMap;

use crate::text::token_strings;

pub const EPSILON: f64 = 0.1;

fn ngram_counts<'t, 'a>(tokens: &'t [&'a str], n: usize) -> HashMap<&'t [&'a str], usize> {
    let mut counts = HashMap::new();
    for w in tokens.windows(n) {
        *counts.entry(w).or_insert(0) += 1;
    }
    counts
}

/// `(clipped matches, total hypothesis n-grams)` for order `n`.
fn modified_precision(hyp: &[&str], reference: &[&str], n: usize) -> (usize, usize) {
    let h = ngram_counts(hyp, n);
    let r = ngram_counts(reference, n);
    let matches = h
        .iter()
        .map(|(g, &c)| c.min(r.get(g).copied().unwrap_or(0)))
        .sum();
    (matches, hyp.len().saturating_sub(n - 1))
}

/// BLEU-4 of pre-tokenized text.
pub fn bleu4_tokens(hyp: &[&str], reference: &[&str]) -> f64 {
    if hyp.is_empty() {
        return 0.0;
    }
    let mut log_sum = 0.0;
    for n in 1..=4 {
        let (m, total) = modified_precision(hyp, reference, n);
        if n == 1 && m == 0 {
            return 0.0;
        }
        let denom = total.max(1) as f64;
        let p = if m == 0 { EPSILON / denom } else { m as f64 / denom };
        log_sum += 0.25 * p.ln();
    }
    let (c, r) = (hyp.len() as f64, reference.len() as f64);
    let bp = if c > r { 1.0 } else { (1.0 - r / c).exp() };
    bp * log_sum.exp()
}

/// BLEU-4 of `hypothesis` against one `reference`. Empty hypotheses score 0.
pub fn bleu4_smoothed(hypothesis: &str, reference: &str) -> f64 {
    let hyp = token_strings(hypothesis);
    if hyp.is_empty() {
        log::warn!("BLEU of an empty hypothesis is 0");
        return 0.0;
    }
    bleu4_tokens(&hyp, &token_strings(reference))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Values from NLTK 3.10 `sentence_bleu` with `SmoothingFunction().method1`.
    const REFERENCE: &[(&str, &str, f64)] = &[
        (
            "not cat man . we do woman know a implies implies whether is do",
            "we a know dog woman man whether know not do we man woman",
            0.024022110864391537,
        ),
        (
            "who the man do woman is man whether a whether a",
            "cat do woman because woman whether a man . we know",
            0.059609942732681,
        ),
        (
            ". not woman whether man know",
            "dog not we man we runs whether not , we park is",
            0.01976560930094397,
        ),
        ("who do park do , park we", "know", 0.0),
        (
            "implies",
            "park a park because man , because implies",
            0.00016215809237314185,
        ),
        (
            ". woman is",
            "know park woman the we runs not the the",
            0.015377056977980369,
        ),
        (
            "the whether . the dog",
            "do . runs is park the is because",
            0.035065941041239286,
        ),
        ("alpha beta gamma delta", "one two three four five", 0.0),
        (
            "we do not know whether",
            "we do not know whether the engineer expected the worker .",
            0.301194211912202,
        ),
        (
            "Supposedly suggests the engineer expected the worker happened.",
            "Supposedly suggests an uncertainty, so we do not know whether the engineer expected the worker.",
            0.21820657080024689,
        ),
    ];

    #[test]
    fn agrees_with_reference_values() {
        for &(h, r, expected) in REFERENCE {
            let got = bleu4_smoothed(h, r);
            assert!(
                (got - expected).abs() < 1e-12,
                "{h:?} vs {r:?}: {got} != {expected}"
            );
        }
    }

    #[test]
    fn identical_is_one_and_prefix_is_penalized() {
        assert_eq!(
            bleu4_smoothed("the cat sat on the mat", "the cat sat on the mat"),
            1.0
        );
        let half = bleu4_smoothed(
            "we do not know whether",
            "we do not know whether the engineer expected the worker .",
        );
        assert!(half > 0.0 && half < 1.0);
        assert_eq!(bleu4_smoothed("", "x"), 0.0);
    }

    proptest! {
        #[test]
        fn bounded(h in prop::collection::vec("[a-d]{1,2}", 0..12), r in prop::collection::vec("[a-d]{1,2}", 1..12)) {
            let v = bleu4_smoothed(&h.join(" "), &r.join(" "));
            prop_assert!((0.0..=1.0).contains(&v));
        }

        #[test]
        fn self_similarity(words in prop::collection::vec("[a-z]{1,6}", 4..20)) {
            let s = words.join(" ");
            prop_assert!((bleu4_smoothed(&s, &s) - 1.0).abs() < 1e-12);
        }
    }
}
