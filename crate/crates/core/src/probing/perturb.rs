//! Test-time explanation perturbations.

use std::collections::BTreeMap;

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::tagger::PosTagger;
use super::ProbeError;
use crate::data::{CacheKey, ExplanationCache};
use crate::task::{ExplanationRecord, Label};
use crate::text::{tokenize, TokenKind};

pub const DEFAULT_POS_TAGS: [&str; 4] = ["NN", "NNS", "NNP", "VBG"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PerturbationKind {
    #[serde(rename = "other-item", alias = "other_item")]
    OtherItem,
    #[serde(rename = "nv-replace", alias = "noun_verb_replace")]
    NounVerbReplace,
}

impl PerturbationKind {
    pub fn as_str(self) -> &'static str {
        match self {
            PerturbationKind::OtherItem => "other-item",
            PerturbationKind::NounVerbReplace => "nv-replace",
        }
    }
}

impl std::fmt::Display for PerturbationKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for PerturbationKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "other-item" | "other_item" => Ok(PerturbationKind::OtherItem),
            "nv-replace" | "noun_verb_replace" => Ok(PerturbationKind::NounVerbReplace),
            _ => Err(format!(
                "unknown perturbation `{s}` (expected other-item or nv-replace)"
            )),
        }
    }
}

/// Where replacement words come from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PoolSource {
    /// Tagged words of the training split's explanations.
    DatasetVocab,
    /// Explicit words per tag.
    FixedList(BTreeMap<String, Vec<String>>),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PerturbationSpec {
    pub kind: PerturbationKind,
    pub seed: u64,
    pub pos_tags: Vec<String>,
    pub replacement_pool_source: PoolSource,
}

impl PerturbationSpec {
    pub fn new(kind: PerturbationKind, seed: u64) -> Self {
        PerturbationSpec {
            kind,
            seed,
            pos_tags: DEFAULT_POS_TAGS.iter().map(|t| t.to_string()).collect(),
            replacement_pool_source: PoolSource::DatasetVocab,
        }
    }
}

/// Replacement words bucketed by tag, sorted and deduplicated.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReplacementPool {
    pub words: BTreeMap<String, Vec<String>>,
}

impl ReplacementPool {
    /// Collects every word of `texts` whose tag is in `tags`.
    pub fn from_texts<'a>(
        texts: impl IntoIterator<Item = &'a str>,
        tagger: &dyn PosTagger,
        tags: &[String],
    ) -> Self {
        let mut words: BTreeMap<String, Vec<String>> = BTreeMap::new();
        for text in texts {
            let tokens = tokenize(text);
            for (tok, tag) in tokens.iter().zip(tagger.tag(&tokens)) {
                if tok.kind == TokenKind::Word && tags.contains(&tag) {
                    words.entry(tag).or_default().push(tok.text.to_string());
                }
            }
        }
        ReplacementPool::from_map(words)
    }

    pub fn from_map(mut words: BTreeMap<String, Vec<String>>) -> Self {
        for v in words.values_mut() {
            v.sort();
            v.dedup();
        }
        words.retain(|_, v| !v.is_empty());
        ReplacementPool { words }
    }

    pub fn get(&self, tag: &str) -> Option<&[String]> {
        self.words.get(tag).map(Vec::as_slice)
    }
}

/// Stream seeded by the perturbation seed and the record's cache key, so each
/// record's draws do not depend on processing order.
fn record_rng(seed: u64, rec: &ExplanationRecord) -> ChaCha8Rng {
    let digest = Sha256::digest(format!("{seed}\u{0}{}", CacheKey::of(rec)).as_bytes());
    let mut bytes = [0u8; 32];
    bytes.copy_from_slice(&digest);
    ChaCha8Rng::from_seed(bytes)
}

/// Replaces every word tagged with one of `tags` by a word drawn uniformly (with
/// replacement) from the pool bucket of the same tag. All other bytes are kept.
pub fn perturb_noun_verb(
    expl: &ExplanationRecord,
    tagger: &dyn PosTagger,
    pool: &ReplacementPool,
    tags: &[String],
    seed: u64,
) -> Result<ExplanationRecord, ProbeError> {
    let tokens = tokenize(&expl.text);
    let token_tags = tagger.tag(&tokens);
    if token_tags.len() != tokens.len() {
        return Err(ProbeError::Tagger(format!(
            "{} tags for {} tokens",
            token_tags.len(),
            tokens.len()
        )));
    }
    let mut rng = record_rng(seed, expl);
    let mut out = String::with_capacity(expl.text.len());
    let mut last = 0;
    for (tok, tag) in tokens.iter().zip(&token_tags) {
        if tok.kind != TokenKind::Word || !tags.contains(tag) {
            continue;
        }
        let choices = pool.get(tag).ok_or_else(|| ProbeError::EmptyPool(tag.clone()))?;
        let word = choices.choose(&mut rng).expect("pool buckets are non-empty");
        out.push_str(&expl.text[last..tok.span.start]);
        out.push_str(word);
        last = tok.span.end;
    }
    out.push_str(&expl.text[last..]);
    Ok(ExplanationRecord {
        text: out,
        ..expl.clone()
    })
}

/// Bucket of explanations that may be exchanged with one another.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
struct Bucket {
    gold: usize,
    conditioning: Option<usize>,
    scheme: String,
    backend_id: String,
    seed: u64,
}

/// Gives each example the explanation another example with the same gold label
/// received for the same conditioning label. Within each bucket the assignment is
/// a seeded random cyclic permutation, so no example keeps its own text.
pub fn perturb_other_item(
    test_expls: &ExplanationCache,
    gold_labels: &BTreeMap<String, Label>,
    seed: u64,
) -> Result<ExplanationCache, ProbeError> {
    let mut buckets: BTreeMap<Bucket, Vec<&ExplanationRecord>> = BTreeMap::new();
    for rec in test_expls.records() {
        let gold = gold_labels
            .get(&rec.example_uid)
            .ok_or_else(|| ProbeError::MissingUids(vec![rec.example_uid.clone()]))?;
        buckets
            .entry(Bucket {
                gold: gold.id,
                conditioning: rec.conditioning_label.as_ref().map(|l| l.id),
                scheme: rec.scheme.to_string(),
                backend_id: rec.backend_id.clone(),
                seed: rec.seed,
            })
            .or_default()
            .push(rec);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = ExplanationCache::new();
    for (bucket, mut recs) in buckets {
        if recs.len() < 2 {
            return Err(ProbeError::SingletonBucket(format!(
                "gold label {}, conditioning label {:?}, {} / {} (only `{}`)",
                bucket.gold, bucket.conditioning, bucket.scheme, bucket.backend_id, recs[0].example_uid
            )));
        }
        recs.sort_by(|a, b| a.example_uid.cmp(&b.example_uid));
        // Sattolo's algorithm: a uniformly random single cycle.
        let n = recs.len();
        let mut perm: Vec<usize> = (0..n).collect();
        for i in (1..n).rev() {
            let j = rng.random_range(0..i);
            perm.swap(i, j);
        }
        for (i, rec) in recs.iter().enumerate() {
            out.insert(
                ExplanationRecord {
                    text: recs[perm[i]].text.clone(),
                    ..(*rec).clone()
                },
                false,
            )
            .map_err(|e| ProbeError::Data(e.to_string()))?;
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::probing::tagger::{LexiconTagger, RuleTagger};
    use crate::task::Scheme;
    use proptest::prelude::*;

    fn rec(uid: &str, text: &str, cond: Option<Label>) -> ExplanationRecord {
        ExplanationRecord {
            example_uid: uid.into(),
            text: text.into(),
            scheme: if cond.is_some() {
                Scheme::PredictThenExplain
            } else {
                Scheme::ExplainThenPredict
            },
            conditioning_label: cond,
            backend_id: "b".into(),
            seed: 0,
        }
    }

    fn neutral() -> Label {
        Label {
            id: 1,
            name: "neutral".into(),
        }
    }

    fn tags() -> Vec<String> {
        DEFAULT_POS_TAGS.iter().map(|t| t.to_string()).collect()
    }

    fn pool() -> ReplacementPool {
        ReplacementPool::from_map(BTreeMap::from([
            ("NN".to_string(), vec!["sailor".to_string(), "dog".into()]),
            ("VBG".to_string(), vec!["creating".to_string(), "working".into()]),
            ("NNS".to_string(), vec!["boats".to_string()]),
            ("NNP".to_string(), vec!["Oslo".to_string()]),
        ]))
    }

    #[test]
    fn footnote_shape() {
        let r = rec("a", "The man is smiling, not frowning", None);
        let out = perturb_noun_verb(&r, &RuleTagger::default(), &pool(), &tags(), 3).unwrap();
        let words: Vec<&str> = out.text.split(' ').collect();
        assert_eq!(words.len(), 6);
        assert_eq!((words[0], words[2], words[4]), ("The", "is", "not"));
        assert!(["sailor", "dog"].contains(&words[1]));
        assert!(words[3].ends_with(',') && words[5].ends_with("ing"));
    }

    #[test]
    fn untagged_text_is_identical() {
        let r = rec("a", "it is not so.", None);
        let out = perturb_noun_verb(&r, &RuleTagger::default(), &pool(), &tags(), 1).unwrap();
        assert_eq!(out, r);
    }

    #[test]
    fn empty_pool_bucket_is_an_error() {
        let r = rec("a", "The man", None);
        let err = perturb_noun_verb(
            &r,
            &RuleTagger::default(),
            &ReplacementPool::default(),
            &tags(),
            1,
        );
        assert!(matches!(err, Err(ProbeError::EmptyPool(t)) if t == "NN"));
    }

    #[test]
    fn cue_survives_many_seeds() {
        let r = rec(
            "a",
            "we do not know whether the engineer expected the worker",
            Some(neutral()),
        );
        for seed in 0..100 {
            let out = perturb_noun_verb(&r, &RuleTagger::default(), &pool(), &tags(), seed).unwrap();
            assert!(out.text.contains("not know"), "{}", out.text);
        }
    }

    #[test]
    fn adversarial_tagger_can_delete_cue() {
        let r = rec("a", "we do not know", Some(neutral()));
        let tagger = LexiconTagger::parse("not\tNN\nknow\tNN\n").unwrap();
        let out = perturb_noun_verb(&r, &tagger, &pool(), &tags(), 0).unwrap();
        assert!(!out.text.contains("not know"));
    }

    fn cache(recs: Vec<ExplanationRecord>) -> ExplanationCache {
        let mut c = ExplanationCache::new();
        for r in recs {
            c.insert(r, false).unwrap();
        }
        c
    }

    fn golds(uids: &[&str]) -> BTreeMap<String, Label> {
        uids.iter().map(|u| (u.to_string(), neutral())).collect()
    }

    #[test]
    fn two_items_swap() {
        let c = cache(vec![
            rec("A", "tA", Some(neutral())),
            rec("B", "tB", Some(neutral())),
        ]);
        let out = perturb_other_item(&c, &golds(&["A", "B"]), 9).unwrap();
        let texts: Vec<(&str, &str)> = out
            .records()
            .map(|r| (r.example_uid.as_str(), r.text.as_str()))
            .collect();
        assert_eq!(texts, vec![("A", "tB"), ("B", "tA")]);
    }

    #[test]
    fn singleton_bucket_named() {
        let c = cache(vec![rec("A", "tA", Some(neutral()))]);
        let err = perturb_other_item(&c, &golds(&["A"]), 0).unwrap_err();
        assert!(err.to_string().contains("`A`"));
    }

    proptest! {
        #[test]
        fn other_item_is_a_derangement(n in 2usize..20, seed in any::<u64>()) {
            let uids: Vec<String> = (0..n).map(|i| format!("u{i:02}")).collect();
            let c = cache(uids.iter().map(|u| rec(u, &format!("text of {u}"), Some(neutral()))).collect());
            let g: BTreeMap<String, Label> = uids.iter().map(|u| (u.clone(), neutral())).collect();
            let a = perturb_other_item(&c, &g, seed).unwrap();
            let b = perturb_other_item(&c, &g, seed).unwrap();
            prop_assert_eq!(a.to_bytes(), b.to_bytes());
            let mut before: Vec<&str> = c.records().map(|r| r.text.as_str()).collect();
            let mut after: Vec<&str> = a.records().map(|r| r.text.as_str()).collect();
            for r in a.records() {
                prop_assert_ne!(&r.text, &format!("text of {}", r.example_uid));
            }
            before.sort();
            after.sort();
            prop_assert_eq!(before, after);
        }
    }
}
