//! Explanation cache: one [`ExplanationRecord`] per key, persisted as line records.
//!
//! ```text
//! {"format":"nle-explanation-cache","version":1,"backends":["replay:abc"]}
//! {"example_uid":"ex-1","text":"...","conditioning_label":{"id":1,"name":"neutral"},"scheme":"predict_then_explain","backend_id":"replay:abc","seed":0}
//! ```
//!
//! Records are written in key order. The header lists every backend id present.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::DataError;
use crate::task::{ExplanationRecord, Scheme};

pub const CACHE_FORMAT: &str = "nle-explanation-cache";
pub const CACHE_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct CacheKey {
    pub example_uid: String,
    pub scheme: Scheme,
    pub conditioning_label: Option<usize>,
    pub backend_id: String,
    pub seed: u64,
}

impl CacheKey {
    pub fn of(rec: &ExplanationRecord) -> CacheKey {
        CacheKey {
            example_uid: rec.example_uid.clone(),
            scheme: rec.scheme,
            conditioning_label: rec.conditioning_label.as_ref().map(|l| l.id),
            backend_id: rec.backend_id.clone(),
            seed: rec.seed,
        }
    }
}

impl std::fmt::Display for CacheKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "({}, {}, {}, {}, {})",
            self.example_uid,
            self.scheme,
            self.conditioning_label
                .map(|l| l.to_string())
                .unwrap_or_else(|| "-".into()),
            self.backend_id,
            self.seed
        )
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CacheHeader {
    format: String,
    version: u32,
    backends: Vec<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ExplanationCache {
    records: BTreeMap<CacheKey, ExplanationRecord>,
}

impl ExplanationCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn get(&self, key: &CacheKey) -> Option<&ExplanationRecord> {
        self.records.get(key)
    }

    pub fn contains(&self, key: &CacheKey) -> bool {
        self.records.contains_key(key)
    }

    pub fn records(&self) -> impl Iterator<Item = &ExplanationRecord> {
        self.records.values()
    }

    pub fn backends(&self) -> BTreeSet<&str> {
        self.records.keys().map(|k| k.backend_id.as_str()).collect()
    }

    /// Inserts a record. An existing key is replaced only when `overwrite` is set.
    pub fn insert(&mut self, rec: ExplanationRecord, overwrite: bool) -> Result<(), DataError> {
        rec.validate().map_err(DataError::Invalid)?;
        let key = CacheKey::of(&rec);
        if !overwrite && self.records.contains_key(&key) {
            return Err(DataError::DuplicateKey(key.to_string()));
        }
        self.records.insert(key, rec);
        Ok(())
    }

    /// All records for one example, in key order.
    pub fn for_example<'a>(&'a self, uid: &'a str) -> impl Iterator<Item = &'a ExplanationRecord> + 'a {
        self.records
            .range(
                CacheKey {
                    example_uid: uid.to_string(),
                    scheme: Scheme::ExplainThenPredict,
                    conditioning_label: None,
                    backend_id: String::new(),
                    seed: 0,
                }..,
            )
            .take_while(move |(k, _)| k.example_uid == uid)
            .map(|(_, r)| r)
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        let header = CacheHeader {
            format: CACHE_FORMAT.into(),
            version: CACHE_VERSION,
            backends: self.backends().into_iter().map(String::from).collect(),
        };
        writeln!(w, "{}", serde_json::to_string(&header)?)?;
        for rec in self.records.values() {
            writeln!(w, "{}", serde_json::to_string(rec)?)?;
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::new();
        self.write_to(&mut buf).expect("writing to memory");
        buf
    }

    pub fn parse(text: &str) -> Result<ExplanationCache, DataError> {
        let mut cache = ExplanationCache::new();
        let mut header: Option<CacheHeader> = None;
        for (idx, line) in text.lines().enumerate() {
            let line_no = idx + 1;
            if line.trim().is_empty() {
                continue;
            }
            let bad = |message: String| DataError::Line {
                line: line_no,
                message,
            };
            if header.is_none() {
                let h: CacheHeader =
                    serde_json::from_str(line).map_err(|e| bad(format!("bad header: {e}")))?;
                if h.format != CACHE_FORMAT || h.version != CACHE_VERSION {
                    return Err(bad(format!(
                        "unsupported cache format {} v{}",
                        h.format, h.version
                    )));
                }
                header = Some(h);
                continue;
            }
            let rec: ExplanationRecord = serde_json::from_str(line).map_err(|e| bad(e.to_string()))?;
            cache.insert(rec, false).map_err(|e| bad(e.to_string()))?;
        }
        if let Some(h) = header {
            let declared: BTreeSet<&str> = h.backends.iter().map(String::as_str).collect();
            if let Some(missing) = cache.backends().difference(&declared).next() {
                return Err(DataError::Invalid(format!(
                    "backend `{missing}` is used by records but missing from the header"
                )));
            }
        }
        Ok(cache)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<ExplanationCache, DataError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| DataError::io(path, e))?;
        ExplanationCache::parse(&text)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), DataError> {
        write_atomic(path.as_ref(), &self.to_bytes())
    }
}

pub(crate) fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), DataError> {
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, bytes).map_err(|e| DataError::io(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| DataError::io(path, e))
}

/// Single writer for a cache file. Concurrent producers share it by reference;
/// every insert is persisted before `append` returns.
#[derive(Debug)]
pub struct CacheWriter {
    path: PathBuf,
    cache: Mutex<ExplanationCache>,
}

impl CacheWriter {
    /// Opens `path`, loading existing records if the file exists.
    pub fn open(path: impl Into<PathBuf>) -> Result<CacheWriter, DataError> {
        let path = path.into();
        let cache = if path.exists() {
            ExplanationCache::load(&path)?
        } else {
            let empty = ExplanationCache::new();
            empty.save(&path)?;
            empty
        };
        Ok(CacheWriter {
            path,
            cache: Mutex::new(cache),
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn contains(&self, key: &CacheKey) -> bool {
        self.cache.lock().expect("cache lock").contains(key)
    }

    pub fn get(&self, key: &CacheKey) -> Option<ExplanationRecord> {
        self.cache.lock().expect("cache lock").get(key).cloned()
    }

    /// Inserts and persists one record. New keys from known backends are appended
    /// to the file; anything else rewrites it.
    pub fn append(&self, rec: ExplanationRecord, overwrite: bool) -> Result<(), DataError> {
        let mut cache = self.cache.lock().expect("cache lock");
        let key = CacheKey::of(&rec);
        let rewrite = cache.contains(&key) || !cache.backends().contains(rec.backend_id.as_str());
        let line = serde_json::to_string(&rec).expect("record serializes");
        cache.insert(rec, overwrite)?;
        if rewrite {
            return cache.save(&self.path);
        }
        let mut file = std::fs::OpenOptions::new()
            .append(true)
            .open(&self.path)
            .map_err(|e| DataError::io(&self.path, e))?;
        writeln!(file, "{line}").map_err(|e| DataError::io(&self.path, e))
    }

    /// Rewrites the file in canonical key order.
    pub fn finish(&self) -> Result<ExplanationCache, DataError> {
        let cache = self.cache.lock().expect("cache lock");
        cache.save(&self.path)?;
        Ok(cache.clone())
    }

    pub fn snapshot(&self) -> ExplanationCache {
        self.cache.lock().expect("cache lock").clone()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::task::Label;

    fn rec(uid: &str, label: Option<usize>, text: &str) -> ExplanationRecord {
        ExplanationRecord {
            example_uid: uid.into(),
            text: text.into(),
            conditioning_label: label.map(|id| Label {
                id,
                name: ["entailment", "neutral"][id].into(),
            }),
            scheme: if label.is_some() {
                Scheme::PredictThenExplain
            } else {
                Scheme::ExplainThenPredict
            },
            backend_id: "mock".into(),
            seed: 3,
        }
    }

    #[test]
    fn duplicate_key_needs_overwrite() {
        let mut c = ExplanationCache::new();
        c.insert(rec("a", Some(0), "x"), false).unwrap();
        assert!(matches!(
            c.insert(rec("a", Some(0), "y"), false),
            Err(DataError::DuplicateKey(_))
        ));
        c.insert(rec("a", Some(0), "y"), true).unwrap();
        assert_eq!(c.len(), 1);
        assert_eq!(c.records().next().unwrap().text, "y");
    }

    #[test]
    fn round_trip_preserves_records() {
        let mut c = ExplanationCache::new();
        c.insert(rec("b", Some(1), "we do \"not\" know"), false).unwrap();
        c.insert(rec("a", None, "plain"), false).unwrap();
        c.insert(rec("a", Some(0), "ünïcode"), false).unwrap();
        let back = ExplanationCache::parse(std::str::from_utf8(&c.to_bytes()).unwrap()).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn for_example_selects_only_that_uid() {
        let mut c = ExplanationCache::new();
        c.insert(rec("a", Some(0), "1"), false).unwrap();
        c.insert(rec("a", Some(1), "2"), false).unwrap();
        c.insert(rec("ab", Some(1), "3"), false).unwrap();
        c.insert(rec("b", Some(1), "4"), false).unwrap();
        let texts: Vec<&str> = c.for_example("a").map(|r| r.text.as_str()).collect();
        assert_eq!(texts, vec!["1", "2"]);
    }

    #[test]
    fn rejects_empty_text_and_bad_header() {
        let mut c = ExplanationCache::new();
        assert!(c.insert(rec("a", Some(0), " "), false).is_err());
        assert!(ExplanationCache::parse("{\"format\":\"x\",\"version\":1,\"backends\":[]}\n").is_err());
    }

    #[test]
    fn writer_persists_each_append() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cache.jsonl");
        let w = CacheWriter::open(&path).unwrap();
        w.append(rec("a", Some(0), "x"), false).unwrap();
        w.append(rec("a", Some(1), "y"), false).unwrap();
        assert!(w.append(rec("a", Some(0), "x"), false).is_err());
        let loaded = ExplanationCache::load(&path).unwrap();
        assert_eq!(loaded.len(), 2);
        let reopened = CacheWriter::open(&path).unwrap();
        assert_eq!(reopened.snapshot(), loaded);
    }
}
