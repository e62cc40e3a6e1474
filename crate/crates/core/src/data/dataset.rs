//! Line-record dataset files.
//!
//! ```text
//! {"format":"nle-dataset","version":1}
//! {"uid":"ex-1","premise":"...","hypothesis":"...","label":"neutral","explanation":"..."}
//! ```
//!
//! The first non-blank line is the header. Every following non-blank line is one
//! JSON object; `explanation` is optional. Blank lines are ignored.

use std::collections::HashSet;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::DataError;
use crate::task::{Example, TaskSpec};

pub const DATASET_FORMAT: &str = "nle-dataset";
pub const DATASET_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub(crate) struct Header {
    pub format: String,
    pub version: u32,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DatasetLine {
    uid: String,
    premise: Option<String>,
    hypothesis: Option<String>,
    label: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    explanation: Option<String>,
}

pub fn load_dataset(path: impl AsRef<Path>, task: &TaskSpec) -> Result<Vec<Example>, DataError> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| DataError::io(path, e))?;
    read_dataset(BufReader::new(file), task)
}

pub fn read_dataset<R: BufRead>(reader: R, task: &TaskSpec) -> Result<Vec<Example>, DataError> {
    let mut examples = Vec::new();
    let mut uids = HashSet::new();
    let mut saw_header = false;
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line.map_err(|e| DataError::Line {
            line: line_no,
            message: e.to_string(),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let bad = |message: String| DataError::Line {
            line: line_no,
            message,
        };
        if !saw_header {
            let header: Header = serde_json::from_str(&line).map_err(|e| bad(format!("bad header: {e}")))?;
            if header.format != DATASET_FORMAT || header.version != DATASET_VERSION {
                return Err(bad(format!(
                    "unsupported dataset format {} v{}",
                    header.format, header.version
                )));
            }
            saw_header = true;
            continue;
        }
        let rec: DatasetLine = serde_json::from_str(&line).map_err(|e| bad(e.to_string()))?;
        let premise = rec
            .premise
            .filter(|s| !s.trim().is_empty())
            .ok_or_else(|| bad("missing premise".into()))?;
        let hypothesis = rec
            .hypothesis
            .filter(|s| !s.trim().is_empty())
            .ok_or_else(|| bad("missing hypothesis".into()))?;
        let gold_label = task
            .label_by_name(&rec.label)
            .cloned()
            .ok_or_else(|| bad(format!("unknown label `{}`", rec.label)))?;
        if !uids.insert(rec.uid.clone()) {
            return Err(bad(format!("duplicate uid `{}`", rec.uid)));
        }
        examples.push(Example {
            uid: rec.uid,
            premise,
            hypothesis,
            gold_label,
            gold_explanation: rec.explanation,
        });
    }
    Ok(examples)
}

pub fn write_dataset<W: Write>(mut w: W, examples: &[Example]) -> std::io::Result<()> {
    let header = Header {
        format: DATASET_FORMAT.into(),
        version: DATASET_VERSION,
    };
    writeln!(w, "{}", serde_json::to_string(&header)?)?;
    for ex in examples {
        let line = DatasetLine {
            uid: ex.uid.clone(),
            premise: Some(ex.premise.clone()),
            hypothesis: Some(ex.hypothesis.clone()),
            label: ex.gold_label.name.clone(),
            explanation: ex.gold_explanation.clone(),
        };
        writeln!(w, "{}", serde_json::to_string(&line)?)?;
    }
    Ok(())
}

pub fn save_dataset(path: impl AsRef<Path>, examples: &[Example]) -> Result<(), DataError> {
    let path = path.as_ref();
    let mut buf = Vec::new();
    write_dataset(&mut buf, examples).map_err(|e| DataError::io(path, e))?;
    std::fs::write(path, buf).map_err(|e| DataError::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testutil::ehans;

    const HEADER: &str = r#"{"format":"nle-dataset","version":1}"#;

    #[test]
    fn reads_table3_line() {
        let text = format!(
            "{HEADER}\n{}\n",
            r#"{"uid":"t3","premise":"Supposedly the engineer expected the worker.","hypothesis":"The engineer expected the worker.","label":"neutral"}"#
        );
        let exs = read_dataset(text.as_bytes(), &ehans()).unwrap();
        assert_eq!(exs.len(), 1);
        assert_eq!(exs[0].gold_label.name, "neutral");
        assert_eq!(exs[0].gold_explanation, None);
    }

    #[test]
    fn empty_file_is_empty() {
        assert!(read_dataset("".as_bytes(), &ehans()).unwrap().is_empty());
        assert!(read_dataset(format!("{HEADER}\n").as_bytes(), &ehans())
            .unwrap()
            .is_empty());
    }

    #[test]
    fn label_typo_reports_line() {
        let text = format!(
            "{HEADER}\n{}\n{}\n",
            r#"{"uid":"a","premise":"p","hypothesis":"h","label":"neutral"}"#,
            r#"{"uid":"b","premise":"p","hypothesis":"h","label":"entailmant"}"#
        );
        match read_dataset(text.as_bytes(), &ehans()) {
            Err(DataError::Line { line, message }) => {
                assert_eq!(line, 3);
                assert!(message.contains("entailmant"));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn missing_premise_rejected() {
        let text = format!(
            "{HEADER}\n{}\n",
            r#"{"uid":"a","hypothesis":"h","label":"neutral"}"#
        );
        let err = read_dataset(text.as_bytes(), &ehans()).unwrap_err();
        assert!(err.to_string().contains("missing premise"));
    }

    #[test]
    fn duplicate_uid_rejected() {
        let line = r#"{"uid":"a","premise":"p","hypothesis":"h","label":"neutral"}"#;
        let text = format!("{HEADER}\n{line}\n{line}\n");
        assert!(read_dataset(text.as_bytes(), &ehans()).is_err());
    }

    #[test]
    fn write_then_read_preserves_order() {
        let task = ehans();
        let text = format!(
            "{HEADER}\n{}\n{}\n",
            r#"{"uid":"z","premise":"p","hypothesis":"h","label":"neutral","explanation":"e"}"#,
            r#"{"uid":"a","premise":"p2","hypothesis":"h2","label":"entailment"}"#
        );
        let exs = read_dataset(text.as_bytes(), &task).unwrap();
        let mut buf = Vec::new();
        write_dataset(&mut buf, &exs).unwrap();
        assert_eq!(read_dataset(buf.as_slice(), &task).unwrap(), exs);
    }
}
