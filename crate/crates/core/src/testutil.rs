//! Fixtures shared by unit tests.

use crate::task::{Example, TaskSpec};

pub fn esnli() -> TaskSpec {
    TaskSpec::from_toml(crate::task::builtin::ESNLI).unwrap()
}

pub fn ehans() -> TaskSpec {
    TaskSpec::from_toml(crate::task::builtin::EHANS).unwrap()
}

/// `per_label` examples for every label, with gold explanations.
pub fn pool(task: &TaskSpec, per_label: usize) -> Vec<Example> {
    let mut out = Vec::new();
    for label in &task.labels {
        for i in 0..per_label {
            out.push(Example {
                uid: format!("{}-{i}", label.name),
                premise: format!("premise {} {i}", label.name),
                hypothesis: format!("hypothesis {i}"),
                gold_label: label.clone(),
                gold_explanation: Some(format!("explanation for {} {i}", label.name)),
            });
        }
    }
    out
}
