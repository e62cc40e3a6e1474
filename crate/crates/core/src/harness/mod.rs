//! Experiment orchestration: configs, end-to-end runs with manifests, sweeps,
//! and synthetic fixtures.

pub mod config;
pub mod manifest;
pub mod run;
pub mod sweep;
pub mod synthetic;

use std::path::{Path, PathBuf};

pub use config::{BackendConfig, ExperimentConfig, Precision, RunMode, ScorerConfig, Seeds};
pub use manifest::{file_digest, RunManifest, StageRecord, StageStatus};
pub use run::{
    mode_pvps, predict_examples, read_predictions, run_configured, run_experiment, Experiment,
    GenerationRecord, ModelMeta, RunOutcome, RunReport, TrainedModel,
};
pub use sweep::{hyperparameter_sweep, select_best, SweepGrid, SweepOutcome, SweepPoint, SweepResult};
pub use synthetic::{SyntheticFixture, SyntheticSpec};

use crate::classifier::ClassifierError;
use crate::data::DataError;
use crate::evaluation::EvalError;
use crate::generation::GenerationError;
use crate::probing::ProbeError;
use crate::task::TaskError;

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Task(#[from] TaskError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error("generation: {0}")]
    Generation(String),
    #[error(transparent)]
    Classifier(#[from] ClassifierError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Probe(#[from] ProbeError),
    #[error("stage `{stage}` failed (see {}): {source}", manifest.display())]
    Stage {
        stage: String,
        manifest: PathBuf,
        #[source]
        source: Box<HarnessError>,
    },
    #[error("hyperparameter grid is empty")]
    EmptyGrid,
}

impl From<GenerationError> for HarnessError {
    fn from(e: GenerationError) -> Self {
        match e {
            GenerationError::Data(d) => HarnessError::Data(d),
            other => HarnessError::Generation(other.to_string()),
        }
    }
}

impl HarnessError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> HarnessError {
        HarnessError::Io {
            path: path.display().to_string(),
            source,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::task::Scheme;

    fn fixture(dir: &Path) -> SyntheticFixture {
        let spec = SyntheticSpec {
            per_label_pool: 8,
            per_label_test: 6,
            ..SyntheticSpec::default()
        };
        SyntheticFixture::write(&dir.join("data"), &spec).unwrap()
    }

    #[test]
    fn predict_then_explain_run_writes_artifacts() {
        let dir = tempfile::tempdir().unwrap();
        let f = fixture(dir.path());
        let mut cfg = f.config(RunMode::PredictThenExplain, 4, dir.path().join("run"));
        cfg.scorer = ScorerConfig::CueDetector { bonus: 10.0 };
        let out = run_experiment::<f64>(&cfg).unwrap();
        assert!(out.manifest.completed);
        for a in [
            "split.json",
            "explanations.jsonl",
            "model/scorer.json",
            "predictions.jsonl",
            "report.json",
        ] {
            assert!(out.manifest.artifacts.contains_key(a), "{a}");
        }
        assert_eq!(out.predictions.len(), 12);
        assert_eq!(out.report.test.accuracy, 1.0);
        let cache = crate::data::ExplanationCache::load(cfg.output_dir.join("explanations.jsonl")).unwrap();
        assert_eq!(cache.len(), 2 * (16 + 12));
        assert!(cache.records().all(|r| r.scheme == Scheme::PredictThenExplain));
    }

    #[test]
    fn ensemble_and_frozen_scorer() {
        let dir = tempfile::tempdir().unwrap();
        let f = fixture(dir.path());
        let mut cfg = f.config(RunMode::OracleExplanation, 4, dir.path().join("run"));
        cfg.scorer = ScorerConfig::CueDetector { bonus: 10.0 };
        cfg.ensemble = true;
        cfg.train.beta_init = 1.0;
        cfg.train.beta_lr = 0.0;
        let out = run_experiment::<f32>(&cfg).unwrap();
        assert_eq!(out.report.beta, Some(1.0));
        assert_eq!(out.report.test.accuracy, 1.0);
        assert!(out.manifest.artifacts.contains_key("model/noexpl.json"));
        assert!(!out.manifest.artifacts.contains_key("model/train_log.json"));
        assert_eq!(
            out.manifest.stage("generate").unwrap().status,
            StageStatus::Skipped
        );
    }

    #[test]
    fn failed_stage_leaves_partial_manifest() {
        let dir = tempfile::tempdir().unwrap();
        let f = fixture(dir.path());
        let mut cfg = f.config(RunMode::ExplainThenPredict, 4, dir.path().join("run"));
        cfg.backend = BackendConfig::Replay {
            path: dir.path().join("empty.jsonl"),
            id: "replay".into(),
        };
        std::fs::write(dir.path().join("empty.jsonl"), "").unwrap();
        let err = run_experiment::<f64>(&cfg).unwrap_err();
        assert!(
            matches!(&err, HarnessError::Stage { stage, .. } if stage == "generate"),
            "{err}"
        );
        let m = RunManifest::load(&cfg.output_dir.join("manifest.json")).unwrap();
        assert!(!m.completed);
        assert_eq!(m.stage("split").unwrap().status, StageStatus::Completed);
        assert_eq!(m.stage("generate").unwrap().status, StageStatus::Failed);
        assert!(m.artifacts.contains_key("split.json"));
    }

    #[test]
    fn saved_model_reproduces_predictions() {
        let dir = tempfile::tempdir().unwrap();
        let f = fixture(dir.path());
        let cfg = f.config(RunMode::NoExplanationPlain, 4, dir.path().join("run"));
        let out = run_experiment::<f64>(&cfg).unwrap();
        let exp = Experiment::new(cfg.clone()).unwrap();
        let model = TrainedModel::<f64>::load(&cfg.output_dir.join("model")).unwrap();
        let again = exp.predict(&model, &exp.test_examples().unwrap()).unwrap();
        assert_eq!(again, out.predictions);
        let read = read_predictions::<f64>(&cfg.output_dir.join("predictions.jsonl")).unwrap();
        assert_eq!(read, out.predictions);
    }
}
