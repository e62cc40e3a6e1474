//! End-to-end experiment runs and the stages they are made of.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{ExperimentConfig, Precision, RunMode};
use super::manifest::{file_digest, ManifestSeeds, RunManifest, StageStatus};
use super::HarnessError;
use crate::classifier::predict::pet_scores;
use crate::classifier::{
    apply_explanation_pattern, apply_pattern, ensemble_predict, fit_beta, plain_pvp, predict_flame,
    predict_pet, train_classifier, DevUsage, PredictionRecord, ScorerState, TrainConfig, TrainReport,
};
use crate::data::{
    generated_explanations, gold_explanations, load_dataset, sample_few_shot, select_training_explanations,
    CacheWriter, ExplanationCache, ExplanationMap, FewShotSplit, GenerationSource,
};
use crate::evaluation::{accuracy, gold_map, EvaluationReport};
use crate::generation::{fine_tune_generator, generate_all, GenerationFailure};
use crate::scalar::Scalar;
use crate::task::{Example, PatternVerbalizerPair, TaskSpec};

pub const SPLIT: &str = "split.json";
pub const EXPLANATIONS: &str = "explanations.jsonl";
pub const GENERATION: &str = "generation.json";
pub const MODEL_DIR: &str = "model";
pub const PREDICTIONS: &str = "predictions.jsonl";
pub const DEV_PREDICTIONS: &str = "dev_predictions.jsonl";
pub const TEST_INPUTS: &str = "test_inputs.jsonl";
pub const REPORT_JSON: &str = "report.json";
pub const REPORT_TXT: &str = "report.txt";
pub const MANIFEST: &str = "manifest.json";

/// Outcome of the generation stage, persisted as `generation.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationRecord {
    pub source: GenerationSource,
    pub generated: usize,
    pub reused: usize,
    pub failures: Vec<GenerationFailure>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelMeta {
    pub task: String,
    pub run_mode: RunMode,
    pub precision: Precision,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source: Option<GenerationSource>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
}

/// A trained classifier, plus the no-explanation model and weight of an ensemble.
#[derive(Debug, Clone)]
pub struct TrainedModel<T: Scalar> {
    pub meta: ModelMeta,
    pub scorer: ScorerState<T>,
    pub noexpl: Option<ScorerState<T>>,
    pub train_report: Option<TrainReport>,
}

impl<T: Scalar> TrainedModel<T> {
    pub fn save(&self, dir: &Path) -> Result<(), HarnessError> {
        std::fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
        self.scorer.save(dir.join("scorer.json"))?;
        let noexpl = dir.join("noexpl.json");
        match &self.noexpl {
            Some(n) => n.save(&noexpl)?,
            None if noexpl.exists() => {
                std::fs::remove_file(&noexpl).map_err(|e| HarnessError::io(&noexpl, e))?
            }
            None => {}
        }
        write_json(&dir.join("meta.json"), &self.meta)?;
        if let Some(r) = &self.train_report {
            write_json(&dir.join("train_log.json"), r)?;
        }
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self, HarnessError> {
        let meta: ModelMeta = read_json(&dir.join("meta.json"))?;
        let noexpl_path = dir.join("noexpl.json");
        Ok(TrainedModel {
            scorer: ScorerState::load(dir.join("scorer.json"))?,
            noexpl: if noexpl_path.exists() {
                Some(ScorerState::load(noexpl_path)?)
            } else {
                None
            },
            meta,
            train_report: None,
        })
    }
}

pub(crate) fn write_json<S: Serialize>(path: &Path, value: &S) -> Result<(), HarnessError> {
    let text = serde_json::to_string_pretty(value).expect("value serializes");
    std::fs::write(path, text + "\n").map_err(|e| HarnessError::io(path, e))
}

pub(crate) fn read_json<D: serde::de::DeserializeOwned>(path: &Path) -> Result<D, HarnessError> {
    let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| HarnessError::Config(format!("{}: {e}", path.display())))
}

fn write_jsonl<S: Serialize>(path: &Path, items: &[S]) -> Result<(), HarnessError> {
    let mut out = Vec::new();
    for item in items {
        serde_json::to_writer(&mut out, item).expect("value serializes");
        out.push(b'\n');
    }
    std::fs::write(path, out).map_err(|e| HarnessError::io(path, e))
}

pub fn read_predictions<T: Scalar>(path: &Path) -> Result<Vec<PredictionRecord<T>>, HarnessError> {
    let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .enumerate()
        .map(|(i, l)| {
            serde_json::from_str(l)
                .map_err(|e| HarnessError::Config(format!("{}:{}: {e}", path.display(), i + 1)))
        })
        .collect()
}

/// Patterns used for training and prediction in `mode`.
pub fn mode_pvps(mode: RunMode, task: &TaskSpec) -> Vec<PatternVerbalizerPair> {
    match mode {
        RunMode::NoExplanationPlain => vec![plain_pvp(task)],
        _ => task.pvps.clone(),
    }
}

/// One rendered classifier input, for inspection.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RenderedInput {
    pub example_uid: String,
    pub pvp: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub explanation_row: Option<usize>,
    pub sequence: String,
}

/// A configured experiment bound to its output directory.
pub struct Experiment {
    pub cfg: ExperimentConfig,
    pub task: TaskSpec,
}

impl Experiment {
    pub fn new(cfg: ExperimentConfig) -> Result<Self, HarnessError> {
        cfg.validate()?;
        let task = cfg.load_task()?;
        std::fs::create_dir_all(&cfg.output_dir).map_err(|e| HarnessError::io(&cfg.output_dir, e))?;
        Ok(Experiment { cfg, task })
    }

    pub fn path(&self, rel: &str) -> PathBuf {
        self.cfg.output_dir.join(rel)
    }

    pub fn pool(&self) -> Result<Vec<Example>, HarnessError> {
        Ok(load_dataset(&self.cfg.pool, &self.task)?)
    }

    pub fn test_examples(&self) -> Result<Vec<Example>, HarnessError> {
        Ok(load_dataset(&self.cfg.test, &self.task)?)
    }

    /// Samples the few-shot split and writes `split.json`.
    pub fn split(&self) -> Result<FewShotSplit, HarnessError> {
        let split = sample_few_shot(&self.pool()?, &self.task, self.cfg.k, self.cfg.seeds.split)?;
        split.save(self.path(SPLIT))?;
        Ok(split)
    }

    /// Fine-tunes (if configured) and generates explanations for the split and the
    /// test set into `explanations.jsonl`. `None` for modes that generate nothing.
    pub fn generate(
        &self,
        split: &FewShotSplit,
        test: &[Example],
    ) -> Result<Option<GenerationRecord>, HarnessError> {
        let Some(gcfg) = self.cfg.generation_config() else {
            return Ok(None);
        };
        let mut backend = self.cfg.backend.build()?;
        if self.cfg.fine_tune_generator {
            let id = fine_tune_generator(backend.as_mut(), split, &self.task, &gcfg)?;
            log::info!("generator fine-tuned as `{id}`");
        }
        let writer = CacheWriter::open(self.path(EXPLANATIONS))?;
        if let Some(input) = &self.cfg.explanation_cache {
            for rec in ExplanationCache::load(input)?.records() {
                if !writer.contains(&crate::data::CacheKey::of(rec)) {
                    writer.append(rec.clone(), false)?;
                }
            }
        }
        let examples: Vec<Example> = split.all().chain(test).cloned().collect();
        let summary = generate_all(
            backend.as_ref(),
            &examples,
            &self.task,
            &gcfg,
            self.cfg.seeds.generation,
            &writer,
            false,
        )?;
        let record = GenerationRecord {
            source: GenerationSource {
                scheme: gcfg.scheme,
                backend_id: backend.backend_id().to_string(),
                seed: self.cfg.seeds.generation,
            },
            generated: summary.generated,
            reused: summary.reused,
            failures: summary.failures,
        };
        write_json(&self.path(GENERATION), &record)?;
        if !record.failures.is_empty() {
            return Err(HarnessError::Generation(format!(
                "{} explanation(s) could not be generated, first for `{}`: {}",
                record.failures.len(),
                record.failures[0].example_uid,
                record.failures[0].reason
            )));
        }
        Ok(Some(record))
    }

    pub fn load_generation(&self) -> Result<Option<GenerationRecord>, HarnessError> {
        if self.cfg.run_mode.scheme().is_none() {
            return Ok(None);
        }
        read_json(&self.path(GENERATION)).map(Some)
    }

    /// Explanations shown to the classifier at prediction time, `None` for modes
    /// that predict without them.
    pub fn test_time_explanations(
        &self,
        examples: &[Example],
        source: Option<&GenerationSource>,
    ) -> Result<Option<ExplanationMap>, HarnessError> {
        match (self.cfg.run_mode, source) {
            (RunMode::OracleExplanation, _) => Ok(Some(gold_explanations(examples)?)),
            (RunMode::ExplainThenPredict | RunMode::PredictThenExplain, Some(src)) => {
                let cache = ExplanationCache::load(self.path(EXPLANATIONS))?;
                Ok(Some(generated_explanations(examples, &cache, src, &self.task)?))
            }
            (RunMode::ExplainThenPredict | RunMode::PredictThenExplain, None) => Err(HarnessError::Config(
                "generated explanations requested without a source".into(),
            )),
            _ => Ok(None),
        }
    }

    fn training_explanations(
        &self,
        split: &FewShotSplit,
        source: Option<&GenerationSource>,
    ) -> Result<Option<ExplanationMap>, HarnessError> {
        Ok(match (self.cfg.run_mode, source) {
            (RunMode::NoExplanationPet | RunMode::NoExplanationPlain, _) => None,
            (RunMode::TrainWithExplanation | RunMode::OracleExplanation, _) => {
                Some(gold_explanations(&split.train)?)
            }
            (_, Some(src)) => {
                let cache = ExplanationCache::load(self.path(EXPLANATIONS))?;
                Some(select_training_explanations(
                    &split.train,
                    &cache,
                    self.cfg.train.explanation_variant,
                    src,
                    &self.task,
                )?)
            }
            (_, None) => {
                return Err(HarnessError::Config(
                    "generated explanations requested without a source".into(),
                ))
            }
        })
    }

    /// Trains the classifier (frozen scorers are kept as built), the
    /// no-explanation model and the ensemble weight, and writes `model/`.
    pub fn train<T: Scalar>(
        &self,
        split: &FewShotSplit,
        source: Option<&GenerationSource>,
    ) -> Result<TrainedModel<T>, HarnessError> {
        let mode = self.cfg.run_mode;
        let pvps = mode_pvps(mode, &self.task);
        let mut scorer: ScorerState<T> = self.cfg.scorer.build(&self.task)?;
        let train_expl = self.training_explanations(split, source)?;
        let train_report = if scorer.scorer().trainable() {
            Some(match self.cfg.train.dev_usage {
                DevUsage::Selection => train_classifier(
                    scorer.scorer_mut(),
                    &pvps,
                    split,
                    train_expl.as_ref(),
                    &self.cfg.train,
                )?,
                DevUsage::EarlyStopping => {
                    self.train_early_stopping(&mut scorer, &pvps, split, train_expl.as_ref(), source)?
                }
            })
        } else {
            log::info!(
                "scorer `{}` is frozen; training skipped",
                scorer.scorer().scorer_id()
            );
            None
        };

        let (noexpl, beta) = if self.cfg.ensemble {
            let mut n: ScorerState<T> = self.cfg.scorer.build(&self.task)?;
            if n.scorer().trainable() {
                train_classifier(n.scorer_mut(), &self.task.pvps, split, None, &self.cfg.train)?;
            }
            let expl = self
                .test_time_explanations(&split.train, source)?
                .expect("ensemble modes explain at test time");
            let items = split
                .train
                .par_iter()
                .map(|ex| {
                    let with_expl = predict_flame(scorer.scorer(), &self.task, ex, &expl[&ex.uid], &pvps)?;
                    let plain = pet_scores(n.scorer(), ex, &self.task.pvps)?;
                    Ok((
                        with_expl.matrix.column_max(),
                        plain.values[0].clone(),
                        ex.gold_label.id,
                    ))
                })
                .collect::<Result<Vec<_>, HarnessError>>()?;
            let beta = fit_beta(
                &items,
                T::of(self.cfg.train.beta_init),
                T::of(self.cfg.train.beta_lr),
                self.cfg.train.train_steps,
            )?;
            log::info!("ensemble weight fitted to {}", beta.as_f64());
            (Some(n), Some(beta.as_f64()))
        } else {
            (None, None)
        };

        let model = TrainedModel {
            meta: ModelMeta {
                task: self.task.name.clone(),
                run_mode: mode,
                precision: self.cfg.precision,
                source: source.cloned(),
                beta,
            },
            scorer,
            noexpl,
            train_report,
        };
        model.save(&self.path(MODEL_DIR))?;
        Ok(model)
    }

    /// Trains in chunks of `eval_every` steps and keeps the state with the best
    /// dev accuracy; the earliest checkpoint wins ties.
    fn train_early_stopping<T: Scalar>(
        &self,
        scorer: &mut ScorerState<T>,
        pvps: &[PatternVerbalizerPair],
        split: &FewShotSplit,
        train_expl: Option<&ExplanationMap>,
        source: Option<&GenerationSource>,
    ) -> Result<TrainReport, HarnessError> {
        let dev_expl = self.test_time_explanations(&split.dev, source)?;
        let gold = gold_map(&split.dev);
        let dev_accuracy = |s: &ScorerState<T>| -> Result<f64, HarnessError> {
            let preds = split
                .dev
                .par_iter()
                .map(|ex| match &dev_expl {
                    Some(m) => predict_flame(s.scorer(), &self.task, ex, &m[&ex.uid], pvps),
                    None => predict_pet(s.scorer(), &self.task, ex, pvps),
                })
                .collect::<Result<Vec<_>, _>>()?;
            Ok(accuracy(&preds, &gold)?)
        };

        let cfg = &self.cfg.train;
        let mut best = (dev_accuracy(scorer)?, 0, scorer.clone());
        let mut losses = Vec::with_capacity(cfg.train_steps);
        let mut done = 0;
        for chunk in 0u64.. {
            if done >= cfg.train_steps {
                break;
            }
            let steps = cfg.eval_every.min(cfg.train_steps - done);
            let chunk_cfg = TrainConfig {
                train_steps: steps,
                seed: cfg.seed.wrapping_add(chunk),
                ..cfg.clone()
            };
            let r = train_classifier(scorer.scorer_mut(), pvps, split, train_expl, &chunk_cfg)?;
            losses.extend(r.losses);
            done += steps;
            let acc = dev_accuracy(scorer)?;
            log::debug!("step {done}: dev accuracy {acc}");
            if acc > best.0 {
                best = (acc, done, scorer.clone());
            }
        }
        log::info!("kept checkpoint at step {} (dev accuracy {})", best.1, best.0);
        *scorer = best.2;
        Ok(TrainReport {
            steps: done,
            losses,
            best_step: Some(best.1),
        })
    }

    /// Predicts `examples` in input order.
    pub fn predict<T: Scalar>(
        &self,
        model: &TrainedModel<T>,
        examples: &[Example],
    ) -> Result<Vec<PredictionRecord<T>>, HarnessError> {
        let expl = self.test_time_explanations(examples, model.meta.source.as_ref())?;
        predict_examples(model, &self.task, examples, expl.as_ref())
    }

    /// Renders the exact classifier inputs of `examples`.
    pub fn render_inputs(
        &self,
        model_mode: RunMode,
        examples: &[Example],
        expl: Option<&ExplanationMap>,
        budget: Option<&dyn crate::classifier::pattern::LengthBudget>,
    ) -> Result<Vec<RenderedInput>, HarnessError> {
        let pvps = mode_pvps(model_mode, &self.task);
        let mut out = Vec::new();
        for ex in examples {
            for p in &pvps {
                match expl {
                    Some(map) => {
                        for (row, e) in map[&ex.uid].iter().enumerate() {
                            let seq = apply_explanation_pattern(p, ex, &e.text, budget)?;
                            out.push(RenderedInput {
                                example_uid: ex.uid.clone(),
                                pvp: p.id.clone(),
                                explanation_row: Some(row),
                                sequence: seq.to_string(),
                            });
                        }
                    }
                    None => out.push(RenderedInput {
                        example_uid: ex.uid.clone(),
                        pvp: p.id.clone(),
                        explanation_row: None,
                        sequence: apply_pattern(p, ex)?.to_string(),
                    }),
                }
            }
        }
        Ok(out)
    }
}

/// Predicts with explanations when `explanations` is given (mixing in the
/// no-explanation model if the model is an ensemble), otherwise from the
/// patterns alone.
pub fn predict_examples<T: Scalar>(
    model: &TrainedModel<T>,
    task: &TaskSpec,
    examples: &[Example],
    explanations: Option<&ExplanationMap>,
) -> Result<Vec<PredictionRecord<T>>, HarnessError> {
    let pvps = mode_pvps(model.meta.run_mode, task);
    let scorer = model.scorer.scorer();
    examples
        .par_iter()
        .map(|ex| {
            let Some(map) = explanations else {
                return Ok(predict_pet(scorer, task, ex, &pvps)?);
            };
            let expls = map
                .get(&ex.uid)
                .ok_or_else(|| HarnessError::Config(format!("no explanations for `{}`", ex.uid)))?;
            let rec = predict_flame(scorer, task, ex, expls, &pvps)?;
            match (&model.noexpl, model.meta.beta) {
                (Some(n), Some(beta)) => {
                    let plain = pet_scores(n.scorer(), ex, &task.pvps)?;
                    Ok(ensemble_predict(task, &rec, &plain.values[0], T::of(beta))?)
                }
                _ => Ok(rec),
            }
        })
        .collect()
}

/// Metrics written to `report.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub run_mode: RunMode,
    pub test: EvaluationReport,
    pub dev_accuracy: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub final_train_loss: Option<f64>,
}

impl RunReport {
    pub fn render_text(&self) -> String {
        let mut out = format!(
            "run mode: {}\ndev accuracy: {:.4}\n",
            self.run_mode, self.dev_accuracy
        );
        if let Some(b) = self.beta {
            out.push_str(&format!("beta: {b:.4}\n"));
        }
        if let Some(l) = self.final_train_loss {
            out.push_str(&format!("final train loss: {l:.6}\n"));
        }
        out.push_str(&self.test.render_text());
        out
    }
}

/// Finished run: manifest, report, and the test predictions.
#[derive(Debug, Clone)]
pub struct RunOutcome<T: Scalar> {
    pub manifest: RunManifest,
    pub report: RunReport,
    pub predictions: Vec<PredictionRecord<T>>,
}

struct Tracker<'a> {
    exp: &'a Experiment,
    manifest: RunManifest,
}

impl Tracker<'_> {
    fn stage<R>(
        &mut self,
        name: &str,
        artifacts: &[&str],
        f: impl FnOnce() -> Result<R, HarnessError>,
    ) -> Result<R, HarnessError> {
        let started = Instant::now();
        log::info!("stage {name}");
        match f() {
            Ok(r) => {
                for a in artifacts {
                    if self.exp.path(a).exists() {
                        self.manifest.add_artifact(&self.exp.cfg.output_dir, a)?;
                    }
                }
                self.manifest.record(name, StageStatus::Completed, started, None);
                Ok(r)
            }
            Err(e) => {
                for a in artifacts {
                    if self.exp.path(a).exists() {
                        let _ = self.manifest.add_artifact(&self.exp.cfg.output_dir, a);
                    }
                }
                self.manifest
                    .record(name, StageStatus::Failed, started, Some(e.to_string()));
                let path = self.exp.path(MANIFEST);
                self.manifest.save(&path)?;
                Err(HarnessError::Stage {
                    stage: name.to_string(),
                    manifest: path,
                    source: Box::new(e),
                })
            }
        }
    }

    fn skip(&mut self, name: &str, why: &str) {
        self.manifest
            .record(name, StageStatus::Skipped, Instant::now(), Some(why.to_string()));
    }
}

fn input_digests(cfg: &ExperimentConfig) -> Result<BTreeMap<String, String>, HarnessError> {
    let mut inputs = BTreeMap::new();
    inputs.insert("pool".to_string(), file_digest(&cfg.pool)?);
    inputs.insert("test".to_string(), file_digest(&cfg.test)?);
    if !cfg.task.starts_with("builtin:") {
        inputs.insert("task".to_string(), file_digest(Path::new(&cfg.task))?);
    }
    if let Some(p) = &cfg.explanation_cache {
        inputs.insert("explanation_cache".to_string(), file_digest(p)?);
    }
    if let super::config::BackendConfig::Replay { path, .. } = &cfg.backend {
        inputs.insert("replay".to_string(), file_digest(path)?);
    }
    Ok(inputs)
}

/// Runs split, generation, training, prediction and evaluation, writing every
/// artifact and `manifest.json` into the output directory. When a stage fails,
/// the manifest records it and the run stops.
pub fn run_experiment<T: Scalar>(cfg: &ExperimentConfig) -> Result<RunOutcome<T>, HarnessError> {
    let exp = Experiment::new(cfg.clone())?;
    let manifest = RunManifest {
        config_sha256: cfg.digest(),
        run_mode: cfg.run_mode,
        seeds: ManifestSeeds {
            split: cfg.seeds.split,
            generation: cfg.seeds.generation,
            train: cfg.train.seed,
        },
        completed: false,
        stages: Vec::new(),
        inputs: BTreeMap::new(),
        artifacts: BTreeMap::new(),
    };
    let mut t = Tracker { exp: &exp, manifest };
    t.manifest.inputs = t.stage("inputs", &[], || input_digests(cfg))?;
    let (split, test) = t.stage("split", &[SPLIT], || Ok((exp.split()?, exp.test_examples()?)))?;

    let generation = if cfg.run_mode.scheme().is_some() {
        t.stage("generate", &[EXPLANATIONS, GENERATION], || {
            exp.generate(&split, &test)
        })?
    } else {
        t.skip("generate", "run mode uses no generated explanations");
        None
    };
    let source = generation.as_ref().map(|g| &g.source);

    let model_files = [
        "model/scorer.json",
        "model/noexpl.json",
        "model/meta.json",
        "model/train_log.json",
    ];
    let model: TrainedModel<T> = t.stage("train", &model_files, || exp.train(&split, source))?;

    let (predictions, dev) = t.stage("predict", &[PREDICTIONS, DEV_PREDICTIONS, TEST_INPUTS], || {
        let test_expl = exp.test_time_explanations(&test, source)?;
        let predictions = predict_examples(&model, &exp.task, &test, test_expl.as_ref())?;
        let dev = exp.predict(&model, &split.dev)?;
        write_jsonl(&exp.path(PREDICTIONS), &predictions)?;
        write_jsonl(&exp.path(DEV_PREDICTIONS), &dev)?;
        let inputs = exp.render_inputs(
            cfg.run_mode,
            &test,
            test_expl.as_ref(),
            Some(model.scorer.scorer()),
        )?;
        write_jsonl(&exp.path(TEST_INPUTS), &inputs)?;
        Ok((predictions, dev))
    })?;

    let report = t.stage("evaluate", &[REPORT_JSON, REPORT_TXT], || {
        let report = RunReport {
            run_mode: cfg.run_mode,
            test: EvaluationReport::new(&predictions, &gold_map(&test))?,
            dev_accuracy: accuracy(&dev, &gold_map(&split.dev))?,
            beta: model.meta.beta,
            final_train_loss: model.train_report.as_ref().and_then(|r| r.losses.last().copied()),
        };
        write_json(&exp.path(REPORT_JSON), &report)?;
        std::fs::write(exp.path(REPORT_TXT), report.render_text())
            .map_err(|e| HarnessError::io(&exp.path(REPORT_TXT), e))?;
        Ok(report)
    })?;

    let mut manifest = t.manifest;
    manifest.completed = true;
    manifest.save(&exp.path(MANIFEST))?;
    Ok(RunOutcome {
        manifest,
        report,
        predictions,
    })
}

/// [`run_experiment`] at the precision named in the config, without predictions.
pub fn run_configured(cfg: &ExperimentConfig) -> Result<(RunManifest, RunReport), HarnessError> {
    match cfg.precision {
        Precision::F32 => run_experiment::<f32>(cfg).map(|o| (o.manifest, o.report)),
        Precision::F64 => run_experiment::<f64>(cfg).map(|o| (o.manifest, o.report)),
    }
}
