//! Grid search over the ensemble weight schedule and the training-explanation
//! variant, selected by dev accuracy.

use std::path::PathBuf;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use super::run::{run_configured, write_json, Experiment, EXPLANATIONS};
use super::HarnessError;
use crate::classifier::TrainConfig;
use crate::data::{sample_few_shot, ExplanationVariant};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepGrid {
    pub beta_init: Vec<f64>,
    pub beta_lr: Vec<f64>,
    pub variants: Vec<ExplanationVariant>,
}

impl Default for SweepGrid {
    fn default() -> Self {
        SweepGrid {
            beta_init: TrainConfig::BETA_INIT_GRID.to_vec(),
            beta_lr: TrainConfig::BETA_LR_GRID.to_vec(),
            variants: ExplanationVariant::ALL.to_vec(),
        }
    }
}

/// One grid point's hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub variant: ExplanationVariant,
    pub beta_init: f64,
    pub beta_lr: f64,
}

impl SweepGrid {
    pub fn from_toml(text: &str) -> Result<Self, HarnessError> {
        toml::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))
    }

    /// Points in variant-major order; the index in this list breaks ties.
    pub fn points(&self) -> Vec<SweepPoint> {
        let mut out = Vec::new();
        for &variant in &self.variants {
            for &beta_init in &self.beta_init {
                for &beta_lr in &self.beta_lr {
                    out.push(SweepPoint {
                        variant,
                        beta_init,
                        beta_lr,
                    });
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub index: usize,
    pub point: SweepPoint,
    pub output_dir: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dev_accuracy: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub test_accuracy: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// Written to `sweep.json` in the base output directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepOutcome {
    pub results: Vec<SweepResult>,
    pub selected: usize,
}

impl SweepOutcome {
    pub fn best(&self) -> &SweepResult {
        &self.results[self.selected]
    }

    /// Best dev accuracy per variant with the test accuracy of that point.
    pub fn render_table(&self) -> String {
        let mut out = format!(
            "{:<20} {:>8} {:>8} {:>10} {:>8}\n",
            "variant", "dev", "test", "beta_init", "beta_lr"
        );
        let mut variants: Vec<ExplanationVariant> = self.results.iter().map(|r| r.point.variant).collect();
        variants.dedup();
        for v in variants {
            let best = self
                .results
                .iter()
                .filter(|r| r.point.variant == v)
                .filter(|r| r.dev_accuracy.is_some())
                .fold(None::<&SweepResult>, |acc, r| match acc {
                    Some(a) if a.dev_accuracy >= r.dev_accuracy => Some(a),
                    _ => Some(r),
                });
            match best {
                Some(r) => out.push_str(&format!(
                    "{:<20} {:>8.4} {:>8.4} {:>10} {:>8}\n",
                    v.as_str(),
                    r.dev_accuracy.unwrap_or(f64::NAN),
                    r.test_accuracy.unwrap_or(f64::NAN),
                    r.point.beta_init,
                    r.point.beta_lr
                )),
                None => out.push_str(&format!("{:<20} {:>8} {:>8}\n", v.as_str(), "failed", "-")),
            }
        }
        let b = self.best();
        out.push_str(&format!(
            "selected: #{} {} beta_init={} beta_lr={}\n",
            b.index,
            b.point.variant.as_str(),
            b.point.beta_init,
            b.point.beta_lr
        ));
        out
    }
}

/// Index of the highest dev accuracy; the lowest index wins ties.
pub fn select_best(results: &[SweepResult]) -> Option<usize> {
    results
        .iter()
        .filter_map(|r| r.dev_accuracy.map(|a| (r.index, a)))
        .fold(None, |best: Option<(usize, f64)>, (i, a)| match best {
            Some((_, b)) if b >= a => best,
            _ => Some((i, a)),
        })
        .map(|(i, _)| i)
}

/// Runs every grid point as its own experiment under `output_dir/points/NNN`,
/// in parallel. Explanations are generated once into `output_dir/shared` and
/// reused by every point. Points that fail are recorded with their error.
pub fn hyperparameter_sweep(base: &ExperimentConfig, grid: &SweepGrid) -> Result<SweepOutcome, HarnessError> {
    let points = grid.points();
    if points.is_empty() {
        return Err(HarnessError::EmptyGrid);
    }
    base.validate()?;
    let shared_cache = if base.run_mode.scheme().is_some() {
        let mut shared = base.clone();
        shared.output_dir = base.output_dir.join("shared");
        let exp = Experiment::new(shared)?;
        let split = sample_few_shot(&exp.pool()?, &exp.task, base.k, base.seeds.split)?;
        exp.generate(&split, &exp.test_examples()?)?;
        Some(exp.path(EXPLANATIONS))
    } else {
        None
    };

    let results: Vec<SweepResult> = points
        .par_iter()
        .enumerate()
        .map(|(index, &point)| {
            let mut cfg = base.clone();
            cfg.output_dir = base.output_dir.join("points").join(format!("{index:03}"));
            cfg.train.explanation_variant = point.variant;
            cfg.train.beta_init = point.beta_init;
            cfg.train.beta_lr = point.beta_lr;
            if let Some(p) = &shared_cache {
                cfg.explanation_cache = Some(p.clone());
            }
            let mut r = SweepResult {
                index,
                point,
                output_dir: cfg.output_dir.clone(),
                dev_accuracy: None,
                test_accuracy: None,
                error: None,
            };
            match run_configured(&cfg) {
                Ok((_, report)) => {
                    r.dev_accuracy = Some(report.dev_accuracy);
                    r.test_accuracy = Some(report.test.accuracy);
                }
                Err(e) => {
                    log::warn!("sweep point {index} failed: {e}");
                    r.error = Some(e.to_string());
                }
            }
            r
        })
        .collect();

    let selected = select_best(&results).ok_or_else(|| {
        HarnessError::Config(format!(
            "all {} sweep points failed; first error: {}",
            results.len(),
            results[0].error.as_deref().unwrap_or("unknown")
        ))
    })?;
    let outcome = SweepOutcome { results, selected };
    write_json(&base.output_dir.join("sweep.json"), &outcome)?;
    let table = base.output_dir.join("sweep.txt");
    std::fs::write(&table, outcome.render_table()).map_err(|e| HarnessError::io(&table, e))?;
    Ok(outcome)
}
