//! Fine-tuning a trainable scorer and fitting the ensemble weight.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::loss::loss_terms;
use super::predict::mix;
use super::scorer::MaskScorer;
use super::ClassifierError;
use crate::data::{ExplanationMap, ExplanationVariant, FewShotSplit};
use crate::scalar::{softmax, Scalar};
use crate::task::PatternVerbalizerPair;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub train_steps: usize,
    pub batch_size: usize,
    pub beta_init: f64,
    pub beta_lr: f64,
    pub explanation_variant: ExplanationVariant,
    pub seed: u64,
    pub dev_usage: DevUsage,
    /// Steps between dev evaluations under [`DevUsage::EarlyStopping`].
    pub eval_every: usize,
}

/// Role of the dev split during training.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DevUsage {
    /// Dev is only scored after training, for reports and sweeps.
    #[default]
    Selection,
    /// Dev is scored every `eval_every` steps and the best checkpoint is kept.
    EarlyStopping,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            train_steps: 1000,
            batch_size: 4,
            beta_init: 0.5,
            beta_lr: 2e-3,
            explanation_variant: ExplanationVariant::Gen,
            seed: 0,
            dev_usage: DevUsage::Selection,
            eval_every: 50,
        }
    }
}

impl TrainConfig {
    pub const BETA_INIT_GRID: [f64; 5] = [0.0, 0.25, 0.5, 0.75, 1.0];
    pub const BETA_LR_GRID: [f64; 3] = [2e-2, 2e-3, 2e-4];

    pub fn validate(&self) -> Result<(), ClassifierError> {
        if self.batch_size == 0 {
            return Err(ClassifierError::Config("batch_size must be positive".into()));
        }
        if self.dev_usage == DevUsage::EarlyStopping && self.eval_every == 0 {
            return Err(ClassifierError::Config("eval_every must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.beta_init) {
            return Err(ClassifierError::Beta(self.beta_init));
        }
        if !(self.beta_lr.is_finite() && self.beta_lr >= 0.0) {
            return Err(ClassifierError::Config(format!(
                "beta_lr {} is invalid",
                self.beta_lr
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub steps: usize,
    /// Mean batch loss per step.
    pub losses: Vec<f64>,
    /// Step count of the kept checkpoint when training stopped early on dev.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub best_step: Option<usize>,
}

/// Minimizes the explanation-aware loss (or the plain pattern loss when
/// `explanations` is `None`) with `cfg.train_steps` SGD steps over batches drawn
/// from reshuffled passes through `split.train`.
pub fn train_classifier<T: Scalar>(
    scorer: &mut dyn MaskScorer<T>,
    pvps: &[PatternVerbalizerPair],
    split: &FewShotSplit,
    explanations: Option<&ExplanationMap>,
    cfg: &TrainConfig,
) -> Result<TrainReport, ClassifierError> {
    cfg.validate()?;
    if !scorer.trainable() {
        return Err(ClassifierError::NotTrainable(scorer.scorer_id().to_string()));
    }
    if split.train.is_empty() {
        return Err(ClassifierError::Config("empty training split".into()));
    }
    if let Some(map) = explanations {
        if let Some(ex) = split
            .train
            .iter()
            .find(|e| map.get(&e.uid).is_none_or(Vec::is_empty))
        {
            return Err(ClassifierError::NoExplanations(ex.uid.clone()));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = Vec::new();
    let mut losses = Vec::with_capacity(cfg.train_steps);
    let batch_weight = T::one() / T::of(cfg.batch_size as f64);

    for step in 0..cfg.train_steps {
        let mut batch = Vec::with_capacity(cfg.batch_size);
        while batch.len() < cfg.batch_size {
            if order.is_empty() {
                order = (0..split.train.len()).collect();
                order.shuffle(&mut rng);
            }
            batch.push(order.pop().expect("refilled"));
        }

        let mut all_terms = Vec::new();
        let mut batch_loss = T::zero();
        for &i in &batch {
            let ex = &split.train[i];
            let expls = explanations.map(|m| m[&ex.uid].as_slice());
            let (loss, terms) = loss_terms(&*scorer, ex, &ex.gold_label, expls, pvps)?;
            if !loss.is_finite() {
                return Err(ClassifierError::NonFiniteLoss {
                    step,
                    uid: ex.uid.clone(),
                    loss: loss.as_f64(),
                });
            }
            batch_loss = batch_loss + loss;
            all_terms.extend(terms);
        }

        let trainable = scorer.as_trainable().expect("checked trainable");
        trainable.zero_grad();
        for term in &all_terms {
            let upstream: Vec<T> = term.upstream.iter().map(|&g| g * batch_weight).collect();
            trainable.backward(&term.seq, &pvps[term.pvp].verbalizer, &upstream);
        }
        trainable.apply_gradients();
        let mean = (batch_loss * batch_weight).as_f64();
        log::debug!("step {step}: loss {mean:.6}");
        losses.push(mean);
    }
    Ok(TrainReport {
        steps: cfg.train_steps,
        losses,
        best_step: None,
    })
}

/// Fits the ensemble weight by projected gradient descent on the mean
/// cross-entropy of the mixed log-probabilities over labelled examples.
///
/// Each item is `(explanation-model column maxima, no-explanation scores, gold id)`.
pub fn fit_beta<T: Scalar>(
    items: &[(Vec<T>, Vec<T>, usize)],
    beta_init: T,
    beta_lr: T,
    steps: usize,
) -> Result<T, ClassifierError> {
    if !(beta_init >= T::zero() && beta_init <= T::one()) {
        return Err(ClassifierError::Beta(beta_init.as_f64()));
    }
    if items.is_empty() {
        return Ok(beta_init);
    }
    let n = T::of(items.len() as f64);
    let mut beta = beta_init;
    for _ in 0..steps {
        let mut grad = T::zero();
        for (a, b, y) in items {
            let p = softmax(&mix(a, b, beta));
            let la = crate::scalar::log_softmax(a);
            let lb = crate::scalar::log_softmax(b);
            for i in 0..p.len() {
                let target = if i == *y { T::one() } else { T::zero() };
                grad = grad + (p[i] - target) * (la[i] - lb[i]);
            }
        }
        beta = (beta - beta_lr * grad / n).max(T::zero()).min(T::one());
    }
    Ok(beta)
}
