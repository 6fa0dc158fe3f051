use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::head::{ClassifierHead, DEFAULT_DROPOUT, DEFAULT_HIDDEN};
use super::{argmax, log_softmax, softmax};
use crate::corpus::{ClassLabel, ClassWeights, NUM_CLASSES};
use crate::error::{Error, Result};
use crate::metrics::{confusion, f1_report};

pub const DEFAULT_LR: f64 = 0.001;
pub const DEFAULT_BATCH: usize = 32;
pub const DEFAULT_PATIENCE: usize = 10;
pub const DEFAULT_MAX_EPOCHS: usize = 200;

fn check_labels(logits: &[[f64; NUM_CLASSES]], labels: &[usize]) -> Result<()> {
    if logits.len() != labels.len() {
        return Err(Error::LengthMismatch(logits.len(), labels.len()));
    }
    if let Some(&label) = labels.iter().find(|&&l| l >= NUM_CLASSES) {
        return Err(Error::LabelOutOfRange {
            label,
            classes: NUM_CLASSES,
        });
    }
    Ok(())
}

/// `Σ w_y · -log softmax(z)_y / Σ w_y`; 0 for an empty batch.
pub fn weighted_ce(logits: &[[f64; NUM_CLASSES]], labels: &[usize], weights: &ClassWeights) -> Result<f64> {
    Ok(weighted_ce_grad(logits, labels, weights)?.0)
}

/// Loss and its gradient with respect to every logit row.
pub fn weighted_ce_grad(
    logits: &[[f64; NUM_CLASSES]],
    labels: &[usize],
    weights: &ClassWeights,
) -> Result<(f64, Vec<[f64; NUM_CLASSES]>)> {
    check_labels(logits, labels)?;
    let norm: f64 = labels.iter().map(|&y| weights.get(y)).sum();
    if logits.is_empty() || norm == 0.0 {
        return Ok((0.0, vec![[0.0; NUM_CLASSES]; logits.len()]));
    }
    let mut loss = 0.0;
    let mut grads = Vec::with_capacity(logits.len());
    for (z, &y) in logits.iter().zip(labels) {
        let w = weights.get(y) / norm;
        loss -= w * log_softmax(z)[y];
        let p = softmax(z);
        let mut g = [0.0; NUM_CLASSES];
        for k in 0..NUM_CLASSES {
            g[k] = w * (p[k] - f64::from(u8::from(k == y)));
        }
        grads.push(g);
    }
    Ok((loss, grads))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: DEFAULT_LR,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Adam with bias-corrected moment estimates.
#[derive(Clone, Debug, PartialEq)]
pub struct Adam {
    pub config: AdamConfig,
    m: Vec<f64>,
    v: Vec<f64>,
    t: u32,
}

impl Adam {
    pub fn new(num_params: usize, config: AdamConfig) -> Self {
        Self {
            config,
            m: vec![0.0; num_params],
            v: vec![0.0; num_params],
            t: 0,
        }
    }

    pub fn steps(&self) -> u32 {
        self.t
    }

    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) -> Result<()> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(Error::Shape(format!(
                "optimizer holds {} parameters, got {} params and {} grads",
                self.m.len(),
                params.len(),
                grads.len()
            )));
        }
        if let Some(i) = grads.iter().position(|g| !g.is_finite()) {
            return Err(Error::NonFiniteGradient(i));
        }
        let AdamConfig { lr, beta1, beta2, eps } = self.config;
        self.t += 1;
        let c1 = 1.0 - beta1.powi(self.t as i32);
        let c2 = 1.0 - beta2.powi(self.t as i32);
        for (((p, &g), m), v) in params.iter_mut().zip(grads).zip(&mut self.m).zip(&mut self.v) {
            *m = beta1 * *m + (1.0 - beta1) * g;
            *v = beta2 * *v + (1.0 - beta2) * g * g;
            *p -= lr * (*m / c1) / ((*v / c2).sqrt() + eps);
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub adam: AdamConfig,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub hidden_dim: usize,
    pub dropout: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            adam: AdamConfig::default(),
            batch_size: DEFAULT_BATCH,
            max_epochs: DEFAULT_MAX_EPOCHS,
            patience: DEFAULT_PATIENCE,
            hidden_dim: DEFAULT_HIDDEN,
            dropout: DEFAULT_DROPOUT,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if !(self.adam.lr > 0.0 && self.adam.lr.is_finite()) {
            return bad("learning rate must be positive");
        }
        if self.patience == 0 {
            return bad("patience must be at least 1");
        }
        if self.batch_size == 0 || self.max_epochs == 0 || self.hidden_dim == 0 {
            return bad("batch size, epoch limit and hidden width must be positive");
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad("dropout must lie in [0, 1)");
        }
        Ok(())
    }
}

/// A pooled backbone embedding with its gold label.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LabeledEmbedding {
    pub x: Vec<f64>,
    pub label: ClassLabel,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub val_f1_macro: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub epochs: Vec<EpochStats>,
    pub best_epoch: usize,
    pub stopped_early: bool,
    pub class_weights: ClassWeights,
}

impl TrainHistory {
    pub fn best(&self) -> &EpochStats {
        &self.epochs[self.best_epoch - 1]
    }
}

/// Validation loss (uniform weights) and F1-macro in evaluation mode.
pub fn evaluate_head(head: &ClassifierHead, data: &[LabeledEmbedding], weights: &ClassWeights) -> Result<(f64, f64)> {
    let logits: Vec<[f64; NUM_CLASSES]> = data.iter().map(|e| head.forward(&e.x)).collect::<Result<_>>()?;
    let labels: Vec<usize> = data.iter().map(|e| e.label.id()).collect();
    let loss = weighted_ce(&logits, &labels, weights)?;
    let preds: Vec<usize> = logits.iter().map(|z| argmax(z)).collect();
    let f1 = f1_report(&confusion(&labels, &preds, NUM_CLASSES)?)?.macro_avg;
    Ok((loss, f1))
}

/// Trains a freshly initialised head on frozen embeddings with weighted
/// cross-entropy (class weights from `train` only) and Adam. Stops after
/// `max_epochs` or once val F1-macro has not strictly improved for
/// `patience` epochs, returning the best-on-val head.
pub fn train_head(
    train: &[LabeledEmbedding],
    val: &[LabeledEmbedding],
    config: &TrainConfig,
) -> Result<(ClassifierHead, TrainHistory)> {
    config.validate()?;
    if train.is_empty() || val.is_empty() {
        return Err(Error::Config("training and validation sets must be non-empty".into()));
    }
    let dim = train[0].x.len();
    if let Some(bad) = train.iter().chain(val).find(|e| e.x.len() != dim) {
        return Err(Error::Shape(format!("embedding of length {} among {dim}-dim inputs", bad.x.len())));
    }
    let mut counts = [0usize; NUM_CLASSES];
    for e in train {
        counts[e.label.id()] += 1;
    }
    let weights = ClassWeights::from_counts(&counts)?;

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut head = ClassifierHead::random(dim, config.hidden_dim, config.dropout, &mut rng)?;
    let mut adam = Adam::new(head.params().len(), config.adam);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut grads = vec![0.0; head.params().len()];

    let mut epochs = Vec::new();
    let mut best: Option<(f64, usize, ClassifierHead)> = None;
    let mut stale = 0;
    for epoch in 1..=config.max_epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        let mut weight_sum = 0.0;
        for batch in order.chunks(config.batch_size) {
            let traces = batch
                .iter()
                .map(|&i| head.forward_train(&train[i].x, &mut rng))
                .collect::<Result<Vec<_>>>()?;
            let logits: Vec<[f64; NUM_CLASSES]> = traces.iter().map(|t| t.logits).collect();
            let labels: Vec<usize> = batch.iter().map(|&i| train[i].label.id()).collect();
            let (loss, dlogits) = weighted_ce_grad(&logits, &labels, &weights)?;
            let batch_weight: f64 = labels.iter().map(|&y| weights.get(y)).sum();
            loss_sum += loss * batch_weight;
            weight_sum += batch_weight;

            grads.iter_mut().for_each(|g| *g = 0.0);
            for (trace, d) in traces.iter().zip(&dlogits) {
                head.backward(trace, d, &mut grads);
            }
            adam.step(head.params_mut(), &grads)?;
        }
        let (val_loss, val_f1_macro) = evaluate_head(&head, val, &weights)?;
        let stats = EpochStats {
            epoch,
            train_loss: loss_sum / weight_sum,
            val_loss,
            val_f1_macro,
        };
        log::debug!(
            "epoch {epoch}: train loss {:.4}, val loss {val_loss:.4}, val F1-macro {val_f1_macro:.4}",
            stats.train_loss
        );
        epochs.push(stats);
        if best.as_ref().map_or(true, |(f, _, _)| val_f1_macro > *f) {
            best = Some((val_f1_macro, epoch, head.clone()));
            stale = 0;
        } else {
            stale += 1;
            if stale >= config.patience {
                break;
            }
        }
    }
    let (_, best_epoch, best_head) = best.expect("at least one epoch runs");
    let stopped_early = epochs.len() < config.max_epochs;
    Ok((
        best_head,
        TrainHistory {
            epochs,
            best_epoch,
            stopped_early,
            class_weights: weights,
        },
    ))
}
