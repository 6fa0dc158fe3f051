//! Section classification: pooled embeddings from a frozen backbone port and
//! the trainable two-layer head.

mod head;
mod train;

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{ClassLabel, NUM_CLASSES};
use crate::error::{Error, Result};
use crate::textprep::NormalizationRules;
use crate::tokenizers::{ModelFamily, TokenSequence, Tokenizer};

pub use head::{ClassifierHead, ForwardTrace, DEFAULT_DROPOUT, DEFAULT_HIDDEN};
pub use train::{
    evaluate_head, train_head, weighted_ce, weighted_ce_grad, Adam, AdamConfig, EpochStats, LabeledEmbedding,
    TrainConfig, TrainHistory, DEFAULT_BATCH, DEFAULT_LR, DEFAULT_MAX_EPOCHS, DEFAULT_PATIENCE,
};

/// A frozen language model: per-position hidden states for an encoded
/// sequence. Implementations must not change between calls.
pub trait EmbeddingPort: Send + Sync {
    fn hidden_dim(&self) -> usize;

    /// One `hidden_dim` row per position of `seq`, padding included.
    fn hidden_states(&self, seq: &TokenSequence) -> Result<Vec<Vec<f32>>>;
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Pooling {
    /// First position.
    Cls,
    /// Mean over positions with mask 1.
    Mean,
    /// Last position with mask 1.
    Last,
}

impl Pooling {
    pub fn default_for(family: ModelFamily) -> Self {
        match family {
            ModelFamily::Xlnet => Pooling::Last,
            _ => Pooling::Cls,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Pooling::Cls => "cls",
            Pooling::Mean => "mean",
            Pooling::Last => "last",
        }
    }
}

impl fmt::Display for Pooling {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Pooling {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "cls" => Ok(Pooling::Cls),
            "mean" => Ok(Pooling::Mean),
            "last" => Ok(Pooling::Last),
            _ => Err(Error::Config(format!("unknown pooling {s:?}"))),
        }
    }
}

/// Pools the port's hidden states over the active positions of `seq`.
pub fn embed(seq: &TokenSequence, port: &dyn EmbeddingPort, pooling: Pooling) -> Result<Vec<f64>> {
    let active: Vec<usize> = (0..seq.mask.len()).filter(|&i| seq.mask[i] == 1).collect();
    if active.is_empty() {
        return Err(Error::EmptyMask);
    }
    let states = port.hidden_states(seq)?;
    let dim = port.hidden_dim();
    if states.len() != seq.len() || states.iter().any(|s| s.len() != dim) {
        return Err(Error::Shape(format!(
            "embedding port returned {} rows for {} positions (expected width {dim})",
            states.len(),
            seq.len()
        )));
    }
    let pooled = match pooling {
        Pooling::Cls => states[active[0]].iter().map(|&v| f64::from(v)).collect(),
        Pooling::Last => states[*active.last().unwrap()].iter().map(|&v| f64::from(v)).collect(),
        Pooling::Mean => {
            let mut acc = vec![0.0; dim];
            for &i in &active {
                for (a, &v) in acc.iter_mut().zip(&states[i]) {
                    *a += f64::from(v);
                }
            }
            acc.iter().map(|a| a / active.len() as f64).collect()
        }
    };
    Ok(pooled)
}

/// [`embed`] over many sequences in parallel; output order follows input.
pub fn embed_batch(seqs: &[TokenSequence], port: &dyn EmbeddingPort, pooling: Pooling) -> Result<Vec<Vec<f64>>> {
    seqs.par_iter().map(|s| embed(s, port, pooling)).collect()
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|z| (z - m).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

pub fn log_softmax(logits: &[f64]) -> Vec<f64> {
    let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = m + logits.iter().map(|z| (z - m).exp()).sum::<f64>().ln();
    logits.iter().map(|z| z - lse).collect()
}

/// Index of the largest value; the lowest index wins ties.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub label: ClassLabel,
    pub probabilities: [f64; NUM_CLASSES],
}

impl Prediction {
    pub fn from_logits(logits: &[f64; NUM_CLASSES]) -> Self {
        let p = softmax(logits);
        let mut probabilities = [0.0; NUM_CLASSES];
        probabilities.copy_from_slice(&p);
        Self {
            label: ClassLabel::from_id(argmax(logits)).expect("argmax is a class id"),
            probabilities,
        }
    }
}

/// Everything needed to label a piece of section text.
#[derive(Clone)]
pub struct Classifier {
    pub rules: NormalizationRules,
    pub tokenizer: Tokenizer,
    pub port: Arc<dyn EmbeddingPort>,
    pub pooling: Pooling,
    pub head: ClassifierHead,
}

impl fmt::Debug for Classifier {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Classifier")
            .field("family", &self.tokenizer.family())
            .field("pooling", &self.pooling)
            .field("input_dim", &self.head.input_dim())
            .finish_non_exhaustive()
    }
}

impl Classifier {
    pub fn new(
        rules: NormalizationRules,
        tokenizer: Tokenizer,
        port: Arc<dyn EmbeddingPort>,
        pooling: Pooling,
        head: ClassifierHead,
    ) -> Result<Self> {
        if port.hidden_dim() != head.input_dim() {
            return Err(Error::Shape(format!(
                "backbone width {} does not match head input {}",
                port.hidden_dim(),
                head.input_dim()
            )));
        }
        Ok(Self {
            rules,
            tokenizer,
            port,
            pooling,
            head,
        })
    }

    /// Normalizes, encodes and pools `text`.
    pub fn embed_text(&self, text: &str) -> Result<Vec<f64>> {
        let seq = self.tokenizer.encode(&self.rules.normalize(text));
        embed(&seq, self.port.as_ref(), self.pooling)
    }

    pub fn predict(&self, text: &str) -> Result<Prediction> {
        let x = self.embed_text(text)?;
        Ok(Prediction::from_logits(&self.head.forward(&x)?))
    }
}

/// Embeds texts for training or evaluation with the given tokenizer, rules
/// and pooling. Order follows input.
pub fn embed_texts(
    texts: &[&str],
    rules: &NormalizationRules,
    tokenizer: &Tokenizer,
    port: &dyn EmbeddingPort,
    pooling: Pooling,
) -> Result<Vec<Vec<f64>>> {
    texts
        .par_iter()
        .map(|t| embed(&tokenizer.encode(&rules.normalize(t)), port, pooling))
        .collect()
}
