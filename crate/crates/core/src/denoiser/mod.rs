//! The node denoiser: an edge-class-biased graph attention network that reads
//! noisy categories plus rhythmic features and predicts clean categories.

mod checkpoint;
mod network;
mod train;

use ndarray::{Array2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::RFeatures;
use crate::scalar::Real;
use crate::score::ScaleDegreeClass;

pub use checkpoint::{load_checkpoint, save_checkpoint, write_loss_csv, Checkpoint};
pub use network::{DenoiserParams, LayerParams};
pub use train::{evaluate, train, Adam, EpochLoss, TrainOutcome};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DenoiserHyperparams {
    pub layers: usize,
    pub hidden_dim: usize,
    pub heads: usize,
    pub time_dim: usize,
    pub steps: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub validation_split: f64,
    pub features: RFeatures,
}

impl DenoiserHyperparams {
    /// Full-size profile: 4 layers, width 256, 8 heads, 100 steps.
    pub fn full() -> Self {
        DenoiserHyperparams {
            layers: 4,
            hidden_dim: 256,
            heads: 8,
            time_dim: 16,
            steps: 100,
            epochs: 150,
            batch_size: 8,
            learning_rate: 3e-4,
            validation_split: 0.1,
            features: RFeatures::ALL,
        }
    }

    /// Desk-scale profile for tests and quick runs.
    pub fn toy() -> Self {
        DenoiserHyperparams { layers: 2, hidden_dim: 32, heads: 4, epochs: 30, ..Self::full() }
    }

    pub fn input_dim(&self) -> usize {
        ScaleDegreeClass::COUNT + self.features.width()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Hyperparams(m.to_string()));
        if self.layers == 0 || self.hidden_dim == 0 || self.heads == 0 {
            return bad("layers, hidden_dim and heads must be positive");
        }
        if !self.hidden_dim.is_multiple_of(self.heads) {
            return bad("hidden_dim must be divisible by heads");
        }
        if self.time_dim == 0 || !self.time_dim.is_multiple_of(2) {
            return bad("time_dim must be a positive even number");
        }
        if self.steps == 0 || self.batch_size == 0 {
            return bad("steps and batch_size must be positive");
        }
        if !(self.validation_split > 0.0 && self.validation_split < 1.0) {
            return bad("validation_split must lie in (0, 1)");
        }
        if !(self.learning_rate > 0.0) {
            return bad("learning_rate must be positive");
        }
        Ok(())
    }
}

impl Default for DenoiserHyperparams {
    fn default() -> Self {
        Self::toy()
    }
}

/// Predicted clean-category distribution for every node.
#[derive(Clone, Debug, PartialEq)]
pub struct DenoiserOutput<F> {
    pub logits: Array2<F>,
    pub probs: Array2<F>,
}

impl<F: Real> DenoiserOutput<F> {
    pub fn from_logits(logits: Array2<F>) -> Self {
        let probs = softmax_rows(&logits);
        DenoiserOutput { logits, probs }
    }

    /// Wraps given probabilities; zero entries become `-inf` logits.
    pub fn from_probs(probs: Array2<F>) -> Self {
        let logits = probs.mapv(|p| p.ln());
        DenoiserOutput { logits, probs }
    }

    pub fn argmax(&self) -> Vec<ScaleDegreeClass> {
        self.probs
            .rows()
            .into_iter()
            .map(|row| {
                let mut best = 0;
                for (c, &p) in row.iter().enumerate() {
                    if p > row[best] {
                        best = c;
                    }
                }
                ScaleDegreeClass::ALL[best]
            })
            .collect()
    }
}

pub(crate) fn softmax_rows<F: Real>(logits: &Array2<F>) -> Array2<F> {
    let mut out = logits.clone();
    for mut row in out.rows_mut() {
        let max = row.iter().fold(F::neg_infinity(), |a, &b| a.max(b));
        row.mapv_inplace(|v| (v - max).exp());
        let total: F = row.sum();
        row.mapv_inplace(|v| v / total);
    }
    out
}

/// Sum over nodes of the categorical cross-entropy against the clean classes.
pub fn loss<F: Real>(output: &DenoiserOutput<F>, x0: &[ScaleDegreeClass]) -> F {
    output
        .logits
        .axis_iter(Axis(0))
        .zip(x0)
        .map(|(row, c)| {
            let max = row.iter().fold(F::neg_infinity(), |a, &b| a.max(b));
            let lse = max + row.iter().map(|&v| (v - max).exp()).sum::<F>().ln();
            lse - row[c.index()]
        })
        .sum()
}
