use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use ndarray::ArrayViewD;
use serde::{Deserialize, Serialize};

use super::network::DenoiserParams;
use super::train::EpochLoss;
use super::DenoiserHyperparams;
use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::schedule::Marginal;

const FORMAT: &str = "prolong-denoiser";
const VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct TensorDoc {
    shape: Vec<usize>,
    data: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct CheckpointDoc {
    format: String,
    version: u32,
    hyperparams: DenoiserHyperparams,
    schedule_offset: f64,
    marginal: Vec<f64>,
    tensors: BTreeMap<String, TensorDoc>,
}

/// Trained weights plus what generation needs to reproduce the noise model.
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint<F> {
    pub params: DenoiserParams<F>,
    pub schedule_offset: f64,
    pub marginal: Marginal<F>,
}

fn tensor_doc<F: Real>(t: &ArrayViewD<'_, F>) -> TensorDoc {
    TensorDoc { shape: t.shape().to_vec(), data: t.iter().map(|v| v.as_f64()).collect() }
}

pub fn save_checkpoint<F: Real>(path: &Path, ckpt: &Checkpoint<F>) -> Result<()> {
    let doc = CheckpointDoc {
        format: FORMAT.into(),
        version: VERSION,
        hyperparams: ckpt.params.hyper.clone(),
        schedule_offset: ckpt.schedule_offset,
        marginal: ckpt.marginal.probs().iter().map(|p| p.as_f64()).collect(),
        tensors: ckpt.params.tensors().iter().map(|(n, t)| (n.clone(), tensor_doc(t))).collect(),
    };
    fs::write(path, serde_json::to_string(&doc)?)?;
    Ok(())
}

pub fn load_checkpoint<F: Real>(path: &Path) -> Result<Checkpoint<F>> {
    let doc: CheckpointDoc = serde_json::from_str(&fs::read_to_string(path)?)?;
    if doc.format != FORMAT || doc.version != VERSION {
        return Err(Error::Checkpoint(format!(
            "unsupported container {} v{}",
            doc.format, doc.version
        )));
    }
    // any seed works: every tensor is overwritten below
    let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(0);
    let mut params = DenoiserParams::<F>::init(doc.hyperparams, &mut rng)?;
    for (name, mut t) in params.tensors_mut() {
        let stored = doc
            .tensors
            .get(&name)
            .ok_or_else(|| Error::Checkpoint(format!("missing tensor {name}")))?;
        if stored.shape != t.shape() {
            return Err(Error::Checkpoint(format!(
                "tensor {name} has shape {:?}, expected {:?}",
                stored.shape,
                t.shape()
            )));
        }
        for (w, &v) in t.iter_mut().zip(&stored.data) {
            *w = F::lit(v);
        }
    }
    let marginal = Marginal::from_weights(doc.marginal.iter().map(|&p| F::lit(p)).collect())?;
    Ok(Checkpoint { params, schedule_offset: doc.schedule_offset, marginal })
}

/// `epoch,train_loss,val_loss`, one row per epoch.
pub fn write_loss_csv(path: &Path, history: &[EpochLoss]) -> Result<()> {
    let mut out = String::from("epoch,train_loss,val_loss\n");
    for e in history {
        writeln!(out, "{},{},{}", e.epoch, e.train, e.validation).expect("string write");
    }
    fs::write(path, out)?;
    Ok(())
}
