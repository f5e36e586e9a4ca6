use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::network::DenoiserParams;
use super::DenoiserHyperparams;
use crate::error::{Error, Result};
use crate::graph::ScoreGraph;
use crate::scalar::Real;
use crate::schedule::{forward_sample, Marginal, NoiseSchedule};
use crate::score::ScaleDegreeClass;

/// Adaptive-moment optimizer with a constant step size.
pub struct Adam<F> {
    lr: F,
    beta1: F,
    beta2: F,
    eps: F,
    step: i32,
    m: Vec<Vec<F>>,
    v: Vec<Vec<F>>,
}

impl<F: Real> Adam<F> {
    pub fn new(lr: f64, params: &DenoiserParams<F>) -> Self {
        let shapes: Vec<usize> = params.tensors().iter().map(|(_, t)| t.len()).collect();
        Adam {
            lr: F::lit(lr),
            beta1: F::lit(0.9),
            beta2: F::lit(0.999),
            eps: F::lit(1e-8),
            step: 0,
            m: shapes.iter().map(|&n| vec![F::zero(); n]).collect(),
            v: shapes.iter().map(|&n| vec![F::zero(); n]).collect(),
        }
    }

    pub fn update(&mut self, params: &mut DenoiserParams<F>, grad: &DenoiserParams<F>) {
        self.step += 1;
        let c1 = F::one() - self.beta1.powi(self.step);
        let c2 = F::one() - self.beta2.powi(self.step);
        let grads = grad.tensors();
        for (k, (_, mut p)) in params.tensors_mut().into_iter().enumerate() {
            let (m, v) = (&mut self.m[k], &mut self.v[k]);
            for (i, (w, &g)) in p.iter_mut().zip(grads[k].1.iter()).enumerate() {
                m[i] = self.beta1 * m[i] + (F::one() - self.beta1) * g;
                v[i] = self.beta2 * v[i] + (F::one() - self.beta2) * g * g;
                let mh = m[i] / c1;
                let vh = v[i] / c2;
                *w -= self.lr * mh / (vh.sqrt() + self.eps);
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpochLoss {
    pub epoch: usize,
    pub train: f64,
    pub validation: f64,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome<F> {
    pub params: DenoiserParams<F>,
    pub initial_validation: f64,
    pub history: Vec<EpochLoss>,
    pub train_indices: Vec<usize>,
    pub validation_indices: Vec<usize>,
}

/// Draws per validation evaluation of one graph.
const VALIDATION_DRAWS: usize = 8;

fn classes(x: &[usize]) -> Vec<ScaleDegreeClass> {
    x.iter().map(|&c| ScaleDegreeClass::ALL[c]).collect()
}

fn indices(x: &[ScaleDegreeClass]) -> Vec<usize> {
    x.iter().map(|c| c.index()).collect()
}

/// Mean per-graph loss over fixed noise draws (same draws for every call
/// with the same seed).
pub fn evaluate<F: Real>(
    params: &DenoiserParams<F>,
    graphs: &[&ScoreGraph<F>],
    schedule: &NoiseSchedule<F>,
    m: &Marginal<F>,
    seed: u64,
) -> Result<f64> {
    if graphs.is_empty() {
        return Ok(f64::NAN);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut total = 0.0;
    let mut count = 0usize;
    for g in graphs {
        let x0 = indices(&g.x);
        for _ in 0..VALIDATION_DRAWS {
            let t = rng.gen_range(1..=schedule.steps());
            let xt = classes(&forward_sample(&x0, t, schedule, m, &mut rng)?);
            let out = params.forward(&g.topology, &xt, t)?;
            total += super::loss(&out, &g.x).as_f64();
            count += 1;
        }
    }
    Ok(total / count as f64)
}

/// Splits the corpus, then runs minibatch training: each sample gets a
/// uniform step in `1..=T`, is corrupted by the forward process, and
/// contributes its node cross-entropy.
pub fn train<F: Real>(
    corpus: &[ScoreGraph<F>],
    hyper: &DenoiserHyperparams,
    schedule: &NoiseSchedule<F>,
    m: &Marginal<F>,
    seed: u64,
) -> Result<TrainOutcome<F>> {
    hyper.validate()?;
    if schedule.steps() != hyper.steps {
        return Err(Error::Hyperparams(format!(
            "schedule has {} steps, model expects {}",
            schedule.steps(),
            hyper.steps
        )));
    }
    if corpus.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..corpus.len()).collect();
    order.shuffle(&mut rng);
    let (train_idx, val_idx) = if corpus.len() == 1 {
        // nothing to hold out: validate on the training graph
        (order.clone(), order.clone())
    } else {
        let n_val = ((corpus.len() as f64 * hyper.validation_split).round() as usize)
            .clamp(1, corpus.len() - 1);
        let (v, t) = order.split_at(n_val);
        (t.to_vec(), v.to_vec())
    };
    let val: Vec<&ScoreGraph<F>> = val_idx.iter().map(|&i| &corpus[i]).collect();
    let val_seed = seed ^ 0x05ee_d0f7_a11d;

    let mut params = DenoiserParams::init(hyper.clone(), &mut rng)?;
    let mut adam = Adam::new(hyper.learning_rate, &params);
    let initial_validation = evaluate(&params, &val, schedule, m, val_seed)?;
    let mut history = Vec::with_capacity(hyper.epochs);
    let mut epoch_order = train_idx.clone();

    for epoch in 1..=hyper.epochs {
        epoch_order.shuffle(&mut rng);
        let mut train_total = 0.0;
        for batch in epoch_order.chunks(hyper.batch_size) {
            let mut grad = params.zeros_like();
            for &gi in batch {
                let g = &corpus[gi];
                let t = rng.gen_range(1..=schedule.steps());
                let xt = classes(&forward_sample(&indices(&g.x), t, schedule, m, &mut rng)?);
                let (value, gg) = params.loss_and_grad(&g.topology, &xt, t, &g.x)?;
                train_total += value.as_f64();
                grad.add_scaled(&gg, F::one());
            }
            let inv = F::one() / F::lit(batch.len() as f64);
            let mut mean = grad.zeros_like();
            mean.add_scaled(&grad, inv);
            adam.update(&mut params, &mean);
        }
        let validation = evaluate(&params, &val, schedule, m, val_seed)?;
        history.push(EpochLoss {
            epoch,
            train: train_total / train_idx.len() as f64,
            validation,
        });
    }
    Ok(TrainOutcome {
        params,
        initial_validation,
        history,
        train_indices: train_idx,
        validation_indices: val_idx,
    })
}
