//! Closed-form discrete diffusion: cosine schedule, marginal-noise transition
//! matrices, forward corruption, and the categorical posterior of the
//! reverse process.
//!
//! Node categories are plain indices `0..k` here so the same code serves the
//! 18-class score model and small toy problems.

use std::f64::consts::FRAC_PI_2;

use ndarray::Array2;
use rand::Rng;

use crate::error::{Error, Result};
use crate::graph::phrase_nodes;
use crate::scalar::{Prob, Real};
use crate::score::Phrase;

/// `ᾱ(t) = f(t)/f(0)` with `f(t) = cos²(((t/T + s)/(1 + s))·π/2)`, clamped to [0, 1].
pub fn cosine_alpha_bar<F: Real>(t: usize, steps: usize, s: f64) -> Result<F> {
    if t > steps || steps == 0 {
        return Err(Error::StepOutOfRange { t, steps });
    }
    let f = |t: usize| {
        let x = ((t as f64 / steps as f64 + s) / (1.0 + s)) * FRAC_PI_2;
        x.cos().powi(2)
    };
    Ok(F::lit((f(t) / f(0)).clamp(0.0, 1.0)))
}

#[derive(Clone, Debug, PartialEq)]
pub struct NoiseSchedule<F> {
    steps: usize,
    offset: f64,
    alpha_bar: Vec<F>,
    alpha: Vec<F>,
}

impl<F: Real> NoiseSchedule<F> {
    pub fn cosine(steps: usize, offset: f64) -> Result<Self> {
        if steps == 0 {
            return Err(Error::StepOutOfRange { t: 0, steps });
        }
        if !(offset > 0.0 && offset.is_finite()) {
            return Err(Error::Config(format!("schedule offset must be positive, got {offset}")));
        }
        let alpha_bar = (0..=steps)
            .map(|t| cosine_alpha_bar(t, steps, offset))
            .collect::<Result<Vec<F>>>()?;
        let alpha = (1..=steps)
            .map(|t| {
                let prev = alpha_bar[t - 1];
                if prev > F::zero() {
                    (alpha_bar[t] / prev).min(F::one())
                } else {
                    F::zero()
                }
            })
            .collect();
        Ok(NoiseSchedule { steps, offset, alpha_bar, alpha })
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn offset(&self) -> f64 {
        self.offset
    }

    pub fn alpha_bars(&self) -> &[F] {
        &self.alpha_bar
    }

    pub fn alpha_bar(&self, t: usize) -> F {
        self.alpha_bar[t]
    }

    /// Single-step retention `α(t) = ᾱ(t)/ᾱ(t−1)`, for `1 ≤ t ≤ T`.
    pub fn alpha(&self, t: usize) -> F {
        self.alpha[t - 1]
    }

    fn check(&self, t: usize) -> Result<()> {
        if t > self.steps {
            return Err(Error::StepOutOfRange { t, steps: self.steps });
        }
        Ok(())
    }

    pub fn qbar_at(&self, t: usize, m: &Marginal<F>) -> Result<TransitionMatrix<F>> {
        self.check(t)?;
        qbar(self.alpha_bar[t], m)
    }

    pub fn q_at(&self, t: usize, m: &Marginal<F>) -> Result<TransitionMatrix<F>> {
        if t == 0 {
            return Err(Error::StepOutOfRange { t, steps: self.steps });
        }
        self.check(t)?;
        q_step(self.alpha(t), m)
    }

    /// Bayes posterior over `x(t−1)` given the clean class and the noisy class.
    pub fn posterior(&self, xt: usize, x0: usize, t: usize, m: &Marginal<F>) -> Result<Vec<F>> {
        if t == 0 {
            return Err(Error::StepOutOfRange { t, steps: self.steps });
        }
        let prev = self.qbar_at(t - 1, m)?;
        let step = self.q_at(t, m)?;
        Ok(posterior_from(&prev, &step, xt, x0))
    }
}

/// A probability vector over node categories.
#[derive(Clone, Debug, PartialEq)]
pub struct Marginal<P> {
    probs: Vec<P>,
}

impl<P: Prob> Marginal<P> {
    /// Normalizes non-negative weights.
    pub fn from_weights(weights: Vec<P>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::InvalidDistribution("no categories".into()));
        }
        if weights.iter().any(|w| !(*w >= P::zero())) {
            return Err(Error::InvalidDistribution("negative or NaN weight".into()));
        }
        let total = weights.iter().fold(P::zero(), |a, &b| a + b);
        if !(total > P::zero()) {
            return Err(Error::InvalidDistribution("weights sum to zero".into()));
        }
        Ok(Marginal { probs: weights.into_iter().map(|w| w / total).collect() })
    }

    pub fn uniform(k: usize) -> Result<Self> {
        Self::from_weights(vec![P::one(); k])
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    pub fn probs(&self) -> &[P] {
        &self.probs
    }

    pub fn get(&self, c: usize) -> P {
        self.probs[c]
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TransitionKind {
    Step,
    Cumulative,
}

/// Row-stochastic `k × k` matrix; row = from, column = to.
#[derive(Clone, Debug, PartialEq)]
pub struct TransitionMatrix<P> {
    pub matrix: Array2<P>,
    pub kind: TransitionKind,
}

impl<P: Prob> TransitionMatrix<P> {
    pub fn get(&self, from: usize, to: usize) -> P {
        self.matrix[[from, to]]
    }

    pub fn size(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn row_sums(&self) -> Vec<P> {
        self.matrix
            .rows()
            .into_iter()
            .map(|r| r.iter().fold(P::zero(), |a, &b| a + b))
            .collect()
    }

    /// `self · next`, rows renormalized to absorb rounding.
    pub fn then(&self, next: &TransitionMatrix<P>) -> TransitionMatrix<P> {
        let mut matrix = self.matrix.dot(&next.matrix);
        for mut row in matrix.rows_mut() {
            let total = row.iter().fold(P::zero(), |a, &b| a + b);
            if total > P::zero() {
                row.mapv_inplace(|v| v / total);
            }
        }
        TransitionMatrix { matrix, kind: TransitionKind::Cumulative }
    }
}

fn mix<P: Prob>(keep: P, m: &Marginal<P>, kind: TransitionKind) -> Result<TransitionMatrix<P>> {
    if !(keep >= P::zero() && keep <= P::one()) {
        return Err(Error::InvalidDistribution(format!("retention {keep:?} outside [0, 1]")));
    }
    let k = m.len();
    let noise = P::one() - keep;
    let matrix = Array2::from_shape_fn((k, k), |(i, j)| {
        let stay = if i == j { keep } else { P::zero() };
        stay + noise * m.get(j)
    });
    Ok(TransitionMatrix { matrix, kind })
}

/// Cumulative transition `ᾱ·I + (1 − ᾱ)·1mᵀ`.
pub fn qbar<P: Prob>(alpha_bar: P, m: &Marginal<P>) -> Result<TransitionMatrix<P>> {
    mix(alpha_bar, m, TransitionKind::Cumulative)
}

/// Single-step transition `α·I + (1 − α)·1mᵀ`.
pub fn q_step<P: Prob>(alpha: P, m: &Marginal<P>) -> Result<TransitionMatrix<P>> {
    mix(alpha, m, TransitionKind::Step)
}

/// `q(x(t−1) | x0, xt) ∝ Q̄(t−1)[x0, ·] ⊙ Q(t)[·, xt]`; all zeros when the
/// observed `xt` is unreachable from `x0`.
pub fn posterior_from<P: Prob>(
    qbar_prev: &TransitionMatrix<P>,
    q_t: &TransitionMatrix<P>,
    xt: usize,
    x0: usize,
) -> Vec<P> {
    let k = qbar_prev.size();
    let num: Vec<P> = (0..k).map(|c| qbar_prev.get(x0, c) * q_t.get(c, xt)).collect();
    let z = num.iter().fold(P::zero(), |a, &b| a + b);
    if z > P::zero() {
        num.into_iter().map(|v| v / z).collect()
    } else {
        vec![P::zero(); k]
    }
}

/// Draws an index with probability proportional to `weights`.
pub fn sample_index<F: Real, R: Rng + ?Sized>(weights: &[F], rng: &mut R) -> Option<usize> {
    let total: f64 = weights.iter().map(|w| w.as_f64()).sum();
    if !(total > 0.0) {
        return None;
    }
    let mut u = rng.gen::<f64>() * total;
    let mut last = None;
    for (i, w) in weights.iter().enumerate() {
        let w = w.as_f64();
        if w > 0.0 {
            if u < w {
                return Some(i);
            }
            u -= w;
            last = Some(i);
        }
    }
    last
}

/// Corrupts clean classes to step `t`; each node draws from its row of `Q̄(t)`.
pub fn forward_sample<F: Real, R: Rng + ?Sized>(
    x0: &[usize],
    t: usize,
    schedule: &NoiseSchedule<F>,
    m: &Marginal<F>,
    rng: &mut R,
) -> Result<Vec<usize>> {
    let q = schedule.qbar_at(t, m)?;
    x0.iter()
        .map(|&c| {
            let row = q.matrix.row(c);
            sample_index(row.as_slice().expect("standard layout"), rng)
                .ok_or_else(|| Error::InvalidDistribution(format!("empty row {c}")))
        })
        .collect()
}

/// Empirical node-category frequencies over the corpus graphs.
pub fn marginals<F: Real>(corpus: &[Phrase]) -> Result<Marginal<F>> {
    if corpus.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let mut counts = vec![F::zero(); crate::score::ScaleDegreeClass::COUNT];
    for phrase in corpus {
        for node in phrase_nodes(phrase) {
            counts[phrase.degree_at(node.events[0])?.index()] += F::one();
        }
    }
    Marginal::from_weights(counts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::Ratio;

    fn r(n: i64, d: i64) -> Ratio {
        Ratio::new(n, d)
    }

    #[test]
    fn endpoints() {
        assert_eq!(cosine_alpha_bar::<f64>(0, 100, 0.008).unwrap(), 1.0);
        assert!(cosine_alpha_bar::<f64>(100, 100, 0.008).unwrap() < 1e-12);
        assert!(cosine_alpha_bar::<f64>(101, 100, 0.008).is_err());
    }

    #[test]
    fn qbar_limits_exact() {
        let m = Marginal::from_weights(vec![r(1, 2), r(3, 10), r(1, 5)]).unwrap();
        let id = qbar(r(1, 1), &m).unwrap();
        assert_eq!(id.matrix, Array2::from_shape_fn((3, 3), |(i, j)| r((i == j) as i64, 1)));
        let flat = qbar(r(0, 1), &m).unwrap();
        for row in flat.matrix.rows() {
            assert_eq!(row.to_vec(), m.probs().to_vec());
        }
        let q = qbar(r(2, 5), &m).unwrap();
        assert_eq!(q.matrix.row(0).to_vec(), vec![r(7, 10), r(9, 50), r(3, 25)]);
        assert!(q.row_sums().iter().all(|s| *s == r(1, 1)));
    }

    #[test]
    fn qbar_rejects_bad_retention() {
        let m = Marginal::<f64>::uniform(3).unwrap();
        assert!(qbar(1.5, &m).is_err());
        assert!(Marginal::from_weights(vec![1.0, -0.5]).is_err());
        assert!(Marginal::from_weights(vec![0.0, 0.0]).is_err());
    }

    #[test]
    fn posterior_at_first_step_is_clean_class() {
        let s = NoiseSchedule::<f64>::cosine(10, 0.008).unwrap();
        let m = Marginal::uniform(4).unwrap();
        for x0 in 0..4 {
            for xt in 0..4 {
                let p = s.posterior(xt, x0, 1, &m).unwrap();
                let expect: Vec<f64> = (0..4).map(|k| (k == x0) as u8 as f64).collect();
                assert_eq!(p, expect);
            }
        }
        assert!(s.posterior(0, 0, 0, &m).is_err());
    }

    #[test]
    fn unreachable_support_gives_zeros() {
        // class 2 has zero marginal mass, so it is unreachable from class 0
        let s = NoiseSchedule::<f64>::cosine(5, 0.008).unwrap();
        let m = Marginal::from_weights(vec![0.5, 0.5, 0.0]).unwrap();
        assert_eq!(s.posterior(2, 0, 3, &m).unwrap(), vec![0.0; 3]);
        let p = s.posterior(1, 0, 3, &m).unwrap();
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn forward_sample_at_zero_is_identity() {
        use rand::SeedableRng;
        let s = NoiseSchedule::<f64>::cosine(100, 0.008).unwrap();
        let m = Marginal::uniform(18).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let x0: Vec<usize> = (0..18).collect();
        assert_eq!(forward_sample(&x0, 0, &s, &m, &mut rng).unwrap(), x0);
    }
}
