//! Ancestral sampling from a trained denoiser, optionally steered towards
//! rule-abiding outputs by best-of-K candidate selection.

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::denoiser::DenoiserParams;
use crate::error::{Error, Result};
use crate::graph::{build_topology, rebuild_phrase, GraphTopology};
use crate::scalar::Real;
use crate::schedule::{sample_index, Marginal, NoiseSchedule};
use crate::score::{sample_rhythm, Phrase, RhythmMode, ScaleDegreeClass};
use crate::theory::{reject, rule_loss, RuleConfig, TheoryConfig, Verdict};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GuidanceConfig {
    /// Candidates drawn per reverse step; 1 disables guidance.
    pub candidates: usize,
    pub rules: RuleConfig,
}

impl Default for GuidanceConfig {
    fn default() -> Self {
        GuidanceConfig { candidates: 4, rules: RuleConfig::default() }
    }
}

/// Per-node distribution over `X(t−1)`: the posterior for each possible
/// clean class, weighted by the denoiser's belief in that class.
pub fn reverse_distribution<F: Real>(
    xt: &[ScaleDegreeClass],
    t: usize,
    p_hat: &Array2<F>,
    schedule: &NoiseSchedule<F>,
    m: &Marginal<F>,
) -> Result<Array2<F>> {
    let k = ScaleDegreeClass::COUNT;
    if p_hat.dim() != (xt.len(), k) {
        return Err(Error::Shape(format!(
            "prediction is {:?}, expected ({}, {k})",
            p_hat.dim(),
            xt.len()
        )));
    }
    if t == 0 || t > schedule.steps() {
        return Err(Error::StepOutOfRange { t, steps: schedule.steps() });
    }
    let mut cache: Vec<Option<Vec<Vec<F>>>> = vec![None; k];
    let mut out = Array2::zeros((xt.len(), k));
    for (i, x) in xt.iter().enumerate() {
        let c = x.index();
        if cache[c].is_none() {
            cache[c] = Some((0..k).map(|x0| schedule.posterior(c, x0, t, m)).collect::<Result<_>>()?);
        }
        let posts = cache[c].as_ref().unwrap();
        let mut row = out.row_mut(i);
        for (x0, post) in posts.iter().enumerate() {
            let w = p_hat[[i, x0]];
            for (dst, &p) in row.iter_mut().zip(post) {
                *dst += w * p;
            }
        }
        let total: F = row.iter().copied().sum();
        if !(total > F::zero()) {
            return Err(Error::NoSupport { node: i, t });
        }
        row.mapv_inplace(|v| v / total);
    }
    Ok(out)
}

/// One ancestral step `X(t) → X(t−1)`.
pub fn reverse_step<F: Real, R: Rng + ?Sized>(
    xt: &[ScaleDegreeClass],
    t: usize,
    p_hat: &Array2<F>,
    schedule: &NoiseSchedule<F>,
    m: &Marginal<F>,
    rng: &mut R,
) -> Result<Vec<ScaleDegreeClass>> {
    let dist = reverse_distribution(xt, t, p_hat, schedule, m)?;
    dist.rows()
        .into_iter()
        .enumerate()
        .map(|(i, row)| {
            sample_index(&row.to_vec(), rng)
                .map(|c| ScaleDegreeClass::ALL[c])
                .ok_or(Error::NoSupport { node: i, t })
        })
        .collect()
}

/// Draws `k` candidate steps and keeps the one the scorer likes best (lowest
/// score, earliest on ties). With `k = 1` this is exactly [`reverse_step`]
/// and the scorer is never called.
#[allow(clippy::too_many_arguments)]
pub fn scg_reverse_step<F: Real, R: Rng + ?Sized>(
    xt: &[ScaleDegreeClass],
    t: usize,
    p_hat: &Array2<F>,
    schedule: &NoiseSchedule<F>,
    m: &Marginal<F>,
    k: usize,
    scorer: &mut dyn FnMut(&[ScaleDegreeClass]) -> Result<u32>,
    rng: &mut R,
) -> Result<Vec<ScaleDegreeClass>> {
    if k == 0 {
        return Err(Error::Validation("guidance needs at least one candidate".into()));
    }
    let dist = reverse_distribution(xt, t, p_hat, schedule, m)?;
    let draw = |rng: &mut R| -> Result<Vec<ScaleDegreeClass>> {
        dist.rows()
            .into_iter()
            .enumerate()
            .map(|(i, row)| {
                sample_index(&row.to_vec(), rng)
                    .map(|c| ScaleDegreeClass::ALL[c])
                    .ok_or(Error::NoSupport { node: i, t })
            })
            .collect()
    };
    let mut best = draw(rng)?;
    if k == 1 {
        return Ok(best);
    }
    let mut best_score = scorer(&best)?;
    for _ in 1..k {
        let cand = draw(rng)?;
        let score = scorer(&cand)?;
        if score < best_score {
            best = cand;
            best_score = score;
        }
    }
    Ok(best)
}

/// Fills a skeleton with degrees by running the reverse chain from pure
/// noise. Candidates at step `t−1` are judged by the rule loss of the
/// denoiser's clean estimate from that candidate.
pub fn generate_phrase<F: Real, R: Rng + ?Sized>(
    params: &DenoiserParams<F>,
    schedule: &NoiseSchedule<F>,
    m: &Marginal<F>,
    skeleton: &Phrase,
    guidance: &GuidanceConfig,
    rng: &mut R,
) -> Result<Phrase> {
    let topology: GraphTopology<F> = build_topology(skeleton, params.hyper.features)?;
    let n = topology.n();
    if n == 0 {
        return Err(Error::EmptyPhrase);
    }
    let mut x: Vec<ScaleDegreeClass> = (0..n)
        .map(|_| {
            sample_index(m.probs(), rng)
                .map(|c| ScaleDegreeClass::ALL[c])
                .ok_or_else(|| Error::InvalidDistribution("empty marginal".into()))
        })
        .collect::<Result<_>>()?;
    for t in (1..=schedule.steps()).rev() {
        let p_hat = params.forward(&topology, &x, t)?.probs;
        let mut scorer = |cand: &[ScaleDegreeClass]| -> Result<u32> {
            let estimate = if t == 1 {
                cand.to_vec()
            } else {
                params.forward(&topology, cand, t - 1)?.argmax()
            };
            Ok(rule_loss(&rebuild_phrase(skeleton, &estimate)?, &guidance.rules))
        };
        x = scg_reverse_step(&x, t, &p_hat, schedule, m, guidance.candidates, &mut scorer, rng)?;
    }
    rebuild_phrase(skeleton, &x)
}

/// Per-phrase generator for index `i`; independent of how many threads run.
pub fn phrase_rng(seed: u64, i: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(i);
    rng
}

#[derive(Clone, Debug)]
pub struct GeneratedSample {
    pub index: usize,
    pub phrase: Phrase,
    pub verdict: Verdict,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LibraryRequest {
    pub count: usize,
    pub rhythm: RhythmMode,
    pub guidance: GuidanceConfig,
    pub theory: TheoryConfig,
}

impl Default for LibraryRequest {
    fn default() -> Self {
        LibraryRequest {
            count: 64,
            rhythm: RhythmMode::WholePhrase,
            guidance: GuidanceConfig::default(),
            theory: TheoryConfig::default(),
        }
    }
}

/// Generates `count` phrases in parallel on rhythms drawn from `corpus`, then
/// screens each with the theory rules. Output order and content depend only
/// on `seed`.
pub fn generate_library<F: Real>(
    params: &DenoiserParams<F>,
    schedule: &NoiseSchedule<F>,
    m: &Marginal<F>,
    corpus: &[Phrase],
    request: &LibraryRequest,
    seed: u64,
) -> Result<Vec<GeneratedSample>> {
    if corpus.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    (0..request.count)
        .into_par_iter()
        .map(|i| {
            let mut rng = phrase_rng(seed, i as u64);
            let skeleton = sample_rhythm(corpus, request.rhythm, &mut rng)?;
            let phrase = generate_phrase(params, schedule, m, &skeleton, &request.guidance, &mut rng)?;
            let verdict = reject(&phrase, &request.theory);
            Ok(GeneratedSample { index: i, phrase, verdict })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;

    fn schedule() -> (NoiseSchedule<f64>, Marginal<f64>) {
        let mut w = vec![0.0; 18];
        for (c, v) in w.iter_mut().enumerate().take(17) {
            *v = 1.0 + c as f64;
        }
        (NoiseSchedule::cosine(10, 0.008).unwrap(), Marginal::from_weights(w).unwrap())
    }

    #[test]
    fn distribution_rows_are_normalized() {
        let (s, m) = schedule();
        let xt = [ScaleDegreeClass::One, ScaleDegreeClass::Five];
        let p = Array2::from_elem((2, 18), 1.0 / 18.0);
        let d = reverse_distribution(&xt, 4, &p, &s, &m).unwrap();
        for row in d.rows() {
            assert!((row.sum() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn single_candidate_matches_plain_step() {
        let (s, m) = schedule();
        let xt = [ScaleDegreeClass::Three, ScaleDegreeClass::Rest, ScaleDegreeClass::Six];
        let p = Array2::from_shape_fn((3, 18), |(i, c)| ((i * 7 + c) % 5) as f64 + 0.1);
        let p = &p / &p.sum_axis(ndarray::Axis(1)).insert_axis(ndarray::Axis(1));
        let a = reverse_step(&xt, 6, &p, &s, &m, &mut phrase_rng(3, 0)).unwrap();
        let mut never = |_: &[ScaleDegreeClass]| -> Result<u32> { panic!("scored") };
        let b = scg_reverse_step(&xt, 6, &p, &s, &m, 1, &mut never, &mut phrase_rng(3, 0)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn guidance_prefers_low_scores() {
        let (s, m) = schedule();
        let xt = [ScaleDegreeClass::One; 6];
        let p = Array2::from_elem((6, 18), 1.0 / 18.0);
        let mut score = |c: &[ScaleDegreeClass]| -> Result<u32> {
            Ok(c.iter().filter(|&&d| d != ScaleDegreeClass::One).count() as u32)
        };
        let mut rng = phrase_rng(9, 0);
        let mut plain_total = 0;
        let mut guided_total = 0;
        for _ in 0..50 {
            let plain = reverse_step(&xt, 9, &p, &s, &m, &mut rng).unwrap();
            plain_total += score(&plain).unwrap();
            let g = scg_reverse_step(&xt, 9, &p, &s, &m, 8, &mut score, &mut rng).unwrap();
            guided_total += score(&g).unwrap();
        }
        assert!(guided_total < plain_total);
    }

    #[test]
    fn zero_mixture_is_reported() {
        let (s, _) = schedule();
        // marginal with no mass on Rest: a Rest node cannot be explained
        // unless it was Rest at step 0, which the prediction rules out
        let mut w = vec![1.0; 18];
        w[17] = 0.0;
        let m = Marginal::from_weights(w).unwrap();
        let mut p = Array2::zeros((1, 18));
        p[[0, 0]] = 1.0;
        let err = reverse_distribution(&[ScaleDegreeClass::Rest], 3, &p, &s, &m).unwrap_err();
        assert!(matches!(err, Error::NoSupport { node: 0, t: 3 }));
    }
}
