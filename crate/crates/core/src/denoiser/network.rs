use ndarray::{concatenate, s, Array1, Array2, ArrayViewD, ArrayViewMutD, Axis};
use rand::Rng;

use super::{softmax_rows, DenoiserHyperparams, DenoiserOutput};
use crate::error::{Error, Result};
use crate::graph::{one_hot, EdgeClass, GraphTopology, ScoreGraph};
use crate::scalar::Real;
use crate::score::ScaleDegreeClass;

#[derive(Clone, Debug, PartialEq)]
pub struct LayerParams<F> {
    pub time_w: Array2<F>,
    pub time_b: Array1<F>,
    pub wq: Array2<F>,
    pub wk: Array2<F>,
    pub wv: Array2<F>,
    pub wo: Array2<F>,
    pub bo: Array1<F>,
    /// Additive attention bias, `heads × |E|`.
    pub edge_bias: Array2<F>,
    pub w1: Array2<F>,
    pub b1: Array1<F>,
    pub w2: Array2<F>,
    pub b2: Array1<F>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DenoiserParams<F> {
    pub hyper: DenoiserHyperparams,
    pub input_w: Array2<F>,
    pub input_b: Array1<F>,
    pub layers: Vec<LayerParams<F>>,
    pub output_w: Array2<F>,
    pub output_b: Array1<F>,
}

fn glorot<F: Real, R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> Array2<F> {
    let limit = (6.0 / (rows + cols) as f64).sqrt();
    Array2::from_shape_simple_fn((rows, cols), || F::lit(rng.gen_range(-limit..limit)))
}

fn silu<F: Real>(x: F) -> F {
    x / (F::one() + (-x).exp())
}

fn silu_grad<F: Real>(x: F) -> F {
    let s = F::one() / (F::one() + (-x).exp());
    s * (F::one() + x * (F::one() - s))
}

/// Sinusoidal features of the normalized step `t/T`.
pub(crate) fn time_embedding<F: Real>(t: usize, steps: usize, dim: usize) -> Array1<F> {
    let tau = t as f64 / steps as f64;
    let half = dim / 2;
    let mut out = Array1::zeros(dim);
    for k in 0..half {
        let w = std::f64::consts::FRAC_PI_2 * (1u64 << k.min(62)) as f64;
        out[k] = F::lit((w * tau).sin());
        out[k + half] = F::lit((w * tau).cos());
    }
    out
}

struct LayerCache<F> {
    u: Array2<F>,
    q: Array2<F>,
    k: Array2<F>,
    v: Array2<F>,
    attn: Vec<Array2<F>>,
    o: Array2<F>,
    h2: Array2<F>,
    z: Array2<F>,
    g: Array2<F>,
}

struct Cache<F> {
    input: Array2<F>,
    temb: Array1<F>,
    layers: Vec<LayerCache<F>>,
    last: Array2<F>,
}

impl<F: Real> DenoiserParams<F> {
    pub fn init<R: Rng + ?Sized>(hyper: DenoiserHyperparams, rng: &mut R) -> Result<Self> {
        hyper.validate()?;
        let d = hyper.hidden_dim;
        let ff = 2 * d;
        let layers = (0..hyper.layers)
            .map(|_| LayerParams {
                time_w: glorot(hyper.time_dim, d, rng),
                time_b: Array1::zeros(d),
                wq: glorot(d, d, rng),
                wk: glorot(d, d, rng),
                wv: glorot(d, d, rng),
                wo: glorot(d, d, rng),
                bo: Array1::zeros(d),
                edge_bias: Array2::zeros((hyper.heads, EdgeClass::COUNT)),
                w1: glorot(d, ff, rng),
                b1: Array1::zeros(ff),
                w2: glorot(ff, d, rng),
                b2: Array1::zeros(d),
            })
            .collect();
        Ok(DenoiserParams {
            input_w: glorot(hyper.input_dim(), d, rng),
            input_b: Array1::zeros(d),
            layers,
            output_w: glorot(d, ScaleDegreeClass::COUNT, rng),
            output_b: Array1::zeros(ScaleDegreeClass::COUNT),
            hyper,
        })
    }

    /// Same shapes, all zeros; used as a gradient accumulator.
    pub fn zeros_like(&self) -> Self {
        let mut out = self.clone();
        for (_, mut t) in out.tensors_mut() {
            t.fill(F::zero());
        }
        out
    }

    pub fn tensors(&self) -> Vec<(String, ArrayViewD<'_, F>)> {
        let mut out = vec![
            ("input.w".to_string(), self.input_w.view().into_dyn()),
            ("input.b".to_string(), self.input_b.view().into_dyn()),
        ];
        for (l, p) in self.layers.iter().enumerate() {
            let named = [
                ("time.w", p.time_w.view().into_dyn()),
                ("time.b", p.time_b.view().into_dyn()),
                ("attn.wq", p.wq.view().into_dyn()),
                ("attn.wk", p.wk.view().into_dyn()),
                ("attn.wv", p.wv.view().into_dyn()),
                ("attn.wo", p.wo.view().into_dyn()),
                ("attn.bo", p.bo.view().into_dyn()),
                ("attn.edge_bias", p.edge_bias.view().into_dyn()),
                ("ff.w1", p.w1.view().into_dyn()),
                ("ff.b1", p.b1.view().into_dyn()),
                ("ff.w2", p.w2.view().into_dyn()),
                ("ff.b2", p.b2.view().into_dyn()),
            ];
            out.extend(named.into_iter().map(|(n, t)| (format!("layers.{l}.{n}"), t)));
        }
        out.push(("output.w".to_string(), self.output_w.view().into_dyn()));
        out.push(("output.b".to_string(), self.output_b.view().into_dyn()));
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<(String, ArrayViewMutD<'_, F>)> {
        let mut out = vec![
            ("input.w".to_string(), self.input_w.view_mut().into_dyn()),
            ("input.b".to_string(), self.input_b.view_mut().into_dyn()),
        ];
        for (l, p) in self.layers.iter_mut().enumerate() {
            let named = [
                ("time.w", p.time_w.view_mut().into_dyn()),
                ("time.b", p.time_b.view_mut().into_dyn()),
                ("attn.wq", p.wq.view_mut().into_dyn()),
                ("attn.wk", p.wk.view_mut().into_dyn()),
                ("attn.wv", p.wv.view_mut().into_dyn()),
                ("attn.wo", p.wo.view_mut().into_dyn()),
                ("attn.bo", p.bo.view_mut().into_dyn()),
                ("attn.edge_bias", p.edge_bias.view_mut().into_dyn()),
                ("ff.w1", p.w1.view_mut().into_dyn()),
                ("ff.b1", p.b1.view_mut().into_dyn()),
                ("ff.w2", p.w2.view_mut().into_dyn()),
                ("ff.b2", p.b2.view_mut().into_dyn()),
            ];
            out.extend(named.into_iter().map(|(n, t)| (format!("layers.{l}.{n}"), t)));
        }
        out.push(("output.w".to_string(), self.output_w.view_mut().into_dyn()));
        out.push(("output.b".to_string(), self.output_b.view_mut().into_dyn()));
        out
    }

    pub fn parameter_count(&self) -> usize {
        self.tensors().iter().map(|(_, t)| t.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|(_, t)| t.iter().all(|v| v.is_finite()))
    }

    /// `self += scale * other`, tensor by tensor.
    pub fn add_scaled(&mut self, other: &Self, scale: F) {
        for ((_, mut a), (_, b)) in self.tensors_mut().into_iter().zip(other.tensors()) {
            a.zip_mut_with(&b, |x, &y| *x += scale * y);
        }
    }

    fn check_input(&self, topology: &GraphTopology<F>, x: &[ScaleDegreeClass], t: usize) -> Result<()> {
        if topology.features.width() != self.hyper.features.width()
            || topology.features != self.hyper.features
        {
            return Err(Error::Shape(format!(
                "model expects {} inputs but the graph provides {}",
                self.hyper.input_dim(),
                ScaleDegreeClass::COUNT + topology.features.width()
            )));
        }
        if x.len() != topology.n() {
            return Err(Error::Shape(format!(
                "{} node classes for a graph of {} nodes",
                x.len(),
                topology.n()
            )));
        }
        if t > self.hyper.steps {
            return Err(Error::StepOutOfRange { t, steps: self.hyper.steps });
        }
        Ok(())
    }

    fn run(&self, topology: &GraphTopology<F>, x: &[ScaleDegreeClass], t: usize) -> (Array2<F>, Cache<F>) {
        let hp = &self.hyper;
        let n = topology.n();
        let heads = hp.heads;
        let dh = hp.hidden_dim / heads;
        let scale = F::one() / F::lit(dh as f64).sqrt();

        let input = concatenate(Axis(1), &[one_hot::<F>(x).view(), topology.r_input().view()])
            .expect("matching row counts");
        let temb = time_embedding::<F>(t, hp.steps, hp.time_dim);
        let mut h = input.dot(&self.input_w) + &self.input_b;
        let mut caches = Vec::with_capacity(self.layers.len());

        for p in &self.layers {
            let tproj = temb.dot(&p.time_w) + &p.time_b;
            let u = &h + &tproj;
            let q = u.dot(&p.wq);
            let k = u.dot(&p.wk);
            let v = u.dot(&p.wv);
            let mut o = Array2::zeros((n, hp.hidden_dim));
            let mut attn = Vec::with_capacity(heads);
            for a in 0..heads {
                let cols = s![.., a * dh..(a + 1) * dh];
                let mut scores = q.slice(cols).dot(&k.slice(cols).t()) * scale;
                for i in 0..n {
                    for j in 0..n {
                        scores[[i, j]] += p.edge_bias[[a, topology.edge(i, j).index()]];
                    }
                }
                let weights = softmax_rows(&scores);
                o.slice_mut(cols).assign(&weights.dot(&v.slice(cols)));
                attn.push(weights);
            }
            let h2 = &u + &(o.dot(&p.wo) + &p.bo);
            let z = h2.dot(&p.w1) + &p.b1;
            let g = z.mapv(silu);
            h = &h2 + &(g.dot(&p.w2) + &p.b2);
            caches.push(LayerCache { u, q, k, v, attn, o, h2, z, g });
        }
        let logits = h.dot(&self.output_w) + &self.output_b;
        (logits, Cache { input, temb, layers: caches, last: h })
    }

    /// Predicts clean-class probabilities from noisy classes `x` at step `t`.
    pub fn forward(
        &self,
        topology: &GraphTopology<F>,
        x: &[ScaleDegreeClass],
        t: usize,
    ) -> Result<DenoiserOutput<F>> {
        self.check_input(topology, x, t)?;
        Ok(DenoiserOutput::from_logits(self.run(topology, x, t).0))
    }

    pub fn forward_graph(&self, graph: &ScoreGraph<F>, t: usize) -> Result<DenoiserOutput<F>> {
        self.forward(&graph.topology, &graph.x, t)
    }

    /// Loss and its exact gradient with respect to every parameter.
    pub fn loss_and_grad(
        &self,
        topology: &GraphTopology<F>,
        x: &[ScaleDegreeClass],
        t: usize,
        x0: &[ScaleDegreeClass],
    ) -> Result<(F, DenoiserParams<F>)> {
        self.check_input(topology, x, t)?;
        if x0.len() != x.len() {
            return Err(Error::Shape("clean and noisy class counts differ".into()));
        }
        let hp = &self.hyper;
        let n = topology.n();
        let heads = hp.heads;
        let dh = hp.hidden_dim / heads;
        let scale = F::one() / F::lit(dh as f64).sqrt();

        let (logits, cache) = self.run(topology, x, t);
        let out = DenoiserOutput::from_logits(logits);
        let value = super::loss(&out, x0);

        let mut grad = self.zeros_like();
        let mut dlogits = out.probs;
        for (i, c) in x0.iter().enumerate() {
            dlogits[[i, c.index()]] -= F::one();
        }
        grad.output_w = cache.last.t().dot(&dlogits);
        grad.output_b = dlogits.sum_axis(Axis(0));
        let mut dh_out = dlogits.dot(&self.output_w.t());

        for (l, p) in self.layers.iter().enumerate().rev() {
            let c = &cache.layers[l];
            let gl = &mut grad.layers[l];

            // feed-forward block
            gl.w2 = c.g.t().dot(&dh_out);
            gl.b2 = dh_out.sum_axis(Axis(0));
            let dg = dh_out.dot(&p.w2.t());
            let mut dz = dg;
            dz.zip_mut_with(&c.z, |d, &z| *d *= silu_grad(z));
            gl.w1 = c.h2.t().dot(&dz);
            gl.b1 = dz.sum_axis(Axis(0));
            let dh2 = &dh_out + &dz.dot(&p.w1.t());

            // attention block
            gl.wo = c.o.t().dot(&dh2);
            gl.bo = dh2.sum_axis(Axis(0));
            let d_o = dh2.dot(&p.wo.t());
            let mut du = dh2;
            let mut dq = Array2::zeros((n, hp.hidden_dim));
            let mut dk = Array2::zeros((n, hp.hidden_dim));
            let mut dv = Array2::zeros((n, hp.hidden_dim));
            for a in 0..heads {
                let cols = s![.., a * dh..(a + 1) * dh];
                let weights = &c.attn[a];
                let d_oa = d_o.slice(cols);
                let dweights = d_oa.dot(&c.v.slice(cols).t());
                dv.slice_mut(cols).assign(&weights.t().dot(&d_oa));
                let mut dscores = Array2::zeros((n, n));
                for i in 0..n {
                    let dot: F = (0..n).map(|j| dweights[[i, j]] * weights[[i, j]]).sum();
                    for j in 0..n {
                        let ds = weights[[i, j]] * (dweights[[i, j]] - dot);
                        dscores[[i, j]] = ds;
                        gl.edge_bias[[a, topology.edge(i, j).index()]] += ds;
                    }
                }
                dq.slice_mut(cols).assign(&(dscores.dot(&c.k.slice(cols)) * scale));
                dk.slice_mut(cols).assign(&(dscores.t().dot(&c.q.slice(cols)) * scale));
            }
            gl.wq = c.u.t().dot(&dq);
            gl.wk = c.u.t().dot(&dk);
            gl.wv = c.u.t().dot(&dv);
            du = du + dq.dot(&p.wq.t()) + dk.dot(&p.wk.t()) + dv.dot(&p.wv.t());

            // time projection is broadcast over nodes
            let dtproj = du.sum_axis(Axis(0));
            gl.time_b = dtproj.clone();
            gl.time_w = cache
                .temb
                .view()
                .insert_axis(Axis(1))
                .dot(&dtproj.view().insert_axis(Axis(0)));
            dh_out = du;
        }
        grad.input_w = cache.input.t().dot(&dh_out);
        grad.input_b = dh_out.sum_axis(Axis(0));
        Ok((value, grad))
    }

    /// Gradient of the node cross-entropy at `(graph.x` noised to `x`, `t)`.
    pub fn backward(
        &self,
        graph: &ScoreGraph<F>,
        noisy: &[ScaleDegreeClass],
        t: usize,
    ) -> Result<DenoiserParams<F>> {
        Ok(self.loss_and_grad(&graph.topology, noisy, t, &graph.x)?.1)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{build_graph, RFeatures};
    use crate::score::{Beat, KeyContext, Meter, NoteEvent, Phrase};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use ScaleDegreeClass as D;

    fn small_graph() -> ScoreGraph<f64> {
        let b = Beat::from_integer;
        let p = Phrase::new(
            KeyContext::major("C").unwrap(),
            Meter::COMMON,
            vec!["treble".into(), "bass".into()],
            vec![
                NoteEvent::degree(0, b(0), b(1), D::Three),
                NoteEvent::degree(0, b(1), b(1), D::Two),
                NoteEvent::degree(0, b(2), b(2), D::One),
                NoteEvent::degree(1, b(0), b(4), D::One),
            ],
        )
        .unwrap();
        build_graph(&p, RFeatures::ALL).unwrap()
    }

    fn tiny() -> DenoiserHyperparams {
        DenoiserHyperparams { layers: 2, hidden_dim: 8, heads: 2, time_dim: 4, ..Default::default() }
    }

    #[test]
    fn output_rows_are_distributions() {
        let g = small_graph();
        let params = DenoiserParams::init(tiny(), &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        let out = params.forward_graph(&g, 17).unwrap();
        for row in out.probs.rows() {
            assert!((row.sum() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn rejects_mismatched_features() {
        let g = small_graph();
        let hyper = DenoiserHyperparams { features: RFeatures::NONE, ..tiny() };
        let params = DenoiserParams::<f64>::init(hyper, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        assert!(matches!(params.forward_graph(&g, 1), Err(Error::Shape(_))));
    }

    #[test]
    fn time_embedding_is_distinct_per_step() {
        let a = time_embedding::<f64>(10, 100, 16);
        let b = time_embedding::<f64>(11, 100, 16);
        assert!(a.iter().zip(&b).any(|(x, y)| (x - y).abs() > 1e-3));
    }

    #[test]
    fn parameter_count_matches_shapes() {
        let params = DenoiserParams::<f64>::init(tiny(), &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        let d = 8;
        let per_layer = 4 * d + d + 4 * d * d + d + 2 * 7 + d * 2 * d + 2 * d + 2 * d * d + d;
        let expect = 21 * d + d + 2 * per_layer + d * 18 + 18;
        assert_eq!(params.parameter_count(), expect);
    }
}
