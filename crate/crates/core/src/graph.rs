//! Heterogeneous score graphs: one node per sounding event, one edge class per
//! ordered node pair, and a rhythmic feature row per node.

use ndarray::{Array2, Array3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::score::{metric_strength, Beat, EventContent, Phrase, ScaleDegreeClass};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EdgeClass {
    Forward,
    TrebleVoice,
    BassVoice,
    Onset,
    Sustain,
    Structural,
    None,
}

impl EdgeClass {
    pub const COUNT: usize = 7;

    pub const ALL: [EdgeClass; 7] = [
        EdgeClass::Forward,
        EdgeClass::TrebleVoice,
        EdgeClass::BassVoice,
        EdgeClass::Onset,
        EdgeClass::Sustain,
        EdgeClass::Structural,
        EdgeClass::None,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    /// Surface relations beat structural ones; voice labels beat plain forward.
    fn precedence(self) -> u8 {
        match self {
            EdgeClass::None => 0,
            EdgeClass::Structural => 1,
            EdgeClass::Forward => 2,
            EdgeClass::TrebleVoice
            | EdgeClass::BassVoice
            | EdgeClass::Onset
            | EdgeClass::Sustain => 3,
        }
    }
}

/// Which rhythmic feature columns are present.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RFeatures {
    pub duration: bool,
    pub offset: bool,
    pub metric_strength: bool,
}

impl RFeatures {
    pub const ALL: RFeatures = RFeatures { duration: true, offset: true, metric_strength: true };
    pub const NONE: RFeatures = RFeatures { duration: false, offset: false, metric_strength: false };

    pub fn width(&self) -> usize {
        self.duration as usize + self.offset as usize + self.metric_strength as usize
    }
}

impl Default for RFeatures {
    fn default() -> Self {
        RFeatures::ALL
    }
}

/// A node: one sounding event, or a chain of tied events merged together.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GraphNode {
    pub voice: usize,
    pub onset: Beat,
    pub duration: Beat,
    /// Indices into the phrase's events; the first is the attack.
    pub events: Vec<usize>,
}

impl GraphNode {
    pub fn end(&self) -> Beat {
        self.onset + self.duration
    }
}

/// Everything about a score graph except the node categories: frozen edges,
/// rhythmic features, and the node-to-event map.
#[derive(Clone, Debug, PartialEq)]
pub struct GraphTopology<F> {
    pub nodes: Vec<GraphNode>,
    edges: Vec<EdgeClass>,
    /// Raw features in quarter notes: `[duration, offset in bar, strength]`.
    pub r: Array2<F>,
    pub features: RFeatures,
    pub bar_length: F,
}

impl<F: Real> GraphTopology<F> {
    pub fn n(&self) -> usize {
        self.nodes.len()
    }

    pub fn edge(&self, i: usize, j: usize) -> EdgeClass {
        self.edges[i * self.n() + j]
    }

    /// `n × n × |E|` one-hot tensor.
    pub fn edge_one_hot(&self) -> Array3<F> {
        let n = self.n();
        let mut e = Array3::zeros((n, n, EdgeClass::COUNT));
        for i in 0..n {
            for j in 0..n {
                e[[i, j, self.edge(i, j).index()]] = F::one();
            }
        }
        e
    }

    /// Features as fed to the denoiser: durations and offsets in bars.
    pub fn r_input(&self) -> Array2<F> {
        let mut r = self.r.clone();
        let mut col = 0;
        if self.features.duration {
            r.column_mut(col).mapv_inplace(|v| v / self.bar_length);
            col += 1;
        }
        if self.features.offset {
            r.column_mut(col).mapv_inplace(|v| v / self.bar_length);
        }
        r
    }

    /// Applies a node relabeling: node `perm[k]` of `self` becomes node `k`.
    pub fn permuted(&self, perm: &[usize]) -> GraphTopology<F> {
        let n = self.n();
        let mut edges = vec![EdgeClass::None; n * n];
        for i in 0..n {
            for j in 0..n {
                edges[i * n + j] = self.edge(perm[i], perm[j]);
            }
        }
        GraphTopology {
            nodes: perm.iter().map(|&p| self.nodes[p].clone()).collect(),
            edges,
            r: self.r.select(ndarray::Axis(0), perm),
            features: self.features,
            bar_length: self.bar_length,
        }
    }

    /// `(from, to, class)` for every pair that is not `None`.
    pub fn edge_list(&self) -> Vec<(usize, usize, EdgeClass)> {
        let n = self.n();
        let mut out = Vec::new();
        for i in 0..n {
            for j in 0..n {
                let c = self.edge(i, j);
                if c != EdgeClass::None {
                    out.push((i, j, c));
                }
            }
        }
        out
    }
}

/// Topology plus one category per node.
#[derive(Clone, Debug, PartialEq)]
pub struct ScoreGraph<F> {
    pub topology: GraphTopology<F>,
    pub x: Vec<ScaleDegreeClass>,
}

impl<F: Real> ScoreGraph<F> {
    pub fn n(&self) -> usize {
        self.x.len()
    }

    /// `n × |X|` one-hot matrix.
    pub fn x_one_hot(&self) -> Array2<F> {
        one_hot(&self.x)
    }
}

pub fn one_hot<F: Real>(classes: &[ScaleDegreeClass]) -> Array2<F> {
    let mut x = Array2::zeros((classes.len(), ScaleDegreeClass::COUNT));
    for (i, c) in classes.iter().enumerate() {
        x[[i, c.index()]] = F::one();
    }
    x
}

/// Groups events into nodes, merging tied continuations into their attack.
pub fn phrase_nodes(phrase: &Phrase) -> Vec<GraphNode> {
    let mut nodes: Vec<GraphNode> = Vec::new();
    let mut last_node_of_voice = vec![None; phrase.voices.len()];
    for (i, ev) in phrase.events.iter().enumerate() {
        match last_node_of_voice[ev.voice] {
            Some(k) if ev.tie => {
                let node: &mut GraphNode = &mut nodes[k];
                node.duration = ev.end() - node.onset;
                node.events.push(i);
            }
            _ => {
                last_node_of_voice[ev.voice] = Some(nodes.len());
                nodes.push(GraphNode {
                    voice: ev.voice,
                    onset: ev.onset,
                    duration: ev.duration,
                    events: vec![i],
                });
            }
        }
    }
    nodes
}

fn to_real<F: Real>(b: Beat) -> F {
    F::lit(*b.numer() as f64 / *b.denom() as f64)
}

pub fn rhythm_features<F: Real>(phrase: &Phrase, features: RFeatures) -> Array2<F> {
    features_of(phrase, &phrase_nodes(phrase), features)
}

fn features_of<F: Real>(phrase: &Phrase, nodes: &[GraphNode], features: RFeatures) -> Array2<F> {
    let bar = phrase.meter.bar_length();
    let mut r = Array2::zeros((nodes.len(), features.width()));
    for (i, node) in nodes.iter().enumerate() {
        let mut col = 0;
        if features.duration {
            r[[i, col]] = to_real(node.duration);
            col += 1;
        }
        if features.offset {
            let offset = node.onset - (node.onset / bar).floor() * bar;
            r[[i, col]] = to_real(offset);
            col += 1;
        }
        if features.metric_strength {
            r[[i, col]] = F::lit(metric_strength(node.onset, phrase.meter));
        }
    }
    r
}

fn put(edges: &mut [EdgeClass], n: usize, i: usize, j: usize, class: EdgeClass) {
    let slot = &mut edges[i * n + j];
    if class.precedence() > slot.precedence() {
        *slot = class;
    }
}

/// Builds edges and features; works on rhythm skeletons too.
pub fn build_topology<F: Real>(phrase: &Phrase, features: RFeatures) -> Result<GraphTopology<F>> {
    if phrase.events.is_empty() {
        return Err(Error::EmptyPhrase);
    }
    let nodes = phrase_nodes(phrase);
    let n = nodes.len();
    let mut edges = vec![EdgeClass::None; n * n];
    let last_voice = phrase.voices.len() - 1;

    for voice in 0..phrase.voices.len() {
        let chain: Vec<usize> = (0..n).filter(|&k| nodes[k].voice == voice).collect();
        let class = if voice == 0 {
            EdgeClass::TrebleVoice
        } else if voice == last_voice {
            EdgeClass::BassVoice
        } else {
            EdgeClass::Forward
        };
        for w in chain.windows(2) {
            put(&mut edges, n, w[0], w[1], class);
        }
    }
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            let (a, b) = (&nodes[i], &nodes[j]);
            if a.onset == b.onset {
                put(&mut edges, n, i, j, EdgeClass::Onset);
            } else if a.onset < b.onset && b.onset < a.end() {
                put(&mut edges, n, i, j, EdgeClass::Sustain);
            }
        }
    }
    let mut node_of_event = vec![0; phrase.events.len()];
    for (k, node) in nodes.iter().enumerate() {
        for &e in &node.events {
            node_of_event[e] = k;
        }
    }
    for &(a, b) in &phrase.structural {
        let (i, j) = (node_of_event[a], node_of_event[b]);
        if i != j {
            put(&mut edges, n, i, j, EdgeClass::Structural);
        }
    }

    let r = features_of(phrase, &nodes, features);
    Ok(GraphTopology {
        nodes,
        edges,
        r,
        features,
        bar_length: to_real(phrase.meter.bar_length()),
    })
}

/// Builds the full graph; every event must carry a pitch or degree.
pub fn build_graph<F: Real>(phrase: &Phrase, features: RFeatures) -> Result<ScoreGraph<F>> {
    let topology = build_topology(phrase, features)?;
    let x = topology
        .nodes
        .iter()
        .map(|node| phrase.degree_at(node.events[0]))
        .collect::<Result<Vec<_>>>()?;
    Ok(ScoreGraph { topology, x })
}

/// Writes one degree per node back onto the skeleton's events.
pub fn rebuild_phrase(skeleton: &Phrase, degrees: &[ScaleDegreeClass]) -> Result<Phrase> {
    let nodes = phrase_nodes(skeleton);
    if nodes.len() != degrees.len() {
        return Err(Error::Shape(format!(
            "skeleton has {} nodes but {} degrees were given",
            nodes.len(),
            degrees.len()
        )));
    }
    let mut out = skeleton.clone();
    for (node, &d) in nodes.iter().zip(degrees) {
        for &e in &node.events {
            out.events[e].content = EventContent::Degree(d);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::score::{KeyContext, Meter, NoteEvent};
    use ScaleDegreeClass as D;

    fn b(n: i64) -> Beat {
        Beat::from_integer(n)
    }

    fn phrase(voices: usize, events: Vec<NoteEvent>) -> Phrase {
        Phrase::new(
            KeyContext::major("C").unwrap(),
            Meter::COMMON,
            (0..voices).map(|v| format!("v{v}")).collect(),
            events,
        )
        .unwrap()
    }

    #[test]
    fn voice_label_supersedes_forward() {
        let p = phrase(1, vec![
            NoteEvent::degree(0, b(0), b(1), D::One),
            NoteEvent::degree(0, b(1), b(1), D::Two),
        ]);
        let g = build_topology::<f64>(&p, RFeatures::ALL).unwrap();
        assert_eq!(g.edge_list(), vec![(0, 1, EdgeClass::TrebleVoice)]);
    }

    #[test]
    fn simultaneous_heads_share_onset_edges() {
        let p = phrase(2, vec![
            NoteEvent::degree(0, b(0), b(1), D::Three),
            NoteEvent::degree(1, b(0), b(1), D::One),
        ]);
        let g = build_topology::<f64>(&p, RFeatures::ALL).unwrap();
        assert_eq!(g.edge(0, 1), EdgeClass::Onset);
        assert_eq!(g.edge(1, 0), EdgeClass::Onset);
    }

    #[test]
    fn bass_whole_note_sustains_under_quarters() {
        let mut events: Vec<NoteEvent> =
            (0..4).map(|k| NoteEvent::degree(0, b(k), b(1), D::Three)).collect();
        events.push(NoteEvent::degree(1, b(0), b(4), D::One));
        let g = build_topology::<f64>(&phrase(2, events), RFeatures::ALL).unwrap();
        let sustains: Vec<_> = g
            .edge_list()
            .into_iter()
            .filter(|e| e.2 == EdgeClass::Sustain)
            .collect();
        assert_eq!(
            sustains,
            vec![(4, 1, EdgeClass::Sustain), (4, 2, EdgeClass::Sustain), (4, 3, EdgeClass::Sustain)]
        );
        assert_eq!(g.edge(4, 0), EdgeClass::Onset);
    }

    #[test]
    fn inner_voices_use_plain_forward() {
        let events = (0..3)
            .flat_map(|v| {
                [NoteEvent::degree(v, b(0), b(1), D::One), NoteEvent::degree(v, b(1), b(1), D::One)]
            })
            .collect();
        let g = build_topology::<f64>(&phrase(3, events), RFeatures::ALL).unwrap();
        assert_eq!(g.edge(0, 1), EdgeClass::TrebleVoice);
        assert_eq!(g.edge(2, 3), EdgeClass::Forward);
        assert_eq!(g.edge(4, 5), EdgeClass::BassVoice);
    }

    #[test]
    fn structural_edges_yield_to_surface_edges() {
        let mut p = phrase(1, vec![
            NoteEvent::degree(0, b(0), b(1), D::Three),
            NoteEvent::degree(0, b(1), b(1), D::Two),
            NoteEvent::degree(0, b(2), b(2), D::One),
        ]);
        p.structural = vec![(0, 1), (0, 2)];
        let g = build_topology::<f64>(&p, RFeatures::ALL).unwrap();
        assert_eq!(g.edge(0, 1), EdgeClass::TrebleVoice);
        assert_eq!(g.edge(0, 2), EdgeClass::Structural);
        assert_eq!(g.edge(2, 0), EdgeClass::None);
    }

    #[test]
    fn ties_merge_into_one_node() {
        let mut events = vec![
            NoteEvent::degree(0, b(0), b(2), D::Five),
            NoteEvent::degree(0, b(2), b(1), D::Five),
            NoteEvent::degree(0, b(3), b(1), D::Four),
        ];
        events[1].tie = true;
        let p = phrase(1, events);
        let g = build_graph::<f64>(&p, RFeatures::ALL).unwrap();
        assert_eq!(g.n(), 2);
        assert_eq!(g.topology.nodes[0].duration, b(3));
        assert_eq!(g.topology.r.row(0).to_vec(), vec![3.0, 0.0, 1.0]);
        let back = rebuild_phrase(&p.skeleton(), &g.x).unwrap();
        assert_eq!(back, p);
    }

    #[test]
    fn feature_rows() {
        let p = phrase(1, vec![
            NoteEvent::degree(0, b(0), b(1), D::One),
            NoteEvent::degree(0, b(2), b(2), D::One),
        ]);
        let r: Array2<f64> = rhythm_features(&p, RFeatures::ALL);
        assert_eq!(r.row(0).to_vec(), vec![1.0, 0.0, 1.0]);
        assert_eq!(r.row(1).to_vec(), vec![2.0, 2.0, 0.5]);
        let r: Array2<f64> = rhythm_features(&p, RFeatures::NONE);
        assert_eq!(r.dim(), (2, 0));
        let r: Array2<f64> =
            rhythm_features(&p, RFeatures { duration: false, ..RFeatures::ALL });
        assert_eq!(r.row(1).to_vec(), vec![2.0, 0.5]);
    }

    #[test]
    fn rebuild_checks_lengths() {
        let p = phrase(1, vec![
            NoteEvent::degree(0, b(0), b(1), D::One),
            NoteEvent::degree(0, b(1), b(1), D::Two),
        ]);
        assert!(matches!(rebuild_phrase(&p.skeleton(), &[D::One]), Err(Error::Shape(_))));
        let rebuilt = rebuild_phrase(&p.skeleton(), &[D::Rest, D::Five]).unwrap();
        assert!(rebuilt.events[0].content.is_rest());
    }

    #[test]
    fn unassigned_skeleton_has_topology_but_no_graph() {
        let p = phrase(1, vec![NoteEvent::degree(0, b(0), b(1), D::One)]);
        assert!(build_topology::<f64>(&p.skeleton(), RFeatures::ALL).is_ok());
        assert!(matches!(build_graph::<f64>(&p.skeleton(), RFeatures::ALL), Err(Error::Unassigned)));
    }
}
