#![allow(dead_code)]

use std::path::PathBuf;

use prolong::denoiser::{loss, DenoiserHyperparams, DenoiserParams};
use prolong::graph::{build_graph, RFeatures, ScoreGraph};
use prolong::score::{load_corpus, Beat, KeyContext, Meter, NoteEvent, Phrase, Pitch, ScaleDegreeClass as D};
use prolong::theory::{reject, PhraseLibrary, RuleId, TheoryConfig, Verdict};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn data_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data")
}

pub fn corpus() -> Vec<Phrase> {
    load_corpus(&data_dir().join("corpus")).expect("shipped corpus loads")
}

/// A voice written as space-separated tokens: `E4` (quarter), `E4:3/2`,
/// `r` or `r:2` for rests.
pub fn voice(v: usize, text: &str) -> Vec<NoteEvent> {
    let mut onset = Beat::from_integer(0);
    let mut out = Vec::new();
    for tok in text.split_whitespace() {
        let (name, dur) = match tok.split_once(':') {
            Some((n, d)) => (n, d.parse::<Beat>().unwrap()),
            None => (tok, Beat::from_integer(1)),
        };
        let ev = if name == "r" {
            NoteEvent::degree(v, onset, dur, D::Rest)
        } else {
            NoteEvent::pitched(v, onset, dur, name.parse::<Pitch>().unwrap())
        };
        out.push(ev);
        onset += dur;
    }
    out
}

pub fn duet(meter: Meter, treble: &str, bass: &str) -> Phrase {
    let mut events = voice(0, treble);
    events.extend(voice(1, bass));
    Phrase::new(KeyContext::major("C").unwrap(), meter, vec!["treble".into(), "bass".into()], events).unwrap()
}

pub struct Fixture {
    pub name: &'static str,
    pub phrase: Phrase,
    pub expected: Vec<RuleId>,
}

/// Ten clean fragments and ten with exactly one planted violation.
pub fn counterpoint_fixtures() -> Vec<Fixture> {
    use RuleId::*;
    let c = Meter::COMMON;
    let three = Meter::new(3, 4).unwrap();
    let f = |name, meter, t, b, expected: &[RuleId]| Fixture {
        name,
        phrase: duet(meter, t, b),
        expected: expected.to_vec(),
    };
    vec![
        f("thirds into octave", c, "E4 D4 C4", "C3 B2 C3", &[]),
        f("rising thirds", c, "G4 A4 B4 C5", "E3 F3 G3 C3", &[]),
        f("neighbor cadence", c, "C5 B4 C5", "A2 G2 C3", &[]),
        f("contrary into octave", c, "D4 C4", "B2 C3", &[]),
        f("oblique fifth", c, "G4 G4 F4", "C3 E3 D3", &[]),
        f("off-beat passing fourth", c, "E4:1/2 F4:1/2 G4 A4", "C3:2 F3", &[]),
        f("treble rest", c, "r E4 D4", "C3 G2 G2", &[]),
        f("direct fifth", c, "C5 D5", "A2 G2", &[]),
        f("triple meter thirds", three, "E4 F4 E4", "C3 D3 C3", &[]),
        f("mixed imperfect", c, "E4 D4 C4 B3 C4", "C3 D3 E3 G3 C3", &[]),
        f("fifths up a step", c, "G4 A4", "C3 D3", &[ParallelFifths]),
        f("fifths down a step", c, "E4 D4 C4", "A2 G2 C3", &[ParallelFifths]),
        f("octaves up a step", c, "C5 D5", "C3 D3", &[ParallelOctaves]),
        f("octaves down a step", c, "G4 F4 E4", "E3 F3 E3", &[ParallelOctaves]),
        f("downbeat ninth", c, "D4 C4", "C3 C3", &[StrongBeatSecond]),
        f("third-beat second", c, "E4 F4 A4 G4", "C3 D3 G3 G3", &[StrongBeatSecond]),
        f("downbeat fourth", c, "F4 E4", "C3 C3", &[StrongBeatFourth]),
        f("third-beat fourth", c, "E4 D4 C4", "C3 G2 G2", &[StrongBeatFourth]),
        f("treble repeats", c, "E4 E4 E4 E4", "C3 A2 F2 G2", &[Repetition]),
        f("bass repeats", c, "C5 D5 E5 D5 C5", "C3 C3 C3 C3 A2", &[Repetition]),
    ]
}

/// Two-voice degree phrase whose beats are drawn from random chords (with
/// occasional foreign tones), so some phrases have readings and many don't.
pub fn random_chord_phrase(rng: &mut ChaCha8Rng) -> Phrase {
    use prolong::theory::vocabulary;
    let mode = if rng.gen_bool(0.75) { prolong::score::Mode::Major } else { prolong::score::Mode::Minor };
    let chords = vocabulary(mode);
    let beats = rng.gen_range(2..=8);
    let mut events = Vec::new();
    for k in 0..beats {
        let ch = chords[rng.gen_range(0..chords.len())];
        let tones = ch.tones();
        let bass = match ch.inversion {
            prolong::theory::Inversion::Root => tones[0],
            prolong::theory::Inversion::First => tones[1],
            prolong::theory::Inversion::Second => tones[2],
        };
        let treble = if rng.gen_bool(0.1) {
            D::ALL[rng.gen_range(0..17)]
        } else {
            tones[rng.gen_range(0..tones.len())]
        };
        let on = Beat::from_integer(k);
        events.push(NoteEvent::degree(0, on, Beat::from_integer(1), treble));
        events.push(NoteEvent::degree(1, on, Beat::from_integer(1), bass));
    }
    let key = KeyContext::new(prolong::score::Letter::C, 0, mode).unwrap();
    Phrase::new(key, Meter::COMMON, vec!["treble".into(), "bass".into()], events).unwrap()
}

/// Six corpus phrases: one per slot of the three-line template and three
/// half-cadence distractors.
pub fn fixture_library() -> PhraseLibrary {
    use prolong::theory::CadenceType::*;
    let cfg = TheoryConfig::default();
    let mut named: Vec<(String, Phrase)> = Vec::new();
    type Role = Box<dyn Fn(&prolong::theory::CatalogEntry) -> bool>;
    let mut want: Vec<Role> = vec![
        Box::new(|e| e.cadence == ImperfectAuthentic && e.final_treble_degree == D::Three),
        Box::new(|e| {
            e.cadence == ImperfectAuthentic
                && e.final_treble_degree == D::Five
                && e.start_harmonies.iter().all(|h| h.root != D::One)
        }),
        Box::new(|e| e.cadence == PerfectAuthentic && e.start_harmonies.iter().any(|h| h.root == D::One)),
        Box::new(|e| e.cadence == Half),
        Box::new(|e| e.cadence == Half),
        Box::new(|e| e.cadence == Half),
    ];
    let mut files: Vec<_> = prolong::score::corpus_files(&data_dir().join("corpus")).unwrap();
    files.sort();
    let mut used = std::collections::BTreeSet::new();
    for pred in want.drain(..) {
        let pick = files.iter().find(|f| {
            if used.contains(*f) {
                return false;
            }
            let p = prolong::score::read_phrase(f).unwrap();
            match reject(&p, &cfg) {
                Verdict::Accepted(e) => e.mode == prolong::score::Mode::Major && pred(&e),
                Verdict::Rejected(_) => false,
            }
        });
        let f = pick.expect("corpus covers every fixture role").clone();
        used.insert(f.clone());
        named.push((f.file_name().unwrap().to_string_lossy().into_owned(), prolong::score::read_phrase(&f).unwrap()));
    }
    let (lib, rejected) = PhraseLibrary::build(named, &cfg);
    assert!(rejected.is_empty());
    lib
}

pub fn four_node_graph() -> ScoreGraph<f64> {
    let b = Beat::from_integer;
    let p = Phrase::new(
        KeyContext::major("C").unwrap(),
        Meter::COMMON,
        vec!["treble".into(), "bass".into()],
        vec![
            NoteEvent::degree(0, b(0), b(2), D::Three),
            NoteEvent::degree(0, b(2), Beat::new(3, 2), D::Two),
            NoteEvent::degree(0, Beat::new(7, 2), Beat::new(1, 2), D::One),
            NoteEvent::degree(1, b(0), b(4), D::One),
        ],
    )
    .unwrap();
    build_graph(&p, RFeatures::ALL).unwrap()
}

pub fn tiny() -> DenoiserHyperparams {
    DenoiserHyperparams { layers: 2, hidden_dim: 8, heads: 2, ..DenoiserHyperparams::toy() }
}

pub fn randomized(params: &mut DenoiserParams<f64>, seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for (_, mut t) in params.tensors_mut() {
        t.mapv_inplace(|v| v + rng.gen_range(-0.3..0.3));
    }
}

/// Worst per-tensor relative error `‖a − n‖ / max(‖a‖, ‖n‖)` between the
/// analytic gradient and central differences with step `h`.
pub fn gradient_check(params: &DenoiserParams<f64>, g: &ScoreGraph<f64>, noisy: &[D], t: usize, h: f64) -> f64 {
    let (_, analytic) = params.loss_and_grad(&g.topology, noisy, t, &g.x).unwrap();
    let analytic = analytic.tensors();
    let mut probe = params.clone();
    let mut worst: f64 = 0.0;
    for (k, (name, a)) in analytic.iter().enumerate() {
        let (mut diff2, mut a2, mut n2) = (0.0, 0.0, 0.0);
        for (idx, &av) in a.iter().enumerate() {
            let mut eval = |delta: f64| {
                let mut tensors = probe.tensors_mut();
                *tensors[k].1.iter_mut().nth(idx).unwrap() += delta;
                drop(tensors);
                loss(&probe.forward(&g.topology, noisy, t).unwrap(), &g.x)
            };
            let plus = eval(h);
            let minus = eval(-2.0 * h);
            eval(h);
            let numeric = (plus - minus) / (2.0 * h);
            diff2 += (av - numeric).powi(2);
            a2 += av * av;
            n2 += numeric * numeric;
        }
        let denom = a2.sqrt().max(n2.sqrt());
        let rel = if denom < 1e-12 { 0.0 } else { diff2.sqrt() / denom };
        assert!(rel.is_finite(), "{name}");
        worst = worst.max(rel);
    }
    worst
}
