//! Beat-level roman-numeral analysis constrained by a functional grammar.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::rules::Texture;
use crate::error::{Error, Result};
use crate::score::{metric_strength, Beat, Mode, Phrase, ScaleDegreeClass};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Quality {
    Major,
    Minor,
    Diminished,
    DominantSeventh,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Inversion {
    Root,
    First,
    Second,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum HarmonicFunction {
    Tonic,
    Predominant,
    Dominant,
}

/// A chord named by its root degree, quality and bass position, e.g. `V7`,
/// `ii6`, `bVI`, `vii°`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct RomanNumeral {
    pub root: ScaleDegreeClass,
    pub quality: Quality,
    pub inversion: Inversion,
}

const NUMERALS: [&str; 7] = ["I", "II", "III", "IV", "V", "VI", "VII"];

impl RomanNumeral {
    pub fn new(root: ScaleDegreeClass, quality: Quality, inversion: Inversion) -> RomanNumeral {
        RomanNumeral { root, quality, inversion }
    }

    pub fn in_root_position(self) -> RomanNumeral {
        RomanNumeral { inversion: Inversion::Root, ..self }
    }

    /// Scale-step function of the root; independent of mode.
    pub fn function(&self) -> HarmonicFunction {
        match self.root.number() {
            Some(0 | 2 | 5) => HarmonicFunction::Tonic,
            Some(1 | 3) => HarmonicFunction::Predominant,
            _ => HarmonicFunction::Dominant,
        }
    }

    /// Chord tones from the root upwards.
    pub fn tones(&self) -> Vec<ScaleDegreeClass> {
        let (third, fifth, seventh) = match self.quality {
            Quality::Major => (4, 7, None),
            Quality::Minor => (3, 7, None),
            Quality::Diminished => (3, 6, None),
            Quality::DominantSeventh => (4, 7, Some(10)),
        };
        let (n, _) = self.root.parts().expect("chord root is a pitch degree");
        let base = self.root.semitones().unwrap();
        let stack = |steps: u8, semis: i32| {
            let number = (n + steps) % 7;
            let natural = ScaleDegreeClass::from_parts(number, 0).unwrap().semitones().unwrap();
            let alter = (base + semis - natural + 6).rem_euclid(12) - 6;
            ScaleDegreeClass::from_parts(number, alter).expect("template tone is representable")
        };
        let mut out = vec![self.root, stack(2, third), stack(4, fifth)];
        if let Some(s) = seventh {
            out.push(stack(6, s));
        }
        out
    }

    pub fn is_dominant_triad_or_seventh(&self) -> bool {
        self.root == ScaleDegreeClass::Five
            && matches!(self.quality, Quality::Major | Quality::DominantSeventh)
    }
}

impl fmt::Display for RomanNumeral {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let (n, alter) = self.root.parts().ok_or(fmt::Error)?;
        match alter {
            -1 => f.write_str("b")?,
            1 => f.write_str("#")?,
            _ => {}
        }
        let name = NUMERALS[n as usize];
        match self.quality {
            Quality::Major | Quality::DominantSeventh => f.write_str(name)?,
            Quality::Minor | Quality::Diminished => f.write_str(&name.to_lowercase())?,
        }
        match self.quality {
            Quality::Diminished => f.write_str("°")?,
            Quality::DominantSeventh => f.write_str("7")?,
            _ => {}
        }
        match self.inversion {
            Inversion::Root => Ok(()),
            Inversion::First => f.write_str("6"),
            Inversion::Second => f.write_str("64"),
        }
    }
}

impl FromStr for RomanNumeral {
    type Err = Error;

    fn from_str(s: &str) -> Result<RomanNumeral> {
        let bad = || Error::UnsupportedSpelling(format!("roman numeral {s:?}"));
        let mut rest = s.trim();
        let mut alter = 0;
        if let Some(r) = rest.strip_prefix('b') {
            alter = -1;
            rest = r;
        } else if let Some(r) = rest.strip_prefix('#') {
            alter = 1;
            rest = r;
        }
        let letters = rest.chars().take_while(|c| matches!(c, 'I' | 'V' | 'i' | 'v')).count();
        let (name, mut rest) = rest.split_at(letters);
        let upper = name.chars().all(|c| c.is_ascii_uppercase());
        if !upper && !name.chars().all(|c| c.is_ascii_lowercase()) {
            return Err(bad());
        }
        let n = NUMERALS.iter().position(|&r| r == name.to_uppercase()).ok_or_else(bad)?;
        let root = ScaleDegreeClass::from_parts(n as u8, alter).ok_or_else(bad)?;
        let mut quality = if upper { Quality::Major } else { Quality::Minor };
        for mark in ["°", "o"] {
            if let Some(r) = rest.strip_prefix(mark) {
                if upper {
                    return Err(bad());
                }
                quality = Quality::Diminished;
                rest = r;
            }
        }
        if let Some(r) = rest.strip_prefix('7') {
            if !upper {
                return Err(bad());
            }
            quality = Quality::DominantSeventh;
            rest = r;
        }
        let inversion = match rest {
            "" => Inversion::Root,
            "6" => Inversion::First,
            "64" => Inversion::Second,
            _ => return Err(bad()),
        };
        Ok(RomanNumeral { root, quality, inversion })
    }
}

impl Serialize for RomanNumeral {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for RomanNumeral {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        String::deserialize(d)?.parse().map_err(serde::de::Error::custom)
    }
}

/// A root-position chord plus the bass positions it may appear in.
#[derive(Clone, Debug, PartialEq)]
pub struct ChordTemplate {
    pub numeral: RomanNumeral,
    pub inversions: Vec<Inversion>,
}

fn template(root: ScaleDegreeClass, quality: Quality, inversions: &[Inversion]) -> ChordTemplate {
    ChordTemplate {
        numeral: RomanNumeral::new(root, quality, Inversion::Root),
        inversions: inversions.to_vec(),
    }
}

/// Chord vocabulary for a mode, in preference order.
pub fn templates(mode: Mode) -> Vec<ChordTemplate> {
    use Inversion::*;
    use Quality::*;
    use ScaleDegreeClass as D;
    match mode {
        Mode::Major => vec![
            template(D::One, Major, &[Root, First]),
            template(D::Five, Major, &[Root, First, Second]),
            template(D::Four, Major, &[Root, First]),
            template(D::Two, Minor, &[Root, First]),
            template(D::Six, Minor, &[Root]),
            template(D::Five, DominantSeventh, &[Root]),
            template(D::Seven, Diminished, &[Root, First]),
            template(D::Three, Minor, &[Root]),
        ],
        Mode::Minor => vec![
            template(D::One, Minor, &[Root, First]),
            template(D::Five, Major, &[Root, First, Second]),
            template(D::Four, Minor, &[Root, First]),
            template(D::Two, Diminished, &[First]),
            template(D::FlatSix, Major, &[Root]),
            template(D::Five, DominantSeventh, &[Root]),
            template(D::Seven, Diminished, &[Root, First]),
            template(D::FlatThree, Major, &[Root]),
            template(D::Five, Minor, &[Root]),
            template(D::FlatSeven, Major, &[Root]),
        ],
    }
}

/// Every numeral (with inversions) the vocabulary of `mode` can produce.
pub fn vocabulary(mode: Mode) -> Vec<RomanNumeral> {
    templates(mode)
        .iter()
        .flat_map(|t| t.inversions.iter().map(|&inv| RomanNumeral { inversion: inv, ..t.numeral }))
        .collect()
}

/// Which chord may follow which.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProgressionGrammar {
    pub transitions: Vec<(HarmonicFunction, HarmonicFunction)>,
    /// Root-to-root moves banned regardless of function.
    pub forbidden_roots: Vec<(ScaleDegreeClass, ScaleDegreeClass)>,
    /// Functions a phrase may open with; empty means any.
    pub start: Vec<HarmonicFunction>,
}

impl Default for ProgressionGrammar {
    fn default() -> Self {
        use HarmonicFunction::*;
        ProgressionGrammar {
            transitions: vec![
                (Tonic, Tonic),
                (Tonic, Predominant),
                (Tonic, Dominant),
                (Predominant, Predominant),
                (Predominant, Dominant),
                (Dominant, Dominant),
                (Dominant, Tonic),
            ],
            forbidden_roots: vec![(ScaleDegreeClass::Five, ScaleDegreeClass::Four)],
            start: Vec::new(),
        }
    }
}

impl ProgressionGrammar {
    pub fn allows(&self, from: &RomanNumeral, to: &RomanNumeral) -> bool {
        if from == to {
            return true;
        }
        self.transitions.contains(&(from.function(), to.function()))
            && !self.forbidden_roots.contains(&(from.root, to.root))
    }

    pub fn may_start(&self, chord: &RomanNumeral) -> bool {
        self.start.is_empty() || self.start.contains(&chord.function())
    }

    /// Chords of `mode` that may directly follow `from`.
    pub fn successors(&self, from: &RomanNumeral, mode: Mode) -> BTreeSet<RomanNumeral> {
        vocabulary(mode).into_iter().filter(|c| self.allows(from, c)).collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AnalysisConfig {
    pub strong_beat_cutoff: f64,
    /// Partial readings kept per chord candidate during the search.
    pub beam: usize,
    pub max_results: usize,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        AnalysisConfig { strong_beat_cutoff: 0.5, beam: 32, max_results: 16 }
    }
}

/// One reading: a chord per analysed beat.
#[derive(Clone, Debug, PartialEq)]
pub struct HarmonicAnalysis {
    pub chords: Vec<(Beat, RomanNumeral)>,
    pub non_chord_tones: usize,
}

impl HarmonicAnalysis {
    /// Chord sequence with immediate repeats merged.
    pub fn progression(&self) -> Vec<RomanNumeral> {
        let mut out: Vec<RomanNumeral> = Vec::new();
        for (_, c) in &self.chords {
            if out.last() != Some(c) {
                out.push(*c);
            }
        }
        out
    }
}

struct Candidate {
    chord: RomanNumeral,
    non_chord_tones: usize,
}

struct Segment {
    onset: Beat,
    candidates: Vec<Candidate>,
}

/// Degrees sounding at each beat onset. Returns `None` when a note has no
/// degree reading in the phrase key.
type Sonority = (Beat, Vec<(usize, ScaleDegreeClass)>);

fn beat_sonorities(phrase: &Phrase) -> Option<Vec<Sonority>> {
    let texture = Texture::new(phrase);
    for voice in &texture.voices {
        if voice.iter().any(|s| s.tone.is_some() && s.degree.is_none()) {
            return None;
        }
    }
    let pulse = phrase.meter.pulse();
    let span = phrase.span();
    let mut out = Vec::new();
    let mut time = Beat::from_integer(0);
    while time < span {
        let sounding: Vec<(usize, ScaleDegreeClass)> = (0..phrase.voices.len())
            .filter_map(|v| texture.at(v, time).and_then(|s| s.degree).map(|d| (v, d)))
            .collect();
        if !sounding.is_empty() {
            out.push((time, sounding));
        }
        time += pulse;
    }
    Some(out)
}

fn candidates(
    sounding: &[(usize, ScaleDegreeClass)],
    strong: bool,
    multi_voice: bool,
    mode: Mode,
) -> Vec<Candidate> {
    let bass = sounding.last().map(|&(_, d)| d);
    let distinct: BTreeSet<ScaleDegreeClass> = sounding.iter().map(|&(_, d)| d).collect();
    let mut out = Vec::new();
    for t in templates(mode) {
        let tones = t.numeral.tones();
        let inversion = if multi_voice {
            match tones.iter().position(|&d| Some(d) == bass) {
                Some(0) => Inversion::Root,
                Some(1) => Inversion::First,
                Some(2) => Inversion::Second,
                _ => continue,
            }
        } else {
            Inversion::Root
        };
        if !t.inversions.contains(&inversion) {
            continue;
        }
        if tones.len() == 4 && !distinct.contains(&tones[3]) {
            continue;
        }
        let foreign = distinct.iter().filter(|d| !tones.contains(d)).count();
        if foreign > if strong { 0 } else { 1 } {
            continue;
        }
        out.push(Candidate {
            chord: RomanNumeral { inversion, ..t.numeral },
            non_chord_tones: foreign,
        });
    }
    out
}

/// Grammatical readings of the phrase, fewest non-chord tones first, one per
/// distinct merged progression. Empty when no reading exists.
pub fn analyze_harmony(
    phrase: &Phrase,
    grammar: &ProgressionGrammar,
    config: &AnalysisConfig,
) -> Vec<HarmonicAnalysis> {
    let Some(sonorities) = beat_sonorities(phrase) else {
        return Vec::new();
    };
    let multi_voice = phrase.voices.len() > 1;
    let segments: Vec<Segment> = sonorities
        .iter()
        .map(|(onset, sounding)| Segment {
            onset: *onset,
            candidates: candidates(
                sounding,
                metric_strength(*onset, phrase.meter) >= config.strong_beat_cutoff,
                multi_voice,
                phrase.mode(),
            ),
        })
        .collect();
    if segments.is_empty() {
        return Vec::new();
    }

    type Path = (usize, Vec<usize>);
    let beam = config.beam.max(1);
    let mut layer: Vec<Vec<Path>> = segments[0]
        .candidates
        .iter()
        .enumerate()
        .map(|(k, c)| {
            if grammar.may_start(&c.chord) {
                vec![(c.non_chord_tones, vec![k])]
            } else {
                Vec::new()
            }
        })
        .collect();
    for s in 1..segments.len() {
        let prev = &segments[s - 1];
        let next: Vec<Vec<Path>> = segments[s]
            .candidates
            .iter()
            .enumerate()
            .map(|(k, c)| {
                let mut paths: Vec<Path> = layer
                    .iter()
                    .enumerate()
                    .filter(|(j, _)| grammar.allows(&prev.candidates[*j].chord, &c.chord))
                    .flat_map(|(_, ps)| ps.iter())
                    .map(|(cost, choice)| {
                        let mut choice = choice.clone();
                        choice.push(k);
                        (cost + c.non_chord_tones, choice)
                    })
                    .collect();
                paths.sort();
                paths.truncate(beam);
                paths
            })
            .collect();
        layer = next;
    }

    let mut finals: Vec<Path> = layer.into_iter().flatten().collect();
    finals.sort();
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    for (cost, choice) in finals {
        let analysis = HarmonicAnalysis {
            chords: choice
                .iter()
                .enumerate()
                .map(|(s, &k)| (segments[s].onset, segments[s].candidates[k].chord))
                .collect(),
            non_chord_tones: cost,
        };
        if seen.insert(analysis.progression()) {
            out.push(analysis);
            if out.len() >= config.max_results {
                break;
            }
        }
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CadenceType {
    PerfectAuthentic,
    ImperfectAuthentic,
    Half,
    None,
}

/// Cadence closing a merged progression; `treble_end` is the last sounding
/// degree of the top voice.
pub fn cadence_of(progression: &[RomanNumeral], treble_end: Option<ScaleDegreeClass>) -> CadenceType {
    let Some(last) = progression.last() else {
        return CadenceType::None;
    };
    if progression.len() >= 2 {
        let pen = progression[progression.len() - 2];
        if pen.is_dominant_triad_or_seventh() && last.root == ScaleDegreeClass::One {
            let perfect = pen.inversion == Inversion::Root
                && last.inversion == Inversion::Root
                && treble_end == Some(ScaleDegreeClass::One);
            return if perfect { CadenceType::PerfectAuthentic } else { CadenceType::ImperfectAuthentic };
        }
    }
    if last.is_dominant_triad_or_seventh() {
        CadenceType::Half
    } else {
        CadenceType::None
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::score::{KeyContext, Meter, NoteEvent};
    use ScaleDegreeClass as D;

    fn rn(s: &str) -> RomanNumeral {
        s.parse().unwrap()
    }

    fn chorale(treble: &[D], bass: &[D], mode: Mode) -> Phrase {
        let mut events = Vec::new();
        for (v, line) in [treble, bass].iter().enumerate() {
            for (k, &d) in line.iter().enumerate() {
                events.push(NoteEvent::degree(v, Beat::from_integer(k as i64), Beat::from_integer(1), d));
            }
        }
        let key = KeyContext::new(crate::score::Letter::C, 0, mode).unwrap();
        Phrase::new(key, Meter::COMMON, vec!["treble".into(), "bass".into()], events).unwrap()
    }

    #[test]
    fn numeral_text_round_trips() {
        for mode in [Mode::Major, Mode::Minor] {
            for c in vocabulary(mode) {
                assert_eq!(c.to_string().parse::<RomanNumeral>().unwrap(), c);
            }
        }
        assert_eq!(rn("V7").tones(), vec![D::Five, D::Seven, D::Two, D::Four]);
        assert_eq!(rn("bVI").tones(), vec![D::FlatSix, D::One, D::FlatThree]);
        assert_eq!(rn("viio6").to_string(), "vii°6");
        assert!("Vo".parse::<RomanNumeral>().is_err());
    }

    #[test]
    fn dominant_may_not_move_to_subdominant() {
        let g = ProgressionGrammar::default();
        assert!(!g.allows(&rn("V"), &rn("IV")));
        assert!(!g.allows(&rn("V"), &rn("iv6")));
        assert!(g.allows(&rn("IV"), &rn("V")));
        assert!(g.allows(&rn("V7"), &rn("I")));
        assert!(!g.allows(&rn("V"), &rn("ii")));
    }

    #[test]
    fn plain_cadence_is_read() {
        let p = chorale(&[D::Three, D::Four, D::Two, D::One], &[D::One, D::Four, D::Five, D::One], Mode::Major);
        let readings = analyze_harmony(&p, &ProgressionGrammar::default(), &AnalysisConfig::default());
        assert!(!readings.is_empty());
        let best = readings[0].progression();
        assert_eq!(best, vec![rn("I"), rn("IV"), rn("V"), rn("I")]);
        assert_eq!(cadence_of(&best, Some(D::One)), CadenceType::PerfectAuthentic);
        assert_eq!(cadence_of(&best, Some(D::Three)), CadenceType::ImperfectAuthentic);
        assert_eq!(cadence_of(&best[..3], Some(D::Two)), CadenceType::Half);
    }

    #[test]
    fn ungrammatical_phrase_has_no_reading() {
        // V then IV with nothing else to reinterpret either chord
        let p = chorale(&[D::Seven, D::Six], &[D::Five, D::Four], Mode::Major);
        assert!(analyze_harmony(&p, &ProgressionGrammar::default(), &AnalysisConfig::default()).is_empty());
    }

    #[test]
    fn minor_mode_vocabulary() {
        let p = chorale(&[D::FlatThree, D::Two, D::One], &[D::One, D::Five, D::One], Mode::Minor);
        let readings = analyze_harmony(&p, &ProgressionGrammar::default(), &AnalysisConfig::default());
        assert_eq!(readings[0].progression(), vec![rn("i"), rn("V"), rn("i")]);
    }
}
