//! Hard counterpoint rules: consecutive perfect intervals, strong-beat
//! dissonance against the bass, and repeated-note runs.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::graph::phrase_nodes;
use crate::score::{metric_strength, Beat, EventContent, Phrase, ScaleDegreeClass};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RuleId {
    ParallelFifths,
    ParallelOctaves,
    StrongBeatSecond,
    StrongBeatFourth,
    Repetition,
}

impl fmt::Display for RuleId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            RuleId::ParallelFifths => "parallel-fifths",
            RuleId::ParallelOctaves => "parallel-octaves",
            RuleId::StrongBeatSecond => "strong-beat-second",
            RuleId::StrongBeatFourth => "strong-beat-fourth",
            RuleId::Repetition => "repetition",
        };
        f.write_str(s)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub rule: RuleId,
    /// One voice for melodic rules, two (upper, lower) for harmonic ones.
    pub voices: Vec<usize>,
    #[serde(with = "beat_text")]
    pub onset: Beat,
    pub description: String,
}

pub(crate) mod beat_text {
    use crate::score::Beat;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(b: &Beat, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(b)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Beat, D::Error> {
        String::deserialize(d)?.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RuleConfig {
    pub disabled: BTreeSet<RuleId>,
    /// Runs of this many identical notes in one voice are flagged.
    pub repetition_threshold: usize,
    /// Onsets at least this strong count as strong beats.
    pub strong_beat_cutoff: f64,
}

impl Default for RuleConfig {
    fn default() -> Self {
        RuleConfig { disabled: BTreeSet::new(), repetition_threshold: 4, strong_beat_cutoff: 0.5 }
    }
}

impl RuleConfig {
    pub fn enabled(&self, rule: RuleId) -> bool {
        !self.disabled.contains(&rule)
    }
}

/// A sounding tone as a staff position and a semitone height. For degrees
/// both are relative to the tonic and octave-free; intervals are only ever
/// read modulo 7 and 12.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) struct Tone {
    pub number: i32,
    pub semis: i32,
}

impl Tone {
    fn of(content: &EventContent, phrase: &Phrase) -> Option<Tone> {
        match content {
            EventContent::Pitch(p) => Some(Tone {
                number: p.diatonic_number() - phrase.key.tonic_letter().index(),
                semis: p.midi() as i32 - phrase.key.tonic_pc(),
            }),
            EventContent::Degree(d) => {
                d.parts().map(|(n, _)| Tone { number: n as i32, semis: d.semitones().unwrap() })
            }
            EventContent::Unassigned => None,
        }
    }

    /// Generic interval class (0 = unison, 4 = fifth) and semitones, mod octave.
    pub fn interval_above(&self, lower: &Tone) -> (i32, i32) {
        ((self.number - lower.number).rem_euclid(7), (self.semis - lower.semis).rem_euclid(12))
    }
}

#[derive(Clone, Debug)]
pub(crate) struct Sounding {
    pub onset: Beat,
    pub end: Beat,
    pub node: usize,
    pub tone: Option<Tone>,
    pub degree: Option<ScaleDegreeClass>,
}

/// Per-voice note lists with ties merged.
pub(crate) struct Texture {
    pub voices: Vec<Vec<Sounding>>,
}

impl Texture {
    pub fn new(phrase: &Phrase) -> Texture {
        let mut voices = vec![Vec::new(); phrase.voices.len()];
        for (k, node) in phrase_nodes(phrase).into_iter().enumerate() {
            let head = node.events[0];
            let content = &phrase.events[head].content;
            voices[node.voice].push(Sounding {
                onset: node.onset,
                end: node.end(),
                node: k,
                tone: Tone::of(content, phrase),
                degree: phrase.degree_at(head).ok().filter(|d| !d.is_rest()),
            });
        }
        Texture { voices }
    }

    pub fn at(&self, voice: usize, time: Beat) -> Option<&Sounding> {
        self.voices[voice].iter().find(|s| s.onset <= time && time < s.end)
    }

    pub fn attacks(&self, voice: usize, time: Beat) -> bool {
        self.voices[voice].iter().any(|s| s.onset == time)
    }

    pub fn onsets(&self, voices: &[usize]) -> Vec<Beat> {
        let set: BTreeSet<Beat> = voices
            .iter()
            .flat_map(|&v| self.voices[v].iter().map(|s| s.onset))
            .collect();
        set.into_iter().collect()
    }
}

pub fn find_parallels(phrase: &Phrase) -> Vec<Violation> {
    let texture = Texture::new(phrase);
    let mut out = Vec::new();
    let n = phrase.voices.len();
    for a in 0..n {
        for b in a + 1..n {
            let times = texture.onsets(&[a, b]);
            for w in times.windows(2) {
                let (t1, t2) = (w[0], w[1]);
                let (Some(a1), Some(b1), Some(a2), Some(b2)) =
                    (texture.at(a, t1), texture.at(b, t1), texture.at(a, t2), texture.at(b, t2))
                else {
                    continue;
                };
                let (Some(ta1), Some(tb1), Some(ta2), Some(tb2)) = (a1.tone, b1.tone, a2.tone, b2.tone)
                else {
                    continue;
                };
                let a_moved = a1.node != a2.node && ta1 != ta2;
                let b_moved = b1.node != b2.node && tb1 != tb2;
                if !(a_moved && b_moved) {
                    continue;
                }
                let first = ta1.interval_above(&tb1);
                let second = ta2.interval_above(&tb2);
                let rule = match (first, second) {
                    ((4, 7), (4, 7)) => RuleId::ParallelFifths,
                    ((0, 0), (0, 0)) => RuleId::ParallelOctaves,
                    _ => continue,
                };
                out.push(Violation {
                    rule,
                    voices: vec![a, b],
                    onset: t2,
                    description: format!(
                        "{rule} between {} and {} arriving at {t2}",
                        phrase.voices[a], phrase.voices[b]
                    ),
                });
            }
        }
    }
    out
}

pub fn dissonance_check(phrase: &Phrase, config: &RuleConfig) -> Vec<Violation> {
    let mut out = Vec::new();
    let n = phrase.voices.len();
    if n < 2 {
        return out;
    }
    let texture = Texture::new(phrase);
    let bass = n - 1;
    let all: Vec<usize> = (0..n).collect();
    for time in texture.onsets(&all) {
        if metric_strength(time, phrase.meter) < config.strong_beat_cutoff {
            continue;
        }
        let Some(low) = texture.at(bass, time).and_then(|s| s.tone) else {
            continue;
        };
        for upper in 0..bass {
            if !(texture.attacks(upper, time) || texture.attacks(bass, time)) {
                continue;
            }
            let Some(high) = texture.at(upper, time).and_then(|s| s.tone) else {
                continue;
            };
            let rule = match high.interval_above(&low).0 {
                1 => RuleId::StrongBeatSecond,
                3 => RuleId::StrongBeatFourth,
                _ => continue,
            };
            out.push(Violation {
                rule,
                voices: vec![upper, bass],
                onset: time,
                description: format!(
                    "{rule}: {} against {} at {time}",
                    phrase.voices[upper], phrase.voices[bass]
                ),
            });
        }
    }
    out
}

pub fn find_repetitions(phrase: &Phrase, threshold: usize) -> Vec<Violation> {
    let texture = Texture::new(phrase);
    let mut out = Vec::new();
    for (v, notes) in texture.voices.iter().enumerate() {
        let mut run_start = 0;
        while run_start < notes.len() {
            let Some(tone) = notes[run_start].tone else {
                run_start += 1;
                continue;
            };
            let mut end = run_start + 1;
            while end < notes.len() && notes[end].tone == Some(tone) {
                end += 1;
            }
            if end - run_start >= threshold.max(2) {
                out.push(Violation {
                    rule: RuleId::Repetition,
                    voices: vec![v],
                    onset: notes[run_start].onset,
                    description: format!(
                        "{} repeats one note {} times from {}",
                        phrase.voices[v],
                        end - run_start,
                        notes[run_start].onset
                    ),
                });
            }
            run_start = end;
        }
    }
    out
}

/// Every enabled hard-rule violation, in rule order.
pub fn violations(phrase: &Phrase, config: &RuleConfig) -> Vec<Violation> {
    let mut out: Vec<Violation> = find_parallels(phrase);
    out.extend(dissonance_check(phrase, config));
    out.extend(find_repetitions(phrase, config.repetition_threshold));
    out.retain(|v| config.enabled(v.rule));
    out
}

pub fn rule_loss(phrase: &Phrase, config: &RuleConfig) -> u32 {
    violations(phrase, config).len() as u32
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::score::{KeyContext, Meter, NoteEvent, Pitch};

    fn b(n: i64) -> Beat {
        Beat::from_integer(n)
    }

    /// Two voices of quarter notes given as pitch names.
    fn duet(upper: &[&str], lower: &[&str]) -> Phrase {
        let mut events = Vec::new();
        for (v, line) in [upper, lower].iter().enumerate() {
            for (k, name) in line.iter().enumerate() {
                let p: Pitch = name.parse().unwrap();
                events.push(NoteEvent::pitched(v, b(k as i64), b(1), p));
            }
        }
        Phrase::new(KeyContext::major("C").unwrap(), Meter::COMMON, vec!["t".into(), "b".into()], events)
            .unwrap()
    }

    #[test]
    fn parallel_fifths_detected() {
        let v = find_parallels(&duet(&["G4", "A4"], &["C4", "D4"]));
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].rule, RuleId::ParallelFifths);
        assert_eq!(v[0].onset, b(1));
    }

    #[test]
    fn oblique_motion_is_exempt() {
        assert!(find_parallels(&duet(&["G4", "G4"], &["C4", "E4"])).is_empty());
    }

    #[test]
    fn parallel_octaves_detected() {
        let v = find_parallels(&duet(&["C5", "D5"], &["C4", "D4"]));
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].rule, RuleId::ParallelOctaves);
    }

    #[test]
    fn single_voice_has_no_parallels() {
        let p = Phrase::new(
            KeyContext::major("C").unwrap(),
            Meter::COMMON,
            vec!["t".into()],
            vec![NoteEvent::degree(0, b(0), b(1), ScaleDegreeClass::One)],
        )
        .unwrap();
        assert!(find_parallels(&p).is_empty());
    }

    #[test]
    fn strong_beat_seconds_and_fourths() {
        let cfg = RuleConfig::default();
        let v = dissonance_check(&duet(&["D4"], &["C3"]), &cfg);
        assert_eq!(v.iter().map(|v| v.rule).collect::<Vec<_>>(), vec![RuleId::StrongBeatSecond]);
        let v = dissonance_check(&duet(&["F4"], &["C3"]), &cfg);
        assert_eq!(v.iter().map(|v| v.rule).collect::<Vec<_>>(), vec![RuleId::StrongBeatFourth]);
    }

    #[test]
    fn off_beat_dissonance_is_allowed() {
        let mut p = duet(&["E4", "D4"], &["C3", "C3"]);
        // shift the D to the off-beat after beat 1
        p.events[0].duration = Beat::new(3, 2);
        p.events[1].onset = Beat::new(3, 2);
        p.events[1].duration = Beat::new(1, 2);
        p.validate().unwrap();
        assert!(dissonance_check(&p, &RuleConfig::default()).is_empty());
    }

    #[test]
    fn repetition_runs() {
        let p = duet(&["E4", "E4", "E4", "E4", "D4"], &["C3", "G3", "C3", "G3", "G3"]);
        let v = find_repetitions(&p, 4);
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].voices, vec![0]);
        assert!(find_repetitions(&p, 5).is_empty());
    }

    #[test]
    fn loss_counts_violations_and_respects_toggles() {
        let p = duet(&["G4", "A4"], &["C4", "D4"]);
        assert_eq!(rule_loss(&p, &RuleConfig::default()), 1);
        let mut cfg = RuleConfig::default();
        cfg.disabled.insert(RuleId::ParallelFifths);
        assert_eq!(rule_loss(&p, &cfg), 0);
    }
}
