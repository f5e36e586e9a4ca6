//! Degree-to-pitch placement with stepwise voice leading and a per-voice
//! register anchor.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::phrase_nodes;
use crate::score::{Beat, EventContent, KeyContext, Phrase, Pitch, ScaleDegreeClass};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct VoiceProfile {
    pub name: String,
    pub central: Pitch,
    pub low: Pitch,
    pub high: Pitch,
}

impl VoiceProfile {
    pub fn new(name: &str, central: &str, low: &str, high: &str) -> Result<VoiceProfile> {
        let p = VoiceProfile {
            name: name.into(),
            central: central.parse()?,
            low: low.parse()?,
            high: high.parse()?,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        let (lo, c, hi) = (self.low.midi(), self.central.midi(), self.high.midi());
        if !(lo <= c && c <= hi) {
            return Err(Error::Validation(format!(
                "voice {}: central {} outside range {}..{}",
                self.name, self.central, self.low, self.high
            )));
        }
        Ok(())
    }

    pub fn treble() -> VoiceProfile {
        VoiceProfile::new("treble", "G4", "C4", "G5").expect("valid default")
    }

    pub fn alto() -> VoiceProfile {
        VoiceProfile::new("alto", "C4", "F3", "C5").expect("valid default")
    }

    pub fn tenor() -> VoiceProfile {
        VoiceProfile::new("tenor", "F3", "C3", "G4").expect("valid default")
    }

    pub fn bass() -> VoiceProfile {
        VoiceProfile::new("bass", "C3", "E2", "C4").expect("valid default")
    }

    /// Default profiles for a texture of `voices` parts, top to bottom.
    pub fn defaults(voices: usize) -> Vec<VoiceProfile> {
        match voices {
            0 => Vec::new(),
            1 => vec![Self::treble()],
            2 => vec![Self::treble(), Self::bass()],
            3 => vec![Self::treble(), Self::alto(), Self::bass()],
            n => {
                let mut v = vec![Self::treble(), Self::alto()];
                v.extend(std::iter::repeat_with(Self::tenor).take(n - 3));
                v.push(Self::bass());
                v
            }
        }
    }

    /// Every spelling of `degree` in `key` that fits the range, low to high.
    pub fn placements(&self, degree: ScaleDegreeClass, key: &KeyContext) -> Vec<Pitch> {
        (-1..=9)
            .filter_map(|octave| key.realize(degree, octave).ok())
            .filter(|p| self.low.midi() <= p.midi() && p.midi() <= self.high.midi())
            .collect()
    }
}

impl fmt::Display for VoiceProfile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} ~{} [{}..{}]", self.name, self.central, self.low, self.high)
    }
}

/// Replaces each default central pitch with the nearest in-range pitch to
/// the voice's mean MIDI number in a realized corpus.
pub fn profiles_from_corpus(corpus: &[Phrase], voices: usize) -> Vec<VoiceProfile> {
    let mut profiles = VoiceProfile::defaults(voices);
    for (v, profile) in profiles.iter_mut().enumerate() {
        let pitches: Vec<f64> = corpus
            .iter()
            .filter(|p| p.voices.len() == voices)
            .flat_map(|p| p.voice_events(v).map(|(_, e)| e.content).collect::<Vec<_>>())
            .filter_map(|c| match c {
                EventContent::Pitch(p) => Some(p.midi() as f64),
                _ => None,
            })
            .collect();
        if pitches.is_empty() {
            continue;
        }
        let mean = pitches.iter().sum::<f64>() / pitches.len() as f64;
        let target = (mean.round() as i32).clamp(profile.low.midi() as i32, profile.high.midi() as i32);
        // spell as a white key or the sharp above one
        let naturals = [0, 2, 4, 5, 7, 9, 11];
        let pc = target.rem_euclid(12);
        let octave = target.div_euclid(12) - 1;
        let (letter, alter) = match naturals.iter().position(|&n| n == pc) {
            Some(i) => (i, 0),
            None => (naturals.iter().position(|&n| n == pc - 1).unwrap(), 1),
        };
        if let Ok(p) = Pitch::new(crate::score::Letter::from_index(letter as i32), alter, octave) {
            profile.central = p;
        }
    }
    profiles
}

/// The rule applied to each note after the first: a placement within a
/// whole step of `prev` (closest, lower on ties), else the placement nearest
/// the central pitch (nearer `prev` on ties, then lower).
pub fn choose_placement(candidates: &[Pitch], prev: Option<Pitch>, central: Pitch) -> Option<Pitch> {
    let c = central.midi() as i32;
    let Some(prev) = prev else {
        return candidates.iter().copied().min_by_key(|p| ((p.midi() as i32 - c).abs(), p.midi()));
    };
    let q = prev.midi() as i32;
    let step = candidates
        .iter()
        .copied()
        .filter(|p| (p.midi() as i32 - q).abs() <= 2)
        .min_by_key(|p| ((p.midi() as i32 - q).abs(), p.midi()));
    step.or_else(|| {
        candidates.iter().copied().min_by_key(|p| {
            let m = p.midi() as i32;
            ((m - c).abs(), (m - q).abs(), m)
        })
    })
}

/// Realizes consecutive phrases as one continuous line per voice, each
/// phrase spelled in its own key.
pub fn realize_sequence(phrases: &[Phrase], profiles: &[VoiceProfile]) -> Result<Vec<Phrase>> {
    let mut prev: Vec<Option<Pitch>> = vec![None; profiles.len()];
    let mut out = Vec::with_capacity(phrases.len());
    for phrase in phrases {
        if phrase.voices.len() > profiles.len() {
            return Err(Error::Validation(format!(
                "{} voices but only {} profiles",
                phrase.voices.len(),
                profiles.len()
            )));
        }
        let mut realized = phrase.clone();
        let mut nodes = phrase_nodes(phrase);
        nodes.sort_by_key(|n| (n.voice, n.onset));
        for node in nodes {
            let head = &phrase.events[node.events[0]];
            let pitch = match head.content {
                EventContent::Pitch(p) => p,
                EventContent::Degree(d) if d.is_rest() => continue,
                EventContent::Degree(d) => {
                    let profile = &profiles[node.voice];
                    let placements = profile.placements(d, &phrase.key);
                    choose_placement(&placements, prev[node.voice], profile.central).ok_or_else(|| {
                        Error::OutOfRange {
                            voice: phrase.voices[node.voice].clone(),
                            degree: d.to_string(),
                            onset: node.onset,
                        }
                    })?
                }
                EventContent::Unassigned => return Err(Error::Unassigned),
            };
            prev[node.voice] = Some(pitch);
            for &e in &node.events {
                realized.events[e].content = EventContent::Pitch(pitch);
            }
        }
        out.push(realized);
    }
    Ok(out)
}

pub fn realize_pitches(phrase: &Phrase, profiles: &[VoiceProfile]) -> Result<Phrase> {
    Ok(realize_sequence(std::slice::from_ref(phrase), profiles)?.remove(0))
}

/// Joins phrases end to start under one key. Meters and voice counts must
/// agree; pitch content is kept as is.
pub fn concatenate(phrases: &[Phrase], key: KeyContext) -> Result<Phrase> {
    let first = phrases.first().ok_or(Error::EmptyPhrase)?;
    let mut events = Vec::new();
    let mut offset = Beat::from_integer(0);
    for p in phrases {
        if p.meter != first.meter || p.voices.len() != first.voices.len() {
            return Err(Error::Validation("phrases differ in meter or voice count".into()));
        }
        for e in &p.events {
            let mut e = e.clone();
            e.onset += offset;
            events.push(e);
        }
        offset += p.span();
    }
    Phrase::new(key, first.meter, first.voices.clone(), events)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::score::{Meter, NoteEvent};
    use ScaleDegreeClass as D;

    fn line(degrees: &[D]) -> Phrase {
        let events = degrees
            .iter()
            .enumerate()
            .map(|(k, &d)| NoteEvent::degree(0, Beat::from_integer(k as i64), Beat::from_integer(1), d))
            .collect();
        Phrase::new(KeyContext::major("C").unwrap(), Meter::COMMON, vec!["v".into()], events).unwrap()
    }

    fn names(p: &Phrase) -> Vec<String> {
        p.events
            .iter()
            .map(|e| match e.content {
                EventContent::Pitch(p) => p.to_string(),
                _ => "-".into(),
            })
            .collect()
    }

    fn around_c4() -> VoiceProfile {
        VoiceProfile::new("v", "C4", "C2", "C6").unwrap()
    }

    #[test]
    fn stepwise_chain() {
        let p = realize_pitches(&line(&[D::One, D::Two, D::Three]), &[around_c4()]).unwrap();
        assert_eq!(names(&p), ["C4", "D4", "E4"]);
    }

    #[test]
    fn leap_falls_back_to_central() {
        let p = realize_pitches(&line(&[D::One, D::Five]), &[around_c4()]).unwrap();
        assert_eq!(names(&p), ["C4", "G3"]);
    }

    #[test]
    fn step_ties_go_down() {
        // Bb3 and D4 are both a whole step from C4
        let c4: Pitch = "C4".parse().unwrap();
        let cands: Vec<Pitch> = ["Bb3", "D4"].iter().map(|s| s.parse().unwrap()).collect();
        assert_eq!(choose_placement(&cands, Some(c4), c4).unwrap().to_string(), "Bb3");
    }

    #[test]
    fn rests_and_ties_pass_through() {
        let mut p = line(&[D::Three, D::Three, D::Rest, D::Four]);
        p.events[1].tie = true;
        let r = realize_pitches(&p, &[around_c4()]).unwrap();
        assert_eq!(names(&r), ["E4", "E4", "-", "F4"]);
    }

    #[test]
    fn unreachable_degree_names_voice_and_onset() {
        let narrow = VoiceProfile::new("v", "C4", "C4", "D4").unwrap();
        let err = realize_pitches(&line(&[D::One, D::Five]), &[narrow]).unwrap_err();
        match err {
            Error::OutOfRange { voice, onset, .. } => {
                assert_eq!(voice, "v");
                assert_eq!(onset, Beat::from_integer(1));
            }
            other => panic!("{other}"),
        }
    }

    #[test]
    fn central_outside_range_is_invalid() {
        assert!(VoiceProfile::new("v", "C6", "C4", "C5").is_err());
    }
}
