use std::collections::BTreeMap;

use num_traits::{Signed, Zero};
use serde::{Deserialize, Serialize};

use super::degree::ScaleDegreeClass;
use super::key::{KeyContext, Mode};
use super::pitch::{Interval, Pitch};
use super::Beat;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Meter {
    pub numerator: u32,
    pub denominator: u32,
}

impl Meter {
    pub const COMMON: Meter = Meter { numerator: 4, denominator: 4 };

    pub fn new(numerator: u32, denominator: u32) -> Result<Meter> {
        if numerator == 0 || !denominator.is_power_of_two() {
            return Err(Error::Validation(format!("unsupported meter {numerator}/{denominator}")));
        }
        Ok(Meter { numerator, denominator })
    }

    /// Length of one beat, in quarter notes.
    pub fn pulse(&self) -> Beat {
        Beat::new(4, self.denominator as i64)
    }

    /// Length of a bar, in quarter notes.
    pub fn bar_length(&self) -> Beat {
        self.pulse() * Beat::from_integer(self.numerator as i64)
    }
}

/// What an event carries: a spelled pitch, a scale degree (possibly `Rest`),
/// or nothing yet (rhythm skeletons).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum EventContent {
    Pitch(Pitch),
    Degree(ScaleDegreeClass),
    Unassigned,
}

impl EventContent {
    pub fn is_rest(&self) -> bool {
        matches!(self, EventContent::Degree(ScaleDegreeClass::Rest))
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct NoteEvent {
    pub voice: usize,
    pub onset: Beat,
    pub duration: Beat,
    pub content: EventContent,
    pub tie: bool,
}

impl NoteEvent {
    pub fn end(&self) -> Beat {
        self.onset + self.duration
    }

    pub fn degree(voice: usize, onset: Beat, duration: Beat, degree: ScaleDegreeClass) -> NoteEvent {
        NoteEvent { voice, onset, duration, content: EventContent::Degree(degree), tie: false }
    }

    pub fn pitched(voice: usize, onset: Beat, duration: Beat, pitch: Pitch) -> NoteEvent {
        NoteEvent { voice, onset, duration, content: EventContent::Pitch(pitch), tie: false }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CadenceAnnotation {
    pub harmony: String,
    pub treble_degree: ScaleDegreeClass,
}

/// A keyed, metered fragment of multi-voice music.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Phrase {
    pub key: KeyContext,
    pub meter: Meter,
    pub voices: Vec<String>,
    pub events: Vec<NoteEvent>,
    pub cadence: Option<CadenceAnnotation>,
    /// Annotated prolongational connections, as event index pairs.
    pub structural: Vec<(usize, usize)>,
}

impl Phrase {
    /// Builds and validates a phrase.
    pub fn new(
        key: KeyContext,
        meter: Meter,
        voices: Vec<String>,
        events: Vec<NoteEvent>,
    ) -> Result<Phrase> {
        let phrase =
            Phrase { key, meter, voices, events, cadence: None, structural: Vec::new() };
        phrase.validate()?;
        Ok(phrase)
    }

    pub fn validate(&self) -> Result<()> {
        if self.voices.is_empty() {
            return Err(Error::Validation("phrase needs at least one voice".into()));
        }
        if self.events.is_empty() {
            return Err(Error::EmptyPhrase);
        }
        let mut last: BTreeMap<usize, &NoteEvent> = BTreeMap::new();
        for (i, ev) in self.events.iter().enumerate() {
            if ev.voice >= self.voices.len() {
                return Err(Error::Validation(format!(
                    "event {i} names voice {} but only {} voices exist",
                    ev.voice,
                    self.voices.len()
                )));
            }
            if ev.onset.is_negative() {
                return Err(Error::Validation(format!("event {i} has negative onset")));
            }
            if !ev.duration.is_positive() {
                return Err(Error::Validation(format!("event {i} has non-positive duration")));
            }
            if let Some(prev) = last.get(&ev.voice) {
                if ev.onset < prev.end() {
                    return Err(Error::Overlap { voice: ev.voice, onset: ev.onset });
                }
                if ev.tie && (prev.end() != ev.onset || !tie_compatible(prev, ev)) {
                    return Err(Error::Validation(format!(
                        "event {i} is tied but does not continue the previous note of voice {}",
                        ev.voice
                    )));
                }
            } else if ev.tie {
                return Err(Error::Validation(format!(
                    "event {i} is tied but is the first event of voice {}",
                    ev.voice
                )));
            }
            last.insert(ev.voice, ev);
        }
        for &(a, b) in &self.structural {
            if a >= self.events.len() || b >= self.events.len() {
                return Err(Error::Validation(format!("structural edge ({a}, {b}) out of range")));
            }
        }
        if !self.span().is_positive() {
            return Err(Error::Validation("phrase spans no time".into()));
        }
        Ok(())
    }

    /// End of the latest event, measured from the phrase start.
    pub fn span(&self) -> Beat {
        self.events.iter().map(NoteEvent::end).max().unwrap_or_else(Beat::zero)
    }

    pub fn bar_count(&self) -> usize {
        let bars = self.span() / self.meter.bar_length();
        bars.ceil().to_integer() as usize
    }

    pub fn mode(&self) -> Mode {
        self.key.mode
    }

    /// Event indices of one voice, in onset order.
    pub fn voice_events(&self, voice: usize) -> impl Iterator<Item = (usize, &NoteEvent)> {
        self.events.iter().enumerate().filter(move |(_, e)| e.voice == voice)
    }

    /// Scale degree of an event under the phrase key, if it has one.
    pub fn degree_at(&self, index: usize) -> Result<ScaleDegreeClass> {
        match self.events[index].content {
            EventContent::Degree(d) => Ok(d),
            EventContent::Pitch(p) => self.key.degree_of(&p),
            EventContent::Unassigned => Err(Error::Unassigned),
        }
    }

    pub fn is_realized(&self) -> bool {
        self.events
            .iter()
            .all(|e| matches!(e.content, EventContent::Pitch(_)) || e.content.is_rest())
    }

    /// The phrase with all pitch and degree content erased.
    pub fn skeleton(&self) -> Phrase {
        let mut out = self.clone();
        for ev in &mut out.events {
            ev.content = EventContent::Unassigned;
        }
        out.cadence = None;
        out
    }

    /// Converts realized pitches to scale degrees of the phrase key.
    pub fn to_degrees(&self) -> Result<Phrase> {
        let mut out = self.clone();
        for (i, ev) in out.events.iter_mut().enumerate() {
            ev.content = EventContent::Degree(self.degree_at(i)?);
        }
        Ok(out)
    }

    /// Shifts key and pitches by a spelled interval; degrees stay put.
    pub fn transpose(&self, interval: Interval) -> Result<Phrase> {
        let mut out = self.clone();
        out.key = self.key.transpose(interval)?;
        for ev in &mut out.events {
            if let EventContent::Pitch(p) = ev.content {
                ev.content = EventContent::Pitch(p.transpose(interval)?);
            }
        }
        Ok(out)
    }
}

fn tie_compatible(prev: &NoteEvent, next: &NoteEvent) -> bool {
    match (prev.content, next.content) {
        (EventContent::Unassigned, _) | (_, EventContent::Unassigned) => true,
        (a, b) => a == b,
    }
}

pub fn transpose_phrase(phrase: &Phrase, interval: Interval) -> Result<Phrase> {
    phrase.transpose(interval)
}
