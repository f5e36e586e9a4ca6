//! The phrase JSON document format.
//!
//! ```json
//! {"key": {"tonic": "C", "mode": "major"}, "meter": [4, 4],
//!  "voices": ["treble", "bass"],
//!  "events": [{"voice": 0, "onset": "3/2", "duration": "1/2", "pitch": "E4", "tie": false}]}
//! ```
//!
//! Onsets and durations are exact fractions of a quarter note written as
//! strings. Each event carries `pitch` or `degree` (never both); an event with
//! neither is an unassigned rhythm slot. Optional `structural` holds event
//! index pairs and `cadence` a final-harmony annotation.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::degree::ScaleDegreeClass;
use super::key::{KeyContext, Mode};
use super::phrase::{CadenceAnnotation, EventContent, Meter, NoteEvent, Phrase};
use super::pitch::Pitch;
use super::Beat;
use crate::error::{Error, Result};

#[derive(Serialize, Deserialize)]
struct KeyDoc {
    tonic: String,
    mode: Mode,
}

#[derive(Serialize, Deserialize)]
struct EventDoc {
    voice: usize,
    onset: String,
    duration: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pitch: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    degree: Option<String>,
    #[serde(default)]
    tie: bool,
}

#[derive(Serialize, Deserialize)]
pub(crate) struct PhraseDoc {
    key: KeyDoc,
    meter: [u32; 2],
    voices: Vec<String>,
    events: Vec<EventDoc>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    structural: Vec<[usize; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    cadence: Option<CadenceAnnotation>,
}

fn parse_beat(s: &str, what: &str, index: usize) -> Result<Beat> {
    s.trim()
        .parse::<Beat>()
        .map_err(|_| Error::Validation(format!("event {index}: cannot read {what} {s:?}")))
}

impl PhraseDoc {
    pub(crate) fn into_phrase(self) -> Result<Phrase> {
        let key = KeyContext::parse_tonic(&self.key.tonic, self.key.mode)?;
        let meter = Meter::new(self.meter[0], self.meter[1])?;
        let mut events = Vec::with_capacity(self.events.len());
        for (i, ev) in self.events.into_iter().enumerate() {
            let content = match (ev.pitch, ev.degree) {
                (Some(_), Some(_)) => {
                    return Err(Error::Validation(format!(
                        "event {i} carries both pitch and degree"
                    )))
                }
                (Some(p), None) if p == "rest" => EventContent::Degree(ScaleDegreeClass::Rest),
                (Some(p), None) => EventContent::Pitch(p.parse::<Pitch>()?),
                (None, Some(d)) => EventContent::Degree(d.parse()?),
                (None, None) => EventContent::Unassigned,
            };
            events.push(NoteEvent {
                voice: ev.voice,
                onset: parse_beat(&ev.onset, "onset", i)?,
                duration: parse_beat(&ev.duration, "duration", i)?,
                content,
                tie: ev.tie,
            });
        }
        let phrase = Phrase {
            key,
            meter,
            voices: self.voices,
            events,
            cadence: self.cadence,
            structural: self.structural.into_iter().map(|[a, b]| (a, b)).collect(),
        };
        phrase.validate()?;
        Ok(phrase)
    }

    pub(crate) fn from_phrase(p: &Phrase) -> PhraseDoc {
        PhraseDoc {
            key: KeyDoc { tonic: p.key.tonic_name(), mode: p.key.mode },
            meter: [p.meter.numerator, p.meter.denominator],
            voices: p.voices.clone(),
            events: p
                .events
                .iter()
                .map(|e| {
                    let (pitch, degree) = match e.content {
                        EventContent::Pitch(p) => (Some(p.to_string()), None),
                        EventContent::Degree(d) => (None, Some(d.code().to_string())),
                        EventContent::Unassigned => (None, None),
                    };
                    EventDoc {
                        voice: e.voice,
                        onset: e.onset.to_string(),
                        duration: e.duration.to_string(),
                        pitch,
                        degree,
                        tie: e.tie,
                    }
                })
                .collect(),
            structural: p.structural.iter().map(|&(a, b)| [a, b]).collect(),
            cadence: p.cadence.clone(),
        }
    }
}

impl Serialize for Phrase {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        PhraseDoc::from_phrase(self).serialize(s)
    }
}

impl<'de> Deserialize<'de> for Phrase {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        PhraseDoc::deserialize(d)?.into_phrase().map_err(serde::de::Error::custom)
    }
}

pub fn parse_phrase(document: &str) -> Result<Phrase> {
    let doc: PhraseDoc = serde_json::from_str(document)?;
    doc.into_phrase()
}

/// Canonical pretty-printed document.
pub fn phrase_to_json(phrase: &Phrase) -> String {
    serde_json::to_string_pretty(&PhraseDoc::from_phrase(phrase)).expect("phrase serializes")
}

pub fn read_phrase(path: &Path) -> Result<Phrase> {
    parse_phrase(&fs::read_to_string(path)?)
}

pub fn write_phrase(path: &Path, phrase: &Phrase) -> Result<()> {
    fs::write(path, phrase_to_json(phrase) + "\n")?;
    Ok(())
}

/// `*.phrase.json` files of a directory, sorted by name.
pub fn corpus_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.file_name()
                .and_then(|n| n.to_str())
                .is_some_and(|n| n.ends_with(".phrase.json"))
        })
        .collect();
    files.sort();
    Ok(files)
}

/// Loads every phrase of a corpus directory, failing on the first bad file.
pub fn load_corpus(dir: &Path) -> Result<Vec<Phrase>> {
    let files = corpus_files(dir)?;
    if files.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    files
        .iter()
        .map(|f| {
            read_phrase(f).map_err(|e| Error::Validation(format!("{}: {e}", f.display())))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_document() {
        let doc = r#"{"key": {"tonic": "C", "mode": "major"}, "meter": [4,4],
            "voices": ["treble"],
            "events": [{"voice": 0, "onset": "0", "duration": "1", "pitch": "C4"}]}"#;
        let p = parse_phrase(doc).unwrap();
        assert_eq!(p.events.len(), 1);
        assert!(!p.events[0].tie);
    }

    #[test]
    fn unknown_fields_are_ignored() {
        let doc = r#"{"key": {"tonic": "Bb", "mode": "minor", "x": 1}, "meter": [3,4],
            "voices": ["s"], "title": "whatever",
            "events": [{"voice": 0, "onset": "0", "duration": "3", "degree": "b3", "velocity": 9}]}"#;
        let p = parse_phrase(doc).unwrap();
        assert_eq!(p.key.to_string(), "Bb minor");
        assert_eq!(p.events[0].content, EventContent::Degree(ScaleDegreeClass::FlatThree));
    }

    #[test]
    fn malformed_json_reports_line() {
        let doc = "{\n\"key\": {\"tonic\": \"C\", \"mode\": \"major\"},\n\"meter\": [4,4],,\n}";
        match parse_phrase(doc) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn simultaneous_notes_in_one_voice() {
        let doc = r#"{"key": {"tonic": "C", "mode": "major"}, "meter": [4,4], "voices": ["t"],
            "events": [{"voice": 0, "onset": "1/2", "duration": "1", "degree": "1"},
                       {"voice": 0, "onset": "1/2", "duration": "1", "degree": "3"}]}"#;
        match parse_phrase(doc) {
            Err(Error::Overlap { voice, onset }) => {
                assert_eq!(voice, 0);
                assert_eq!(onset, Beat::new(1, 2));
            }
            other => panic!("expected overlap, got {other:?}"),
        }
    }

    #[test]
    fn pitch_and_degree_together_is_invalid() {
        let doc = r#"{"key": {"tonic": "C", "mode": "major"}, "meter": [4,4], "voices": ["t"],
            "events": [{"voice": 0, "onset": "0", "duration": "1", "degree": "1", "pitch": "C4"}]}"#;
        assert!(matches!(parse_phrase(doc), Err(Error::Validation(_))));
    }

    #[test]
    fn canonical_form_is_a_fixed_point() {
        let doc = r#"{"key": {"tonic": "F#", "mode": "major"}, "meter": [4,4], "voices": ["t", "b"],
            "structural": [[0, 1]],
            "events": [{"voice": 0, "onset": "0", "duration": "3/2", "pitch": "A#4"},
                       {"voice": 0, "onset": "3/2", "duration": "1/2", "degree": "rest"},
                       {"voice": 1, "onset": "0", "duration": "2"}]}"#;
        let p = parse_phrase(doc).unwrap();
        let text = phrase_to_json(&p);
        let again = parse_phrase(&text).unwrap();
        assert_eq!(p, again);
        assert_eq!(text, phrase_to_json(&again));
    }
}
