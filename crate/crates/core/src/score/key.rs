use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::degree::ScaleDegreeClass;
use super::pitch::{accidental_str, parse_spelling, wrap_semitones, Interval, Letter, Pitch};
use crate::error::{Error, Result};

/// Major-scale offsets; degrees are measured against these in both modes.
pub(crate) const MAJOR_SCALE: [i32; 7] = [0, 2, 4, 5, 7, 9, 11];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Major,
    Minor,
}

/// Spelled tonic plus mode.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct KeyContext {
    tonic: Letter,
    tonic_alter: i8,
    pub mode: Mode,
}

impl KeyContext {
    pub fn new(tonic: Letter, tonic_alter: i32, mode: Mode) -> Result<KeyContext> {
        if !(-2..=2).contains(&tonic_alter) {
            return Err(Error::UnsupportedSpelling(format!(
                "tonic {tonic:?} with alteration {tonic_alter}"
            )));
        }
        Ok(KeyContext { tonic, tonic_alter: tonic_alter as i8, mode })
    }

    pub fn major(tonic: &str) -> Result<KeyContext> {
        Self::parse_tonic(tonic, Mode::Major)
    }

    pub fn minor(tonic: &str) -> Result<KeyContext> {
        Self::parse_tonic(tonic, Mode::Minor)
    }

    pub fn parse_tonic(tonic: &str, mode: Mode) -> Result<KeyContext> {
        match parse_spelling(tonic.trim()) {
            Some((letter, alter, "")) => KeyContext::new(letter, alter, mode),
            _ => Err(Error::UnsupportedSpelling(format!("cannot read tonic {tonic:?}"))),
        }
    }

    pub fn tonic_letter(&self) -> Letter {
        self.tonic
    }

    pub fn tonic_alter(&self) -> i32 {
        self.tonic_alter as i32
    }

    pub fn tonic_pc(&self) -> i32 {
        (self.tonic.natural_pc() + self.tonic_alter()).rem_euclid(12)
    }

    pub fn tonic_name(&self) -> String {
        format!("{:?}{}", self.tonic, accidental_str(self.tonic_alter()))
    }

    pub fn transpose(&self, interval: Interval) -> Result<KeyContext> {
        let letter = Letter::from_index(self.tonic.index() + interval.steps);
        let alter = wrap_semitones(self.tonic_pc() + interval.semitones - letter.natural_pc());
        KeyContext::new(letter, alter, self.mode)
    }

    /// Scale degree of a spelled pitch, relative to this key's tonic.
    pub fn degree_of(&self, pitch: &Pitch) -> Result<ScaleDegreeClass> {
        let number = (pitch.step().index() - self.tonic.index()).rem_euclid(7);
        let actual = (pitch.pitch_class() - self.tonic_pc()).rem_euclid(12);
        let alter = wrap_semitones(actual - MAJOR_SCALE[number as usize]);
        ScaleDegreeClass::from_parts(number as u8, alter).ok_or_else(|| {
            Error::UnsupportedSpelling(format!("{pitch} in {self} has no degree category"))
        })
    }

    /// Spells `degree` in this key at the given octave number.
    pub fn realize(&self, degree: ScaleDegreeClass, octave: i32) -> Result<Pitch> {
        let (number, degree_alter) = degree.parts().ok_or(Error::RestHasNoPitch)?;
        let letter = Letter::from_index(self.tonic.index() + number as i32);
        let target = self.tonic_pc() + MAJOR_SCALE[number as usize] + degree_alter;
        let alter = wrap_semitones(target - letter.natural_pc());
        Pitch::new(letter, alter, octave)
    }
}

pub fn degree_of(pitch: &Pitch, key: &KeyContext) -> Result<ScaleDegreeClass> {
    key.degree_of(pitch)
}

pub fn realize_degree(degree: ScaleDegreeClass, key: &KeyContext, octave: i32) -> Result<Pitch> {
    key.realize(degree, octave)
}

impl fmt::Display for KeyContext {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mode = match self.mode {
            Mode::Major => "major",
            Mode::Minor => "minor",
        };
        write!(f, "{} {}", self.tonic_name(), mode)
    }
}

impl FromStr for KeyContext {
    type Err = Error;

    /// Reads `"C major"`, `"F# minor"`, or a bare tonic (major).
    fn from_str(s: &str) -> Result<KeyContext> {
        let mut parts = s.split_whitespace();
        let tonic = parts.next().unwrap_or("");
        let mode = match parts.next() {
            None | Some("major") => Mode::Major,
            Some("minor") => Mode::Minor,
            Some(other) => return Err(Error::UnsupportedSpelling(format!("mode {other:?}"))),
        };
        KeyContext::parse_tonic(tonic, mode)
    }
}
