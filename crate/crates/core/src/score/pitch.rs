use std::fmt;
use std::ops::{Add, Neg};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Semitone offsets of the natural letters from C.
const NATURAL_PC: [i32; 7] = [0, 2, 4, 5, 7, 9, 11];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Letter {
    C,
    D,
    E,
    F,
    G,
    A,
    B,
}

impl Letter {
    pub const ALL: [Letter; 7] =
        [Letter::C, Letter::D, Letter::E, Letter::F, Letter::G, Letter::A, Letter::B];

    pub fn index(self) -> i32 {
        self as i32
    }

    pub fn from_index(i: i32) -> Letter {
        Letter::ALL[i.rem_euclid(7) as usize]
    }

    pub fn natural_pc(self) -> i32 {
        NATURAL_PC[self as usize]
    }

    fn from_char(c: char) -> Option<Letter> {
        Some(match c.to_ascii_uppercase() {
            'C' => Letter::C,
            'D' => Letter::D,
            'E' => Letter::E,
            'F' => Letter::F,
            'G' => Letter::G,
            'A' => Letter::A,
            'B' => Letter::B,
            _ => return None,
        })
    }

    fn as_char(self) -> char {
        ['C', 'D', 'E', 'F', 'G', 'A', 'B'][self as usize]
    }
}

/// Maps a semitone difference into `-6..=5`.
pub(crate) fn wrap_semitones(d: i32) -> i32 {
    (d + 6).rem_euclid(12) - 6
}

pub(crate) fn accidental_str(alter: i32) -> &'static str {
    match alter {
        -2 => "bb",
        -1 => "b",
        1 => "#",
        2 => "##",
        _ => "",
    }
}

/// Parses a leading letter plus accidentals, returning the rest of the string.
pub(crate) fn parse_spelling(s: &str) -> Option<(Letter, i32, &str)> {
    let mut chars = s.char_indices();
    let (_, first) = chars.next()?;
    let letter = Letter::from_char(first)?;
    let mut alter = 0;
    let mut rest = &s[first.len_utf8()..];
    for (i, c) in chars {
        match c {
            '#' | '♯' => alter += 1,
            'b' | '♭' => alter -= 1,
            _ => {
                rest = &s[i..];
                return Some((letter, alter, rest));
            }
        }
        rest = &s[i + c.len_utf8()..];
    }
    Some((letter, alter, rest))
}

/// Spelled pitch in scientific pitch notation (C4 = MIDI 60).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Pitch {
    step: Letter,
    alter: i8,
    octave: i8,
}

impl Pitch {
    pub fn new(step: Letter, alter: i32, octave: i32) -> Result<Pitch> {
        if !(-2..=2).contains(&alter) {
            return Err(Error::UnsupportedSpelling(format!(
                "{}{} has more than two accidentals",
                step.as_char(),
                alter
            )));
        }
        let midi = 12 * (octave + 1) + step.natural_pc() + alter;
        if !(0..=127).contains(&midi) {
            return Err(Error::UnsupportedSpelling(format!(
                "{}{}{} is outside the MIDI range",
                step.as_char(),
                accidental_str(alter),
                octave
            )));
        }
        Ok(Pitch { step, alter: alter as i8, octave: octave as i8 })
    }

    pub fn step(&self) -> Letter {
        self.step
    }

    pub fn alter(&self) -> i32 {
        self.alter as i32
    }

    pub fn octave(&self) -> i32 {
        self.octave as i32
    }

    pub fn midi(&self) -> u8 {
        (12 * (self.octave() + 1) + self.step.natural_pc() + self.alter()) as u8
    }

    pub fn pitch_class(&self) -> i32 {
        (self.step.natural_pc() + self.alter()).rem_euclid(12)
    }

    /// Staff position counted in letter steps from C0.
    pub fn diatonic_number(&self) -> i32 {
        self.octave() * 7 + self.step.index()
    }

    pub fn transpose(&self, interval: Interval) -> Result<Pitch> {
        let number = self.diatonic_number() + interval.steps;
        let step = Letter::from_index(number);
        let octave = number.div_euclid(7);
        let target = self.midi() as i32 + interval.semitones;
        let natural = 12 * (octave + 1) + step.natural_pc();
        Pitch::new(step, target - natural, octave)
    }
}

impl fmt::Display for Pitch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}{}{}", self.step.as_char(), accidental_str(self.alter()), self.octave)
    }
}

impl FromStr for Pitch {
    type Err = Error;

    fn from_str(s: &str) -> Result<Pitch> {
        let bad = || Error::UnsupportedSpelling(format!("cannot read pitch {s:?}"));
        let (step, alter, rest) = parse_spelling(s.trim()).ok_or_else(bad)?;
        let octave: i32 = rest.parse().map_err(|_| bad())?;
        Pitch::new(step, alter, octave)
    }
}

impl Serialize for Pitch {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Pitch {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// A spelled interval: chromatic size plus the number of letter steps.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct Interval {
    pub semitones: i32,
    pub steps: i32,
}

impl Interval {
    pub const UNISON: Interval = Interval { semitones: 0, steps: 0 };
    pub const PERFECT_FOURTH: Interval = Interval { semitones: 5, steps: 3 };
    pub const PERFECT_FIFTH: Interval = Interval { semitones: 7, steps: 4 };
    pub const OCTAVE: Interval = Interval { semitones: 12, steps: 7 };

    pub fn new(semitones: i32, steps: i32) -> Interval {
        Interval { semitones, steps }
    }

    /// Interval that carries `from` onto `to`.
    pub fn between(from: &Pitch, to: &Pitch) -> Interval {
        Interval {
            semitones: to.midi() as i32 - from.midi() as i32,
            steps: to.diatonic_number() - from.diatonic_number(),
        }
    }
}

impl Add for Interval {
    type Output = Interval;

    fn add(self, o: Interval) -> Interval {
        Interval { semitones: self.semitones + o.semitones, steps: self.steps + o.steps }
    }
}

impl Neg for Interval {
    type Output = Interval;

    fn neg(self) -> Interval {
        Interval { semitones: -self.semitones, steps: -self.steps }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn midi_numbers() {
        assert_eq!("C4".parse::<Pitch>().unwrap().midi(), 60);
        assert_eq!("A4".parse::<Pitch>().unwrap().midi(), 69);
        assert_eq!("Cb4".parse::<Pitch>().unwrap().midi(), 59);
        assert_eq!("B#3".parse::<Pitch>().unwrap().midi(), 60);
        assert_eq!("F##2".parse::<Pitch>().unwrap().midi(), 43);
        assert_eq!("C-1".parse::<Pitch>().unwrap().midi(), 0);
    }

    #[test]
    fn spelling_round_trips_through_text() {
        for s in ["Eb4", "F#3", "Bbb2", "G##5", "C-1", "G9"] {
            assert_eq!(s.parse::<Pitch>().unwrap().to_string(), s);
        }
    }

    #[test]
    fn rejects_bad_pitches() {
        assert!("H4".parse::<Pitch>().is_err());
        assert!("C###4".parse::<Pitch>().is_err());
        assert!("G#9".parse::<Pitch>().is_err());
        assert!("C".parse::<Pitch>().is_err());
    }

    #[test]
    fn transposition_keeps_spelling() {
        let e4: Pitch = "E4".parse().unwrap();
        assert_eq!(e4.transpose(Interval::PERFECT_FIFTH).unwrap().to_string(), "B4");
        let b4: Pitch = "B4".parse().unwrap();
        assert_eq!(b4.transpose(Interval::PERFECT_FIFTH).unwrap().to_string(), "F#5");
        let f4: Pitch = "F4".parse().unwrap();
        assert_eq!(f4.transpose(-Interval::PERFECT_FIFTH).unwrap().to_string(), "Bb3");
        assert_eq!(Interval::between(&f4, &b4), Interval::new(6, 3));
    }
}
