use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::key::MAJOR_SCALE;
use crate::error::{Error, Result};

/// Node category: a chromatic scale degree relative to the home tonic, or a rest.
///
/// Seventeen pitch categories plus `Rest`. Enharmonic duplicates (#3, b4, #7,
/// b1) are not representable.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ScaleDegreeClass {
    One,
    SharpOne,
    FlatTwo,
    Two,
    SharpTwo,
    FlatThree,
    Three,
    Four,
    SharpFour,
    FlatFive,
    Five,
    SharpFive,
    FlatSix,
    Six,
    SharpSix,
    FlatSeven,
    Seven,
    Rest,
}

use ScaleDegreeClass::*;

/// `(degree number 0..7, alteration)` for each pitch category, in enum order.
const PARTS: [(u8, i32); 17] = [
    (0, 0),
    (0, 1),
    (1, -1),
    (1, 0),
    (1, 1),
    (2, -1),
    (2, 0),
    (3, 0),
    (3, 1),
    (4, -1),
    (4, 0),
    (4, 1),
    (5, -1),
    (5, 0),
    (5, 1),
    (6, -1),
    (6, 0),
];

impl ScaleDegreeClass {
    pub const COUNT: usize = 18;

    pub const ALL: [ScaleDegreeClass; 18] = [
        One, SharpOne, FlatTwo, Two, SharpTwo, FlatThree, Three, Four, SharpFour, FlatFive, Five,
        SharpFive, FlatSix, Six, SharpSix, FlatSeven, Seven, Rest,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<ScaleDegreeClass> {
        Self::ALL.get(i).copied()
    }

    pub fn is_rest(self) -> bool {
        self == Rest
    }

    /// Degree number (0 = tonic) and chromatic alteration; `None` for rests.
    pub fn parts(self) -> Option<(u8, i32)> {
        PARTS.get(self.index()).copied()
    }

    pub fn from_parts(number: u8, alter: i32) -> Option<ScaleDegreeClass> {
        PARTS
            .iter()
            .position(|&p| p == (number, alter))
            .map(|i| Self::ALL[i])
    }

    /// Semitones above the tonic, `0..12`.
    pub fn semitones(self) -> Option<i32> {
        self.parts()
            .map(|(n, a)| (MAJOR_SCALE[n as usize] + a).rem_euclid(12))
    }

    /// Diatonic number 0..7 (letter distance from the tonic).
    pub fn number(self) -> Option<u8> {
        self.parts().map(|(n, _)| n)
    }

    pub fn code(self) -> &'static str {
        [
            "1", "#1", "b2", "2", "#2", "b3", "3", "4", "#4", "b5", "5", "#5", "b6", "6", "#6", "b7",
            "7", "rest",
        ][self.index()]
    }
}

impl fmt::Display for ScaleDegreeClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

impl FromStr for ScaleDegreeClass {
    type Err = Error;

    fn from_str(s: &str) -> Result<ScaleDegreeClass> {
        let s = s.trim();
        Self::ALL
            .iter()
            .copied()
            .find(|d| d.code() == s)
            .ok_or_else(|| Error::UnsupportedSpelling(format!("scale degree {s:?}")))
    }
}

impl Serialize for ScaleDegreeClass {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(self.code())
    }
}

impl<'de> Deserialize<'de> for ScaleDegreeClass {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn closed_category_set() {
        assert_eq!(ScaleDegreeClass::ALL.len(), 18);
        for (i, d) in ScaleDegreeClass::ALL.iter().enumerate() {
            assert_eq!(d.index(), i);
            assert_eq!(d.code().parse::<ScaleDegreeClass>().unwrap(), *d);
        }
        // the 17 pitch categories occupy distinct (number, alteration) slots
        let mut seen = std::collections::HashSet::new();
        for d in &ScaleDegreeClass::ALL[..17] {
            assert!(seen.insert(d.parts().unwrap()));
        }
        assert_eq!(Rest.parts(), None);
    }

    #[test]
    fn semitone_positions() {
        assert_eq!(Seven.semitones(), Some(11));
        assert_eq!(FlatThree.semitones(), Some(3));
        assert_eq!(SharpFour.semitones(), FlatFive.semitones());
    }
}
