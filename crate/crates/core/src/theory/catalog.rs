use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::harmony::{analyze_harmony, cadence_of, AnalysisConfig, CadenceType, ProgressionGrammar, RomanNumeral};
use super::rules::{violations, RuleConfig, Texture};
use crate::error::Result;
use crate::score::{corpus_files, read_phrase, write_phrase, Mode, Phrase, ScaleDegreeClass};

/// Everything the theory layer is configured by.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TheoryConfig {
    pub rules: RuleConfig,
    pub grammar: ProgressionGrammar,
    pub analysis: AnalysisConfig,
}

/// Harmonic summary of an accepted phrase, used to chain phrases together.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CatalogEntry {
    pub start_harmonies: BTreeSet<RomanNumeral>,
    pub end_harmonies: BTreeSet<RomanNumeral>,
    pub final_treble_degree: ScaleDegreeClass,
    pub mode: Mode,
    pub cadence: CadenceType,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Verdict {
    Accepted(CatalogEntry),
    Rejected(Vec<String>),
}

impl Verdict {
    pub fn is_accepted(&self) -> bool {
        matches!(self, Verdict::Accepted(_))
    }

    pub fn entry(&self) -> Option<&CatalogEntry> {
        match self {
            Verdict::Accepted(e) => Some(e),
            Verdict::Rejected(_) => None,
        }
    }
}

fn final_treble_degree(phrase: &Phrase) -> Option<ScaleDegreeClass> {
    Texture::new(phrase).voices.first()?.iter().rev().find_map(|s| s.degree)
}

/// Accepts a phrase only if it breaks no hard rule and has at least one
/// grammatical harmonic reading.
pub fn reject(phrase: &Phrase, config: &TheoryConfig) -> Verdict {
    let mut reasons: Vec<String> =
        violations(phrase, &config.rules).into_iter().map(|v| v.description).collect();
    let readings = analyze_harmony(phrase, &config.grammar, &config.analysis);
    if readings.is_empty() {
        reasons.push("no harmonic reading".into());
    }
    let treble = final_treble_degree(phrase);
    if treble.is_none() {
        reasons.push("top voice never sounds".into());
    }
    if !reasons.is_empty() {
        return Verdict::Rejected(reasons);
    }
    let mut start = BTreeSet::new();
    let mut end = BTreeSet::new();
    let mut cadence = CadenceType::None;
    for r in &readings {
        let prog = r.progression();
        start.insert(prog[0]);
        end.insert(*prog.last().unwrap());
        cadence = cadence.min(cadence_of(&prog, treble));
    }
    Verdict::Accepted(CatalogEntry {
        start_harmonies: start,
        end_harmonies: end,
        final_treble_degree: treble.unwrap(),
        mode: phrase.mode(),
        cadence,
    })
}

/// Phrases left out of a library, by name, with the reasons.
pub type Rejections = Vec<(String, Vec<String>)>;

#[derive(Clone, Debug, PartialEq)]
pub struct LibraryEntry {
    pub name: String,
    pub phrase: Phrase,
    pub entry: CatalogEntry,
}

/// Accepted phrases indexed by their opening and closing harmony.
#[derive(Clone, Debug, Default)]
pub struct PhraseLibrary {
    entries: Vec<LibraryEntry>,
    by_start: BTreeMap<(Mode, RomanNumeral), Vec<usize>>,
    by_end: BTreeMap<(Mode, RomanNumeral, ScaleDegreeClass), Vec<usize>>,
}

impl PhraseLibrary {
    /// Runs every phrase through [`reject`]; returns the library and the
    /// names of rejected phrases with their reasons.
    pub fn build(
        phrases: impl IntoIterator<Item = (String, Phrase)>,
        config: &TheoryConfig,
    ) -> (PhraseLibrary, Vec<(String, Vec<String>)>) {
        let mut lib = PhraseLibrary::default();
        let mut rejected = Vec::new();
        for (name, phrase) in phrases {
            match reject(&phrase, config) {
                Verdict::Accepted(entry) => lib.push(LibraryEntry { name, phrase, entry }),
                Verdict::Rejected(why) => rejected.push((name, why)),
            }
        }
        (lib, rejected)
    }

    fn push(&mut self, e: LibraryEntry) {
        let k = self.entries.len();
        for &s in &e.entry.start_harmonies {
            self.by_start.entry((e.entry.mode, s)).or_default().push(k);
        }
        for &c in &e.entry.end_harmonies {
            self.by_end.entry((e.entry.mode, c, e.entry.final_treble_degree)).or_default().push(k);
        }
        self.entries.push(e);
    }

    pub fn load_dir(dir: &Path, config: &TheoryConfig) -> Result<(PhraseLibrary, Rejections)> {
        let mut phrases = Vec::new();
        for path in corpus_files(dir)? {
            let name = path.file_name().unwrap_or_default().to_string_lossy().into_owned();
            phrases.push((name, read_phrase(&path)?));
        }
        Ok(Self::build(phrases, config))
    }

    pub fn save_dir(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        for e in &self.entries {
            write_phrase(&dir.join(&e.name), &e.phrase)?;
        }
        Ok(())
    }

    pub fn entries(&self) -> &[LibraryEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, k: usize) -> &LibraryEntry {
        &self.entries[k]
    }

    /// Indices of phrases that can open on any of `chords`.
    pub fn starting_with(&self, mode: Mode, chords: &BTreeSet<RomanNumeral>) -> Vec<usize> {
        let set: BTreeSet<usize> = chords
            .iter()
            .filter_map(|c| self.by_start.get(&(mode, *c)))
            .flatten()
            .copied()
            .collect();
        set.into_iter().collect()
    }

    pub fn ending_with(&self, mode: Mode, chord: RomanNumeral, treble: ScaleDegreeClass) -> &[usize] {
        self.by_end.get(&(mode, chord, treble)).map(Vec::as_slice).unwrap_or(&[])
    }
}
