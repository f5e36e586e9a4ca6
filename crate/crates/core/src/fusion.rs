//! Chaining catalogued phrases into a longer score that follows a background
//! key and cadence plan, modulating through pivot chords.

use std::collections::BTreeSet;
use std::fs;
use std::path::Path;

use rand::distributions::WeightedIndex;
use rand::prelude::Distribution;
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::realize::{concatenate, realize_sequence, VoiceProfile};
use crate::score::{Interval, KeyContext, Mode, Phrase, ScaleDegreeClass};
use crate::theory::{
    analyze_harmony, rule_loss, CadenceType, CatalogEntry, PhraseLibrary, ProgressionGrammar, Quality,
    RomanNumeral, TheoryConfig,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SlotCadence {
    /// Perfect or imperfect authentic.
    Authentic,
    PerfectAuthentic,
    Half,
}

impl SlotCadence {
    pub fn admits(self, c: CadenceType) -> bool {
        match self {
            SlotCadence::Authentic => {
                matches!(c, CadenceType::PerfectAuthentic | CadenceType::ImperfectAuthentic)
            }
            SlotCadence::PerfectAuthentic => c == CadenceType::PerfectAuthentic,
            SlotCadence::Half => c == CadenceType::Half,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TemplateSlot {
    /// Key of the phrase relative to home: `I`, `V`, `vi`, ...
    pub local_key: RomanNumeral,
    pub cadence: SlotCadence,
    /// Last treble degree, measured in the home key.
    pub final_treble_degree: ScaleDegreeClass,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub background: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UrsatzTemplate {
    pub name: String,
    #[serde(default = "one")]
    pub weight: f64,
    pub slots: Vec<TemplateSlot>,
}

fn one() -> f64 {
    1.0
}

impl UrsatzTemplate {
    pub fn validate(&self) -> Result<()> {
        if self.slots.len() < 2 {
            return Err(Error::Validation(format!("template {} needs at least two slots", self.name)));
        }
        let last = self.slots.last().unwrap();
        if last.local_key.root != ScaleDegreeClass::One {
            return Err(Error::Validation(format!("template {} must close in the home key", self.name)));
        }
        if !(self.weight >= 0.0) {
            return Err(Error::Validation(format!("template {} has a negative weight", self.name)));
        }
        Ok(())
    }

    fn slot(key: &str, cadence: SlotCadence, treble: ScaleDegreeClass, background: &str) -> TemplateSlot {
        TemplateSlot {
            local_key: key.parse().expect("valid numeral"),
            cadence,
            final_treble_degree: treble,
            background: Some(background.into()),
        }
    }

    /// I–V–I under a treble descent 3–2–1.
    pub fn three_line() -> UrsatzTemplate {
        use ScaleDegreeClass as D;
        UrsatzTemplate {
            name: "three-line".into(),
            weight: 1.0,
            slots: vec![
                Self::slot("I", SlotCadence::Authentic, D::Three, "bass I, treble 3"),
                Self::slot("V", SlotCadence::Authentic, D::Two, "bass V, treble 2"),
                Self::slot("I", SlotCadence::PerfectAuthentic, D::One, "bass I, treble 1"),
            ],
        }
    }

    /// I–V–I under a treble descent from 5, with the inner steps folded into
    /// the phrase interiors.
    pub fn five_line() -> UrsatzTemplate {
        use ScaleDegreeClass as D;
        UrsatzTemplate {
            name: "five-line".into(),
            weight: 1.0,
            slots: vec![
                Self::slot("I", SlotCadence::Authentic, D::Five, "bass I, treble 5"),
                Self::slot("V", SlotCadence::Authentic, D::Two, "bass V, treble 4-3-2"),
                Self::slot("I", SlotCadence::PerfectAuthentic, D::One, "bass I, treble 1"),
            ],
        }
    }

    pub fn defaults() -> Vec<UrsatzTemplate> {
        vec![Self::three_line(), Self::five_line()]
    }
}

pub fn load_templates(path: &Path) -> Result<Vec<UrsatzTemplate>> {
    let templates: Vec<UrsatzTemplate> = serde_json::from_str(&fs::read_to_string(path)?)?;
    for t in &templates {
        t.validate()?;
    }
    Ok(templates)
}

/// Weighted draw of a background template.
pub fn sample_structure<'a, R: Rng + ?Sized>(
    templates: &'a [UrsatzTemplate],
    rng: &mut R,
) -> Result<&'a UrsatzTemplate> {
    if templates.is_empty() {
        return Err(Error::Validation("no templates to sample from".into()));
    }
    let dist = WeightedIndex::new(templates.iter().map(|t| t.weight))
        .map_err(|e| Error::Validation(format!("template weights: {e}")))?;
    Ok(&templates[dist.sample(rng)])
}

/// Key named by `numeral` relative to `home`: the root gives the tonic, the
/// case gives the mode (the home mode for `I`).
pub fn local_key(home: &KeyContext, numeral: &RomanNumeral) -> Result<KeyContext> {
    let (steps, _) = numeral.root.parts().ok_or(Error::RestHasNoPitch)?;
    let semis = numeral.root.semitones().unwrap();
    let mut key = home.transpose(Interval::new(semis, steps as i32))?;
    if numeral.root != ScaleDegreeClass::One {
        key.mode = match numeral.quality {
            Quality::Major | Quality::DominantSeventh => Mode::Major,
            Quality::Minor | Quality::Diminished => Mode::Minor,
        };
    }
    Ok(key)
}

/// Smallest spelled interval moving tonic `from` to tonic `to`.
pub fn key_interval(from: &KeyContext, to: &KeyContext) -> Interval {
    let mut steps = (to.tonic_letter().index() - from.tonic_letter().index()).rem_euclid(7);
    let mut semis = (to.tonic_pc() - from.tonic_pc()).rem_euclid(12);
    if steps > 3 {
        steps -= 7;
        semis -= 12;
    } else if steps == 0 && semis > 6 {
        semis -= 12;
    }
    Interval::new(semis, steps)
}

/// Degree in `to` of the pitch class that is `degree` in `from`.
pub fn convert_degree(degree: ScaleDegreeClass, from: &KeyContext, to: &KeyContext) -> Option<ScaleDegreeClass> {
    let pitch = from.realize(degree, 4).ok()?;
    to.degree_of(&pitch).ok()
}

/// The same chord named in another key.
pub fn reinterpret(chord: &RomanNumeral, from: &KeyContext, to: &KeyContext) -> Option<RomanNumeral> {
    Some(RomanNumeral { root: convert_degree(chord.root, from, to)?, ..*chord })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PivotCandidate {
    pub library_index: usize,
    /// Antecedent's closing chord, renamed in the target key.
    pub pivot: RomanNumeral,
    /// Start harmonies of the candidate that may follow the pivot.
    pub starts: BTreeSet<RomanNumeral>,
}

/// Library phrases that can follow the antecedent once its closing chord is
/// heard in `target`.
pub fn pivot_select(
    antecedent: &CatalogEntry,
    antecedent_key: &KeyContext,
    target: &KeyContext,
    library: &PhraseLibrary,
    grammar: &ProgressionGrammar,
) -> Vec<PivotCandidate> {
    let mut out: Vec<PivotCandidate> = Vec::new();
    for end in &antecedent.end_harmonies {
        let Some(pivot) = reinterpret(end, antecedent_key, target) else {
            continue;
        };
        let successors = grammar.successors(&pivot, target.mode);
        for k in library.starting_with(target.mode, &successors) {
            let starts: BTreeSet<RomanNumeral> =
                library.get(k).entry.start_harmonies.intersection(&successors).copied().collect();
            if !out.iter().any(|c| c.library_index == k) {
                out.push(PivotCandidate { library_index: k, pivot, starts });
            }
        }
    }
    out.sort_by_key(|c| c.library_index);
    out
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlannedSlot {
    pub library_index: usize,
    pub name: String,
    pub local_key: String,
    pub transposition_semitones: i32,
    pub transposition_steps: i32,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pivot: Option<RomanNumeral>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FusionPlan {
    pub template: UrsatzTemplate,
    pub home_key: String,
    pub slots: Vec<PlannedSlot>,
}

/// Realized phrases in order, each in its own local key.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Score {
    pub home_key: String,
    pub phrases: Vec<Phrase>,
}

impl Score {
    pub fn home(&self) -> Result<KeyContext> {
        self.home_key.parse()
    }

    /// One continuous phrase under the home key.
    pub fn flatten(&self) -> Result<Phrase> {
        concatenate(&self.phrases, self.home()?)
    }

    pub fn is_realized(&self) -> bool {
        !self.phrases.is_empty() && self.phrases.iter().all(Phrase::is_realized)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, serde_json::to_string_pretty(self)? + "\n")?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Score> {
        Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FusionConfig {
    pub home_key: String,
    /// Candidates tried per slot before giving up on it.
    pub retries: usize,
    pub theory: TheoryConfig,
}

impl Default for FusionConfig {
    fn default() -> Self {
        FusionConfig { home_key: "C major".into(), retries: 32, theory: TheoryConfig::default() }
    }
}

struct Search<'a> {
    template: &'a UrsatzTemplate,
    library: &'a PhraseLibrary,
    profiles: &'a [VoiceProfile],
    config: &'a FusionConfig,
    keys: Vec<KeyContext>,
    trebles: Vec<ScaleDegreeClass>,
    tries: Vec<usize>,
    deepest_failure: usize,
}

impl Search<'_> {
    fn fits_slot(&self, s: usize, k: usize, first: Option<&Phrase>) -> bool {
        let e = self.library.get(k);
        let slot = &self.template.slots[s];
        e.entry.mode == self.keys[s].mode
            && slot.cadence.admits(e.entry.cadence)
            && e.entry.final_treble_degree == self.trebles[s]
            && first.is_none_or(|f| {
                f.meter == e.phrase.meter && f.voices.len() == e.phrase.voices.len()
            })
    }

    fn place(&self, s: usize, k: usize) -> Result<(Phrase, Interval)> {
        let phrase = self.library.get(k).phrase.to_degrees()?;
        let interval = key_interval(&phrase.key, &self.keys[s]);
        let mut moved = phrase.transpose(interval)?;
        moved.key = self.keys[s];
        Ok((moved, interval))
    }

    fn finish(&self, chosen: &[(usize, Option<RomanNumeral>)]) -> Result<Option<(Score, FusionPlan)>> {
        let mut placed = Vec::new();
        let mut plan = Vec::new();
        for (s, &(k, pivot)) in chosen.iter().enumerate() {
            let (p, interval) = self.place(s, k)?;
            placed.push(p);
            plan.push(PlannedSlot {
                library_index: k,
                name: self.library.get(k).name.clone(),
                local_key: self.keys[s].to_string(),
                transposition_semitones: interval.semitones,
                transposition_steps: interval.steps,
                pivot,
            });
        }
        let Ok(realized) = realize_sequence(&placed, self.profiles) else {
            return Ok(None);
        };
        let whole = concatenate(&realized, self.config.home_key.parse()?)?;
        if rule_loss(&whole, &self.config.theory.rules) != 0 {
            return Ok(None);
        }
        let score = Score { home_key: self.config.home_key.clone(), phrases: realized };
        let plan = FusionPlan {
            template: self.template.clone(),
            home_key: self.config.home_key.clone(),
            slots: plan,
        };
        Ok(Some((score, plan)))
    }

    fn extend<R: Rng + ?Sized>(
        &mut self,
        chosen: &mut Vec<(usize, Option<RomanNumeral>)>,
        rng: &mut R,
    ) -> Result<Option<(Score, FusionPlan)>> {
        let s = chosen.len();
        if s == self.template.slots.len() {
            return self.finish(chosen);
        }
        let first = chosen.first().map(|&(k, _)| self.library.get(k).phrase.clone());
        let mut options: Vec<(usize, Option<RomanNumeral>)> = if s == 0 {
            (0..self.library.len()).filter(|&k| self.fits_slot(0, k, None)).map(|k| (k, None)).collect()
        } else {
            let (prev, _) = chosen[s - 1];
            let prev_entry = &self.library.get(prev).entry;
            pivot_select(
                prev_entry,
                &self.keys[s - 1],
                &self.keys[s],
                self.library,
                &self.config.theory.grammar,
            )
            .into_iter()
            .filter(|c| self.fits_slot(s, c.library_index, first.as_ref()))
            .map(|c| (c.library_index, Some(c.pivot)))
            .collect()
        };
        options.shuffle(rng);
        if options.is_empty() {
            self.deepest_failure = self.deepest_failure.max(s);
        }
        for option in options {
            if self.tries[s] >= self.config.retries {
                break;
            }
            self.tries[s] += 1;
            chosen.push(option);
            if let Some(done) = self.extend(chosen, rng)? {
                return Ok(Some(done));
            }
            chosen.pop();
        }
        self.deepest_failure = self.deepest_failure.max(s);
        Ok(None)
    }
}

/// Fills every template slot with a library phrase, transposed to the slot's
/// key, so that seams are grammatical and the realized whole breaks no rule.
/// Fails with the (1-based) slot where the search ran out of options.
pub fn fuse<R: Rng + ?Sized>(
    template: &UrsatzTemplate,
    library: &PhraseLibrary,
    profiles: &[VoiceProfile],
    config: &FusionConfig,
    rng: &mut R,
) -> Result<(Score, FusionPlan)> {
    template.validate()?;
    if library.is_empty() {
        return Err(Error::FusionInfeasible { slot: 1 });
    }
    let home: KeyContext = config.home_key.parse()?;
    let keys = template
        .slots
        .iter()
        .map(|s| local_key(&home, &s.local_key))
        .collect::<Result<Vec<_>>>()?;
    let trebles = template
        .slots
        .iter()
        .zip(&keys)
        .map(|(s, k)| {
            convert_degree(s.final_treble_degree, &home, k).ok_or_else(|| {
                Error::Validation(format!("treble degree {} has no name in {k}", s.final_treble_degree))
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let mut search = Search {
        template,
        library,
        profiles,
        config,
        keys,
        trebles,
        tries: vec![0; template.slots.len()],
        deepest_failure: 0,
    };
    match search.extend(&mut Vec::new(), rng)? {
        Some(done) => Ok(done),
        None => Err(Error::FusionInfeasible { slot: search.deepest_failure + 1 }),
    }
}

/// Seam and trajectory checks on a finished fusion: keys follow the
/// template, each pivot may precede some reading of the next phrase, and the
/// realized whole has no rule violations.
pub fn verify_fusion(score: &Score, plan: &FusionPlan, theory: &TheoryConfig) -> Result<Vec<String>> {
    let mut problems = Vec::new();
    let home: KeyContext = score.home_key.parse()?;
    for (s, (slot, phrase)) in plan.template.slots.iter().zip(&score.phrases).enumerate() {
        let key = local_key(&home, &slot.local_key)?;
        if phrase.key != key {
            problems.push(format!("slot {} is in {}, expected {key}", s + 1, phrase.key));
        }
        if let Some(pivot) = plan.slots[s].pivot {
            let readings = analyze_harmony(phrase, &theory.grammar, &theory.analysis);
            if !readings.iter().any(|r| theory.grammar.allows(&pivot, &r.progression()[0])) {
                problems.push(format!("seam into slot {} does not follow {pivot}", s + 1));
            }
        }
    }
    let loss = rule_loss(&score.flatten()?, &theory.rules);
    if loss != 0 {
        problems.push(format!("whole score has {loss} rule violations"));
    }
    Ok(problems)
}
