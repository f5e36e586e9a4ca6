//! Counterpoint rules, harmonic analysis and phrase cataloguing.

pub mod catalog;
pub mod harmony;
pub mod rules;

pub use catalog::{reject, CatalogEntry, LibraryEntry, PhraseLibrary, Rejections, TheoryConfig, Verdict};
pub use harmony::{
    analyze_harmony, cadence_of, templates, vocabulary, AnalysisConfig, CadenceType, ChordTemplate,
    HarmonicAnalysis, HarmonicFunction, Inversion, ProgressionGrammar, Quality, RomanNumeral,
};
pub use rules::{
    dissonance_check, find_parallels, find_repetitions, rule_loss, violations, RuleConfig, RuleId,
    Violation,
};
