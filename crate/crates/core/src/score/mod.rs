//! Pitches, keys, scale degrees, note events and phrases.

mod degree;
mod json;
mod key;
mod phrase;
mod pitch;
mod rhythm;

/// Exact time in quarter notes from the phrase start.
pub type Beat = num_rational::Ratio<i64>;

pub use degree::ScaleDegreeClass;
pub use json::{
    corpus_files, load_corpus, parse_phrase, phrase_to_json, read_phrase, write_phrase,
};
pub use key::{degree_of, realize_degree, KeyContext, Mode};
pub use phrase::{
    transpose_phrase, CadenceAnnotation, EventContent, Meter, NoteEvent, Phrase,
};
pub use pitch::{Interval, Letter, Pitch};
pub use rhythm::{extract_bar, metric_strength, sample_rhythm, RhythmMode};
