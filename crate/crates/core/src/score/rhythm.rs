use num_traits::Zero;
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::phrase::{Meter, NoteEvent, Phrase};
use super::Beat;
use crate::error::{Error, Result};

/// Accent weight of an onset: 1.0 downbeat, 0.5 mid-bar in 4/4, 0.25 other
/// beats, 0.125 anything off the beat.
pub fn metric_strength(onset: Beat, meter: Meter) -> f64 {
    let bar = meter.bar_length();
    let pos = onset - (onset / bar).floor() * bar;
    if pos.is_zero() {
        return 1.0;
    }
    if meter == Meter::COMMON && pos == Beat::from_integer(2) {
        return 0.5;
    }
    if (pos / meter.pulse()).is_integer() {
        0.25
    } else {
        0.125
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "mode")]
pub enum RhythmMode {
    /// Take the rhythm of one corpus phrase.
    #[default]
    WholePhrase,
    /// Concatenate `bars` random bars; the last comes from the pool of
    /// phrase-final bars.
    MeasureMix { bars: usize },
}

/// Events of bar `index`, shifted to start at zero and split at barlines.
pub fn extract_bar(phrase: &Phrase, index: usize) -> Vec<NoteEvent> {
    let len = phrase.meter.bar_length();
    let start = len * Beat::from_integer(index as i64);
    let end = start + len;
    let mut out = Vec::new();
    for voice in 0..phrase.voices.len() {
        let mut first = true;
        for (_, ev) in phrase.voice_events(voice) {
            let lo = ev.onset.max(start);
            let hi = ev.end().min(end);
            if lo >= hi {
                continue;
            }
            out.push(NoteEvent {
                voice,
                onset: lo - start,
                duration: hi - lo,
                content: ev.content,
                // a bar never starts tied to material from elsewhere
                tie: !first && (ev.tie || lo > ev.onset),
            });
            first = false;
        }
    }
    out
}

fn bars_of(phrase: &Phrase) -> usize {
    phrase.bar_count().max(1)
}

/// Samples a rhythmic skeleton from the corpus.
pub fn sample_rhythm<R: Rng + ?Sized>(
    corpus: &[Phrase],
    mode: RhythmMode,
    rng: &mut R,
) -> Result<Phrase> {
    let reference = corpus.choose(rng).ok_or(Error::EmptyCorpus)?;
    match mode {
        RhythmMode::WholePhrase => Ok(reference.skeleton()),
        RhythmMode::MeasureMix { bars } => {
            if bars == 0 {
                return Err(Error::Validation("measure mix needs at least one bar".into()));
            }
            let compatible: Vec<&Phrase> = corpus
                .iter()
                .filter(|p| p.meter == reference.meter && p.voices.len() == reference.voices.len())
                .collect();
            let mut inner = Vec::new();
            let mut ending = Vec::new();
            for p in &compatible {
                let n = bars_of(p);
                for b in 0..n.saturating_sub(1) {
                    inner.push((*p, b));
                }
                ending.push((*p, n - 1));
            }
            if inner.is_empty() {
                inner = ending.clone();
            }
            let len = reference.meter.bar_length();
            let mut events = Vec::new();
            for slot in 0..bars {
                let pool = if slot + 1 == bars { &ending } else { &inner };
                let &(p, b) = pool.choose(rng).expect("pools are non-empty");
                let shift = len * Beat::from_integer(slot as i64);
                events.extend(extract_bar(p, b).into_iter().map(|mut e| {
                    e.onset += shift;
                    e
                }));
            }
            // keep per-voice onset order
            events.sort_by(|a, b| a.voice.cmp(&b.voice).then(a.onset.cmp(&b.onset)));
            let out = Phrase {
                key: reference.key,
                meter: reference.meter,
                voices: reference.voices.clone(),
                events,
                cadence: None,
                structural: Vec::new(),
            }
            .skeleton();
            out.validate()?;
            Ok(out)
        }
    }
}
