//! Standard MIDI file output and a matching reader for round-trip checks.
//!
//! Layout: format 1, 480 ticks per quarter, a conductor track with tempo and
//! time signature, then one track per voice on channel = voice index.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::graph::phrase_nodes;
use crate::score::{Beat, EventContent, Phrase};

pub const TICKS_PER_QUARTER: u16 = 480;
pub const TEMPO_USEC: u32 = 500_000;
pub const VELOCITY: u8 = 80;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub struct MidiNote {
    pub track: usize,
    pub start: u64,
    pub pitch: u8,
    pub duration: u64,
    pub channel: u8,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MidiFile {
    pub ticks_per_quarter: u16,
    /// Notes sorted by track, then start, then pitch.
    pub notes: Vec<MidiNote>,
}

fn ticks(beat: Beat) -> u64 {
    let t = beat * Beat::from_integer(TICKS_PER_QUARTER as i64);
    t.round().to_integer().max(0) as u64
}

/// Notes a realized phrase will produce; tied events become one note.
pub fn phrase_notes(phrase: &Phrase) -> Result<Vec<MidiNote>> {
    if !phrase.is_realized() {
        return Err(Error::NotRealized);
    }
    let mut notes: Vec<MidiNote> = phrase_nodes(phrase)
        .into_iter()
        .filter_map(|node| match phrase.events[node.events[0]].content {
            EventContent::Pitch(p) => Some(MidiNote {
                track: node.voice + 1,
                start: ticks(node.onset),
                pitch: p.midi(),
                duration: ticks(node.end()) - ticks(node.onset),
                channel: (node.voice % 16) as u8,
            }),
            _ => None,
        })
        .collect();
    if notes.is_empty() {
        return Err(Error::EmptyPhrase);
    }
    notes.sort();
    Ok(notes)
}

fn push_varlen(out: &mut Vec<u8>, mut v: u64) {
    let mut stack = vec![(v & 0x7f) as u8];
    v >>= 7;
    while v > 0 {
        stack.push(((v & 0x7f) as u8) | 0x80);
        v >>= 7;
    }
    out.extend(stack.iter().rev());
}

fn chunk(tag: &[u8; 4], body: &[u8]) -> Vec<u8> {
    let mut out = tag.to_vec();
    out.extend((body.len() as u32).to_be_bytes());
    out.extend(body);
    out
}

fn meta(out: &mut Vec<u8>, delta: u64, kind: u8, data: &[u8]) {
    push_varlen(out, delta);
    out.extend([0xff, kind]);
    push_varlen(out, data.len() as u64);
    out.extend(data);
}

pub fn encode(phrase: &Phrase) -> Result<Vec<u8>> {
    let notes = phrase_notes(phrase)?;
    if phrase.voices.len() + 1 > 255 {
        return Err(Error::Midi("too many voices".into()));
    }
    let mut file = chunk(
        b"MThd",
        &[
            0,
            1,
            0,
            (phrase.voices.len() + 1) as u8,
            (TICKS_PER_QUARTER >> 8) as u8,
            TICKS_PER_QUARTER as u8,
        ],
    );

    let mut conductor = Vec::new();
    meta(&mut conductor, 0, 0x51, &TEMPO_USEC.to_be_bytes()[1..]);
    let dd = phrase.meter.denominator.trailing_zeros() as u8;
    meta(&mut conductor, 0, 0x58, &[phrase.meter.numerator as u8, dd, 24, 8]);
    meta(&mut conductor, 0, 0x2f, &[]);
    file.extend(chunk(b"MTrk", &conductor));

    for (v, name) in phrase.voices.iter().enumerate() {
        // (tick, is_on, pitch); offs sort before ons at the same tick
        let mut events: Vec<(u64, bool, u8, u8)> = Vec::new();
        for n in notes.iter().filter(|n| n.track == v + 1) {
            events.push((n.start, true, n.pitch, n.channel));
            events.push((n.start + n.duration, false, n.pitch, n.channel));
        }
        events.sort();
        let mut body = Vec::new();
        meta(&mut body, 0, 0x03, name.as_bytes());
        let mut now = 0;
        for (tick, on, pitch, ch) in events {
            push_varlen(&mut body, tick - now);
            now = tick;
            if on {
                body.extend([0x90 | ch, pitch, VELOCITY]);
            } else {
                body.extend([0x80 | ch, pitch, 0]);
            }
        }
        meta(&mut body, 0, 0x2f, &[]);
        file.extend(chunk(b"MTrk", &body));
    }
    Ok(file)
}

pub fn write_midi(path: &Path, phrase: &Phrase) -> Result<()> {
    fs::write(path, encode(phrase)?)?;
    Ok(())
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| Error::Midi(format!("truncated at byte {}", self.pos)))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn byte(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_be_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn varlen(&mut self) -> Result<u64> {
        let mut v = 0u64;
        for _ in 0..4 {
            let b = self.byte()?;
            v = (v << 7) | (b & 0x7f) as u64;
            if b & 0x80 == 0 {
                return Ok(v);
            }
        }
        Err(Error::Midi("variable-length quantity too long".into()))
    }
}

fn read_track(body: &[u8], track: usize, notes: &mut Vec<MidiNote>) -> Result<()> {
    let mut r = Reader { bytes: body, pos: 0 };
    let mut now = 0u64;
    let mut status = 0u8;
    // open notes keyed by (channel, pitch), start ticks stacked
    let mut open: Vec<((u8, u8), u64)> = Vec::new();
    while r.pos < body.len() {
        now += r.varlen()?;
        let first = r.byte()?;
        if first == 0xff {
            let kind = r.byte()?;
            let len = r.varlen()? as usize;
            r.take(len)?;
            if kind == 0x2f {
                break;
            }
            continue;
        }
        if first == 0xf0 || first == 0xf7 {
            let len = r.varlen()? as usize;
            r.take(len)?;
            continue;
        }
        let data1 = if first & 0x80 != 0 {
            status = first;
            r.byte()?
        } else {
            if status == 0 {
                return Err(Error::Midi("running status without a status byte".into()));
            }
            first
        };
        let kind = status & 0xf0;
        let ch = status & 0x0f;
        match kind {
            0xc0 | 0xd0 => {}
            0x80 | 0x90 | 0xa0 | 0xb0 | 0xe0 => {
                let data2 = r.byte()?;
                let is_on = kind == 0x90 && data2 > 0;
                let is_off = kind == 0x80 || (kind == 0x90 && data2 == 0);
                if is_on {
                    open.push(((ch, data1), now));
                } else if is_off {
                    let k = open
                        .iter()
                        .position(|&(key, _)| key == (ch, data1))
                        .ok_or_else(|| Error::Midi(format!("note-off without note-on at tick {now}")))?;
                    let (_, start) = open.remove(k);
                    notes.push(MidiNote { track, start, pitch: data1, duration: now - start, channel: ch });
                }
            }
            _ => return Err(Error::Midi(format!("unexpected status {status:#x}"))),
        }
    }
    if !open.is_empty() {
        return Err(Error::Midi("notes left sounding at end of track".into()));
    }
    Ok(())
}

pub fn decode(bytes: &[u8]) -> Result<MidiFile> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(4)? != b"MThd" {
        return Err(Error::Midi("missing header chunk".into()));
    }
    let len = r.u32()? as usize;
    let header = r.take(len)?;
    if header.len() < 6 {
        return Err(Error::Midi("short header".into()));
    }
    let tracks = u16::from_be_bytes([header[2], header[3]]) as usize;
    let division = u16::from_be_bytes([header[4], header[5]]);
    if division & 0x8000 != 0 {
        return Err(Error::Midi("timecode division is not supported".into()));
    }
    let mut notes = Vec::new();
    for track in 0..tracks {
        let tag = r.take(4)?;
        let len = r.u32()? as usize;
        let body = r.take(len)?;
        if tag == b"MTrk" {
            read_track(body, track, &mut notes)?;
        }
    }
    notes.sort();
    Ok(MidiFile { ticks_per_quarter: division, notes })
}

pub fn read_midi(path: &Path) -> Result<MidiFile> {
    decode(&fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::score::{KeyContext, Meter, NoteEvent, Pitch, ScaleDegreeClass};

    fn b(n: i64) -> Beat {
        Beat::from_integer(n)
    }

    #[test]
    fn varlen_encoding() {
        for (v, bytes) in [(0u64, vec![0u8]), (0x7f, vec![0x7f]), (0x80, vec![0x81, 0]), (0x0fff_ffff, vec![0xff, 0xff, 0xff, 0x7f])] {
            let mut out = Vec::new();
            push_varlen(&mut out, v);
            assert_eq!(out, bytes);
            assert_eq!(Reader { bytes: &out, pos: 0 }.varlen().unwrap(), v);
        }
    }

    #[test]
    fn one_note() {
        let p = Phrase::new(
            KeyContext::major("C").unwrap(),
            Meter::COMMON,
            vec!["v".into()],
            vec![NoteEvent::pitched(0, b(0), Beat::new(3, 2), "C4".parse::<Pitch>().unwrap())],
        )
        .unwrap();
        let bytes = encode(&p).unwrap();
        assert_eq!(bytes.iter().filter(|&&x| x == 0x90).count(), 1);
        let back = decode(&bytes).unwrap();
        assert_eq!(back.notes, vec![MidiNote { track: 1, start: 0, pitch: 60, duration: 720, channel: 0 }]);
    }

    #[test]
    fn degree_phrase_is_refused() {
        let p = Phrase::new(
            KeyContext::major("C").unwrap(),
            Meter::COMMON,
            vec!["v".into()],
            vec![NoteEvent::degree(0, b(0), b(1), ScaleDegreeClass::One)],
        )
        .unwrap();
        assert!(matches!(encode(&p), Err(Error::NotRealized)));
    }

    #[test]
    fn garbage_is_rejected() {
        assert!(decode(b"RIFF....").is_err());
        assert!(decode(b"MThd\0\0\0\x06\0\x01\0\x01\x01\xe0MTrk\0\0\0\x05\0\x90\x3c").is_err());
    }
}
