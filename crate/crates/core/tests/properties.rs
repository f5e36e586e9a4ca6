use prolong::realize::{realize_pitches, VoiceProfile};
use prolong::score::{
    metric_strength, parse_phrase, phrase_to_json, Beat, EventContent, Interval, KeyContext, Letter, Meter, Mode,
    NoteEvent, Phrase, Pitch, ScaleDegreeClass as D,
};
use proptest::prelude::*;

fn key_strategy() -> impl Strategy<Value = KeyContext> {
    let tonics = ["C", "G", "D", "A", "E", "B", "F#", "Db", "Ab", "Eb", "Bb", "F"];
    (0..tonics.len(), any::<bool>()).prop_map(move |(i, minor)| {
        KeyContext::parse_tonic(tonics[i], if minor { Mode::Minor } else { Mode::Major }).unwrap()
    })
}

fn degree_strategy() -> impl Strategy<Value = D> {
    (0..17usize).prop_map(|i| D::ALL[i])
}

fn pitch_line(key: KeyContext, pitches: &[u8]) -> Phrase {
    let events = pitches
        .iter()
        .enumerate()
        .map(|(i, &m)| {
            let letter = Letter::from_index((m as i32 * 7 / 12) % 7);
            let natural = letter.natural_pc();
            let pc = m as i32 % 12;
            let alter = (pc - natural + 6).rem_euclid(12) - 6;
            let p = Pitch::new(letter, alter, m as i32 / 12 - 1).unwrap();
            NoteEvent::pitched(0, Beat::from_integer(i as i64), Beat::new(1, 2), p)
        })
        .collect();
    Phrase::new(key, Meter::COMMON, vec!["v".into()], events).unwrap()
}

fn midis(p: &Phrase) -> Vec<u8> {
    p.events
        .iter()
        .map(|e| match e.content {
            EventContent::Pitch(p) => p.midi(),
            _ => unreachable!(),
        })
        .collect()
}

proptest! {
    #[test]
    fn degree_spelling_round_trips(key in key_strategy(), d in degree_strategy(), octave in 2..6i32) {
        let pitch = key.realize(d, octave).unwrap();
        prop_assert_eq!(key.degree_of(&pitch).unwrap(), d);
    }

    #[test]
    fn transposition_is_a_group_action(
        key in key_strategy(),
        line in proptest::collection::vec(50u8..70, 1..8),
        a in -3i32..=3,
        b in -3i32..=3,
    ) {
        // Steps along the circle of fifths keep every spelling representable.
        let fifth = |n: i32| Interval::new((7 * n).rem_euclid(12), (4 * n).rem_euclid(7));
        let p = pitch_line(key, &line);
        let two = p.transpose(fifth(a)).unwrap().transpose(fifth(b)).unwrap();
        let one = p.transpose(fifth(a) + fifth(b)).unwrap();
        prop_assert_eq!(two.key, one.key);
        prop_assert_eq!(midis(&two), midis(&one));
        let back = p.transpose(fifth(a)).unwrap().transpose(-fifth(a)).unwrap();
        prop_assert_eq!(back, p);
    }

    #[test]
    fn metric_strength_repeats_every_bar(num in 0i64..64, den in 1i64..9, bars in 0i64..5, three in any::<bool>()) {
        let meter = if three { Meter::new(3, 4).unwrap() } else { Meter::COMMON };
        let onset = Beat::new(num, den);
        let shifted = onset + meter.bar_length() * Beat::from_integer(bars);
        prop_assert_eq!(metric_strength(onset, meter), metric_strength(shifted, meter));
    }

    #[test]
    fn phrase_json_is_a_fixed_point(key in key_strategy(), degrees in proptest::collection::vec(0usize..18, 1..12)) {
        let events = degrees
            .iter()
            .enumerate()
            .map(|(i, &d)| NoteEvent::degree(0, Beat::new(i as i64, 2), Beat::new(1, 2), D::ALL[d]))
            .collect();
        let p = Phrase::new(key, Meter::COMMON, vec!["treble".into()], events).unwrap();
        let text = phrase_to_json(&p);
        let back = parse_phrase(&text).unwrap();
        prop_assert_eq!(&back, &p);
        prop_assert_eq!(phrase_to_json(&back), text);
    }

    #[test]
    fn realized_lines_stay_near_the_centre(key in key_strategy(), degrees in proptest::collection::vec(degree_strategy(), 20)) {
        let events = degrees
            .iter()
            .enumerate()
            .map(|(i, &d)| NoteEvent::degree(0, Beat::from_integer(i as i64), Beat::from_integer(1), d))
            .collect();
        let p = Phrase::new(key, Meter::COMMON, vec!["treble".into()], events).unwrap();
        let profile = VoiceProfile::treble();
        let r = realize_pitches(&p, std::slice::from_ref(&profile)).unwrap();
        let centre = profile.central.midi() as i32;
        for m in midis(&r) {
            prop_assert!((m as i32 - centre).abs() <= 12);
        }
    }
}
