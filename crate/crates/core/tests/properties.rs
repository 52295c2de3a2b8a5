use std::collections::{BTreeMap, BTreeSet};

use proptest::prelude::*;
use trackfill::corpus::onset_chromagram_fingerprint;
use trackfill::dataset::{
    sample_finetune_example, span_corrupt, splice, transpose, DatasetConfig, RandomSource,
};
use trackfill::eval::{groove_similarity, note_f1, pch_entropy_diff, ScoredNote};
use trackfill::midi::{parse_smf, write_smf, Note, QuantizedSong, Track};
use trackfill::preprocess::{overlap_measure, IntervalSet};
use trackfill::synth::{random_song, rescale_song, transpose_song, SongShape};
use trackfill::tokens::{
    decode, encode, encode_measures, track_order, vocabulary, LevelThresholds, Token, TokenSeq,
};

/// Instrument and sorted (onset, duration, pitch) of one track.
type TrackNotes = (u8, Vec<(u32, u32, u8)>);

/// Per canonical track, skipping empty ones.
fn structure(song: &QuantizedSong) -> Vec<TrackNotes> {
    let s = song.song();
    track_order(s)
        .unwrap()
        .into_iter()
        .map(|(t, _)| &s.tracks[t])
        .filter(|t| !t.notes.is_empty())
        .map(|t| {
            let mut notes: Vec<_> = t
                .notes
                .iter()
                .map(|n| (n.onset, n.duration, n.pitch))
                .collect();
            notes.sort_unstable();
            (t.instrument, notes)
        })
        .collect()
}

fn small_shape() -> SongShape {
    SongShape {
        max_tracks: 6,
        max_measures: 8,
        ..SongShape::default()
    }
}

// brute-force oracles

fn tick_sets(notes: &[(u32, u32, u8)], shift: i64) -> BTreeSet<(u8, i64)> {
    notes
        .iter()
        .flat_map(|&(s, d, p)| (i64::from(s)..i64::from(s + d)).map(move |t| (p, t + shift)))
        .collect()
}

fn overlap_oracle(a: &[(u32, u32, u8)], b: &[(u32, u32, u8)], shift: i64) -> f64 {
    let sa = tick_sets(a, 0);
    let sb = tick_sets(b, shift);
    let denom = sa.len().max(sb.len());
    if denom == 0 {
        return 0.0;
    }
    sa.intersection(&sb).count() as f64 / denom as f64
}

fn f1_oracle(g: &[ScoredNote], t: &[ScoredNote]) -> (f64, f64, f64) {
    let same = |a: &ScoredNote, b: &ScoredNote| {
        a.track == b.track && a.measure == b.measure && a.onset == b.onset && a.pitch == b.pitch
    };
    let uniq = |v: &[ScoredNote]| {
        let mut out: Vec<ScoredNote> = Vec::new();
        for n in v {
            if !out.iter().any(|o| same(o, n)) {
                out.push(*n);
            }
        }
        out
    };
    let (g, t) = (uniq(g), uniq(t));
    if g.is_empty() && t.is_empty() {
        return (1.0, 1.0, 1.0);
    }
    if g.is_empty() || t.is_empty() {
        return (0.0, 0.0, 0.0);
    }
    let mut matches = 0;
    for a in &g {
        for b in &t {
            if same(a, b) {
                matches += 1;
            }
        }
    }
    let m = matches as f64;
    let (p, r) = (m / g.len() as f64, m / t.len() as f64);
    let f = if matches == 0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    };
    (p, r, f)
}

fn entropy_oracle(g: &[ScoredNote], t: &[ScoredNote]) -> Option<f64> {
    let h = |notes: &[ScoredNote], m: usize| {
        let mut bins = [0u64; 12];
        for n in notes {
            if !n.drum && n.measure == m {
                bins[usize::from(n.pitch % 12)] += 1;
            }
        }
        let total: u64 = bins.iter().sum();
        let mut e = 0.0;
        for c in bins {
            if c > 0 {
                let p = c as f64 / total as f64;
                e += -p * p.log2();
            }
        }
        (e, total)
    };
    let last = g.iter().chain(t).map(|n| n.measure).max()?;
    let mut sum = 0.0;
    let mut count = 0;
    for m in 0..=last {
        let (eg, ng) = h(g, m);
        let (et, nt) = h(t, m);
        if ng + nt == 0 {
            continue;
        }
        sum += (eg - et).abs();
        count += 1;
    }
    (count > 0).then(|| sum / count as f64)
}

fn groove_oracle(g: &[ScoredNote], t: &[ScoredNote], masked: &BTreeMap<usize, u32>) -> Option<f64> {
    if masked.is_empty() {
        return None;
    }
    let mut sum = 0.0;
    for (&m, &len) in masked {
        let mut positions = 0;
        let mut differ = 0;
        for tick in 0..len {
            if tick % 3 != 0 && tick % 4 != 0 {
                continue;
            }
            positions += 1;
            let hit = |v: &[ScoredNote]| v.iter().any(|n| n.measure == m && n.onset == tick);
            if hit(g) != hit(t) {
                differ += 1;
            }
        }
        sum += 1.0 - differ as f64 / positions as f64;
    }
    Some(sum / masked.len() as f64)
}

fn scored_notes() -> impl Strategy<Value = Vec<ScoredNote>> {
    prop::collection::vec(
        (
            0usize..3,
            0usize..3,
            0u32..96,
            58u8..66,
            prop::bool::weighted(0.2),
        ),
        0..14,
    )
    .prop_map(|v| {
        v.into_iter()
            .map(|(track, measure, onset, pitch, drum)| ScoredNote {
                track,
                measure,
                onset: onset / 3 * 3,
                pitch,
                drum,
            })
            .collect()
    })
}

fn raw_notes() -> impl Strategy<Value = Vec<(u32, u32, u8)>> {
    prop::collection::vec((0u32..200, 0u32..40, 60u8..64), 0..12)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(96))]

    #[test]
    fn codec_round_trip(seed in any::<u64>()) {
        let song = random_song(&mut RandomSource::new(seed), &small_shape());
        let t = LevelThresholds::default();
        let tokens = encode(&song, &t).unwrap();
        let back = decode(&tokens, &t).unwrap();
        prop_assert_eq!(structure(&back), structure(&song));
        prop_assert_eq!(back.measures(), song.measures());
        prop_assert_eq!(encode(&back, &t).unwrap(), tokens);
    }

    #[test]
    fn token_text_round_trip(seed in any::<u64>()) {
        let song = random_song(&mut RandomSource::new(seed), &small_shape());
        let tokens = encode(&song, &LevelThresholds::default()).unwrap();
        let text = tokens.to_string();
        prop_assert_eq!(text.parse::<TokenSeq>().unwrap(), tokens);
    }

    #[test]
    fn smf_round_trip_keeps_notes(seed in any::<u64>()) {
        // overlapping same-pitch notes are ambiguous in SMF, so drop them
        let mut song = random_song(&mut RandomSource::new(seed), &small_shape()).into_song();
        for track in &mut song.tracks {
            let mut kept: Vec<Note> = Vec::new();
            for n in &track.notes {
                if !kept.iter().any(|k| k.pitch == n.pitch && k.end() > n.onset) {
                    kept.push(*n);
                }
            }
            track.notes = kept;
        }
        let bytes = write_smf(&song).unwrap();
        let parsed = parse_smf(&bytes).unwrap();
        let mut a: Vec<(u8, u32, u32, u8)> = song.tracks.iter()
            .flat_map(|t| t.notes.iter().map(move |n| (t.instrument, n.onset, n.duration, n.pitch))).collect();
        let mut b: Vec<(u8, u32, u32, u8)> = parsed.tracks.iter()
            .flat_map(|t| t.notes.iter().map(move |n| (t.instrument, n.onset, n.duration, n.pitch))).collect();
        a.sort_unstable();
        b.sort_unstable();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn overlap_matches_tick_oracle(a in raw_notes(), b in raw_notes(), shift in -48i64..=48) {
        let track = |v: &[(u32, u32, u8)]| Track::new(0, v.iter().map(|&(s, d, p)| Note::new(s, d, p, 80)).collect());
        let got = overlap_measure(&track(&a), &track(&b));
        prop_assert!((got - overlap_oracle(&a, &b, 0)).abs() < 1e-9);
        prop_assert!((got - overlap_measure(&track(&b), &track(&a))).abs() < 1e-12);
        let sa = IntervalSet::from_notes(&track(&a).notes);
        let sb = IntervalSet::from_notes(&track(&b).notes);
        prop_assert!((sa.overlap(&sb, shift) - overlap_oracle(&a, &b, shift)).abs() < 1e-9);
    }

    #[test]
    fn metrics_match_oracles(g in scored_notes(), t in scored_notes(), masked_bits in 1u8..8) {
        let f = note_f1(&g, &t);
        prop_assert_eq!((f.precision, f.recall, f.f1), f1_oracle(&g, &t));
        prop_assert_eq!(pch_entropy_diff(&g, &t), entropy_oracle(&g, &t));
        let masked: BTreeMap<usize, u32> = (0..3).filter(|m| masked_bits & (1 << m) != 0).map(|m| (m, 96)).collect();
        prop_assert_eq!(groove_similarity(&g, &t, &masked), groove_oracle(&g, &t, &masked));
    }

    #[test]
    fn metric_invariances(g in scored_notes(), t in scored_notes(), shift in 1u8..12) {
        prop_assert_eq!(note_f1(&g, &t).f1, note_f1(&t, &g).f1);
        let mut rev = g.clone();
        rev.reverse();
        prop_assert_eq!(note_f1(&rev, &t), note_f1(&g, &t));
        let up = |v: &[ScoredNote]| v.iter().map(|n| ScoredNote { pitch: n.pitch + shift, ..*n }).collect::<Vec<_>>();
        let a = pch_entropy_diff(&g, &t);
        let b = pch_entropy_diff(&up(&g), &up(&t));
        prop_assert_eq!(a.is_some(), b.is_some());
        if let (Some(a), Some(b)) = (a, b) {
            prop_assert!((a - b).abs() < 1e-12);
        }
        let masked = BTreeMap::from([(0, 96), (1, 96)]);
        prop_assert_eq!(groove_similarity(&up(&g), &t, &masked), groove_similarity(&g, &t, &masked));
    }

    #[test]
    fn finetune_examples_splice_back(seed in any::<u64>()) {
        let mut rng = RandomSource::new(seed);
        let song = random_song(&mut rng, &small_shape());
        let t = LevelThresholds::default();
        let config = DatasetConfig::default();
        for i in 0..4 {
            let Some(ex) = sample_finetune_example(&song, "p", i, &mut rng, &config, &t).unwrap() else {
                continue;
            };
            let (start, end) = ex.meta.slice;
            let enc = encode_measures(&transpose(&song, ex.meta.transposition), &t).unwrap();
            prop_assert_eq!(splice(&ex.input, &ex.target).unwrap(), enc.slice_tokens(start..end));
            prop_assert_eq!(ex.coords.len(), ex.mask_count());
        }
    }

    #[test]
    fn span_corruption_splices_back(seed in any::<u64>()) {
        let mut rng = RandomSource::new(seed);
        let song = random_song(&mut rng, &small_shape());
        let tokens = encode(&song, &LevelThresholds::default()).unwrap();
        if let Some((input, target)) = span_corrupt(&tokens, 0.15, 3.0, &mut rng) {
            prop_assert_eq!(splice(&input, &target).unwrap(), tokens);
            prop_assert!(input.iter().any(Token::is_sentinel));
        }
    }

    #[test]
    fn fingerprint_ignores_transposition_and_resolution(seed in any::<u64>(), semis in -6i32..=6, factor in 1u32..6) {
        let song = random_song(&mut RandomSource::new(seed), &small_shape()).into_song();
        let base = onset_chromagram_fingerprint(&song).unwrap();
        let copy = rescale_song(&transpose_song(&song, semis), factor);
        prop_assume!(copy.notes().all(|n| n.pitch > 0 && n.pitch < 127));
        let fp = onset_chromagram_fingerprint(&copy).unwrap();
        prop_assert_eq!(fp.hash(), base.hash());
    }

    #[test]
    fn levels_are_monotone(a in 0.0f64..200.0, b in 0.0f64..200.0) {
        let t = LevelThresholds::default();
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        prop_assert!(t.dynamics_level(lo) <= t.dynamics_level(hi));
        prop_assert!(t.tempo_level(lo) <= t.tempo_level(hi));
    }
}

#[test]
fn vocabulary_text_round_trip() {
    for token in vocabulary() {
        assert_eq!(token.to_string().parse::<Token>().unwrap(), token);
    }
}
