//! Infilling examples: a slice of measures with chosen track-measures replaced
//! by sentinels.

use std::collections::BTreeSet;
use std::ops::Range;

use log::debug;
use rand::Rng;

use super::{
    sample_finetune_mask, transpose, DatasetConfig, DatasetError, ExampleKind, ExampleMeta,
    InfillExample, MaskPattern, RandomSource,
};
use crate::midi::QuantizedSong;
use crate::tokens::{encode_measures, EncodedSong, LevelThresholds, Token, TokenSeq, MAX_MASK_ID};

/// Input and target for one slice and mask.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AssembledExample {
    pub input: TokenSeq,
    pub target: TokenSeq,
    /// `(song track index, slice-relative measure)` per sentinel, in order.
    pub coords: Vec<(usize, usize)>,
}

impl AssembledExample {
    pub fn mask_count(&self) -> usize {
        self.coords.len()
    }
}

/// Builds input and target for measures `slice` of `encoded`. `mask` holds
/// `(song track index, slice-relative measure)` pairs; pairs without notes get
/// no sentinel. With `annotate`, each sentinel is followed by `<mono>` or
/// `<poly>` describing the hidden part.
pub fn assemble_example(
    encoded: &EncodedSong,
    slice: Range<usize>,
    mask: &BTreeSet<(usize, usize)>,
    annotate: bool,
) -> AssembledExample {
    let mut input = TokenSeq::new();
    let mut target = TokenSeq::new();
    let mut coords = Vec::new();
    for (rel, measure) in encoded.measures[slice].iter().enumerate() {
        input.0.extend(measure.header());
        for part in &measure.parts {
            input.0.extend(part.header());
            if mask.contains(&(part.track, rel)) {
                let sentinel = Token::Mask(coords.len() as u16);
                input.push(sentinel);
                if annotate {
                    input.push(part.polyphony.token());
                }
                target.push(sentinel);
                target.0.extend_from_slice(&part.body);
                coords.push((part.track, rel));
            } else {
                input.0.extend_from_slice(&part.body);
            }
        }
    }
    AssembledExample {
        input,
        target,
        coords,
    }
}

/// Song tracks with at least one note in `slice`, in canonical order.
pub fn tracks_in_slice(encoded: &EncodedSong, slice: Range<usize>) -> Vec<usize> {
    let present: BTreeSet<usize> = encoded.measures[slice]
        .iter()
        .flat_map(|m| m.parts.iter().map(|p| p.track))
        .collect();
    encoded
        .track_order
        .iter()
        .map(|&(t, _)| t)
        .filter(|t| present.contains(t))
        .collect()
}

/// Maps a mask drawn over slice-local track positions onto song track indices.
fn to_song_tracks(mask: &MaskPattern, tracks: &[usize]) -> BTreeSet<(usize, usize)> {
    mask.masked.iter().map(|&(t, m)| (tracks[t], m)).collect()
}

fn within_limits(ex: &AssembledExample, config: &DatasetConfig) -> bool {
    ex.input.len() <= config.input_limit
        && ex.target.len() <= config.target_limit
        && ex.mask_count() <= config.max_masks.min(usize::from(MAX_MASK_ID) + 1)
}

/// One randomized finetuning example: random transposition, a random slice
/// that fits the input limit, optional truncation to fewer measures, a mask
/// drawn over the final slice, and an optional mono/poly annotation. Returns
/// `None` when no valid example could be formed.
pub fn sample_finetune_example(
    song: &QuantizedSong,
    source: &str,
    index: usize,
    rng: &mut RandomSource,
    config: &DatasetConfig,
    thresholds: &LevelThresholds,
) -> Result<Option<InfillExample>, DatasetError> {
    let seed = rng.seed();
    let shift = rng.random_range(config.transpose_min..=config.transpose_max);
    let encoded = encode_measures(&transpose(song, shift), thresholds)?;
    let counts: Vec<usize> = encoded.measures.iter().map(|m| m.token_count()).collect();
    if counts.is_empty() {
        return Ok(None);
    }

    let start = rng.random_range(0..counts.len());
    let mut end = start;
    let mut total = 0;
    while end < counts.len() && total + counts[end] <= config.input_limit {
        total += counts[end];
        end += 1;
    }
    if end == start {
        debug!("{source}: measure {start} alone exceeds the input limit");
        return Ok(None);
    }
    let mut truncated = false;
    if rng.random_bool(config.truncation_probability) && end - start > 1 {
        end = start + rng.random_range(1..end - start);
        truncated = true;
    }
    let annotate = rng.random_bool(config.mono_poly_probability);

    for _ in 0..config.mask_attempts {
        let mut slice = start..end;
        let tracks = tracks_in_slice(&encoded, slice.clone());
        if tracks.is_empty() {
            return Ok(None);
        }
        let pattern = sample_finetune_mask(tracks.len(), slice.len(), rng, &config.mask);
        let mut mask = to_song_tracks(&pattern, &tracks);
        let mut built = assemble_example(&encoded, slice.clone(), &mask, annotate);
        while !built.coords.is_empty() && !within_limits(&built, config) && slice.len() > 1 {
            slice.end -= 1;
            mask.retain(|&(_, m)| m < slice.len());
            built = assemble_example(&encoded, slice.clone(), &mask, annotate);
        }
        if built.coords.is_empty() {
            continue;
        }
        if !within_limits(&built, config) {
            debug!("{source}: single-measure example exceeds limits");
            return Ok(None);
        }
        return Ok(Some(InfillExample {
            id: format!("{source}#f{index}"),
            input: built.input,
            target: built.target,
            coords: built.coords,
            meta: ExampleMeta {
                source: source.to_string(),
                kind: ExampleKind::Finetune,
                transposition: shift,
                slice: (slice.start, slice.end),
                pattern_id: Some(pattern.pattern_id),
                seed,
                truncated,
                mono_poly: annotate,
                ..ExampleMeta::default()
            },
        }));
    }
    debug!(
        "{source}: no mask hit a note after {} attempts",
        config.mask_attempts
    );
    Ok(None)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::splice;
    use crate::midi::{Note, Song, Track};

    fn one_note() -> EncodedSong {
        let q = QuantizedSong::new(Song::with_tracks(
            24,
            vec![Track::new(5, vec![Note::new(0, 24, 60, 80)])],
        ))
        .unwrap();
        encode_measures(&q, &LevelThresholds::default()).unwrap()
    }

    #[test]
    fn single_note_example() {
        let enc = one_note();
        let mask = BTreeSet::from([(0, 0)]);
        let ex = assemble_example(&enc, 0..1, &mask, false);
        assert_eq!(ex.input.to_string(), "M:4 B:5 L:96 I:5 <extra_id_0>");
        assert_eq!(ex.target.to_string(), "<extra_id_0> d:24 N:60");
        let ex = assemble_example(&enc, 0..1, &mask, true);
        assert_eq!(ex.input.to_string(), "M:4 B:5 L:96 I:5 <extra_id_0> <mono>");
        assert_eq!(ex.coords, vec![(0, 0)]);
    }

    #[test]
    fn empty_track_measures_get_no_sentinel() {
        let q = QuantizedSong::new(Song::with_tracks(
            24,
            vec![
                Track::new(0, vec![Note::new(0, 24, 60, 80), Note::new(96, 24, 62, 80)]),
                Track::new(
                    40,
                    vec![Note::new(96, 24, 72, 80), Note::new(96, 24, 76, 80)],
                ),
            ],
        ))
        .unwrap();
        let enc = encode_measures(&q, &LevelThresholds::default()).unwrap();
        let mask = BTreeSet::from([(0, 1), (1, 0), (1, 1)]);
        let ex = assemble_example(&enc, 0..2, &mask, true);
        assert_eq!(ex.coords, vec![(0, 1), (1, 1)]);
        assert_eq!(
            ex.input.to_string(),
            "M:4 B:5 L:96 I:0 d:24 N:60 M:4 B:5 L:96 I:0 <extra_id_0> <mono> I:40 <extra_id_1> <poly>"
        );
        assert_eq!(splice(&ex.input, &ex.target).unwrap(), enc.to_tokens());
    }

    #[test]
    fn sampled_examples_splice_back() {
        let notes: Vec<Note> = (0..64u32)
            .map(|i| Note::new(i * 24, 24, 50 + (i % 12) as u8, 70))
            .collect();
        let chords: Vec<Note> = (0..16u32)
            .flat_map(|i| [Note::new(i * 96, 48, 48, 60), Note::new(i * 96, 48, 55, 60)])
            .collect();
        let q = QuantizedSong::new(Song::with_tracks(
            24,
            vec![Track::new(0, notes), Track::new(32, chords)],
        ))
        .unwrap();
        let config = DatasetConfig::default();
        let t = LevelThresholds::default();
        let mut rng = RandomSource::new(3);
        for i in 0..200 {
            let ex = sample_finetune_example(&q, "s", i, &mut rng, &config, &t)
                .unwrap()
                .unwrap();
            let (start, end) = ex.meta.slice;
            let enc = encode_measures(&transpose(&q, ex.meta.transposition), &t).unwrap();
            assert_eq!(
                splice(&ex.input, &ex.target).unwrap(),
                enc.slice_tokens(start..end)
            );
            assert!(!ex.coords.is_empty());
        }
    }
}
