//! Finetuning mask patterns over (track, measure) grids of a slice.

use std::collections::BTreeSet;

use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};

/// Relative weights of patterns 0 through 6.
pub const PATTERN_WEIGHTS: [u32; 7] = [4, 6, 1, 1, 1, 1, 4];

/// Tunable parts of the pattern definitions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MaskKnobs {
    pub pattern_weights: [u32; 7],
    /// Per track-measure masking probability of pattern 0.
    pub random_probability: f64,
    /// "Most tracks" masks `ceil(n * u)` tracks with `u` uniform in `[most_tracks_min, 1)`.
    pub most_tracks_min: f64,
    /// Run lengths for patterns 4 and 5.
    pub consecutive_min: usize,
    pub consecutive_max: usize,
    /// Pattern 6 gives each chosen track between 1 and this many spans.
    pub max_spans_per_track: usize,
}

impl Default for MaskKnobs {
    fn default() -> Self {
        Self {
            pattern_weights: PATTERN_WEIGHTS,
            random_probability: 0.5,
            most_tracks_min: 0.6,
            consecutive_min: 2,
            consecutive_max: 4,
            max_spans_per_track: 2,
        }
    }
}

/// Masked `(track, measure)` coordinates, both relative to the slice.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MaskPattern {
    pub pattern_id: u8,
    pub masked: BTreeSet<(usize, usize)>,
}

impl MaskPattern {
    pub fn contains(&self, track: usize, measure: usize) -> bool {
        self.masked.contains(&(track, measure))
    }

    pub fn len(&self) -> usize {
        self.masked.len()
    }

    pub fn is_empty(&self) -> bool {
        self.masked.is_empty()
    }
}

pub fn draw_pattern_id<R: Rng + ?Sized>(rng: &mut R, weights: &[u32; 7]) -> u8 {
    let total: u32 = weights.iter().sum();
    let mut x = rng.random_range(0..total.max(1));
    for (id, &w) in weights.iter().enumerate() {
        if x < w {
            return id as u8;
        }
        x -= w;
    }
    6
}

fn random_subset<R: Rng + ?Sized>(rng: &mut R, n: usize) -> Vec<usize> {
    let count = rng.random_range(1..=n);
    sample(rng, n, count).into_vec()
}

fn most_of<R: Rng + ?Sized>(rng: &mut R, n: usize, min_fraction: f64) -> Vec<usize> {
    let u = rng.random_range(min_fraction.clamp(0.0, 1.0)..1.0);
    let count = ((n as f64 * u).ceil() as usize).clamp(1, n);
    sample(rng, n, count).into_vec()
}

fn run<R: Rng + ?Sized>(
    rng: &mut R,
    n_measures: usize,
    min: usize,
    max: usize,
) -> std::ops::Range<usize> {
    let len = rng
        .random_range(min.max(1)..=max.max(min).max(1))
        .min(n_measures);
    let start = rng.random_range(0..=n_measures - len);
    start..start + len
}

/// Coordinates for one draw of pattern `id`; may be empty for pattern 0.
pub fn pattern_coords<R: Rng + ?Sized>(
    rng: &mut R,
    id: u8,
    n_tracks: usize,
    n_measures: usize,
    knobs: &MaskKnobs,
) -> BTreeSet<(usize, usize)> {
    let all_tracks = || 0..n_tracks;
    let cross = |tracks: &[usize], measures: std::ops::Range<usize>| {
        tracks
            .iter()
            .flat_map(|&t| measures.clone().map(move |m| (t, m)))
            .collect::<BTreeSet<_>>()
    };
    match id {
        0 => (0..n_tracks)
            .flat_map(|t| (0..n_measures).map(move |m| (t, m)))
            .filter(|_| rng.random_bool(knobs.random_probability.clamp(0.0, 1.0)))
            .collect(),
        1 => cross(&random_subset(rng, n_tracks), 0..n_measures),
        2 => {
            let m = rng.random_range(0..n_measures);
            cross(&all_tracks().collect::<Vec<_>>(), m..m + 1)
        }
        3 => {
            let m = rng.random_range(0..n_measures);
            cross(&most_of(rng, n_tracks, knobs.most_tracks_min), m..m + 1)
        }
        4 => {
            let r = run(
                rng,
                n_measures,
                knobs.consecutive_min,
                knobs.consecutive_max,
            );
            cross(&all_tracks().collect::<Vec<_>>(), r)
        }
        5 => {
            let r = run(
                rng,
                n_measures,
                knobs.consecutive_min,
                knobs.consecutive_max,
            );
            cross(&most_of(rng, n_tracks, knobs.most_tracks_min), r)
        }
        _ => {
            let mut out = BTreeSet::new();
            for t in random_subset(rng, n_tracks) {
                let spans = rng.random_range(1..=knobs.max_spans_per_track.max(1));
                for _ in 0..spans {
                    let r = run(rng, n_measures, 1, n_measures);
                    out.extend(r.map(|m| (t, m)));
                }
            }
            out
        }
    }
}

/// Draws a pattern id by weight, then coordinates for it; empty draws are
/// redrawn with the same id.
pub fn sample_finetune_mask<R: Rng + ?Sized>(
    n_tracks: usize,
    n_measures: usize,
    rng: &mut R,
    knobs: &MaskKnobs,
) -> MaskPattern {
    assert!(n_tracks > 0 && n_measures > 0, "mask over an empty slice");
    let pattern_id = draw_pattern_id(rng, &knobs.pattern_weights);
    loop {
        let masked = pattern_coords(rng, pattern_id, n_tracks, n_measures, knobs);
        if !masked.is_empty() {
            return MaskPattern { pattern_id, masked };
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::RandomSource;

    #[test]
    fn minimal_slice() {
        let mut rng = RandomSource::new(1);
        for _ in 0..200 {
            let m = sample_finetune_mask(1, 1, &mut rng, &MaskKnobs::default());
            assert_eq!(m.masked.iter().copied().collect::<Vec<_>>(), vec![(0, 0)]);
        }
    }

    #[test]
    fn pattern_shapes() {
        let mut rng = RandomSource::new(2);
        let knobs = MaskKnobs::default();
        for _ in 0..500 {
            let c = pattern_coords(&mut rng, 1, 5, 8, &knobs);
            let tracks: BTreeSet<usize> = c.iter().map(|&(t, _)| t).collect();
            assert!(!tracks.is_empty());
            assert_eq!(c.len(), tracks.len() * 8);

            let c = pattern_coords(&mut rng, 2, 5, 8, &knobs);
            let measures: BTreeSet<usize> = c.iter().map(|&(_, m)| m).collect();
            assert_eq!((measures.len(), c.len()), (1, 5));

            let c = pattern_coords(&mut rng, 3, 5, 8, &knobs);
            assert!((3..=5).contains(&c.len()));

            let c = pattern_coords(&mut rng, 4, 5, 8, &knobs);
            let measures: Vec<usize> = c
                .iter()
                .map(|&(_, m)| m)
                .collect::<BTreeSet<_>>()
                .into_iter()
                .collect();
            assert!((2..=4).contains(&measures.len()));
            assert_eq!(measures.last().unwrap() - measures[0] + 1, measures.len());
            assert_eq!(c.len(), 5 * measures.len());

            let c = pattern_coords(&mut rng, 6, 5, 8, &knobs);
            assert!(!c.is_empty());
            assert!(c.iter().all(|&(t, m)| t < 5 && m < 8));
        }
    }

    #[test]
    fn short_slices_clip_runs() {
        let mut rng = RandomSource::new(3);
        for _ in 0..100 {
            let c = pattern_coords(&mut rng, 4, 2, 1, &MaskKnobs::default());
            assert_eq!(c.len(), 2);
        }
    }

    #[test]
    fn deterministic_for_seed() {
        let draw = |seed| {
            let mut rng = RandomSource::new(seed);
            (0..50)
                .map(|_| sample_finetune_mask(4, 16, &mut rng, &MaskKnobs::default()))
                .collect::<Vec<_>>()
        };
        assert_eq!(draw(11), draw(11));
        assert_ne!(draw(11), draw(12));
    }
}
