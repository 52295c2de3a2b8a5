//! Pitch-wise interval overlap between tracks and removal of tracks that
//! duplicate (possibly time-shifted) earlier tracks of the same instrument.

use std::collections::BTreeMap;

use crate::midi::{quantize, Note, Song, Track, GRID_SUBDIVISIONS, GRID_TICKS_PER_QUARTER};

/// Per-pitch union of closed note intervals `[onset, end]`.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct IntervalSet {
    per_pitch: BTreeMap<u8, Vec<(i64, i64)>>,
    total: i64,
}

impl IntervalSet {
    pub fn from_notes<'a>(notes: impl IntoIterator<Item = &'a Note>) -> Self {
        Self::from_intervals(
            notes
                .into_iter()
                .map(|n| (n.pitch, i64::from(n.onset), i64::from(n.end()))),
        )
    }

    /// Builds from `(pitch, start, end)` triples; overlapping or touching
    /// intervals of one pitch are merged.
    pub fn from_intervals(intervals: impl IntoIterator<Item = (u8, i64, i64)>) -> Self {
        let mut raw: BTreeMap<u8, Vec<(i64, i64)>> = BTreeMap::new();
        for (pitch, start, end) in intervals {
            raw.entry(pitch).or_default().push((start, end.max(start)));
        }
        let mut total = 0;
        let per_pitch = raw
            .into_iter()
            .map(|(pitch, mut v)| {
                v.sort_unstable();
                let mut merged: Vec<(i64, i64)> = Vec::with_capacity(v.len());
                for (s, e) in v {
                    match merged.last_mut() {
                        Some(last) if s <= last.1 => last.1 = last.1.max(e),
                        _ => merged.push((s, e)),
                    }
                }
                total += merged.iter().map(|(s, e)| e - s).sum::<i64>();
                (pitch, merged)
            })
            .collect();
        Self { per_pitch, total }
    }

    pub fn total_length(&self) -> i64 {
        self.total
    }

    pub fn intervals(&self, pitch: u8) -> &[(i64, i64)] {
        self.per_pitch.get(&pitch).map_or(&[], Vec::as_slice)
    }

    /// Total length of `self ∩ (other shifted by shift)`, summed over pitches.
    pub fn intersection_length(&self, other: &Self, shift: i64) -> i64 {
        let mut sum = 0;
        for (pitch, a) in &self.per_pitch {
            let Some(b) = other.per_pitch.get(pitch) else {
                continue;
            };
            let (mut i, mut j) = (0, 0);
            while i < a.len() && j < b.len() {
                let (bs, be) = (b[j].0 + shift, b[j].1 + shift);
                let lo = a[i].0.max(bs);
                let hi = a[i].1.min(be);
                if hi > lo {
                    sum += hi - lo;
                }
                if a[i].1 < be {
                    i += 1;
                } else {
                    j += 1;
                }
            }
        }
        sum
    }

    /// Overlap ratio against `other` shifted by `shift`; 0 when both are empty.
    pub fn overlap(&self, other: &Self, shift: i64) -> f64 {
        let denom = self.total.max(other.total);
        if denom == 0 {
            return 0.0;
        }
        self.intersection_length(other, shift) as f64 / denom as f64
    }
}

/// Fraction of the larger track's note-interval length that coincides, pitch
/// by pitch, with the other track. Symmetric, in `[0, 1]`.
pub fn overlap_measure(t1: &Track, t2: &Track) -> f64 {
    IntervalSet::from_notes(&t1.notes).overlap(&IntervalSet::from_notes(&t2.notes), 0)
}

pub const DEFAULT_OVERLAP_THRESHOLD: f64 = 0.9;
/// Half a note at 24 ticks per quarter.
pub const DEFAULT_MAX_SHIFT_TICKS: u32 = 2 * GRID_TICKS_PER_QUARTER;

fn grid_intervals(track: &Track, resolution: u32) -> IntervalSet {
    let to_grid = |t: u32| {
        let num = i64::from(t) * i64::from(GRID_TICKS_PER_QUARTER);
        let den = i64::from(resolution.max(1));
        (2 * num + den) / (2 * den)
    };
    IntervalSet::from_intervals(
        track
            .notes
            .iter()
            .map(|n| (n.pitch, to_grid(n.onset), to_grid(n.end()))),
    )
}

/// Drops each pitched track for which an earlier kept track with the same
/// instrument overlaps some shift of it (every grid tick within
/// `max_shift_ticks`, at 24 ticks per quarter) by at least `threshold`.
/// Comparison runs on a copy quantized to the 24-tick grid; if that copy
/// cannot be built, times are simply rescaled and rounded.
pub fn remove_shifted_duplicates(song: &Song, threshold: f64, max_shift_ticks: u32) -> Song {
    let sets: Vec<IntervalSet> = match quantize(song, GRID_TICKS_PER_QUARTER, &GRID_SUBDIVISIONS) {
        Ok(q) => q
            .tracks
            .iter()
            .map(|t| IntervalSet::from_notes(&t.notes))
            .collect(),
        Err(_) => song
            .tracks
            .iter()
            .map(|t| grid_intervals(t, song.resolution))
            .collect(),
    };
    let max_shift = i64::from(max_shift_ticks);
    let mut kept: Vec<usize> = Vec::with_capacity(song.tracks.len());
    for (i, track) in song.tracks.iter().enumerate() {
        let duplicate = !track.is_drums()
            && kept.iter().any(|&j| {
                song.tracks[j].instrument == track.instrument
                    && is_shifted_duplicate(&sets[j], &sets[i], threshold, max_shift)
            });
        if !duplicate {
            kept.push(i);
        }
    }
    let mut out = song.clone();
    out.tracks = kept.into_iter().map(|i| song.tracks[i].clone()).collect();
    out
}

fn is_shifted_duplicate(
    earlier: &IntervalSet,
    later: &IntervalSet,
    threshold: f64,
    max_shift: i64,
) -> bool {
    let denom = earlier.total_length().max(later.total_length());
    if denom == 0 {
        return false;
    }
    let smaller = earlier.total_length().min(later.total_length());
    if (smaller as f64) < threshold * denom as f64 {
        return false;
    }
    (-max_shift..=max_shift)
        .any(|s| earlier.intersection_length(later, s) as f64 >= threshold * denom as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn notes(spec: &[(u32, u32, u8)]) -> Track {
        Track::new(
            0,
            spec.iter()
                .map(|&(s, d, p)| Note::new(s, d, p, 80))
                .collect(),
        )
    }

    #[test]
    fn identical_and_disjoint() {
        let a = notes(&[(0, 24, 60), (24, 24, 62)]);
        assert_eq!(overlap_measure(&a, &a), 1.0);
        let b = notes(&[(0, 24, 61), (24, 24, 63)]);
        assert_eq!(overlap_measure(&a, &b), 0.0);
        assert_eq!(overlap_measure(&Track::default(), &Track::default()), 0.0);
    }

    #[test]
    fn half_overlap() {
        let a = notes(&[(0, 96, 60)]);
        let b = notes(&[(48, 96, 60)]);
        assert_eq!(overlap_measure(&a, &b), 0.5);
        assert_eq!(overlap_measure(&b, &a), 0.5);
    }

    #[test]
    fn union_merges_overlapping_notes() {
        let set =
            IntervalSet::from_notes(&notes(&[(0, 50, 60), (25, 50, 60), (100, 10, 60)]).notes);
        assert_eq!(set.intervals(60), &[(0, 75), (100, 110)]);
        assert_eq!(set.total_length(), 85);
    }

    #[test]
    fn removes_exact_and_delayed_copies() {
        let line = [
            (0, 24, 60),
            (24, 24, 64),
            (48, 24, 67),
            (72, 24, 72),
            (96, 48, 71),
        ];
        let delayed: Vec<_> = line.iter().map(|&(s, d, p)| (s + 12, d, p)).collect();
        let other = [(0, 48, 48), (48, 48, 50), (96, 48, 52)];
        let song = Song::with_tracks(
            24,
            vec![notes(&line), notes(&line), notes(&delayed), notes(&other)],
        );
        let out =
            remove_shifted_duplicates(&song, DEFAULT_OVERLAP_THRESHOLD, DEFAULT_MAX_SHIFT_TICKS);
        assert_eq!(out.tracks.len(), 2);
        assert_eq!(out.tracks[0], song.tracks[0]);
        assert_eq!(out.tracks[1], song.tracks[3]);
    }

    #[test]
    fn different_instruments_never_compared() {
        let line = [(0, 24, 60), (24, 24, 64)];
        let mut copy = notes(&line);
        copy.instrument = 40;
        let song = Song::with_tracks(24, vec![notes(&line), copy]);
        let out = remove_shifted_duplicates(&song, 0.9, 48);
        assert_eq!(out.tracks.len(), 2);
    }

    #[test]
    fn shift_beyond_half_note_kept() {
        let line = [(0, 12, 60), (200, 12, 62)];
        let far: Vec<_> = line.iter().map(|&(s, d, p)| (s + 60, d, p)).collect();
        let song = Song::with_tracks(24, vec![notes(&line), notes(&far)]);
        assert_eq!(remove_shifted_duplicates(&song, 0.9, 48).tracks.len(), 2);
    }

    #[test]
    fn compares_at_grid_resolution() {
        // 480 tpq, copy delayed by an 8th note (240 ticks = 12 grid ticks)
        let line = [(0, 480, 60), (480, 480, 62), (960, 960, 64)];
        let delayed: Vec<_> = line.iter().map(|&(s, d, p)| (s + 240, d, p)).collect();
        let song = Song::with_tracks(480, vec![notes(&line), notes(&delayed)]);
        assert_eq!(remove_shifted_duplicates(&song, 0.9, 48).tracks.len(), 1);
    }
}
