//! Grid quantization.
//!
//! Onsets and note ends are rescaled to the target resolution and snapped to
//! the nearest tick that lies a multiple of one of the allowed subdivisions
//! after the start of its measure. At 24 ticks per quarter with
//! subdivisions `{3, 4}` that is the nearest 32nd note or 16th-note triplet.

use super::{MeasureMap, MidiError, Result, Song, DRUMS};

pub const GRID_TICKS_PER_QUARTER: u32 = 24;
pub const GRID_SUBDIVISIONS: [u32; 2] = [3, 4];

/// Longest measure the token language can express, in grid ticks.
pub const MAX_MEASURE_TICKS: u32 = 8 * GRID_TICKS_PER_QUARTER;

fn rescale_round(tick: u32, from: u32, to: u32) -> u32 {
    let num = u64::from(tick) * u64::from(to);
    let den = u64::from(from);
    ((2 * num + den) / (2 * den)) as u32
}

fn rescale_ceil(tick: u32, from: u32, to: u32) -> u32 {
    let num = u64::from(tick) * u64::from(to);
    num.div_ceil(u64::from(from)) as u32
}

/// Snaps scaled positions onto the allowed grid of a measure map.
pub(crate) struct Snapper<'a> {
    measures: &'a MeasureMap,
    subdivisions: &'a [u32],
}

impl<'a> Snapper<'a> {
    pub(crate) fn new(measures: &'a MeasureMap, subdivisions: &'a [u32]) -> Self {
        Self {
            measures,
            subdivisions,
        }
    }

    /// Snaps the rational position `num / den` (in target ticks). Ties go to
    /// the position divisible by the first subdivision, then to the earlier one.
    pub(crate) fn snap(&self, num: u64, den: u64) -> u32 {
        let floor = (num / den) as u32;
        let Some(index) = self.measures.index_of(floor) else {
            return ((2 * num + den) / (2 * den)) as u32;
        };
        let m = self.measures.as_slice()[index];
        let rel = num - u64::from(m.start) * den;
        let mut best: Option<(u64, bool, u32)> = None;
        let mut consider = |offset: u32| {
            let dist = rel.abs_diff(u64::from(offset) * den);
            let preferred = self
                .subdivisions
                .first()
                .is_some_and(|&a| offset.is_multiple_of(a) || offset == m.length);
            let better = match best {
                None => true,
                Some((d, p, o)) => {
                    dist < d || (dist == d && (preferred && !p || preferred == p && offset < o))
                }
            };
            if better {
                best = Some((dist, preferred, offset));
            }
        };
        let rel_floor = (rel / den) as u32;
        if self.subdivisions.is_empty() {
            consider(rel_floor);
            consider((rel_floor + 1).min(m.length));
        }
        for &a in self.subdivisions {
            let lower = rel_floor / a * a;
            consider(lower);
            consider((lower + a).min(m.length));
        }
        consider(m.length);
        m.start + best.expect("at least one candidate").2
    }
}

/// Rescales `song` to `ticks_per_quarter` and snaps every note onset and end
/// to the allowed grid. Pitched notes keep a duration of at least one tick.
pub fn quantize(song: &Song, ticks_per_quarter: u32, subdivisions: &[u32]) -> Result<Song> {
    let from = song.resolution;
    let to = ticks_per_quarter;
    let r = |t: u32| rescale_round(t, from, to);

    let mut out = song.clone();
    out.resolution = to;
    for e in &mut out.tempo_map {
        e.tick = r(e.tick);
    }
    for e in &mut out.timesig_map {
        e.tick = r(e.tick);
    }
    out.end_tick = rescale_ceil(song.end_tick, from, to);
    for track in &mut out.tracks {
        for e in &mut track.program_changes {
            e.tick = r(e.tick);
        }
        for e in &mut track.pedal_events {
            e.tick = r(e.tick);
        }
        for e in &mut track.cc_events {
            e.tick = r(e.tick);
        }
    }
    out.normalize();

    let last = song
        .notes()
        .map(|n| rescale_ceil(n.end(), from, to) + 1)
        .max()
        .unwrap_or(0);
    let mut measures =
        MeasureMap::from_time_signatures(&out.timesig_map, to, out.span_end().max(last))?;
    measures.extend_to_cover(last);
    let snapper = Snapper::new(&measures, subdivisions);
    let den = u64::from(from);

    for (src, dst) in song.tracks.iter().zip(out.tracks.iter_mut()) {
        let drums = src.instrument == DRUMS;
        for (n, q) in src.notes.iter().zip(dst.notes.iter_mut()) {
            let onset = snapper.snap(u64::from(n.onset) * u64::from(to), den);
            let end = snapper.snap(u64::from(n.end()) * u64::from(to), den);
            let mut duration = end.saturating_sub(onset);
            if !drums && duration == 0 {
                duration = 1;
            }
            q.onset = onset;
            q.duration = duration;
        }
        dst.sort_notes();
    }
    Ok(out)
}

/// A song at the 24-ticks-per-quarter training grid together with its measures.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QuantizedSong {
    song: Song,
    measures: MeasureMap,
}

impl QuantizedSong {
    /// Validates an already-quantized song and computes its measures.
    pub fn new(mut song: Song) -> Result<Self> {
        song.normalize();
        let measures = MeasureMap::compute(&song)?;
        Self::from_parts(song, measures)
    }

    /// Quantizes an arbitrary song onto the training grid.
    pub fn quantize(song: &Song) -> Result<Self> {
        Self::new(quantize(song, GRID_TICKS_PER_QUARTER, &GRID_SUBDIVISIONS)?)
    }

    /// Builds from a song and an explicit measure map, checking that the map
    /// tiles from tick 0 and covers every onset.
    pub fn from_parts(song: Song, measures: MeasureMap) -> Result<Self> {
        if song.resolution != GRID_TICKS_PER_QUARTER {
            return Err(MidiError::GridViolation(format!(
                "resolution {} != {GRID_TICKS_PER_QUARTER}",
                song.resolution
            )));
        }
        if measures.is_empty() || measures.get(0).is_some_and(|m| m.start != 0) {
            return Err(MidiError::GridViolation(
                "measures must start at tick 0".into(),
            ));
        }
        if measures.iter().any(|m| m.length == 0) {
            return Err(MidiError::GridViolation("zero-length measure".into()));
        }
        song.validate()?;
        for (t, track) in song.tracks.iter().enumerate() {
            for note in &track.notes {
                let Some(i) = measures.index_of(note.onset) else {
                    return Err(MidiError::GridViolation(format!(
                        "track {t}: onset {} past the last measure",
                        note.onset
                    )));
                };
                let rel = note.onset - measures.as_slice()[i].start;
                if !rel.is_multiple_of(3) && !rel.is_multiple_of(4) {
                    return Err(MidiError::GridViolation(format!(
                        "track {t}: onset {} is {rel} ticks into measure {i}",
                        note.onset
                    )));
                }
                if !track.is_drums() && note.duration == 0 {
                    return Err(MidiError::GridViolation(format!(
                        "track {t}: zero-length pitched note at {}",
                        note.onset
                    )));
                }
            }
        }
        Ok(Self { song, measures })
    }

    pub fn song(&self) -> &Song {
        &self.song
    }

    pub fn measures(&self) -> &MeasureMap {
        &self.measures
    }

    pub fn into_song(self) -> Song {
        self.song
    }

    pub fn tracks(&self) -> &[super::Track] {
        &self.song.tracks
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::midi::{Note, Track};

    fn one_note(resolution: u32, onset: u32, duration: u32) -> Song {
        Song::with_tracks(
            resolution,
            vec![Track::new(0, vec![Note::new(onset, duration, 60, 90)])],
        )
    }

    fn quantized_onset(resolution: u32, onset: u32) -> u32 {
        let q = quantize(
            &one_note(resolution, onset, resolution),
            24,
            &GRID_SUBDIVISIONS,
        )
        .unwrap();
        q.tracks[0].notes[0].onset
    }

    /// Nearest allowed position by enumeration, ties toward multiples of 3,
    /// then earlier.
    fn enumerate_nearest(x: f64) -> u32 {
        let allowed: Vec<u32> = (0..=200).filter(|o| o % 3 == 0 || o % 4 == 0).collect();
        let mut best = allowed[0];
        for &a in &allowed {
            let (da, db) = ((a as f64 - x).abs(), (best as f64 - x).abs());
            if da < db || (da == db && a % 3 == 0 && !best.is_multiple_of(3)) {
                best = a;
            }
        }
        best
    }

    #[test]
    fn on_grid_unchanged() {
        for k in 0..8 {
            assert_eq!(quantized_onset(24, 24 * k), 24 * k);
        }
    }

    #[test]
    fn tie_goes_to_multiple_of_three() {
        assert_eq!(enumerate_nearest(5.0), 6);
        assert_eq!(quantized_onset(24, 5), 6);
    }

    #[test]
    fn humanized_960_onset() {
        assert_eq!(enumerate_nearest(955.0 * 24.0 / 960.0), 24);
        assert_eq!(quantized_onset(960, 955), 24);
    }

    #[test]
    fn matches_enumeration_oracle_in_four_four() {
        for res in [96u32, 120, 480, 960] {
            for onset in (0..4 * res).step_by(7) {
                let x = onset as f64 * 24.0 / res as f64;
                assert_eq!(
                    quantized_onset(res, onset),
                    enumerate_nearest(x),
                    "res {res} onset {onset}"
                );
            }
        }
    }

    #[test]
    fn pitched_duration_clamped_drums_kept() {
        let mut song = one_note(96, 0, 1);
        song.tracks
            .push(Track::new(DRUMS, vec![Note::new(0, 1, 36, 90)]));
        let q = quantize(&song, 24, &GRID_SUBDIVISIONS).unwrap();
        assert_eq!(q.tracks[0].notes[0].duration, 1);
        assert_eq!(q.tracks[1].notes[0].duration, 0);
    }

    #[test]
    fn quantized_song_rejects_off_grid() {
        let song = one_note(24, 5, 10);
        assert!(matches!(
            QuantizedSong::new(song),
            Err(MidiError::GridViolation(_))
        ));
        let song = one_note(48, 0, 10);
        assert!(QuantizedSong::new(song).is_err());
    }

    #[test]
    fn quantized_song_measures() {
        let q = QuantizedSong::quantize(&one_note(480, 0, 480 * 7)).unwrap();
        assert_eq!(q.measures().lengths().collect::<Vec<_>>(), vec![96, 96]);
    }
}
