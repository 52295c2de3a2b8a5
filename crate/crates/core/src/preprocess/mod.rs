//! Per-file normalization: one instrument per track, a single simplified drum
//! track, pedal-extended notes, no delay-effect duplicates, measures of at most
//! eight quarters, and everything snapped to the 24-tick grid.

mod measures;
mod overlap;
mod pedal;
mod tracks;

pub use measures::{enforce_max_measure_length, MAX_MEASURE_QUARTERS};
pub use overlap::{
    overlap_measure, remove_shifted_duplicates, IntervalSet, DEFAULT_MAX_SHIFT_TICKS,
    DEFAULT_OVERLAP_THRESHOLD,
};
pub use pedal::apply_sustain_pedal;
pub use tracks::{consolidate_drums, split_tracks_by_instrument, DrumSimplificationMap};

use thiserror::Error;

use crate::midi::quantize::MAX_MEASURE_TICKS;
use crate::midi::{
    quantize, MidiError, QuantizedSong, Song, GRID_SUBDIVISIONS, GRID_TICKS_PER_QUARTER,
};

#[derive(Debug, Error)]
pub enum PreprocessError {
    #[error(transparent)]
    Midi(#[from] MidiError),
    #[error("drum map: {0}")]
    DrumMap(String),
    #[error("no notes left after preprocessing")]
    Empty,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PreprocessConfig {
    pub overlap_threshold: f64,
    /// Largest shift tried when looking for duplicates, in 24-tpq ticks.
    pub max_shift_ticks: u32,
    pub drum_map: DrumSimplificationMap,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        Self {
            overlap_threshold: DEFAULT_OVERLAP_THRESHOLD,
            max_shift_ticks: DEFAULT_MAX_SHIFT_TICKS,
            drum_map: DrumSimplificationMap::default(),
        }
    }
}

/// Runs the whole per-file pipeline. Notes longer than eight quarters are
/// clipped to that length since longer durations are not representable as
/// tokens, and tracks left without notes are dropped.
pub fn preprocess_file(
    song: &Song,
    config: &PreprocessConfig,
) -> Result<QuantizedSong, PreprocessError> {
    let song = split_tracks_by_instrument(song);
    let song = consolidate_drums(&song, &config.drum_map);
    let song = apply_sustain_pedal(&song);
    let song = remove_shifted_duplicates(&song, config.overlap_threshold, config.max_shift_ticks);
    let song = enforce_max_measure_length(&song)?;
    let mut song = quantize(&song, GRID_TICKS_PER_QUARTER, &GRID_SUBDIVISIONS)?;
    for track in &mut song.tracks {
        for note in &mut track.notes {
            note.duration = note.duration.min(MAX_MEASURE_TICKS);
        }
    }
    song.tracks.retain(|t| !t.notes.is_empty());
    if song.tracks.is_empty() {
        return Err(PreprocessError::Empty);
    }
    Ok(QuantizedSong::new(song)?)
}
