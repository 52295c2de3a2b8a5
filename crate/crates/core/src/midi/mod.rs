//! Core MIDI data model.
//!
//! A [`Song`] holds timed notes grouped into [`Track`]s together with the
//! tempo and time-signature maps that define its measure grid. Standard MIDI
//! File I/O lives in [`smf`], measure tiling in [`measure`] and grid snapping
//! in [`quantize`].

pub mod measure;
pub mod quantize;
pub mod smf;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use measure::{
    compress_time_signatures, signature_for_length, time_signatures_for, Measure, MeasureMap,
};
pub use quantize::{quantize, QuantizedSong, GRID_SUBDIVISIONS, GRID_TICKS_PER_QUARTER};
pub use smf::{parse_smf, parse_smf_with_report, write_smf, ParseReport};

/// Instrument number used for the (single, consolidated) drum track.
pub const DRUMS: u8 = 128;

/// Sustain pedal controller number.
pub const SUSTAIN_CC: u8 = 64;

#[derive(Debug, Error)]
pub enum MidiError {
    #[error("not a Standard MIDI File: {0}")]
    InvalidHeader(String),

    #[error("unsupported MIDI file: {0}")]
    Unsupported(String),

    #[error("truncated chunk at byte {offset}")]
    Truncated { offset: usize },

    #[error("malformed event at byte {offset}: {reason}")]
    MalformedEvent { offset: usize, reason: String },

    #[error("note out of MIDI range in track {track}: {reason}")]
    NoteOutOfRange { track: usize, reason: String },

    #[error("invalid time signature {numerator}/{denominator} at tick {tick}")]
    InvalidTimeSignature {
        tick: u32,
        numerator: u32,
        denominator: u32,
    },

    #[error("quantized song invariant violated: {0}")]
    GridViolation(String),
}

pub type Result<T, E = MidiError> = std::result::Result<T, E>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Note {
    pub onset: u32,
    pub duration: u32,
    pub pitch: u8,
    pub velocity: u8,
}

impl Note {
    pub fn new(onset: u32, duration: u32, pitch: u8, velocity: u8) -> Self {
        Self {
            onset,
            duration,
            pitch,
            velocity,
        }
    }

    pub fn end(&self) -> u32 {
        self.onset + self.duration
    }

    /// Canonical ordering key: onset, then pitch, then duration.
    pub fn sort_key(&self) -> (u32, u8, u32, u8) {
        (self.onset, self.pitch, self.duration, self.velocity)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TempoEvent {
    pub tick: u32,
    pub micros_per_quarter: u32,
}

impl TempoEvent {
    pub fn from_bpm(tick: u32, bpm: f64) -> Self {
        let micros = (60_000_000.0 / bpm).round().clamp(1.0, 16_777_215.0) as u32;
        Self {
            tick,
            micros_per_quarter: micros,
        }
    }

    pub fn bpm(&self) -> f64 {
        60_000_000.0 / self.micros_per_quarter as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TimeSignature {
    pub tick: u32,
    pub numerator: u32,
    pub denominator: u32,
}

impl TimeSignature {
    pub fn new(tick: u32, numerator: u32, denominator: u32) -> Self {
        Self {
            tick,
            numerator,
            denominator,
        }
    }

    /// Nominal measure length in ticks at the given resolution.
    pub fn measure_length(&self, resolution: u32) -> Result<u32> {
        if self.numerator == 0 || self.denominator == 0 {
            return Err(MidiError::InvalidTimeSignature {
                tick: self.tick,
                numerator: self.numerator,
                denominator: self.denominator,
            });
        }
        let whole = 4 * u64::from(resolution) * u64::from(self.numerator);
        let den = u64::from(self.denominator);
        Ok(((whole + den / 2) / den).max(1) as u32)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PedalEvent {
    pub tick: u32,
    pub down: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ControlEvent {
    pub tick: u32,
    pub controller: u8,
    pub value: u8,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProgramChange {
    pub tick: u32,
    pub program: u8,
}

/// One track of notes. `instrument` is the program in effect at the first
/// note; later `program_changes` may switch it until the track is split.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Track {
    pub instrument: u8,
    #[serde(default)]
    pub name: String,
    pub notes: Vec<Note>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub program_changes: Vec<ProgramChange>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub pedal_events: Vec<PedalEvent>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub cc_events: Vec<ControlEvent>,
}

impl Track {
    pub fn new(instrument: u8, notes: Vec<Note>) -> Self {
        let mut track = Self {
            instrument,
            notes,
            ..Self::default()
        };
        track.sort_notes();
        track
    }

    pub fn is_drums(&self) -> bool {
        self.instrument == DRUMS
    }

    pub fn sort_notes(&mut self) {
        self.notes.sort_by_key(Note::sort_key);
    }

    /// Program sounding at `tick`, taking in-track program changes into account.
    pub fn program_at(&self, tick: u32) -> u8 {
        self.program_changes
            .iter()
            .take_while(|pc| pc.tick <= tick)
            .last()
            .map_or(self.instrument, |pc| pc.program)
    }

    pub fn average_pitch(&self) -> f64 {
        if self.notes.is_empty() {
            return 0.0;
        }
        let sum: u64 = self.notes.iter().map(|n| u64::from(n.pitch)).sum();
        sum as f64 / self.notes.len() as f64
    }

    fn last_tick(&self) -> u32 {
        let notes = self.notes.iter().map(Note::end).max().unwrap_or(0);
        let pedal = self.pedal_events.iter().map(|e| e.tick).max().unwrap_or(0);
        let cc = self.cc_events.iter().map(|e| e.tick).max().unwrap_or(0);
        let pc = self
            .program_changes
            .iter()
            .map(|e| e.tick)
            .max()
            .unwrap_or(0);
        notes.max(pedal).max(cc).max(pc)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Song {
    pub resolution: u32,
    pub tempo_map: Vec<TempoEvent>,
    pub timesig_map: Vec<TimeSignature>,
    pub tracks: Vec<Track>,
    /// Explicit end of the song (end-of-track position); the effective end is
    /// never earlier than the last event.
    #[serde(default)]
    pub end_tick: u32,
}

impl Song {
    /// An empty song at `resolution` with the default 120 BPM, 4/4 maps.
    pub fn new(resolution: u32) -> Self {
        Self {
            resolution,
            tempo_map: vec![TempoEvent::from_bpm(0, 120.0)],
            timesig_map: vec![TimeSignature::new(0, 4, 4)],
            tracks: Vec::new(),
            end_tick: 0,
        }
    }

    pub fn with_tracks(resolution: u32, tracks: Vec<Track>) -> Self {
        Self {
            tracks,
            ..Self::new(resolution)
        }
    }

    pub fn note_count(&self) -> usize {
        self.tracks.iter().map(|t| t.notes.len()).sum()
    }

    pub fn notes(&self) -> impl Iterator<Item = &Note> {
        self.tracks.iter().flat_map(|t| t.notes.iter())
    }

    /// Last tick touched by any event, or the explicit end if later.
    pub fn span_end(&self) -> u32 {
        let tracks = self.tracks.iter().map(Track::last_tick).max().unwrap_or(0);
        let tempo = self.tempo_map.iter().map(|e| e.tick).max().unwrap_or(0);
        let ts = self.timesig_map.iter().map(|e| e.tick).max().unwrap_or(0);
        self.end_tick.max(tracks).max(tempo).max(ts)
    }

    /// BPM in effect at `tick`.
    pub fn bpm_at(&self, tick: u32) -> f64 {
        self.tempo_map
            .iter()
            .take_while(|e| e.tick <= tick)
            .last()
            .or(self.tempo_map.first())
            .map_or(120.0, TempoEvent::bpm)
    }

    /// Sorts every map and note list into canonical order and inserts the
    /// default tempo/time signature at tick 0 when missing.
    pub fn normalize(&mut self) {
        normalize_map(&mut self.tempo_map, |e| e.tick);
        normalize_map(&mut self.timesig_map, |e| e.tick);
        if self.tempo_map.first().is_none_or(|e| e.tick > 0) {
            self.tempo_map.insert(0, TempoEvent::from_bpm(0, 120.0));
        }
        if self.timesig_map.first().is_none_or(|e| e.tick > 0) {
            self.timesig_map.insert(0, TimeSignature::new(0, 4, 4));
        }
        for track in &mut self.tracks {
            track.sort_notes();
            track.program_changes.sort_by_key(|e| e.tick);
            track.pedal_events.sort_by_key(|e| e.tick);
            track.cc_events.sort_by_key(|e| e.tick);
        }
    }

    /// Checks pitch/velocity/instrument ranges.
    pub fn validate(&self) -> Result<()> {
        for (i, track) in self.tracks.iter().enumerate() {
            if track.instrument > DRUMS {
                return Err(MidiError::NoteOutOfRange {
                    track: i,
                    reason: format!("instrument {} > 128", track.instrument),
                });
            }
            for note in &track.notes {
                if note.pitch > 127 {
                    return Err(MidiError::NoteOutOfRange {
                        track: i,
                        reason: format!("pitch {}", note.pitch),
                    });
                }
                if note.velocity == 0 || note.velocity > 127 {
                    return Err(MidiError::NoteOutOfRange {
                        track: i,
                        reason: format!("velocity {}", note.velocity),
                    });
                }
            }
        }
        Ok(())
    }

    /// Canonical JSON rendering used for debugging and golden files.
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("song serializes")
    }

    pub fn from_json(text: &str) -> serde_json::Result<Self> {
        serde_json::from_str(text)
    }
}

/// Stable sort by tick, keeping only the last event at each tick.
fn normalize_map<T: Copy>(map: &mut Vec<T>, tick: impl Fn(&T) -> u32) {
    map.sort_by_key(|e| tick(e));
    let mut out: Vec<T> = Vec::with_capacity(map.len());
    for e in map.drain(..) {
        match out.last_mut() {
            Some(last) if tick(last) == tick(&e) => *last = e,
            _ => out.push(e),
        }
    }
    *map = out;
}
