use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use super::PreprocessError;
use crate::midi::{Note, Song, Track, DRUMS};

/// Splits tracks so each holds a single instrument, then orders them by
/// instrument number with drums last. Tracks sharing an instrument keep
/// their relative order.
pub fn split_tracks_by_instrument(song: &Song) -> Song {
    let mut out = song.clone();
    let mut tracks = Vec::with_capacity(song.tracks.len());
    for track in &song.tracks {
        if track.is_drums() || track.program_changes.is_empty() {
            let mut t = track.clone();
            t.program_changes.clear();
            tracks.push(t);
            continue;
        }
        let mut by_program: BTreeMap<u8, Vec<Note>> = BTreeMap::new();
        for note in &track.notes {
            by_program
                .entry(track.program_at(note.onset))
                .or_default()
                .push(*note);
        }
        if by_program.is_empty() {
            let mut t = track.clone();
            t.program_changes.clear();
            tracks.push(t);
            continue;
        }
        for (program, notes) in by_program {
            tracks.push(Track {
                instrument: program,
                name: track.name.clone(),
                notes,
                program_changes: Vec::new(),
                pedal_events: track.pedal_events.clone(),
                cc_events: track.cc_events.clone(),
            });
        }
    }
    tracks.sort_by_key(|t| t.instrument);
    out.tracks = tracks;
    out
}

/// Total map from drum pitch to simplified drum pitch.
#[derive(Clone, PartialEq, Eq)]
pub struct DrumSimplificationMap {
    table: [u8; 128],
}

impl fmt::Debug for DrumSimplificationMap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_map().entries(self.changes()).finish()
    }
}

impl DrumSimplificationMap {
    pub fn identity() -> Self {
        Self {
            table: std::array::from_fn(|i| i as u8),
        }
    }

    /// Builds a map from explicit `source -> target` pairs.
    pub fn from_pairs(pairs: impl IntoIterator<Item = (u8, u8)>) -> Result<Self, PreprocessError> {
        let mut map = Self::identity();
        for (from, to) in pairs {
            if from > 127 || to > 127 {
                return Err(PreprocessError::DrumMap(format!(
                    "pitch out of range: {from}={to}"
                )));
            }
            map.table[from as usize] = to;
        }
        for p in 0..128 {
            let once = map.table[p];
            if map.table[once as usize] != once {
                return Err(PreprocessError::DrumMap(format!(
                    "not idempotent: {p} -> {once} -> {}",
                    map.table[once as usize]
                )));
            }
        }
        Ok(map)
    }

    pub fn apply(&self, pitch: u8) -> u8 {
        self.table[pitch as usize & 0x7F]
    }

    /// Non-identity entries, ascending.
    pub fn changes(&self) -> impl Iterator<Item = (u8, u8)> + '_ {
        (0..128u8)
            .filter_map(|p| (self.table[p as usize] != p).then_some((p, self.table[p as usize])))
    }
}

impl Default for DrumSimplificationMap {
    fn default() -> Self {
        include_str!("../../data/drum_map.txt")
            .parse()
            .expect("bundled drum map is valid")
    }
}

impl FromStr for DrumSimplificationMap {
    type Err = PreprocessError;

    /// Plain-text `source=target` lines; `#` starts a comment.
    fn from_str(text: &str) -> Result<Self, Self::Err> {
        let mut pairs = Vec::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let bad = || {
                PreprocessError::DrumMap(format!(
                    "line {}: expected `source=target`, got {raw:?}",
                    lineno + 1
                ))
            };
            let (from, to) = line.split_once('=').ok_or_else(bad)?;
            let from: u8 = from.trim().parse().map_err(|_| bad())?;
            let to: u8 = to.trim().parse().map_err(|_| bad())?;
            pairs.push((from, to));
        }
        Self::from_pairs(pairs)
    }
}

impl fmt::Display for DrumSimplificationMap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (from, to) in self.changes() {
            writeln!(f, "{from}={to}")?;
        }
        Ok(())
    }
}

/// Merges every drum track into one trailing instrument-128 track, simplifying
/// pitches through `map`. Hits sharing (onset, pitch) collapse to the loudest.
pub fn consolidate_drums(song: &Song, map: &DrumSimplificationMap) -> Song {
    let mut out = song.clone();
    let (drums, mut rest): (Vec<Track>, Vec<Track>) =
        out.tracks.drain(..).partition(Track::is_drums);
    if drums.is_empty() {
        out.tracks = rest;
        return out;
    }
    let mut hits: BTreeMap<(u32, u8), Note> = BTreeMap::new();
    let mut merged = Track {
        instrument: DRUMS,
        name: drums[0].name.clone(),
        ..Track::default()
    };
    for track in drums {
        for mut note in track.notes {
            note.pitch = map.apply(note.pitch);
            hits.entry((note.onset, note.pitch))
                .and_modify(|kept| {
                    if note.velocity > kept.velocity {
                        *kept = note;
                    }
                })
                .or_insert(note);
        }
        merged.pedal_events.extend(track.pedal_events);
        merged.cc_events.extend(track.cc_events);
    }
    merged.notes = hits.into_values().collect();
    merged.sort_notes();
    merged.pedal_events.sort_by_key(|e| e.tick);
    merged.cc_events.sort_by_key(|e| e.tick);
    rest.push(merged);
    out.tracks = rest;
    out
}
