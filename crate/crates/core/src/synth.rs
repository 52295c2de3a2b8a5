//! Seeded synthetic songs for tests, benchmarks and demo corpora.

use rand::seq::IndexedRandom;
use rand::Rng;

use crate::midi::{
    time_signatures_for, MeasureMap, Note, QuantizedSong, Song, TempoEvent, Track, DRUMS,
    GRID_TICKS_PER_QUARTER,
};

/// Shape limits for [`random_song`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SongShape {
    pub max_tracks: usize,
    pub max_measures: usize,
    /// Chance that a track is a drum track.
    pub drum_probability: f64,
    /// Chance that a track-measure holds any notes.
    pub fill_probability: f64,
    /// Only 4/4 measures.
    pub common_time: bool,
    /// Restrict onsets to multiples of this many ticks; otherwise any
    /// 16th or triplet position.
    pub onset_step: Option<u32>,
}

impl Default for SongShape {
    fn default() -> Self {
        Self {
            max_tracks: 16,
            max_measures: 32,
            drum_probability: 0.15,
            fill_probability: 0.8,
            common_time: false,
            onset_step: None,
        }
    }
}

const LENGTHS: [u32; 8] = [96, 96, 96, 96, 72, 48, 120, 144];
/// A small pool so that several tracks often share an instrument.
const INSTRUMENTS: [u8; 8] = [0, 0, 24, 33, 40, 56, 73, 81];

#[derive(Clone, Copy)]
enum Texture {
    Mono,
    Poly,
    Drums,
}

fn grid_offsets(length: u32, step: Option<u32>) -> Vec<u32> {
    match step {
        Some(step) => (0..length).step_by(step.max(1) as usize).collect(),
        None => (0..length).filter(|t| t % 3 == 0 || t % 4 == 0).collect(),
    }
}

/// Notes for one track-measure. Mono parts never share an onset.
fn measure_notes<R: Rng + ?Sized>(
    rng: &mut R,
    texture: Texture,
    start: u32,
    length: u32,
    song_end: u32,
    step: Option<u32>,
) -> Vec<Note> {
    let offsets = grid_offsets(length, step);
    let count = rng.random_range(1..=6.min(offsets.len()));
    let mut onsets: Vec<u32> = offsets.choose_multiple(rng, count).copied().collect();
    onsets.sort_unstable();
    let (low, high) = match texture {
        Texture::Drums => (35u8, 81u8),
        _ => (rng.random_range(24u8..72), 0),
    };
    let mut notes = Vec::new();
    for onset in onsets.into_iter().map(|o| start + o) {
        let room = (song_end - onset).min(192);
        let duration = rng.random_range(1..=room.min(48));
        let velocity = rng.random_range(1..=127);
        let voices = match texture {
            Texture::Poly => rng.random_range(1..=3),
            _ => 1,
        };
        let mut pitches: Vec<u8> = Vec::new();
        while pitches.len() < voices {
            let p = match texture {
                Texture::Drums => rng.random_range(low..=high),
                _ => low + rng.random_range(0..36),
            };
            if !pitches.contains(&p) {
                pitches.push(p);
            }
        }
        notes.extend(
            pitches
                .into_iter()
                .map(|p| Note::new(onset, duration, p, velocity)),
        );
    }
    notes
}

/// A random on-grid song at 24 ticks per quarter with 1 to `max_tracks`
/// tracks mixing monophonic, polyphonic and drum parts, 1 to `max_measures`
/// measures of varying length, and random tempo changes. No note outlasts
/// the final measure.
pub fn random_song<R: Rng + ?Sized>(rng: &mut R, shape: &SongShape) -> QuantizedSong {
    let n_measures = rng.random_range(1..=shape.max_measures.max(1));
    let lengths: Vec<u32> = (0..n_measures)
        .map(|_| {
            if shape.common_time {
                96
            } else {
                *LENGTHS.choose(rng).expect("nonempty")
            }
        })
        .collect();
    let measures = MeasureMap::from_lengths(lengths);
    let end = measures.end();

    let n_tracks = rng.random_range(1..=shape.max_tracks.max(1));
    let mut tracks = Vec::with_capacity(n_tracks);
    for _ in 0..n_tracks {
        let texture = if rng.random_bool(shape.drum_probability) {
            Texture::Drums
        } else if rng.random_bool(0.5) {
            Texture::Mono
        } else {
            Texture::Poly
        };
        let instrument = match texture {
            Texture::Drums => DRUMS,
            _ if rng.random_bool(0.2) => rng.random_range(0..128),
            _ => *INSTRUMENTS.choose(rng).expect("nonempty"),
        };
        let mut notes = Vec::new();
        for m in measures.iter() {
            if rng.random_bool(shape.fill_probability) {
                notes.extend(measure_notes(
                    rng,
                    texture,
                    m.start,
                    m.length,
                    end,
                    shape.onset_step,
                ));
            }
        }
        tracks.push(Track::new(instrument, notes));
    }

    let mut song = Song::with_tracks(GRID_TICKS_PER_QUARTER, tracks);
    song.tempo_map = vec![TempoEvent::from_bpm(0, rng.random_range(50.0..180.0))];
    for m in measures.iter().skip(1) {
        if rng.random_bool(0.1) {
            song.tempo_map
                .push(TempoEvent::from_bpm(m.start, rng.random_range(50.0..180.0)));
        }
    }
    song.timesig_map =
        time_signatures_for(&measures, GRID_TICKS_PER_QUARTER).expect("lengths are representable");
    song.end_tick = end;
    QuantizedSong::from_parts(song, measures).expect("generated on the grid")
}

/// One pitched track with a note every `step` ticks, `count` notes long.
pub fn pulse_song(resolution: u32, step: u32, count: u32) -> Song {
    let notes = (0..count)
        .map(|i| Note::new(i * step, step, 60 + (i % 5) as u8, 80))
        .collect();
    Song::with_tracks(resolution, vec![Track::new(0, notes)])
}

/// Onsets spread evenly over every position of a 12-per-quarter grid, the
/// signature of a file recorded without regard to the beat.
pub fn uniform_residue_song(quarters: u32) -> Song {
    pulse_song(480, 40, quarters * 12)
}

/// Every track repeats one 4/4 measure `n_measures` times: a melody, a chord
/// part and a drum beat.
pub fn repetitive_song(n_measures: u32) -> QuantizedSong {
    let mut melody = Vec::new();
    let mut chords = Vec::new();
    let mut beat = Vec::new();
    for m in 0..n_measures {
        let s = m * 96;
        for (i, p) in [72u8, 74, 76, 79].into_iter().enumerate() {
            melody.push(Note::new(s + 24 * i as u32, 24, p, 90));
        }
        for p in [48u8, 52, 55] {
            chords.push(Note::new(s, 48, p, 70));
            chords.push(Note::new(s + 48, 48, p, 70));
        }
        for i in 0..8 {
            beat.push(Note::new(s + 12 * i, 6, 42, 80));
        }
        beat.push(Note::new(s, 6, 36, 100));
        beat.push(Note::new(s + 48, 6, 38, 100));
    }
    let mut song = Song::with_tracks(
        GRID_TICKS_PER_QUARTER,
        vec![
            Track::new(0, melody),
            Track::new(0, chords),
            Track::new(DRUMS, beat),
        ],
    );
    song.end_tick = n_measures * 96;
    QuantizedSong::new(song).expect("on the grid")
}

/// One 4/4 measure at 140 BPM with three parts: a piano melody note on beat
/// 3, a lower piano chord on beat 1 and a descending flute figure.
pub fn three_part_measure() -> QuantizedSong {
    let melody = Track::new(0, vec![Note::new(48, 24, 67, 90)]);
    let bass = Track::new(
        0,
        vec![
            Note::new(0, 48, 36, 90),
            Note::new(0, 48, 43, 90),
            Note::new(0, 48, 48, 90),
        ],
    );
    let flute = Track::new(
        73,
        vec![
            Note::new(12, 12, 84, 90),
            Note::new(24, 12, 81, 90),
            Note::new(36, 12, 79, 90),
        ],
    );
    let mut song = Song::with_tracks(GRID_TICKS_PER_QUARTER, vec![bass, melody, flute]);
    song.tempo_map = vec![TempoEvent::from_bpm(0, 140.0)];
    QuantizedSong::new(song).expect("on the grid")
}

/// Shifts every pitched note by `semitones`, clamping to the MIDI range.
pub fn transpose_song(song: &Song, semitones: i32) -> Song {
    let mut out = song.clone();
    for track in out.tracks.iter_mut().filter(|t| !t.is_drums()) {
        for n in &mut track.notes {
            n.pitch = (i32::from(n.pitch) + semitones).clamp(0, 127) as u8;
        }
    }
    out
}

/// Multiplies every tick by `factor`, raising the resolution to match.
pub fn rescale_song(song: &Song, factor: u32) -> Song {
    let mut out = song.clone();
    out.resolution *= factor;
    out.end_tick *= factor;
    for e in &mut out.tempo_map {
        e.tick *= factor;
    }
    for e in &mut out.timesig_map {
        e.tick *= factor;
    }
    for track in &mut out.tracks {
        for n in &mut track.notes {
            n.onset *= factor;
            n.duration *= factor;
        }
    }
    out
}

/// Delays the whole song by `measures` empty 4/4 measures. The song must
/// start in 4/4.
pub fn pad_song(song: &Song, measures: u32) -> Song {
    let shift = measures * 4 * song.resolution;
    let mut out = song.clone();
    out.end_tick += shift;
    for e in out.tempo_map.iter_mut().skip(1) {
        e.tick += shift;
    }
    for e in out.timesig_map.iter_mut().skip(1) {
        e.tick += shift;
    }
    for track in &mut out.tracks {
        for n in &mut track.notes {
            n.onset += shift;
        }
    }
    out
}
