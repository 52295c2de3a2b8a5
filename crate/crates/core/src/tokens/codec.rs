use std::cmp::Ordering;
use std::collections::BTreeMap;

use thiserror::Error;

use super::{LevelThresholds, Token, TokenSeq};
use crate::midi::{
    time_signatures_for, MeasureMap, MidiError, Note, QuantizedSong, Song, TempoEvent, Track,
    DRUMS, GRID_TICKS_PER_QUARTER,
};

/// Longest measure and longest note duration the language can express.
pub const MAX_TICKS: u32 = 192;
/// Tracks of one instrument beyond this many cannot be given an `R` token.
pub const MAX_TRACKS_PER_INSTRUMENT: usize = 64;
const FIRST_DYNAMICS_LEVEL: u8 = 4;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EncodeError {
    #[error("measure {measure} is {length} ticks long (max {MAX_TICKS})")]
    MeasureTooLong { measure: usize, length: u32 },
    #[error("track {track}: note at {onset} lasts {duration} ticks (max {MAX_TICKS})")]
    DurationTooLong {
        track: usize,
        onset: u32,
        duration: u32,
    },
    #[error("track {track}: note at {onset} lies outside every measure")]
    NoteOutsideMeasures { track: usize, onset: u32 },
    #[error("instrument {instrument} has {count} tracks (max {MAX_TRACKS_PER_INSTRUMENT})")]
    TooManyTracks { instrument: u8, count: usize },
}

#[derive(Debug, Error)]
pub enum DecodeError {
    #[error("token {index}: {reason}")]
    Malformed { index: usize, reason: String },
    #[error("decoded song is invalid: {0}")]
    Invalid(#[from] MidiError),
}

fn malformed(index: usize, reason: impl Into<String>) -> DecodeError {
    DecodeError::Malformed {
        index,
        reason: reason.into(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Polyphony {
    Mono,
    Poly,
}

impl Polyphony {
    pub fn token(self) -> Token {
        match self {
            Polyphony::Mono => Token::Mono,
            Polyphony::Poly => Token::Poly,
        }
    }
}

/// Monophonic means no two notes share an onset tick; durations are ignored.
pub fn classify_polyphony(notes: &[Note]) -> Polyphony {
    let mut onsets: Vec<u32> = notes.iter().map(|n| n.onset).collect();
    onsets.sort_unstable();
    if onsets.windows(2).any(|w| w[0] == w[1]) {
        Polyphony::Poly
    } else {
        Polyphony::Mono
    }
}

/// One track's part within one measure.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EncodedPart {
    /// Index into the song's tracks.
    pub track: usize,
    pub instrument: u8,
    /// 0 for the first (highest) track of the instrument, otherwise the `R` value.
    pub rank: u8,
    /// `w`/`d`/`N`/`D` tokens; self-contained since timing and duration state
    /// reset at each instrument declaration.
    pub body: Vec<Token>,
    pub polyphony: Polyphony,
}

impl EncodedPart {
    /// `I:x` optionally followed by `R:y`.
    pub fn header(&self) -> Vec<Token> {
        let mut h = vec![Token::Instrument(self.instrument)];
        if self.rank > 0 {
            h.push(Token::Repeat(self.rank));
        }
        h
    }

    pub fn token_count(&self) -> usize {
        self.body.len() + 1 + usize::from(self.rank > 0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EncodedMeasure {
    pub dynamics: u8,
    pub tempo: u8,
    pub length: u8,
    /// Parts of the tracks with notes starting in this measure, in canonical
    /// track order.
    pub parts: Vec<EncodedPart>,
}

impl EncodedMeasure {
    pub fn header(&self) -> [Token; 3] {
        [
            Token::Measure(self.dynamics),
            Token::Tempo(self.tempo),
            Token::Length(self.length),
        ]
    }

    pub fn tokens(&self) -> Vec<Token> {
        let mut out = self.header().to_vec();
        for part in &self.parts {
            out.extend(part.header());
            out.extend_from_slice(&part.body);
        }
        out
    }

    pub fn token_count(&self) -> usize {
        3 + self
            .parts
            .iter()
            .map(EncodedPart::token_count)
            .sum::<usize>()
    }

    pub fn part_for_track(&self, track: usize) -> Option<&EncodedPart> {
        self.parts.iter().find(|p| p.track == track)
    }
}

/// A song's encoding kept in per-measure, per-part structure.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EncodedSong {
    pub measures: Vec<EncodedMeasure>,
    /// `(track index, rank)` in canonical order.
    pub track_order: Vec<(usize, u8)>,
}

impl EncodedSong {
    pub fn to_tokens(&self) -> TokenSeq {
        self.measures
            .iter()
            .flat_map(EncodedMeasure::tokens)
            .collect()
    }

    pub fn token_count(&self) -> usize {
        self.measures.iter().map(EncodedMeasure::token_count).sum()
    }

    /// Tokens for measures `range` only.
    pub fn slice_tokens(&self, range: std::ops::Range<usize>) -> TokenSeq {
        self.measures[range]
            .iter()
            .flat_map(EncodedMeasure::tokens)
            .collect()
    }
}

/// Canonical track order: ascending instrument, then descending whole-song
/// average pitch, then track index. Returns `(track index, rank)` where rank
/// counts earlier tracks of the same instrument.
pub fn track_order(song: &Song) -> Result<Vec<(usize, u8)>, EncodeError> {
    let averages: Vec<f64> = song.tracks.iter().map(Track::average_pitch).collect();
    let mut order: Vec<usize> = (0..song.tracks.len()).collect();
    order.sort_by(|&a, &b| {
        song.tracks[a]
            .instrument
            .cmp(&song.tracks[b].instrument)
            .then(
                averages[b]
                    .partial_cmp(&averages[a])
                    .unwrap_or(Ordering::Equal),
            )
            .then(a.cmp(&b))
    });
    let mut out = Vec::with_capacity(order.len());
    let mut seen: BTreeMap<u8, usize> = BTreeMap::new();
    for i in order {
        let instrument = song.tracks[i].instrument;
        let rank = seen.entry(instrument).or_insert(0);
        if *rank >= MAX_TRACKS_PER_INSTRUMENT {
            let count = song
                .tracks
                .iter()
                .filter(|t| t.instrument == instrument)
                .count();
            return Err(EncodeError::TooManyTracks { instrument, count });
        }
        out.push((i, *rank as u8));
        *rank += 1;
    }
    Ok(out)
}

/// Part body for notes starting in the measure beginning at `measure_start`.
pub fn encode_part(notes: &mut [Note], measure_start: u32, drums: bool) -> Vec<Token> {
    notes.sort_by_key(|n| (n.onset, n.pitch, n.duration));
    let mut body = Vec::with_capacity(notes.len() * 2);
    let mut pos = 0;
    let mut duration = None;
    for n in notes.iter() {
        let offset = n.onset - measure_start;
        if offset > pos {
            body.push(Token::Wait((offset - pos) as u8));
            pos = offset;
        }
        if duration != Some(n.duration) {
            body.push(Token::Duration(n.duration as u8));
            duration = Some(n.duration);
        }
        body.push(if drums {
            Token::Drum(n.pitch)
        } else {
            Token::Note(n.pitch)
        });
    }
    body
}

/// Encodes into per-measure structure. Notes belong to the measure holding
/// their onset and may sound past its end.
pub fn encode_measures(
    song: &QuantizedSong,
    thresholds: &LevelThresholds,
) -> Result<EncodedSong, EncodeError> {
    let measures = song.measures();
    let s = song.song();
    let order = track_order(s)?;

    // notes[track][measure]
    let mut grouped: Vec<Vec<Vec<Note>>> = vec![vec![Vec::new(); measures.len()]; s.tracks.len()];
    for (t, track) in s.tracks.iter().enumerate() {
        for n in &track.notes {
            if n.duration > MAX_TICKS {
                return Err(EncodeError::DurationTooLong {
                    track: t,
                    onset: n.onset,
                    duration: n.duration,
                });
            }
            let m = measures
                .index_of(n.onset)
                .ok_or(EncodeError::NoteOutsideMeasures {
                    track: t,
                    onset: n.onset,
                })?;
            grouped[t][m].push(*n);
        }
    }

    let mut out = Vec::with_capacity(measures.len());
    let mut dynamics = FIRST_DYNAMICS_LEVEL;
    for (m, measure) in measures.iter().enumerate() {
        if measure.length > MAX_TICKS {
            return Err(EncodeError::MeasureTooLong {
                measure: m,
                length: measure.length,
            });
        }
        let (sum, count) = grouped
            .iter()
            .flat_map(|per_measure| per_measure[m].iter())
            .fold((0u64, 0u64), |(s, c), n| (s + u64::from(n.velocity), c + 1));
        if count > 0 {
            dynamics = thresholds.dynamics_level(sum as f64 / count as f64);
        }
        let tempo = thresholds.tempo_level(s.bpm_at(measure.start));

        let mut parts = Vec::new();
        for &(t, rank) in &order {
            let notes = &mut grouped[t][m];
            if notes.is_empty() {
                continue;
            }
            let track = &s.tracks[t];
            parts.push(EncodedPart {
                track: t,
                instrument: track.instrument,
                rank,
                polyphony: classify_polyphony(notes),
                body: encode_part(notes, measure.start, track.is_drums()),
            });
        }
        out.push(EncodedMeasure {
            dynamics,
            tempo,
            length: measure.length as u8,
            parts,
        });
    }
    Ok(EncodedSong {
        measures: out,
        track_order: order,
    })
}

pub fn encode(song: &QuantizedSong, thresholds: &LevelThresholds) -> Result<TokenSeq, EncodeError> {
    Ok(encode_measures(song, thresholds)?.to_tokens())
}

struct PendingNote {
    key: (u8, u8),
    onset: u32,
    duration: u32,
    pitch: u8,
    velocity: u8,
}

/// Rebuilds a song from tokens. Velocities and tempos come back as the
/// representative values of their levels; tracks are ordered by
/// (instrument, rank).
pub fn decode(
    tokens: &[Token],
    thresholds: &LevelThresholds,
) -> Result<QuantizedSong, DecodeError> {
    let mut lengths = Vec::new();
    let mut tempos: Vec<(u32, u8)> = Vec::new();
    let mut notes: Vec<PendingNote> = Vec::new();

    let mut i = 0;
    let mut start = 0u32;
    while i < tokens.len() {
        let Token::Measure(dynamics) = tokens[i] else {
            return Err(malformed(i, format!("expected M, found {}", tokens[i])));
        };
        let Some(&Token::Tempo(tempo)) = tokens.get(i + 1) else {
            return Err(malformed(i + 1, "M must be followed by B"));
        };
        let Some(&Token::Length(length)) = tokens.get(i + 2) else {
            return Err(malformed(i + 2, "M B must be followed by L"));
        };
        let length = u32::from(length);
        let velocity = thresholds.level_velocity(dynamics);
        if tempos.last().is_none_or(|&(_, level)| level != tempo) {
            tempos.push((start, tempo));
        }
        i += 3;

        let mut current: Option<(u8, u8)> = None;
        let mut pos = 0u32;
        let mut duration: Option<u32> = None;
        while i < tokens.len() && !matches!(tokens[i], Token::Measure(_)) {
            match tokens[i] {
                Token::Instrument(instrument) => {
                    let rank = match tokens.get(i + 1) {
                        Some(&Token::Repeat(r)) => {
                            i += 1;
                            r
                        }
                        _ => 0,
                    };
                    current = Some((instrument, rank));
                    pos = 0;
                    duration = None;
                }
                Token::Repeat(_) => return Err(malformed(i, "R must directly follow I")),
                Token::Wait(w) => {
                    if current.is_none() {
                        return Err(malformed(i, "w before any I"));
                    }
                    pos += u32::from(w);
                    if pos >= length {
                        return Err(malformed(
                            i,
                            format!("insertion point {pos} leaves a {length}-tick measure"),
                        ));
                    }
                }
                Token::Duration(d) => {
                    if current.is_none() {
                        return Err(malformed(i, "d before any I"));
                    }
                    duration = Some(u32::from(d));
                }
                t @ (Token::Note(pitch) | Token::Drum(pitch)) => {
                    let Some(key) = current else {
                        return Err(malformed(i, format!("{t} before any I")));
                    };
                    let is_drum_token = matches!(t, Token::Drum(_));
                    if is_drum_token != (key.0 == DRUMS) {
                        return Err(malformed(
                            i,
                            format!("{t} not allowed for instrument {}", key.0),
                        ));
                    }
                    let Some(duration) = duration else {
                        return Err(malformed(i, format!("{t} before any d since I")));
                    };
                    notes.push(PendingNote {
                        key,
                        onset: start + pos,
                        duration,
                        pitch,
                        velocity,
                    });
                }
                t => return Err(malformed(i, format!("{t} cannot appear in a song"))),
            }
            i += 1;
        }
        lengths.push(length);
        start += length;
    }
    if lengths.is_empty() {
        return Err(malformed(0, "no measures"));
    }

    let measures = MeasureMap::from_lengths(lengths);
    let mut tracks: BTreeMap<(u8, u8), Vec<Note>> = BTreeMap::new();
    for n in notes {
        tracks
            .entry(n.key)
            .or_default()
            .push(Note::new(n.onset, n.duration, n.pitch, n.velocity));
    }
    let mut song = Song::new(GRID_TICKS_PER_QUARTER);
    song.tracks = tracks
        .into_iter()
        .map(|((instrument, _), notes)| Track::new(instrument, notes))
        .collect();
    song.tempo_map = tempos
        .into_iter()
        .map(|(tick, level)| TempoEvent::from_bpm(tick, thresholds.level_bpm(level)))
        .collect();
    song.timesig_map = time_signatures_for(&measures, GRID_TICKS_PER_QUARTER)?;
    song.end_tick = measures.end();
    song.normalize();
    Ok(QuantizedSong::from_parts(song, measures)?)
}
