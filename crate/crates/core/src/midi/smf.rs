//! Standard MIDI File (formats 0 and 1) reading and writing.
//!
//! Parsing resolves note-on/note-off pairs into [`Note`]s. Each (SMF track,
//! channel) pair with channel events becomes one [`Track`]; channel 10 is the
//! drum channel. Overlapping notes of the same pitch are closed first-in,
//! first-out.
//!
//! Writing always produces format 1 with tempo and time-signature meta events
//! on track 0.

use std::collections::{BTreeMap, HashMap, VecDeque};

use super::{
    ControlEvent, MidiError, Note, PedalEvent, ProgramChange, Result, Song, TempoEvent,
    TimeSignature, Track, DRUMS, SUSTAIN_CC,
};

const DRUM_CHANNEL: u8 = 9;

/// Non-fatal findings from [`parse_smf_with_report`].
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ParseReport {
    /// Note-ons never matched by a note-off; closed at their track's end.
    pub unresolved_notes: usize,
    /// Chunks with an unknown tag that were skipped.
    pub skipped_chunks: usize,
}

pub fn parse_smf(bytes: &[u8]) -> Result<Song> {
    let (song, report) = parse_smf_with_report(bytes)?;
    if report.unresolved_notes > 0 {
        log::warn!(
            "{} unresolved note-on events closed at track end",
            report.unresolved_notes
        );
    }
    Ok(song)
}

pub fn parse_smf_with_report(bytes: &[u8]) -> Result<(Song, ParseReport)> {
    let mut reader = ByteReader::new(bytes);
    if reader.take(4)? != b"MThd" {
        return Err(MidiError::InvalidHeader("missing MThd".into()));
    }
    let header_len = reader.u32()? as usize;
    if header_len < 6 {
        return Err(MidiError::InvalidHeader(format!(
            "header length {header_len}"
        )));
    }
    let header = reader.take(header_len)?;
    let format = u16::from_be_bytes([header[0], header[1]]);
    let ntracks = u16::from_be_bytes([header[2], header[3]]);
    let division = u16::from_be_bytes([header[4], header[5]]);
    if format > 1 {
        return Err(MidiError::Unsupported(format!("SMF format {format}")));
    }
    if division & 0x8000 != 0 {
        return Err(MidiError::Unsupported("SMPTE time division".into()));
    }
    if division == 0 {
        return Err(MidiError::InvalidHeader("zero ticks per quarter".into()));
    }

    let mut song = Song {
        resolution: u32::from(division),
        tempo_map: Vec::new(),
        timesig_map: Vec::new(),
        tracks: Vec::new(),
        end_tick: 0,
    };
    let mut report = ParseReport::default();
    let mut seen = 0;
    while seen < ntracks && !reader.is_empty() {
        let tag = reader.take(4)?;
        let len = reader.u32()? as usize;
        let start = reader.pos;
        let body = reader.take(len)?;
        if tag != b"MTrk" {
            report.skipped_chunks += 1;
            continue;
        }
        seen += 1;
        parse_track(body, start, &mut song, &mut report)?;
    }
    if seen < ntracks {
        return Err(MidiError::Truncated { offset: reader.pos });
    }
    song.normalize();
    Ok((song, report))
}

#[derive(Default)]
struct ChannelState {
    notes: Vec<Note>,
    open: HashMap<u8, VecDeque<(u32, u8)>>,
    programs: Vec<ProgramChange>,
    pedal: Vec<PedalEvent>,
    cc: Vec<ControlEvent>,
}

impl ChannelState {
    fn has_content(&self) -> bool {
        !(self.notes.is_empty()
            && self.programs.is_empty()
            && self.pedal.is_empty()
            && self.cc.is_empty())
    }
}

fn parse_track(body: &[u8], base: usize, song: &mut Song, report: &mut ParseReport) -> Result<()> {
    let mut reader = ByteReader::new(body);
    let mut tick: u32 = 0;
    let mut running: Option<u8> = None;
    let mut name = String::new();
    let mut channels: BTreeMap<u8, ChannelState> = BTreeMap::new();
    let mut end_of_track = None;

    while !reader.is_empty() {
        let delta = reader.vlq().map_err(|_| MidiError::Truncated {
            offset: base + reader.pos,
        })?;
        tick = tick.saturating_add(delta);
        let offset = base + reader.pos;
        let mut status = reader.u8()?;
        let mut first_data = None;
        if status < 0x80 {
            let Some(rs) = running else {
                return Err(MidiError::MalformedEvent {
                    offset,
                    reason: "data byte without running status".into(),
                });
            };
            first_data = Some(status);
            status = rs;
        }
        match status {
            0xFF => {
                running = None;
                let kind = reader.u8()?;
                let len = reader.vlq()? as usize;
                let data = reader.take(len)?;
                match kind {
                    0x51 if len == 3 => song.tempo_map.push(TempoEvent {
                        tick,
                        micros_per_quarter: u32::from_be_bytes([0, data[0], data[1], data[2]]),
                    }),
                    0x58 if len >= 2 => {
                        if data[1] > 31 {
                            return Err(MidiError::MalformedEvent {
                                offset,
                                reason: format!("time signature exponent {}", data[1]),
                            });
                        }
                        song.timesig_map.push(TimeSignature::new(
                            tick,
                            u32::from(data[0]),
                            1u32 << data[1],
                        ))
                    }
                    0x03 => name = String::from_utf8_lossy(data).into_owned(),
                    0x2F => {
                        end_of_track = Some(tick);
                        break;
                    }
                    _ => {}
                }
            }
            0xF0 | 0xF7 => {
                running = None;
                let len = reader.vlq()? as usize;
                reader.take(len)?;
            }
            0x80..=0xEF => {
                running = Some(status);
                let kind = status & 0xF0;
                let channel = status & 0x0F;
                let data_len = if kind == 0xC0 || kind == 0xD0 { 1 } else { 2 };
                let d1 = match first_data {
                    Some(b) => b,
                    None => reader.u8()?,
                };
                let d2 = if data_len == 2 { reader.u8()? } else { 0 };
                if d1 > 0x7F || d2 > 0x7F {
                    return Err(MidiError::MalformedEvent {
                        offset,
                        reason: "data byte with high bit set".into(),
                    });
                }
                let state = channels.entry(channel).or_default();
                match kind {
                    0x90 if d2 > 0 => state.open.entry(d1).or_default().push_back((tick, d2)),
                    0x80 | 0x90 => {
                        if let Some((onset, velocity)) =
                            state.open.get_mut(&d1).and_then(VecDeque::pop_front)
                        {
                            state
                                .notes
                                .push(Note::new(onset, tick - onset, d1, velocity));
                        }
                    }
                    0xB0 if d1 == SUSTAIN_CC => state.pedal.push(PedalEvent {
                        tick,
                        down: d2 >= 64,
                    }),
                    0xB0 => state.cc.push(ControlEvent {
                        tick,
                        controller: d1,
                        value: d2,
                    }),
                    0xC0 => state.programs.push(ProgramChange { tick, program: d1 }),
                    _ => {}
                }
            }
            _ => {
                return Err(MidiError::MalformedEvent {
                    offset,
                    reason: format!("unexpected status byte {status:#04x}"),
                })
            }
        }
    }

    let track_end = end_of_track.unwrap_or(tick);
    song.end_tick = song.end_tick.max(track_end);
    for (channel, mut state) in channels {
        for (pitch, queue) in state.open.drain() {
            for (onset, velocity) in queue {
                report.unresolved_notes += 1;
                state.notes.push(Note::new(
                    onset,
                    track_end.saturating_sub(onset),
                    pitch,
                    velocity,
                ));
            }
        }
        if !state.has_content() {
            continue;
        }
        state.notes.sort_by_key(Note::sort_key);
        let mut track = Track {
            name: name.clone(),
            pedal_events: state.pedal,
            cc_events: state.cc,
            ..Track::default()
        };
        if channel == DRUM_CHANNEL {
            track.instrument = DRUMS;
        } else {
            let first_onset = state.notes.first().map_or(u32::MAX, |n| n.onset);
            let mut instrument = 0;
            let mut changes = Vec::new();
            for pc in state.programs {
                if pc.tick <= first_onset {
                    instrument = pc.program;
                } else {
                    changes.push(pc);
                }
            }
            track.instrument = instrument;
            track.program_changes = changes;
        }
        track.notes = state.notes;
        song.tracks.push(track);
    }
    Ok(())
}

struct ByteReader<'a> {
    data: &'a [u8],
    pos: usize,
}

impl<'a> ByteReader<'a> {
    fn new(data: &'a [u8]) -> Self {
        Self { data, pos: 0 }
    }

    fn is_empty(&self) -> bool {
        self.pos >= self.data.len()
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.data.len())
            .ok_or(MidiError::Truncated { offset: self.pos })?;
        let out = &self.data[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32> {
        let b = self.take(4)?;
        Ok(u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn vlq(&mut self) -> Result<u32> {
        let mut value: u32 = 0;
        for _ in 0..4 {
            let b = self.u8()?;
            value = (value << 7) | u32::from(b & 0x7F);
            if b & 0x80 == 0 {
                return Ok(value);
            }
        }
        Err(MidiError::MalformedEvent {
            offset: self.pos,
            reason: "variable-length quantity longer than 4 bytes".into(),
        })
    }
}

// Event ordering at equal ticks: offs of sounding notes, program changes,
// controllers, note-ons, then offs of zero-length notes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum Slot {
    Meta,
    NoteOff,
    Program,
    Control,
    NoteOn,
    ZeroOff,
    EndOfTrack,
}

struct Event {
    tick: u32,
    slot: Slot,
    bytes: Vec<u8>,
}

pub fn write_smf(song: &Song) -> Result<Vec<u8>> {
    song.validate()?;
    if song.resolution == 0 || song.resolution > 0x7FFF {
        return Err(MidiError::Unsupported(format!(
            "resolution {} does not fit a metrical SMF header",
            song.resolution
        )));
    }
    let end = song.span_end();
    let mut out = Vec::new();
    out.extend_from_slice(b"MThd");
    out.extend_from_slice(&6u32.to_be_bytes());
    out.extend_from_slice(&1u16.to_be_bytes());
    let ntracks = u16::try_from(song.tracks.len() + 1)
        .map_err(|_| MidiError::Unsupported("too many tracks".into()))?;
    out.extend_from_slice(&ntracks.to_be_bytes());
    out.extend_from_slice(&(song.resolution as u16).to_be_bytes());

    let mut meta = Vec::new();
    for e in &song.tempo_map {
        let m = e.micros_per_quarter.min(0xFF_FFFF).to_be_bytes();
        meta.push(Event {
            tick: e.tick,
            slot: Slot::Meta,
            bytes: vec![0xFF, 0x51, 3, m[1], m[2], m[3]],
        });
    }
    for e in &song.timesig_map {
        if !e.denominator.is_power_of_two() || e.numerator == 0 || e.numerator > 255 {
            return Err(MidiError::InvalidTimeSignature {
                tick: e.tick,
                numerator: e.numerator,
                denominator: e.denominator,
            });
        }
        let exp = e.denominator.trailing_zeros() as u8;
        meta.push(Event {
            tick: e.tick,
            slot: Slot::Meta,
            bytes: vec![0xFF, 0x58, 4, e.numerator as u8, exp, 24, 8],
        });
    }
    write_track(&mut out, meta, end);

    let mut next_channel = 0u8;
    for track in &song.tracks {
        let channel = if track.is_drums() {
            DRUM_CHANNEL
        } else {
            let c = next_channel;
            next_channel = (next_channel + 1) % 16;
            if next_channel == DRUM_CHANNEL {
                next_channel += 1;
            }
            c
        };
        write_track(&mut out, track_events(track, channel), end);
    }
    Ok(out)
}

fn track_events(track: &Track, channel: u8) -> Vec<Event> {
    let mut events = Vec::with_capacity(track.notes.len() * 2 + 4);
    if !track.name.is_empty() {
        let mut bytes = vec![0xFF, 0x03];
        push_vlq(&mut bytes, track.name.len() as u32);
        bytes.extend_from_slice(track.name.as_bytes());
        events.push(Event {
            tick: 0,
            slot: Slot::Meta,
            bytes,
        });
    }
    if !track.is_drums() {
        events.push(Event {
            tick: 0,
            slot: Slot::Program,
            bytes: vec![0xC0 | channel, track.instrument],
        });
        for pc in &track.program_changes {
            events.push(Event {
                tick: pc.tick,
                slot: Slot::Program,
                bytes: vec![0xC0 | channel, pc.program],
            });
        }
    }
    for p in &track.pedal_events {
        events.push(Event {
            tick: p.tick,
            slot: Slot::Control,
            bytes: vec![0xB0 | channel, SUSTAIN_CC, if p.down { 127 } else { 0 }],
        });
    }
    for c in &track.cc_events {
        events.push(Event {
            tick: c.tick,
            slot: Slot::Control,
            bytes: vec![0xB0 | channel, c.controller, c.value],
        });
    }
    for n in &track.notes {
        events.push(Event {
            tick: n.onset,
            slot: Slot::NoteOn,
            bytes: vec![0x90 | channel, n.pitch, n.velocity],
        });
        events.push(Event {
            tick: n.end(),
            slot: if n.duration == 0 {
                Slot::ZeroOff
            } else {
                Slot::NoteOff
            },
            bytes: vec![0x80 | channel, n.pitch, 0],
        });
    }
    events
}

fn write_track(out: &mut Vec<u8>, mut events: Vec<Event>, end: u32) {
    events.sort_by_key(|e| (e.tick, e.slot));
    let last = events.last().map_or(0, |e| e.tick);
    events.push(Event {
        tick: end.max(last),
        slot: Slot::EndOfTrack,
        bytes: vec![0xFF, 0x2F, 0],
    });
    let mut body = Vec::new();
    let mut now = 0;
    for e in &events {
        push_vlq(&mut body, e.tick - now);
        now = e.tick;
        body.extend_from_slice(&e.bytes);
    }
    out.extend_from_slice(b"MTrk");
    out.extend_from_slice(&(body.len() as u32).to_be_bytes());
    out.extend_from_slice(&body);
}

fn push_vlq(out: &mut Vec<u8>, mut value: u32) {
    let mut buf = [0u8; 5];
    let mut i = buf.len() - 1;
    buf[i] = (value & 0x7F) as u8;
    value >>= 7;
    while value > 0 {
        i -= 1;
        buf[i] = (value & 0x7F) as u8 | 0x80;
        value >>= 7;
    }
    out.extend_from_slice(&buf[i..]);
}
