use crate::midi::{PedalEvent, Song, Track};

/// Pedal-down spans `[down, up)` for one track. A pedal left down runs to
/// `fallback_end`.
fn sustain_spans(events: &[PedalEvent], fallback_end: u32) -> Vec<(u32, u32)> {
    let mut spans = Vec::new();
    let mut down_at = None;
    for e in events {
        match (e.down, down_at) {
            (true, None) => down_at = Some(e.tick),
            (false, Some(start)) => {
                spans.push((start, e.tick));
                down_at = None;
            }
            _ => {}
        }
    }
    if let Some(start) = down_at {
        spans.push((start, fallback_end.max(start)));
    }
    spans
}

fn apply_to_track(track: &mut Track) {
    let last_end = track.notes.iter().map(|n| n.end()).max().unwrap_or(0);
    let spans = sustain_spans(&track.pedal_events, last_end);
    if !spans.is_empty() {
        let onsets: Vec<(u8, u32)> = {
            let mut v: Vec<_> = track.notes.iter().map(|n| (n.pitch, n.onset)).collect();
            v.sort_unstable();
            v
        };
        for note in &mut track.notes {
            let end = note.end();
            let Some(&(_, release)) = spans.iter().find(|&&(down, up)| down <= end && end < up)
            else {
                continue;
            };
            // never run into the next strike of the same pitch
            let i = onsets.partition_point(|&(p, t)| (p, t) <= (note.pitch, note.onset));
            let restrike = onsets
                .get(i)
                .filter(|&&(p, _)| p == note.pitch)
                .map_or(u32::MAX, |&(_, t)| t);
            let new_end = release.min(restrike).max(end);
            note.duration = new_end - note.onset;
        }
    }
    track.pedal_events.clear();
    track.cc_events.clear();
}

/// Extends notes released while the sustain pedal is down to the pedal
/// release (or the next onset of the same pitch, if earlier), then drops all
/// controller data.
pub fn apply_sustain_pedal(song: &Song) -> Song {
    let mut out = song.clone();
    for track in &mut out.tracks {
        apply_to_track(track);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::midi::{ControlEvent, Note};

    fn track(notes: Vec<Note>, pedal: &[(u32, bool)]) -> Song {
        let mut t = Track::new(0, notes);
        t.pedal_events = pedal
            .iter()
            .map(|&(tick, down)| PedalEvent { tick, down })
            .collect();
        t.cc_events.push(ControlEvent {
            tick: 0,
            controller: 7,
            value: 90,
        });
        Song::with_tracks(24, vec![t])
    }

    #[test]
    fn extends_to_pedal_release() {
        let song = apply_sustain_pedal(&track(
            vec![Note::new(0, 24, 60, 80)],
            &[(0, true), (96, false)],
        ));
        assert_eq!(song.tracks[0].notes[0], Note::new(0, 96, 60, 80));
        assert!(song.tracks[0].pedal_events.is_empty());
        assert!(song.tracks[0].cc_events.is_empty());
    }

    #[test]
    fn no_pedal_only_strips_cc() {
        let notes = vec![Note::new(0, 24, 60, 80)];
        let song = apply_sustain_pedal(&track(notes.clone(), &[]));
        assert_eq!(song.tracks[0].notes, notes);
        assert!(song.tracks[0].cc_events.is_empty());
    }

    #[test]
    fn restrike_truncates() {
        let song = apply_sustain_pedal(&track(
            vec![Note::new(0, 24, 60, 80), Note::new(48, 12, 60, 80)],
            &[(0, true), (96, false)],
        ));
        assert_eq!(song.tracks[0].notes[0], Note::new(0, 48, 60, 80));
        assert_eq!(song.tracks[0].notes[1], Note::new(48, 48, 60, 80));
    }

    #[test]
    fn notes_released_outside_pedal_untouched() {
        let song = apply_sustain_pedal(&track(
            vec![Note::new(0, 24, 60, 80), Note::new(100, 50, 62, 80)],
            &[(30, true), (96, false)],
        ));
        assert_eq!(song.tracks[0].notes[0].duration, 24);
        assert_eq!(song.tracks[0].notes[1].duration, 50);
    }
}
