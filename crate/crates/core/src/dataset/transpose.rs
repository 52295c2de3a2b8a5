use crate::midi::QuantizedSong;

/// Shifts every pitched note by `semitones`; notes pushed outside 0..=127 are
/// moved back into range by whole octaves. Drum tracks are left alone.
pub fn transpose(song: &QuantizedSong, semitones: i32) -> QuantizedSong {
    if semitones == 0 {
        return song.clone();
    }
    let mut out = song.song().clone();
    for track in out.tracks.iter_mut().filter(|t| !t.is_drums()) {
        for note in &mut track.notes {
            let mut p = i32::from(note.pitch) + semitones;
            while p < 0 {
                p += 12;
            }
            while p > 127 {
                p -= 12;
            }
            note.pitch = p as u8;
        }
        track.sort_notes();
    }
    QuantizedSong::from_parts(out, song.measures().clone())
        .expect("pitch shifts keep the grid intact")
}
