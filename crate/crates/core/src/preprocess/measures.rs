use crate::midi::{compress_time_signatures, MeasureMap, Result, Song, TimeSignature};

/// Longest measure kept intact, in quarter notes.
pub const MAX_MEASURE_QUARTERS: u32 = 8;

/// Rewrites the time-signature map so no measure exceeds eight quarter notes.
/// An overlong measure becomes as many eight-quarter measures as fit followed
/// by the remainder, keeping the original denominator. Note ticks are not
/// touched.
pub fn enforce_max_measure_length(song: &Song) -> Result<Song> {
    let mut sorted = song.clone();
    sorted.normalize();
    let measures = MeasureMap::compute(&sorted)?;
    let max_len = MAX_MEASURE_QUARTERS * sorted.resolution;
    if measures.overlong(max_len).is_empty() {
        return Ok(sorted);
    }

    let sigs = &sorted.timesig_map;
    let active_at = |tick: u32| {
        let i = sigs.partition_point(|s| s.tick <= tick);
        sigs[i.saturating_sub(1)]
    };

    let mut events = Vec::with_capacity(measures.len());
    for m in measures.iter() {
        let sig = active_at(m.start);
        if m.length <= max_len {
            events.push(TimeSignature::new(m.start, sig.numerator, sig.denominator));
            continue;
        }
        // eight quarters expressed over the original denominator
        let chunk_num = 2 * sig.denominator;
        let full = m.length / max_len;
        let remainder = m.length % max_len;
        for k in 0..full {
            events.push(TimeSignature::new(
                m.start + k * max_len,
                chunk_num,
                sig.denominator,
            ));
        }
        if remainder > 0 {
            let rem_num = (u64::from(remainder) * u64::from(sig.denominator))
                .div_ceil(4 * u64::from(sorted.resolution))
                .max(1) as u32;
            events.push(TimeSignature::new(
                m.start + full * max_len,
                rem_num,
                sig.denominator,
            ));
        }
    }

    let mut out = sorted.clone();
    out.timesig_map = compress_time_signatures(events, sorted.resolution)?;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::midi::{Note, Track};

    fn song_with(sigs: &[(u32, u32, u32)], end: u32) -> Song {
        let notes = (0..end / 24)
            .map(|i| Note::new(i * 24, 24, 60 + (i % 5) as u8, 80))
            .collect();
        let mut s = Song::with_tracks(24, vec![Track::new(0, notes)]);
        s.timesig_map = sigs
            .iter()
            .map(|&(t, n, d)| TimeSignature::new(t, n, d))
            .collect();
        s
    }

    fn lengths(song: &Song) -> Vec<u32> {
        MeasureMap::compute(song).unwrap().lengths().collect()
    }

    #[test]
    fn twelve_four_splits_eight_plus_four() {
        let song = song_with(&[(0, 12, 4)], 24 * 24);
        assert_eq!(lengths(&song), vec![288, 288]);
        let out = enforce_max_measure_length(&song).unwrap();
        assert_eq!(lengths(&out), vec![192, 96, 192, 96]);
        assert_eq!(out.tracks, song.tracks);
    }

    #[test]
    fn nine_four_splits_eight_plus_one() {
        let out = enforce_max_measure_length(&song_with(&[(0, 9, 4)], 216)).unwrap();
        assert_eq!(lengths(&out), vec![192, 24]);
        assert_eq!(out.timesig_map[1], TimeSignature::new(192, 1, 4));
    }

    #[test]
    fn common_time_unchanged() {
        let song = song_with(&[(0, 4, 4)], 96 * 4);
        let out = enforce_max_measure_length(&song).unwrap();
        assert_eq!(out.timesig_map, vec![TimeSignature::new(0, 4, 4)]);
        assert_eq!(lengths(&out), lengths(&song));
    }

    #[test]
    fn mixed_map_keeps_short_measures() {
        let song = song_with(&[(0, 4, 4), (192, 24, 8), (480, 3, 4)], 480 + 72 * 2);
        let out = enforce_max_measure_length(&song).unwrap();
        assert_eq!(lengths(&out), vec![96, 96, 192, 96, 72, 72]);
        let bounds: u32 = lengths(&out).iter().sum();
        assert_eq!(bounds, lengths(&song).iter().sum::<u32>());
    }

    #[test]
    fn truncated_overlong_measure() {
        // 12/4 cut after ten quarters by a change to 4/4
        let song = song_with(&[(0, 12, 4), (240, 4, 4)], 240 + 96);
        let out = enforce_max_measure_length(&song).unwrap();
        assert_eq!(lengths(&out), vec![192, 48, 96]);
    }
}
