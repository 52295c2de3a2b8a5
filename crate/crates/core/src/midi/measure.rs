//! Measure tiling derived from the time-signature map.

use serde::{Deserialize, Serialize};

use super::{Result, Song, TimeSignature};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Measure {
    pub start: u32,
    pub length: u32,
}

impl Measure {
    pub fn end(&self) -> u32 {
        self.start + self.length
    }

    pub fn contains(&self, tick: u32) -> bool {
        tick >= self.start && tick < self.end()
    }
}

/// Consecutive measures tiling a song from tick 0 with no gaps or overlaps.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct MeasureMap {
    measures: Vec<Measure>,
}

impl MeasureMap {
    /// Tiles `[0, song.span_end())` using each time signature's nominal length.
    /// A time-signature change in the middle of a measure cuts that measure
    /// short and starts a new one at the change.
    pub fn compute(song: &Song) -> Result<Self> {
        // zero-length notes at the very end still need a measure to live in
        let past_onsets = song.notes().map(|n| n.onset + 1).max().unwrap_or(0);
        let end = song.span_end().max(past_onsets);
        Self::from_time_signatures(&song.timesig_map, song.resolution, end)
    }

    pub fn from_time_signatures(map: &[TimeSignature], resolution: u32, end: u32) -> Result<Self> {
        let default = [TimeSignature::new(0, 4, 4)];
        let mut sigs: Vec<TimeSignature> = if map.is_empty() {
            default.to_vec()
        } else {
            map.to_vec()
        };
        sigs.sort_by_key(|s| s.tick);
        if sigs[0].tick > 0 {
            sigs.insert(0, default[0]);
        }
        let mut measures = Vec::new();
        for (i, sig) in sigs.iter().enumerate() {
            let nominal = sig.measure_length(resolution)?;
            let region_end = sigs.get(i + 1).map(|s| s.tick);
            let mut start = sig.tick;
            loop {
                let stop = match region_end {
                    Some(next) => start >= next,
                    None => start >= end && !measures.is_empty(),
                };
                if stop {
                    break;
                }
                let length = match region_end {
                    Some(next) => nominal.min(next - start),
                    None => nominal,
                };
                measures.push(Measure { start, length });
                start += length;
            }
        }
        Ok(Self { measures })
    }

    pub fn from_lengths(lengths: impl IntoIterator<Item = u32>) -> Self {
        let mut start = 0;
        let measures = lengths
            .into_iter()
            .map(|length| {
                let m = Measure { start, length };
                start += length;
                m
            })
            .collect();
        Self { measures }
    }

    pub fn len(&self) -> usize {
        self.measures.len()
    }

    pub fn is_empty(&self) -> bool {
        self.measures.is_empty()
    }

    pub fn get(&self, index: usize) -> Option<&Measure> {
        self.measures.get(index)
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Measure> {
        self.measures.iter()
    }

    pub fn as_slice(&self) -> &[Measure] {
        &self.measures
    }

    pub fn lengths(&self) -> impl Iterator<Item = u32> + '_ {
        self.measures.iter().map(|m| m.length)
    }

    /// End of the last measure.
    pub fn end(&self) -> u32 {
        self.measures.last().map_or(0, Measure::end)
    }

    /// Index of the measure containing `tick`, if any.
    pub fn index_of(&self, tick: u32) -> Option<usize> {
        let i = self.measures.partition_point(|m| m.start <= tick);
        (i > 0 && self.measures[i - 1].contains(tick)).then(|| i - 1)
    }

    /// Appends measures of the final length until `tick` is covered.
    pub fn extend_to_cover(&mut self, tick: u32) {
        let length = self.measures.last().map_or(96, |m| m.length).max(1);
        while self.end() <= tick {
            let start = self.end();
            self.measures.push(Measure { start, length });
        }
    }

    /// Measures longer than `max_length` ticks.
    pub fn overlong(&self, max_length: u32) -> Vec<usize> {
        (0..self.measures.len())
            .filter(|&i| self.measures[i].length > max_length)
            .collect()
    }
}

/// Drops events that restate the active signature on one of its own measure
/// boundaries; removing them leaves the measure tiling unchanged.
pub fn compress_time_signatures(
    events: Vec<TimeSignature>,
    resolution: u32,
) -> Result<Vec<TimeSignature>> {
    let mut out: Vec<TimeSignature> = Vec::with_capacity(events.len());
    for e in events {
        if let Some(prev) = out.last() {
            let len = prev.measure_length(resolution)?;
            let same = prev.numerator == e.numerator && prev.denominator == e.denominator;
            if same && (e.tick - prev.tick) % len == 0 {
                continue;
            }
        }
        out.push(e);
    }
    Ok(out)
}

/// A (numerator, denominator) pair whose measure is `length` ticks long at
/// `resolution`, using the coarsest power-of-two denominator that fits
/// exactly. Lengths with no exact signature get the nearest 64th-note count.
pub fn signature_for_length(length: u32, resolution: u32) -> (u32, u32) {
    let whole = 4 * u64::from(resolution);
    for den in [4u32, 8, 16, 32, 64] {
        let num = u64::from(length) * u64::from(den);
        if num % whole == 0 && num > 0 {
            return ((num / whole) as u32, den);
        }
    }
    let num = (u64::from(length) * 64 + whole / 2) / whole;
    (num.max(1) as u32, 64)
}

/// Time-signature events reproducing `measures`, each measure starting a new
/// event only where the previous signature would not already put a boundary.
pub fn time_signatures_for(measures: &MeasureMap, resolution: u32) -> Result<Vec<TimeSignature>> {
    let events = measures
        .iter()
        .map(|m| {
            let (n, d) = signature_for_length(m.length, resolution);
            TimeSignature::new(m.start, n, d)
        })
        .collect();
    compress_time_signatures(events, resolution)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sig(tick: u32, n: u32, d: u32) -> TimeSignature {
        TimeSignature::new(tick, n, d)
    }

    #[test]
    fn four_four_at_24() {
        let map = MeasureMap::from_time_signatures(&[sig(0, 4, 4)], 24, 96 * 3).unwrap();
        assert_eq!(map.lengths().collect::<Vec<_>>(), vec![96, 96, 96]);
    }

    #[test]
    fn three_four_then_three_eight() {
        // three 3/4 measures, then 3/8 from measure index 3
        let map = MeasureMap::from_time_signatures(&[sig(0, 3, 4), sig(216, 3, 8)], 24, 216 + 72)
            .unwrap();
        assert_eq!(map.lengths().collect::<Vec<_>>(), vec![72, 72, 72, 36, 36]);
    }

    #[test]
    fn three_four_then_six_eight() {
        let map = MeasureMap::from_time_signatures(&[sig(0, 3, 4), sig(216, 6, 8)], 24, 216 + 144)
            .unwrap();
        assert_eq!(map.lengths().collect::<Vec<_>>(), vec![72, 72, 72, 72, 72]);
    }

    #[test]
    fn mid_measure_change_truncates() {
        let map =
            MeasureMap::from_time_signatures(&[sig(0, 4, 4), sig(144, 3, 4)], 24, 300).unwrap();
        assert_eq!(map.lengths().collect::<Vec<_>>(), vec![96, 48, 72, 72, 72]);
    }

    #[test]
    fn twelve_four_flagged() {
        let map = MeasureMap::from_time_signatures(&[sig(0, 12, 4)], 24, 288).unwrap();
        assert_eq!(map.overlong(8 * 24), vec![0]);
    }

    #[test]
    fn empty_song_has_one_measure() {
        let map = MeasureMap::from_time_signatures(&[], 24, 0).unwrap();
        assert_eq!(map.len(), 1);
    }

    #[test]
    fn rejects_zero_numerator() {
        assert!(MeasureMap::from_time_signatures(&[sig(0, 0, 4)], 24, 96).is_err());
    }

    #[test]
    fn signatures_for_lengths() {
        assert_eq!(signature_for_length(96, 24), (4, 4));
        assert_eq!(signature_for_length(36, 24), (3, 8));
        assert_eq!(signature_for_length(30, 24), (5, 16));
        assert_eq!(signature_for_length(9, 24), (3, 32));
        assert_eq!(signature_for_length(1, 24), (1, 64));
        let map = MeasureMap::from_lengths([96, 96, 72, 96, 30, 30]);
        let sigs = time_signatures_for(&map, 24).unwrap();
        assert_eq!(sigs.len(), 4);
        let rebuilt = MeasureMap::from_time_signatures(&sigs, 24, map.end() - 1).unwrap();
        assert_eq!(rebuilt, map);
    }

    #[test]
    fn index_lookup() {
        let map = MeasureMap::from_lengths([96, 72, 96]);
        assert_eq!(map.index_of(0), Some(0));
        assert_eq!(map.index_of(95), Some(0));
        assert_eq!(map.index_of(96), Some(1));
        assert_eq!(map.index_of(168), Some(2));
        assert_eq!(map.index_of(264), None);
    }
}
