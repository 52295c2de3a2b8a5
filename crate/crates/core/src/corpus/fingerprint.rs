//! Transposition-invariant note-onset chromagram fingerprints.
//!
//! Drums are dropped, onsets are snapped to the nearest 16th note or 8th-note
//! triplet on a 12-tick-per-quarter grid, leading and trailing empty measures
//! are removed and each interior run of empty measures is collapsed to one.
//! The binary (tick, pitch class) onset matrix and its 11 pitch-class rotations
//! form the fingerprint; two files collide exactly when those sets agree.

use std::collections::{BTreeSet, HashMap};

use sha2::{Digest, Sha256};

use crate::midi::{quantize, MeasureMap, Result, Song};

const FINGERPRINT_TPQ: u32 = 12;
const FINGERPRINT_SUBDIVISIONS: [u32; 2] = [3, 4];

/// Sorted set of (tick, pitch class) onset cells.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Chromagram(Vec<(u32, u8)>);

impl Chromagram {
    pub fn cells(&self) -> &[(u32, u8)] {
        &self.0
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn rotate(&self, semitones: u8) -> Self {
        let mut cells: Vec<_> = self
            .0
            .iter()
            .map(|&(t, pc)| (t, (pc + semitones) % 12))
            .collect();
        cells.sort_unstable();
        Self(cells)
    }

    fn serialize(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(8 + self.0.len() * 5);
        out.extend_from_slice(&(self.0.len() as u64).to_be_bytes());
        for &(tick, pc) in &self.0 {
            out.extend_from_slice(&tick.to_be_bytes());
            out.push(pc);
        }
        out
    }
}

#[derive(Debug, Clone)]
pub struct Fingerprint {
    /// Index k holds the chromagram transposed up by k semitones.
    chromagrams: Vec<Chromagram>,
    hash: [u8; 32],
}

impl Fingerprint {
    fn from_base(base: Chromagram) -> Self {
        let chromagrams: Vec<Chromagram> = (0..12).map(|k| base.rotate(k)).collect();
        let mut serialized: Vec<Vec<u8>> = chromagrams.iter().map(Chromagram::serialize).collect();
        serialized.sort();
        let mut hasher = Sha256::new();
        for s in &serialized {
            hasher.update(s);
        }
        Self {
            chromagrams,
            hash: hasher.finalize().into(),
        }
    }

    pub fn chromagrams(&self) -> &[Chromagram] {
        &self.chromagrams
    }

    pub fn hash(&self) -> &[u8; 32] {
        &self.hash
    }

    pub fn hash_hex(&self) -> String {
        self.hash.iter().map(|b| format!("{b:02x}")).collect()
    }

    /// True for songs without any non-drum note.
    pub fn is_empty(&self) -> bool {
        self.chromagrams[0].is_empty()
    }

    /// The chromagram set as a set, independent of rotation order.
    pub fn as_set(&self) -> BTreeSet<&Chromagram> {
        self.chromagrams.iter().collect()
    }
}

impl PartialEq for Fingerprint {
    fn eq(&self, other: &Self) -> bool {
        self.hash == other.hash
    }
}

impl Eq for Fingerprint {}

pub fn onset_chromagram_fingerprint(song: &Song) -> Result<Fingerprint> {
    let mut pitched = song.clone();
    pitched.tracks.retain(|t| !t.is_drums());
    let q = quantize(&pitched, FINGERPRINT_TPQ, &FINGERPRINT_SUBDIVISIONS)?;
    let mut measures = MeasureMap::compute(&q)?;
    if let Some(last) = q.notes().map(|n| n.onset).max() {
        measures.extend_to_cover(last);
    }

    let mut per_measure: Vec<Vec<(u32, u8)>> = vec![Vec::new(); measures.len()];
    for note in q.notes() {
        let i = measures
            .index_of(note.onset)
            .expect("measures cover every onset");
        let rel = note.onset - measures.as_slice()[i].start;
        per_measure[i].push((rel, note.pitch % 12));
    }

    let Some(first) = per_measure.iter().position(|m| !m.is_empty()) else {
        return Ok(Fingerprint::from_base(Chromagram::default()));
    };
    let last = per_measure
        .iter()
        .rposition(|m| !m.is_empty())
        .unwrap_or(first);

    let mut cells = Vec::new();
    let mut offset = 0u32;
    let mut previous_empty = false;
    for (measure, notes) in measures.as_slice()[first..=last]
        .iter()
        .zip(&per_measure[first..=last])
    {
        let length = measure.length;
        if notes.is_empty() {
            if !previous_empty {
                offset += length;
            }
            previous_empty = true;
            continue;
        }
        previous_empty = false;
        cells.extend(notes.iter().map(|&(rel, pc)| (offset + rel, pc)));
        offset += length;
    }
    cells.sort_unstable();
    cells.dedup();
    Ok(Fingerprint::from_base(Chromagram(cells)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DedupeVerdict {
    Kept,
    /// Same chromagram set as the earlier file at this index.
    DuplicateOf(usize),
}

/// The first file with each fingerprint survives; later ones point back to it.
pub fn dedupe<'a>(fingerprints: impl IntoIterator<Item = &'a Fingerprint>) -> Vec<DedupeVerdict> {
    let mut first_seen: HashMap<[u8; 32], usize> = HashMap::new();
    fingerprints
        .into_iter()
        .enumerate()
        .map(|(i, fp)| match first_seen.get(fp.hash()) {
            Some(&orig) => DedupeVerdict::DuplicateOf(orig),
            None => {
                first_seen.insert(*fp.hash(), i);
                DedupeVerdict::Kept
            }
        })
        .collect()
}

/// Ids of the surviving files, in input order.
pub fn survivors<I: Clone>(files: &[(I, Fingerprint)]) -> Vec<I> {
    dedupe(files.iter().map(|(_, fp)| fp))
        .into_iter()
        .zip(files)
        .filter(|(v, _)| *v == DedupeVerdict::Kept)
        .map(|(_, (id, _))| id.clone())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::midi::{Note, Track, DRUMS};

    fn melody(resolution: u32, notes: &[(u32, u8)]) -> Song {
        let q = resolution / 4;
        let notes = notes
            .iter()
            .map(|&(sixteenth, pitch)| Note::new(sixteenth * q, q, pitch, 80))
            .collect();
        Song::with_tracks(resolution, vec![Track::new(0, notes)])
    }

    const TUNE: [(u32, u8); 6] = [(0, 60), (2, 64), (4, 67), (8, 72), (16, 71), (20, 67)];

    fn fp(song: &Song) -> Fingerprint {
        onset_chromagram_fingerprint(song).unwrap()
    }

    #[test]
    fn transposition_invariant() {
        let base = melody(480, &TUNE);
        for k in [-11i32, -5, 3, 7, 11] {
            let shifted: Vec<_> = TUNE
                .iter()
                .map(|&(t, p)| (t, (p as i32 + k) as u8))
                .collect();
            let other = fp(&melody(480, &shifted));
            assert_eq!(fp(&base).hash(), other.hash());
            assert_eq!(fp(&base).as_set(), other.as_set());
        }
    }

    #[test]
    fn resolution_invariant() {
        assert_eq!(
            fp(&melody(480, &TUNE)).hash(),
            fp(&melody(960, &TUNE)).hash()
        );
    }

    #[test]
    fn empty_measure_normalization() {
        // one empty measure between two phrases
        let original: Vec<_> = TUNE
            .iter()
            .copied()
            .chain(TUNE.iter().map(|&(t, p)| (t + 48, p)))
            .collect();
        // same phrases with a leading empty measure, four interior empty ones and trailing padding
        let padded: Vec<_> = TUNE
            .iter()
            .map(|&(t, p)| (t + 16, p))
            .chain(TUNE.iter().map(|&(t, p)| (t + 16 + 96, p)))
            .collect();
        let mut padded = melody(480, &padded);
        padded.end_tick = 480 * 4 * 12;
        assert_eq!(fp(&melody(480, &original)), fp(&padded));
    }

    #[test]
    fn drums_ignored_and_empty_distinguished() {
        let mut song = melody(480, &TUNE);
        let with_drums = {
            let mut s = song.clone();
            s.tracks
                .push(Track::new(DRUMS, vec![Note::new(60, 0, 36, 100)]));
            s
        };
        assert_eq!(fp(&song), fp(&with_drums));
        song.tracks.clear();
        song.tracks
            .push(Track::new(DRUMS, vec![Note::new(0, 0, 36, 100)]));
        assert!(fp(&song).is_empty());
        assert!(!fp(&with_drums).is_empty());
    }

    #[test]
    fn distinguishes_moved_onset_and_added_pitch_class() {
        let base = fp(&melody(480, &TUNE));
        let mut moved = TUNE;
        moved[3].0 = 9;
        assert_ne!(base, fp(&melody(480, &moved)));
        let added: Vec<_> = TUNE.iter().copied().chain([(4, 70)]).collect();
        assert_ne!(base, fp(&melody(480, &added)));
    }

    #[test]
    fn dedupe_keeps_first() {
        let a = fp(&melody(480, &TUNE));
        let shifted: Vec<_> = TUNE.iter().map(|&(t, p)| (t, p + 2)).collect();
        let a2 = fp(&melody(480, &shifted));
        let b = fp(&melody(480, &TUNE[..4]));
        let verdicts = dedupe([&a, &a2, &b]);
        assert_eq!(
            verdicts,
            vec![
                DedupeVerdict::Kept,
                DedupeVerdict::DuplicateOf(0),
                DedupeVerdict::Kept
            ]
        );
        let files = vec![("a", a), ("a2", a2), ("b", b)];
        assert_eq!(survivors(&files), vec!["a", "b"]);
    }
}
