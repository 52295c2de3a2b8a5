//! Note F1, pitch-class histogram entropy difference and groove similarity.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::{NoteKey, ScoredNote};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct F1Score {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// Exact matches on (track, measure, onset, pitch). Both sides empty scores
/// 1; exactly one side empty scores 0.
pub fn note_f1(generated: &[ScoredNote], truth: &[ScoredNote]) -> F1Score {
    let g: BTreeSet<NoteKey> = generated.iter().map(ScoredNote::key).collect();
    let t: BTreeSet<NoteKey> = truth.iter().map(ScoredNote::key).collect();
    match (g.is_empty(), t.is_empty()) {
        (true, true) => {
            return F1Score {
                precision: 1.0,
                recall: 1.0,
                f1: 1.0,
            }
        }
        (true, false) | (false, true) => {
            return F1Score {
                precision: 0.0,
                recall: 0.0,
                f1: 0.0,
            }
        }
        _ => {}
    }
    let matches = g.intersection(&t).count() as f64;
    let precision = matches / g.len() as f64;
    let recall = matches / t.len() as f64;
    let f1 = if matches == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    F1Score {
        precision,
        recall,
        f1,
    }
}

/// Base-2 entropy of a count histogram; 0 for an empty one.
pub fn entropy(counts: &[u64]) -> f64 {
    let total: u64 = counts.iter().sum();
    if total == 0 {
        return 0.0;
    }
    counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / total as f64;
            -p * p.log2()
        })
        .sum()
}

fn pitch_class_histograms(notes: &[ScoredNote]) -> BTreeMap<usize, [u64; 12]> {
    let mut out: BTreeMap<usize, [u64; 12]> = BTreeMap::new();
    for n in notes.iter().filter(|n| !n.drum) {
        out.entry(n.measure).or_insert([0; 12])[usize::from(n.pitch % 12)] += 1;
    }
    out
}

/// Mean over measures of |H(generated) - H(truth)| where H is the entropy of
/// the measure's pitch-class histogram, all tracks pooled and drums ignored.
/// Measures without pitched notes on either side are skipped; `None` if that
/// leaves nothing.
pub fn pch_entropy_diff(generated: &[ScoredNote], truth: &[ScoredNote]) -> Option<f64> {
    let g = pitch_class_histograms(generated);
    let t = pitch_class_histograms(truth);
    let measures: BTreeSet<usize> = g.keys().chain(t.keys()).copied().collect();
    if measures.is_empty() {
        return None;
    }
    let empty = [0u64; 12];
    let total: f64 = measures
        .iter()
        .map(|m| (entropy(g.get(m).unwrap_or(&empty)) - entropy(t.get(m).unwrap_or(&empty))).abs())
        .sum();
    Some(total / measures.len() as f64)
}

/// Onset offsets within a measure of `length` ticks that lie on the
/// 16th-note or 8th-triplet grid at 24 ticks per quarter.
pub fn allowed_positions(length: u32) -> Vec<u32> {
    (0..length).filter(|t| t % 3 == 0 || t % 4 == 0).collect()
}

/// Mean over `masked` measures (index → length) of 1 - hamming(g, t) / P,
/// where g and t mark which of the P allowed onset positions hold a note.
/// Drums count. `None` if no measures were masked.
pub fn groove_similarity(
    generated: &[ScoredNote],
    truth: &[ScoredNote],
    masked: &BTreeMap<usize, u32>,
) -> Option<f64> {
    if masked.is_empty() {
        return None;
    }
    let onsets = |notes: &[ScoredNote]| -> BTreeSet<(usize, u32)> {
        notes.iter().map(|n| (n.measure, n.onset)).collect()
    };
    let g = onsets(generated);
    let t = onsets(truth);
    let mut total = 0.0;
    for (&m, &length) in masked {
        let positions = allowed_positions(length);
        let differing = positions
            .iter()
            .filter(|&&p| g.contains(&(m, p)) != t.contains(&(m, p)))
            .count();
        total += 1.0 - differing as f64 / positions.len().max(1) as f64;
    }
    Some(total / masked.len() as f64)
}
