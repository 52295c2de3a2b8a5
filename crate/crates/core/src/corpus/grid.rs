use crate::midi::Song;

/// Files scoring above this are treated as ignoring the grid.
pub const DEFAULT_GRID_THRESHOLD: f64 = 0.8;

const GRID_TPQ: u64 = 12;

/// Onset counts by residue within a quarter note at 12 ticks per quarter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct GridHistogram(pub [u64; 12]);

impl GridHistogram {
    pub fn total(&self) -> u64 {
        self.0.iter().sum()
    }

    /// Cosine of the angle to the all-ones vector; `None` with no onsets.
    pub fn cosine_to_uniform(&self) -> Option<f64> {
        let total = self.total();
        if total == 0 {
            return None;
        }
        let norm = self
            .0
            .iter()
            .map(|&c| (c as f64).powi(2))
            .sum::<f64>()
            .sqrt();
        Some(total as f64 / (norm * 12f64.sqrt()))
    }
}

/// Onsets rounded to the nearest 12-tpq tick, counted by tick mod 12.
pub fn grid_histogram(song: &Song) -> GridHistogram {
    let res = u64::from(song.resolution.max(1));
    let mut hist = GridHistogram::default();
    for note in song.notes() {
        let scaled = u64::from(note.onset) * GRID_TPQ;
        let tick = (2 * scaled + res) / (2 * res);
        hist.0[(tick % GRID_TPQ) as usize] += 1;
    }
    hist
}

/// `None` for songs without notes.
pub fn grid_alignment_score(song: &Song) -> Option<f64> {
    grid_histogram(song).cosine_to_uniform()
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct FilterOutcome {
    pub scores: Vec<Option<f64>>,
    pub kept: Vec<usize>,
    pub removed: Vec<usize>,
}

/// A file is removed when its score exceeds `threshold` or it has no notes.
pub fn is_off_grid(score: Option<f64>, threshold: f64) -> bool {
    score.is_none_or(|s| s > threshold)
}

/// Splits `files` into kept and removed indices, in input order.
pub fn filter_corpus(files: &[Song], threshold: f64) -> FilterOutcome {
    let mut out = FilterOutcome::default();
    for (i, song) in files.iter().enumerate() {
        let score = grid_alignment_score(song);
        if is_off_grid(score, threshold) {
            out.removed.push(i);
        } else {
            out.kept.push(i);
        }
        out.scores.push(score);
    }
    out
}
