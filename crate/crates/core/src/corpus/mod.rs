//! Corpus-level filtering: dropping files whose onsets ignore the measure grid
//! and deduplicating files by transposition-invariant onset chromagrams.

mod fingerprint;
mod grid;

pub use fingerprint::{
    dedupe, onset_chromagram_fingerprint, survivors, Chromagram, DedupeVerdict, Fingerprint,
};
pub use grid::{
    filter_corpus, grid_alignment_score, grid_histogram, is_off_grid, FilterOutcome, GridHistogram,
    DEFAULT_GRID_THRESHOLD,
};
