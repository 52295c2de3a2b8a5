//! Objective evaluation of infilling: test prompts, note-level metrics, a
//! copy-the-neighbour baseline and corpus reports.

mod baseline;
mod metrics;
mod prompt;
mod report;
mod testset;

pub use baseline::baseline_infill;
pub use metrics::{
    allowed_positions, entropy, groove_similarity, note_f1, pch_entropy_diff, F1Score,
};
pub use prompt::{
    body_notes, chunk_prompt, decode_infill, merge_chunk_outputs, parse_prompt, sentinel_slots,
    PartContent, PromptChunk, PromptMeasure, PromptPart,
};
pub use report::{
    evaluate_corpus, masked_measures, run_chunked, score_example, EvalRecord, EvalReport, Stat,
    SystemOutput, TaskSummary, REPORT_SCHEMA_VERSION,
};
pub use testset::{
    candidate_offsets, make_test_example, test_mask, TestMaskKind, TestSetConfig, TestTask,
    STANDARD_TASKS,
};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::tokens::EncodeError;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("prompt token {index}: {reason}")]
    Prompt { index: usize, reason: String },
    #[error("system output: {0}")]
    Output(String),
    #[error(transparent)]
    Encode(#[from] EncodeError),
}

/// Identity of a note for exact matching. `measure` is slice-relative and
/// `onset` is relative to the measure start.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct NoteKey {
    pub track: usize,
    pub measure: usize,
    pub onset: u32,
    pub pitch: u8,
}

/// A note inside a masked track-measure, as scored by the metrics.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ScoredNote {
    pub track: usize,
    pub measure: usize,
    pub onset: u32,
    pub pitch: u8,
    pub drum: bool,
}

impl ScoredNote {
    pub fn key(&self) -> NoteKey {
        NoteKey {
            track: self.track,
            measure: self.measure,
            onset: self.onset,
            pitch: self.pitch,
        }
    }
}
