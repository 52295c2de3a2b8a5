//! Training-example construction: span corruption for pretraining and
//! track-measure infilling examples for finetuning.

mod finetune;
mod mask;
mod pretrain;
mod rng;
mod transpose;

pub use finetune::{assemble_example, sample_finetune_example, tracks_in_slice, AssembledExample};
pub use mask::{
    draw_pattern_id, pattern_coords, sample_finetune_mask, MaskKnobs, MaskPattern, PATTERN_WEIGHTS,
};
pub use pretrain::{
    apply_noise_mask, build_pretrain_examples, chunk, chunk_measures, noise_mask, span_corrupt,
    MIN_CORRUPTIBLE_TOKENS,
};
pub use rng::RandomSource;
pub use transpose::transpose;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::tokens::{EncodeError, Token, TokenSeq};

pub const SHORT_LIMIT: usize = 512;
pub const LONG_LIMIT: usize = 1650;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("measure {measure} needs {tokens} tokens, over the limit of {limit}")]
    MeasureTooLong {
        measure: usize,
        tokens: usize,
        limit: usize,
    },
    #[error(transparent)]
    Encode(#[from] EncodeError),
    #[error("cannot splice: {0}")]
    Splice(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DatasetConfig {
    pub input_limit: usize,
    pub target_limit: usize,
    pub max_masks: usize,
    pub corruption_rate: f64,
    pub mean_span_length: f64,
    pub mono_poly_probability: f64,
    pub truncation_probability: f64,
    pub transpose_min: i32,
    pub transpose_max: i32,
    /// Mask redraws allowed before a slice is given up.
    pub mask_attempts: usize,
    pub mask: MaskKnobs,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self {
            input_limit: LONG_LIMIT,
            target_limit: LONG_LIMIT,
            max_masks: usize::from(crate::tokens::MAX_MASK_ID) + 1,
            corruption_rate: 0.15,
            mean_span_length: 3.0,
            mono_poly_probability: 0.75,
            truncation_probability: 0.15,
            transpose_min: -5,
            transpose_max: 6,
            mask_attempts: 32,
            mask: MaskKnobs::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExampleKind {
    Pretrain,
    #[default]
    Finetune,
    Test,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct ExampleMeta {
    pub source: String,
    pub kind: ExampleKind,
    pub transposition: i32,
    /// Half-open measure range `[start, end)` of the source song.
    pub slice: (usize, usize),
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pattern_id: Option<u8>,
    /// Evaluation task name, e.g. `random-8`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub task: Option<String>,
    pub seed: u64,
    pub truncated: bool,
    pub mono_poly: bool,
}

/// One input/target pair. `coords[k]` locates sentinel `k` as
/// `(song track index, slice-relative measure)`; empty for pretraining.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InfillExample {
    pub id: String,
    pub input: TokenSeq,
    pub target: TokenSeq,
    #[serde(default)]
    pub coords: Vec<(usize, usize)>,
    pub meta: ExampleMeta,
}

impl InfillExample {
    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("example serializes")
    }

    pub fn mask_count(&self) -> usize {
        self.input.iter().filter(|t| t.is_sentinel()).count()
    }
}

/// Tokens following each sentinel in a target-format sequence, by sentinel id.
pub fn target_spans(target: &[Token]) -> Result<BTreeMap<u16, Vec<Token>>, DatasetError> {
    let mut spans: BTreeMap<u16, Vec<Token>> = BTreeMap::new();
    let mut current = None;
    for (i, &t) in target.iter().enumerate() {
        match t {
            Token::Mask(k) => {
                if spans.insert(k, Vec::new()).is_some() {
                    return Err(DatasetError::Splice(format!(
                        "sentinel {k} repeated in target"
                    )));
                }
                current = Some(k);
            }
            t => {
                let Some(k) = current else {
                    return Err(DatasetError::Splice(format!(
                        "token {i} ({t}) precedes every sentinel"
                    )));
                };
                spans.get_mut(&k).expect("inserted above").push(t);
            }
        }
    }
    Ok(spans)
}

/// Puts each target span back in place of its sentinel and drops
/// `<mono>`/`<poly>` hints.
pub fn splice(input: &[Token], target: &[Token]) -> Result<TokenSeq, DatasetError> {
    let mut spans = target_spans(target)?;
    let mut out = TokenSeq::new();
    for &t in input {
        match t {
            Token::Mask(k) => {
                let span = spans.remove(&k).ok_or_else(|| {
                    DatasetError::Splice(format!("no target span for sentinel {k}"))
                })?;
                out.0.extend(span);
            }
            Token::Mono | Token::Poly => {}
            t => out.push(t),
        }
    }
    if let Some(k) = spans.keys().next() {
        return Err(DatasetError::Splice(format!(
            "target sentinel {k} missing from input"
        )));
    }
    Ok(out)
}

/// True when input sentinels run 0, 1, 2, ... in order and the target lists
/// the same ids in the same order.
pub fn sentinels_consistent(input: &[Token], target: &[Token]) -> bool {
    let ids = |s: &[Token]| -> Vec<u16> {
        s.iter()
            .filter_map(|t| match t {
                Token::Mask(k) => Some(*k),
                _ => None,
            })
            .collect()
    };
    let a = ids(input);
    a.iter().enumerate().all(|(i, &k)| usize::from(k) == i) && a == ids(target)
}
