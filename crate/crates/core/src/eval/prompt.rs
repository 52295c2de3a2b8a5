//! Reading infilling prompts and system outputs back into notes.

use std::collections::BTreeMap;

use super::{EvalError, ScoredNote};
use crate::dataset::{target_spans, InfillExample};
use crate::midi::DRUMS;
use crate::tokens::{Token, TokenSeq};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PartContent {
    Visible(Vec<Token>),
    Masked(u16),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptPart {
    pub instrument: u8,
    pub rank: u8,
    pub content: PartContent,
}

impl PromptPart {
    pub fn key(&self) -> (u8, u8) {
        (self.instrument, self.rank)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptMeasure {
    pub header: [Token; 3],
    pub length: u32,
    pub parts: Vec<PromptPart>,
}

fn bad(index: usize, reason: impl Into<String>) -> EvalError {
    EvalError::Prompt {
        index,
        reason: reason.into(),
    }
}

/// Splits a prompt into measures and parts; a masked part is its sentinel
/// (any `<mono>`/`<poly>` hint after it is dropped).
pub fn parse_prompt(input: &[Token]) -> Result<Vec<PromptMeasure>, EvalError> {
    let mut measures: Vec<PromptMeasure> = Vec::new();
    let mut i = 0;
    while i < input.len() {
        match input[i] {
            Token::Measure(_) => {
                let (Some(&b @ Token::Tempo(_)), Some(&l @ Token::Length(length))) =
                    (input.get(i + 1), input.get(i + 2))
                else {
                    return Err(bad(i, "M must be followed by B and L"));
                };
                measures.push(PromptMeasure {
                    header: [input[i], b, l],
                    length: u32::from(length),
                    parts: Vec::new(),
                });
                i += 3;
            }
            Token::Instrument(instrument) => {
                let measure = measures
                    .last_mut()
                    .ok_or_else(|| bad(i, "I before any M"))?;
                let mut rank = 0;
                if let Some(&Token::Repeat(r)) = input.get(i + 1) {
                    rank = r;
                    i += 1;
                }
                i += 1;
                let content = if let Some(&Token::Mask(k)) = input.get(i) {
                    i += 1;
                    if matches!(input.get(i), Some(Token::Mono | Token::Poly)) {
                        i += 1;
                    }
                    PartContent::Masked(k)
                } else {
                    let start = i;
                    while i < input.len() && input[i].is_part_body() {
                        i += 1;
                    }
                    PartContent::Visible(input[start..i].to_vec())
                };
                measure.parts.push(PromptPart {
                    instrument,
                    rank,
                    content,
                });
            }
            t => return Err(bad(i, format!("unexpected {t}"))),
        }
    }
    Ok(measures)
}

/// `(onset, duration, pitch)` of every note in a part body, validating the
/// timing rules of the language.
pub fn body_notes(body: &[Token], length: u32, drums: bool) -> Result<Vec<(u32, u32, u8)>, String> {
    let mut pos = 0;
    let mut duration = None;
    let mut out = Vec::new();
    for t in body {
        match *t {
            Token::Wait(w) => {
                pos += u32::from(w);
                if pos >= length {
                    return Err(format!("w moves to {pos} in a {length}-tick measure"));
                }
            }
            Token::Duration(d) => duration = Some(u32::from(d)),
            Token::Note(p) | Token::Drum(p) => {
                if matches!(t, Token::Drum(_)) != drums {
                    return Err(format!("{t} does not match the instrument"));
                }
                let d = duration.ok_or_else(|| format!("{t} before any d"))?;
                out.push((pos, d, p));
            }
            other => return Err(format!("{other} inside a part")),
        }
    }
    Ok(out)
}

/// Where each sentinel sits: `(slice-relative measure, measure length, instrument)`.
pub fn sentinel_slots(measures: &[PromptMeasure]) -> BTreeMap<u16, (usize, u32, u8)> {
    let mut out = BTreeMap::new();
    for (m, measure) in measures.iter().enumerate() {
        for part in &measure.parts {
            if let PartContent::Masked(k) = part.content {
                out.insert(k, (m, measure.length, part.instrument));
            }
        }
    }
    out
}

/// Notes written by a target-format `output` for `example`'s sentinels.
/// Every sentinel must be answered exactly once.
pub fn decode_infill(
    example: &InfillExample,
    output: &[Token],
) -> Result<Vec<ScoredNote>, EvalError> {
    let measures = parse_prompt(&example.input)?;
    let slots = sentinel_slots(&measures);
    let spans = target_spans(output).map_err(|e| EvalError::Output(e.to_string()))?;
    let mut notes = Vec::new();
    for (&k, &(measure, length, instrument)) in &slots {
        let span = spans
            .get(&k)
            .ok_or_else(|| EvalError::Output(format!("no span for sentinel {k}")))?;
        let track = example
            .coords
            .get(usize::from(k))
            .map_or(usize::from(k), |&(t, _)| t);
        let drum = instrument == DRUMS;
        let decoded = body_notes(span, length, drum)
            .map_err(|e| EvalError::Output(format!("sentinel {k}: {e}")))?;
        notes.extend(decoded.into_iter().map(|(onset, _, pitch)| ScoredNote {
            track,
            measure,
            onset,
            pitch,
            drum,
        }));
    }
    if let Some(extra) = spans.keys().find(|k| !slots.contains_key(k)) {
        return Err(EvalError::Output(format!(
            "sentinel {extra} is not in the prompt"
        )));
    }
    Ok(notes)
}

/// A piece of a long prompt; `sentinels[j]` is the original id of local
/// sentinel `j`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptChunk {
    pub example: InfillExample,
    pub sentinels: Vec<u16>,
    pub first_measure: usize,
}

/// Splits a prompt longer than `limit` tokens at measure boundaries, greedily,
/// renumbering sentinels from 0 in each piece. Targets are split alongside.
pub fn chunk_prompt(example: &InfillExample, limit: usize) -> Result<Vec<PromptChunk>, EvalError> {
    if example.input.len() <= limit {
        let sentinels = (0..example.mask_count() as u16).collect();
        return Ok(vec![PromptChunk {
            example: example.clone(),
            sentinels,
            first_measure: 0,
        }]);
    }
    let mut starts: Vec<usize> = example
        .input
        .iter()
        .enumerate()
        .filter(|(_, t)| matches!(t, Token::Measure(_)))
        .map(|(i, _)| i)
        .collect();
    if starts.first() != Some(&0) {
        return Err(bad(0, "prompt does not start with M"));
    }
    starts.push(example.input.len());
    let counts: Vec<usize> = starts.windows(2).map(|w| w[1] - w[0]).collect();
    let ranges =
        crate::dataset::chunk_measures(&counts, limit).map_err(|e| bad(0, e.to_string()))?;
    let spans = target_spans(&example.target).map_err(|e| EvalError::Output(e.to_string()))?;

    let mut out = Vec::with_capacity(ranges.len());
    for (c, r) in ranges.into_iter().enumerate() {
        let mut input = TokenSeq::new();
        let mut target = TokenSeq::new();
        let mut sentinels = Vec::new();
        for &t in &example.input[starts[r.start]..starts[r.end]] {
            if let Token::Mask(k) = t {
                let local = Token::Mask(sentinels.len() as u16);
                sentinels.push(k);
                input.push(local);
                target.push(local);
                target
                    .0
                    .extend(spans.get(&k).into_iter().flatten().copied());
            } else {
                input.push(t);
            }
        }
        let coords = sentinels
            .iter()
            .filter_map(|&k| example.coords.get(usize::from(k)))
            .map(|&(t, m)| (t, m - r.start))
            .collect();
        let mut meta = example.meta.clone();
        meta.slice = (meta.slice.0 + r.start, meta.slice.0 + r.end);
        out.push(PromptChunk {
            example: InfillExample {
                id: format!("{}@{c}", example.id),
                input,
                target,
                coords,
                meta,
            },
            sentinels,
            first_measure: r.start,
        });
    }
    Ok(out)
}

/// Renumbers per-chunk outputs back to the original sentinel ids and joins them.
pub fn merge_chunk_outputs(
    chunks: &[PromptChunk],
    outputs: &[TokenSeq],
) -> Result<TokenSeq, EvalError> {
    let mut merged: BTreeMap<u16, Vec<Token>> = BTreeMap::new();
    for (chunk, output) in chunks.iter().zip(outputs) {
        let spans = target_spans(output).map_err(|e| EvalError::Output(e.to_string()))?;
        for (local, span) in spans {
            let original = *chunk
                .sentinels
                .get(usize::from(local))
                .ok_or_else(|| EvalError::Output(format!("chunk sentinel {local} out of range")))?;
            merged.insert(original, span);
        }
    }
    Ok(merged
        .into_iter()
        .flat_map(|(k, span)| std::iter::once(Token::Mask(k)).chain(span))
        .collect())
}
