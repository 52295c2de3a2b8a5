//! A model-free infiller: copy the nearest visible measure of the same track.

use std::collections::BTreeMap;

use super::prompt::{body_notes, parse_prompt, PartContent, PromptMeasure};
use super::EvalError;
use crate::dataset::InfillExample;
use crate::midi::{Note, DRUMS};
use crate::tokens::{encode_part, Token, TokenSeq};

/// Fallback pitches when a track shows no notes at all.
const DEFAULT_PITCH: u8 = 60;
const DEFAULT_DRUM: u8 = 36;
const FALLBACK_DURATION: u32 = 24;

/// Visible part bodies per (instrument, rank), keyed by measure.
fn visible_parts(measures: &[PromptMeasure]) -> BTreeMap<(u8, u8), BTreeMap<usize, &[Token]>> {
    let mut out: BTreeMap<(u8, u8), BTreeMap<usize, &[Token]>> = BTreeMap::new();
    for (m, measure) in measures.iter().enumerate() {
        for part in &measure.parts {
            if let PartContent::Visible(body) = &part.content {
                if body
                    .iter()
                    .any(|t| matches!(t, Token::Note(_) | Token::Drum(_)))
                {
                    out.entry(part.key())
                        .or_default()
                        .insert(m, body.as_slice());
                }
            }
        }
    }
    out
}

/// Lower median of the track's visible pitches.
fn median_pitch(
    measures: &[PromptMeasure],
    donors: Option<&BTreeMap<usize, &[Token]>>,
    drums: bool,
) -> u8 {
    let mut pitches: Vec<u8> = donors
        .into_iter()
        .flatten()
        .flat_map(|(&m, body)| body_notes(body, measures[m].length, drums).unwrap_or_default())
        .map(|(_, _, p)| p)
        .collect();
    if pitches.is_empty() {
        return if drums { DEFAULT_DRUM } else { DEFAULT_PITCH };
    }
    pitches.sort_unstable();
    pitches[(pitches.len() - 1) / 2]
}

/// Fills every sentinel of `example` with the notes of the nearest unmasked
/// measure of the same track (earlier wins ties), dropping notes that would
/// start past the end of the target measure. Tracks with no usable donor get
/// one beat-long note at their median visible pitch on the downbeat. Output is
/// in target format and writes at least one note per sentinel.
pub fn baseline_infill(example: &InfillExample) -> Result<TokenSeq, EvalError> {
    let measures = parse_prompt(&example.input)?;
    let donors = visible_parts(&measures);
    let mut answers: BTreeMap<u16, Vec<Token>> = BTreeMap::new();

    for (m, measure) in measures.iter().enumerate() {
        for part in &measure.parts {
            let PartContent::Masked(k) = part.content else {
                continue;
            };
            let drums = part.instrument == DRUMS;
            let track_donors = donors.get(&part.key());
            let nearest =
                track_donors.and_then(|d| d.iter().min_by_key(|(&dm, _)| (dm.abs_diff(m), dm)));
            let mut body = Vec::new();
            if let Some((&dm, donor)) = nearest {
                if measures[dm].length <= measure.length {
                    body = donor.to_vec();
                } else {
                    let mut kept: Vec<Note> = body_notes(donor, measures[dm].length, drums)
                        .unwrap_or_default()
                        .into_iter()
                        .filter(|&(onset, _, _)| onset < measure.length)
                        .map(|(onset, duration, pitch)| Note::new(onset, duration, pitch, 1))
                        .collect();
                    if !kept.is_empty() {
                        body = encode_part(&mut kept, 0, drums);
                    }
                }
            }
            if body.is_empty() {
                let pitch = median_pitch(&measures, track_donors, drums);
                let mut note = [Note::new(0, FALLBACK_DURATION, pitch, 1)];
                body = encode_part(&mut note, 0, drums);
            }
            answers.insert(k, body);
        }
    }
    Ok(answers
        .into_iter()
        .flat_map(|(k, body)| std::iter::once(Token::Mask(k)).chain(body))
        .collect())
}
