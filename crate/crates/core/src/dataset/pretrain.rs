//! Span-corruption examples and measure-aligned chunking.

use std::ops::Range;

use log::info;
use rand::seq::index::sample;
use rand::Rng;

use super::{
    transpose, DatasetConfig, DatasetError, ExampleKind, ExampleMeta, InfillExample, RandomSource,
};
use crate::midi::QuantizedSong;
use crate::tokens::{encode_measures, LevelThresholds, Token, TokenSeq, MAX_MASK_ID};

/// Sequences shorter than this are not corrupted.
pub const MIN_CORRUPTIBLE_TOKENS: usize = 7;

/// Greedy packing of consecutive measures (given their token counts) into
/// ranges of at most `limit` tokens.
pub fn chunk_measures(counts: &[usize], limit: usize) -> Result<Vec<Range<usize>>, DatasetError> {
    let mut out = Vec::new();
    let mut start = 0;
    let mut total = 0;
    for (i, &c) in counts.iter().enumerate() {
        if c > limit {
            return Err(DatasetError::MeasureTooLong {
                measure: i,
                tokens: c,
                limit,
            });
        }
        if total + c > limit {
            out.push(start..i);
            start = i;
            total = 0;
        }
        total += c;
    }
    if start < counts.len() {
        out.push(start..counts.len());
    }
    Ok(out)
}

/// Splits a song token sequence at measure starts into chunks of at most
/// `limit` tokens.
pub fn chunk(tokens: &[Token], limit: usize) -> Result<Vec<TokenSeq>, DatasetError> {
    let mut measures: Vec<&[Token]> = Vec::new();
    let mut start = 0;
    for (i, t) in tokens.iter().enumerate() {
        if matches!(t, Token::Measure(_)) && i > start {
            measures.push(&tokens[start..i]);
            start = i;
        }
    }
    if start < tokens.len() {
        measures.push(&tokens[start..]);
    }
    let counts: Vec<usize> = measures.iter().map(|m| m.len()).collect();
    Ok(chunk_measures(&counts, limit)?
        .into_iter()
        .map(|r| measures[r].iter().flat_map(|m| m.iter().copied()).collect())
        .collect())
}

/// Splits `items` into `segments` nonempty parts uniformly at random.
fn random_segmentation<R: Rng + ?Sized>(rng: &mut R, items: usize, segments: usize) -> Vec<usize> {
    let mut cuts = sample(rng, items - 1, segments - 1).into_vec();
    cuts.iter_mut().for_each(|c| *c += 1);
    cuts.sort_unstable();
    let mut lengths = Vec::with_capacity(segments);
    let mut prev = 0;
    for c in cuts.into_iter().chain(std::iter::once(items)) {
        lengths.push(c - prev);
        prev = c;
    }
    lengths
}

/// Noise mask in the usual corrupted-span style: about `density * n` noisy
/// tokens in about `noise / mean_span` spans, alternating with clean runs and
/// starting clean. `None` when nothing would be corrupted.
pub fn noise_mask<R: Rng + ?Sized>(
    n: usize,
    density: f64,
    mean_span: f64,
    rng: &mut R,
) -> Option<Vec<bool>> {
    if n < 2 || density <= 0.0 {
        return None;
    }
    let noise = ((n as f64 * density).round() as usize).clamp(1, n - 1);
    let clean = n - noise;
    let spans = ((noise as f64 / mean_span.max(1.0)).round() as usize)
        .max(1)
        .min(noise)
        .min(clean)
        .min(usize::from(MAX_MASK_ID) + 1);
    let noise_lengths = random_segmentation(rng, noise, spans);
    let clean_lengths = random_segmentation(rng, clean, spans);
    let mut mask = Vec::with_capacity(n);
    for (c, z) in clean_lengths.into_iter().zip(noise_lengths) {
        mask.extend(std::iter::repeat_n(false, c));
        mask.extend(std::iter::repeat_n(true, z));
    }
    Some(mask)
}

/// Replaces each noisy span with the next sentinel; the target lists every
/// sentinel followed by the tokens it replaced.
pub fn apply_noise_mask(tokens: &[Token], mask: &[bool]) -> (TokenSeq, TokenSeq) {
    let mut input = TokenSeq::new();
    let mut target = TokenSeq::new();
    let mut next = 0u16;
    let mut in_span = false;
    for (&t, &noisy) in tokens.iter().zip(mask) {
        if noisy {
            if !in_span {
                input.push(Token::Mask(next));
                target.push(Token::Mask(next));
                next += 1;
                in_span = true;
            }
            target.push(t);
        } else {
            input.push(t);
            in_span = false;
        }
    }
    (input, target)
}

/// Corrupts `tokens`; `None` for sequences too short or a zero rate.
pub fn span_corrupt<R: Rng + ?Sized>(
    tokens: &[Token],
    density: f64,
    mean_span: f64,
    rng: &mut R,
) -> Option<(TokenSeq, TokenSeq)> {
    if tokens.len() < MIN_CORRUPTIBLE_TOKENS {
        return None;
    }
    let mask = noise_mask(tokens.len(), density, mean_span, rng)?;
    Some(apply_noise_mask(tokens, &mask))
}

/// Transposes the song randomly, encodes it, packs whole measures into chunks
/// of at most `limit` tokens and corrupts each chunk.
pub fn build_pretrain_examples(
    song: &QuantizedSong,
    source: &str,
    limit: usize,
    rng: &mut RandomSource,
    config: &DatasetConfig,
    thresholds: &LevelThresholds,
) -> Result<Vec<InfillExample>, DatasetError> {
    let seed = rng.seed();
    let shift = rng.random_range(config.transpose_min..=config.transpose_max);
    let encoded = encode_measures(&transpose(song, shift), thresholds)?;
    let counts: Vec<usize> = encoded.measures.iter().map(|m| m.token_count()).collect();
    let mut out = Vec::new();
    for (i, range) in chunk_measures(&counts, limit)?.into_iter().enumerate() {
        let tokens = encoded.slice_tokens(range.clone());
        let Some((input, target)) = span_corrupt(
            &tokens,
            config.corruption_rate,
            config.mean_span_length,
            rng,
        ) else {
            info!(
                "{source}: chunk {i} ({} tokens) left uncorrupted, skipped",
                tokens.len()
            );
            continue;
        };
        out.push(InfillExample {
            id: format!("{source}#p{i}"),
            input,
            target,
            coords: Vec::new(),
            meta: ExampleMeta {
                source: source.to_string(),
                kind: ExampleKind::Pretrain,
                transposition: shift,
                slice: (range.start, range.end),
                seed,
                ..ExampleMeta::default()
            },
        });
    }
    Ok(out)
}
