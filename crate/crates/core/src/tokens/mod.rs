//! The measure-based event language: tokens, their text form, level
//! thresholds for dynamics and tempo, and the song codec.

mod codec;
mod levels;

pub use codec::{
    classify_polyphony, decode, encode, encode_measures, encode_part, track_order, DecodeError,
    EncodeError, EncodedMeasure, EncodedPart, EncodedSong, Polyphony, MAX_TICKS,
    MAX_TRACKS_PER_INSTRUMENT,
};
pub use levels::{
    learn_level_thresholds, measure_velocity_samples, LevelError, LevelThresholds, SampleCounts,
};

use std::fmt;
use std::ops::Deref;
use std::str::FromStr;

use thiserror::Error;

/// Highest mask sentinel id.
pub const MAX_MASK_ID: u16 = 255;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Token {
    /// `M:x`, measure start with dynamics level 0–7.
    Measure(u8),
    /// `B:x`, tempo level 0–7.
    Tempo(u8),
    /// `L:x`, measure length 1–192 ticks.
    Length(u8),
    /// `I:x`, instrument 0–127 or 128 for drums.
    Instrument(u8),
    /// `R:x`, 1–63: another track of the current instrument, lower pitched as x grows.
    Repeat(u8),
    /// `N:x`, pitched note.
    Note(u8),
    /// `D:x`, drum hit.
    Drum(u8),
    /// `d:x`, duration 0–192 ticks for subsequent notes.
    Duration(u8),
    /// `w:x`, advance the insertion point by 1–191 ticks.
    Wait(u8),
    /// `<extra_id_x>`, 0–255.
    Mask(u16),
    Mono,
    Poly,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TokenKind {
    Measure,
    Tempo,
    Length,
    Instrument,
    Repeat,
    Note,
    Drum,
    Duration,
    Wait,
    Mask,
    Mono,
    Poly,
}

impl TokenKind {
    pub const ALL: [TokenKind; 12] = [
        TokenKind::Measure,
        TokenKind::Tempo,
        TokenKind::Length,
        TokenKind::Instrument,
        TokenKind::Repeat,
        TokenKind::Note,
        TokenKind::Drum,
        TokenKind::Duration,
        TokenKind::Wait,
        TokenKind::Mask,
        TokenKind::Mono,
        TokenKind::Poly,
    ];

    /// Inclusive value range.
    pub fn range(self) -> (u32, u32) {
        match self {
            TokenKind::Measure | TokenKind::Tempo => (0, 7),
            TokenKind::Length => (1, 192),
            TokenKind::Instrument => (0, 128),
            TokenKind::Repeat => (1, 63),
            TokenKind::Note | TokenKind::Drum => (0, 127),
            TokenKind::Duration => (0, 192),
            TokenKind::Wait => (1, 191),
            TokenKind::Mask => (0, u32::from(MAX_MASK_ID)),
            TokenKind::Mono | TokenKind::Poly => (0, 0),
        }
    }

    fn prefix(self) -> &'static str {
        match self {
            TokenKind::Measure => "M",
            TokenKind::Tempo => "B",
            TokenKind::Length => "L",
            TokenKind::Instrument => "I",
            TokenKind::Repeat => "R",
            TokenKind::Note => "N",
            TokenKind::Drum => "D",
            TokenKind::Duration => "d",
            TokenKind::Wait => "w",
            TokenKind::Mask => "<extra_id_",
            TokenKind::Mono => "<mono>",
            TokenKind::Poly => "<poly>",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TokenError {
    #[error("unrecognized token {0:?}")]
    Unrecognized(String),
    #[error("{kind:?} value {value} outside {lo}..={hi}")]
    OutOfRange {
        kind: TokenKind,
        value: u32,
        lo: u32,
        hi: u32,
    },
}

impl Token {
    /// Builds a token after checking the value against the kind's range.
    pub fn new(kind: TokenKind, value: u32) -> Result<Self, TokenError> {
        let (lo, hi) = kind.range();
        if value < lo || value > hi {
            return Err(TokenError::OutOfRange {
                kind,
                value,
                lo,
                hi,
            });
        }
        let v = value as u8;
        Ok(match kind {
            TokenKind::Measure => Token::Measure(v),
            TokenKind::Tempo => Token::Tempo(v),
            TokenKind::Length => Token::Length(v),
            TokenKind::Instrument => Token::Instrument(v),
            TokenKind::Repeat => Token::Repeat(v),
            TokenKind::Note => Token::Note(v),
            TokenKind::Drum => Token::Drum(v),
            TokenKind::Duration => Token::Duration(v),
            TokenKind::Wait => Token::Wait(v),
            TokenKind::Mask => Token::Mask(value as u16),
            TokenKind::Mono => Token::Mono,
            TokenKind::Poly => Token::Poly,
        })
    }

    pub fn kind(&self) -> TokenKind {
        match self {
            Token::Measure(_) => TokenKind::Measure,
            Token::Tempo(_) => TokenKind::Tempo,
            Token::Length(_) => TokenKind::Length,
            Token::Instrument(_) => TokenKind::Instrument,
            Token::Repeat(_) => TokenKind::Repeat,
            Token::Note(_) => TokenKind::Note,
            Token::Drum(_) => TokenKind::Drum,
            Token::Duration(_) => TokenKind::Duration,
            Token::Wait(_) => TokenKind::Wait,
            Token::Mask(_) => TokenKind::Mask,
            Token::Mono => TokenKind::Mono,
            Token::Poly => TokenKind::Poly,
        }
    }

    pub fn value(&self) -> u32 {
        match *self {
            Token::Measure(v)
            | Token::Tempo(v)
            | Token::Length(v)
            | Token::Instrument(v)
            | Token::Repeat(v)
            | Token::Note(v)
            | Token::Drum(v)
            | Token::Duration(v)
            | Token::Wait(v) => u32::from(v),
            Token::Mask(v) => u32::from(v),
            Token::Mono | Token::Poly => 0,
        }
    }

    pub fn is_valid(&self) -> bool {
        let (lo, hi) = self.kind().range();
        (lo..=hi).contains(&self.value())
    }

    pub fn is_sentinel(&self) -> bool {
        matches!(self, Token::Mask(_))
    }

    /// Tokens that belong to a track's part body inside a measure.
    pub fn is_part_body(&self) -> bool {
        matches!(
            self,
            Token::Note(_) | Token::Drum(_) | Token::Duration(_) | Token::Wait(_)
        )
    }

    /// Position in [`vocabulary`].
    pub fn id(&self) -> u32 {
        let mut offset = 0;
        for kind in TokenKind::ALL {
            let (lo, hi) = kind.range();
            if kind == self.kind() {
                return offset + self.value() - lo;
            }
            offset += hi - lo + 1;
        }
        unreachable!("every kind is listed")
    }
}

/// Every valid token, ordered by kind then value; a token's index is its id.
pub fn vocabulary() -> Vec<Token> {
    TokenKind::ALL
        .iter()
        .flat_map(|&kind| {
            let (lo, hi) = kind.range();
            (lo..=hi).map(move |v| Token::new(kind, v).expect("in range"))
        })
        .collect()
}

impl fmt::Display for Token {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Token::Mask(v) => write!(f, "<extra_id_{v}>"),
            Token::Mono => f.write_str("<mono>"),
            Token::Poly => f.write_str("<poly>"),
            t => write!(f, "{}:{}", t.kind().prefix(), t.value()),
        }
    }
}

impl FromStr for Token {
    type Err = TokenError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || TokenError::Unrecognized(s.to_string());
        match s {
            "<mono>" => return Ok(Token::Mono),
            "<poly>" => return Ok(Token::Poly),
            _ => {}
        }
        if let Some(rest) = s.strip_prefix("<extra_id_") {
            let digits = rest.strip_suffix('>').ok_or_else(bad)?;
            return Token::new(TokenKind::Mask, parse_value(digits).ok_or_else(bad)?);
        }
        let (prefix, digits) = s.split_once(':').ok_or_else(bad)?;
        let kind = TokenKind::ALL[..9]
            .iter()
            .copied()
            .find(|k| k.prefix() == prefix)
            .ok_or_else(bad)?;
        Token::new(kind, parse_value(digits).ok_or_else(bad)?)
    }
}

fn parse_value(digits: &str) -> Option<u32> {
    if digits.is_empty() || !digits.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    digits.parse().ok()
}

/// An ordered token list with a single-space-separated text form.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default)]
pub struct TokenSeq(pub Vec<Token>);

impl TokenSeq {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, token: Token) {
        self.0.push(token);
    }

    pub fn into_inner(self) -> Vec<Token> {
        self.0
    }

    /// Parses the text form, reporting the index of the first bad token.
    pub fn parse_indexed(text: &str) -> Result<Self, (usize, TokenError)> {
        text.split_whitespace()
            .enumerate()
            .map(|(i, t)| t.parse().map_err(|e| (i, e)))
            .collect::<Result<Vec<_>, _>>()
            .map(Self)
    }
}

impl Deref for TokenSeq {
    type Target = [Token];

    fn deref(&self) -> &[Token] {
        &self.0
    }
}

impl From<Vec<Token>> for TokenSeq {
    fn from(tokens: Vec<Token>) -> Self {
        Self(tokens)
    }
}

impl FromIterator<Token> for TokenSeq {
    fn from_iter<I: IntoIterator<Item = Token>>(iter: I) -> Self {
        Self(iter.into_iter().collect())
    }
}

impl<'a> IntoIterator for &'a TokenSeq {
    type Item = &'a Token;
    type IntoIter = std::slice::Iter<'a, Token>;

    fn into_iter(self) -> Self::IntoIter {
        self.0.iter()
    }
}

impl fmt::Display for TokenSeq {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, t) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str(" ")?;
            }
            write!(f, "{t}")?;
        }
        Ok(())
    }
}

impl FromStr for TokenSeq {
    type Err = TokenError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::parse_indexed(s).map_err(|(_, e)| e)
    }
}

impl serde::Serialize for TokenSeq {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> serde::Deserialize<'de> for TokenSeq {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let text = String::deserialize(deserializer)?;
        text.parse().map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn text_round_trip() {
        let text = "M:5 B:6 L:96 I:0 w:48 d:24 N:67 I:0 R:1 d:48 N:36 <extra_id_3> <mono> <poly> D:36 I:128";
        let seq: TokenSeq = text.parse().unwrap();
        assert_eq!(seq.len(), 16);
        assert_eq!(seq[0], Token::Measure(5));
        assert_eq!(seq[11], Token::Mask(3));
        assert_eq!(seq.to_string(), text);
    }

    #[test]
    fn rejects_out_of_range_and_garbage() {
        for bad in [
            "M:8",
            "L:0",
            "L:193",
            "I:129",
            "R:0",
            "R:64",
            "w:0",
            "w:192",
            "d:193",
            "<extra_id_256>",
            "N:",
            "N:-1",
            "X:3",
            "n:3",
            "<extra_id_>",
            "N:+3",
        ] {
            assert!(bad.parse::<Token>().is_err(), "{bad}");
        }
        let err = TokenSeq::parse_indexed("M:0 B:0 L:300").unwrap_err();
        assert_eq!(err.0, 2);
    }

    #[test]
    fn vocabulary_ids_are_dense() {
        let vocab = vocabulary();
        assert_eq!(
            vocab.len(),
            8 + 8 + 192 + 129 + 63 + 128 + 128 + 193 + 191 + 256 + 2
        );
        for (i, t) in vocab.iter().enumerate() {
            assert_eq!(t.id() as usize, i);
            assert_eq!(t.to_string().parse::<Token>().unwrap(), *t);
        }
    }
}
