//! Symbolic-music data engineering for multi-track MIDI infilling.

pub mod corpus;
pub mod dataset;
pub mod eval;
pub mod midi;
pub mod preprocess;
pub mod synth;
pub mod tokens;
