//! Evaluation prompts: random, track and last-bar masks over 8- or 16-measure
//! slices.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::EvalError;
use crate::dataset::{
    assemble_example, tracks_in_slice, ExampleKind, ExampleMeta, InfillExample, RandomSource,
};
use crate::midi::QuantizedSong;
use crate::tokens::{encode_measures, LevelThresholds};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TestMaskKind {
    /// Each track-measure with probability 0.5.
    Random,
    /// Up to half the tracks, every measure.
    Track,
    /// The final measure of every track.
    LastBar,
}

impl TestMaskKind {
    pub fn name(self) -> &'static str {
        match self {
            TestMaskKind::Random => "random",
            TestMaskKind::Track => "track",
            TestMaskKind::LastBar => "lastbar",
        }
    }
}

/// A mask kind paired with a slice length, e.g. `track-16`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct TestTask {
    pub kind: TestMaskKind,
    pub slice_len: usize,
}

/// The six standard tasks: each mask kind at 8 and 16 measures.
pub const STANDARD_TASKS: [TestTask; 6] = [
    TestTask {
        kind: TestMaskKind::Random,
        slice_len: 8,
    },
    TestTask {
        kind: TestMaskKind::Random,
        slice_len: 16,
    },
    TestTask {
        kind: TestMaskKind::Track,
        slice_len: 8,
    },
    TestTask {
        kind: TestMaskKind::Track,
        slice_len: 16,
    },
    TestTask {
        kind: TestMaskKind::LastBar,
        slice_len: 8,
    },
    TestTask {
        kind: TestMaskKind::LastBar,
        slice_len: 16,
    },
];

impl fmt::Display for TestTask {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}-{}", self.kind.name(), self.slice_len)
    }
}

impl FromStr for TestTask {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (kind, len) = s
            .rsplit_once('-')
            .ok_or_else(|| format!("expected KIND-LENGTH, got {s:?}"))?;
        let kind = match kind {
            "random" => TestMaskKind::Random,
            "track" => TestMaskKind::Track,
            "lastbar" => TestMaskKind::LastBar,
            _ => return Err(format!("unknown mask kind {kind:?}")),
        };
        let slice_len = len
            .parse::<usize>()
            .ok()
            .filter(|&n| n > 0)
            .ok_or_else(|| format!("bad slice length {len:?}"))?;
        Ok(Self { kind, slice_len })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TestSetConfig {
    /// Only use slices whose measures are all 96 ticks (4/4).
    pub require_common_time: bool,
    /// Follow each sentinel with `<mono>`/`<poly>`.
    pub annotate_polyphony: bool,
    pub random_probability: f64,
    /// Slice and mask redraws before a file is skipped for a task.
    pub attempts: usize,
}

impl Default for TestSetConfig {
    fn default() -> Self {
        Self {
            require_common_time: true,
            annotate_polyphony: true,
            random_probability: 0.5,
            attempts: 16,
        }
    }
}

/// Mask over slice-local track positions `0..n_tracks` and measures `0..n_measures`.
pub fn test_mask<R: Rng + ?Sized>(
    kind: TestMaskKind,
    n_tracks: usize,
    n_measures: usize,
    probability: f64,
    rng: &mut R,
) -> BTreeSet<(usize, usize)> {
    match kind {
        TestMaskKind::Random => (0..n_tracks)
            .flat_map(|t| (0..n_measures).map(move |m| (t, m)))
            .filter(|_| rng.random_bool(probability))
            .collect(),
        TestMaskKind::Track => {
            let count = rng.random_range(1..=(n_tracks / 2).max(1));
            sample(rng, n_tracks, count)
                .into_iter()
                .flat_map(|t| (0..n_measures).map(move |m| (t, m)))
                .collect()
        }
        TestMaskKind::LastBar => (0..n_tracks).map(|t| (t, n_measures - 1)).collect(),
    }
}

/// Slice offsets usable for a task on `song`.
pub fn candidate_offsets(
    song: &QuantizedSong,
    slice_len: usize,
    require_common_time: bool,
) -> Vec<usize> {
    let lengths: Vec<u32> = song.measures().lengths().collect();
    if lengths.len() < slice_len {
        return Vec::new();
    }
    (0..=lengths.len() - slice_len)
        .filter(|&o| !require_common_time || lengths[o..o + slice_len].iter().all(|&l| l == 96))
        .collect()
}

/// One evaluation prompt for `task`, or `None` when the song has no usable
/// slice or no draw masked a note.
pub fn make_test_example(
    song: &QuantizedSong,
    source: &str,
    task: TestTask,
    rng: &mut RandomSource,
    config: &TestSetConfig,
    thresholds: &LevelThresholds,
) -> Result<Option<InfillExample>, EvalError> {
    let offsets = candidate_offsets(song, task.slice_len, config.require_common_time);
    if offsets.is_empty() {
        return Ok(None);
    }
    let seed = rng.seed();
    let encoded = encode_measures(song, thresholds)?;
    for _ in 0..config.attempts {
        let start = offsets[rng.random_range(0..offsets.len())];
        let slice = start..start + task.slice_len;
        let tracks = tracks_in_slice(&encoded, slice.clone());
        if tracks.is_empty() {
            continue;
        }
        let mask: BTreeSet<(usize, usize)> = test_mask(
            task.kind,
            tracks.len(),
            slice.len(),
            config.random_probability,
            rng,
        )
        .into_iter()
        .map(|(t, m)| (tracks[t], m))
        .collect();
        let built = assemble_example(&encoded, slice.clone(), &mask, config.annotate_polyphony);
        if built.coords.is_empty() {
            continue;
        }
        return Ok(Some(InfillExample {
            id: format!("{source}#{task}"),
            input: built.input,
            target: built.target,
            coords: built.coords,
            meta: ExampleMeta {
                source: source.to_string(),
                kind: ExampleKind::Test,
                slice: (slice.start, slice.end),
                task: Some(task.to_string()),
                seed,
                mono_poly: config.annotate_polyphony,
                ..ExampleMeta::default()
            },
        }));
    }
    Ok(None)
}
