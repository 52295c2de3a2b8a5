use log::warn;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::midi::QuantizedSong;

pub const LEVELS: usize = 8;

#[derive(Debug, Error)]
pub enum LevelError {
    #[error("no {0} samples to learn thresholds from")]
    NoSamples(&'static str),
    #[error("thresholds must be 7 finite, strictly ascending values: {0:?}")]
    Invalid(Vec<f64>),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// Seven ascending cut points for each of dynamics (mean velocity) and tempo
/// (BPM). A value's level is the number of cut points at or below it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelThresholds {
    pub dynamics_bounds: [f64; LEVELS - 1],
    pub tempo_bounds: [f64; LEVELS - 1],
    /// Number of measures each set of bounds was learned from.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub samples: Option<SampleCounts>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampleCounts {
    pub dynamics: usize,
    pub tempo: usize,
}

impl Default for LevelThresholds {
    /// Hand-picked bounds used when no corpus statistics are available.
    fn default() -> Self {
        Self {
            dynamics_bounds: [24.0, 40.0, 56.0, 72.0, 88.0, 104.0, 116.0],
            tempo_bounds: [60.0, 76.0, 92.0, 108.0, 120.0, 132.0, 156.0],
            samples: None,
        }
    }
}

fn level_of(bounds: &[f64; LEVELS - 1], value: f64) -> u8 {
    bounds.iter().take_while(|&&b| b <= value).count() as u8
}

fn check(bounds: &[f64; LEVELS - 1]) -> Result<(), LevelError> {
    let ok = bounds.iter().all(|b| b.is_finite()) && bounds.windows(2).all(|w| w[0] < w[1]);
    if ok {
        Ok(())
    } else {
        Err(LevelError::Invalid(bounds.to_vec()))
    }
}

impl LevelThresholds {
    pub fn new(dynamics_bounds: [f64; 7], tempo_bounds: [f64; 7]) -> Result<Self, LevelError> {
        check(&dynamics_bounds)?;
        check(&tempo_bounds)?;
        Ok(Self {
            dynamics_bounds,
            tempo_bounds,
            samples: None,
        })
    }

    /// Octile bounds of the given samples (linear interpolation between order
    /// statistics). Ties that would leave bounds non-increasing are spread
    /// apart by +1 steps.
    pub fn from_samples(velocities: &[f64], bpms: &[f64]) -> Result<Self, LevelError> {
        if velocities.is_empty() {
            return Err(LevelError::NoSamples("velocity"));
        }
        if bpms.is_empty() {
            return Err(LevelError::NoSamples("tempo"));
        }
        Ok(Self {
            dynamics_bounds: octile_bounds(velocities, "dynamics"),
            tempo_bounds: octile_bounds(bpms, "tempo"),
            samples: Some(SampleCounts {
                dynamics: velocities.len(),
                tempo: bpms.len(),
            }),
        })
    }

    pub fn dynamics_level(&self, mean_velocity: f64) -> u8 {
        level_of(&self.dynamics_bounds, mean_velocity)
    }

    pub fn tempo_level(&self, bpm: f64) -> u8 {
        level_of(&self.tempo_bounds, bpm)
    }

    /// Representative velocity for a dynamics level: the middle integer of the
    /// level's range within 1..=127.
    pub fn level_velocity(&self, level: u8) -> u8 {
        let b = &self.dynamics_bounds;
        let i = usize::from(level.min(7));
        // integer velocities v with level(v) == i are ceil(b[i-1]) ..= ceil(b[i]) - 1
        let lo = if i == 0 {
            1.0
        } else {
            b[i - 1].ceil().max(1.0)
        };
        let hi = if i == 7 {
            127.0
        } else {
            (b[i].ceil() - 1.0).min(127.0)
        };
        let mid = if hi >= lo {
            ((lo + hi) / 2.0).floor()
        } else {
            lo
        };
        mid.clamp(1.0, 127.0) as u8
    }

    /// Representative BPM for a tempo level: the midpoint of its range, with
    /// the open ends closed at 0 and at one step above the last bound.
    pub fn level_bpm(&self, level: u8) -> f64 {
        let b = &self.tempo_bounds;
        match usize::from(level.min(7)) {
            0 => b[0] / 2.0,
            7 => b[6] + (b[6] - b[5]) / 2.0,
            i => (b[i - 1] + b[i]) / 2.0,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("thresholds serialize")
    }

    pub fn from_json(text: &str) -> Result<Self, LevelError> {
        let t: Self = serde_json::from_str(text)?;
        check(&t.dynamics_bounds)?;
        check(&t.tempo_bounds)?;
        Ok(t)
    }
}

/// Type-7 quantile of sorted data.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

fn octile_bounds(samples: &[f64], what: &str) -> [f64; LEVELS - 1] {
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut bounds: [f64; LEVELS - 1] =
        std::array::from_fn(|i| quantile(&sorted, (i + 1) as f64 / LEVELS as f64));
    let mut padded = false;
    for i in 1..bounds.len() {
        if bounds[i] <= bounds[i - 1] {
            bounds[i] = bounds[i - 1] + 1.0;
            padded = true;
        }
    }
    if padded {
        warn!("{what} samples too concentrated for 8 levels; padded bounds to {bounds:?}");
    }
    bounds
}

/// Mean note velocity of every measure that has notes (all tracks pooled),
/// in measure order.
pub fn measure_velocity_samples(song: &QuantizedSong) -> Vec<Option<f64>> {
    let measures = song.measures();
    let mut sums = vec![(0u64, 0u64); measures.len()];
    for note in song.song().notes() {
        if let Some(i) = measures.index_of(note.onset) {
            sums[i].0 += u64::from(note.velocity);
            sums[i].1 += 1;
        }
    }
    sums.into_iter()
        .map(|(sum, n)| (n > 0).then(|| sum as f64 / n as f64))
        .collect()
}

/// Learns thresholds from per-measure mean velocities (measures with notes)
/// and measure-start tempos (every measure) across `corpus`.
pub fn learn_level_thresholds<'a>(
    corpus: impl IntoIterator<Item = &'a QuantizedSong>,
) -> Result<LevelThresholds, LevelError> {
    let mut velocities = Vec::new();
    let mut bpms = Vec::new();
    for song in corpus {
        velocities.extend(measure_velocity_samples(song).into_iter().flatten());
        bpms.extend(song.measures().iter().map(|m| song.song().bpm_at(m.start)));
    }
    LevelThresholds::from_samples(&velocities, &bpms)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::midi::{Note, Song, TempoEvent, Track};

    #[test]
    fn uniform_velocities_give_linear_octiles() {
        let v: Vec<f64> = (1..=127).map(f64::from).collect();
        let t = LevelThresholds::from_samples(&v, &[120.0; 3]).unwrap();
        for (i, b) in t.dynamics_bounds.iter().enumerate() {
            // oracle: position 126 * k/8 in 0-based order, value = position + 1
            let expected = 1.0 + 126.0 * (i + 1) as f64 / 8.0;
            assert!((b - expected).abs() < 1e-9, "{i}: {b} vs {expected}");
        }
        assert!((t.dynamics_bounds[0] - 16.75).abs() < 1e-12);
        let counts = v.iter().fold([0usize; 8], |mut c, &x| {
            c[t.dynamics_level(x) as usize] += 1;
            c
        });
        assert!(counts.iter().all(|&c| (15..=17).contains(&c)), "{counts:?}");
    }

    #[test]
    fn degenerate_samples_padded() {
        let t = LevelThresholds::from_samples(&[80.0], &[120.0]).unwrap();
        assert_eq!(
            t.dynamics_bounds,
            [80.0, 81.0, 82.0, 83.0, 84.0, 85.0, 86.0]
        );
        assert!(t.tempo_bounds.windows(2).all(|w| w[0] < w[1]));
        assert!(LevelThresholds::from_samples(&[], &[1.0]).is_err());
    }

    #[test]
    fn boundary_semantics() {
        let t = LevelThresholds::default();
        assert_eq!(t.dynamics_level(1.0), 0);
        assert_eq!(t.dynamics_level(23.9), 0);
        assert_eq!(t.dynamics_level(24.0), 1);
        assert_eq!(t.dynamics_level(127.0), 7);
        assert_eq!(t.tempo_level(10.0), 0);
        assert_eq!(t.tempo_level(400.0), 7);
    }

    #[test]
    fn representatives_land_in_their_level() {
        for t in [
            LevelThresholds::default(),
            LevelThresholds::from_samples(
                &(1..=127).map(f64::from).collect::<Vec<_>>(),
                &[50.0, 90.0, 200.0],
            )
            .unwrap(),
        ] {
            for level in 0..8 {
                assert_eq!(t.dynamics_level(f64::from(t.level_velocity(level))), level);
                assert_eq!(t.tempo_level(t.level_bpm(level)), level);
            }
        }
    }

    #[test]
    fn json_round_trip_and_validation() {
        let t = LevelThresholds::default();
        assert_eq!(LevelThresholds::from_json(&t.to_json()).unwrap(), t);
        let bad = t.to_json().replace("24.0", "50.0");
        assert!(LevelThresholds::from_json(&bad).is_err());
    }

    #[test]
    fn learns_from_songs() {
        let mut song = Song::with_tracks(
            24,
            vec![Track::new(
                0,
                vec![Note::new(0, 24, 60, 40), Note::new(96, 24, 60, 100)],
            )],
        );
        song.tempo_map = vec![
            TempoEvent::from_bpm(0, 90.0),
            TempoEvent::from_bpm(96, 150.0),
        ];
        let q = QuantizedSong::new(song).unwrap();
        assert_eq!(measure_velocity_samples(&q), vec![Some(40.0), Some(100.0)]);
        let t = learn_level_thresholds([&q]).unwrap();
        assert_eq!(
            t.samples,
            Some(SampleCounts {
                dynamics: 2,
                tempo: 2
            })
        );
        assert!((t.dynamics_bounds[0] - 47.5).abs() < 1e-9);
        assert!((t.tempo_bounds[3] - 120.0).abs() < 1e-3);
    }
}
