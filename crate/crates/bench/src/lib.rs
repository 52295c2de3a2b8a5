//! Fixed synthetic corpora shared by the benchmarks.

use trackfill::dataset::RandomSource;
use trackfill::midi::QuantizedSong;
use trackfill::synth::{random_song, SongShape};

/// `n` seeded random songs of up to 8 tracks and 32 measures.
pub fn corpus(n: u64, seed: u64, common_time: bool) -> Vec<QuantizedSong> {
    let shape = SongShape {
        max_tracks: 8,
        common_time,
        ..SongShape::default()
    };
    let base = RandomSource::new(seed);
    (0..n)
        .map(|i| random_song(&mut base.split(i), &shape))
        .collect()
}
