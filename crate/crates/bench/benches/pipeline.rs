use criterion::{criterion_group, criterion_main, BatchSize, Criterion, Throughput};
use std::hint::black_box;

use trackfill::corpus::{grid_alignment_score, onset_chromagram_fingerprint};
use trackfill::dataset::{sample_finetune_example, DatasetConfig, RandomSource};
use trackfill::eval::{baseline_infill, make_test_example, TestSetConfig, STANDARD_TASKS};
use trackfill::preprocess::{preprocess_file, IntervalSet, PreprocessConfig};
use trackfill::tokens::{decode, encode, LevelThresholds};
use trackfill_bench::corpus;

fn tokens(c: &mut Criterion) {
    let songs = corpus(32, 1, false);
    let t = LevelThresholds::default();
    let encoded: Vec<_> = songs.iter().map(|s| encode(s, &t).unwrap()).collect();
    let total: usize = encoded.iter().map(|e| e.len()).sum();

    let mut g = c.benchmark_group("tokens");
    g.throughput(Throughput::Elements(total as u64));
    g.bench_function("encode", |b| {
        b.iter(|| {
            songs
                .iter()
                .map(|s| encode(black_box(s), &t).unwrap().len())
                .sum::<usize>()
        })
    });
    g.bench_function("decode", |b| {
        b.iter(|| {
            encoded
                .iter()
                .map(|e| decode(black_box(e), &t).unwrap().measures().len())
                .sum::<usize>()
        })
    });
    g.finish();
}

fn corpus_checks(c: &mut Criterion) {
    let songs: Vec<_> = corpus(32, 2, false)
        .into_iter()
        .map(|q| q.into_song())
        .collect();
    let mut g = c.benchmark_group("corpus");
    g.throughput(Throughput::Elements(songs.len() as u64));
    g.bench_function("grid_score", |b| {
        b.iter(|| {
            songs
                .iter()
                .filter_map(|s| grid_alignment_score(black_box(s)))
                .sum::<f64>()
        })
    });
    g.bench_function("fingerprint", |b| {
        b.iter(|| {
            songs
                .iter()
                .map(|s| onset_chromagram_fingerprint(black_box(s)).unwrap().hash()[0])
                .collect::<Vec<_>>()
        })
    });
    g.bench_function("preprocess", |b| {
        let config = PreprocessConfig::default();
        b.iter(|| {
            songs
                .iter()
                .map(|s| preprocess_file(black_box(s), &config).map_or(0, |q| q.measures().len()))
                .sum::<usize>()
        })
    });
    g.finish();
}

fn overlap(c: &mut Criterion) {
    let songs = corpus(6, 3, false);
    let tracks: Vec<IntervalSet> = songs
        .iter()
        .flat_map(|s| s.tracks().iter().map(|t| IntervalSet::from_notes(&t.notes)))
        .collect();
    let (left, right) = tracks.split_at(tracks.len() / 2);
    c.bench_function("overlap/all_shifts", |b| {
        b.iter(|| {
            let mut best = 0.0f64;
            for a in left.iter().take(8) {
                for other in right.iter().take(8) {
                    for shift in -48..=48 {
                        best = best.max(a.overlap(black_box(other), shift));
                    }
                }
            }
            best
        })
    });
}

fn examples(c: &mut Criterion) {
    let songs = corpus(16, 4, true);
    let t = LevelThresholds::default();
    let config = DatasetConfig::default();
    let mut g = c.benchmark_group("examples");
    g.bench_function("finetune_sample", |b| {
        b.iter_batched(
            || RandomSource::new(9),
            |mut rng| {
                songs
                    .iter()
                    .filter_map(|s| {
                        sample_finetune_example(s, "b", 0, &mut rng, &config, &t).unwrap()
                    })
                    .count()
            },
            BatchSize::SmallInput,
        )
    });
    let tests: Vec<_> = songs
        .iter()
        .filter_map(|s| {
            make_test_example(
                s,
                "b",
                STANDARD_TASKS[0],
                &mut RandomSource::new(5),
                &TestSetConfig::default(),
                &t,
            )
            .unwrap()
        })
        .collect();
    assert!(!tests.is_empty());
    g.bench_function("baseline_infill", |b| {
        b.iter(|| {
            tests
                .iter()
                .map(|e| baseline_infill(black_box(e)).unwrap().len())
                .sum::<usize>()
        })
    });
    g.finish();
}

criterion_group!(benches, tokens, corpus_checks, overlap, examples);
criterion_main!(benches);
