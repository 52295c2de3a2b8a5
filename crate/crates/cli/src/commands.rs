//! Subcommand bodies. Per-file work runs on the rayon pool; results keep the
//! sorted corpus order.

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use log::{info, warn};
use rayon::prelude::*;
use serde::Serialize;
use trackfill::corpus::{
    dedupe, grid_alignment_score, is_off_grid, onset_chromagram_fingerprint, DedupeVerdict,
};
use trackfill::dataset::{
    build_pretrain_examples, sample_finetune_example, InfillExample, RandomSource,
};
use trackfill::eval::{
    baseline_infill, evaluate_corpus, make_test_example, masked_measures, run_chunked,
    SystemOutput, TestTask,
};
use trackfill::midi::{parse_smf, write_smf, MeasureMap, QuantizedSong};
use trackfill::preprocess::{preprocess_file, PreprocessError};
use trackfill::tokens::{
    decode, encode, learn_level_thresholds, vocabulary, LevelThresholds, TokenSeq,
};

use crate::config::PipelineConfig;
use crate::files::{
    jsonl, list_corpus, output_path, read_bytes, read_input, read_jsonl, read_quantized, read_song,
    write_file, write_output, CorpusFile, SCHEMA_VERSION,
};
use crate::{Command, InputError};

pub fn dispatch(command: Command, config: &PipelineConfig) -> Result<()> {
    match command {
        Command::Scan { corpus, output } => scan(&corpus.input, output.as_deref()),
        Command::Filter { io, .. } => filter(&io.input, &io.output, io.report, config),
        Command::Dedupe { io } => dedupe_corpus(&io.input, &io.output, io.report),
        Command::Preprocess { io, .. } => preprocess(&io.input, &io.output, io.report, config),
        Command::LearnLevels { corpus, output } => learn_levels(&corpus.input, output.as_deref()),
        Command::Tokenize {
            input,
            output,
            preprocess,
            levels,
        } => tokenize(
            &input,
            output.as_deref(),
            preprocess,
            levels.levels.as_deref(),
            config,
        ),
        Command::Detokenize {
            input,
            output,
            levels,
        } => detokenize(&input, output.as_deref(), levels.levels.as_deref()),
        Command::BuildPretrain {
            corpus,
            output,
            seed,
            levels,
            ..
        } => build_pretrain(
            &corpus.input,
            &output,
            seed,
            levels.levels.as_deref(),
            config,
        ),
        Command::BuildFinetune {
            corpus,
            output,
            seed,
            levels,
            ..
        } => build_finetune(
            &corpus.input,
            &output,
            seed,
            levels.levels.as_deref(),
            config,
        ),
        Command::MakeTestset {
            corpus,
            output,
            seed,
            levels,
            ..
        } => make_testset(
            &corpus.input,
            &output,
            seed,
            levels.levels.as_deref(),
            config,
        ),
        Command::InfillBaseline { examples, output } => infill_baseline(&examples, &output, config),
        Command::Evaluate {
            examples,
            outputs,
            output,
            table,
        } => evaluate(&examples, &outputs, &output, table.as_deref(), config),
        Command::Vocab => {
            let text: String = vocabulary()
                .into_iter()
                .map(|t| format!("{}\t{t}\n", t.id()))
                .collect();
            write_output(None, text.as_bytes())
        }
    }
}

fn load_levels(path: Option<&Path>) -> Result<LevelThresholds> {
    let Some(path) = path else {
        return Ok(LevelThresholds::default());
    };
    let text = String::from_utf8(read_bytes(path)?)
        .map_err(|_| InputError(format!("{} is not UTF-8", path.display())))?;
    LevelThresholds::from_json(&text)
        .map_err(|e| InputError(format!("{}: {e}", path.display())).into())
}

fn report_path(report: Option<PathBuf>, output: &Path, command: &str) -> PathBuf {
    report.unwrap_or_else(|| output.join(format!("{command}_report.jsonl")))
}

fn non_empty_corpus(input: &Path) -> Result<Vec<CorpusFile>> {
    let files = list_corpus(input)?;
    if files.is_empty() {
        return Err(InputError(format!("no .mid/.midi files under {}", input.display())).into());
    }
    Ok(files)
}

#[derive(Serialize)]
struct ScanLine {
    schema_version: u32,
    path: String,
    status: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    resolution: Option<u32>,
    tracks: usize,
    notes: usize,
    measures: usize,
    grid_score: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    error: Option<String>,
}

fn scan(input: &Path, output: Option<&Path>) -> Result<()> {
    let files = list_corpus(input)?;
    let lines: Vec<ScanLine> = files
        .par_iter()
        .map(|f| {
            let mut line = ScanLine {
                schema_version: SCHEMA_VERSION,
                path: f.id.clone(),
                status: "ok",
                resolution: None,
                tracks: 0,
                notes: 0,
                measures: 0,
                grid_score: None,
                error: None,
            };
            match read_song(&f.path) {
                Ok(song) => {
                    line.resolution = Some(song.resolution);
                    line.tracks = song.tracks.len();
                    line.notes = song.note_count();
                    line.measures = MeasureMap::compute(&song).map_or(0, |m| m.len());
                    line.grid_score = grid_alignment_score(&song);
                }
                Err(e) => {
                    line.status = "error";
                    line.error = Some(format!("{e:#}"));
                }
            }
            line
        })
        .collect();
    let bad = lines.iter().filter(|l| l.status == "error").count();
    eprintln!("scanned {} files, {bad} unreadable", lines.len());
    write_output(output, &jsonl(&lines)?)
}

#[derive(Serialize)]
struct FilterLine {
    schema_version: u32,
    path: String,
    score: Option<f64>,
    verdict: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    reason: Option<String>,
}

fn filter(
    input: &Path,
    output: &Path,
    report: Option<PathBuf>,
    config: &PipelineConfig,
) -> Result<()> {
    let files = non_empty_corpus(input)?;
    let threshold = config.filter.grid_threshold;
    let lines: Vec<FilterLine> = files
        .par_iter()
        .map(|f| -> Result<FilterLine> {
            let (score, verdict, reason) = match read_song(&f.path) {
                Err(e) => (None, "error", Some(format!("{e:#}"))),
                Ok(song) => {
                    let score = grid_alignment_score(&song);
                    if is_off_grid(score, threshold) {
                        let why = if score.is_none() { "empty" } else { "off grid" };
                        (score, "removed", Some(why.to_string()))
                    } else {
                        write_file(&output.join(&f.id), &read_bytes(&f.path)?)?;
                        (score, "kept", None)
                    }
                }
            };
            Ok(FilterLine {
                schema_version: SCHEMA_VERSION,
                path: f.id.clone(),
                score,
                verdict,
                reason,
            })
        })
        .collect::<Result<_>>()?;
    let kept = lines.iter().filter(|l| l.verdict == "kept").count();
    let removed = lines.iter().filter(|l| l.verdict == "removed").count();
    eprintln!(
        "filter: kept {kept}, removed {removed}, unreadable {}",
        lines.len() - kept - removed
    );
    write_file(&report_path(report, output, "filter"), &jsonl(&lines)?)
}

#[derive(Serialize)]
struct DedupeLine {
    schema_version: u32,
    path: String,
    hash: Option<String>,
    verdict: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    duplicate_of: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    error: Option<String>,
}

fn dedupe_corpus(input: &Path, output: &Path, report: Option<PathBuf>) -> Result<()> {
    let files = non_empty_corpus(input)?;
    let fingerprints: Vec<Result<_, String>> = files
        .par_iter()
        .map(|f| {
            let song = read_song(&f.path).map_err(|e| format!("{e:#}"))?;
            onset_chromagram_fingerprint(&song).map_err(|e| e.to_string())
        })
        .collect();
    let ok: Vec<usize> = (0..files.len())
        .filter(|&i| fingerprints[i].is_ok())
        .collect();
    let verdicts = dedupe(
        ok.iter()
            .map(|&i| fingerprints[i].as_ref().expect("filtered to ok")),
    );
    let mut by_file: HashMap<usize, DedupeVerdict> = HashMap::new();
    for (&i, v) in ok.iter().zip(verdicts) {
        by_file.insert(i, v);
    }

    let mut lines = Vec::with_capacity(files.len());
    for (i, f) in files.iter().enumerate() {
        let mut line = DedupeLine {
            schema_version: SCHEMA_VERSION,
            path: f.id.clone(),
            hash: None,
            verdict: "error",
            duplicate_of: None,
            error: None,
        };
        match &fingerprints[i] {
            Err(e) => line.error = Some(e.clone()),
            Ok(fp) => {
                line.hash = Some(fp.hash_hex());
                match by_file[&i] {
                    DedupeVerdict::Kept => {
                        line.verdict = "kept";
                        write_file(&output.join(&f.id), &read_bytes(&f.path)?)?;
                    }
                    DedupeVerdict::DuplicateOf(k) => {
                        line.verdict = "duplicate";
                        line.duplicate_of = Some(files[ok[k]].id.clone());
                    }
                }
            }
        }
        lines.push(line);
    }
    let kept = lines.iter().filter(|l| l.verdict == "kept").count();
    let dupes = lines.iter().filter(|l| l.verdict == "duplicate").count();
    eprintln!(
        "dedupe: kept {kept}, duplicates {dupes}, unreadable {}",
        lines.len() - kept - dupes
    );
    write_file(&report_path(report, output, "dedupe"), &jsonl(&lines)?)
}

#[derive(Serialize)]
struct PreprocessLine {
    schema_version: u32,
    path: String,
    status: &'static str,
    tracks: usize,
    measures: usize,
    notes: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    error: Option<String>,
}

fn preprocess(
    input: &Path,
    output: &Path,
    report: Option<PathBuf>,
    config: &PipelineConfig,
) -> Result<()> {
    let files = non_empty_corpus(input)?;
    let pc = config.preprocess_config()?;
    let lines: Vec<PreprocessLine> = files
        .par_iter()
        .map(|f| -> Result<PreprocessLine> {
            let mut line = PreprocessLine {
                schema_version: SCHEMA_VERSION,
                path: f.id.clone(),
                status: "ok",
                tracks: 0,
                measures: 0,
                notes: 0,
                error: None,
            };
            let result = read_song(&f.path).and_then(|song| Ok(preprocess_file(&song, &pc)?));
            match result {
                Ok(q) => {
                    line.tracks = q.tracks().len();
                    line.measures = q.measures().len();
                    line.notes = q.song().note_count();
                    let bytes = write_smf(q.song()).context("writing preprocessed song")?;
                    write_file(&output_path(output, &f.id), &bytes)?;
                }
                Err(e) => {
                    let empty = e
                        .downcast_ref::<PreprocessError>()
                        .is_some_and(|p| matches!(p, PreprocessError::Empty));
                    line.status = if empty { "empty" } else { "error" };
                    line.error = Some(format!("{e:#}"));
                }
            }
            Ok(line)
        })
        .collect::<Result<_>>()?;
    let ok = lines.iter().filter(|l| l.status == "ok").count();
    eprintln!("preprocess: {ok} of {} files written", lines.len());
    write_file(&report_path(report, output, "preprocess"), &jsonl(&lines)?)
}

/// Loads every file of a preprocessed corpus, skipping unreadable ones.
fn load_corpus(input: &Path) -> Result<Vec<(CorpusFile, QuantizedSong)>> {
    let files = non_empty_corpus(input)?;
    let loaded: Vec<Option<(CorpusFile, QuantizedSong)>> = files
        .into_par_iter()
        .map(|f| match read_quantized(&f.path) {
            Ok(q) => Some((f, q)),
            Err(e) => {
                warn!("skipping {}: {e:#}", f.id);
                None
            }
        })
        .collect();
    let songs: Vec<_> = loaded.into_iter().flatten().collect();
    if songs.is_empty() {
        return Err(InputError(format!("no readable MIDI files under {}", input.display())).into());
    }
    Ok(songs)
}

fn learn_levels(input: &Path, output: Option<&Path>) -> Result<()> {
    let songs = load_corpus(input)?;
    let thresholds = learn_level_thresholds(songs.iter().map(|(_, q)| q))
        .map_err(|e| InputError(format!("learning levels from {}: {e}", input.display())))?;
    info!("learned levels from {} files", songs.len());
    write_output(output, format!("{}\n", thresholds.to_json()).as_bytes())
}

fn tokenize(
    input: &Path,
    output: Option<&Path>,
    full: bool,
    levels: Option<&Path>,
    config: &PipelineConfig,
) -> Result<()> {
    let thresholds = load_levels(levels)?;
    let bytes = read_input(input)?;
    let song = parse_smf(&bytes).map_err(|e| InputError(format!("{}: {e}", input.display())))?;
    let q = if full {
        preprocess_file(&song, &config.preprocess_config()?)
            .map_err(|e| InputError(format!("{}: {e}", input.display())))?
    } else {
        QuantizedSong::new(song.clone())
            .or_else(|_| QuantizedSong::quantize(&song))
            .map_err(|e| InputError(format!("{}: {e}", input.display())))?
    };
    let tokens = encode(&q, &thresholds)
        .map_err(|e| InputError(format!("{}: {e} (try --preprocess)", input.display())))?;
    write_output(output, format!("{tokens}\n").as_bytes())
}

fn detokenize(input: &Path, output: Option<&Path>, levels: Option<&Path>) -> Result<()> {
    let thresholds = load_levels(levels)?;
    let text = String::from_utf8(read_input(input)?)
        .map_err(|_| InputError("token input is not UTF-8".into()))?;
    let tokens = TokenSeq::parse_indexed(text.trim())
        .map_err(|(i, e)| InputError(format!("token {i}: {e}")))?;
    let q = decode(&tokens, &thresholds).map_err(|e| InputError(e.to_string()))?;
    let bytes = write_smf(q.song()).context("writing MIDI")?;
    write_output(output, &bytes)
}

/// Runs `per_file` with a child generator of `seed` per file index and
/// writes the examples in corpus order.
fn build_examples<F>(input: &Path, output: &Path, seed: u64, what: &str, per_file: F) -> Result<()>
where
    F: Fn(&CorpusFile, &QuantizedSong, RandomSource) -> Result<Vec<InfillExample>> + Sync,
{
    let songs = load_corpus(input)?;
    let base = RandomSource::new(seed);
    let results: Vec<Vec<InfillExample>> = songs
        .par_iter()
        .enumerate()
        .map(|(i, (f, q))| match per_file(f, q, base.split(i as u64)) {
            Ok(v) => v,
            Err(e) => {
                warn!("{}: {e:#}", f.id);
                Vec::new()
            }
        })
        .collect();
    let examples: Vec<&InfillExample> = results.iter().flatten().collect();
    eprintln!(
        "{what}: {} examples from {} files",
        examples.len(),
        songs.len()
    );
    write_file(output, &jsonl(examples)?)
}

fn build_pretrain(
    input: &Path,
    output: &Path,
    seed: u64,
    levels: Option<&Path>,
    config: &PipelineConfig,
) -> Result<()> {
    let thresholds = load_levels(levels)?;
    build_examples(input, output, seed, "build-pretrain", |f, q, mut rng| {
        Ok(build_pretrain_examples(
            q,
            &f.id,
            config.pretrain.token_limit,
            &mut rng,
            &config.dataset,
            &thresholds,
        )?)
    })
}

fn build_finetune(
    input: &Path,
    output: &Path,
    seed: u64,
    levels: Option<&Path>,
    config: &PipelineConfig,
) -> Result<()> {
    let thresholds = load_levels(levels)?;
    build_examples(input, output, seed, "build-finetune", |f, q, mut rng| {
        let mut out = Vec::new();
        for k in 0..config.finetune.examples_per_file {
            if let Some(ex) =
                sample_finetune_example(q, &f.id, k, &mut rng, &config.dataset, &thresholds)?
            {
                out.push(ex);
            }
        }
        Ok(out)
    })
}

fn make_testset(
    input: &Path,
    output: &Path,
    seed: u64,
    levels: Option<&Path>,
    config: &PipelineConfig,
) -> Result<()> {
    let thresholds = load_levels(levels)?;
    let tasks: Vec<TestTask> = config
        .testset
        .tasks
        .iter()
        .map(|t| t.parse().map_err(InputError))
        .collect::<Result<_, _>>()?;
    build_examples(input, output, seed, "make-testset", |f, q, rng| {
        let mut out = Vec::new();
        for (j, &task) in tasks.iter().enumerate() {
            let mut task_rng = rng.split(j as u64);
            if let Some(ex) = make_test_example(
                q,
                &f.id,
                task,
                &mut task_rng,
                &config.testset.options,
                &thresholds,
            )? {
                out.push(ex);
            }
        }
        Ok(out)
    })
}

fn infill_baseline(examples: &Path, output: &Path, config: &PipelineConfig) -> Result<()> {
    let examples: Vec<InfillExample> = read_jsonl(examples)?;
    let outputs: Vec<SystemOutput> = examples
        .par_iter()
        .map(|ex| {
            let seq = run_chunked(ex, config.eval.chunk_limit, baseline_infill)
                .map_err(|e| InputError(format!("example {}: {e}", ex.id)))?;
            Ok(SystemOutput {
                id: ex.id.clone(),
                output: seq.to_string(),
            })
        })
        .collect::<Result<_>>()?;
    eprintln!("infill-baseline: answered {} prompts", outputs.len());
    write_file(output, &jsonl(&outputs)?)
}

fn evaluate(
    examples: &Path,
    outputs: &Path,
    output: &Path,
    table: Option<&Path>,
    config: &PipelineConfig,
) -> Result<()> {
    let examples: Vec<InfillExample> = read_jsonl(examples)?;
    let lines: Vec<SystemOutput> = read_jsonl(outputs)?;
    let mut by_id: HashMap<String, String> = HashMap::with_capacity(lines.len());
    for line in lines {
        if by_id.insert(line.id.clone(), line.output).is_some() {
            warn!("output for {} given twice; keeping the last", line.id);
        }
    }
    if config.strict_eval {
        for ex in &examples {
            let odd = masked_measures(ex)
                .map_err(|e| InputError(format!("example {}: {e}", ex.id)))?
                .values()
                .any(|&l| l != 96);
            if odd {
                warn!(
                    "{}: masked measure not in 4/4; groove uses that measure's own position count",
                    ex.id
                );
            }
        }
    }
    let report = evaluate_corpus(&examples, &by_id).map_err(|e| InputError(e.to_string()))?;
    let flagged: usize = report.tasks.values().map(|t| t.flagged).sum();
    if flagged > 0 {
        warn!("{flagged} outputs were missing or undecodable and scored 0");
    }
    let mut json = serde_json::to_vec(&report).context("serializing report")?;
    json.push(b'\n');
    write_file(output, &json)?;
    let text = report.render_table();
    if let Some(path) = table {
        write_file(path, text.as_bytes())?;
    }
    write_output(None, text.as_bytes())
}
