//! `trackfill`: MIDI corpus pipeline from raw files to infilling datasets and
//! evaluation reports.

mod commands;
mod config;
mod files;

use std::fmt;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};

use config::PipelineConfig;

/// An error caused by the user's input: bad flag, missing or malformed file.
#[derive(Debug)]
pub struct InputError(pub String);

impl fmt::Display for InputError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for InputError {}

#[derive(Debug, Parser)]
#[command(
    name = "trackfill",
    version,
    about = "MIDI corpus curation and multi-track infilling datasets"
)]
struct Cli {
    /// TOML configuration file; flags override its values.
    #[arg(long, global = true, env = "TRACKFILL_CONFIG")]
    config: Option<PathBuf>,

    /// Print the effective configuration as TOML and exit.
    #[arg(long, global = true)]
    dump_config: bool,

    /// Worker threads for per-file work (0 = one per core).
    #[arg(long, short = 'j', global = true, default_value_t = 0)]
    jobs: usize,

    /// More log output (repeatable).
    #[arg(long, short = 'v', global = true, action = clap::ArgAction::Count)]
    verbose: u8,

    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Debug, Args)]
struct Corpus {
    /// Input corpus directory (or a single MIDI file).
    input: PathBuf,
}

#[derive(Debug, Args)]
struct CorpusToCorpus {
    /// Input corpus directory (or a single MIDI file).
    input: PathBuf,
    /// Output corpus directory.
    output: PathBuf,
    /// JSONL report path [default: OUTPUT/<command>_report.jsonl].
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct Levels {
    /// Level thresholds learned by `learn-levels` [default: built-in].
    #[arg(long, env = "TRACKFILL_LEVELS")]
    levels: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Per-file statistics for a corpus.
    Scan {
        #[command(flatten)]
        corpus: Corpus,
        /// JSONL report path [default: stdout].
        #[arg(long, short)]
        output: Option<PathBuf>,
    },
    /// Drop files whose onsets ignore the beat grid.
    Filter {
        #[command(flatten)]
        io: CorpusToCorpus,
        /// Grid alignment score above which a file is removed.
        #[arg(long)]
        threshold: Option<f64>,
    },
    /// Keep one file per onset-chromagram fingerprint.
    Dedupe {
        #[command(flatten)]
        io: CorpusToCorpus,
    },
    /// Normalize tracks, remove delay duplicates and quantize to the 24-tick grid.
    Preprocess {
        #[command(flatten)]
        io: CorpusToCorpus,
        /// Overlap ratio at or above which a shifted track counts as a duplicate.
        #[arg(long)]
        overlap_threshold: Option<f64>,
        /// Largest shift tried, in 24-tpq ticks.
        #[arg(long)]
        max_shift: Option<u32>,
        /// `source=target` drum pitch map file.
        #[arg(long, env = "TRACKFILL_DRUM_MAP")]
        drum_map: Option<PathBuf>,
    },
    /// Learn dynamics and tempo level thresholds from a preprocessed corpus.
    LearnLevels {
        #[command(flatten)]
        corpus: Corpus,
        /// Output JSON path [default: stdout].
        #[arg(long, short)]
        output: Option<PathBuf>,
    },
    /// Encode one MIDI file as a token line.
    Tokenize {
        /// MIDI file, or `-` for stdin.
        #[arg(default_value = "-")]
        input: PathBuf,
        #[arg(long, short)]
        output: Option<PathBuf>,
        /// Run the full preprocessing first instead of plain quantization.
        #[arg(long)]
        preprocess: bool,
        #[command(flatten)]
        levels: Levels,
    },
    /// Decode a token line into a MIDI file.
    Detokenize {
        /// Token text file, or `-` for stdin.
        #[arg(default_value = "-")]
        input: PathBuf,
        /// Output MIDI path, or `-` for stdout.
        #[arg(long, short)]
        output: Option<PathBuf>,
        #[command(flatten)]
        levels: Levels,
    },
    /// Span-corruption pretraining examples.
    BuildPretrain {
        #[command(flatten)]
        corpus: Corpus,
        #[arg(long, short)]
        output: PathBuf,
        #[arg(long, required = true)]
        seed: u64,
        /// Token limit per chunk.
        #[arg(long)]
        limit: Option<usize>,
        #[command(flatten)]
        levels: Levels,
    },
    /// Track-measure infilling examples with randomized mask patterns.
    BuildFinetune {
        #[command(flatten)]
        corpus: Corpus,
        #[arg(long, short)]
        output: PathBuf,
        #[arg(long, required = true)]
        seed: u64,
        #[arg(long)]
        examples_per_file: Option<usize>,
        #[command(flatten)]
        levels: Levels,
    },
    /// Evaluation prompts with random, track and last-bar masks.
    MakeTestset {
        #[command(flatten)]
        corpus: Corpus,
        #[arg(long, short)]
        output: PathBuf,
        #[arg(long, required = true)]
        seed: u64,
        /// Comma-separated tasks such as `random-8,track-16`.
        #[arg(long, value_delimiter = ',')]
        tasks: Option<Vec<String>>,
        #[command(flatten)]
        levels: Levels,
    },
    /// Answer every prompt by copying the nearest visible measure of the same track.
    InfillBaseline {
        /// Example JSONL.
        examples: PathBuf,
        #[arg(long, short)]
        output: PathBuf,
    },
    /// Score system outputs against example targets.
    Evaluate {
        /// Example JSONL.
        examples: PathBuf,
        /// System output JSONL with `id` and `output` fields.
        outputs: PathBuf,
        /// Report JSON path.
        #[arg(long, short)]
        output: PathBuf,
        /// Also write the text table here.
        #[arg(long)]
        table: Option<PathBuf>,
    },
    /// Print the token vocabulary with ids.
    Vocab,
}

impl Command {
    /// Folds flag values into the configuration.
    fn apply(&self, config: &mut PipelineConfig) {
        match self {
            Command::Filter {
                threshold: Some(t), ..
            } => config.filter.grid_threshold = *t,
            Command::Preprocess {
                overlap_threshold,
                max_shift,
                drum_map,
                ..
            } => {
                if let Some(t) = overlap_threshold {
                    config.preprocess.overlap_threshold = *t;
                }
                if let Some(s) = max_shift {
                    config.preprocess.max_shift_ticks = *s;
                }
                if let Some(p) = drum_map {
                    config.preprocess.drum_map = Some(p.clone());
                }
            }
            Command::BuildPretrain { seed, limit, .. } => {
                config.seed = Some(*seed);
                if let Some(l) = limit {
                    config.pretrain.token_limit = *l;
                }
            }
            Command::BuildFinetune {
                seed,
                examples_per_file,
                ..
            } => {
                config.seed = Some(*seed);
                if let Some(n) = examples_per_file {
                    config.finetune.examples_per_file = *n;
                }
            }
            Command::MakeTestset { seed, tasks, .. } => {
                config.seed = Some(*seed);
                if let Some(t) = tasks {
                    config.testset.tasks = t.clone();
                }
            }
            _ => {}
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    let mut config = PipelineConfig::load(cli.config.as_deref())?;
    if let Some(command) = &cli.command {
        command.apply(&mut config);
    }
    config.validate()?;
    if cli.dump_config {
        print!("{}", config.to_toml()?);
        return Ok(());
    }
    let Some(command) = cli.command else {
        return Err(InputError("no command given; see `trackfill --help`".into()).into());
    };
    if cli.jobs > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(cli.jobs)
            .build_global()?;
    }
    commands::dispatch(command, &config)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = e.print();
                return ExitCode::SUCCESS;
            }
            let text = e.to_string();
            let summary: Vec<&str> = text
                .lines()
                .take_while(|l| !l.trim().is_empty() && !l.starts_with("Usage:"))
                .map(str::trim)
                .collect();
            eprintln!("{} (see --help)", summary.join(" "));
            return ExitCode::from(1);
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();

    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.chain().any(|c| c.is::<InputError>()) {
                ExitCode::from(1)
            } else {
                ExitCode::from(2)
            }
        }
    }
}
