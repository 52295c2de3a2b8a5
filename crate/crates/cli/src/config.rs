//! Effective pipeline configuration: defaults, TOML file, then flags.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use trackfill::corpus::DEFAULT_GRID_THRESHOLD;
use trackfill::dataset::{DatasetConfig, LONG_LIMIT, SHORT_LIMIT};
use trackfill::eval::{TestSetConfig, STANDARD_TASKS};
use trackfill::preprocess::{
    DrumSimplificationMap, PreprocessConfig, DEFAULT_MAX_SHIFT_TICKS, DEFAULT_OVERLAP_THRESHOLD,
};

use crate::InputError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
#[derive(Default)]
pub struct PipelineConfig {
    /// Seed of the current randomized run; informational, set from `--seed`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    /// Warn wherever evaluation departs from the standard 4/4 setup.
    pub strict_eval: bool,
    pub filter: FilterSection,
    pub preprocess: PreprocessSection,
    pub pretrain: PretrainSection,
    pub finetune: FinetuneSection,
    pub dataset: DatasetConfig,
    pub testset: TestSetSection,
    pub eval: EvalSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FilterSection {
    pub grid_threshold: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PreprocessSection {
    pub overlap_threshold: f64,
    pub max_shift_ticks: u32,
    /// `source=target` drum pitch map; the bundled map when unset.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub drum_map: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PretrainSection {
    pub token_limit: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FinetuneSection {
    pub examples_per_file: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TestSetSection {
    pub tasks: Vec<String>,
    #[serde(flatten)]
    pub options: TestSetConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSection {
    /// Prompts longer than this are split at measure boundaries.
    pub chunk_limit: usize,
}

impl Default for FilterSection {
    fn default() -> Self {
        Self {
            grid_threshold: DEFAULT_GRID_THRESHOLD,
        }
    }
}

impl Default for PreprocessSection {
    fn default() -> Self {
        Self {
            overlap_threshold: DEFAULT_OVERLAP_THRESHOLD,
            max_shift_ticks: DEFAULT_MAX_SHIFT_TICKS,
            drum_map: None,
        }
    }
}

impl Default for PretrainSection {
    fn default() -> Self {
        Self {
            token_limit: SHORT_LIMIT,
        }
    }
}

impl Default for FinetuneSection {
    fn default() -> Self {
        Self {
            examples_per_file: 4,
        }
    }
}

impl Default for TestSetSection {
    fn default() -> Self {
        Self {
            tasks: STANDARD_TASKS.iter().map(ToString::to_string).collect(),
            options: TestSetConfig::default(),
        }
    }
}

impl Default for EvalSection {
    fn default() -> Self {
        Self {
            chunk_limit: LONG_LIMIT,
        }
    }
}

fn check_open_unit(name: &str, v: f64) -> Result<()> {
    if !(v > 0.0 && v < 1.0) {
        bail!(InputError(format!(
            "{name} must lie strictly between 0 and 1, got {v}"
        )));
    }
    Ok(())
}

fn check_probability(name: &str, v: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&v) {
        bail!(InputError(format!("{name} must lie in [0, 1], got {v}")));
    }
    Ok(())
}

fn check_positive(name: &str, v: usize) -> Result<()> {
    if v == 0 {
        bail!(InputError(format!("{name} must be positive")));
    }
    Ok(())
}

impl PipelineConfig {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path)
            .map_err(|e| InputError(format!("cannot read config {}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| {
            let msg = e.message().to_string();
            InputError(format!("config {}: {msg}", path.display())).into()
        })
    }

    pub fn validate(&self) -> Result<()> {
        check_open_unit("filter.grid_threshold", self.filter.grid_threshold)?;
        check_open_unit(
            "preprocess.overlap_threshold",
            self.preprocess.overlap_threshold,
        )?;
        check_positive("pretrain.token_limit", self.pretrain.token_limit)?;
        check_positive(
            "finetune.examples_per_file",
            self.finetune.examples_per_file,
        )?;
        check_positive("dataset.input_limit", self.dataset.input_limit)?;
        check_positive("dataset.target_limit", self.dataset.target_limit)?;
        check_positive("dataset.max_masks", self.dataset.max_masks)?;
        check_positive("eval.chunk_limit", self.eval.chunk_limit)?;
        check_probability("dataset.corruption_rate", self.dataset.corruption_rate)?;
        check_probability(
            "dataset.mono_poly_probability",
            self.dataset.mono_poly_probability,
        )?;
        check_probability(
            "dataset.truncation_probability",
            self.dataset.truncation_probability,
        )?;
        check_probability(
            "dataset.mask.random_probability",
            self.dataset.mask.random_probability,
        )?;
        check_probability(
            "testset.random_probability",
            self.testset.options.random_probability,
        )?;
        if self.dataset.transpose_min > self.dataset.transpose_max {
            bail!(InputError(
                "dataset.transpose_min exceeds transpose_max".into()
            ));
        }
        if self.dataset.mean_span_length < 1.0 {
            bail!(InputError(
                "dataset.mean_span_length must be at least 1".into()
            ));
        }
        if self.dataset.mask.pattern_weights.iter().all(|&w| w == 0) {
            bail!(InputError(
                "dataset.mask.pattern_weights are all zero".into()
            ));
        }
        for task in &self.testset.tasks {
            task.parse::<trackfill::eval::TestTask>()
                .map_err(|e| InputError(format!("testset.tasks: {e}")))?;
        }
        if self.strict_eval && !self.testset.options.require_common_time {
            log::warn!("strict_eval: test slices are normally restricted to 4/4");
        }
        Ok(())
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).context("serializing config")
    }

    pub fn preprocess_config(&self) -> Result<PreprocessConfig> {
        let drum_map = match &self.preprocess.drum_map {
            None => DrumSimplificationMap::default(),
            Some(path) => {
                let text = std::fs::read_to_string(path).map_err(|e| {
                    InputError(format!("cannot read drum map {}: {e}", path.display()))
                })?;
                text.parse()
                    .map_err(|e| InputError(format!("drum map {}: {e}", path.display())))?
            }
        };
        Ok(PreprocessConfig {
            overlap_threshold: self.preprocess.overlap_threshold,
            max_shift_ticks: self.preprocess.max_shift_ticks,
            drum_map,
        })
    }
}
