//! Per-example records and per-task aggregates.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::prompt::{chunk_prompt, decode_infill, merge_chunk_outputs, parse_prompt};
use super::{groove_similarity, note_f1, pch_entropy_diff, EvalError};
use crate::dataset::InfillExample;
use crate::tokens::TokenSeq;

pub const REPORT_SCHEMA_VERSION: u32 = 1;

/// One line of system output: the target-format text for an example id.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SystemOutput {
    pub id: String,
    pub output: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub id: String,
    pub task: String,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// Absent when no masked measure holds a pitched note on either side.
    pub entropy_diff: Option<f64>,
    /// Absent for flagged records.
    pub groove_sim: Option<f64>,
    pub masks: usize,
    /// The output was missing or could not be decoded; scored f1 = 0.
    pub flagged: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// Population mean and standard deviation over `count` values.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Stat {
    pub mean: f64,
    pub std: f64,
    pub count: usize,
}

impl Stat {
    pub fn of(values: impl IntoIterator<Item = f64>) -> Stat {
        let values: Vec<f64> = values.into_iter().collect();
        if values.is_empty() {
            return Stat::default();
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        Stat {
            mean,
            std: var.sqrt(),
            count: values.len(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskSummary {
    pub examples: usize,
    pub flagged: usize,
    pub precision: Stat,
    pub recall: Stat,
    pub f1: Stat,
    pub entropy_diff: Stat,
    pub groove_sim: Stat,
}

impl TaskSummary {
    fn from_records(records: &[&EvalRecord]) -> Self {
        Self {
            examples: records.len(),
            flagged: records.iter().filter(|r| r.flagged).count(),
            precision: Stat::of(records.iter().map(|r| r.precision)),
            recall: Stat::of(records.iter().map(|r| r.recall)),
            f1: Stat::of(records.iter().map(|r| r.f1)),
            entropy_diff: Stat::of(records.iter().filter_map(|r| r.entropy_diff)),
            groove_sim: Stat::of(records.iter().filter_map(|r| r.groove_sim)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub schema_version: u32,
    pub tasks: BTreeMap<String, TaskSummary>,
    pub records: Vec<EvalRecord>,
}

impl EvalReport {
    pub fn from_records(records: Vec<EvalRecord>) -> Self {
        let mut grouped: BTreeMap<String, Vec<&EvalRecord>> = BTreeMap::new();
        for r in &records {
            grouped.entry(r.task.clone()).or_default().push(r);
        }
        let tasks = grouped
            .into_iter()
            .map(|(task, rs)| (task, TaskSummary::from_records(&rs)))
            .collect();
        Self {
            schema_version: REPORT_SCHEMA_VERSION,
            tasks,
            records,
        }
    }

    /// Aligned text table, one row per task, cells as `mean ± (std)`.
    pub fn render_table(&self) -> String {
        let cell = |s: &Stat| {
            if s.count == 0 {
                "-".to_string()
            } else {
                format!("{:.4} ± ({:.4})", s.mean, s.std)
            }
        };
        let header = [
            "task",
            "n",
            "flagged",
            "note F1",
            "PCH entropy diff",
            "groove sim",
        ];
        let mut rows: Vec<[String; 6]> = vec![header.map(String::from)];
        for (task, s) in &self.tasks {
            rows.push([
                task.clone(),
                s.examples.to_string(),
                s.flagged.to_string(),
                cell(&s.f1),
                cell(&s.entropy_diff),
                cell(&s.groove_sim),
            ]);
        }
        let mut widths = [0usize; 6];
        for row in &rows {
            for (w, c) in widths.iter_mut().zip(row) {
                *w = (*w).max(c.chars().count());
            }
        }
        let mut out = String::new();
        for row in &rows {
            let line: Vec<String> = row
                .iter()
                .zip(widths)
                .map(|(c, w)| format!("{c}{}", " ".repeat(w - c.chars().count())))
                .collect();
            let _ = writeln!(out, "{}", line.join("  ").trim_end());
        }
        out
    }
}

/// Slice-relative masked measures with their lengths.
pub fn masked_measures(example: &InfillExample) -> Result<BTreeMap<usize, u32>, EvalError> {
    let measures = parse_prompt(&example.input)?;
    example
        .coords
        .iter()
        .map(|&(_, m)| {
            measures.get(m).map(|pm| (m, pm.length)).ok_or_else(|| {
                EvalError::Output(format!("coordinate measure {m} outside the prompt"))
            })
        })
        .collect()
}

fn task_name(example: &InfillExample) -> String {
    example.meta.task.clone().unwrap_or_else(|| {
        serde_json::to_value(example.meta.kind)
            .ok()
            .and_then(|v| v.as_str().map(String::from))
            .unwrap_or_default()
    })
}

/// Scores `output` (target-format text) against the example's own target.
/// A missing or undecodable output yields a flagged record with f1 = 0.
/// Errors only if the example itself is malformed.
pub fn score_example(
    example: &InfillExample,
    output: Option<&str>,
) -> Result<EvalRecord, EvalError> {
    let truth = decode_infill(example, &example.target)?;
    let masked = masked_measures(example)?;
    let mut record = EvalRecord {
        id: example.id.clone(),
        task: task_name(example),
        precision: 0.0,
        recall: 0.0,
        f1: 0.0,
        entropy_diff: None,
        groove_sim: None,
        masks: example.mask_count(),
        flagged: false,
        error: None,
    };
    let generated = match output {
        None => Err("no output".to_string()),
        Some(text) => text
            .parse::<TokenSeq>()
            .map_err(|e| e.to_string())
            .and_then(|seq| decode_infill(example, &seq).map_err(|e| e.to_string())),
    };
    match generated {
        Ok(generated) => {
            let f = note_f1(&generated, &truth);
            record.precision = f.precision;
            record.recall = f.recall;
            record.f1 = f.f1;
            record.entropy_diff = pch_entropy_diff(&generated, &truth);
            record.groove_sim = groove_similarity(&generated, &truth, &masked);
        }
        Err(e) => {
            record.flagged = true;
            record.error = Some(e);
        }
    }
    Ok(record)
}

/// Scores every example against `outputs` keyed by example id.
pub fn evaluate_corpus(
    examples: &[InfillExample],
    outputs: &HashMap<String, String>,
) -> Result<EvalReport, EvalError> {
    let records = examples
        .iter()
        .map(|ex| score_example(ex, outputs.get(&ex.id).map(String::as_str)))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(EvalReport::from_records(records))
}

/// Runs `system` on `limit`-token chunks of a long prompt and reassembles the
/// answers under the original sentinel ids.
pub fn run_chunked<F>(
    example: &InfillExample,
    limit: usize,
    mut system: F,
) -> Result<TokenSeq, EvalError>
where
    F: FnMut(&InfillExample) -> Result<TokenSeq, EvalError>,
{
    let chunks = chunk_prompt(example, limit)?;
    let outputs = chunks
        .iter()
        .map(|c| system(&c.example))
        .collect::<Result<Vec<_>, _>>()?;
    merge_chunk_outputs(&chunks, &outputs)
}
