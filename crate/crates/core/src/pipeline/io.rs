//! On-disk formats: preference pair files, rubric pools, rubric-set
//! artifacts, metric traces, and the seed-selection inputs.
//!
//! Line-delimited files are JSONL; structured documents are pretty-printed
//! JSON with a `format_version`. Writers are deterministic byte for byte
//! given equal values.

use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::PipelineError;
use crate::num::Real;
use crate::types::{PreferencePair, Rubric, WeightedRubric, WeightedRubricSet};

pub const RUBRIC_SET_FORMAT_VERSION: u32 = 1;

/// Reads newline-delimited JSON records with per-line diagnostics.
fn read_jsonl<T: serde::de::DeserializeOwned>(path: &Path) -> Result<Vec<T>, PipelineError> {
    let file = File::open(path).map_err(|e| PipelineError::Io {
        path: path.display().to_string(),
        source: e,
    })?;
    let mut records = Vec::new();
    for (line_no, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| PipelineError::Io {
            path: path.display().to_string(),
            source: e,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let record = serde_json::from_str(&line).map_err(|e| PipelineError::Parse {
            path: path.display().to_string(),
            line: line_no + 1,
            message: e.to_string(),
        })?;
        records.push(record);
    }
    Ok(records)
}

fn write_jsonl<T: Serialize>(path: &Path, records: &[T]) -> Result<(), PipelineError> {
    let mut out = String::new();
    for record in records {
        out.push_str(&serde_json::to_string(record).expect("record serializes"));
        out.push('\n');
    }
    write_atomic(path, out.as_bytes())
}

/// Write-then-rename so readers never observe a torn file.
pub(crate) fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), PipelineError> {
    let io_err = |e: std::io::Error| PipelineError::Io {
        path: path.display().to_string(),
        source: e,
    };
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent).map_err(io_err)?;
        }
    }
    let tmp = path.with_extension("tmp");
    {
        let mut file = File::create(&tmp).map_err(io_err)?;
        file.write_all(bytes).map_err(io_err)?;
        file.sync_all().map_err(io_err)?;
    }
    std::fs::rename(&tmp, path).map_err(io_err)
}

pub fn read_pairs(path: &Path) -> Result<Vec<PreferencePair>, PipelineError> {
    read_jsonl(path)
}

pub fn write_pairs(path: &Path, pairs: &[PreferencePair]) -> Result<(), PipelineError> {
    write_jsonl(path, pairs)
}

/// A rubric pool (no weights): the output of seed generation.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RubricPoolFile {
    pub format_version: u32,
    pub rubrics: Vec<Rubric>,
}

pub fn read_rubric_pool(path: &Path) -> Result<Vec<Rubric>, PipelineError> {
    let text = std::fs::read_to_string(path).map_err(|e| PipelineError::Io {
        path: path.display().to_string(),
        source: e,
    })?;
    let pool: RubricPoolFile = serde_json::from_str(&text).map_err(|e| PipelineError::Parse {
        path: path.display().to_string(),
        line: 0,
        message: e.to_string(),
    })?;
    Ok(pool.rubrics)
}

pub fn write_rubric_pool(path: &Path, rubrics: &[Rubric]) -> Result<(), PipelineError> {
    let pool = RubricPoolFile {
        format_version: RUBRIC_SET_FORMAT_VERSION,
        rubrics: rubrics.to_vec(),
    };
    let mut text = serde_json::to_string_pretty(&pool).expect("pool serializes");
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

/// One row of the rubric-set artifact.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct RubricSetRow {
    id: String,
    text: String,
    weight: f64,
    origin: crate::types::RubricOrigin,
    created_round: u32,
}

/// The artifact consumed by downstream reward emission.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct RubricSetFile {
    format_version: u32,
    round: u32,
    validation_accuracy: Option<f64>,
    rubrics: Vec<RubricSetRow>,
}

pub fn write_rubric_set(path: &Path, set: &WeightedRubricSet<f64>) -> Result<(), PipelineError> {
    let file = RubricSetFile {
        format_version: RUBRIC_SET_FORMAT_VERSION,
        round: set.round,
        validation_accuracy: set.validation_accuracy,
        rubrics: set
            .entries
            .iter()
            .map(|entry| RubricSetRow {
                id: entry.rubric.id.clone(),
                text: entry.rubric.text.clone(),
                weight: entry.weight,
                origin: entry.rubric.origin,
                created_round: entry.rubric.created_round,
            })
            .collect(),
    };
    let mut text = serde_json::to_string_pretty(&file).expect("rubric set serializes");
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

pub fn read_rubric_set(path: &Path) -> Result<WeightedRubricSet<f64>, PipelineError> {
    let text = std::fs::read_to_string(path).map_err(|e| PipelineError::Io {
        path: path.display().to_string(),
        source: e,
    })?;
    let file: RubricSetFile = serde_json::from_str(&text).map_err(|e| PipelineError::Parse {
        path: path.display().to_string(),
        line: 0,
        message: e.to_string(),
    })?;
    let mut set = WeightedRubricSet {
        entries: file
            .rubrics
            .into_iter()
            .map(|row| WeightedRubric {
                rubric: Rubric {
                    id: row.id,
                    text: row.text,
                    origin: row.origin,
                    created_round: row.created_round,
                },
                weight: row.weight,
            })
            .collect(),
        round: file.round,
        validation_accuracy: file.validation_accuracy,
    };
    // Weights were validated at write time; re-sort defensively after edits.
    crate::types::weighted_set_sort(&mut set.entries);
    Ok(set)
}

/// One per-round record of the metrics trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundMetrics {
    pub round: u32,
    pub working_set_size: usize,
    pub retained_size: usize,
    pub train_accuracy: f64,
    pub train_tie_adjusted: f64,
    pub validation_accuracy: f64,
    pub validation_tie_adjusted: f64,
    pub best_validation_accuracy: f64,
    pub mined_pairs: usize,
    pub proposed_rubrics: usize,
}

pub fn write_metrics(path: &Path, metrics: &[RoundMetrics]) -> Result<(), PipelineError> {
    write_jsonl(path, metrics)
}

pub fn read_metrics(path: &Path) -> Result<Vec<RoundMetrics>, PipelineError> {
    read_jsonl(path)
}

/// Seed-selection inputs: prompt embeddings and proxy margins per pair.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EmbeddingRecord {
    pub pair_id: String,
    pub vector: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MarginRecord {
    pub pair_id: String,
    pub margin: f64,
}

pub fn read_embeddings(path: &Path) -> Result<Vec<EmbeddingRecord>, PipelineError> {
    read_jsonl(path)
}

pub fn read_margins(path: &Path) -> Result<Vec<MarginRecord>, PipelineError> {
    read_jsonl(path)
}

pub fn write_embeddings(path: &Path, records: &[EmbeddingRecord]) -> Result<(), PipelineError> {
    write_jsonl(path, records)
}

pub fn write_margins(path: &Path, records: &[MarginRecord]) -> Result<(), PipelineError> {
    write_jsonl(path, records)
}

/// Per-rubric diagnostics attached to an evaluation report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerRubricStats<F: Real> {
    pub rubric_id: String,
    pub text: String,
    pub weight: F,
    /// Mean score differential of this rubric over the evaluated pairs.
    pub mean_delta: F,
}
