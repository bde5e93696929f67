//! Round checkpoints: one structured file per round plus the run manifest.
//! Each checkpoint carries everything the next round needs, so a resumed run
//! replays no judge calls and no proposals.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::PipelineError;
use crate::proposer::ProposalRecord;
use crate::types::{Rubric, RoundState, WeightedRubricSet};

pub const CHECKPOINT_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CheckpointRecord {
    pub format_version: u32,
    pub state: RoundState<f64>,
    /// Proposal provenance for this round.
    pub proposals: Vec<ProposalRecord>,
    /// The accepted novel rubrics, in acceptance order (these plus the
    /// retained set form the next round's working set).
    pub new_rubrics: Vec<Rubric>,
    /// Hard-pair selection counts after this round's mining.
    pub selection_counts: BTreeMap<String, u32>,
    /// Best-so-far tracking at the end of this round.
    pub best_round: Option<u32>,
    pub best_accuracy: f64,
    pub best_set: WeightedRubricSet<f64>,
}

pub fn round_path(dir: &Path, round: u32) -> PathBuf {
    dir.join(format!("round_{round:04}.json"))
}

pub fn manifest_path(dir: &Path) -> PathBuf {
    dir.join("manifest.json")
}

pub fn write_checkpoint(dir: &Path, record: &CheckpointRecord) -> Result<(), PipelineError> {
    let mut text = serde_json::to_string_pretty(record).expect("checkpoint serializes");
    text.push('\n');
    super::io::write_atomic(&round_path(dir, record.state.round), text.as_bytes())
}

pub fn read_checkpoint(dir: &Path, round: u32) -> Result<CheckpointRecord, PipelineError> {
    let path = round_path(dir, round);
    let text = std::fs::read_to_string(&path).map_err(|e| PipelineError::Io {
        path: path.display().to_string(),
        source: e,
    })?;
    let record: CheckpointRecord =
        serde_json::from_str(&text).map_err(|e| PipelineError::CorruptCheckpoint {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
    record
        .state
        .validate()
        .map_err(|e| PipelineError::CorruptCheckpoint {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
    Ok(record)
}

/// Loads the longest clean prefix of round checkpoints. A corrupt file ends
/// the prefix with a warning; everything before it stays usable.
pub fn load_round_prefix(dir: &Path, max_rounds: u32) -> Vec<CheckpointRecord> {
    let mut records = Vec::new();
    for round in 0..max_rounds {
        if !round_path(dir, round).exists() {
            break;
        }
        match read_checkpoint(dir, round) {
            Ok(record) => records.push(record),
            Err(e) => {
                log::warn!("discarding checkpoint for round {round} and its successors: {e}");
                break;
            }
        }
    }
    records
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::PreferredSide;

    fn record(round: u32) -> CheckpointRecord {
        let rubric = Rubric::seed(&format!("rule for round {round}")).unwrap();
        let retained = WeightedRubricSet::new(vec![(rubric.clone(), 0.7)], round).unwrap();
        CheckpointRecord {
            format_version: CHECKPOINT_FORMAT_VERSION,
            state: RoundState {
                round,
                working_set: vec![rubric],
                retained: retained.clone(),
                mined_pair_ids: vec!["p1".into()],
                proposed_rubric_ids: vec![],
                train_accuracy: 0.8,
                validation_accuracy: 0.75,
            },
            proposals: vec![],
            new_rubrics: vec![],
            selection_counts: BTreeMap::from([("p1".to_string(), 1)]),
            best_round: Some(round),
            best_accuracy: 0.75,
            best_set: retained,
        }
    }

    #[test]
    fn checkpoints_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let rec = record(0);
        write_checkpoint(dir.path(), &rec).unwrap();
        let loaded = read_checkpoint(dir.path(), 0).unwrap();
        assert_eq!(loaded.state, rec.state);
        assert_eq!(loaded.selection_counts, rec.selection_counts);
    }

    #[test]
    fn corrupt_checkpoint_ends_the_prefix() {
        let dir = tempfile::tempdir().unwrap();
        write_checkpoint(dir.path(), &record(0)).unwrap();
        write_checkpoint(dir.path(), &record(1)).unwrap();
        std::fs::write(round_path(dir.path(), 1), "{ not json").unwrap();
        write_checkpoint(dir.path(), &record(2)).unwrap();
        let prefix = load_round_prefix(dir.path(), 10);
        assert_eq!(prefix.len(), 1);
        assert_eq!(prefix[0].state.round, 0);
        let _ = PreferredSide::A;
    }
}
