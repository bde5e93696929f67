//! End-to-end refinement: score, fit, retain, validate, track best, mine,
//! propose, union — with per-round checkpoints, resume, and deterministic
//! artifacts.

pub mod checkpoint;
pub mod config;
pub mod io;

pub use config::{
    BackendChoice, DataPaths, PipelineConfig, RunConfig, RunManifest, SolverConfig,
    SynthDataConfig,
};
pub use io::{PerRubricStats, RoundMetrics};

use std::collections::{BTreeMap, HashMap};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::judge::{JudgeBackend, JudgeError, ScoreCache, Scorer};
use crate::mining::{partition, phase_weights, sample_hard_pairs, MisrankedPair};
use crate::proposer::{Proposer, ProposerBackend, ProposerError};
use crate::selection::{evaluate, retain_top_n, RetentionMode, SelectionError};
use crate::solver::{fit, SolveProblem, SolverError};
use crate::types::{PreferencePair, Rubric, RoundState, ScoreMatrix, WeightedRubricSet};
use crate::util::stable_seed;
use checkpoint::CheckpointRecord;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error("working set is empty at round {round}; nothing to score or fit")]
    EmptyWorkingSet { round: u32 },

    #[error("train and valid splits overlap (pair {0})")]
    OverlappingSplits(String),

    #[error("seed rubric pool is empty; the pipeline cannot start")]
    EmptySeedPool,

    #[error("config fingerprint mismatch: checkpoint has {found}, current config is {current}")]
    ConfigDrift { found: String, current: String },

    #[error("no usable checkpoints under {0}")]
    NothingToResume(String),

    #[error("corrupt checkpoint {path}: {message}")]
    CorruptCheckpoint { path: String, message: String },

    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },

    #[error(transparent)]
    Judge(#[from] JudgeError),

    #[error(transparent)]
    Solver(#[from] SolverError),

    #[error(transparent)]
    Selection(#[from] SelectionError),

    #[error(transparent)]
    Proposer(#[from] ProposerError),

    #[error(transparent)]
    Mining(#[from] crate::mining::MiningError),

    #[error(transparent)]
    Type(#[from] crate::types::TypeError),
}

/// Final output of a refinement run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunArtifacts {
    pub best_set: WeightedRubricSet<f64>,
    pub best_round: u32,
    pub rounds: Vec<RoundState<f64>>,
    pub metrics: Vec<RoundMetrics>,
}

/// Full evaluation of a rubric set over a pair list.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvaluateSetReport {
    pub strict_accuracy: f64,
    pub tie_adjusted_accuracy: f64,
    pub pair_count: usize,
    pub misranked_ids: Vec<String>,
    pub per_rubric: Vec<PerRubricStats<f64>>,
}

/// A configured pipeline bound to its backends.
pub struct Pipeline {
    config: RunConfig,
    scorer: Scorer,
    proposer: Proposer,
}

/// Best-so-far tracking across rounds. Accuracy starts below any real value
/// so round 0 always takes the lead.
#[derive(Debug, Clone)]
struct BestTrack {
    round: Option<u32>,
    accuracy: f64,
    set: WeightedRubricSet<f64>,
}

impl BestTrack {
    fn new() -> Self {
        Self {
            round: None,
            accuracy: -1.0,
            set: WeightedRubricSet::empty(0),
        }
    }
}

impl Pipeline {
    pub fn new(
        config: RunConfig,
        judge_backend: Arc<dyn JudgeBackend>,
        proposer_backend: Arc<dyn ProposerBackend>,
    ) -> Result<Self, PipelineError> {
        config.validate()?;
        let cache = ScoreCache::open(&config.pipeline.cache_path())?;
        let scorer = Scorer::new(
            judge_backend,
            cache,
            config.pipeline.judge.max_parallel_requests,
        );
        let proposer = Proposer::new(proposer_backend, &config.pipeline.proposer);
        Ok(Self {
            config,
            scorer,
            proposer,
        })
    }

    pub fn config(&self) -> &RunConfig {
        &self.config
    }

    pub fn scorer(&self) -> &Scorer {
        &self.scorer
    }

    pub fn proposer(&self) -> &Proposer {
        &self.proposer
    }

    /// Generates the seed rubric pool from the training pairs.
    pub fn generate_seed_rubrics(
        &self,
        train: &[PreferencePair],
    ) -> Result<Vec<Rubric>, PipelineError> {
        let (rubrics, _records) = self.proposer.generate_seed_rubrics(train)?;
        Ok(rubrics)
    }

    /// Runs the full refinement loop from round 0.
    pub fn run_refinement(
        &self,
        train: &[PreferencePair],
        valid: &[PreferencePair],
        seed_rubrics: Vec<Rubric>,
    ) -> Result<RunArtifacts, PipelineError> {
        self.run_refinement_with_stop(train, valid, seed_rubrics, None)
    }

    /// Like [`Self::run_refinement`] but stops after checkpointing round
    /// `stop_after_round` — the crash point the resume tests exercise.
    pub fn run_refinement_with_stop(
        &self,
        train: &[PreferencePair],
        valid: &[PreferencePair],
        seed_rubrics: Vec<Rubric>,
        stop_after_round: Option<u32>,
    ) -> Result<RunArtifacts, PipelineError> {
        check_splits(train, valid)?;
        let working_set = dedup_pool(seed_rubrics);
        if working_set.is_empty() {
            return Err(PipelineError::EmptySeedPool);
        }

        let dir = self.config.pipeline.checkpoint_dir.clone();
        std::fs::create_dir_all(&dir).map_err(|e| PipelineError::Io {
            path: dir.display().to_string(),
            source: e,
        })?;
        RunManifest::new(&self.config, train.len(), valid.len())
            .write(&checkpoint::manifest_path(&dir))?;

        self.run_rounds(
            train,
            valid,
            working_set,
            0,
            BestTrack::new(),
            HashMap::new(),
            Vec::new(),
            Vec::new(),
            stop_after_round,
        )
    }

    /// Continues a checkpointed run. Refuses on config drift; a corrupt
    /// checkpoint falls back to the previous round with a warning.
    pub fn resume(
        &self,
        train: &[PreferencePair],
        valid: &[PreferencePair],
    ) -> Result<RunArtifacts, PipelineError> {
        check_splits(train, valid)?;
        let dir = self.config.pipeline.checkpoint_dir.clone();
        let manifest = RunManifest::read(&checkpoint::manifest_path(&dir))?;
        let current = self.config.fingerprint();
        if manifest.config_fingerprint != current {
            return Err(PipelineError::ConfigDrift {
                found: manifest.config_fingerprint,
                current,
            });
        }

        let records = checkpoint::load_round_prefix(&dir, self.config.pipeline.rounds);
        let last = records
            .last()
            .ok_or_else(|| PipelineError::NothingToResume(dir.display().to_string()))?;

        let best = BestTrack {
            round: last.best_round,
            accuracy: last.best_accuracy,
            set: last.best_set.clone(),
        };
        let counts: HashMap<String, u32> = last.selection_counts.clone().into_iter().collect();
        let next_round = last.state.round + 1;
        let mut next_working: Vec<Rubric> = last.state.retained.rubrics().cloned().collect();
        next_working.extend(last.new_rubrics.iter().cloned());

        let mut states: Vec<RoundState<f64>> = Vec::new();
        let mut metrics = Vec::new();
        for record in &records {
            metrics.push(round_metrics(record));
            states.push(record.state.clone());
        }

        if next_round >= self.config.pipeline.rounds {
            return Ok(finish(best, states, metrics));
        }
        self.run_rounds(
            train,
            valid,
            next_working,
            next_round,
            best,
            counts,
            states,
            metrics,
            None,
        )
    }

    #[allow(clippy::too_many_arguments)]
    fn run_rounds(
        &self,
        train: &[PreferencePair],
        valid: &[PreferencePair],
        mut working_set: Vec<Rubric>,
        start_round: u32,
        mut best: BestTrack,
        mut selection_counts: HashMap<String, u32>,
        mut states: Vec<RoundState<f64>>,
        mut metrics: Vec<RoundMetrics>,
        stop_after_round: Option<u32>,
    ) -> Result<RunArtifacts, PipelineError> {
        let config = &self.config.pipeline;
        let total_rounds = config.rounds;
        let dir = &config.checkpoint_dir;

        for round in start_round..total_rounds {
            if working_set.is_empty() {
                return Err(PipelineError::EmptyWorkingSet { round });
            }

            // Score and fit the working set on the training pairs.
            let matrix = self.scorer.score_matrix(train, &working_set)?;
            let labels: Vec<f64> = train.iter().map(|p| p.label.sign()).collect();
            let problem = SolveProblem {
                features: matrix.delta.clone(),
                labels,
                loss_weight: config.solver.loss_weight,
                nonnegative: config.retention.mode == RetentionMode::NonnegativeFit,
                tolerance: config.solver.tolerance,
                max_iterations: config.solver.max_iterations,
            };
            let solve = fit(&problem)?;
            if !solve.converged {
                log::warn!(
                    "round {round}: solver hit the iteration cap (kkt residual {:.3e})",
                    solve.kkt_residual
                );
            }
            let mut retained = retain_top_n(&solve.weights, &working_set, &config.retention, round)?;

            // Evaluate on train (for mining) and valid (for best tracking);
            // validation pairs are scored against the retained rubrics only.
            let train_report = evaluate(&retained, train, &matrix)?;
            let retained_rubrics: Vec<Rubric> = retained.rubrics().cloned().collect();
            let valid_matrix = self.scorer.score_matrix(valid, &retained_rubrics)?;
            let valid_report = evaluate(&retained, valid, &valid_matrix)?;
            retained.validation_accuracy = Some(valid_report.strict_accuracy);

            if valid_report.strict_accuracy > best.accuracy {
                best = BestTrack {
                    round: Some(round),
                    accuracy: valid_report.strict_accuracy,
                    set: retained.clone(),
                };
            }

            // Mine hard pairs and propose new rubrics for every round but
            // the last.
            let mut mined_ids = Vec::new();
            let mut proposals = Vec::new();
            let mut new_rubrics = Vec::new();
            if round < total_rounds - 1 {
                let misranked = misranked_details(&retained, train, &matrix, &train_report);
                let all_rewards = image_reward_population(&retained, &matrix);
                let mut mining_config = config.mining.clone();
                mining_config.rng_seed = round_seed(config.rng_seed, round);
                let buckets = partition(&misranked, &all_rewards, &mining_config)?;
                let weights = phase_weights(round, total_rounds)?;
                mined_ids =
                    sample_hard_pairs(&buckets, weights, &mining_config, &mut selection_counts)?;

                let by_id: HashMap<&str, &PreferencePair> =
                    train.iter().map(|p| (p.id.as_str(), p)).collect();
                let mined_pairs: Vec<PreferencePair> = mined_ids
                    .iter()
                    .filter_map(|id| by_id.get(id.as_str()).copied().cloned())
                    .collect();
                let (accepted, records) =
                    self.proposer
                        .propose_batch(&mined_pairs, &retained, &working_set, round)?;
                proposals = records;
                new_rubrics = accepted;
            }

            let state = RoundState {
                round,
                working_set: working_set.clone(),
                retained: retained.clone(),
                mined_pair_ids: mined_ids,
                proposed_rubric_ids: new_rubrics.iter().map(|r| r.id.clone()).collect(),
                train_accuracy: train_report.strict_accuracy,
                validation_accuracy: valid_report.strict_accuracy,
            };
            let record = CheckpointRecord {
                format_version: checkpoint::CHECKPOINT_FORMAT_VERSION,
                state: state.clone(),
                proposals,
                new_rubrics: new_rubrics.clone(),
                selection_counts: selection_counts
                    .iter()
                    .map(|(k, v)| (k.clone(), *v))
                    .collect::<BTreeMap<_, _>>(),
                best_round: best.round,
                best_accuracy: best.accuracy,
                best_set: best.set.clone(),
            };
            checkpoint::write_checkpoint(dir, &record)?;

            metrics.push(RoundMetrics {
                round,
                working_set_size: state.working_set.len(),
                retained_size: retained.len(),
                train_accuracy: train_report.strict_accuracy,
                train_tie_adjusted: train_report.tie_adjusted_accuracy,
                validation_accuracy: valid_report.strict_accuracy,
                validation_tie_adjusted: valid_report.tie_adjusted_accuracy,
                best_validation_accuracy: best.accuracy,
                mined_pairs: state.mined_pair_ids.len(),
                proposed_rubrics: state.proposed_rubric_ids.len(),
            });
            states.push(state);

            if stop_after_round == Some(round) {
                return Ok(finish(best, states, metrics));
            }

            // Working-set update: retained ∪ new proposals.
            let mut next: Vec<Rubric> = retained.rubrics().cloned().collect();
            next.extend(new_rubrics);
            working_set = next;
        }

        Ok(finish(best, states, metrics))
    }

    /// Scores `pairs` against the set's rubrics and reports accuracies plus
    /// per-rubric marginal statistics.
    pub fn evaluate_set(
        &self,
        set: &WeightedRubricSet<f64>,
        pairs: &[PreferencePair],
    ) -> Result<EvaluateSetReport, PipelineError> {
        let rubrics: Vec<Rubric> = set.rubrics().cloned().collect();
        let matrix = self.scorer.score_matrix(pairs, &rubrics)?;
        let report = evaluate(set, pairs, &matrix)?;
        let per_rubric = set
            .entries
            .iter()
            .map(|entry| {
                let col = matrix
                    .rubric_column(&entry.rubric.id)
                    .expect("matrix was built from the set");
                let mean_delta = matrix.delta.column(col).iter().sum::<f64>()
                    / (pairs.len() as f64);
                PerRubricStats {
                    rubric_id: entry.rubric.id.clone(),
                    text: entry.rubric.text.clone(),
                    weight: entry.weight,
                    mean_delta,
                }
            })
            .collect();
        Ok(EvaluateSetReport {
            strict_accuracy: report.strict_accuracy,
            tie_adjusted_accuracy: report.tie_adjusted_accuracy,
            pair_count: pairs.len(),
            misranked_ids: report.misranked_ids,
            per_rubric,
        })
    }
}

fn check_splits(
    train: &[PreferencePair],
    valid: &[PreferencePair],
) -> Result<(), PipelineError> {
    for t in train {
        if valid.iter().any(|v| v.id == t.id) {
            return Err(PipelineError::OverlappingSplits(t.id.clone()));
        }
    }
    Ok(())
}

/// Removes duplicate rubric ids, keeping first occurrences.
fn dedup_pool(rubrics: Vec<Rubric>) -> Vec<Rubric> {
    let mut seen = std::collections::HashSet::new();
    rubrics
        .into_iter()
        .filter(|r| seen.insert(r.id.clone()))
        .collect()
}

fn finish(
    best: BestTrack,
    states: Vec<RoundState<f64>>,
    metrics: Vec<RoundMetrics>,
) -> RunArtifacts {
    RunArtifacts {
        best_set: best.set,
        best_round: best.round.unwrap_or(0),
        rounds: states,
        metrics,
    }
}

fn round_metrics(record: &CheckpointRecord) -> RoundMetrics {
    RoundMetrics {
        round: record.state.round,
        working_set_size: record.state.working_set.len(),
        retained_size: record.state.retained.len(),
        train_accuracy: record.state.train_accuracy,
        train_tie_adjusted: f64::NAN,
        validation_accuracy: record.state.validation_accuracy,
        validation_tie_adjusted: f64::NAN,
        best_validation_accuracy: record.best_accuracy,
        mined_pairs: record.state.mined_pair_ids.len(),
        proposed_rubrics: record.state.proposed_rubric_ids.len(),
    }
}

/// Per-round mining seed derived from the master seed, so resumed runs draw
/// the same samples without carrying rng state across rounds.
fn round_seed(master: u64, round: u32) -> u64 {
    stable_seed(&[&master.to_string(), "mining-round", &round.to_string()])
}

/// Misranked pairs annotated with margins and per-side rewards under the
/// retained set.
fn misranked_details(
    retained: &WeightedRubricSet<f64>,
    train: &[PreferencePair],
    matrix: &ScoreMatrix<f64>,
    report: &crate::selection::EvalReport<f64>,
) -> Vec<MisrankedPair<f64>> {
    let columns: Vec<usize> = retained
        .entries
        .iter()
        .map(|e| {
            matrix
                .rubric_column(&e.rubric.id)
                .expect("retained rubrics come from this matrix")
        })
        .collect();
    let mut out = Vec::with_capacity(report.misranked_ids.len());
    for misranked_id in &report.misranked_ids {
        let row_index = train
            .iter()
            .position(|p| &p.id == misranked_id)
            .expect("misranked ids come from the train split");
        let row = matrix
            .pair_row(misranked_id)
            .expect("train pairs are matrix rows");
        let margin = report.margins[row_index];
        let mut reward_a = 0.0;
        let mut reward_b = 0.0;
        for (entry, &col) in retained.entries.iter().zip(columns.iter()) {
            reward_a += entry.weight * matrix.s_a[(row, col)];
            reward_b += entry.weight * matrix.s_b[(row, col)];
        }
        out.push(MisrankedPair {
            pair_id: misranked_id.clone(),
            margin,
            reward_a,
            reward_b,
        });
    }
    out
}

/// Per-image rewards over the full training population (both sides).
fn image_reward_population(
    retained: &WeightedRubricSet<f64>,
    matrix: &ScoreMatrix<f64>,
) -> Vec<f64> {
    let columns: Vec<(f64, usize)> = retained
        .entries
        .iter()
        .map(|e| {
            (
                e.weight,
                matrix
                    .rubric_column(&e.rubric.id)
                    .expect("retained rubrics come from this matrix"),
            )
        })
        .collect();
    let mut rewards = Vec::with_capacity(matrix.num_pairs() * 2);
    for row in 0..matrix.num_pairs() {
        let mut a = 0.0;
        let mut b = 0.0;
        for &(weight, col) in &columns {
            a += weight * matrix.s_a[(row, col)];
            b += weight * matrix.s_b[(row, col)];
        }
        rewards.push(a);
        rewards.push(b);
    }
    rewards
}
