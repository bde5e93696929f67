//! Run configuration, config fingerprinting, and the run manifest.
//!
//! The manifest embeds the resolved configuration so every artifact is
//! self-describing; the fingerprint guards resumed runs against silent
//! hyperparameter drift.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::PipelineError;
use crate::judge::JudgeConfig;
use crate::mining::MiningConfig;
use crate::proposer::ProposerConfig;
use crate::selection::RetentionConfig;
use crate::synthworld::WorldSpec;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolverConfig {
    /// Weight C on the logistic loss term.
    pub loss_weight: f64,
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            loss_weight: 1.0,
            tolerance: crate::solver::DEFAULT_TOLERANCE,
            max_iterations: crate::solver::DEFAULT_MAX_ITERATIONS,
        }
    }
}

/// Which backends a run talks to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum BackendChoice {
    /// OpenAI-compatible HTTP endpoints from the judge/proposer configs.
    Remote,
    /// The planted synthetic world (no network).
    #[default]
    Synth,
}

/// Pair files for remote runs.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DataPaths {
    pub train_file: PathBuf,
    pub valid_file: PathBuf,
    /// Pre-generated seed rubric pool; seeds are generated from the train
    /// pairs when absent.
    pub seed_rubrics_file: Option<PathBuf>,
}

/// Synthetic data source: one world, split train/valid in generation order.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SynthDataConfig {
    pub spec: WorldSpec,
    pub train_pairs: usize,
}

impl Default for SynthDataConfig {
    fn default() -> Self {
        Self {
            spec: WorldSpec {
                num_true_rubrics: 10,
                true_weights: vec![1.0, 0.9, 0.8, 0.7, 0.6, 0.5, 0.45, 0.4, 0.35, 0.3],
                num_distractors: 40,
                num_pairs: 384,
                label_noise: 0.10,
                score_noise: 0.05,
                rng_seed: 42,
                seed_release_fraction: 0.6,
                min_margin: 0.5,
            },
            train_pairs: 256,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PipelineConfig {
    /// Refinement rounds R.
    pub rounds: u32,
    pub rng_seed: u64,
    pub checkpoint_dir: PathBuf,
    /// Score cache location; defaults to `<checkpoint_dir>/score_cache.jsonl`.
    pub cache_path: Option<PathBuf>,
    pub retention: RetentionConfig<f64>,
    pub solver: SolverConfig,
    pub mining: MiningConfig<f64>,
    pub judge: JudgeConfig,
    pub proposer: ProposerConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            rounds: 10,
            rng_seed: 42,
            checkpoint_dir: PathBuf::from("runs/default"),
            cache_path: None,
            retention: RetentionConfig::default(),
            solver: SolverConfig::default(),
            mining: MiningConfig::default(),
            judge: JudgeConfig::default(),
            proposer: ProposerConfig::default(),
        }
    }
}

impl PipelineConfig {
    pub fn cache_path(&self) -> PathBuf {
        self.cache_path
            .clone()
            .unwrap_or_else(|| self.checkpoint_dir.join("score_cache.jsonl"))
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        if self.rounds < 1 {
            return Err(PipelineError::InvalidConfig("rounds must be >= 1".into()));
        }
        self.mining
            .validate()
            .map_err(|e| PipelineError::InvalidConfig(e.to_string()))?;
        self.judge
            .validate()
            .map_err(|e| PipelineError::InvalidConfig(e.to_string()))?;
        Ok(())
    }
}

/// Everything one `refine`/`synth-run` invocation needs.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunConfig {
    pub pipeline: PipelineConfig,
    pub backend: BackendChoice,
    pub data: Option<DataPaths>,
    pub world: Option<SynthDataConfig>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            pipeline: PipelineConfig::default(),
            backend: BackendChoice::Synth,
            data: None,
            world: Some(SynthDataConfig::default()),
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let text = std::fs::read_to_string(path).map_err(|e| PipelineError::Io {
            path: path.display().to_string(),
            source: e,
        })?;
        toml::from_str(&text).map_err(|e| PipelineError::Parse {
            path: path.display().to_string(),
            line: 0,
            message: e.to_string(),
        })
    }

    pub fn save(&self, path: &Path) -> Result<(), PipelineError> {
        let text = toml::to_string_pretty(self).expect("config serializes");
        super::io::write_atomic(path, text.as_bytes())
    }

    /// Deterministic hash of the resolved configuration.
    pub fn fingerprint(&self) -> String {
        let canonical = serde_json::to_string(self).expect("config serializes");
        let digest = Sha256::digest(canonical.as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        self.pipeline.validate()?;
        match self.backend {
            BackendChoice::Remote if self.data.is_none() => Err(PipelineError::InvalidConfig(
                "remote backend requires [data] train/valid files".into(),
            )),
            BackendChoice::Synth if self.world.is_none() => Err(PipelineError::InvalidConfig(
                "synth backend requires a [world] section".into(),
            )),
            _ => Ok(()),
        }
    }
}

pub const MANIFEST_FORMAT_VERSION: u32 = 1;

/// Written at run start; every artifact of the run traces back to it.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub format_version: u32,
    pub config_fingerprint: String,
    pub seed: u64,
    pub rounds: u32,
    pub train_pairs: usize,
    pub valid_pairs: usize,
    pub top_n: usize,
    pub zero_threshold: f64,
    pub retention_mode: crate::selection::RetentionMode,
    pub solver_loss_weight: f64,
    pub hard_pairs_per_round: usize,
    pub margin_percentile: f64,
    pub reward_quantile: f64,
    pub stale_cap: u32,
    pub judge_temperature: f64,
    pub judge_max_output_tokens: u32,
    pub proposer_temperature: f64,
    pub proposer_thinking_budget: Option<u32>,
    /// The full resolved configuration.
    pub config: RunConfig,
}

impl RunManifest {
    pub fn new(config: &RunConfig, train_pairs: usize, valid_pairs: usize) -> Self {
        let p = &config.pipeline;
        Self {
            format_version: MANIFEST_FORMAT_VERSION,
            config_fingerprint: config.fingerprint(),
            seed: p.rng_seed,
            rounds: p.rounds,
            train_pairs,
            valid_pairs,
            top_n: p.retention.top_n,
            zero_threshold: p.retention.zero_threshold,
            retention_mode: p.retention.mode,
            solver_loss_weight: p.solver.loss_weight,
            hard_pairs_per_round: p.mining.hard_pairs_per_round,
            margin_percentile: p.mining.margin_percentile,
            reward_quantile: p.mining.reward_quantile,
            stale_cap: p.mining.stale_cap,
            judge_temperature: p.judge.temperature,
            judge_max_output_tokens: p.judge.max_output_tokens,
            proposer_temperature: p.proposer.temperature,
            proposer_thinking_budget: p.proposer.thinking_budget,
            config: config.clone(),
        }
    }

    pub fn write(&self, path: &Path) -> Result<(), PipelineError> {
        let mut text = serde_json::to_string_pretty(self).expect("manifest serializes");
        text.push('\n');
        super::io::write_atomic(path, text.as_bytes())
    }

    pub fn read(path: &Path) -> Result<Self, PipelineError> {
        let text = std::fs::read_to_string(path).map_err(|e| PipelineError::Io {
            path: path.display().to_string(),
            source: e,
        })?;
        serde_json::from_str(&text).map_err(|e| PipelineError::Parse {
            path: path.display().to_string(),
            line: 0,
            message: e.to_string(),
        })
    }
}
