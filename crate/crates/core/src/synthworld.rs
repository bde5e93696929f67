//! Planted-ground-truth preference world.
//!
//! A world plants a small set of "true" rubrics with known positive weights.
//! Every pair's per-side latent satisfaction of each true rubric is a stable
//! hash of (world seed, pair id, side, rubric index), so pairs, labels,
//! judge scores, and proposals are pure functions of the spec — the whole
//! pipeline can be verified end to end with no external model.
//!
//! The judge backend returns noisy latents for planted rubrics and seeded
//! uninformative noise for everything else. The proposer backend releases a
//! fraction of the planted rubrics at seed time and lets hard-pair
//! refinement discover the rest: a hard pair's proposal samples one
//! still-missing planted rubric with probability proportional to its
//! contribution to that pair's true margin, plus a fresh distractor.

use std::collections::HashMap;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::judge::{JudgeBackend, JudgeError, JudgeRequest};
use crate::proposer::{ProposerBackend, ProposerError};
use crate::types::{PreferencePair, PreferredSide, Rubric, WeightedRubricSet};
use crate::util::{stable_seed, stable_unit};

#[derive(Debug, Error)]
pub enum WorldError {
    #[error("invalid world spec: {0}")]
    InvalidSpec(String),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WorldSpec {
    pub num_true_rubrics: usize,
    /// Positive weight per true rubric; length must equal
    /// `num_true_rubrics`.
    pub true_weights: Vec<f64>,
    pub num_distractors: usize,
    pub num_pairs: usize,
    /// Probability of flipping a pair's label (ε < 0.5 keeps labels
    /// informative).
    pub label_noise: f64,
    /// Standard deviation of the judge's score noise on planted rubrics.
    pub score_noise: f64,
    pub rng_seed: u64,
    /// Fraction of planted rubrics the seed stage releases; the rest must be
    /// discovered through refinement.
    #[serde(default = "default_seed_release_fraction")]
    pub seed_release_fraction: f64,
    /// Pairs whose |true margin| does not exceed this floor are redrawn, so
    /// judge score noise cannot flip their ranking.
    #[serde(default = "default_min_margin")]
    pub min_margin: f64,
}

fn default_seed_release_fraction() -> f64 {
    0.6
}

fn default_min_margin() -> f64 {
    0.5
}

impl WorldSpec {
    /// Spec sized for quick full-pipeline checks.
    pub fn small(seed: u64) -> Self {
        Self {
            num_true_rubrics: 4,
            true_weights: vec![1.0, 0.8, 0.6, 0.4],
            num_distractors: 8,
            num_pairs: 96,
            label_noise: 0.05,
            score_noise: 0.02,
            rng_seed: seed,
            seed_release_fraction: 0.6,
            min_margin: 0.5,
        }
    }

    pub fn validate(&self) -> Result<(), WorldError> {
        if self.num_true_rubrics == 0 {
            return Err(WorldError::InvalidSpec("need at least one true rubric".into()));
        }
        if self.true_weights.len() != self.num_true_rubrics {
            return Err(WorldError::InvalidSpec(format!(
                "{} weights for {} true rubrics",
                self.true_weights.len(),
                self.num_true_rubrics
            )));
        }
        if self.true_weights.iter().any(|&w| !(w > 0.0)) {
            return Err(WorldError::InvalidSpec("true weights must be positive".into()));
        }
        if !(0.0..0.5).contains(&self.label_noise) {
            return Err(WorldError::InvalidSpec("label noise must be in [0, 0.5)".into()));
        }
        if self.score_noise < 0.0 {
            return Err(WorldError::InvalidSpec("score noise must be >= 0".into()));
        }
        if !(0.0..=1.0).contains(&self.seed_release_fraction) {
            return Err(WorldError::InvalidSpec(
                "seed release fraction must be in [0, 1]".into(),
            ));
        }
        if self.min_margin < 0.0 {
            return Err(WorldError::InvalidSpec("min margin must be >= 0".into()));
        }
        Ok(())
    }
}

struct WorldCore {
    spec: WorldSpec,
    seed_tag: String,
    planted: Vec<Rubric>,
    planted_index: HashMap<String, usize>,
    distractors: Vec<Rubric>,
}

impl WorldCore {
    /// Latent satisfaction of planted rubric `j` on one side of a pair.
    /// Bimodal like a real yes/no judge: satisfied sides land in
    /// [0.85, 0.98], unsatisfied in [0.02, 0.15].
    fn latent(&self, pair_id: &str, side: PreferredSide, j: usize) -> f64 {
        let key = [
            &self.seed_tag,
            "latent",
            pair_id,
            side.as_str(),
            &j.to_string(),
        ];
        let satisfied = stable_unit(&key) < 0.5;
        let jitter = stable_unit(&[
            &self.seed_tag,
            "jitter",
            pair_id,
            side.as_str(),
            &j.to_string(),
        ]);
        if satisfied {
            0.85 + 0.13 * jitter
        } else {
            0.02 + 0.13 * jitter
        }
    }

    /// Signed true margin of a pair under the planted weights.
    fn true_margin(&self, pair_id: &str) -> f64 {
        (0..self.spec.num_true_rubrics)
            .map(|j| {
                self.spec.true_weights[j]
                    * (self.latent(pair_id, PreferredSide::A, j)
                        - self.latent(pair_id, PreferredSide::B, j))
            })
            .sum()
    }

    fn planted_text(&self, j: usize) -> String {
        format!("planted criterion {j} for world {}", self.spec.rng_seed)
    }

    fn distractor_text(&self, d: usize) -> String {
        format!("distractor criterion {d} for world {}", self.spec.rng_seed)
    }

    /// Whether planted rubric `j` is released during seed generation.
    fn seed_visible(&self, j: usize) -> bool {
        stable_unit(&[&self.seed_tag, "seedvis", &j.to_string()])
            < self.spec.seed_release_fraction
    }
}

/// A generated world: pairs plus the deterministic backends bound to it.
pub struct World {
    core: Arc<WorldCore>,
    pub pairs: Vec<PreferencePair>,
}

/// Builds the world: pairs with latent-derived labels (exact-zero margins
/// redrawn, labels flipped with probability ε) and the planted/distractor
/// rubric universe.
pub fn make_world(spec: &WorldSpec) -> Result<World, WorldError> {
    spec.validate()?;
    let seed_tag = format!("world-{}", spec.rng_seed);
    let planted: Vec<Rubric> = (0..spec.num_true_rubrics)
        .map(|j| {
            Rubric::seed(&format!("planted criterion {j} for world {}", spec.rng_seed))
                .expect("planted text is non-empty")
        })
        .collect();
    let planted_index = planted
        .iter()
        .enumerate()
        .map(|(j, r)| (r.id.clone(), j))
        .collect();
    let distractors: Vec<Rubric> = (0..spec.num_distractors)
        .map(|d| {
            Rubric::seed(&format!(
                "distractor criterion {d} for world {}",
                spec.rng_seed
            ))
            .expect("distractor text is non-empty")
        })
        .collect();
    let core = Arc::new(WorldCore {
        spec: spec.clone(),
        seed_tag,
        planted,
        planted_index,
        distractors,
    });

    let mut pairs = Vec::with_capacity(spec.num_pairs);
    for i in 0..spec.num_pairs {
        let mut attempt = 0u32;
        let (pair_id, margin) = loop {
            let pair_id = if attempt == 0 {
                format!("sp{i:04}")
            } else {
                format!("sp{i:04}r{attempt}")
            };
            let margin = core.true_margin(&pair_id);
            if margin.abs() > spec.min_margin {
                break (pair_id, margin);
            }
            attempt += 1;
        };
        let mut prefers_a = margin > 0.0;
        let flip = stable_unit(&[&core.seed_tag, "flip", &pair_id]) < spec.label_noise;
        if flip {
            prefers_a = !prefers_a;
        }
        pairs.push(PreferencePair::new(
            &pair_id,
            &format!("synthetic prompt {i} for world {}", spec.rng_seed),
            &format!("synth://{pair_id}/a"),
            &format!("synth://{pair_id}/b"),
            if prefers_a { PreferredSide::A } else { PreferredSide::B },
        ));
    }

    Ok(World { core, pairs })
}

impl World {
    pub fn spec(&self) -> &WorldSpec {
        &self.core.spec
    }

    pub fn planted(&self) -> &[Rubric] {
        &self.core.planted
    }

    pub fn distractors(&self) -> &[Rubric] {
        &self.core.distractors
    }

    pub fn planted_ids(&self) -> Vec<String> {
        self.core.planted.iter().map(|r| r.id.clone()).collect()
    }

    /// The ground-truth weighted set (true weights, canonical order).
    pub fn oracle_set(&self) -> WeightedRubricSet<f64> {
        WeightedRubricSet::new(
            self.core
                .planted
                .iter()
                .cloned()
                .zip(self.core.spec.true_weights.iter().copied())
                .collect(),
            0,
        )
        .expect("true weights are positive")
    }

    /// Disjoint train/valid split in generation order.
    pub fn split(&self, train: usize) -> (Vec<PreferencePair>, Vec<PreferencePair>) {
        let train = train.min(self.pairs.len());
        (
            self.pairs[..train].to_vec(),
            self.pairs[train..].to_vec(),
        )
    }

    pub fn judge_backend(&self) -> Arc<dyn JudgeBackend> {
        Arc::new(SynthJudge {
            core: Arc::clone(&self.core),
        })
    }

    pub fn proposer_backend(&self) -> Arc<dyn ProposerBackend> {
        Arc::new(SynthProposer {
            core: Arc::clone(&self.core),
        })
    }
}

/// Judge over the planted world: noisy latents for planted rubrics, seeded
/// uniform noise for any other rubric id.
pub struct SynthJudge {
    core: Arc<WorldCore>,
}

impl JudgeBackend for SynthJudge {
    fn score(&self, request: &JudgeRequest) -> Result<f64, JudgeError> {
        let score = match self.core.planted_index.get(&request.rubric_id) {
            Some(&j) => {
                let latent = self.core.latent(&request.pair_id, request.side, j);
                let sigma = self.core.spec.score_noise;
                if sigma > 0.0 {
                    let seed = stable_seed(&[
                        &self.core.seed_tag,
                        "noise",
                        &request.rubric_id,
                        &request.pair_id,
                        request.side.as_str(),
                    ]);
                    let mut rng = ChaCha8Rng::seed_from_u64(seed);
                    let normal = Normal::new(0.0, sigma)
                        .map_err(|e| JudgeError::Indeterminate(e.to_string()))?;
                    (latent + normal.sample(&mut rng)).clamp(0.0, 1.0)
                } else {
                    latent
                }
            }
            None => stable_unit(&[
                &self.core.seed_tag,
                "uninformative",
                &request.rubric_id,
                &request.pair_id,
                request.side.as_str(),
            ]),
        };
        Ok(score)
    }

    fn tag(&self) -> String {
        format!("synth:{}", self.core.spec.rng_seed)
    }
}

/// Proposer over the planted world. Seed extraction surfaces the pair's most
/// salient released planted rubric plus distractors; refinement extraction
/// releases missing planted rubrics in proportion to their contribution to
/// the hard pair's true margin.
pub struct SynthProposer {
    core: Arc<WorldCore>,
}

const SEED_CONTEXT: &str = "seed-analysis";
const FAILURE_CONTEXT: &str = "failure-analysis";

impl ProposerBackend for SynthProposer {
    fn vision_reason(&self, pair: &PreferencePair) -> Result<String, ProposerError> {
        Ok(format!("{SEED_CONTEXT} pair={}", pair.id))
    }

    fn extract_rules(
        &self,
        pair: &PreferencePair,
        context: &str,
    ) -> Result<Vec<String>, ProposerError> {
        if context.starts_with(SEED_CONTEXT) {
            Ok(self.seed_statements(pair))
        } else if let Some(rest) = context.strip_prefix(FAILURE_CONTEXT) {
            let retained_ids: Vec<&str> = rest
                .split_once("retained=")
                .map(|(_, ids)| ids.split(';').filter(|s| !s.is_empty()).collect())
                .unwrap_or_default();
            Ok(self.refinement_statements(pair, &retained_ids))
        } else {
            Err(ProposerError::Unavailable(format!(
                "unrecognized analysis context: {context:?}"
            )))
        }
    }

    fn merge_rules(&self, statements: &[String]) -> Result<Vec<String>, ProposerError> {
        Ok(statements.to_vec())
    }

    fn diagnose_failure(
        &self,
        pair: &PreferencePair,
        retained: &WeightedRubricSet<f64>,
    ) -> Result<String, ProposerError> {
        let ids: Vec<&str> = retained.entries.iter().map(|e| e.rubric.id.as_str()).collect();
        Ok(format!(
            "{FAILURE_CONTEXT} pair={} retained={}",
            pair.id,
            ids.join(";")
        ))
    }
}

impl SynthProposer {
    /// Seed stage: the most salient seed-visible planted dimension of this
    /// pair plus two distractor draws.
    fn seed_statements(&self, pair: &PreferencePair) -> Vec<String> {
        let core = &self.core;
        let mut best: Option<(f64, usize)> = None;
        for j in 0..core.spec.num_true_rubrics {
            if !core.seed_visible(j) {
                continue;
            }
            let salience = (core.spec.true_weights[j]
                * (core.latent(&pair.id, PreferredSide::A, j)
                    - core.latent(&pair.id, PreferredSide::B, j)))
            .abs();
            if best.map_or(true, |(s, _)| salience > s) {
                best = Some((salience, j));
            }
        }
        let mut statements = Vec::with_capacity(3);
        if let Some((_, j)) = best {
            statements.push(core.planted_text(j));
        }
        if core.spec.num_distractors > 0 {
            for draw in 0..2 {
                let pick = stable_seed(&[&core.seed_tag, "dseed", &pair.id, &draw.to_string()])
                    as usize
                    % core.spec.num_distractors;
                statements.push(core.distractor_text(pick));
            }
        }
        statements
    }

    /// Refinement stage: sample one missing planted rubric with probability
    /// proportional to its aligned contribution to the pair's true margin,
    /// plus one fresh distractor.
    fn refinement_statements(&self, pair: &PreferencePair, retained_ids: &[&str]) -> Vec<String> {
        let core = &self.core;
        let retained_fp = retained_ids.join(",");
        let margin = core.true_margin(&pair.id);
        let direction = if margin >= 0.0 { 1.0 } else { -1.0 };

        let mut candidates: Vec<(usize, f64)> = Vec::new();
        for (j, rubric) in core.planted.iter().enumerate() {
            if retained_ids.contains(&rubric.id.as_str()) {
                continue;
            }
            let contribution = direction
                * core.spec.true_weights[j]
                * (core.latent(&pair.id, PreferredSide::A, j)
                    - core.latent(&pair.id, PreferredSide::B, j));
            if contribution > 0.0 {
                candidates.push((j, contribution));
            }
        }

        let mut statements = Vec::with_capacity(2);
        if !candidates.is_empty() {
            let total: f64 = candidates.iter().map(|(_, c)| c).sum();
            let seed = stable_seed(&[&core.seed_tag, "release", &pair.id, &retained_fp]);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut draw = rng.gen_range(0.0..total);
            let mut chosen = candidates[candidates.len() - 1].0;
            for (j, contribution) in &candidates {
                if draw < *contribution {
                    chosen = *j;
                    break;
                }
                draw -= contribution;
            }
            statements.push(core.planted_text(chosen));
        }
        let fresh = stable_seed(&[&core.seed_tag, "fresh", &pair.id, &retained_fp]);
        statements.push(format!(
            "distractor criterion mined-{:08x} for world {}",
            fresh as u32, core.spec.rng_seed
        ));
        statements
    }
}
