//! Curriculum-bucketed hard-pair mining.
//!
//! Misranked pairs are split into three exclusive buckets — high-reward
//! wrong (both sides score above the reward quantile), wrong with small
//! margin (below the margin percentile), wrong with large margin — and
//! sampled with phase-dependent weights. Pairs mined too often are excluded
//! by the stale cap.

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::num::Real;

#[derive(Debug, Error)]
pub enum MiningError {
    #[error("round {round} out of range for {total_rounds} total rounds")]
    RoundOutOfRange { round: u32, total_rounds: u32 },

    #[error("invalid mining config: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MiningConfig<F: Real> {
    /// Hard pairs mined per round (K).
    pub hard_pairs_per_round: usize,
    /// Percentile of |margin| splitting small from large wrong pairs.
    pub margin_percentile: F,
    /// Quantile of the per-image reward population marking "high reward".
    pub reward_quantile: F,
    /// A pair selected this many times is excluded from further mining.
    pub stale_cap: u32,
    pub rng_seed: u64,
}

impl<F: Real> Default for MiningConfig<F> {
    fn default() -> Self {
        Self {
            hard_pairs_per_round: 16,
            margin_percentile: F::c(0.3),
            reward_quantile: F::c(0.7),
            stale_cap: 4,
            rng_seed: 42,
        }
    }
}

impl<F: Real> MiningConfig<F> {
    pub fn validate(&self) -> Result<(), MiningError> {
        if self.hard_pairs_per_round < 1 {
            return Err(MiningError::InvalidConfig("K must be >= 1".into()));
        }
        let in_open_unit =
            |v: F| v > F::zero() && v < F::one();
        if !in_open_unit(self.margin_percentile) || !in_open_unit(self.reward_quantile) {
            return Err(MiningError::InvalidConfig(
                "percentile and quantile must lie in (0, 1)".into(),
            ));
        }
        if self.stale_cap < 1 {
            return Err(MiningError::InvalidConfig("stale cap must be >= 1".into()));
        }
        Ok(())
    }
}

/// The three hard-pair categories.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Bucket {
    WrongSmall,
    WrongLarge,
    HighRewardWrong,
}

/// A misranked pair as the miner sees it: margin under the retained set and
/// per-side rewards.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MisrankedPair<F: Real> {
    pub pair_id: String,
    pub margin: F,
    pub reward_a: F,
    pub reward_b: F,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BucketAssignment<F: Real> {
    pub pair_id: String,
    pub bucket: Bucket,
    pub abs_margin: F,
    pub reward_a: F,
    pub reward_b: F,
}

/// Result of partitioning one round's misranked pairs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Buckets<F: Real> {
    pub assignments: Vec<BucketAssignment<F>>,
    /// Reward threshold (quantile of the full per-image reward population).
    pub reward_threshold: F,
    /// |margin| threshold (percentile over the misranked pairs).
    pub margin_threshold: F,
}

impl<F: Real> Buckets<F> {
    pub fn ids_in(&self, bucket: Bucket) -> Vec<&str> {
        self.assignments
            .iter()
            .filter(|a| a.bucket == bucket)
            .map(|a| a.pair_id.as_str())
            .collect()
    }

    pub fn is_empty(&self) -> bool {
        self.assignments.is_empty()
    }
}

/// Quantile with linear interpolation between order statistics
/// (`h = (n - 1) q`, interpolating sorted[floor(h)] toward the next value).
pub fn quantile<F: Real>(values: &[F], q: F) -> F {
    assert!(!values.is_empty(), "quantile of an empty slice");
    let mut sorted: Vec<F> = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite values"));
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let h = F::from_usize(n - 1).expect("count fits scalar") * q;
    let lo = h.floor();
    let idx = lo.to_usize().expect("index fits usize");
    if idx >= n - 1 {
        return sorted[n - 1];
    }
    let frac = h - lo;
    sorted[idx] + frac * (sorted[idx + 1] - sorted[idx])
}

/// Assigns each misranked pair to exactly one bucket. High-reward wrong
/// takes precedence; the remainder split on the |margin| percentile.
/// `all_image_rewards` is the per-image reward population over the full
/// training set (both sides), not just the misranked pairs.
pub fn partition<F: Real>(
    misranked: &[MisrankedPair<F>],
    all_image_rewards: &[F],
    config: &MiningConfig<F>,
) -> Result<Buckets<F>, MiningError> {
    config.validate()?;
    if misranked.is_empty() {
        return Ok(Buckets {
            assignments: Vec::new(),
            reward_threshold: F::zero(),
            margin_threshold: F::zero(),
        });
    }
    let reward_threshold = quantile(all_image_rewards, config.reward_quantile);
    let abs_margins: Vec<F> = misranked.iter().map(|p| p.margin.abs()).collect();
    let margin_threshold = quantile(&abs_margins, config.margin_percentile);

    let assignments = misranked
        .iter()
        .map(|pair| {
            let abs_margin = pair.margin.abs();
            let bucket = if pair.reward_a >= reward_threshold && pair.reward_b >= reward_threshold
            {
                Bucket::HighRewardWrong
            } else if abs_margin < margin_threshold {
                Bucket::WrongSmall
            } else {
                Bucket::WrongLarge
            };
            BucketAssignment {
                pair_id: pair.pair_id.clone(),
                bucket,
                abs_margin,
                reward_a: pair.reward_a,
                reward_b: pair.reward_b,
            }
        })
        .collect();

    Ok(Buckets {
        assignments,
        reward_threshold,
        margin_threshold,
    })
}

/// Phase-dependent sampling weights `(w_small, w_large, w_high)` for round
/// `r` of `total_rounds`. Early rounds skip the high-reward bucket; the
/// final round leans into it.
pub fn phase_weights<F: Real>(round: u32, total_rounds: u32) -> Result<(F, F, F), MiningError> {
    if round >= total_rounds {
        return Err(MiningError::RoundOutOfRange {
            round,
            total_rounds,
        });
    }
    let weights = if round < 3 {
        (0.6, 0.4, 0.0)
    } else if round < total_rounds - 1 {
        (0.5, 0.3, 0.2)
    } else {
        (0.3, 0.3, 0.4)
    };
    Ok((F::c(weights.0), F::c(weights.1), F::c(weights.2)))
}

/// Samples up to K hard pairs across the buckets.
///
/// Candidates at or above the stale cap are dropped first. Per-bucket
/// targets start at `round(w_b * K)`, are nudged to sum to K, then capacity
/// overflow is redistributed to buckets with spare candidates in proportion
/// to their weights (evenly when those weights are all zero). Within a
/// bucket, sampling is uniform without replacement over candidates sorted by
/// pair id. Every sampled pair's selection count is incremented.
pub fn sample_hard_pairs<F: Real>(
    buckets: &Buckets<F>,
    weights: (F, F, F),
    config: &MiningConfig<F>,
    selection_counts: &mut HashMap<String, u32>,
) -> Result<Vec<String>, MiningError> {
    config.validate()?;
    let order = [Bucket::WrongSmall, Bucket::WrongLarge, Bucket::HighRewardWrong];
    let weight_of = [weights.0, weights.1, weights.2];

    // Stale-cap filter, deterministic candidate order.
    let mut candidates: [Vec<&str>; 3] = [Vec::new(), Vec::new(), Vec::new()];
    for (slot, bucket) in order.iter().enumerate() {
        let mut ids: Vec<&str> = buckets
            .ids_in(*bucket)
            .into_iter()
            .filter(|id| selection_counts.get(*id).copied().unwrap_or(0) < config.stale_cap)
            .collect();
        ids.sort_unstable();
        candidates[slot] = ids;
    }

    let k = config.hard_pairs_per_round;
    let available: usize = candidates.iter().map(|c| c.len()).sum();
    let goal = k.min(available);
    if goal == 0 {
        return Ok(Vec::new());
    }

    // Initial targets from rounding, nudged so they sum to K.
    let k_f = F::from_usize(k).expect("K fits scalar");
    let mut targets: [usize; 3] = [0; 3];
    for slot in 0..3 {
        targets[slot] = (weight_of[slot] * k_f)
            .round()
            .to_usize()
            .expect("target fits usize");
    }
    while targets.iter().sum::<usize>() > k {
        let slot = most_overshooting(&targets, &weight_of, k_f);
        targets[slot] -= 1;
    }
    while targets.iter().sum::<usize>() < k {
        let slot = most_undershooting(&targets, &weight_of, k_f);
        targets[slot] += 1;
    }

    // Cap by capacity, then push the remaining deficit into buckets with
    // spare candidates, proportionally to their weights.
    for slot in 0..3 {
        targets[slot] = targets[slot].min(candidates[slot].len());
    }
    loop {
        let allocated: usize = targets.iter().sum();
        if allocated >= goal {
            break;
        }
        let deficit = goal - allocated;
        let spare: Vec<usize> = (0..3)
            .filter(|&slot| candidates[slot].len() > targets[slot])
            .collect();
        if spare.is_empty() {
            break;
        }
        let spare_weight: F = spare
            .iter()
            .map(|&slot| weight_of[slot])
            .fold(F::zero(), |a, b| a + b);
        let mut assigned = 0usize;
        if spare_weight > F::zero() {
            for &slot in &spare {
                let share = (weight_of[slot] / spare_weight
                    * F::from_usize(deficit).expect("deficit fits scalar"))
                .floor()
                .to_usize()
                .expect("share fits usize");
                let room = candidates[slot].len() - targets[slot];
                let take = share.min(room);
                targets[slot] += take;
                assigned += take;
            }
        }
        // Floor shares can assign nothing (small deficits, zero weights);
        // hand out one each in bucket order so progress is guaranteed.
        if assigned == 0 {
            for &slot in &spare {
                if assigned == deficit {
                    break;
                }
                if candidates[slot].len() > targets[slot] {
                    targets[slot] += 1;
                    assigned += 1;
                }
            }
        }
        if assigned == 0 {
            break;
        }
    }

    // Uniform within-bucket sampling, seeded.
    let mut rng = ChaCha8Rng::seed_from_u64(config.rng_seed);
    let mut sampled = Vec::with_capacity(goal);
    for slot in 0..3 {
        let picked = sample_without_replacement(&candidates[slot], targets[slot], &mut rng);
        sampled.extend(picked.into_iter().map(str::to_string));
    }
    for id in &sampled {
        *selection_counts.entry(id.clone()).or_insert(0) += 1;
    }
    Ok(sampled)
}

fn most_overshooting<F: Real>(targets: &[usize; 3], weights: &[F; 3], k: F) -> usize {
    let mut slot = 0;
    let mut worst = F::neg_infinity();
    for idx in 0..3 {
        if targets[idx] == 0 {
            continue;
        }
        let excess = F::from_usize(targets[idx]).unwrap() - weights[idx] * k;
        if excess > worst {
            worst = excess;
            slot = idx;
        }
    }
    slot
}

fn most_undershooting<F: Real>(targets: &[usize; 3], weights: &[F; 3], k: F) -> usize {
    let mut slot = 0;
    let mut worst = F::infinity();
    for idx in 0..3 {
        let excess = F::from_usize(targets[idx]).unwrap() - weights[idx] * k;
        if excess < worst {
            worst = excess;
            slot = idx;
        }
    }
    slot
}

/// Partial Fisher-Yates over a sorted candidate list: the first `take`
/// positions of the shuffle, independent of the rng's word size.
fn sample_without_replacement<'a>(
    candidates: &[&'a str],
    take: usize,
    rng: &mut impl Rng,
) -> Vec<&'a str> {
    let mut pool: Vec<&str> = candidates.to_vec();
    let take = take.min(pool.len());
    let mut picked = Vec::with_capacity(take);
    for i in 0..take {
        let j = rng.gen_range(i..pool.len());
        pool.swap(i, j);
        picked.push(pool[i]);
    }
    picked
}

#[cfg(test)]
mod tests {
    use super::*;

    fn misranked(id: &str, margin: f64, ra: f64, rb: f64) -> MisrankedPair<f64> {
        MisrankedPair {
            pair_id: id.to_string(),
            margin,
            reward_a: ra,
            reward_b: rb,
        }
    }

    #[test]
    fn quantile_interpolates_linearly() {
        let values: Vec<f64> = (1..=4).map(|v| v as f64).collect();
        // h = 3 * 0.5 = 1.5 between 2 and 3.
        assert!((quantile(&values, 0.5) - 2.5).abs() < 1e-12);
        assert_eq!(quantile(&values, 0.0), 1.0);
        assert_eq!(quantile(&values, 1.0), 4.0);
        assert_eq!(quantile(&[7.0f64], 0.3), 7.0);
    }

    #[test]
    fn empty_misranked_gives_empty_buckets() {
        let config = MiningConfig::default();
        let buckets = partition::<f64>(&[], &[0.5], &config).unwrap();
        assert!(buckets.is_empty());
    }

    #[test]
    fn thirty_percentile_takes_three_of_ten() {
        let config = MiningConfig::default();
        let pairs: Vec<MisrankedPair<f64>> = (0..10)
            .map(|i| misranked(&format!("p{i}"), -(0.1 + 0.1 * i as f64), 0.0, 0.0))
            .collect();
        // Reward population far above every pair's rewards, so no pair is
        // high-reward.
        let rewards = vec![5.0f64; 20];
        let buckets = partition(&pairs, &rewards, &config).unwrap();
        let small = buckets.ids_in(Bucket::WrongSmall);
        assert_eq!(small, vec!["p0", "p1", "p2"]);
        assert_eq!(buckets.ids_in(Bucket::WrongLarge).len(), 7);
        assert!(buckets.ids_in(Bucket::HighRewardWrong).is_empty());
    }

    #[test]
    fn high_reward_takes_precedence_over_small_margin() {
        let config = MiningConfig::default();
        let pairs = vec![
            misranked("tiny-high", -0.0001, 0.99, 0.98),
            misranked("mid", -0.5, 0.1, 0.1),
            misranked("big", -0.9, 0.1, 0.1),
        ];
        let rewards = vec![0.1, 0.1, 0.2, 0.3, 0.9, 0.95];
        let buckets = partition(&pairs, &rewards, &config).unwrap();
        assert_eq!(buckets.ids_in(Bucket::HighRewardWrong), vec!["tiny-high"]);
    }

    #[test]
    fn partition_is_exhaustive_and_disjoint() {
        let config = MiningConfig::default();
        let pairs: Vec<MisrankedPair<f64>> = (0..17)
            .map(|i| {
                misranked(
                    &format!("p{i}"),
                    -0.01 * (i + 1) as f64,
                    0.05 * i as f64,
                    0.04 * i as f64,
                )
            })
            .collect();
        let rewards: Vec<f64> = (0..34).map(|i| 0.03 * i as f64).collect();
        let buckets = partition(&pairs, &rewards, &config).unwrap();
        assert_eq!(buckets.assignments.len(), pairs.len());
        let mut seen: Vec<&str> = buckets.assignments.iter().map(|a| a.pair_id.as_str()).collect();
        seen.sort_unstable();
        seen.dedup();
        assert_eq!(seen.len(), pairs.len());
    }

    #[test]
    fn phase_weights_match_schedule() {
        assert_eq!(phase_weights::<f64>(0, 10).unwrap(), (0.6, 0.4, 0.0));
        assert_eq!(phase_weights::<f64>(2, 10).unwrap(), (0.6, 0.4, 0.0));
        assert_eq!(phase_weights::<f64>(3, 10).unwrap(), (0.5, 0.3, 0.2));
        assert_eq!(phase_weights::<f64>(5, 10).unwrap(), (0.5, 0.3, 0.2));
        assert_eq!(phase_weights::<f64>(8, 10).unwrap(), (0.5, 0.3, 0.2));
        assert_eq!(phase_weights::<f64>(9, 10).unwrap(), (0.3, 0.3, 0.4));
        assert!(matches!(
            phase_weights::<f64>(10, 10),
            Err(MiningError::RoundOutOfRange { .. })
        ));
    }

    #[test]
    fn phase_weights_sum_to_one_in_both_precisions() {
        for r in 0..10u32 {
            let (a, b, c) = phase_weights::<f64>(r, 10).unwrap();
            assert_eq!(a + b + c, 1.0);
            let (a, b, c) = phase_weights::<f32>(r, 10).unwrap();
            assert_eq!(a + b + c, 1.0f32);
        }
    }

    fn buckets_from(specs: &[(&str, Bucket)]) -> Buckets<f64> {
        Buckets {
            assignments: specs
                .iter()
                .map(|(id, bucket)| BucketAssignment {
                    pair_id: id.to_string(),
                    bucket: *bucket,
                    abs_margin: 0.1,
                    reward_a: 0.0,
                    reward_b: 0.0,
                })
                .collect(),
            reward_threshold: 0.0,
            margin_threshold: 0.0,
        }
    }

    #[test]
    fn empty_buckets_sample_nothing() {
        let config = MiningConfig::default();
        let mut counts = HashMap::new();
        let sampled =
            sample_hard_pairs(&buckets_from(&[]), (0.6, 0.4, 0.0), &config, &mut counts).unwrap();
        assert!(sampled.is_empty());
    }

    #[test]
    fn degenerate_weights_draw_from_one_bucket() {
        let config = MiningConfig::default();
        let specs: Vec<(String, Bucket)> = (0..20)
            .map(|i| (format!("s{i:02}"), Bucket::WrongSmall))
            .collect();
        let refs: Vec<(&str, Bucket)> = specs.iter().map(|(id, b)| (id.as_str(), *b)).collect();
        let mut counts = HashMap::new();
        let sampled =
            sample_hard_pairs(&buckets_from(&refs), (1.0, 0.0, 0.0), &config, &mut counts)
                .unwrap();
        assert_eq!(sampled.len(), 16);
        assert!(sampled.iter().all(|id| id.starts_with('s')));
        assert!(sampled.iter().all(|id| counts[id] == 1));
    }

    #[test]
    fn stale_pairs_are_excluded() {
        let config = MiningConfig {
            hard_pairs_per_round: 4,
            ..MiningConfig::default()
        };
        let buckets = buckets_from(&[
            ("a", Bucket::WrongSmall),
            ("b", Bucket::WrongSmall),
            ("c", Bucket::WrongSmall),
        ]);
        let mut counts: HashMap<String, u32> = [("a".to_string(), 4)].into();
        let sampled = sample_hard_pairs(&buckets, (1.0, 0.0, 0.0), &config, &mut counts).unwrap();
        assert_eq!(sampled.len(), 2);
        assert!(!sampled.contains(&"a".to_string()));
        assert_eq!(counts["a"], 4);
    }

    #[test]
    fn shortfall_redistributes_to_other_buckets() {
        let config = MiningConfig::default();
        let mut specs: Vec<(String, Bucket)> = vec![("only".to_string(), Bucket::WrongSmall)];
        for i in 0..30 {
            specs.push((format!("l{i:02}"), Bucket::WrongLarge));
        }
        let refs: Vec<(&str, Bucket)> = specs.iter().map(|(id, b)| (id.as_str(), *b)).collect();
        let mut counts = HashMap::new();
        let sampled =
            sample_hard_pairs(&buckets_from(&refs), (0.6, 0.4, 0.0), &config, &mut counts)
                .unwrap();
        // wrong_small holds one candidate; its 10-pair target shifts to
        // wrong_large, conserving the total of 16.
        assert_eq!(sampled.len(), 16);
        assert_eq!(sampled.iter().filter(|id| *id == "only").count(), 1);
    }

    #[test]
    fn sampling_is_deterministic_and_duplicate_free() {
        let config = MiningConfig::default();
        let specs: Vec<(String, Bucket)> = (0..12)
            .map(|i| {
                let bucket = match i % 3 {
                    0 => Bucket::WrongSmall,
                    1 => Bucket::WrongLarge,
                    _ => Bucket::HighRewardWrong,
                };
                (format!("p{i:02}"), bucket)
            })
            .collect();
        let refs: Vec<(&str, Bucket)> = specs.iter().map(|(id, b)| (id.as_str(), *b)).collect();
        let buckets = buckets_from(&refs);
        let weights = (0.5, 0.3, 0.2);
        let mut counts_one = HashMap::new();
        let first = sample_hard_pairs(&buckets, weights, &config, &mut counts_one).unwrap();
        let mut counts_two = HashMap::new();
        let second = sample_hard_pairs(&buckets, weights, &config, &mut counts_two).unwrap();
        assert_eq!(first, second);
        let mut unique = first.clone();
        unique.sort();
        unique.dedup();
        assert_eq!(unique.len(), first.len());
    }
}
