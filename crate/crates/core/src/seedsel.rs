//! Diversity-aware seed pair selection: cluster prompt embeddings, then pick
//! the highest-margin pairs round-robin across clusters so every semantic
//! region contributes.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::num::Real;

#[derive(Debug, Error)]
pub enum SeedSelError {
    #[error("invalid seed selection config: {0}")]
    InvalidConfig(String),

    #[error("embedding dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("labels cover {labels} pairs but {pairs} were given")]
    LabelMismatch { labels: usize, pairs: usize },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SeedSelectConfig {
    /// Target number of selected pairs (m).
    pub target_count: usize,
    /// Number of prompt clusters (k).
    pub num_clusters: usize,
    pub rng_seed: u64,
}

impl Default for SeedSelectConfig {
    fn default() -> Self {
        Self {
            target_count: 256,
            num_clusters: 16,
            rng_seed: 42,
        }
    }
}

/// Outcome of clustering: one label per input point, plus the number of
/// clusters actually used (reduced when there are fewer distinct points
/// than requested).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClusterLabels {
    pub labels: Vec<usize>,
    pub effective_k: usize,
}

const KMEANS_MAX_ITERATIONS: usize = 100;

/// Seeded k-means over prompt embeddings with greedy farthest-point
/// initialization; converges when assignments stabilize, capped at 100
/// Lloyd iterations.
pub fn cluster_prompts<F: Real>(
    embeddings: &[Vec<F>],
    k: usize,
    seed: u64,
) -> Result<ClusterLabels, SeedSelError> {
    if embeddings.is_empty() {
        return Err(SeedSelError::InvalidConfig("no embeddings given".into()));
    }
    if k < 1 {
        return Err(SeedSelError::InvalidConfig("k must be >= 1".into()));
    }
    if k > embeddings.len() {
        return Err(SeedSelError::InvalidConfig(format!(
            "k = {k} exceeds {} points",
            embeddings.len()
        )));
    }
    let dim = embeddings[0].len();
    for point in embeddings {
        if point.len() != dim {
            return Err(SeedSelError::DimensionMismatch {
                expected: dim,
                got: point.len(),
            });
        }
    }

    let distinct = count_distinct(embeddings);
    let k = if distinct < k {
        log::warn!("only {distinct} distinct embeddings; reducing k from {k}");
        distinct
    } else {
        k
    };

    // Greedy farthest-point seeding from a seeded starting point.
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centroids: Vec<Vec<F>> = Vec::with_capacity(k);
    centroids.push(embeddings[rng.gen_range(0..embeddings.len())].clone());
    while centroids.len() < k {
        let mut farthest = 0usize;
        let mut best = F::neg_infinity();
        for (idx, point) in embeddings.iter().enumerate() {
            let nearest = centroids
                .iter()
                .map(|c| squared_distance(point, c))
                .fold(F::infinity(), F::min);
            if nearest > best {
                best = nearest;
                farthest = idx;
            }
        }
        centroids.push(embeddings[farthest].clone());
    }

    let mut labels = vec![0usize; embeddings.len()];
    for _ in 0..KMEANS_MAX_ITERATIONS {
        let mut changed = false;
        for (idx, point) in embeddings.iter().enumerate() {
            let mut best_label = 0usize;
            let mut best_dist = F::infinity();
            for (label, centroid) in centroids.iter().enumerate() {
                let dist = squared_distance(point, centroid);
                if dist < best_dist {
                    best_dist = dist;
                    best_label = label;
                }
            }
            if labels[idx] != best_label {
                labels[idx] = best_label;
                changed = true;
            }
        }
        if !changed {
            break;
        }
        // Recompute means; empty clusters keep their previous centroid.
        let mut sums = vec![vec![F::zero(); dim]; k];
        let mut counts = vec![0usize; k];
        for (idx, point) in embeddings.iter().enumerate() {
            counts[labels[idx]] += 1;
            for (s, &x) in sums[labels[idx]].iter_mut().zip(point.iter()) {
                *s = *s + x;
            }
        }
        for label in 0..k {
            if counts[label] > 0 {
                let n = F::from_usize(counts[label]).expect("count fits scalar");
                for (c, s) in centroids[label].iter_mut().zip(sums[label].iter()) {
                    *c = *s / n;
                }
            }
        }
    }

    Ok(ClusterLabels {
        labels,
        effective_k: k,
    })
}

fn squared_distance<F: Real>(a: &[F], b: &[F]) -> F {
    a.iter()
        .zip(b.iter())
        .map(|(&x, &y)| (x - y) * (x - y))
        .sum()
}

fn count_distinct<F: Real>(points: &[Vec<F>]) -> usize {
    let mut distinct: Vec<&Vec<F>> = Vec::new();
    for point in points {
        if !distinct.iter().any(|seen| *seen == point) {
            distinct.push(point);
        }
    }
    distinct.len()
}

/// Selects up to `m` pair ids: within each cluster pairs rank by margin
/// descending (ties by id), and selection round-robins across clusters in
/// label order until `m` pairs are chosen or candidates run out.
pub fn select_seed<F: Real>(
    pair_ids: &[String],
    margins: &[F],
    clusters: &ClusterLabels,
    m: usize,
) -> Result<Vec<String>, SeedSelError> {
    if pair_ids.len() != margins.len() || pair_ids.len() != clusters.labels.len() {
        return Err(SeedSelError::LabelMismatch {
            labels: clusters.labels.len(),
            pairs: pair_ids.len(),
        });
    }
    if m == 0 {
        return Err(SeedSelError::InvalidConfig("m must be >= 1".into()));
    }
    if pair_ids.len() < m {
        log::warn!(
            "requested {m} seed pairs but only {} are available; selecting all",
            pair_ids.len()
        );
    }

    let mut per_cluster: Vec<Vec<(F, &String)>> = vec![Vec::new(); clusters.effective_k];
    for ((id, &margin), &label) in pair_ids.iter().zip(margins.iter()).zip(clusters.labels.iter()) {
        per_cluster[label].push((margin, id));
    }
    for bucket in &mut per_cluster {
        bucket.sort_by(|a, b| {
            b.0.partial_cmp(&a.0)
                .expect("finite margins")
                .then_with(|| a.1.cmp(b.1))
        });
    }

    let mut cursors = vec![0usize; per_cluster.len()];
    let mut selected = Vec::with_capacity(m.min(pair_ids.len()));
    while selected.len() < m {
        let mut advanced = false;
        for (label, bucket) in per_cluster.iter().enumerate() {
            if selected.len() == m {
                break;
            }
            if cursors[label] < bucket.len() {
                selected.push(bucket[cursors[label]].1.clone());
                cursors[label] += 1;
                advanced = true;
            }
        }
        if !advanced {
            break;
        }
    }
    Ok(selected)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ids(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("p{i:03}")).collect()
    }

    #[test]
    fn k_equals_n_gives_singleton_clusters() {
        let embeddings: Vec<Vec<f64>> = (0..5).map(|i| vec![i as f64, 0.0]).collect();
        let clusters = cluster_prompts(&embeddings, 5, 1).unwrap();
        assert_eq!(clusters.effective_k, 5);
        let mut labels = clusters.labels.clone();
        labels.sort_unstable();
        labels.dedup();
        assert_eq!(labels.len(), 5);
    }

    #[test]
    fn two_blobs_split_cleanly() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut embeddings = Vec::new();
        for _ in 0..20 {
            embeddings.push(vec![rng.gen_range(-0.5..0.5), rng.gen_range(-0.5..0.5)]);
        }
        for _ in 0..20 {
            embeddings.push(vec![
                10.0 + rng.gen_range(-0.5..0.5),
                10.0 + rng.gen_range(-0.5..0.5),
            ]);
        }
        let clusters = cluster_prompts(&embeddings, 2, 7).unwrap();
        // Brute-force oracle: nearest blob center.
        let blob_a = clusters.labels[0];
        for (idx, label) in clusters.labels.iter().enumerate() {
            let expected_a = idx < 20;
            assert_eq!(*label == blob_a, expected_a, "point {idx} misclustered");
        }
    }

    #[test]
    fn identical_points_reduce_k() {
        let embeddings: Vec<Vec<f64>> = (0..6).map(|_| vec![1.0, 2.0]).collect();
        let clusters = cluster_prompts(&embeddings, 4, 1).unwrap();
        assert_eq!(clusters.effective_k, 1);
        assert!(clusters.labels.iter().all(|&l| l == 0));
    }

    #[test]
    fn single_cluster_selects_top_margins() {
        let pair_ids = ids(6);
        let margins: Vec<f64> = vec![0.1, 0.9, 0.3, 0.8, 0.2, 0.5];
        let clusters = ClusterLabels {
            labels: vec![0; 6],
            effective_k: 1,
        };
        let picked = select_seed(&pair_ids, &margins, &clusters, 3).unwrap();
        assert_eq!(picked, vec!["p001", "p003", "p005"]);
    }

    #[test]
    fn round_robin_takes_cluster_leaders() {
        let pair_ids = ids(6);
        let margins: Vec<f64> = vec![0.9, 0.1, 0.5, 0.8, 0.2, 0.6];
        let clusters = ClusterLabels {
            labels: vec![0, 0, 0, 1, 1, 1],
            effective_k: 2,
        };
        let picked = select_seed(&pair_ids, &margins, &clusters, 4).unwrap();
        // Two from each cluster, each being its cluster's margin leaders.
        assert_eq!(picked, vec!["p000", "p003", "p002", "p005"]);
    }

    #[test]
    fn m_equal_to_total_selects_everything() {
        let pair_ids = ids(4);
        let margins: Vec<f64> = vec![0.4, 0.3, 0.2, 0.1];
        let clusters = ClusterLabels {
            labels: vec![0, 1, 0, 1],
            effective_k: 2,
        };
        let picked = select_seed(&pair_ids, &margins, &clusters, 4).unwrap();
        let mut sorted = picked.clone();
        sorted.sort();
        assert_eq!(sorted, pair_ids);
    }

    #[test]
    fn oversized_m_selects_all_available() {
        let pair_ids = ids(3);
        let margins: Vec<f64> = vec![0.1, 0.2, 0.3];
        let clusters = ClusterLabels {
            labels: vec![0, 0, 0],
            effective_k: 1,
        };
        let picked = select_seed(&pair_ids, &margins, &clusters, 10).unwrap();
        assert_eq!(picked.len(), 3);
    }
}
