//! Cache-first batch scoring: only cache misses reach the backend, up to a
//! configured number of concurrent requests. Results are keyed by position,
//! so completion order never affects the matrix.

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use ndarray::Array2;

use super::cache::{unix_timestamp, ScoreCache, ScoreCacheEntry};
use super::{JudgeBackend, JudgeError, JudgeRequest};
use crate::types::{PreferencePair, PreferredSide, Rubric, ScoreMatrix};
use crate::util::parallel_map;

/// Cumulative scoring counters.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ScoringStats {
    pub cache_hits: u64,
    pub backend_calls: u64,
}

/// Batch scorer: a backend, its cache, and a parallelism bound.
pub struct Scorer {
    backend: Arc<dyn JudgeBackend>,
    cache: ScoreCache,
    max_parallel: usize,
    cache_hits: AtomicU64,
    backend_calls: AtomicU64,
}

impl Scorer {
    pub fn new(backend: Arc<dyn JudgeBackend>, cache: ScoreCache, max_parallel: usize) -> Self {
        Self {
            backend,
            cache,
            max_parallel: max_parallel.max(1),
            cache_hits: AtomicU64::new(0),
            backend_calls: AtomicU64::new(0),
        }
    }

    pub fn stats(&self) -> ScoringStats {
        ScoringStats {
            cache_hits: self.cache_hits.load(Ordering::Relaxed),
            backend_calls: self.backend_calls.load(Ordering::Relaxed),
        }
    }

    pub fn cache(&self) -> &ScoreCache {
        &self.cache
    }

    /// Scores one request, cache first.
    pub fn score(&self, request: &JudgeRequest) -> Result<f64, JudgeError> {
        let key = (
            request.rubric_id.clone(),
            request.pair_id.clone(),
            request.side,
        );
        if let Some(score) = self.cache.get(&key) {
            self.cache_hits.fetch_add(1, Ordering::Relaxed);
            return Ok(score);
        }
        self.backend_calls.fetch_add(1, Ordering::Relaxed);
        let score = self.backend.score(request)?;
        if !(0.0..=1.0).contains(&score) {
            return Err(JudgeError::ScoreOutOfRange {
                backend: self.backend.tag(),
                score,
            });
        }
        self.cache.put(&ScoreCacheEntry {
            rubric_id: request.rubric_id.clone(),
            pair_id: request.pair_id.clone(),
            side: request.side,
            score,
            backend_tag: self.backend.tag(),
            timestamp: unix_timestamp(),
        })?;
        Ok(score)
    }

    /// Fills the full pairs × rubrics score matrix for both sides.
    ///
    /// Cache misses fan out over up to `max_parallel` worker threads. Any
    /// backend failure aborts the batch; everything scored before the abort
    /// is already persisted in the cache.
    pub fn score_matrix(
        &self,
        pairs: &[PreferencePair],
        rubrics: &[Rubric],
    ) -> Result<ScoreMatrix<f64>, JudgeError> {
        let m = pairs.len();
        let j = rubrics.len();
        let mut s_a = Array2::zeros((m, j));
        let mut s_b = Array2::zeros((m, j));

        let mut missing: Vec<(usize, usize, PreferredSide)> = Vec::new();
        for (row, pair) in pairs.iter().enumerate() {
            for (col, rubric) in rubrics.iter().enumerate() {
                for side in [PreferredSide::A, PreferredSide::B] {
                    let key = (rubric.id.clone(), pair.id.clone(), side);
                    if let Some(score) = self.cache.get(&key) {
                        self.cache_hits.fetch_add(1, Ordering::Relaxed);
                        match side {
                            PreferredSide::A => s_a[(row, col)] = score,
                            PreferredSide::B => s_b[(row, col)] = score,
                        }
                    } else {
                        missing.push((row, col, side));
                    }
                }
            }
        }

        if !missing.is_empty() {
            let requests: Vec<JudgeRequest> = missing
                .iter()
                .map(|&(row, col, side)| JudgeRequest::for_pair(&rubrics[col], &pairs[row], side))
                .collect();
            let scorer = &*self;
            let (results, failure) = parallel_map(&requests, self.max_parallel, |request| {
                scorer.score(request).map_err(|e| e.to_string())
            });
            let completed = results.iter().filter(|r| r.is_some()).count();
            if let Some((_, message)) = failure {
                return Err(JudgeError::BatchAborted {
                    completed,
                    source: Box::new(JudgeError::Unavailable(message)),
                });
            }
            for ((row, col, side), result) in missing.into_iter().zip(results.into_iter()) {
                let score = result.expect("no failure implies every slot is filled");
                match side {
                    PreferredSide::A => s_a[(row, col)] = score,
                    PreferredSide::B => s_b[(row, col)] = score,
                }
            }
        }

        Ok(ScoreMatrix::new(
            pairs.iter().map(|p| p.id.clone()).collect(),
            rubrics.iter().map(|r| r.id.clone()).collect(),
            s_a,
            s_b,
        )?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::util::stable_unit;

    /// Deterministic test backend: score is a stable hash of the request
    /// key, so identical image references give identical scores.
    struct HashBackend;

    impl JudgeBackend for HashBackend {
        fn score(&self, request: &JudgeRequest) -> Result<f64, JudgeError> {
            Ok(stable_unit(&[
                &request.rubric_id,
                &request.prompt,
                &request.image_ref,
            ]))
        }

        fn tag(&self) -> String {
            "hash-test".to_string()
        }
    }

    struct FailingBackend;

    impl JudgeBackend for FailingBackend {
        fn score(&self, _request: &JudgeRequest) -> Result<f64, JudgeError> {
            Err(JudgeError::Unavailable("backend down".into()))
        }

        fn tag(&self) -> String {
            "failing".to_string()
        }
    }

    fn pairs(n: usize) -> Vec<PreferencePair> {
        (0..n)
            .map(|i| {
                PreferencePair::new(
                    &format!("p{i}"),
                    &format!("prompt {i}"),
                    &format!("img/{i}/a.png"),
                    &format!("img/{i}/b.png"),
                    PreferredSide::A,
                )
            })
            .collect()
    }

    fn rubrics(n: usize) -> Vec<Rubric> {
        (0..n)
            .map(|i| Rubric::seed(&format!("scorer rubric {i}")).unwrap())
            .collect()
    }

    #[test]
    fn zero_rubrics_give_an_empty_but_valid_matrix() {
        let scorer = Scorer::new(Arc::new(HashBackend), ScoreCache::in_memory(), 4);
        let matrix = scorer.score_matrix(&pairs(3), &[]).unwrap();
        assert_eq!(matrix.num_pairs(), 3);
        assert_eq!(matrix.num_rubrics(), 0);
    }

    #[test]
    fn identical_sides_give_zero_delta_rows() {
        let scorer = Scorer::new(Arc::new(HashBackend), ScoreCache::in_memory(), 4);
        let mut pair = pairs(1).remove(0);
        pair.image_b = pair.image_a.clone();
        let matrix = scorer.score_matrix(&[pair], &rubrics(5)).unwrap();
        assert!(matrix.delta.iter().all(|&d| d == 0.0));
    }

    #[test]
    fn warm_cache_answers_without_backend_calls() {
        let scorer = Scorer::new(Arc::new(HashBackend), ScoreCache::in_memory(), 8);
        let ps = pairs(16);
        let rs = rubrics(5);
        let cold = scorer.score_matrix(&ps, &rs).unwrap();
        let after_cold = scorer.stats();
        assert_eq!(after_cold.backend_calls, (16 * 5 * 2) as u64);

        let warm = scorer.score_matrix(&ps, &rs).unwrap();
        let after_warm = scorer.stats();
        assert_eq!(after_warm.backend_calls, after_cold.backend_calls);
        assert_eq!(
            after_warm.cache_hits - after_cold.cache_hits,
            (16 * 5 * 2) as u64
        );
        assert_eq!(warm, cold);
    }

    #[test]
    fn matrix_is_independent_of_worker_count() {
        let ps = pairs(7);
        let rs = rubrics(3);
        let serial = Scorer::new(Arc::new(HashBackend), ScoreCache::in_memory(), 1)
            .score_matrix(&ps, &rs)
            .unwrap();
        let parallel = Scorer::new(Arc::new(HashBackend), ScoreCache::in_memory(), 16)
            .score_matrix(&ps, &rs)
            .unwrap();
        assert_eq!(serial, parallel);
    }

    #[test]
    fn backend_failure_aborts_with_partial_cache_note() {
        let scorer = Scorer::new(Arc::new(FailingBackend), ScoreCache::in_memory(), 2);
        let err = scorer.score_matrix(&pairs(2), &rubrics(2)).unwrap_err();
        assert!(matches!(err, JudgeError::BatchAborted { .. }));
    }

    #[test]
    fn out_of_range_backend_scores_are_rejected() {
        struct BadBackend;
        impl JudgeBackend for BadBackend {
            fn score(&self, _request: &JudgeRequest) -> Result<f64, JudgeError> {
                Ok(1.5)
            }
            fn tag(&self) -> String {
                "bad".to_string()
            }
        }
        let scorer = Scorer::new(Arc::new(BadBackend), ScoreCache::in_memory(), 1);
        let request = JudgeRequest::for_pair(&rubrics(1)[0], &pairs(1)[0], PreferredSide::A);
        assert!(matches!(
            scorer.score(&request),
            Err(JudgeError::ScoreOutOfRange { .. })
        ));
    }
}
