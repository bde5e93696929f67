//! Statistical oracles over the planted world: the noiseless construction is
//! perfectly separable, label noise caps accuracy at 1 - ε, and distractor
//! scores carry no signal.

use std::sync::Arc;

use rubriclearn::judge::{ScoreCache, Scorer};
use rubriclearn::selection::{evaluate, retain_top_n, RetentionConfig};
use rubriclearn::solver::{fit, SolveProblem};
use rubriclearn::synthworld::{make_world, WorldSpec};
use rubriclearn::types::{Rubric, WeightedRubricSet};

fn scorer(world: &rubriclearn::synthworld::World) -> Scorer {
    Scorer::new(world.judge_backend(), ScoreCache::in_memory(), 8)
}

#[test]
fn noiseless_oracle_set_is_perfect() {
    let spec = WorldSpec {
        num_true_rubrics: 5,
        true_weights: vec![1.0, 0.9, 0.7, 0.5, 0.3],
        num_distractors: 10,
        num_pairs: 400,
        label_noise: 0.0,
        score_noise: 0.0,
        rng_seed: 21,
        seed_release_fraction: 1.0,
        min_margin: 0.35,
    };
    let world = make_world(&spec).unwrap();
    let matrix = scorer(&world)
        .score_matrix(&world.pairs, world.planted())
        .unwrap();
    let report = evaluate(&world.oracle_set(), &world.pairs, &matrix).unwrap();
    assert_eq!(report.strict_accuracy, 1.0);
}

/// With ε = 0.1 the label noise caps achievable accuracy at 0.9; the oracle
/// set must land within sampling error of that ceiling over 10 000 pairs
/// (and, in particular, never above it by more than chance).
#[test]
fn label_noise_sets_the_accuracy_ceiling() {
    let spec = WorldSpec {
        num_true_rubrics: 5,
        true_weights: vec![1.0, 0.9, 0.7, 0.5, 0.3],
        num_distractors: 0,
        num_pairs: 10_000,
        label_noise: 0.1,
        score_noise: 0.0,
        rng_seed: 22,
        seed_release_fraction: 1.0,
        min_margin: 0.35,
    };
    let world = make_world(&spec).unwrap();
    let matrix = scorer(&world)
        .score_matrix(&world.pairs, world.planted())
        .unwrap();
    let report = evaluate(&world.oracle_set(), &world.pairs, &matrix).unwrap();
    // 3 sigma of Binomial(10000, 0.9) is ~0.009.
    assert!(
        (report.strict_accuracy - 0.9).abs() < 0.01,
        "empirical ceiling {} too far from 0.9",
        report.strict_accuracy
    );
}

/// A distractor-only rubric set scores independently of the labels: its
/// accuracy over 1 000 pairs must stay inside the two-sided 99% binomial
/// band around 0.5 (|acc - 0.5| < 2.576 * 0.5 / sqrt(1000) ≈ 0.0407).
#[test]
fn distractor_only_set_is_chance_level() {
    let spec = WorldSpec {
        num_true_rubrics: 3,
        true_weights: vec![1.0, 0.8, 0.5],
        num_distractors: 10,
        num_pairs: 1_000,
        label_noise: 0.0,
        score_noise: 0.0,
        rng_seed: 23,
        seed_release_fraction: 1.0,
        min_margin: 0.35,
    };
    let world = make_world(&spec).unwrap();
    let distractor_set = WeightedRubricSet::new(
        world
            .distractors()
            .iter()
            .cloned()
            .map(|r| (r, 1.0))
            .collect::<Vec<(Rubric, f64)>>(),
        0,
    )
    .unwrap();
    let matrix = scorer(&world)
        .score_matrix(&world.pairs, world.distractors())
        .unwrap();
    let report = evaluate(&distractor_set, &world.pairs, &matrix).unwrap();
    assert!(
        (report.strict_accuracy - 0.5).abs() < 0.0407,
        "distractor accuracy {} outside the 99% binomial band",
        report.strict_accuracy
    );
}

/// Planted-recovery signal: with no noise and the full planted set in the
/// pool, the fitted Top-N contains every planted rubric whose true weight
/// clears the retention threshold, and distractor weight shrinks with more
/// pairs.
#[test]
fn noiseless_fit_recovers_all_planted_rubrics() {
    let spec = WorldSpec {
        num_true_rubrics: 5,
        true_weights: vec![1.0, 0.9, 0.7, 0.5, 0.3],
        num_distractors: 15,
        num_pairs: 256,
        label_noise: 0.0,
        score_noise: 0.0,
        rng_seed: 24,
        seed_release_fraction: 1.0,
        min_margin: 0.35,
    };
    let world = make_world(&spec).unwrap();
    let pool: Vec<Rubric> = world
        .planted()
        .iter()
        .chain(world.distractors().iter())
        .cloned()
        .collect();

    let mut distractor_mass_by_size = Vec::new();
    for pair_count in [64usize, 256] {
        let pairs = &world.pairs[..pair_count];
        let matrix = scorer(&world).score_matrix(pairs, &pool).unwrap();
        let labels: Vec<f64> = pairs.iter().map(|p| p.label.sign()).collect();
        let problem = SolveProblem::new(matrix.delta.clone(), labels);
        let result = fit(&problem).unwrap();
        assert!(result.converged);
        let retained =
            retain_top_n(&result.weights, &pool, &RetentionConfig::default(), 0).unwrap();
        if pair_count == 256 {
            for planted in world.planted() {
                assert!(
                    retained.contains(&planted.id),
                    "planted rubric {} missing from the retained set",
                    planted.text
                );
            }
        }
        let distractor_mass: f64 = pool
            .iter()
            .zip(result.weights.iter())
            .skip(world.planted().len())
            .map(|(_, w)| w.abs())
            .sum();
        distractor_mass_by_size.push(distractor_mass);
    }
    assert!(
        distractor_mass_by_size[1] <= distractor_mass_by_size[0] + 1e-9,
        "distractor weight grew with more pairs: {distractor_mass_by_size:?}"
    );
}
