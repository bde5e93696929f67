//! Property tests for the solver's optimality certificates.

use ndarray::Array2;
use proptest::prelude::*;
use rubriclearn::solver::{fit, gradient_check, kkt_residual, SolveProblem};

fn arb_problem(max_m: usize, max_j: usize) -> impl Strategy<Value = SolveProblem<f64>> {
    (1..=max_m, 1..=max_j)
        .prop_flat_map(|(m, j)| {
            (
                proptest::collection::vec(-1.0f64..=1.0, m * j),
                proptest::collection::vec(prop_oneof![Just(1.0f64), Just(-1.0f64)], m),
                prop_oneof![Just(false), Just(true)],
            )
                .prop_map(move |(entries, labels, nonnegative)| {
                    let features = Array2::from_shape_vec((m, j), entries).unwrap();
                    let mut problem = SolveProblem::new(features, labels);
                    problem.nonnegative = nonnegative;
                    problem
                })
        })
        .no_shrink()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    /// Every converged fit certifies its own optimality via the independently
    /// recomputed KKT residual.
    #[test]
    fn converged_fits_satisfy_kkt(problem in arb_problem(64, 32)) {
        let result = fit(&problem).unwrap();
        prop_assert!(result.converged);
        let recomputed = kkt_residual(&result.weights, &problem).unwrap();
        prop_assert!(recomputed <= problem.tolerance,
            "recomputed residual {recomputed} above tolerance");
        if problem.nonnegative {
            prop_assert!(result.weights.iter().all(|&w| w >= 0.0));
        }
    }

    /// If the gradient at the origin lies inside the subdifferential ball,
    /// zero is optimal and the fit must return it.
    #[test]
    fn origin_is_returned_when_certified_optimal(problem in arb_problem(32, 16)) {
        // Scale the loss weight so the origin gradient lands inside the unit
        // ball: grad(0)_j = -(C/2) * sum_i z_i x_ij.
        let mut raw_norm: f64 = 0.0;
        for j in 0..problem.num_rubrics() {
            let mut total = 0.0;
            for i in 0..problem.num_pairs() {
                total += problem.labels[i] * problem.features[(i, j)];
            }
            raw_norm = raw_norm.max((total / 2.0).abs());
        }
        let mut scaled = problem.clone();
        if raw_norm > 0.0 {
            scaled.loss_weight = (1.0 / raw_norm).min(10.0);
        }
        let grad_inf = raw_norm * scaled.loss_weight;
        prop_assume!(grad_inf <= 1.0);
        let result = fit(&scaled).unwrap();
        let l1: f64 = result.weights.iter().map(|w| w.abs()).sum();
        prop_assert!(l1 <= 1e-8, "||w||_1 = {l1} for an origin-optimal problem");
    }

    /// Analytic gradient matches central finite differences at random points.
    #[test]
    fn gradient_matches_finite_differences(
        problem in arb_problem(8, 4),
        point in proptest::collection::vec(-2.0f64..=2.0, 4),
    ) {
        let w = &point[..problem.num_rubrics()];
        let err = gradient_check(&problem, w, 1e-5).unwrap();
        prop_assert!(err < 1e-5, "gradient check error {err}");
    }
}
