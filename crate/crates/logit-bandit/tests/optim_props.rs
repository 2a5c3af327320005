//! Randomized invariants of the ball-constrained MLE and the per-arm
//! optimistic maximization.

use logit_bandit::confidence::{radius_logistic, ConfidenceSpec};
use logit_bandit::glm::{CumulativeLoss, LogisticHistory, LogisticObservation};
use logit_bandit::optim::{mle_ball, mle_ball_warm, ucb_max, SolverConfig};
use nalgebra::DVector;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_history(seed: u64, len: usize, d: usize) -> LogisticHistory {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut history = LogisticHistory::new(d);
    for _ in 0..len {
        let raw: Vec<f64> = (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let mut x = DVector::from_vec(raw);
        let norm = x.norm();
        if norm > 1.0 {
            x /= norm;
        }
        let r = u8::from(rng.gen_bool(0.5));
        history.push(LogisticObservation::new(x, r).unwrap()).unwrap();
    }
    history
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn mle_satisfies_first_order_conditions(
        seed in 0u64..1000,
        len in 1usize..40,
        s in 1.0..8.0f64,
    ) {
        let history = random_history(seed, len, 2);
        let config = SolverConfig::default();
        let report = mle_ball(&history, s, &config);
        prop_assert!(report.converged);
        prop_assert!(history.loss(&report.solution) <= history.loss(&DVector::zeros(2)) + 1e-12);
        let grad = history.grad(&report.solution);
        let norm = report.solution.norm();
        if norm < s - 1e-6 {
            prop_assert!(grad.norm() <= 10.0 * config.grad_tol, "interior gradient {}", grad.norm());
        } else if grad.norm() > 1e-9 {
            // At a boundary minimizer the negative gradient points outward
            // along the solution.
            let cosine = -grad.dot(&report.solution) / (grad.norm() * norm);
            prop_assert!(cosine >= 1.0 - 1e-5, "boundary alignment cosine {cosine}");
        }
    }

    #[test]
    fn warm_start_agrees_with_cold_start(
        seed in 0u64..1000,
        len in 1usize..30,
    ) {
        let history = random_history(seed, len, 2);
        let config = SolverConfig::default();
        let cold = mle_ball(&history, 5.0, &config);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x77);
        let start = DVector::from_vec(vec![rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0)]);
        let warm = mle_ball_warm(&history, 5.0, start, &config);
        prop_assert!(warm.converged);
        // Same minimum value even if flat directions admit multiple argmins.
        prop_assert!(
            (cold.objective - warm.objective).abs() <= 1e-6 * cold.objective.abs().max(1.0),
            "cold {} vs warm {}",
            cold.objective,
            warm.objective
        );
    }

    #[test]
    fn ucb_value_brackets_and_radius_monotonicity(
        seed in 0u64..500,
        len in 0usize..30,
        arm_raw in prop::collection::vec(-1.0..1.0f64, 2),
    ) {
        let mut arm = DVector::from_vec(arm_raw);
        let norm = arm.norm();
        if norm > 1.0 {
            arm /= norm;
        }
        let history = random_history(seed, len, 2);
        let config = SolverConfig::default();
        let report = mle_ball(&history, 5.0, &config);
        let beta_sq = radius_logistic(2, 5.0, len.max(1), 0.05).unwrap();
        let spec = ConfidenceSpec::new(
            &history,
            report.solution.clone(),
            report.objective,
            beta_sq,
            5.0,
        );
        let ucb = ucb_max(&spec, &arm, &config).unwrap();
        prop_assert!(ucb.converged);
        prop_assert!(ucb.value >= arm.dot(&report.solution) - 1e-7, "below the center value");
        prop_assert!(ucb.value <= 5.0 * arm.norm() + 1e-7, "above the ball relaxation");
        prop_assert!(ucb.maximizer.norm() <= 5.0 + 1e-6);
        let wider = ConfidenceSpec::new(
            &history,
            report.solution.clone(),
            report.objective,
            beta_sq * 2.0,
            5.0,
        );
        let ucb_wide = ucb_max(&wider, &arm, &config).unwrap();
        prop_assert!(ucb_wide.value >= ucb.value - 1e-6, "radius growth shrank the value");
    }
}

#[test]
fn repeated_arm_history_returns_minimum_norm_representative() {
    // Fifty duplicates of one arm leave the orthogonal direction flat; the
    // zero-start path never leaves the informative span.
    let mut history = LogisticHistory::new(2);
    let x = DVector::from_vec(vec![1.0, 0.0]);
    for i in 0..50 {
        history
            .push(LogisticObservation::new(x.clone(), u8::from(i % 3 == 0)).unwrap())
            .unwrap();
    }
    let report = mle_ball(&history, 5.0, &SolverConfig::default());
    assert!(report.converged);
    assert!(
        report.solution[1].abs() <= 1e-10,
        "flat coordinate drifted to {}",
        report.solution[1]
    );
}
