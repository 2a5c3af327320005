//! Whole-loop policy invariants on short simulated runs: optimism on
//! covered rounds, bit-level replayability, and baseline set nesting.

use logit_bandit::agents::{
    baseline_choose, eps_greedy_choose, ofulogplus_choose, BaselineKind, LogisticAgentState,
};
use logit_bandit::confidence::boundary_trace_2d;
use logit_bandit::env::{
    optimal_index_logistic, sample_reward_logistic, stream_rng, ArmGenerator, LogisticEnvSpec,
    RngStream,
};
use logit_bandit::glm::LogisticObservation;
use logit_bandit::optim::SolverConfig;
use nalgebra::DVector;

fn env(seed: u64, horizon: usize) -> LogisticEnvSpec {
    LogisticEnvSpec::new(
        DVector::from_element(2, 4.0 / 2.0f64.sqrt()),
        5.0,
        ArmGenerator::UniformBall { count: 10 },
        horizon,
        seed,
    )
    .unwrap()
}

#[test]
fn optimism_covers_the_true_optimum_on_covered_rounds() {
    let horizon = 120;
    for seed in [0, 1, 2] {
        let spec = env(seed, horizon);
        let sets = spec.generate_arm_sets();
        let mut agent = LogisticAgentState::new(2, 5.0, 0.05, SolverConfig::default()).unwrap();
        let mut reward_rng = stream_rng(seed, RngStream::Rewards);
        let mut covered_rounds = 0;
        for set in &sets {
            let beta_sq = agent.radius_sq().unwrap();
            let covered = agent.spec(beta_sq).contains(&spec.theta_star);
            let choice = ofulogplus_choose(&agent, set).unwrap();
            if covered {
                covered_rounds += 1;
                let star = optimal_index_logistic(&spec, set);
                let true_value = set[star].dot(&spec.theta_star);
                assert!(
                    choice.scores[star] >= true_value - 5e-3,
                    "seed {seed}: optimal arm UCB {} fell below its true value {}",
                    choice.scores[star],
                    true_value
                );
            }
            let r = sample_reward_logistic(&spec, &set[choice.index], &mut reward_rng);
            agent
                .update(LogisticObservation::new(set[choice.index].clone(), r).unwrap())
                .unwrap();
        }
        assert!(
            covered_rounds > horizon / 2,
            "seed {seed}: coverage held on only {covered_rounds} of {horizon} rounds"
        );
    }
}

#[test]
fn replayed_runs_choose_identical_actions() {
    let run = |seed: u64| -> Vec<usize> {
        let spec = env(seed, 60);
        let sets = spec.generate_arm_sets();
        let mut agent = LogisticAgentState::new(2, 5.0, 0.05, SolverConfig::default()).unwrap();
        let mut policy_rng = stream_rng(seed, RngStream::Policy);
        let mut reward_rng = stream_rng(seed, RngStream::Rewards);
        let mut actions = Vec::new();
        for (t, set) in sets.iter().enumerate() {
            let choice = if t % 2 == 0 {
                ofulogplus_choose(&agent, set).unwrap()
            } else {
                eps_greedy_choose(&agent, set, 0.2, &mut policy_rng)
            };
            actions.push(choice.index);
            let r = sample_reward_logistic(&spec, &set[choice.index], &mut reward_rng);
            agent
                .update(LogisticObservation::new(set[choice.index].clone(), r).unwrap())
                .unwrap();
        }
        actions
    };
    assert_eq!(run(7), run(7));
}

#[test]
fn inflated_radius_sets_nest_around_the_plain_sets() {
    let seed = 4;
    let spec = env(seed, 40);
    let sets = spec.generate_arm_sets();
    let mut agent = LogisticAgentState::new(2, 5.0, 0.05, SolverConfig::default()).unwrap();
    let mut policy_rng = stream_rng(seed, RngStream::Policy);
    let mut reward_rng = stream_rng(seed, RngStream::Rewards);
    for (t, set) in sets.iter().enumerate().map(|(i, s)| (i + 1, s)) {
        if t % 10 == 0 {
            let beta_sq = agent.radius_sq().unwrap();
            let plain = boundary_trace_2d(&agent.spec(beta_sq), 48).unwrap();
            let scaled = boundary_trace_2d(&agent.spec(beta_sq * 5.0), 48).unwrap();
            let center = agent.mle().solution.clone();
            for (vp, vs) in plain.iter().zip(&scaled) {
                let rp = ((vp[0] - center[0]).powi(2) + (vp[1] - center[1]).powi(2)).sqrt();
                let rs = ((vs[0] - center[0]).powi(2) + (vs[1] - center[1]).powi(2)).sqrt();
                assert!(
                    rp <= rs + 1e-7,
                    "round {t}: plain-set ray radius {rp} escaped the scaled set {rs}"
                );
            }
        }
        let choice = baseline_choose(
            BaselineKind::RadiusScaled { scale: 5.0 },
            &agent,
            set,
            &mut policy_rng,
        )
        .unwrap();
        let r = sample_reward_logistic(&spec, &set[choice.index], &mut reward_rng);
        agent
            .update(LogisticObservation::new(set[choice.index].clone(), r).unwrap())
            .unwrap();
    }
}
