use logit_bandit::agents::{ofulogplus_choose, LogisticAgentState};
use logit_bandit::env::{sample_reward_logistic, stream_rng, RngStream};
use logit_bandit::glm::{CumulativeLoss, LogisticObservation};
use logit_bandit::harness::ExperimentConfig;
use logit_bandit::optim::{ucb_max, ucb_max_warm, SolverConfig};

fn main() {
    let mut config = ExperimentConfig::default();
    config.horizon = 1000;
    config.s = 5.0;
    let spec = config.logistic_env(0).unwrap();
    let arm_sets = spec.generate_arm_sets();
    let mut agent = LogisticAgentState::new(
        config.d,
        config.s,
        config.delta,
        SolverConfig {
            max_iters: 20_000,
            ..SolverConfig::default()
        },
    )
    .unwrap();
    let mut reward_rng = stream_rng(0, RngStream::Rewards);
    for (t, set) in arm_sets.iter().enumerate().map(|(i, s)| (i + 1, s)) {
        if t == 999 {
            let beta_sq = agent.radius_sq().unwrap();
            let cspec = agent.spec(beta_sq);
            let solver = SolverConfig {
                max_iters: 20_000,
                ..SolverConfig::default()
            };
            println!("beta_sq {beta_sq:.3} mle {:?}", cspec.center().as_slice());
            let mut order: Vec<usize> = (0..set.len()).collect();
            order.sort_by(|&a, &b| {
                let ang = |x: &nalgebra::DVector<f64>| x[1].atan2(x[0]);
                ang(&set[a]).partial_cmp(&ang(&set[b])).unwrap().then(a.cmp(&b))
            });
            let start = std::time::Instant::now();
            let mut warm = cspec.center().clone();
            let mut warm_total = 0usize;
            for &i in &order {
                let rep = ucb_max_warm(&cspec, &set[i], &warm, &solver).unwrap();
                warm_total += rep.iterations;
                if rep.iterations > 0 {
                    warm = rep.maximizer;
                }
            }
            let warm_wall = start.elapsed();
            let start = std::time::Instant::now();
            let mut cold_total = 0usize;
            for arm in set.iter() {
                cold_total += ucb_max(&cspec, arm, &solver).unwrap().iterations;
            }
            let cold_wall = start.elapsed();
            println!("chained: total iters {warm_total}, wall {warm_wall:?}");
            println!("cold:    total iters {cold_total}, wall {cold_wall:?}");
            return;
        }
        let choice = ofulogplus_choose(&agent, set).unwrap();
        let reward = sample_reward_logistic(&spec, &set[choice.index], &mut reward_rng);
        agent
            .update(LogisticObservation::new(set[choice.index].clone(), reward).unwrap())
            .unwrap();
    }
}
