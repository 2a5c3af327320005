//! Experiment runner: configuration, seeded multi-run execution, CSV and
//! JSON output.
//!
//! A configuration pins the model, the policy, the instance sizes, and the
//! seed range. Each seed is an independent run with its own RNG streams;
//! runs execute in parallel under a bounded worker pool and a single
//! collector writes files in seed order, so output is reproducible byte for
//! byte except for the wall-clock column. Floats are printed with 17
//! significant digits so parsing them back recovers the exact bits.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agents::{
    baseline_choose, eps_greedy_choose, mnl_eps_greedy_choose, mnlucbplus_choose,
    ofulogplus_choose, AgentError, BaselineKind, LogisticAgentState, MNLDesignState, MnlAgentState,
};
use crate::confidence::{boundary_trace_2d, radius_mnl, ConfidenceError, ConfidenceSpec};
use crate::env::{
    instant_regret_logistic, instant_regret_mnl, kappa_report_mnl, sample_outcome_mnl,
    sample_reward_logistic, stream_rng, ArmGenerator, EnvError, LogisticEnvSpec, MNLEnvSpec,
    RngStream,
};
use crate::glm::{LogisticObservation, MNLObservation, MNLParam};
use crate::optim::SolverConfig;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("unknown configuration key '{0}'")]
    UnknownKey(String),
    #[error("could not parse value '{value}' for key '{key}'")]
    BadValue { key: String, value: String },
    #[error("confidence-set snapshots need the planar binary model, got d = {0}")]
    SnapshotDimension(usize),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Confidence(#[from] ConfidenceError),
    #[error(transparent)]
    Agent(#[from] AgentError),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Model {
    Logistic,
    Mnl,
}

impl FromStr for Model {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "logistic" => Ok(Model::Logistic),
            "mnl" => Ok(Model::Mnl),
            other => Err(format!("unknown model '{other}' (logistic|mnl)")),
        }
    }
}

impl Model {
    pub fn as_str(self) -> &'static str {
        match self {
            Model::Logistic => "logistic",
            Model::Mnl => "mnl",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Algo {
    OfuLogPlus,
    MnlUcbPlus,
    EpsGreedy,
    RadiusScaled,
}

impl FromStr for Algo {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "ofulogplus" => Ok(Algo::OfuLogPlus),
            "mnl_ucb_plus" => Ok(Algo::MnlUcbPlus),
            "eps_greedy" => Ok(Algo::EpsGreedy),
            "radius_scaled" => Ok(Algo::RadiusScaled),
            other => Err(format!(
                "unknown algo '{other}' (ofulogplus|mnl_ucb_plus|eps_greedy|radius_scaled)"
            )),
        }
    }
}

impl Algo {
    pub fn as_str(self) -> &'static str {
        match self {
            Algo::OfuLogPlus => "ofulogplus",
            Algo::MnlUcbPlus => "mnl_ucb_plus",
            Algo::EpsGreedy => "eps_greedy",
            Algo::RadiusScaled => "radius_scaled",
        }
    }
}

/// Everything one experiment needs. Defaults mirror the planar benchmark:
/// horizon 4000, twenty arms, delta 0.05, ten seeds.
#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub model: Model,
    pub algo: Algo,
    pub d: usize,
    pub k: usize,
    pub s: f64,
    pub r: f64,
    pub horizon: usize,
    pub delta: f64,
    pub arms: usize,
    pub n_seeds: usize,
    pub base_seed: u64,
    pub c_gamma: f64,
    /// Squared-radius inflation for the loose-set baseline; `None` means
    /// the default factor S.
    pub radius_scale: Option<f64>,
    pub eps: f64,
    /// Curvature constant handed to the bonus policy; `None` means
    /// estimate it from the realized arms and pad by 1.5.
    pub kappa: Option<f64>,
    pub out_dir: PathBuf,
    pub snapshot_rounds: Vec<usize>,
    pub workers: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            model: Model::Logistic,
            algo: Algo::OfuLogPlus,
            d: 2,
            k: 3,
            s: 5.0,
            r: 1.0,
            horizon: 4000,
            delta: 0.05,
            arms: 20,
            n_seeds: 10,
            base_seed: 0,
            c_gamma: 1.0,
            radius_scale: None,
            eps: 0.1,
            kappa: None,
            out_dir: PathBuf::from("out"),
            snapshot_rounds: Vec::new(),
            workers: 1,
        }
    }
}

impl ExperimentConfig {
    pub fn effective_radius_scale(&self) -> f64 {
        self.radius_scale.unwrap_or(self.s)
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let fail = |msg: String| Err(HarnessError::InvalidConfig(msg));
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return fail(format!("delta must lie in (0,1), got {}", self.delta));
        }
        if self.horizon == 0 {
            return fail("T must be at least 1".into());
        }
        if self.n_seeds == 0 {
            return fail("seeds must be at least 1".into());
        }
        if self.d == 0 || self.k == 0 || self.arms == 0 || self.workers == 0 {
            return fail("d, K, arms, and workers must be positive".into());
        }
        if self.s <= 0.0 || self.r <= 0.0 || self.c_gamma <= 0.0 {
            return fail("S, R, and c_gamma must be positive".into());
        }
        if !(0.0..=1.0).contains(&self.eps) {
            return fail(format!("eps must lie in [0,1], got {}", self.eps));
        }
        if self.effective_radius_scale() <= 0.0 {
            return fail("radius scale must be positive".into());
        }
        if let Some(kappa) = self.kappa {
            if kappa <= 0.0 {
                return fail(format!("kappa must be positive, got {kappa}"));
            }
        }
        if self.snapshot_rounds.iter().any(|&t| t == 0 || t > self.horizon) {
            return fail("snapshot rounds must lie in [1, T]".into());
        }
        match (self.model, self.algo) {
            (Model::Logistic, Algo::MnlUcbPlus) => {
                fail("algo mnl_ucb_plus needs model mnl".into())
            }
            (Model::Mnl, Algo::OfuLogPlus | Algo::RadiusScaled) => {
                fail(format!("algo {} needs model logistic", self.algo.as_str()))
            }
            _ => Ok(()),
        }
    }

    /// Applies one key=value pair, using the CLI flag names as keys.
    pub fn apply_kv(&mut self, key: &str, value: &str) -> Result<(), HarnessError> {
        let bad = || HarnessError::BadValue {
            key: key.to_string(),
            value: value.to_string(),
        };
        match key {
            "model" => self.model = value.parse().map_err(|_| bad())?,
            "algo" => self.algo = value.parse().map_err(|_| bad())?,
            "d" => self.d = value.parse().map_err(|_| bad())?,
            "K" => self.k = value.parse().map_err(|_| bad())?,
            "S" => self.s = value.parse().map_err(|_| bad())?,
            "R" => self.r = value.parse().map_err(|_| bad())?,
            "T" => self.horizon = value.parse().map_err(|_| bad())?,
            "delta" => self.delta = value.parse().map_err(|_| bad())?,
            "arms" => self.arms = value.parse().map_err(|_| bad())?,
            "seeds" => self.n_seeds = value.parse().map_err(|_| bad())?,
            "base-seed" => self.base_seed = value.parse().map_err(|_| bad())?,
            "c-gamma" => self.c_gamma = value.parse().map_err(|_| bad())?,
            "radius-scale" => self.radius_scale = Some(value.parse().map_err(|_| bad())?),
            "eps" => self.eps = value.parse().map_err(|_| bad())?,
            "kappa" => self.kappa = Some(value.parse().map_err(|_| bad())?),
            "out" => self.out_dir = PathBuf::from(value),
            "snapshot-rounds" => {
                self.snapshot_rounds = value
                    .split(',')
                    .filter(|s| !s.trim().is_empty())
                    .map(|s| s.trim().parse().map_err(|_| bad()))
                    .collect::<Result<_, _>>()?;
            }
            "workers" => self.workers = value.parse().map_err(|_| bad())?,
            other => return Err(HarnessError::UnknownKey(other.to_string())),
        }
        Ok(())
    }

    /// Loads a flat key=value file ('#' starts a comment) on top of the
    /// defaults. CLI flags are applied after this, so they win.
    pub fn from_file(path: &Path) -> Result<Self, HarnessError> {
        let mut config = Self::default();
        let text = fs::read_to_string(path)?;
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(HarnessError::InvalidConfig(format!(
                    "line {}: expected key=value, got '{line}'",
                    lineno + 1
                )));
            };
            config.apply_kv(key.trim(), value.trim())?;
        }
        Ok(config)
    }

    /// The same flat format back out, one key per line, suitable for
    /// [`ExperimentConfig::from_file`].
    pub fn to_kv(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "model={}", self.model.as_str());
        let _ = writeln!(out, "algo={}", self.algo.as_str());
        let _ = writeln!(out, "d={}", self.d);
        let _ = writeln!(out, "K={}", self.k);
        let _ = writeln!(out, "S={}", self.s);
        let _ = writeln!(out, "R={}", self.r);
        let _ = writeln!(out, "T={}", self.horizon);
        let _ = writeln!(out, "delta={}", self.delta);
        let _ = writeln!(out, "arms={}", self.arms);
        let _ = writeln!(out, "seeds={}", self.n_seeds);
        let _ = writeln!(out, "base-seed={}", self.base_seed);
        let _ = writeln!(out, "c-gamma={}", self.c_gamma);
        if let Some(scale) = self.radius_scale {
            let _ = writeln!(out, "radius-scale={scale}");
        }
        let _ = writeln!(out, "eps={}", self.eps);
        if let Some(kappa) = self.kappa {
            let _ = writeln!(out, "kappa={kappa}");
        }
        let _ = writeln!(out, "out={}", self.out_dir.display());
        if !self.snapshot_rounds.is_empty() {
            let rounds: Vec<String> = self.snapshot_rounds.iter().map(|t| t.to_string()).collect();
            let _ = writeln!(out, "snapshot-rounds={}", rounds.join(","));
        }
        let _ = writeln!(out, "workers={}", self.workers);
        out
    }

    /// True parameter used for a given dimension: norm S-1 spread evenly
    /// over the coordinates.
    pub fn logistic_theta_star(&self) -> DVector<f64> {
        DVector::from_element(self.d, (self.s - 1.0) / (self.d as f64).sqrt())
    }

    /// Matrix-model true parameter: entries of magnitude (S-1)/sqrt(Kd)
    /// with checkerboard signs, Frobenius norm S-1.
    pub fn mnl_theta_star(&self) -> MNLParam {
        let scale = (self.s - 1.0) / ((self.k * self.d) as f64).sqrt();
        let m = DMatrix::from_fn(self.k, self.d, |i, j| {
            if (i + j) % 2 == 0 {
                scale
            } else {
                -scale
            }
        });
        MNLParam::new(m, self.s).expect("construction keeps the norm under S")
    }

    /// Uniform reward vector of norm 1 over the K paying categories.
    pub fn mnl_rho(&self) -> DVector<f64> {
        DVector::from_element(self.k, 1.0 / (self.k as f64).sqrt())
    }

    pub fn logistic_env(&self, seed: u64) -> Result<LogisticEnvSpec, EnvError> {
        LogisticEnvSpec::new(
            self.logistic_theta_star(),
            self.s,
            ArmGenerator::UniformBall { count: self.arms },
            self.horizon,
            seed,
        )
    }

    pub fn mnl_env(&self, seed: u64) -> Result<MNLEnvSpec, EnvError> {
        MNLEnvSpec::new(
            self.mnl_theta_star(),
            self.mnl_rho(),
            self.r,
            ArmGenerator::UniformBall { count: self.arms },
            self.horizon,
            seed,
        )
    }
}

/// One logged round.
#[derive(Debug, Clone)]
pub struct RunRow {
    pub t: usize,
    pub arm: usize,
    pub instant_regret: f64,
    pub cum_regret: f64,
    pub in_confidence_set: bool,
    pub mle_iters: usize,
    pub wall_ms: u64,
}

/// One seed's trajectory. A failed run keeps the rows gathered before the
/// failure plus the error text; failed runs get no CSV and are excluded
/// from the aggregate.
#[derive(Debug, Clone)]
pub struct RunRecord {
    pub seed: u64,
    pub rows: Vec<RunRow>,
    pub failure: Option<String>,
}

#[derive(Debug, Clone)]
pub struct AggregateRow {
    pub t: usize,
    pub mean_cum_regret: f64,
    pub stderr_cum_regret: f64,
    pub coverage_rate: f64,
}

#[derive(Debug)]
pub struct ExperimentOutcome {
    pub records: Vec<RunRecord>,
    pub aggregate: Vec<AggregateRow>,
    pub elapsed_seconds: f64,
}

impl ExperimentOutcome {
    pub fn any_failed(&self) -> bool {
        self.records.iter().any(|r| r.failure.is_some())
    }
}

const KAPPA_ESTIMATE_SAMPLES: usize = 1000;

// Arms drawn near the origin make the UCB subproblem badly conditioned: the
// linear term can be thousands of times weaker than the penalty curvature,
// and the Barzilai-Borwein crawl to a 1e-8 KKT residual then needs a few
// thousand iterations (observed worst case ~2600 on a norm-0.005 arm).
// Long experiment runs get a wider cap so that rare draw stays a slow round
// instead of a fatal one.
fn harness_solver() -> SolverConfig {
    SolverConfig {
        max_iters: 20_000,
        ..SolverConfig::default()
    }
}

fn run_seed_logistic(config: &ExperimentConfig, seed: u64) -> RunRecord {
    let spec = config
        .logistic_env(seed)
        .expect("config was validated before the runs started");
    let arm_sets = spec.generate_arm_sets();
    let mut agent = LogisticAgentState::new(config.d, config.s, config.delta, harness_solver())
        .expect("config was validated before the runs started");
    let mut policy_rng = stream_rng(seed, RngStream::Policy);
    let mut reward_rng = stream_rng(seed, RngStream::Rewards);
    let scale = match config.algo {
        Algo::RadiusScaled => config.effective_radius_scale(),
        _ => 1.0,
    };
    let mut rows = Vec::with_capacity(config.horizon);
    let mut cum = 0.0;
    for (t, set) in arm_sets.iter().enumerate().map(|(i, s)| (i + 1, s)) {
        let start = Instant::now();
        let mut step = || -> Result<(usize, bool, usize), AgentError> {
            // Membership of the true parameter in the set this round's
            // decision actually uses, logged before the update extends it.
            let beta_sq = agent.radius_sq()? * scale;
            let covered = agent.spec(beta_sq).contains(&spec.theta_star);
            let choice = match config.algo {
                Algo::OfuLogPlus => ofulogplus_choose(&agent, set)?,
                Algo::EpsGreedy => eps_greedy_choose(&agent, set, config.eps, &mut policy_rng),
                Algo::RadiusScaled => baseline_choose(
                    BaselineKind::RadiusScaled { scale },
                    &agent,
                    set,
                    &mut policy_rng,
                )?,
                Algo::MnlUcbPlus => unreachable!("rejected by validate"),
            };
            let reward = sample_reward_logistic(&spec, &set[choice.index], &mut reward_rng);
            let obs = LogisticObservation::new(set[choice.index].clone(), reward)?;
            agent.update(obs)?;
            Ok((choice.index, covered, agent.mle().iterations))
        };
        match step() {
            Ok((arm, covered, mle_iters)) => {
                let instant = instant_regret_logistic(&spec, set, arm);
                cum += instant;
                rows.push(RunRow {
                    t,
                    arm,
                    instant_regret: instant,
                    cum_regret: cum,
                    in_confidence_set: covered,
                    mle_iters,
                    wall_ms: start.elapsed().as_millis() as u64,
                });
            }
            Err(e) => {
                return RunRecord {
                    seed,
                    rows,
                    failure: Some(e.to_string()),
                }
            }
        }
    }
    RunRecord {
        seed,
        rows,
        failure: None,
    }
}

fn run_seed_mnl(config: &ExperimentConfig, seed: u64) -> RunRecord {
    let spec = config
        .mnl_env(seed)
        .expect("config was validated before the runs started");
    let arm_sets = spec.generate_arm_sets();
    let kappa = config
        .kappa
        .unwrap_or_else(|| kappa_report_mnl(&spec, &arm_sets, KAPPA_ESTIMATE_SAMPLES).agent_default());
    let agent = MnlAgentState::new(
        config.k,
        config.d,
        config.s,
        config.delta,
        config.mnl_rho(),
        config.r,
        0.5,
        kappa,
        config.c_gamma,
        harness_solver(),
    );
    let mut agent = match agent {
        Ok(a) => a,
        Err(e) => {
            return RunRecord {
                seed,
                rows: Vec::new(),
                failure: Some(e.to_string()),
            }
        }
    };
    let mut design = MNLDesignState::new(config.d, config.k, config.s, kappa);
    let mut policy_rng = stream_rng(seed, RngStream::Policy);
    let mut reward_rng = stream_rng(seed, RngStream::Rewards);
    let star_flat = spec.theta_star.to_flat();
    let mut rows = Vec::with_capacity(config.horizon);
    let mut cum = 0.0;
    for (t, set) in arm_sets.iter().enumerate().map(|(i, s)| (i + 1, s)) {
        let start = Instant::now();
        let mut step = || -> Result<(usize, bool, usize), HarnessError> {
            let beta_sq = radius_mnl(config.d, config.k, config.s, agent.t(), config.delta)?;
            let covered = ConfidenceSpec::new(
                agent.history(),
                agent.mle().solution.clone(),
                agent.mle().objective,
                beta_sq,
                config.s,
            )
            .contains(&star_flat);
            let choice = match config.algo {
                Algo::MnlUcbPlus => mnlucbplus_choose(&agent, &design, set)?,
                Algo::EpsGreedy => {
                    mnl_eps_greedy_choose(&agent, set, config.eps, &mut policy_rng)
                }
                _ => unreachable!("rejected by validate"),
            };
            let outcome = sample_outcome_mnl(&spec, &set[choice.index], &mut reward_rng);
            let obs = MNLObservation::new(set[choice.index].clone(), outcome)
                .map_err(AgentError::from)?;
            agent.update(obs, &mut design)?;
            Ok((choice.index, covered, agent.mle().iterations))
        };
        match step() {
            Ok((arm, covered, mle_iters)) => {
                let instant = instant_regret_mnl(&spec, set, arm);
                cum += instant;
                rows.push(RunRow {
                    t,
                    arm,
                    instant_regret: instant,
                    cum_regret: cum,
                    in_confidence_set: covered,
                    mle_iters,
                    wall_ms: start.elapsed().as_millis() as u64,
                });
            }
            Err(e) => {
                return RunRecord {
                    seed,
                    rows,
                    failure: Some(e.to_string()),
                }
            }
        }
    }
    RunRecord {
        seed,
        rows,
        failure: None,
    }
}

fn aggregate_records(records: &[RunRecord], horizon: usize) -> Vec<AggregateRow> {
    let complete: Vec<&RunRecord> = records.iter().filter(|r| r.failure.is_none()).collect();
    if complete.is_empty() {
        return Vec::new();
    }
    let n = complete.len() as f64;
    (0..horizon)
        .map(|i| {
            let values: Vec<f64> = complete.iter().map(|r| r.rows[i].cum_regret).collect();
            let mean = values.iter().sum::<f64>() / n;
            let stderr = if complete.len() >= 2 {
                let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
                (var / n).sqrt()
            } else {
                0.0
            };
            let coverage = complete
                .iter()
                .filter(|r| r.rows[i].in_confidence_set)
                .count() as f64
                / n;
            AggregateRow {
                t: i + 1,
                mean_cum_regret: mean,
                stderr_cum_regret: stderr,
                coverage_rate: coverage,
            }
        })
        .collect()
}

fn write_run_csv(path: &Path, record: &RunRecord) -> Result<(), HarnessError> {
    let mut out = String::from("seed,t,arm,instant_regret,cum_regret,in_confidence_set,mle_iters,wall_ms\n");
    for row in &record.rows {
        let _ = writeln!(
            out,
            "{},{},{},{:.16e},{:.16e},{},{},{}",
            record.seed,
            row.t,
            row.arm,
            row.instant_regret,
            row.cum_regret,
            u8::from(row.in_confidence_set),
            row.mle_iters,
            row.wall_ms
        );
    }
    fs::write(path, out)?;
    Ok(())
}

fn write_aggregate_csv(path: &Path, rows: &[AggregateRow]) -> Result<(), HarnessError> {
    let mut out = String::from("t,mean_cum_regret,stderr_cum_regret,coverage_rate\n");
    for row in rows {
        let _ = writeln!(
            out,
            "{},{:.16e},{:.16e},{:.16e}",
            row.t, row.mean_cum_regret, row.stderr_cum_regret, row.coverage_rate
        );
    }
    fs::write(path, out)?;
    Ok(())
}

/// Runs every seed, writes one `run_<seed>.csv` per completed run plus
/// `aggregate.csv` and the effective `config_used.txt`, and returns the
/// in-memory records. A failed seed is recorded in `failures.txt` and in
/// the returned outcome; remaining seeds still run.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentOutcome, HarnessError> {
    config.validate()?;
    fs::create_dir_all(&config.out_dir)?;
    let started = Instant::now();
    let seeds: Vec<u64> = (0..config.n_seeds)
        .map(|i| config.base_seed + i as u64)
        .collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.workers)
        .build()
        .map_err(|e| HarnessError::InvalidConfig(format!("worker pool: {e}")))?;
    let records: Vec<RunRecord> = pool.install(|| {
        seeds
            .par_iter()
            .map(|&seed| match config.model {
                Model::Logistic => run_seed_logistic(config, seed),
                Model::Mnl => run_seed_mnl(config, seed),
            })
            .collect()
    });

    for record in &records {
        if record.failure.is_none() {
            let path = config.out_dir.join(format!("run_{}.csv", record.seed));
            write_run_csv(&path, record)?;
        }
    }
    let aggregate = aggregate_records(&records, config.horizon);
    write_aggregate_csv(&config.out_dir.join("aggregate.csv"), &aggregate)?;
    fs::write(config.out_dir.join("config_used.txt"), config.to_kv())?;
    let failures: Vec<String> = records
        .iter()
        .filter_map(|r| {
            r.failure
                .as_ref()
                .map(|f| format!("seed {}: {f}", r.seed))
        })
        .collect();
    if !failures.is_empty() {
        fs::write(
            config.out_dir.join("failures.txt"),
            failures.join("\n") + "\n",
        )?;
    }
    Ok(ExperimentOutcome {
        records,
        aggregate,
        elapsed_seconds: started.elapsed().as_secs_f64(),
    })
}

/// Planar confidence-set snapshot: the set held entering the stated round.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Snapshot {
    pub round: usize,
    pub mle: [f64; 2],
    pub theta_star: [f64; 2],
    pub boundary: Vec<[f64; 2]>,
    pub radius_sq: f64,
}

const SNAPSHOT_RAYS: usize = 256;

/// Replays the first seed's run and writes `snapshot_t<round>.json` for
/// each requested round: the MLE, the true parameter, and a 256-ray
/// boundary trace of the set in force when that round began.
pub fn snapshot_sets(
    config: &ExperimentConfig,
    rounds: &[usize],
) -> Result<Vec<PathBuf>, HarnessError> {
    config.validate()?;
    if config.model != Model::Logistic || config.d != 2 {
        return Err(HarnessError::SnapshotDimension(config.d));
    }
    for &round in rounds {
        if round == 0 || round > config.horizon {
            return Err(HarnessError::InvalidConfig(format!(
                "snapshot round {round} outside [1, T]"
            )));
        }
    }
    fs::create_dir_all(&config.out_dir)?;
    let seed = config.base_seed;
    let spec = config.logistic_env(seed)?;
    let arm_sets = spec.generate_arm_sets();
    let mut agent = LogisticAgentState::new(config.d, config.s, config.delta, harness_solver())
        .map_err(HarnessError::Agent)?;
    let mut policy_rng = stream_rng(seed, RngStream::Policy);
    let mut reward_rng = stream_rng(seed, RngStream::Rewards);
    let scale = match config.algo {
        Algo::RadiusScaled => config.effective_radius_scale(),
        _ => 1.0,
    };
    let last = rounds.iter().copied().max().unwrap_or(0);
    let mut paths = Vec::new();
    for (t, set) in arm_sets.iter().enumerate().map(|(i, s)| (i + 1, s)) {
        if t > last {
            break;
        }
        if rounds.contains(&t) {
            let beta_sq = agent.radius_sq()? * scale;
            let boundary = boundary_trace_2d(&agent.spec(beta_sq), SNAPSHOT_RAYS)?;
            let snapshot = Snapshot {
                round: t,
                mle: [agent.mle().solution[0], agent.mle().solution[1]],
                theta_star: [spec.theta_star[0], spec.theta_star[1]],
                boundary,
                radius_sq: beta_sq,
            };
            let path = config.out_dir.join(format!("snapshot_t{t}.json"));
            fs::write(&path, serde_json::to_string_pretty(&snapshot)?)?;
            paths.push(path);
        }
        let choice = match config.algo {
            Algo::OfuLogPlus => ofulogplus_choose(&agent, set)?,
            Algo::EpsGreedy => eps_greedy_choose(&agent, set, config.eps, &mut policy_rng),
            Algo::RadiusScaled => baseline_choose(
                BaselineKind::RadiusScaled { scale },
                &agent,
                set,
                &mut policy_rng,
            )?,
            Algo::MnlUcbPlus => unreachable!("rejected above"),
        };
        let reward = sample_reward_logistic(&spec, &set[choice.index], &mut reward_rng);
        agent
            .update(LogisticObservation::new(set[choice.index].clone(), reward).map_err(AgentError::from)?)?;
    }
    Ok(paths)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn tiny_config(dir: &Path) -> ExperimentConfig {
        ExperimentConfig {
            horizon: 5,
            arms: 4,
            n_seeds: 3,
            out_dir: dir.to_path_buf(),
            ..ExperimentConfig::default()
        }
    }

    #[test]
    fn kv_round_trip_preserves_every_field() {
        let mut config = ExperimentConfig::default();
        config.apply_kv("S", "10").unwrap();
        config.apply_kv("radius-scale", "3.5").unwrap();
        config.apply_kv("kappa", "42").unwrap();
        config.apply_kv("snapshot-rounds", "1, 50,100").unwrap();
        config.apply_kv("algo", "radius_scaled").unwrap();
        let text = config.to_kv();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("config.txt");
        fs::write(&path, &text).unwrap();
        let loaded = ExperimentConfig::from_file(&path).unwrap();
        assert_eq!(loaded.to_kv(), text);
        assert_eq!(loaded.snapshot_rounds, vec![1, 50, 100]);
        assert_eq!(loaded.s, 10.0);
    }

    #[test]
    fn unknown_keys_and_bad_values_are_rejected() {
        let mut config = ExperimentConfig::default();
        assert!(matches!(
            config.apply_kv("horizon", "10"),
            Err(HarnessError::UnknownKey(_))
        ));
        assert!(matches!(
            config.apply_kv("T", "ten"),
            Err(HarnessError::BadValue { .. })
        ));
        assert!(matches!(
            config.apply_kv("model", "probit"),
            Err(HarnessError::BadValue { .. })
        ));
    }

    #[test]
    fn validate_rejects_model_algo_mismatches() {
        let mut config = ExperimentConfig::default();
        config.algo = Algo::MnlUcbPlus;
        assert!(config.validate().is_err());
        config.model = Model::Mnl;
        assert!(config.validate().is_ok());
        config.algo = Algo::RadiusScaled;
        assert!(config.validate().is_err());
        config.algo = Algo::EpsGreedy;
        assert!(config.validate().is_ok());
    }

    #[test]
    fn single_round_experiment_writes_one_row() {
        let dir = tempfile::tempdir().unwrap();
        let config = ExperimentConfig {
            horizon: 1,
            n_seeds: 1,
            arms: 3,
            out_dir: dir.path().to_path_buf(),
            ..ExperimentConfig::default()
        };
        let outcome = run_experiment(&config).unwrap();
        assert!(!outcome.any_failed());
        assert_eq!(outcome.records[0].rows.len(), 1);
        let csv = fs::read_to_string(dir.path().join("run_0.csv")).unwrap();
        assert_eq!(csv.lines().count(), 2);
        assert!(csv.starts_with("seed,t,arm,"));
        let agg = fs::read_to_string(dir.path().join("aggregate.csv")).unwrap();
        assert_eq!(agg.lines().count(), 2);
    }

    #[test]
    fn aggregate_matches_per_seed_means_and_monotone_regret() {
        let dir = tempfile::tempdir().unwrap();
        let config = ExperimentConfig {
            algo: Algo::EpsGreedy,
            eps: 0.5,
            ..tiny_config(dir.path())
        };
        let outcome = run_experiment(&config).unwrap();
        assert_eq!(outcome.aggregate.len(), 5);
        for (i, agg) in outcome.aggregate.iter().enumerate() {
            let mean: f64 = outcome
                .records
                .iter()
                .map(|r| r.rows[i].cum_regret)
                .sum::<f64>()
                / outcome.records.len() as f64;
            assert_abs_diff_eq!(agg.mean_cum_regret, mean, epsilon = 1e-12);
            if i > 0 {
                assert!(agg.mean_cum_regret >= outcome.aggregate[i - 1].mean_cum_regret - 1e-15);
            }
        }
        for record in &outcome.records {
            let resummed: f64 = record.rows.iter().map(|r| r.instant_regret).sum();
            assert_abs_diff_eq!(
                resummed,
                record.rows.last().unwrap().cum_regret,
                epsilon = 1e-12
            );
        }
    }

    #[test]
    fn mnl_smoke_run_completes() {
        let dir = tempfile::tempdir().unwrap();
        let config = ExperimentConfig {
            model: Model::Mnl,
            algo: Algo::MnlUcbPlus,
            horizon: 4,
            arms: 3,
            n_seeds: 1,
            kappa: Some(20.0),
            out_dir: dir.path().to_path_buf(),
            ..ExperimentConfig::default()
        };
        let outcome = run_experiment(&config).unwrap();
        assert!(!outcome.any_failed(), "{:?}", outcome.records[0].failure);
        assert_eq!(outcome.records[0].rows.len(), 4);
    }

    #[test]
    fn first_round_snapshot_is_the_whole_ball() {
        let dir = tempfile::tempdir().unwrap();
        let config = ExperimentConfig {
            horizon: 3,
            arms: 3,
            n_seeds: 1,
            out_dir: dir.path().to_path_buf(),
            ..ExperimentConfig::default()
        };
        let paths = snapshot_sets(&config, &[1, 3]).unwrap();
        assert_eq!(paths.len(), 2);
        let text = fs::read_to_string(&paths[0]).unwrap();
        let snap: Snapshot = serde_json::from_str(&text).unwrap();
        assert_eq!(snap.round, 1);
        assert_eq!(snap.boundary.len(), 256);
        for p in &snap.boundary {
            let norm = (p[0] * p[0] + p[1] * p[1]).sqrt();
            assert_abs_diff_eq!(norm, 5.0, epsilon = 1e-6);
        }
        assert_eq!(snap.mle, [0.0, 0.0]);
        // Round-trip through serialization.
        let again: Snapshot = serde_json::from_str(&serde_json::to_string(&snap).unwrap()).unwrap();
        assert_eq!(again.boundary, snap.boundary);
    }

    #[test]
    fn snapshots_require_the_planar_model() {
        let dir = tempfile::tempdir().unwrap();
        let mut config = tiny_config(dir.path());
        config.d = 3;
        assert!(matches!(
            snapshot_sets(&config, &[1]),
            Err(HarnessError::SnapshotDimension(3))
        ));
    }

    #[test]
    fn rerun_is_identical_except_wall_clock() {
        let dir_a = tempfile::tempdir().unwrap();
        let dir_b = tempfile::tempdir().unwrap();
        let config_a = ExperimentConfig {
            algo: Algo::EpsGreedy,
            ..tiny_config(dir_a.path())
        };
        let config_b = ExperimentConfig {
            out_dir: dir_b.path().to_path_buf(),
            ..config_a.clone()
        };
        run_experiment(&config_a).unwrap();
        run_experiment(&config_b).unwrap();
        for seed in 0..3 {
            let a = fs::read_to_string(dir_a.path().join(format!("run_{seed}.csv"))).unwrap();
            let b = fs::read_to_string(dir_b.path().join(format!("run_{seed}.csv"))).unwrap();
            let strip = |text: &str| -> Vec<String> {
                text.lines()
                    .map(|l| l.rsplit_once(',').unwrap().0.to_string())
                    .collect()
            };
            assert_eq!(strip(&a), strip(&b));
        }
    }
}
