//! Bandit policies: the optimistic algorithms for both models plus the two
//! baselines the experiment protocol compares against.
//!
//! Every policy follows the same contract: look at the round's arm set,
//! return an arm index plus the per-arm scores that drove the choice, then
//! ingest the observed outcome, which refreshes the ball-constrained MLE.
//! Ties always break toward the lowest arm index; scores are recorded so the
//! harness can log optimism diagnostics without recomputing solves.
//!
//! The binary-model optimist scores each arm by the exact inner maximization
//! max <x, theta> over the current confidence set. The multinomial optimist
//! scores by estimated mean reward plus an explicit exploration bonus
//! sqrt(2 kappa) R L gamma_t ||x||_{V_t^-1}, with V_t the regularized design
//! matrix: the inner maximization over a matrix ball has no per-arm
//! closed-form reduction, which is exactly why the bonus form exists.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use thiserror::Error;

use crate::confidence::{radius_logistic, ConfidenceError, ConfidenceSpec};
use crate::glm::{
    softmax_probs, CumulativeLoss, GlmError, LogisticHistory, LogisticObservation, MNLObservation,
    MNLParam, MnlHistory,
};
use crate::optim::{
    mle_ball_warm, ucb_advance, ucb_begin, OptimError, SolveReport, SolverConfig, UcbStart,
};

#[derive(Debug, Error)]
pub enum AgentError {
    #[error("solver failed to converge at round {round}{}", match .arm { Some(a) => format!(", arm {a}"), None => String::new() })]
    SolverDiverged { round: usize, arm: Option<usize> },
    #[error("invalid agent configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Confidence(#[from] ConfidenceError),
    #[error(transparent)]
    Glm(#[from] GlmError),
    #[error(transparent)]
    Optim(#[from] OptimError),
}

/// An arm index together with the per-arm scores behind it (UCB values,
/// mean-plus-bonus values, or plain estimated means, by policy). For the
/// set-based optimists, an arm eliminated before full convergence keeps a
/// certified upper bound on its value rather than the converged optimum;
/// the chosen arm's score is always fully converged.
#[derive(Debug, Clone)]
pub struct Choice {
    pub index: usize,
    pub scores: Vec<f64>,
}

fn argmax_lowest(scores: &[f64]) -> usize {
    let mut best = 0;
    for (i, &s) in scores.iter().enumerate().skip(1) {
        if s > scores[best] {
            best = i;
        }
    }
    best
}

/// Binary-model agent state: the observation history, the current MLE, and
/// the policy parameters. The round counter t always equals the history
/// length plus one.
#[derive(Debug, Clone)]
pub struct LogisticAgentState {
    history: LogisticHistory,
    mle: SolveReport,
    t: usize,
    s: f64,
    delta: f64,
    solver: SolverConfig,
}

impl LogisticAgentState {
    pub fn new(d: usize, s: f64, delta: f64, solver: SolverConfig) -> Result<Self, AgentError> {
        if !(delta > 0.0 && delta < 1.0) {
            return Err(AgentError::InvalidConfig(format!(
                "delta must lie in (0,1), got {delta}"
            )));
        }
        if s <= 0.0 {
            return Err(AgentError::InvalidConfig(format!(
                "norm bound must be positive, got {s}"
            )));
        }
        Ok(Self {
            history: LogisticHistory::new(d),
            mle: SolveReport {
                solution: DVector::zeros(d),
                objective: 0.0,
                iterations: 0,
                converged: true,
                kkt_residual: 0.0,
            },
            t: 1,
            s,
            delta,
            solver,
        })
    }

    pub fn t(&self) -> usize {
        self.t
    }

    pub fn history(&self) -> &LogisticHistory {
        &self.history
    }

    pub fn mle(&self) -> &SolveReport {
        &self.mle
    }

    pub fn norm_bound(&self) -> f64 {
        self.s
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn radius_sq(&self) -> Result<f64, ConfidenceError> {
        radius_logistic(self.history.dim(), self.s, self.t, self.delta)
    }

    /// The current confidence set, borrowing this state's history.
    pub fn spec(&self, radius_sq: f64) -> ConfidenceSpec<'_> {
        ConfidenceSpec::new(
            &self.history,
            self.mle.solution.clone(),
            self.mle.objective,
            radius_sq,
            self.s,
        )
    }

    /// Ingests the played arm's outcome and refreshes the MLE, warm-started
    /// from the previous round's solution.
    pub fn update(&mut self, obs: LogisticObservation) -> Result<(), AgentError> {
        self.history.push(obs)?;
        let report = mle_ball_warm(&self.history, self.s, self.mle.solution.clone(), &self.solver);
        if !report.converged {
            return Err(AgentError::SolverDiverged {
                round: self.t,
                arm: None,
            });
        }
        self.mle = report;
        self.t += 1;
        Ok(())
    }
}

fn optimistic_choose(
    state: &LogisticAgentState,
    arm_set: &[DVector<f64>],
    radius_scale: f64,
) -> Result<Choice, AgentError> {
    assert!(!arm_set.is_empty(), "arm set must be nonempty");
    let beta_sq = state.radius_sq()? * radius_scale;
    let spec = state.spec(beta_sq);
    let diverged = |arm| AgentError::SolverDiverged {
        round: state.t,
        arm: Some(arm),
    };

    // First pass: every arm either resolves in closed form or solves its
    // first (softest) penalty stage. In the plane the arms go in angular
    // order with each stage chained from the previous arm's optimum:
    // neighboring directions have neighboring tangency points on the set
    // boundary, so most of the solver's boundary travel disappears. The
    // subproblems are convex, so starts never move the converged values.
    let mut order: Vec<usize> = (0..arm_set.len()).collect();
    if state.history.dim() == 2 {
        order.sort_by(|&a, &b| {
            let ang = |x: &DVector<f64>| x[1].atan2(x[0]);
            ang(&arm_set[a])
                .partial_cmp(&ang(&arm_set[b]))
                .expect("arm angles are finite")
                .then(a.cmp(&b))
        });
    }
    let mut scores = vec![0.0; arm_set.len()];
    let mut open = Vec::new();
    let mut best_val = f64::NEG_INFINITY;
    let mut best_idx = usize::MAX;
    let mut warm = spec.center().clone();
    for &i in &order {
        match ucb_begin(&spec, &arm_set[i], &warm, &state.solver)? {
            UcbStart::Exact(report) => {
                scores[i] = report.value;
                if report.value > best_val || (report.value == best_val && i < best_idx) {
                    best_val = report.value;
                    best_idx = i;
                }
            }
            UcbStart::Pending(ladder) => {
                if ladder.iterations > 0 {
                    warm = ladder.current().clone();
                }
                if ladder.finished {
                    if !ladder.stage_converged {
                        return Err(diverged(i));
                    }
                    scores[i] = ladder.value;
                    if ladder.value > best_val || (ladder.value == best_val && i < best_idx) {
                        best_val = ladder.value;
                        best_idx = i;
                    }
                } else {
                    scores[i] = ladder.value;
                    open.push((i, ladder));
                }
            }
        }
    }

    // Second pass: a converged soft stage's value is a certified upper
    // bound on that arm's true optimum, so an arm whose bound cannot beat
    // the best exact value settled so far can never be the argmax and its
    // continuation stops right there (its logged score stays the bound).
    // The rest escalate to full tolerance, best bound first so each exact
    // value prunes as many of the remaining arms as possible. The chosen
    // index is identical to the one a full per-arm solve would produce,
    // ties to the lowest index included.
    let bound = |ladder: &crate::optim::UcbLadder| {
        if ladder.stage_converged {
            ladder.value
        } else {
            f64::INFINITY
        }
    };
    open.sort_by(|a, b| {
        bound(&a.1)
            .partial_cmp(&bound(&b.1))
            .expect("stage values are finite")
            .reverse()
            .then(a.0.cmp(&b.0))
    });
    for (i, mut ladder) in open {
        let u = bound(&ladder);
        if u < best_val || (u == best_val && i > best_idx) {
            continue;
        }
        loop {
            if ladder.failed() {
                return Err(diverged(i));
            }
            if ladder.finished {
                if !ladder.stage_converged {
                    return Err(diverged(i));
                }
                break;
            }
            if ladder.stage_converged && ladder.value < best_val {
                break;
            }
            ucb_advance(&spec, &arm_set[i], &mut ladder, &state.solver);
        }
        scores[i] = ladder.value;
        if ladder.finished
            && (ladder.value > best_val || (ladder.value == best_val && i < best_idx))
        {
            best_val = ladder.value;
            best_idx = i;
        }
    }
    Ok(Choice {
        index: best_idx,
        scores,
    })
}

/// Optimistic choice over the exact confidence set: per-arm inner
/// maximization, argmax across arms.
pub fn ofulogplus_choose(
    state: &LogisticAgentState,
    arm_set: &[DVector<f64>],
) -> Result<Choice, AgentError> {
    optimistic_choose(state, arm_set, 1.0)
}

/// Baseline selector kinds: explore-then-exploit noise, or the same
/// optimistic rule run on a set whose squared radius is inflated by
/// `scale` (standing in for looser published radii).
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BaselineKind {
    EpsGreedy { eps: f64 },
    RadiusScaled { scale: f64 },
}

/// Epsilon-greedy over the estimated means. The exploration coin and the
/// candidate index are drawn on every call, explored or not, so the RNG
/// stream position never depends on earlier outcomes.
pub fn eps_greedy_choose<R: Rng>(
    state: &LogisticAgentState,
    arm_set: &[DVector<f64>],
    eps: f64,
    rng: &mut R,
) -> Choice {
    assert!(!arm_set.is_empty(), "arm set must be nonempty");
    assert!((0.0..=1.0).contains(&eps), "eps must lie in [0,1]");
    let coin: f64 = rng.gen();
    let random_index = rng.gen_range(0..arm_set.len());
    let scores: Vec<f64> = arm_set
        .iter()
        .map(|x| x.dot(&state.mle.solution))
        .collect();
    let index = if coin < eps {
        random_index
    } else {
        argmax_lowest(&scores)
    };
    Choice { index, scores }
}

/// Dispatches a baseline. The radius-scaled variant consumes no randomness,
/// so at scale 1 it reproduces [`ofulogplus_choose`] bit for bit.
pub fn baseline_choose<R: Rng>(
    kind: BaselineKind,
    state: &LogisticAgentState,
    arm_set: &[DVector<f64>],
    rng: &mut R,
) -> Result<Choice, AgentError> {
    match kind {
        BaselineKind::EpsGreedy { eps } => {
            if !(0.0..=1.0).contains(&eps) {
                return Err(AgentError::InvalidConfig(format!(
                    "eps must lie in [0,1], got {eps}"
                )));
            }
            Ok(eps_greedy_choose(state, arm_set, eps, rng))
        }
        BaselineKind::RadiusScaled { scale } => {
            if scale <= 0.0 {
                return Err(AgentError::InvalidConfig(format!(
                    "radius scale must be positive, got {scale}"
                )));
            }
            optimistic_choose(state, arm_set, scale)
        }
    }
}

/// Regularized design matrix V_t = 2 kappa lambda I + sum of played x x^T,
/// lambda = K/(4 S^2), with its inverse kept current for bonus norms. At
/// d <= 10 a direct inverse per update is cheaper than tracking factors.
#[derive(Debug, Clone)]
pub struct MNLDesignState {
    v: DMatrix<f64>,
    v_inv: DMatrix<f64>,
    lambda: f64,
    kappa: f64,
}

impl MNLDesignState {
    pub fn new(d: usize, k: usize, s: f64, kappa: f64) -> Self {
        assert!(kappa > 0.0, "kappa must be positive");
        let lambda = k as f64 / (4.0 * s * s);
        let ridge = 2.0 * kappa * lambda;
        Self {
            v: DMatrix::identity(d, d) * ridge,
            v_inv: DMatrix::identity(d, d) / ridge,
            lambda,
            kappa,
        }
    }

    pub fn push_arm(&mut self, x: &DVector<f64>) {
        self.v += x * x.transpose();
        self.v_inv = self
            .v
            .clone()
            .try_inverse()
            .expect("design matrix is positive definite by construction");
    }

    /// ||x||_{V^-1}, the leverage norm in the exploration bonus.
    pub fn inv_norm(&self, x: &DVector<f64>) -> f64 {
        (x.dot(&(&self.v_inv * x))).max(0.0).sqrt()
    }

    pub fn v(&self) -> &DMatrix<f64> {
        &self.v
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn kappa(&self) -> f64 {
        self.kappa
    }
}

/// Multinomial agent state. Flattened parameters keep the MLE plumbing
/// shared with the binary model; `rho` is the per-category reward vector,
/// `r_bound` its norm bound, `l_bound` the link-gradient Lipschitz constant
/// (1/2 unless overridden), `kappa` the curvature constant the bonus uses.
#[derive(Debug, Clone)]
pub struct MnlAgentState {
    history: MnlHistory,
    mle: SolveReport,
    t: usize,
    s: f64,
    delta: f64,
    rho: DVector<f64>,
    r_bound: f64,
    l_bound: f64,
    kappa: f64,
    c_gamma: f64,
    solver: SolverConfig,
}

impl MnlAgentState {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        k: usize,
        d: usize,
        s: f64,
        delta: f64,
        rho: DVector<f64>,
        r_bound: f64,
        l_bound: f64,
        kappa: f64,
        c_gamma: f64,
        solver: SolverConfig,
    ) -> Result<Self, AgentError> {
        if !(delta > 0.0 && delta < 1.0) {
            return Err(AgentError::InvalidConfig(format!(
                "delta must lie in (0,1), got {delta}"
            )));
        }
        if rho.len() != k {
            return Err(AgentError::InvalidConfig(format!(
                "reward vector has {} entries, expected K = {k}",
                rho.len()
            )));
        }
        if rho.norm() > r_bound + 1e-9 * r_bound.max(1.0) {
            return Err(AgentError::InvalidConfig(format!(
                "reward vector norm {} exceeds R = {r_bound}",
                rho.norm()
            )));
        }
        if !(l_bound > 0.0 && l_bound <= 0.5) {
            return Err(AgentError::InvalidConfig(format!(
                "link Lipschitz bound must lie in (0, 1/2], got {l_bound}"
            )));
        }
        if kappa <= 0.0 {
            return Err(AgentError::InvalidConfig(format!(
                "kappa must be positive, got {kappa}"
            )));
        }
        if c_gamma <= 0.0 {
            return Err(AgentError::InvalidConfig(format!(
                "c_gamma must be positive, got {c_gamma}"
            )));
        }
        Ok(Self {
            history: MnlHistory::new(k, d),
            mle: SolveReport {
                solution: DVector::zeros(k * d),
                objective: 0.0,
                iterations: 0,
                converged: true,
                kkt_residual: 0.0,
            },
            t: 1,
            s,
            delta,
            rho,
            r_bound,
            l_bound,
            kappa,
            c_gamma,
            solver,
        })
    }

    pub fn t(&self) -> usize {
        self.t
    }

    pub fn history(&self) -> &MnlHistory {
        &self.history
    }

    pub fn mle(&self) -> &SolveReport {
        &self.mle
    }

    pub fn norm_bound(&self) -> f64 {
        self.s
    }

    pub fn rho(&self) -> &DVector<f64> {
        &self.rho
    }

    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    pub fn params(&self) -> MNLParam {
        MNLParam::from_flat(
            &self.mle.solution,
            self.history.categories(),
            self.history.arm_dim(),
            self.s,
        )
        .expect("MLE solution stays inside its own ball")
    }

    pub fn update(
        &mut self,
        obs: MNLObservation,
        design: &mut MNLDesignState,
    ) -> Result<(), AgentError> {
        design.push_arm(obs.arm());
        self.history.push(obs)?;
        let report = mle_ball_warm(&self.history, self.s, self.mle.solution.clone(), &self.solver);
        if !report.converged {
            return Err(AgentError::SolverDiverged {
                round: self.t,
                arm: None,
            });
        }
        self.mle = report;
        self.t += 1;
        Ok(())
    }
}

/// Mean-plus-bonus choice for the multinomial model:
/// `rho' mu(x, Theta_hat) + sqrt(2 kappa) R L gamma_t ||x||_{V_t^-1}`.
pub fn mnlucbplus_choose(
    state: &MnlAgentState,
    design: &MNLDesignState,
    arm_set: &[DVector<f64>],
) -> Result<Choice, AgentError> {
    assert!(!arm_set.is_empty(), "arm set must be nonempty");
    let params = state.params();
    let k = state.history.categories();
    let gamma = crate::confidence::gamma_mnl(
        state.history.arm_dim(),
        k,
        state.s,
        state.t,
        state.delta,
        state.c_gamma,
    )?;
    let coef = (2.0 * state.kappa).sqrt() * state.r_bound * state.l_bound * gamma;
    let mut scores = Vec::with_capacity(arm_set.len());
    for arm in arm_set {
        let probs = softmax_probs(arm, &params);
        let mean: f64 = (0..k).map(|i| state.rho[i] * probs[i + 1]).sum();
        scores.push(mean + coef * design.inv_norm(arm));
    }
    Ok(Choice {
        index: argmax_lowest(&scores),
        scores,
    })
}

/// Epsilon-greedy for the multinomial model, mirroring the binary variant's
/// fixed RNG consumption; at eps = 1 it is the uniform-random policy.
pub fn mnl_eps_greedy_choose<R: Rng>(
    state: &MnlAgentState,
    arm_set: &[DVector<f64>],
    eps: f64,
    rng: &mut R,
) -> Choice {
    assert!(!arm_set.is_empty(), "arm set must be nonempty");
    assert!((0.0..=1.0).contains(&eps), "eps must lie in [0,1]");
    let coin: f64 = rng.gen();
    let random_index = rng.gen_range(0..arm_set.len());
    let params = state.params();
    let k = state.history.categories();
    let scores: Vec<f64> = arm_set
        .iter()
        .map(|x| {
            let probs = softmax_probs(x, &params);
            (0..k).map(|i| state.rho[i] * probs[i + 1]).sum()
        })
        .collect();
    let index = if coin < eps {
        random_index
    } else {
        argmax_lowest(&scores)
    };
    Choice { index, scores }
}
