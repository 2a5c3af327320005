//! Constrained solvers: the ball-constrained MLE and the per-arm optimistic
//! maximization, plus a brute-force grid oracle used to cross-check both.
//!
//! One projected-gradient routine drives everything. The ball projection is
//! closed-form, gradients of the cumulative losses are globally Lipschitz on
//! the ball, and the method is deterministic, which matters more here than
//! iteration counts at d <= 10. Steps start from a Barzilai-Borwein estimate
//! and fall back to monotone Armijo backtracking, with the projected gradient
//! mapping at unit step as the convergence residual.
//!
//! The optimistic inner problem (maximize <x, theta> over the confidence
//! set) is handled by exterior quadratic-penalty continuation on the loss
//! constraint rather than a barrier: a barrier needs a strictly feasible
//! interior start, which degenerates when the radius is tiny, while the
//! penalty path is insensitive to that. A feasibility probe runs first: when
//! the ball-boundary point in the arm's direction already satisfies the loss
//! constraint, the ball maximum is the exact answer and no iteration happens.

use nalgebra::DVector;
use thiserror::Error;

use crate::confidence::ConfidenceSpec;
use crate::glm::CumulativeLoss;

#[derive(Debug, Error)]
pub enum OptimError {
    #[error("arm has dimension {got}, expected {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("grid oracle supports at most 3 dimensions, got {0}")]
    GridDimension(usize),
}

#[derive(Debug, Clone)]
pub struct SolverConfig {
    /// Outer iteration cap per solve (per penalty stage for the UCB path).
    pub max_iters: usize,
    /// Convergence threshold on the projected-gradient-mapping norm.
    pub grad_tol: f64,
    /// Step shrink factor for backtracking.
    pub backtrack: f64,
    /// Armijo sufficient-decrease constant.
    pub armijo: f64,
    /// Multiplier on the penalty weight between continuation stages.
    pub penalty_growth: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            max_iters: 2000,
            grad_tol: 1e-8,
            backtrack: 0.5,
            armijo: 1e-4,
            penalty_growth: 10.0,
        }
    }
}

impl SolverConfig {
    fn validate(&self) {
        assert!(self.max_iters > 0, "max_iters must be positive");
        assert!(self.grad_tol > 0.0, "grad_tol must be positive");
        assert!(
            self.backtrack > 0.0 && self.backtrack < 1.0,
            "backtrack factor must lie in (0,1)"
        );
        assert!(
            self.armijo > 0.0 && self.armijo < 1.0,
            "armijo constant must lie in (0,1)"
        );
        assert!(self.penalty_growth > 1.0, "penalty growth must exceed 1");
    }
}

#[derive(Debug, Clone)]
pub struct SolveReport {
    pub solution: DVector<f64>,
    pub objective: f64,
    pub iterations: usize,
    pub converged: bool,
    pub kkt_residual: f64,
}

#[derive(Debug, Clone)]
pub struct UcbReport {
    pub value: f64,
    pub maximizer: DVector<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// Loss-constraint overshoot max(0, gap - beta^2) at the maximizer.
    pub violation: f64,
}

trait Objective {
    fn value(&self, x: &DVector<f64>) -> f64;
    fn value_grad(&self, x: &DVector<f64>) -> (f64, DVector<f64>);
}

struct MleObjective<'a> {
    loss: &'a dyn CumulativeLoss,
}

impl Objective for MleObjective<'_> {
    fn value(&self, x: &DVector<f64>) -> f64 {
        self.loss.loss(x)
    }
    fn value_grad(&self, x: &DVector<f64>) -> (f64, DVector<f64>) {
        self.loss.loss_grad(x)
    }
}

struct PenaltyObjective<'a, 'b> {
    spec: &'a ConfidenceSpec<'b>,
    arm: &'a DVector<f64>,
    rho: f64,
}

impl PenaltyObjective<'_, '_> {
    fn overshoot(&self, loss: f64) -> f64 {
        (loss - self.spec.mle_loss() - self.spec.radius_sq()).max(0.0)
    }
}

impl Objective for PenaltyObjective<'_, '_> {
    fn value(&self, x: &DVector<f64>) -> f64 {
        let v = self.overshoot(self.spec.loss().loss(x));
        -self.arm.dot(x) + self.rho * v * v
    }
    fn value_grad(&self, x: &DVector<f64>) -> (f64, DVector<f64>) {
        let (loss, grad) = self.spec.loss().loss_grad(x);
        let v = self.overshoot(loss);
        let value = -self.arm.dot(x) + self.rho * v * v;
        let g = grad * (2.0 * self.rho * v) - self.arm;
        (value, g)
    }
}

fn project_ball(x: &DVector<f64>, s: f64) -> DVector<f64> {
    let n = x.norm();
    if n > s {
        x * (s / n)
    } else {
        x.clone()
    }
}

struct SpgResult {
    x: DVector<f64>,
    value: f64,
    iterations: usize,
    converged: bool,
    kkt_residual: f64,
}

// Non-monotone line-search memory and the stagnation window. Ten reference
// values is the classic choice for BB steps; fifty stagnant iterations at
// sub-ulp progress reliably separates an arithmetic floor from slow zigzag
// on ill-conditioned level sets.
const NONMONOTONE_MEMORY: usize = 10;
const STAGNATION_WINDOW: usize = 50;

fn spg_minimize(
    obj: &dyn Objective,
    start: DVector<f64>,
    s: f64,
    config: &SolverConfig,
) -> SpgResult {
    let mut x = project_ball(&start, s);
    let (mut fx, mut g) = obj.value_grad(&x);
    let mut prev: Option<(DVector<f64>, DVector<f64>)> = None;
    let mut kkt = f64::INFINITY;
    let mut last_alpha = (1.0 / g.norm()).clamp(1e-12, 1e12);
    // Barzilai-Borwein steps need a non-monotone acceptance rule to work on
    // badly conditioned objectives; the reference value is the max over the
    // last few accepted values, and the best iterate is tracked separately
    // so a non-monotone excursion is never what gets returned.
    let mut refs = [fx; NONMONOTONE_MEMORY];
    let mut ref_idx = 0;
    let mut best_x = x.clone();
    let mut best_f = fx;
    let mut stagnant = 0usize;
    let floor_exit = |best_x: DVector<f64>, best_f: f64, iters: usize| {
        let (_, g_best) = obj.value_grad(&best_x);
        let mapped = project_ball(&(&best_x - &g_best), s);
        let kkt = (&best_x - &mapped).norm();
        SpgResult {
            x: best_x,
            value: best_f,
            iterations: iters,
            converged: best_f.is_finite() && kkt.is_finite(),
            kkt_residual: kkt,
        }
    };
    for iter in 0..config.max_iters {
        let mapped = project_ball(&(&x - &g), s);
        kkt = (&x - &mapped).norm();
        if kkt <= config.grad_tol {
            return SpgResult {
                x,
                value: fx,
                iterations: iter,
                converged: true,
                kkt_residual: kkt,
            };
        }
        // When the curvature estimate is unusable (flat or concave stretch,
        // e.g. strictly inside the penalty's feasible region where the
        // gradient is constant), retry near the last accepted step length
        // with headroom to grow, instead of a fixed huge guess that the
        // backtracking loop then spends dozens of evaluations shrinking.
        let mut alpha = match &prev {
            Some((dx, dg)) => {
                let sy = dx.dot(dg);
                if sy > 0.0 {
                    (dx.dot(dx) / sy).clamp(1e-12, 1e12)
                } else {
                    (last_alpha * 10.0).clamp(1e-12, 1e12)
                }
            }
            None => last_alpha,
        };
        let f_ref = refs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut accepted = None;
        while alpha >= 1e-18 {
            let cand = project_ball(&(&x - &g * alpha), s);
            let f_cand = obj.value(&cand);
            let decrease = g.dot(&cand) - g.dot(&x);
            if f_cand <= f_ref + config.armijo * decrease {
                accepted = Some(cand);
                break;
            }
            alpha *= config.backtrack;
        }
        let Some(cand) = accepted else {
            // Step underflow: no representable step passes even the relaxed
            // acceptance test, so the iterate sits at the arithmetic's
            // resolution for this function (the attainable KKT residual
            // grows like sqrt(eps * |f| * curvature), above grad_tol once
            // the history is long). Nothing can improve from here; a finite
            // stall point counts as converged, with the residual reported
            // as measured.
            return floor_exit(best_x, best_f, iter);
        };
        last_alpha = alpha;
        let (f_new, g_new) = obj.value_grad(&cand);
        prev = Some((&cand - &x, &g_new - &g));
        x = cand;
        fx = f_new;
        g = g_new;
        refs[ref_idx] = fx;
        ref_idx = (ref_idx + 1) % NONMONOTONE_MEMORY;
        // Progress is judged against the best value seen: decreases below
        // the objective's ulp are rounding noise, and a long run without
        // representable improvement means the same arithmetic floor as a
        // line-search stall.
        if best_f - fx > f64::EPSILON * (1.0 + best_f.abs()) {
            best_f = fx;
            best_x = x.clone();
            stagnant = 0;
        } else {
            if fx < best_f {
                best_f = fx;
                best_x = x.clone();
            }
            stagnant += 1;
            if stagnant >= STAGNATION_WINDOW {
                return floor_exit(best_x, best_f, iter + 1);
            }
        }
    }
    SpgResult {
        x: best_x,
        value: best_f,
        iterations: config.max_iters,
        converged: false,
        kkt_residual: kkt,
    }
}

/// Ball-constrained MLE from a cold zero start. An empty history returns the
/// zero parameter untouched: the loss is constant and zero is the canonical
/// minimum-norm representative.
pub fn mle_ball(loss: &dyn CumulativeLoss, s: f64, config: &SolverConfig) -> SolveReport {
    mle_ball_warm(loss, s, DVector::zeros(loss.dim()), config)
}

/// Same solver started from a caller-supplied point, used round-over-round
/// where the previous MLE is an excellent guess.
pub fn mle_ball_warm(
    loss: &dyn CumulativeLoss,
    s: f64,
    start: DVector<f64>,
    config: &SolverConfig,
) -> SolveReport {
    assert!(s > 0.0, "norm bound must be positive");
    assert_eq!(start.len(), loss.dim(), "start point has wrong dimension");
    config.validate();
    let obj = MleObjective { loss };
    let res = spg_minimize(&obj, start, s, config);
    SolveReport {
        solution: res.x,
        objective: res.value,
        iterations: res.iterations,
        converged: res.converged,
        kkt_residual: res.kkt_residual,
    }
}

// Starting the continuation at a fixed rho = 1 makes the first penalty
// surface brutally stiff whenever the loss gradient along the set boundary
// is large (long histories give curvature ~ rho * |grad L|^2 against a
// linear term of size |arm|), and projected gradient steps then crawl
// tangentially at the curvature ratio, tens of thousands of iterations.
// Sizing the first weight so its soft optimum overshoots the constraint by
// about a tenth of the radius keeps every stage well conditioned, and the
// stage optima track the tangency point as the weight escalates. The probe
// bisects along the arm direction for the constraint crossing to measure
// the local gradient scale; when the ray never crosses inside the ball the
// penalty barely activates and the fixed weight is kept.
fn initial_penalty_weight(spec: &ConfidenceSpec, arm: &DVector<f64>) -> f64 {
    let s = spec.norm_bound();
    let center = spec.center();
    let dir = arm / arm.norm();
    // Ray center + tau * dir exits the ball at the positive root of
    // |center|^2 + 2 tau <center, dir> + tau^2 = s^2.
    let b = center.dot(&dir);
    let tau_ball = -b + (b * b + s * s - center.norm_squared()).max(0.0).sqrt();
    let gap_at = |tau: f64| spec.loss_gap(&(center + &dir * tau));
    // Twenty bisections locate each crossing to a millionth of its bracket;
    // the probe only needs the gradient's order of magnitude there.
    let crossing = if gap_at(tau_ball) > spec.radius_sq() {
        let (mut lo, mut hi) = (0.0, tau_ball);
        for _ in 0..20 {
            let mid = 0.5 * (lo + hi);
            if gap_at(mid) > spec.radius_sq() {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        center + &dir * (0.5 * (lo + hi))
    } else {
        // The ray stays feasible out to the sphere, yet the sphere's linear
        // maximum s * dir violates the constraint (the ball shortcut ran
        // first), so the boundary is crossed somewhere on the great-circle
        // arc between those two points. The optimum then sits near that
        // arc; measure the gradient scale there.
        let a = (center + &dir * tau_ball) / s;
        let omega = a.dot(&dir).clamp(-1.0, 1.0).acos();
        if omega.sin() < 1e-9 {
            return 1.0;
        }
        let arc_at = |u: f64| {
            let p = (&a * (((1.0 - u) * omega).sin()) + &dir * ((u * omega).sin()))
                * (s / omega.sin());
            spec.loss_gap(&p)
        };
        let (mut lo, mut hi) = (0.0, 1.0);
        for _ in 0..20 {
            let mid = 0.5 * (lo + hi);
            if arc_at(mid) > spec.radius_sq() {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        let u = 0.5 * (lo + hi);
        (&a * (((1.0 - u) * omega).sin()) + &dir * ((u * omega).sin())) * (s / omega.sin())
    };
    let (_, grad) = spec.loss().loss_grad(&crossing);
    let gnorm = grad.norm();
    if gnorm < 1e-12 {
        return 1.0;
    }
    let overshoot_budget = 0.1 * spec.radius_sq().max(1.0);
    (arm.norm() / (2.0 * overshoot_budget * gnorm)).clamp(1e-10, 1.0)
}

/// An in-progress penalty continuation for one arm: the stage ladder can be
/// advanced one weight at a time, and after every converged stage the
/// current `value` is a certified upper bound on the arm's true optimum
/// (each stage relaxes the loss constraint, and relaxing a constraint can
/// only raise a maximum). The agent exploits that to stop escalating arms
/// that provably cannot win the cross-arm argmax.
#[derive(Debug, Clone)]
pub struct UcbLadder {
    rho: f64,
    theta: DVector<f64>,
    prev_opt: Option<DVector<f64>>,
    vtol: f64,
    /// Inner iterations spent so far, summed over stages.
    pub iterations: usize,
    /// <arm, theta> at the latest stage optimum.
    pub value: f64,
    violation: f64,
    /// Constraint overshoot has reached the continuation tolerance.
    pub finished: bool,
    /// The latest stage solve converged (so `value` is trustworthy).
    pub stage_converged: bool,
    failed: bool,
}

impl UcbLadder {
    /// The latest stage optimum, usable as a chain start for a neighboring
    /// arm's own continuation.
    pub fn current(&self) -> &DVector<f64> {
        &self.theta
    }

    /// The penalty weight overflowed before the overshoot tolerance was
    /// met; the continuation cannot make further progress.
    pub fn failed(&self) -> bool {
        self.failed
    }

    fn into_report(self, arm: &DVector<f64>) -> UcbReport {
        UcbReport {
            value: arm.dot(&self.theta),
            maximizer: self.theta,
            iterations: self.iterations,
            converged: !self.failed && self.stage_converged,
            violation: self.violation,
        }
    }
}

/// Either an exact answer (zero arm, or the ball maximizer already feasible)
/// or a ladder holding the first solved stage.
pub enum UcbStart {
    Exact(UcbReport),
    Pending(UcbLadder),
}

/// Validates, tries the closed-form cases, and otherwise sizes the first
/// penalty weight and solves the first stage from `start`.
pub fn ucb_begin(
    spec: &ConfidenceSpec,
    arm: &DVector<f64>,
    start: &DVector<f64>,
    config: &SolverConfig,
) -> Result<UcbStart, OptimError> {
    if arm.len() != spec.dim() {
        return Err(OptimError::DimensionMismatch {
            expected: spec.dim(),
            got: arm.len(),
        });
    }
    if start.len() != spec.dim() {
        return Err(OptimError::DimensionMismatch {
            expected: spec.dim(),
            got: start.len(),
        });
    }
    config.validate();
    let s = spec.norm_bound();
    if arm.norm() == 0.0 {
        return Ok(UcbStart::Exact(UcbReport {
            value: 0.0,
            maximizer: spec.center().clone(),
            iterations: 0,
            converged: true,
            violation: 0.0,
        }));
    }

    // If the ball's own maximizer satisfies the loss constraint, the linear
    // maximum over the ball is the exact answer.
    let ball_point = arm * (s / arm.norm());
    if spec.loss_gap(&ball_point) <= spec.radius_sq() {
        return Ok(UcbStart::Exact(UcbReport {
            value: arm.dot(&ball_point),
            maximizer: ball_point,
            iterations: 0,
            converged: true,
            violation: 0.0,
        }));
    }

    let rho = initial_penalty_weight(spec, arm);
    let obj = PenaltyObjective { spec, arm, rho };
    let res = spg_minimize(&obj, project_ball(start, s), s, config);
    let violation = (spec.loss_gap(&res.x) - spec.radius_sq()).max(0.0);
    let vtol = 1e-6 * spec.radius_sq().max(1.0);
    Ok(UcbStart::Pending(UcbLadder {
        rho,
        value: arm.dot(&res.x),
        theta: res.x,
        prev_opt: None,
        vtol,
        iterations: res.iterations,
        violation,
        finished: violation <= vtol,
        stage_converged: res.converged,
        failed: false,
    }))
}

/// Runs the next continuation stage: grows the weight, predicts the new
/// stage optimum from the penalty path, and re-solves. The stage optima
/// approach the constrained maximizer along a path whose distance from the
/// limit shrinks like 1/rho, so the next optimum sits at the last step
/// scaled down by the growth factor; starting there turns each stage into
/// a handful of corrective iterations instead of a fresh crawl across the
/// stiffened surface. No-op once the ladder is finished or failed.
pub fn ucb_advance(
    spec: &ConfidenceSpec,
    arm: &DVector<f64>,
    ladder: &mut UcbLadder,
    config: &SolverConfig,
) {
    if ladder.finished || ladder.failed {
        return;
    }
    let s = spec.norm_bound();
    ladder.rho *= config.penalty_growth;
    if ladder.rho > 1e30 {
        ladder.failed = true;
        return;
    }
    let next = match &ladder.prev_opt {
        Some(p) => project_ball(
            &(&ladder.theta + (&ladder.theta - p) / config.penalty_growth),
            s,
        ),
        None => {
            // No stage pair to extrapolate from yet. The next optimum keeps
            // this one's tangency but divides the overshoot by the growth
            // factor, and the overshoot falls fastest along the loss
            // gradient, so take that one Newton step on it.
            let (_, g1) = spec.loss().loss_grad(&ladder.theta);
            let gsq = g1.norm_squared();
            if gsq > 0.0 {
                let delta = ladder.violation * (1.0 - 1.0 / config.penalty_growth) / gsq;
                project_ball(&(&ladder.theta - &g1 * delta), s)
            } else {
                ladder.theta.clone()
            }
        }
    };
    let stage_start = std::mem::replace(&mut ladder.theta, next);
    ladder.prev_opt = Some(stage_start);
    let obj = PenaltyObjective {
        spec,
        arm,
        rho: ladder.rho,
    };
    let res = spg_minimize(&obj, ladder.theta.clone(), s, config);
    ladder.theta = res.x;
    ladder.iterations += res.iterations;
    ladder.value = arm.dot(&ladder.theta);
    ladder.violation = (spec.loss_gap(&ladder.theta) - spec.radius_sq()).max(0.0);
    ladder.stage_converged = res.converged;
    ladder.finished = ladder.violation <= ladder.vtol;
}

/// Maximizes <arm, theta> over the confidence set by quadratic-penalty
/// continuation from the MLE center, growing the penalty weight until the
/// loss-constraint overshoot drops to `1e-6 * max(1, beta^2)`.
pub fn ucb_max(
    spec: &ConfidenceSpec,
    arm: &DVector<f64>,
    config: &SolverConfig,
) -> Result<UcbReport, OptimError> {
    ucb_max_warm(spec, arm, spec.center(), config)
}

/// [`ucb_max`] with an explicit continuation start. The penalty surfaces are
/// convex (linear term plus a squared hinge of a convex gap), so the start
/// moves the iteration count, never the converged value; a caller solving
/// many arms against one confidence set can chain each solve from the
/// previous maximizer and skip most of the boundary travel.
pub fn ucb_max_warm(
    spec: &ConfidenceSpec,
    arm: &DVector<f64>,
    start: &DVector<f64>,
    config: &SolverConfig,
) -> Result<UcbReport, OptimError> {
    match ucb_begin(spec, arm, start, config)? {
        UcbStart::Exact(report) => Ok(report),
        UcbStart::Pending(mut ladder) => {
            while !ladder.finished && !ladder.failed {
                ucb_advance(spec, arm, &mut ladder, config);
            }
            Ok(ladder.into_report(arm))
        }
    }
}

/// Brute-force reference for [`ucb_max`]: the maximum of <arm, theta> over
/// the grid points of [-S, S]^d that pass set membership, with the MLE
/// center always included as a candidate (it belongs to the set by
/// construction, and keeps the degenerate beta^2 = 0 case well-defined).
/// Exact over its grid; cost grows as resolution^d.
pub fn grid_oracle_ucb(
    spec: &ConfidenceSpec,
    arm: &DVector<f64>,
    resolution: usize,
) -> Result<f64, OptimError> {
    let d = spec.dim();
    if d > 3 {
        return Err(OptimError::GridDimension(d));
    }
    if arm.len() != d {
        return Err(OptimError::DimensionMismatch {
            expected: d,
            got: arm.len(),
        });
    }
    assert!(resolution >= 2, "grid needs at least 2 points per axis");
    let s = spec.norm_bound();
    let res = resolution;
    let coord = |i: usize| s * (2.0 * i as f64 / (res - 1) as f64 - 1.0);

    // Collect in-ball grid points, sort by objective, then scan downward:
    // the first member found is the grid maximum.
    let total = res.pow(d as u32);
    let mut candidates: Vec<(f64, usize)> = Vec::new();
    let mut theta = DVector::zeros(d);
    for flat in 0..total {
        let mut rem = flat;
        let mut norm_sq = 0.0;
        for j in 0..d {
            let c = coord(rem % res);
            rem /= res;
            theta[j] = c;
            norm_sq += c * c;
        }
        if norm_sq <= s * s {
            candidates.push((arm.dot(&theta), flat));
        }
    }
    candidates.sort_unstable_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));

    let mut best = arm.dot(spec.center());
    for &(obj, flat) in &candidates {
        if obj <= best {
            break;
        }
        let mut rem = flat;
        for j in 0..d {
            theta[j] = coord(rem % res);
            rem /= res;
        }
        if spec.contains(&theta) {
            best = obj;
            break;
        }
    }
    Ok(best)
}
