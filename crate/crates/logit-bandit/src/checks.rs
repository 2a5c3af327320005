//! Executable inequality and identity checkers for the analysis machinery
//! behind the confidence sets: the per-observation loss decomposition, the
//! curvature lower bound on segment-averaged Hessians, the design-matrix
//! potential and count bounds, the anytime martingale tail bound, and the
//! quadratic implication used to peel squared radii.
//!
//! Each checker draws its own randomized instances, tracks the single worst
//! case, and reports a signed violation: positive means an inequality
//! failed (or an identity residual exceeded zero), so `pass` is simply
//! `max_violation <= tolerance`. Checkers are deterministic given the RNG
//! handed in; [`default_suite`] wires one fixed ChaCha stream per checker so
//! report order and content are stable run over run.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

use crate::env::uniform_in_ball;
use crate::glm::{
    bregman_logpartition, bregman_logsumexp, logistic_loss, mnl_loss, sigmoid, sigmoid_deriv,
    softmax_from_logits, softmax_probs, LogisticObservation, MNLObservation, MNLParam,
};

#[derive(Debug, Error)]
pub enum CheckError {
    #[error("eta = {eta} outside the admissible range (0, 1/R] with R = {r}")]
    EtaOutOfRange { eta: f64, r: f64 },
}

/// Outcome of one checker: worst signed violation over all trials, the
/// tolerance it was judged against, and a rendering of the worst instance.
#[derive(Debug, Clone, Serialize)]
pub struct CheckReport {
    pub name: String,
    pub trials: usize,
    pub max_violation: f64,
    pub tolerance: f64,
    pub pass: bool,
    pub worst: String,
}

impl CheckReport {
    fn new(name: &str, trials: usize, max_violation: f64, tolerance: f64, worst: String) -> Self {
        Self {
            name: name.to_string(),
            trials,
            max_violation,
            tolerance,
            pass: max_violation <= tolerance,
            worst,
        }
    }
}

fn decomposition_tolerance(norm_bound: f64, tight: f64, loose: f64) -> f64 {
    // Residuals grow with the logit range: two documented tiers, one for
    // parameter norms up to 5 and a looser one up to 20.
    if norm_bound <= 5.0 + 1e-12 {
        tight
    } else {
        loose
    }
}

/// Identity check: the loss at one parameter equals the loss at another
/// plus a noise-weighted linear term minus the KL divergence between the
/// two predicted distributions.
pub fn check_decomposition_logistic(
    trials: usize,
    norm_bound: f64,
    rng: &mut ChaCha8Rng,
) -> CheckReport {
    assert!(trials >= 1, "need at least one trial");
    let d = 3;
    let mut max_violation: f64 = 0.0;
    let mut worst = String::new();
    for _ in 0..trials {
        let x = uniform_in_ball(d, 1.0, rng);
        let theta_star = uniform_in_ball(d, norm_bound, rng);
        let theta = uniform_in_ball(d, norm_bound, rng);
        let r = u8::from(rng.gen::<f64>() < 0.5);
        let obs = LogisticObservation::new(x.clone(), r).expect("sampled arm is valid");
        let mu_star = sigmoid(x.dot(&theta_star));
        let xi = r as f64 - mu_star;
        // The KL term enters through its log-partition Bregman form, which
        // is exact in logit space; probabilities within 1e-8 of 1 cannot
        // represent the divergence to better than ~1e-8 absolute, which
        // would swamp the residual at the wider norm tier.
        let kl = bregman_logpartition(x.dot(&theta), x.dot(&theta_star));
        let lhs = logistic_loss(&obs, &theta_star);
        let rhs = logistic_loss(&obs, &theta) + xi * x.dot(&(&theta - &theta_star)) - kl;
        let residual = (lhs - rhs).abs();
        if residual > max_violation {
            max_violation = residual;
            worst = format!("x={:?} theta_star={:?} theta={:?} r={r}", x.as_slice(), theta_star.as_slice(), theta.as_slice());
        }
    }
    let tol = decomposition_tolerance(norm_bound, 1e-10, 1e-8);
    CheckReport::new("decomposition_logistic", trials, max_violation, tol, worst)
}

/// Matrix-model version of the same identity, with a categorical outcome
/// and the noise vector xi = y_{1..K} - mu(x, Theta_star).
pub fn check_decomposition_mnl(
    trials: usize,
    k: usize,
    norm_bound: f64,
    rng: &mut ChaCha8Rng,
) -> CheckReport {
    assert!(trials >= 1, "need at least one trial");
    assert!((1..=5).contains(&k), "checker covers K in 1..=5");
    let d = 3;
    let mut max_violation: f64 = 0.0;
    let mut worst = String::new();
    for _ in 0..trials {
        let x = uniform_in_ball(d, 1.0, rng);
        let star = MNLParam::from_flat(&uniform_in_ball(k * d, norm_bound, rng), k, d, norm_bound)
            .expect("draw stays inside the ball");
        let other = MNLParam::from_flat(&uniform_in_ball(k * d, norm_bound, rng), k, d, norm_bound)
            .expect("draw stays inside the ball");
        let y = rng.gen_range(0..=k);
        let obs = MNLObservation::new(x.clone(), y).expect("sampled arm is valid");
        let probs_star = softmax_probs(&x, &star);
        let mut xi = DVector::zeros(k);
        for i in 0..k {
            xi[i] = -probs_star[i + 1];
        }
        if y >= 1 {
            xi[y - 1] += 1.0;
        }
        let diff_x = (other.matrix() - star.matrix()) * &x;
        // Logit-space KL, for the same rounding-floor reason as the binary
        // checker.
        let kl = bregman_logsumexp(&(other.matrix() * &x), &(star.matrix() * &x));
        let lhs = mnl_loss(&obs, &star);
        let rhs = mnl_loss(&obs, &other) - kl + xi.dot(&diff_x);
        let residual = (lhs - rhs).abs();
        if residual > max_violation {
            max_violation = residual;
            worst = format!("x={:?} y={y} K={k}", x.as_slice());
        }
    }
    let tol = decomposition_tolerance(norm_bound, 1e-9, 1e-7);
    CheckReport::new("decomposition_mnl", trials, max_violation, tol, worst)
}

fn simpson<F: Fn(f64) -> f64>(f: F, n: usize) -> f64 {
    // Composite Simpson on [0,1] with n (rounded up to even) intervals.
    let n = n + n % 2;
    let h = 1.0 / n as f64;
    let mut acc = f(0.0) + f(1.0);
    for i in 1..n {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        acc += w * f(i as f64 * h);
    }
    acc * h / 3.0
}

fn simpson_matrix<F: Fn(f64) -> DMatrix<f64>>(f: F, dim: usize, n: usize) -> DMatrix<f64> {
    let n = n + n % 2;
    let h = 1.0 / n as f64;
    let mut acc = f(0.0) + f(1.0);
    for i in 1..n {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        acc += f(i as f64 * h) * w;
    }
    let _ = dim;
    acc * (h / 3.0)
}

/// Hessian of log(1 + sum e^{z_k}) at logits z: diag(mu) - mu mu' over the
/// K nonzero categories.
fn logsumexp_hessian(z: &DVector<f64>) -> DMatrix<f64> {
    let probs = softmax_from_logits(z);
    let k = z.len();
    let mu = probs.rows(1, k).into_owned();
    DMatrix::from_diagonal(&mu) - &mu * mu.transpose()
}

/// Segment-averaged curvature lower bound, in two parts: the scalar slope
/// of the binary link against 1/(2 + |z1 - z2|), and the matrix Hessian of
/// the categorical log-partition against 1/(2 + sqrt(6) ||z1 - z2||) in the
/// Loewner order.
pub fn check_self_concordance(
    trials: usize,
    k: usize,
    quad_points: usize,
    rng: &mut ChaCha8Rng,
) -> CheckReport {
    assert!(trials >= 1, "need at least one trial");
    assert!(quad_points >= 1000, "quadrature needs at least 1000 nodes");
    let mut max_violation = f64::NEG_INFINITY;
    let mut worst = String::new();
    for _ in 0..trials {
        let z1 = rng.gen_range(-10.0..10.0);
        let z2 = rng.gen_range(-10.0..10.0);
        let lhs = simpson(|v| (1.0 - v) * sigmoid_deriv(z1 + v * (z2 - z1)), quad_points);
        let violation = sigmoid_deriv(z1) / (2.0 + (z1 - z2).abs()) - lhs;
        if violation > max_violation {
            max_violation = violation;
            worst = format!("scalar z1={z1} z2={z2}");
        }
    }
    // Logit entries stay in [-3,3] for the matrix part: the bound holds for
    // any segment, and the modest range keeps the Simpson discretization
    // error orders below the Loewner tolerance.
    for _ in 0..trials {
        let z1 = DVector::from_fn(k, |_, _| rng.gen_range(-3.0..3.0));
        let z2 = DVector::from_fn(k, |_, _| rng.gen_range(-3.0..3.0));
        let diff = &z2 - &z1;
        let lhs = simpson_matrix(
            |v| logsumexp_hessian(&(&z1 + &diff * v)) * (1.0 - v),
            k,
            quad_points,
        );
        let rhs = logsumexp_hessian(&z1) / (2.0 + 6f64.sqrt() * diff.norm());
        let min_eig = (lhs - rhs).symmetric_eigenvalues().min();
        let violation = -min_eig;
        if violation > max_violation {
            max_violation = violation;
            worst = format!("matrix z1={:?} z2={:?}", z1.as_slice(), z2.as_slice());
        }
    }
    CheckReport::new("self_concordance", 2 * trials, max_violation, 1e-8, worst)
}

/// Which design-matrix bound to check. The plain forms take one vector per
/// round; the generalized forms take K per round and bound the per-round
/// sum of leverage scores.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EllipticalKind {
    Potential,
    Count,
    GenPotential,
    GenCount,
}

impl EllipticalKind {
    pub fn name(self) -> &'static str {
        match self {
            EllipticalKind::Potential => "elliptical_potential",
            EllipticalKind::Count => "elliptical_count",
            EllipticalKind::GenPotential => "elliptical_gen_potential",
            EllipticalKind::GenCount => "elliptical_gen_count",
        }
    }
}

#[derive(Debug, Clone, Copy)]
enum VectorPreset {
    UniformBall,
    RepeatedBasis,
    NearDuplicates,
}

impl VectorPreset {
    fn name(self) -> &'static str {
        match self {
            VectorPreset::UniformBall => "uniform_ball",
            VectorPreset::RepeatedBasis => "repeated_basis",
            VectorPreset::NearDuplicates => "near_duplicates",
        }
    }

    fn draw(self, t: usize, d: usize, rng: &mut ChaCha8Rng) -> DVector<f64> {
        match self {
            VectorPreset::UniformBall => uniform_in_ball(d, 1.0, rng),
            VectorPreset::RepeatedBasis => {
                let mut e = DVector::zeros(d);
                e[t % d] = 1.0;
                e
            }
            VectorPreset::NearDuplicates => {
                let mut e = DVector::zeros(d);
                e[0] = 1.0;
                for i in 0..d {
                    e[i] += 1e-6 * rng.gen::<f64>();
                }
                let n = e.norm();
                if n > 1.0 {
                    e /= n;
                }
                e
            }
        }
    }
}

/// Exact left-hand sides of the potential and count bounds over adversarial
/// and random vector sequences, checked against the closed-form right-hand
/// sides. The per-round group size is 1 for the plain kinds and `k` for the
/// generalized kinds.
pub fn check_elliptical(
    kind: EllipticalKind,
    t_horizon: usize,
    d: usize,
    k: usize,
    lambda: f64,
    rng: &mut ChaCha8Rng,
) -> CheckReport {
    assert!(t_horizon >= 1 && d >= 1 && k >= 1, "sizes must be positive");
    assert!(lambda > 0.0, "ridge must be positive");
    let group = match kind {
        EllipticalKind::Potential | EllipticalKind::Count => 1,
        EllipticalKind::GenPotential | EllipticalKind::GenCount => k,
    };
    let bound = match kind {
        EllipticalKind::Potential => 2.0 * d as f64 * (1.0 + t_horizon as f64 / (d as f64 * lambda)).ln(),
        EllipticalKind::Count => {
            2.0 * d as f64 / 2f64.ln() * (1.0 + 1.0 / (lambda * 2f64.ln())).ln()
        }
        EllipticalKind::GenPotential => {
            2.0 * d as f64 * (1.0 + (k * t_horizon) as f64 / (d as f64 * lambda)).ln()
        }
        EllipticalKind::GenCount => {
            2.0 * d as f64 / 2f64.ln() * (1.0 + k as f64 / (lambda * 2f64.ln())).ln()
        }
    };
    let mut max_violation = f64::NEG_INFINITY;
    let mut worst = String::new();
    for preset in [
        VectorPreset::UniformBall,
        VectorPreset::RepeatedBasis,
        VectorPreset::NearDuplicates,
    ] {
        let mut v = DMatrix::<f64>::identity(d, d) * lambda;
        let mut lhs = 0.0;
        for t in 0..t_horizon {
            let v_inv = v.clone().try_inverse().expect("ridge keeps V invertible");
            let mut round_score = 0.0;
            let mut group_vectors = Vec::with_capacity(group);
            for j in 0..group {
                let x = preset.draw(t * group + j, d, rng);
                round_score += x.dot(&(&v_inv * &x));
                group_vectors.push(x);
            }
            match kind {
                EllipticalKind::Potential | EllipticalKind::GenPotential => {
                    lhs += round_score.min(1.0);
                }
                EllipticalKind::Count | EllipticalKind::GenCount => {
                    if round_score > 1.0 {
                        lhs += 1.0;
                    }
                }
            }
            for x in &group_vectors {
                v += x * x.transpose();
            }
        }
        let violation = lhs - bound;
        if violation > max_violation {
            max_violation = violation;
            worst = format!(
                "preset={} lhs={lhs} bound={bound} T={t_horizon} d={d} K={group} lambda={lambda}",
                preset.name()
            );
        }
    }
    CheckReport::new(kind.name(), 3 * t_horizon, max_violation, 0.0, worst)
}

/// Anytime martingale tail bound, certified as a rate: the fraction of
/// simulated bounded difference sequences whose running sum ever beats
/// (e-2) eta * (running conditional variance) + log(1/delta)/eta within the
/// horizon must stay near delta. Tolerance is the 3-sigma binomial band for
/// the per-preset trial count; this certifies a rate, not a proof.
pub fn check_freedman(
    trials: usize,
    t_horizon: usize,
    eta: f64,
    r: f64,
    delta: f64,
    rng: &mut ChaCha8Rng,
) -> Result<CheckReport, CheckError> {
    assert!(trials >= 1 && t_horizon >= 1, "sizes must be positive");
    assert!(r > 0.0 && delta > 0.0 && delta < 1.0, "bad R or delta");
    if !(eta > 0.0 && eta <= 1.0 / r) {
        return Err(CheckError::EtaOutOfRange { eta, r });
    }
    let budget = (1.0 / delta).ln() / eta;
    let coef = (std::f64::consts::E - 2.0) * eta;
    let mut max_violation = f64::NEG_INFINITY;
    let mut worst = String::new();
    // Preset 0: symmetric two-point +-R. Preset 1: centered Bernoulli(0.3)
    // rescaled so |X| = R on the rare side.
    for preset in 0..2usize {
        let mut failures = 0usize;
        for _ in 0..trials {
            let mut sum = 0.0;
            let mut var_sum = 0.0;
            let mut failed = false;
            for _ in 0..t_horizon {
                let (x, var) = match preset {
                    0 => {
                        let s = if rng.gen::<f64>() < 0.5 { r } else { -r };
                        (s, r * r)
                    }
                    _ => {
                        let p = 0.3;
                        let b = f64::from(rng.gen::<f64>() < p);
                        let scale = r / (1.0 - p);
                        ((b - p) * scale, p * (1.0 - p) * scale * scale)
                    }
                };
                sum += x;
                var_sum += var;
                if sum > coef * var_sum + budget {
                    failed = true;
                    break;
                }
            }
            if failed {
                failures += 1;
            }
        }
        let rate = failures as f64 / trials as f64;
        let violation = rate - delta;
        if violation > max_violation {
            max_violation = violation;
            worst = format!(
                "preset={} rate={rate} delta={delta} eta={eta} R={r} T={t_horizon}",
                if preset == 0 { "two_point" } else { "bernoulli" }
            );
        }
    }
    Ok(CheckReport::new(
        "freedman",
        2 * trials,
        max_violation,
        3.0 * (delta / trials as f64).sqrt(),
        worst,
    ))
}

/// The quadratic implication: if x*x <= b*x + c with b, c >= 0, then
/// x*x <= 2*(b*b + c). Checked at random premise points and at the premise
/// boundary, where the gap is smallest.
pub fn check_poly_inequality(trials: usize, rng: &mut ChaCha8Rng) -> CheckReport {
    assert!(trials >= 1, "need at least one trial");
    let mut max_violation = f64::NEG_INFINITY;
    let mut worst = String::new();
    for _ in 0..trials {
        let b: f64 = rng.gen_range(0.0..5.0);
        let c = rng.gen_range(0.0..5.0);
        let root_hi = (b + (b * b + 4.0 * c).sqrt()) / 2.0;
        let root_lo = (b - (b * b + 4.0 * c).sqrt()) / 2.0_f64;
        let x = rng.gen_range(root_lo..=root_hi);
        for cand in [x, root_hi] {
            let violation = cand * cand - 2.0 * (b * b + c);
            if violation > max_violation {
                max_violation = violation;
                worst = format!("b={b} c={c} x={cand}");
            }
        }
    }
    CheckReport::new("poly_inequality", trials, max_violation, 0.0, worst)
}

/// Names accepted by the CLI's check selector, in report order.
pub const CHECK_NAMES: [&str; 9] = [
    "decomposition_logistic",
    "decomposition_mnl",
    "self_concordance",
    "elliptical_potential",
    "elliptical_count",
    "elliptical_gen_potential",
    "elliptical_gen_count",
    "freedman",
    "poly_inequality",
];

/// Runs one named checker at the default configuration. Each checker gets
/// its own ChaCha stream (10 + its index in [`CHECK_NAMES`]) derived from
/// `seed`, so reports are stable regardless of which subset runs.
pub fn run_named(name: &str, seed: u64, trials: usize) -> Option<Result<CheckReport, CheckError>> {
    let index = CHECK_NAMES.iter().position(|&n| n == name)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(10 + index as u64);
    let report = match name {
        "decomposition_logistic" => Ok(check_decomposition_logistic(trials, 5.0, &mut rng)),
        "decomposition_mnl" => Ok(check_decomposition_mnl(trials, 3, 5.0, &mut rng)),
        "self_concordance" => Ok(check_self_concordance(trials.min(2000), 3, 2000, &mut rng)),
        "elliptical_potential" => Ok(check_elliptical(
            EllipticalKind::Potential,
            500,
            3,
            3,
            1.0,
            &mut rng,
        )),
        "elliptical_count" => Ok(check_elliptical(
            EllipticalKind::Count,
            500,
            3,
            3,
            0.5,
            &mut rng,
        )),
        "elliptical_gen_potential" => Ok(check_elliptical(
            EllipticalKind::GenPotential,
            500,
            3,
            3,
            1.0,
            &mut rng,
        )),
        "elliptical_gen_count" => Ok(check_elliptical(
            EllipticalKind::GenCount,
            500,
            3,
            3,
            0.5,
            &mut rng,
        )),
        "freedman" => check_freedman(trials, 100, 1.0, 1.0, 0.05, &mut rng),
        "poly_inequality" => Ok(check_poly_inequality(trials, &mut rng)),
        _ => unreachable!("name came from CHECK_NAMES"),
    };
    Some(report)
}

/// The full suite in fixed order at shared defaults. The summed-over-history
/// form of the online regret decomposition has no standalone checker: its
/// algebra is the per-observation decomposition identity applied s times,
/// which the first two checkers cover.
pub fn default_suite(seed: u64, trials: usize) -> Vec<CheckReport> {
    CHECK_NAMES
        .iter()
        .map(|name| {
            run_named(name, seed, trials)
                .expect("suite names are valid")
                .expect("suite defaults satisfy every checker precondition")
        })
        .collect()
}
