//! Confidence-set radii, membership, and boundary tracing.
//!
//! The set at round t is the intersection of the parameter ball of radius S
//! with a sublevel set of the cumulative loss:
//!
//! ```text
//! C_t = { theta : ||theta|| <= S,  L_t(theta) - L_t(theta_hat) <= beta_t^2 }
//! ```
//!
//! where theta_hat is the ball-constrained MLE. Both the binary and the
//! multinomial radius are closed forms in (d, K, S, t, delta); they are
//! implemented with their exact published constants and no tuning knobs. The
//! gamma radius used by the multinomial bonus hides a universal constant, so
//! it alone carries a scale parameter `c_gamma` (default 1).
//!
//! The squared radius is the stored and compared quantity throughout: the
//! membership test is a comparison against beta^2, so taking square roots
//! would only add round-off.

use nalgebra::DVector;
use thiserror::Error;

use crate::glm::CumulativeLoss;

#[derive(Debug, Error)]
pub enum ConfidenceError {
    #[error("delta must lie strictly inside (0, 1), got {0}")]
    InvalidDelta(f64),
    #[error("boundary tracing requires a 2-d parameter space, got dimension {0}")]
    NotPlanar(usize),
    #[error("at least 4 rays are needed to trace a polygon, got {0}")]
    TooFewRays(usize),
    #[error("parameter has dimension {got}, the set lives in dimension {expected}")]
    DimensionMismatch { expected: usize, got: usize },
}

fn check_delta(delta: f64) -> Result<(), ConfidenceError> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(ConfidenceError::InvalidDelta(delta));
    }
    Ok(())
}

/// Squared confidence radius for the binary model:
/// `10 d log(S t / (4d) + e) + 2((e-2) + S) log(1/delta)`.
pub fn radius_logistic(d: usize, s: f64, t: usize, delta: f64) -> Result<f64, ConfidenceError> {
    assert!(d >= 1 && t >= 1 && s > 0.0, "d, t must be >= 1 and S > 0");
    check_delta(delta)?;
    let d = d as f64;
    let t = t as f64;
    let e = std::f64::consts::E;
    Ok(10.0 * d * (s * t / (4.0 * d) + e).ln() + 2.0 * ((e - 2.0) + s) * (1.0 / delta).ln())
}

/// Squared confidence radius for the multinomial model with K explicit
/// categories (K' = K+1 total):
/// `5 d K' log(e + S t / (d K')) + 2((e-2) + sqrt(6K) S) log(1/delta)`.
pub fn radius_mnl(
    d: usize,
    k: usize,
    s: f64,
    t: usize,
    delta: f64,
) -> Result<f64, ConfidenceError> {
    assert!(d >= 1 && k >= 1 && t >= 1 && s > 0.0, "d, K, t must be >= 1 and S > 0");
    check_delta(delta)?;
    let d = d as f64;
    let kp = (k + 1) as f64;
    let t = t as f64;
    let e = std::f64::consts::E;
    Ok(5.0 * d * kp * (e + s * t / (d * kp)).ln()
        + 2.0 * ((e - 2.0) + (6.0 * k as f64).sqrt() * s) * (1.0 / delta).ln())
}

/// Hessian-distance radius gamma_t for the multinomial bonus:
/// `sqrt(c_gamma * (d K S log(e + S t / (d K)) + sqrt(K) S log(1/delta)))`.
/// The published form hides a universal constant behind an inequality, hence
/// the explicit scale.
pub fn gamma_mnl(
    d: usize,
    k: usize,
    s: f64,
    t: usize,
    delta: f64,
    c_gamma: f64,
) -> Result<f64, ConfidenceError> {
    assert!(d >= 1 && k >= 1 && t >= 1 && s > 0.0, "d, K, t must be >= 1 and S > 0");
    assert!(c_gamma > 0.0, "c_gamma must be positive");
    check_delta(delta)?;
    let df = d as f64;
    let kf = k as f64;
    let t = t as f64;
    let e = std::f64::consts::E;
    let gamma_sq = df * kf * s * (e + s * t / (df * kf)).ln() + kf.sqrt() * s * (1.0 / delta).ln();
    Ok((c_gamma * gamma_sq).sqrt())
}

/// An implicitly-represented confidence set: the radius, the ball bound, the
/// MLE it is centered on, and a borrowed loss evaluator. Immutable once
/// built; safe to share across threads.
pub struct ConfidenceSpec<'a> {
    radius_sq: f64,
    norm_bound: f64,
    center: DVector<f64>,
    mle_loss: f64,
    loss: &'a dyn CumulativeLoss,
}

impl<'a> ConfidenceSpec<'a> {
    pub fn new(
        loss: &'a dyn CumulativeLoss,
        center: DVector<f64>,
        mle_loss: f64,
        radius_sq: f64,
        norm_bound: f64,
    ) -> Self {
        assert!(radius_sq >= 0.0, "squared radius must be nonnegative");
        assert!(norm_bound > 0.0, "norm bound must be positive");
        assert_eq!(
            center.len(),
            loss.dim(),
            "MLE center and loss evaluator disagree on dimension"
        );
        Self {
            radius_sq,
            norm_bound,
            center,
            mle_loss,
            loss,
        }
    }

    pub fn radius_sq(&self) -> f64 {
        self.radius_sq
    }

    pub fn norm_bound(&self) -> f64 {
        self.norm_bound
    }

    pub fn center(&self) -> &DVector<f64> {
        &self.center
    }

    pub fn mle_loss(&self) -> f64 {
        self.mle_loss
    }

    pub fn dim(&self) -> usize {
        self.loss.dim()
    }

    pub fn loss(&self) -> &dyn CumulativeLoss {
        self.loss
    }

    /// L_t(theta) - L_t(theta_hat); zero at the center by construction, up to
    /// solver tolerance.
    pub fn loss_gap(&self, theta: &DVector<f64>) -> f64 {
        self.loss.loss(theta) - self.mle_loss
    }

    /// Membership with slack tied to the MLE solver tolerance: the ball test
    /// allows `1e-9 * S`, the gap test `1e-7 * max(1, beta^2)`. Without the
    /// slack the MLE itself can fail its own set by round-off.
    pub fn contains(&self, theta: &DVector<f64>) -> bool {
        if theta.len() != self.loss.dim() {
            return false;
        }
        let tol_norm = 1e-9 * self.norm_bound;
        if theta.norm() > self.norm_bound + tol_norm {
            return false;
        }
        let tol_gap = 1e-7 * self.radius_sq.max(1.0);
        self.loss_gap(theta) <= self.radius_sq + tol_gap
    }
}

/// Traces the planar set boundary by casting `n_rays` rays from the MLE and
/// bisecting 50 times along each toward whichever constraint binds first
/// (the loss level or the ball). Returns the polygon vertices in ray order.
pub fn boundary_trace_2d(
    spec: &ConfidenceSpec,
    n_rays: usize,
) -> Result<Vec<[f64; 2]>, ConfidenceError> {
    if spec.dim() != 2 {
        return Err(ConfidenceError::NotPlanar(spec.dim()));
    }
    if n_rays < 4 {
        return Err(ConfidenceError::TooFewRays(n_rays));
    }
    let c = spec.center().clone();
    let s = spec.norm_bound();
    let mut out = Vec::with_capacity(n_rays);
    for i in 0..n_rays {
        let phi = 2.0 * std::f64::consts::PI * i as f64 / n_rays as f64;
        let u = DVector::from_vec(vec![phi.cos(), phi.sin()]);
        // Distance from the center to the ball boundary along u.
        let proj = c.dot(&u);
        let r_ball = -proj + (proj * proj + s * s - c.norm_squared()).max(0.0).sqrt();
        let gap_at = |r: f64| spec.loss_gap(&(&c + &u * r));
        if gap_at(r_ball) <= spec.radius_sq() {
            out.push([c[0] + r_ball * u[0], c[1] + r_ball * u[1]]);
            continue;
        }
        let mut lo = 0.0f64;
        let mut hi = r_ball;
        for _ in 0..50 {
            let mid = 0.5 * (lo + hi);
            if gap_at(mid) <= spec.radius_sq() {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        out.push([c[0] + lo * u[0], c[1] + lo * u[1]]);
    }
    Ok(out)
}

/// Crossing-number point-in-polygon test for simple polygons. Points exactly
/// on an edge may land on either side; callers needing strictness should
/// keep a margin.
pub fn point_in_polygon(point: &[f64; 2], polygon: &[[f64; 2]]) -> bool {
    let mut inside = false;
    let n = polygon.len();
    for i in 0..n {
        let a = polygon[i];
        let b = polygon[(i + 1) % n];
        let crosses = (a[1] > point[1]) != (b[1] > point[1]);
        if crosses {
            let x_at = a[0] + (point[1] - a[1]) / (b[1] - a[1]) * (b[0] - a[0]);
            if point[0] < x_at {
                inside = !inside;
            }
        }
    }
    inside
}

/// Anytime coverage accounting across runs: a run fails if the true
/// parameter ever leaves the set within the horizon. Per-step failure
/// tallies are kept so pointwise rates can be read off as well.
#[derive(Debug, Clone)]
pub struct CoverageLedger {
    horizon: usize,
    runs: usize,
    failed_runs: usize,
    step_failures: Vec<usize>,
}

impl CoverageLedger {
    pub fn new(horizon: usize) -> Self {
        assert!(horizon > 0, "horizon must be positive");
        Self {
            horizon,
            runs: 0,
            failed_runs: 0,
            step_failures: vec![0; horizon],
        }
    }

    /// `flags[t-1]` is "the true parameter was in C_t"; length must equal the
    /// horizon.
    pub fn record_run(&mut self, flags: &[bool]) {
        assert_eq!(
            flags.len(),
            self.horizon,
            "membership flags must cover the full horizon"
        );
        self.runs += 1;
        if flags.iter().any(|&f| !f) {
            self.failed_runs += 1;
        }
        for (tally, &f) in self.step_failures.iter_mut().zip(flags) {
            if !f {
                *tally += 1;
            }
        }
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn runs(&self) -> usize {
        self.runs
    }

    pub fn failed_runs(&self) -> usize {
        self.failed_runs
    }

    /// Fraction of runs that violated coverage at any step.
    pub fn failure_rate(&self) -> f64 {
        if self.runs == 0 {
            0.0
        } else {
            self.failed_runs as f64 / self.runs as f64
        }
    }

    /// Fraction of runs covered at step t (1-indexed).
    pub fn coverage_at(&self, t: usize) -> f64 {
        assert!(t >= 1 && t <= self.horizon, "step out of range");
        if self.runs == 0 {
            1.0
        } else {
            1.0 - self.step_failures[t - 1] as f64 / self.runs as f64
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::glm::{LogisticHistory, LogisticObservation};
    use approx::assert_abs_diff_eq;

    fn rel_eq(a: f64, b: f64, tol: f64) {
        assert!((a / b - 1.0).abs() <= tol, "{a} vs {b}");
    }

    #[test]
    fn radius_logistic_matches_oracle() {
        rel_eq(
            radius_logistic(2, 5.0, 4000, 0.05).unwrap(),
            190.76353750341078,
            1e-12,
        );
        let b1 = radius_logistic(2, 5.0, 1, 0.05).unwrap();
        let b2 = radius_logistic(2, 5.0, 2, 0.05).unwrap();
        assert!(b1 < b2);
        assert!(radius_logistic(2, 5.0, 1, 1.0).is_err());
        assert!(radius_logistic(2, 5.0, 1, 0.0).is_err());
        assert!(radius_logistic(2, 5.0, 1, f64::NAN).is_err());
    }

    #[test]
    fn radius_mnl_matches_oracle() {
        rel_eq(
            radius_mnl(2, 3, 5.0, 4000, 0.05).unwrap(),
            444.4070257406627,
            1e-12,
        );
        rel_eq(
            radius_mnl(1, 1, 1.0, 1, 0.5).unwrap(),
            16.079940101512048,
            1e-12,
        );
        let k2 = radius_mnl(2, 2, 5.0, 4000, 0.05).unwrap();
        let k3 = radius_mnl(2, 3, 5.0, 4000, 0.05).unwrap();
        assert!(k2 < k3);
    }

    #[test]
    fn gamma_matches_oracle_and_scales() {
        let g1 = gamma_mnl(2, 3, 5.0, 1, 0.05, 1.0).unwrap();
        rel_eq(g1, 7.997867013989139, 1e-12);
        let g4 = gamma_mnl(2, 3, 5.0, 1, 0.05, 4.0).unwrap();
        assert_eq!(g4, 2.0 * g1);
        assert!(gamma_mnl(2, 3, 5.0, 10, 0.05, 1.0).unwrap() > g1);
        assert!(gamma_mnl(2, 3, 5.0, 1, 1.5, 1.0).is_err());
    }

    #[test]
    fn empty_history_set_is_the_ball() {
        let h = LogisticHistory::new(2);
        let spec = ConfidenceSpec::new(&h, DVector::zeros(2), 0.0, 4.0, 5.0);
        assert!(spec.contains(&DVector::from_vec(vec![3.0, 4.0])));
        assert!(spec.contains(&DVector::from_vec(vec![0.0, 0.0])));
        assert!(!spec.contains(&DVector::from_vec(vec![10.0, 0.0])));
        assert!(!spec.contains(&DVector::from_vec(vec![3.0])));
    }

    #[test]
    fn gap_threshold_binds() {
        let mut h = LogisticHistory::new(1);
        for _ in 0..40 {
            h.push(LogisticObservation::new(DVector::from_vec(vec![1.0]), 1).unwrap())
                .unwrap();
        }
        // Losses decrease toward theta = S; center the set at the boundary
        // minimizer and give it a small radius.
        use crate::glm::CumulativeLoss;
        let center = DVector::from_vec(vec![5.0]);
        let mle_loss = h.loss(&center);
        let spec = ConfidenceSpec::new(&h, center.clone(), mle_loss, 0.5, 5.0);
        assert!(spec.contains(&center));
        assert!(!spec.contains(&DVector::from_vec(vec![-5.0])));
        assert_abs_diff_eq!(spec.loss_gap(&center), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn nestedness_of_radii() {
        let mut h = LogisticHistory::new(2);
        for i in 0..30 {
            let x = DVector::from_vec(vec![0.7, if i % 2 == 0 { 0.3 } else { -0.3 }]);
            h.push(LogisticObservation::new(x, (i % 3 == 0) as u8).unwrap())
                .unwrap();
        }
        use crate::glm::CumulativeLoss;
        let center = DVector::zeros(2);
        let mle_loss = h.loss(&center);
        let small = ConfidenceSpec::new(&h, center.clone(), mle_loss, 1.0, 5.0);
        let large = ConfidenceSpec::new(&h, center, mle_loss, 4.0, 5.0);
        for i in 0..50 {
            let a = i as f64 * 0.37;
            let theta = DVector::from_vec(vec![3.0 * a.cos(), 3.0 * a.sin()]);
            if small.contains(&theta) {
                assert!(large.contains(&theta));
            }
        }
    }

    #[test]
    fn trace_of_ball_is_circle() {
        let h = LogisticHistory::new(2);
        let spec = ConfidenceSpec::new(&h, DVector::zeros(2), 0.0, 9.0, 5.0);
        for n_rays in [4usize, 8] {
            let poly = boundary_trace_2d(&spec, n_rays).unwrap();
            assert_eq!(poly.len(), n_rays);
            for p in &poly {
                assert_abs_diff_eq!((p[0] * p[0] + p[1] * p[1]).sqrt(), 5.0, epsilon = 1e-9);
            }
        }
        assert!(boundary_trace_2d(&spec, 3).is_err());
    }

    #[test]
    fn trace_is_convex_and_nested() {
        let mut h = LogisticHistory::new(2);
        for i in 0..60 {
            let a = 0.4 + 0.01 * (i % 7) as f64;
            let x = DVector::from_vec(vec![a, 1.0 - a]);
            h.push(LogisticObservation::new(x, (i % 2) as u8).unwrap())
                .unwrap();
        }
        use crate::glm::CumulativeLoss;
        let center = DVector::zeros(2);
        let mle_loss = h.loss(&center);
        let spec = ConfidenceSpec::new(&h, center.clone(), mle_loss, 2.0, 5.0);
        let poly = boundary_trace_2d(&spec, 64).unwrap();
        let n = poly.len();
        for i in 0..n {
            let a = poly[i];
            let b = poly[(i + 1) % n];
            let c = poly[(i + 2) % n];
            let cross = (b[0] - a[0]) * (c[1] - b[1]) - (b[1] - a[1]) * (c[0] - b[0]);
            assert!(cross >= -1e-8, "polygon turned clockwise at vertex {i}");
        }

        let tight = ConfidenceSpec::new(&h, center, mle_loss, 0.5, 5.0);
        let inner = boundary_trace_2d(&tight, 64).unwrap();
        for p in &inner {
            // Pull each inner vertex slightly toward the shared center to
            // stay clear of coincident-edge ambiguity.
            let q = [p[0] * 0.999, p[1] * 0.999];
            assert!(point_in_polygon(&q, &poly));
        }
    }

    #[test]
    fn trace_keeps_center_inside() {
        let mut h = LogisticHistory::new(2);
        for _ in 0..20 {
            let x = DVector::from_vec(vec![0.9, 0.1]);
            h.push(LogisticObservation::new(x, 1).unwrap()).unwrap();
        }
        use crate::glm::CumulativeLoss;
        let center = DVector::from_vec(vec![1.5, 0.5]);
        let mle_loss = h.loss(&center);
        let spec = ConfidenceSpec::new(&h, center.clone(), mle_loss, 1.0, 5.0);
        let poly = boundary_trace_2d(&spec, 32).unwrap();
        assert!(point_in_polygon(&[center[0], center[1]], &poly));
    }

    #[test]
    fn ledger_counts_failures() {
        let mut ledger = CoverageLedger::new(3);
        ledger.record_run(&[true, true, true]);
        ledger.record_run(&[true, false, true]);
        ledger.record_run(&[false, false, true]);
        assert_eq!(ledger.runs(), 3);
        assert_eq!(ledger.failed_runs(), 2);
        assert_abs_diff_eq!(ledger.failure_rate(), 2.0 / 3.0, epsilon = 1e-15);
        assert_abs_diff_eq!(ledger.coverage_at(1), 2.0 / 3.0, epsilon = 1e-15);
        assert_abs_diff_eq!(ledger.coverage_at(2), 1.0 / 3.0, epsilon = 1e-15);
        assert_abs_diff_eq!(ledger.coverage_at(3), 1.0, epsilon = 1e-15);
    }
}
