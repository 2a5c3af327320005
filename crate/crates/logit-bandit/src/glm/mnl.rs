use nalgebra::{DMatrix, DVector};

use super::{sigmoid, GlmError, NORM_SLACK};

/// Tolerance on probability-vector normalization checks.
const SUM_TOL: f64 = 1e-9;

/// One round of the multinomial model: the shown feature and the chosen
/// category, with 0 standing for "no choice".
#[derive(Debug, Clone, PartialEq)]
pub struct MNLObservation {
    arm: DVector<f64>,
    outcome: usize,
}

impl MNLObservation {
    /// The outcome's upper range depends on K and is enforced when the
    /// observation enters a history.
    pub fn new(arm: DVector<f64>, outcome: usize) -> Result<Self, GlmError> {
        if arm.iter().any(|v| !v.is_finite()) {
            return Err(GlmError::NonFiniteArm);
        }
        let norm = arm.norm();
        if norm > 1.0 + NORM_SLACK {
            return Err(GlmError::ArmNormTooLarge(norm));
        }
        Ok(Self { arm, outcome })
    }

    pub fn arm(&self) -> &DVector<f64> {
        &self.arm
    }

    pub fn outcome(&self) -> usize {
        self.outcome
    }
}

/// Multinomial parameter: a K x d matrix of per-category vectors theta^(k)
/// together with the Frobenius-norm bound it is required to satisfy.
/// Category 0 has no row; its logit is identically zero.
#[derive(Debug, Clone, PartialEq)]
pub struct MNLParam {
    matrix: DMatrix<f64>,
    bound: f64,
}

impl MNLParam {
    pub fn new(matrix: DMatrix<f64>, bound: f64) -> Result<Self, GlmError> {
        assert!(bound > 0.0, "norm bound must be positive");
        let norm = matrix.norm();
        if norm > bound + NORM_SLACK * bound.max(1.0) {
            return Err(GlmError::ParamNormTooLarge { norm, bound });
        }
        Ok(Self { matrix, bound })
    }

    /// Wraps a matrix with the tight bound S = its own Frobenius norm
    /// (or 1 for the zero matrix, since a bound must be positive).
    pub fn from_matrix(matrix: DMatrix<f64>) -> Self {
        let bound = matrix.norm().max(1.0);
        Self { matrix, bound }
    }

    /// Rebuilds the K x d matrix from a row-major flattened vector.
    pub fn from_flat(flat: &DVector<f64>, k: usize, d: usize, bound: f64) -> Result<Self, GlmError> {
        if flat.len() != k * d {
            return Err(GlmError::DimensionMismatch {
                expected: k * d,
                got: flat.len(),
            });
        }
        Self::new(DMatrix::from_row_slice(k, d, flat.as_slice()), bound)
    }

    /// Row-major flattening; the Euclidean norm of the result equals the
    /// Frobenius norm of the matrix, so ball projections transfer verbatim.
    pub fn to_flat(&self) -> DVector<f64> {
        let k = self.k();
        let d = self.d();
        let mut out = DVector::zeros(k * d);
        for i in 0..k {
            for j in 0..d {
                out[i * d + j] = self.matrix[(i, j)];
            }
        }
        out
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn bound(&self) -> f64 {
        self.bound
    }

    pub fn k(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn d(&self) -> usize {
        self.matrix.ncols()
    }
}

/// log(1 + sum_k e^{z_k}), the log-partition of the categorical model with
/// the implicit zero logit, max-shifted so no exponential overflows.
pub fn log_sum_exp0(logits: &DVector<f64>) -> f64 {
    let m = logits.iter().fold(0.0f64, |a, &b| a.max(b));
    let sum: f64 = (-m).exp() + logits.iter().map(|&z| (z - m).exp()).sum::<f64>();
    m + sum.ln()
}

/// Full probability vector (p_0, p_1, ..., p_K) from the K free logits.
pub fn softmax_from_logits(logits: &DVector<f64>) -> DVector<f64> {
    let m = logits.iter().fold(0.0f64, |a, &b| a.max(b));
    let mut out = DVector::zeros(logits.len() + 1);
    out[0] = (-m).exp();
    for (i, &z) in logits.iter().enumerate() {
        out[i + 1] = (z - m).exp();
    }
    let den = out.sum();
    out / den
}

/// Choice probabilities mu_k(x, Theta) for k = 0..K.
pub fn softmax_probs(arm: &DVector<f64>, params: &MNLParam) -> DVector<f64> {
    softmax_from_logits(&(params.matrix() * arm))
}

/// Cross-entropy loss -log mu_outcome(x, Theta), evaluated as
/// log(1 + sum e^{z_j}) - z_outcome so it shares all arithmetic with
/// [`softmax_probs`].
pub fn mnl_loss(obs: &MNLObservation, params: &MNLParam) -> f64 {
    assert!(
        obs.outcome <= params.k(),
        "outcome {} out of range for K = {}",
        obs.outcome,
        params.k()
    );
    let logits = params.matrix() * &obs.arm;
    let z_obs = if obs.outcome == 0 {
        0.0
    } else {
        logits[obs.outcome - 1]
    };
    log_sum_exp0(&logits) - z_obs
}

/// Gradient of [`mnl_loss`] in Theta: row k equals (mu_k - y_k) x^T.
pub fn mnl_grad(obs: &MNLObservation, params: &MNLParam) -> DMatrix<f64> {
    assert!(
        obs.outcome <= params.k(),
        "outcome {} out of range for K = {}",
        obs.outcome,
        params.k()
    );
    let probs = softmax_probs(&obs.arm, params);
    let k = params.k();
    let d = params.d();
    let mut grad = DMatrix::zeros(k, d);
    for i in 0..k {
        let y = if obs.outcome == i + 1 { 1.0 } else { 0.0 };
        let coef = probs[i + 1] - y;
        for j in 0..d {
            grad[(i, j)] = coef * obs.arm[j];
        }
    }
    grad
}

/// Covariance-style matrix A(x, Theta) = diag(mu_{1..K}) - mu mu^T over the
/// explicit categories. Its eigenvalues lie in [0, 1/2]; for K = 1 it
/// reduces to the Bernoulli variance mu(1-mu).
pub fn a_matrix(arm: &DVector<f64>, params: &MNLParam) -> DMatrix<f64> {
    let probs = softmax_probs(arm, params);
    let k = params.k();
    let mu = probs.rows(1, k).into_owned();
    DMatrix::from_diagonal(&mu) - &mu * mu.transpose()
}

/// KL divergence between categorical distributions over K+1 categories,
/// first argument the true/source distribution. Rejects boundary or
/// unnormalized inputs; interior probabilities are an invariant of every
/// producer in this crate.
pub fn kl_categorical(p: &DVector<f64>, q: &DVector<f64>) -> Result<f64, GlmError> {
    if p.len() != q.len() {
        return Err(GlmError::DimensionMismatch {
            expected: p.len(),
            got: q.len(),
        });
    }
    for v in [p, q] {
        for (i, &x) in v.iter().enumerate() {
            if !(x > 0.0) || !x.is_finite() {
                return Err(GlmError::NonPositiveEntry { index: i, value: x });
            }
        }
        let sum = v.sum();
        if (sum - 1.0).abs() > SUM_TOL {
            return Err(GlmError::NotNormalized(sum));
        }
    }
    let kl: f64 = p
        .iter()
        .zip(q.iter())
        .map(|(&pi, &qi)| pi * (pi / qi).ln())
        .sum();
    Ok(kl.max(0.0))
}

/// Bregman divergence of the log-exp-sum function m(z) = log(1 + sum e^{z_k})
/// between two logit vectors: m(z1) - m(z2) - <grad m(z2), z1 - z2>. Equals
/// the categorical KL from softmax(z2) to softmax(z1).
pub fn bregman_logsumexp(z1: &DVector<f64>, z2: &DVector<f64>) -> f64 {
    assert_eq!(z1.len(), z2.len(), "logit vectors must share a length");
    let grad = softmax_from_logits(z2);
    let inner: f64 = z1
        .iter()
        .zip(z2.iter())
        .enumerate()
        .map(|(i, (&a, &b))| grad[i + 1] * (a - b))
        .sum();
    (log_sum_exp0(z1) - log_sum_exp0(z2) - inner).max(0.0)
}

/// Reconstructs a parameter matrix whose choice probabilities at `arm`
/// reproduce (1 - sum p, p_1, ..., p_K): the log-odds against category 0 are
/// log(p_k / p_0), and theta^(k) = log(p_k/p_0) / ||x||^2 * x places exactly
/// that value in <x, theta^(k)>.
pub fn softmax_invert(p: &DVector<f64>, arm: &DVector<f64>) -> Result<MNLParam, GlmError> {
    for (i, &v) in p.iter().enumerate() {
        if !(v > 0.0) || !v.is_finite() {
            return Err(GlmError::NonPositiveEntry { index: i, value: v });
        }
    }
    let total = p.sum();
    if total >= 1.0 {
        return Err(GlmError::NoResidualMass(total));
    }
    let norm_sq = arm.norm_squared();
    if norm_sq == 0.0 {
        return Err(GlmError::ZeroArm);
    }
    let p0 = 1.0 - total;
    let k = p.len();
    let d = arm.len();
    let mut matrix = DMatrix::zeros(k, d);
    for i in 0..k {
        let coef = (p[i] / p0).ln() / norm_sq;
        for j in 0..d {
            matrix[(i, j)] = coef * arm[j];
        }
    }
    Ok(MNLParam::from_matrix(matrix))
}

/// Binary-consistency helper used in tests: for K = 1 the model must match
/// the plain logistic link.
#[allow(dead_code)]
fn binary_probs(z: f64) -> (f64, f64) {
    (1.0 - sigmoid(z), sigmoid(z))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn param_rows(rows: &[&[f64]], bound: f64) -> MNLParam {
        let k = rows.len();
        let d = rows[0].len();
        let flat: Vec<f64> = rows.iter().flat_map(|r| r.iter().copied()).collect();
        MNLParam::new(DMatrix::from_row_slice(k, d, &flat), bound).unwrap()
    }

    #[test]
    fn softmax_uniform_at_zero() {
        let params = param_rows(&[&[0.0, 0.0], &[0.0, 0.0], &[0.0, 0.0]], 1.0);
        let x = DVector::from_vec(vec![0.3, -0.4]);
        let p = softmax_probs(&x, &params);
        for i in 0..4 {
            assert_abs_diff_eq!(p[i], 0.25, epsilon = 1e-15);
        }
    }

    #[test]
    fn softmax_matches_binary_link() {
        let params = param_rows(&[&[1.3, -0.2]], 5.0);
        let x = DVector::from_vec(vec![0.5, 0.5]);
        let z = params.matrix().row(0).transpose().dot(&x);
        let p = softmax_probs(&x, &params);
        let (p0, p1) = binary_probs(z);
        assert_abs_diff_eq!(p[0], p0, epsilon = 1e-15);
        assert_abs_diff_eq!(p[1], p1, epsilon = 1e-15);
    }

    #[test]
    fn softmax_quarter_half_quarter() {
        let params = param_rows(&[&[2f64.ln(), 0.0], &[0.0, 0.0]], 1.0);
        let x = DVector::from_vec(vec![1.0, 0.0]);
        let p = softmax_probs(&x, &params);
        assert_abs_diff_eq!(p[0], 0.25, epsilon = 1e-14);
        assert_abs_diff_eq!(p[1], 0.5, epsilon = 1e-14);
        assert_abs_diff_eq!(p[2], 0.25, epsilon = 1e-14);
        assert_abs_diff_eq!(p.sum(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn loss_is_negative_log_prob() {
        let params = param_rows(&[&[0.8, -1.1], &[0.2, 0.4]], 5.0);
        let x = DVector::from_vec(vec![0.7, -0.6]);
        for outcome in 0..=2 {
            let obs = MNLObservation::new(x.clone(), outcome).unwrap();
            let direct = -softmax_probs(&x, &params)[outcome].ln();
            assert_abs_diff_eq!(mnl_loss(&obs, &params), direct, epsilon = 1e-14);
        }
    }

    #[test]
    fn loss_and_grad_at_zero() {
        let params = param_rows(&[&[0.0], &[0.0]], 1.0);
        let obs = MNLObservation::new(DVector::from_vec(vec![1.0]), 1).unwrap();
        let zero1 = param_rows(&[&[0.0]], 1.0);
        let obs_bin = MNLObservation::new(DVector::from_vec(vec![1.0]), 0).unwrap();
        assert_abs_diff_eq!(mnl_loss(&obs_bin, &zero1), 2f64.ln(), epsilon = 1e-15);
        let g = mnl_grad(&obs, &params);
        assert_abs_diff_eq!(g[(0, 0)], 1.0 / 3.0 - 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(g[(1, 0)], 1.0 / 3.0, epsilon = 1e-15);
    }

    #[test]
    fn a_matrix_examples() {
        let p1 = param_rows(&[&[0.0]], 1.0);
        let x = DVector::from_vec(vec![1.0]);
        let a = a_matrix(&x, &p1);
        assert_abs_diff_eq!(a[(0, 0)], 0.25, epsilon = 1e-15);

        let p2 = param_rows(&[&[0.0, 0.0], &[0.0, 0.0]], 1.0);
        let x2 = DVector::from_vec(vec![0.2, 0.9]);
        let a2 = a_matrix(&x2, &p2);
        assert_abs_diff_eq!(a2[(0, 0)], 2.0 / 9.0, epsilon = 1e-14);
        assert_abs_diff_eq!(a2[(0, 1)], -1.0 / 9.0, epsilon = 1e-14);
        assert_abs_diff_eq!(a2[(1, 0)], -1.0 / 9.0, epsilon = 1e-14);
        assert_abs_diff_eq!(a2[(1, 1)], 2.0 / 9.0, epsilon = 1e-14);

        let eig = a2.symmetric_eigenvalues();
        for &l in eig.iter() {
            assert!(l >= -1e-12 && l <= 0.5 + 1e-12);
        }
    }

    #[test]
    fn kl_categorical_values() {
        let u = DVector::from_vec(vec![1.0 / 3.0; 3]);
        let q = DVector::from_vec(vec![0.5, 0.25, 0.25]);
        assert_eq!(kl_categorical(&u, &u).unwrap(), 0.0);
        assert_abs_diff_eq!(
            kl_categorical(&u, &q).unwrap(),
            0.05663301226513249,
            epsilon = 1e-14
        );
        let bad = DVector::from_vec(vec![0.5, 0.5, 0.1]);
        assert!(kl_categorical(&u, &bad).is_err());
        let zero = DVector::from_vec(vec![0.0, 0.5, 0.5]);
        assert!(kl_categorical(&zero, &u).is_err());
        assert!(kl_categorical(&u, &DVector::from_vec(vec![0.5, 0.5])).is_err());
    }

    #[test]
    fn invert_examples() {
        let p = DVector::from_vec(vec![1.0 / 3.0, 1.0 / 3.0]);
        let x = DVector::from_vec(vec![0.6, 0.8]);
        let params = softmax_invert(&p, &x).unwrap();
        assert!(params.matrix().norm() < 1e-14);

        let p = DVector::from_vec(vec![0.5, 0.25]);
        let e1 = DVector::from_vec(vec![1.0, 0.0]);
        let params = softmax_invert(&p, &e1).unwrap();
        assert_abs_diff_eq!(params.matrix()[(0, 0)], 2f64.ln(), epsilon = 1e-14);
        assert_abs_diff_eq!(params.matrix()[(1, 0)], 0.0, epsilon = 1e-14);

        let p = DVector::from_vec(vec![0.2, 0.5]);
        let x = DVector::from_vec(vec![0.6, 0.8]);
        let back = softmax_probs(&x, &softmax_invert(&p, &x).unwrap());
        assert_abs_diff_eq!(back[0], 0.3, epsilon = 1e-10);
        assert_abs_diff_eq!(back[1], 0.2, epsilon = 1e-10);
        assert_abs_diff_eq!(back[2], 0.5, epsilon = 1e-10);
    }

    #[test]
    fn invert_handles_non_unit_arms() {
        let p = DVector::from_vec(vec![0.15, 0.3, 0.35]);
        let x = DVector::from_vec(vec![0.2, -0.1, 0.05]);
        let back = softmax_probs(&x, &softmax_invert(&p, &x).unwrap());
        assert_abs_diff_eq!(back[0], 0.2, epsilon = 1e-10);
        assert_abs_diff_eq!(back[1], 0.15, epsilon = 1e-10);
        assert_abs_diff_eq!(back[2], 0.3, epsilon = 1e-10);
        assert_abs_diff_eq!(back[3], 0.35, epsilon = 1e-10);
    }

    #[test]
    fn invert_rejects_bad_inputs() {
        let x = DVector::from_vec(vec![1.0, 0.0]);
        assert!(softmax_invert(&DVector::from_vec(vec![0.7, 0.4]), &x).is_err());
        assert!(softmax_invert(&DVector::from_vec(vec![0.0, 0.4]), &x).is_err());
        assert!(softmax_invert(&DVector::from_vec(vec![0.2, 0.3]), &DVector::zeros(2)).is_err());
    }

    #[test]
    fn param_norm_enforced() {
        let m = DMatrix::from_row_slice(1, 2, &[3.0, 4.0]);
        assert!(MNLParam::new(m.clone(), 5.0).is_ok());
        assert!(MNLParam::new(m, 4.9).is_err());
    }

    #[test]
    fn flat_round_trip() {
        let params = param_rows(&[&[1.0, 2.0, 3.0], &[4.0, 5.0, 6.0]], 10.0);
        let flat = params.to_flat();
        assert_eq!(flat.as_slice(), &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let back = MNLParam::from_flat(&flat, 2, 3, 10.0).unwrap();
        assert_eq!(back.matrix(), params.matrix());
        assert_abs_diff_eq!(flat.norm(), params.matrix().norm(), epsilon = 1e-15);
    }
}
