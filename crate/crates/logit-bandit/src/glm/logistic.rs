use nalgebra::DVector;

use super::{GlmError, NORM_SLACK};

/// One round of the binary model: a context/action feature and the observed
/// reward. The martingale noise r - mu(<x, theta_star>) is derived where
/// needed, never stored.
#[derive(Debug, Clone, PartialEq)]
pub struct LogisticObservation {
    arm: DVector<f64>,
    reward: u8,
}

impl LogisticObservation {
    /// Validates the unit-ball arm bound and the binary reward.
    pub fn new(arm: DVector<f64>, reward: u8) -> Result<Self, GlmError> {
        if arm.iter().any(|v| !v.is_finite()) {
            return Err(GlmError::NonFiniteArm);
        }
        let norm = arm.norm();
        if norm > 1.0 + NORM_SLACK {
            return Err(GlmError::ArmNormTooLarge(norm));
        }
        if reward > 1 {
            return Err(GlmError::InvalidReward(reward));
        }
        Ok(Self { arm, reward })
    }

    pub fn arm(&self) -> &DVector<f64> {
        &self.arm
    }

    pub fn reward(&self) -> u8 {
        self.reward
    }
}

/// Logistic link mu(z) = 1/(1+e^-z), branched on the sign of `z` so the
/// exponential argument is never positive.
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Derivative of the link, mu(z)(1 - mu(z)). Underflows to 0 for |z| beyond
/// ~745, which is the mathematically correct limit.
pub fn sigmoid_deriv(z: f64) -> f64 {
    let s = sigmoid(z);
    s * (1.0 - s)
}

/// log(1 + e^z), the Bernoulli log-partition function, computed without
/// overflow on either tail.
pub fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

/// Softplus and sigmoid from one shared exponential, for the cumulative-loss
/// hot loop. Agrees with the separate functions to the bit: the expressions
/// match on each side of zero, and at zero both give (ln 2, 1/2).
pub fn softplus_sigmoid(z: f64) -> (f64, f64) {
    if z >= 0.0 {
        let e = (-z).exp();
        (z + e.ln_1p(), 1.0 / (1.0 + e))
    } else {
        let e = z.exp();
        (e.ln_1p(), e / (1.0 + e))
    }
}

/// Negative log-likelihood -r log mu(z) - (1-r) log(1-mu(z)) at z = <x, theta>.
pub fn logistic_loss(obs: &LogisticObservation, theta: &DVector<f64>) -> f64 {
    let z = obs.arm.dot(theta);
    if obs.reward == 1 {
        softplus(-z)
    } else {
        softplus(z)
    }
}

/// Gradient of [`logistic_loss`] in theta: (mu(<x, theta>) - r) x.
pub fn logistic_grad(obs: &LogisticObservation, theta: &DVector<f64>) -> DVector<f64> {
    let z = obs.arm.dot(theta);
    let coef = sigmoid(z) - f64::from(obs.reward);
    &obs.arm * coef
}

/// KL divergence between Bernoulli(p) and Bernoulli(q), first argument the
/// true/source distribution. Boundary probabilities are rejected rather than
/// mapped to infinity: every model probability in this crate is strictly
/// interior, so a boundary value here means an upstream bug.
pub fn kl_bernoulli(p: f64, q: f64) -> Result<f64, GlmError> {
    for v in [p, q] {
        if !(v > 0.0 && v < 1.0) {
            return Err(GlmError::ProbabilityNotInterior(v));
        }
    }
    let kl = p * (p / q).ln() + (1.0 - p) * ((1.0 - p) / (1.0 - q)).ln();
    Ok(kl.max(0.0))
}

/// Bregman divergence of the Bernoulli log-partition m(z) = log(1+e^z):
/// m(z1) - m(z2) - mu(z2)(z1 - z2). Equals
/// `kl_bernoulli(sigmoid(z2), sigmoid(z1))`, which is the identity the
/// decomposition checks pin down numerically.
pub fn bregman_logpartition(z1: f64, z2: f64) -> f64 {
    (softplus(z1) - softplus(z2) - sigmoid(z2) * (z1 - z2)).max(0.0)
}
