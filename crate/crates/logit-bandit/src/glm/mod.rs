//! Link functions, losses, and divergences for the Bernoulli and multinomial
//! logit models.
//!
//! The binary model draws rewards r ~ Bernoulli(mu(<x, theta>)) with
//! mu(z) = 1/(1+e^-z); the multinomial model picks one of K+1 categories with
//! probabilities proportional to (1, e^{z_1}, ..., e^{z_K}), z_k = <x, theta^(k)>,
//! category 0 carrying the implicit zero logit. Both negative log-likelihoods
//! are Bregman divergences of a log-partition function (log(1+e^z) in the
//! binary case, log(1+sum_k e^{z_k}) in the multinomial one), which is what
//! the confidence-set construction exploits.
//!
//! Everything here is a pure function of its inputs. All exp/log arithmetic
//! is stabilized by max-shifts and `ln_1p`, since parameter norms up to S and
//! arm norms up to 1 put logits anywhere in [-S, S].

mod history;
mod logistic;
mod mnl;

pub use history::{CumulativeLoss, LogisticHistory, MnlHistory};
pub use logistic::{
    bregman_logpartition, kl_bernoulli, logistic_grad, logistic_loss, sigmoid, sigmoid_deriv,
    softplus, LogisticObservation,
};
pub use mnl::{
    a_matrix, bregman_logsumexp, kl_categorical, log_sum_exp0, mnl_grad, mnl_loss, softmax_invert,
    softmax_from_logits, softmax_probs, MNLObservation, MNLParam,
};

use thiserror::Error;

/// Slack allowed past the stated norm bounds, scaled by `max(1, bound)`;
/// covers projection round-off from the solver.
pub const NORM_SLACK: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum GlmError {
    #[error("probability {0} lies outside the open interval (0, 1)")]
    ProbabilityNotInterior(f64),
    #[error("probability vector entry {index} is {value}; all entries must be strictly positive")]
    NonPositiveEntry { index: usize, value: f64 },
    #[error("probability vector sums to {0}, expected 1")]
    NotNormalized(f64),
    #[error("category probabilities sum to {0} >= 1, leaving no mass for category 0")]
    NoResidualMass(f64),
    #[error("arm feature must be nonzero")]
    ZeroArm,
    #[error("arm feature has a non-finite entry")]
    NonFiniteArm,
    #[error("arm norm {0} exceeds the unit bound")]
    ArmNormTooLarge(f64),
    #[error("reward {0} is not a binary outcome")]
    InvalidReward(u8),
    #[error("outcome {outcome} exceeds the number of categories K = {k}")]
    OutcomeOutOfRange { outcome: usize, k: usize },
    #[error("parameter Frobenius norm {norm} exceeds the bound {bound}")]
    ParamNormTooLarge { norm: f64, bound: f64 },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
}
