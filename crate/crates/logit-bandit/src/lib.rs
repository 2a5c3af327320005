//! Logistic and multinomial logit bandits with loss-based confidence sets.
//!
//! The library is organized around a single idea: the set of parameters whose
//! cumulative negative log-likelihood stays within a fixed budget of the
//! constrained maximum-likelihood estimate is a confidence set with a radius
//! that scales like `d log t` for the binary model and `d K log t` for the
//! multinomial one. Everything else is machinery around that set:
//!
//! - [`glm`]: link functions, losses, gradients, divergences, and the softmax
//!   inversion used to move between probability and parameter space.
//! - [`confidence`]: the radius formulas, set membership, and a 2-d boundary
//!   tracer for plotting cross-sections.
//! - [`optim`]: projected-gradient MLE over a norm ball and the optimistic
//!   inner maximization (max of a linear functional over the confidence set).
//! - [`agents`]: arm-selection rules built from those pieces, plus simple
//!   baselines.
//! - [`env`]: synthetic bandit instances, reward sampling, regret accounting,
//!   and curvature (kappa) diagnostics.
//! - [`harness`]: multi-seed experiment driver with CSV/JSON output.
//! - [`checks`]: numerical verification of the inequalities the construction
//!   relies on (decomposition identities, self-concordance, elliptical
//!   potential bounds, a Freedman-style martingale bound, and a scalar
//!   polynomial inequality).

pub mod agents;
pub mod checks;
pub mod confidence;
pub mod env;
pub mod glm;
pub mod harness;
pub mod optim;
