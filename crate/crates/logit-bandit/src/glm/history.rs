use nalgebra::DVector;

use super::logistic::{softplus, softplus_sigmoid};
use super::{GlmError, LogisticObservation, MNLObservation};

/// Cumulative negative log-likelihood of an observation history, as a
/// function of a flattened parameter vector. The multinomial K x d matrix is
/// flattened row-major, so one implementation of ball-constrained
/// minimization serves both models.
///
/// The loss at round t sums the first t-1 observations; an empty history is
/// the constant 0 and every parameter in the ball minimizes it.
pub trait CumulativeLoss: Sync {
    /// Flattened parameter dimension (d, or K*d).
    fn dim(&self) -> usize;

    /// Number of observations summed.
    fn len(&self) -> usize;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn loss(&self, theta: &DVector<f64>) -> f64;

    fn grad(&self, theta: &DVector<f64>) -> DVector<f64>;

    /// Fused pass; the default just calls both.
    fn loss_grad(&self, theta: &DVector<f64>) -> (f64, DVector<f64>) {
        (self.loss(theta), self.grad(theta))
    }
}

/// Binary-model history with cached flat storage for the hot evaluation
/// loop. Using the identity -r log mu - (1-r) log(1-mu) = m(z) - r z with
/// m(z) = log(1+e^z), the cumulative loss is sum_s m(z_s) - <w, theta> where
/// w = sum of reward-1 arms, so the reward side costs one cached dot product.
#[derive(Debug, Clone)]
pub struct LogisticHistory {
    dim: usize,
    obs: Vec<LogisticObservation>,
    xs: Vec<f64>,
    w: DVector<f64>,
}

impl LogisticHistory {
    pub fn new(dim: usize) -> Self {
        assert!(dim > 0, "feature dimension must be positive");
        Self {
            dim,
            obs: Vec::new(),
            xs: Vec::new(),
            w: DVector::zeros(dim),
        }
    }

    pub fn push(&mut self, obs: LogisticObservation) -> Result<(), GlmError> {
        if obs.arm().len() != self.dim {
            return Err(GlmError::DimensionMismatch {
                expected: self.dim,
                got: obs.arm().len(),
            });
        }
        self.xs.extend_from_slice(obs.arm().as_slice());
        if obs.reward() == 1 {
            self.w += obs.arm();
        }
        self.obs.push(obs);
        Ok(())
    }

    pub fn observations(&self) -> &[LogisticObservation] {
        &self.obs
    }
}

impl CumulativeLoss for LogisticHistory {
    fn dim(&self) -> usize {
        self.dim
    }

    fn len(&self) -> usize {
        self.obs.len()
    }

    // The planar case carries nearly all the solver traffic (every UCB line
    // search lands here), so it gets a hand-unrolled loop.
    fn loss(&self, theta: &DVector<f64>) -> f64 {
        debug_assert_eq!(theta.len(), self.dim);
        let th = theta.as_slice();
        let mut acc = 0.0;
        if self.dim == 2 {
            let (t0, t1) = (th[0], th[1]);
            for x in self.xs.chunks_exact(2) {
                acc += softplus(x[0] * t0 + x[1] * t1);
            }
        } else {
            for x in self.xs.chunks_exact(self.dim) {
                let z: f64 = x.iter().zip(th).map(|(a, b)| a * b).sum();
                acc += softplus(z);
            }
        }
        acc - self.w.dot(theta)
    }

    fn grad(&self, theta: &DVector<f64>) -> DVector<f64> {
        self.loss_grad(theta).1
    }

    fn loss_grad(&self, theta: &DVector<f64>) -> (f64, DVector<f64>) {
        debug_assert_eq!(theta.len(), self.dim);
        let th = theta.as_slice();
        let mut acc = 0.0;
        let mut g = DVector::zeros(self.dim);
        if self.dim == 2 {
            let (t0, t1) = (th[0], th[1]);
            let (mut g0, mut g1) = (0.0, 0.0);
            for x in self.xs.chunks_exact(2) {
                let (sp, mu) = softplus_sigmoid(x[0] * t0 + x[1] * t1);
                acc += sp;
                g0 += mu * x[0];
                g1 += mu * x[1];
            }
            g[0] = g0;
            g[1] = g1;
        } else {
            let gs = g.as_mut_slice();
            for x in self.xs.chunks_exact(self.dim) {
                let (sp, mu) = softplus_sigmoid(x.iter().zip(th).map(|(a, b)| a * b).sum());
                acc += sp;
                for (gj, xj) in gs.iter_mut().zip(x) {
                    *gj += mu * xj;
                }
            }
        }
        (acc - self.w.dot(theta), g - &self.w)
    }
}

/// Multinomial history over K explicit categories; parameters are flattened
/// row-major (entry k*d + j is component j of theta^(k)).
#[derive(Debug, Clone)]
pub struct MnlHistory {
    k: usize,
    d: usize,
    obs: Vec<MNLObservation>,
    xs: Vec<f64>,
    outcomes: Vec<usize>,
}

impl MnlHistory {
    pub fn new(k: usize, d: usize) -> Self {
        assert!(k > 0 && d > 0, "K and d must be positive");
        Self {
            k,
            d,
            obs: Vec::new(),
            xs: Vec::new(),
            outcomes: Vec::new(),
        }
    }

    pub fn push(&mut self, obs: MNLObservation) -> Result<(), GlmError> {
        if obs.arm().len() != self.d {
            return Err(GlmError::DimensionMismatch {
                expected: self.d,
                got: obs.arm().len(),
            });
        }
        if obs.outcome() > self.k {
            return Err(GlmError::OutcomeOutOfRange {
                outcome: obs.outcome(),
                k: self.k,
            });
        }
        self.xs.extend_from_slice(obs.arm().as_slice());
        self.outcomes.push(obs.outcome());
        self.obs.push(obs);
        Ok(())
    }

    pub fn observations(&self) -> &[MNLObservation] {
        &self.obs
    }

    pub fn categories(&self) -> usize {
        self.k
    }

    pub fn arm_dim(&self) -> usize {
        self.d
    }
}

impl CumulativeLoss for MnlHistory {
    fn dim(&self) -> usize {
        self.k * self.d
    }

    fn len(&self) -> usize {
        self.obs.len()
    }

    fn loss(&self, theta: &DVector<f64>) -> f64 {
        debug_assert_eq!(theta.len(), self.dim());
        let th = theta.as_slice();
        let mut z = vec![0.0; self.k];
        let mut acc = 0.0;
        for (x, &y) in self.xs.chunks_exact(self.d).zip(&self.outcomes) {
            let mut m = 0.0f64;
            for (i, zi) in z.iter_mut().enumerate() {
                let row = &th[i * self.d..(i + 1) * self.d];
                *zi = row.iter().zip(x).map(|(a, b)| a * b).sum();
                m = m.max(*zi);
            }
            let sum: f64 = (-m).exp() + z.iter().map(|&v| (v - m).exp()).sum::<f64>();
            let lse = m + sum.ln();
            let z_obs = if y == 0 { 0.0 } else { z[y - 1] };
            acc += lse - z_obs;
        }
        acc
    }

    fn grad(&self, theta: &DVector<f64>) -> DVector<f64> {
        self.loss_grad(theta).1
    }

    fn loss_grad(&self, theta: &DVector<f64>) -> (f64, DVector<f64>) {
        debug_assert_eq!(theta.len(), self.dim());
        let th = theta.as_slice();
        let mut z = vec![0.0; self.k];
        let mut w = vec![0.0; self.k];
        let mut acc = 0.0;
        let mut g = DVector::zeros(self.dim());
        {
            let gs = g.as_mut_slice();
            for (x, &y) in self.xs.chunks_exact(self.d).zip(&self.outcomes) {
                let mut m = 0.0f64;
                for (i, zi) in z.iter_mut().enumerate() {
                    let row = &th[i * self.d..(i + 1) * self.d];
                    *zi = row.iter().zip(x).map(|(a, b)| a * b).sum();
                    m = m.max(*zi);
                }
                let mut den = (-m).exp();
                for (wi, &zi) in w.iter_mut().zip(&z) {
                    *wi = (zi - m).exp();
                    den += *wi;
                }
                let z_obs = if y == 0 { 0.0 } else { z[y - 1] };
                acc += m + den.ln() - z_obs;
                for (i, &wi) in w.iter().enumerate() {
                    let mu = wi / den;
                    let coef = if y == i + 1 { mu - 1.0 } else { mu };
                    let gr = &mut gs[i * self.d..(i + 1) * self.d];
                    for (gj, xj) in gr.iter_mut().zip(x) {
                        *gj += coef * xj;
                    }
                }
            }
        }
        (acc, g)
    }
}
