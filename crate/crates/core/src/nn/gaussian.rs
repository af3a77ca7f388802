//! Tanh-squashed diagonal Gaussian policies.

use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2};
use rand::Rng;
use rand_distr::StandardNormal;

const HALF_LOG_TAU: f64 = 0.918_938_533_204_672_8;

/// `log(1 − tanh²(z))` without cancellation for large `|z|`.
pub fn log_one_minus_tanh_sq(z: f64) -> f64 {
    let a = z.abs();
    2.0 * (std::f64::consts::LN_2 - a - (-2.0 * a).exp().ln_1p())
}

/// A batch of reparameterized samples `a = tanh(μ + σ ε)`.
#[derive(Debug, Clone)]
pub struct SquashedSample {
    pub action: Array2<f64>,
    pub log_prob: Array1<f64>,
    eps: Array2<f64>,
    std: Array2<f64>,
}

impl SquashedSample {
    /// Draws standard-normal noise for `head` (mean | log-std columns).
    pub fn draw<R: Rng + ?Sized>(head: ArrayView2<'_, f64>, rng: &mut R) -> Self {
        let dim = head.ncols() / 2;
        let eps = Array2::from_shape_fn((head.nrows(), dim), |_| rng.sample(StandardNormal));
        Self::with_noise(head, eps.view())
    }

    /// Deterministic in the supplied noise.
    pub fn with_noise(head: ArrayView2<'_, f64>, eps: ArrayView2<'_, f64>) -> Self {
        let dim = head.ncols() / 2;
        assert_eq!(eps.dim(), (head.nrows(), dim), "noise shape");
        let mean = head.slice(s![.., ..dim]);
        let std = head.slice(s![.., dim..]).mapv(f64::exp);
        let z = &mean + &(&std * &eps);
        let action = z.mapv(f64::tanh);
        let mut log_prob = Array1::zeros(head.nrows());
        for i in 0..head.nrows() {
            let mut lp = 0.0;
            for j in 0..dim {
                let e = eps[[i, j]];
                lp += -0.5 * e * e - head[[i, dim + j]] - HALF_LOG_TAU - log_one_minus_tanh_sq(z[[i, j]]);
            }
            log_prob[i] = lp;
        }
        SquashedSample {
            action,
            log_prob,
            eps: eps.to_owned(),
            std,
        }
    }

    /// Gradient with respect to the head output (mean | log-std) given the
    /// upstream gradients on the actions and on the log-probabilities.
    pub fn backward(&self, d_action: ArrayView2<'_, f64>, d_log_prob: ArrayView1<'_, f64>) -> Array2<f64> {
        let (n, dim) = self.action.dim();
        let mut g = Array2::zeros((n, 2 * dim));
        for i in 0..n {
            let gl = d_log_prob[i];
            for j in 0..dim {
                let a = self.action[[i, j]];
                // ∂logp/∂z = 2 tanh z ; ∂a/∂z = 1 − a²
                let dz = d_action[[i, j]] * (1.0 - a * a) + gl * 2.0 * a;
                g[[i, j]] = dz;
                g[[i, dim + j]] = dz * self.std[[i, j]] * self.eps[[i, j]] - gl;
            }
        }
        g
    }
}

/// Deterministic action `tanh(μ)`.
pub fn mean_action(head: ArrayView2<'_, f64>) -> Array2<f64> {
    let dim = head.ncols() / 2;
    head.slice(s![.., ..dim]).mapv(f64::tanh)
}
