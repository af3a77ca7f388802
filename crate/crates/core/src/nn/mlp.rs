use ndarray::{linalg::general_mat_mul, Array2, ArrayView1, ArrayView2, ArrayViewMut2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Lower clamp of the log standard deviation of a Gaussian head.
pub const LOG_STD_MIN: f64 = -20.0;
/// Upper clamp of the log standard deviation of a Gaussian head.
pub const LOG_STD_MAX: f64 = 2.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Activation {
    Relu,
    Tanh,
}

impl Activation {
    pub(crate) fn tag(self) -> u8 {
        match self {
            Activation::Relu => 0,
            Activation::Tanh => 1,
        }
    }

    pub(crate) fn from_tag(t: u8) -> Option<Self> {
        match t {
            0 => Some(Activation::Relu),
            1 => Some(Activation::Tanh),
            _ => None,
        }
    }
}

/// What the last layer's output means.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Head {
    Linear,
    /// Logistic output in (0, 1).
    Sigmoid,
    /// First half of the outputs is the mean, second half the log standard
    /// deviation clamped to `[LOG_STD_MIN, LOG_STD_MAX]`.
    SquashedGaussian,
}

impl Head {
    pub(crate) fn tag(self) -> u8 {
        match self {
            Head::Linear => 0,
            Head::Sigmoid => 1,
            Head::SquashedGaussian => 2,
        }
    }

    pub(crate) fn from_tag(t: u8) -> Option<Self> {
        match t {
            0 => Some(Head::Linear),
            1 => Some(Head::Sigmoid),
            2 => Some(Head::SquashedGaussian),
            _ => None,
        }
    }
}

/// Fully connected network. Parameters live in one flat vector; layer `l`
/// stores its `fan_in × fan_out` weights row-major followed by its biases.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    sizes: Vec<usize>,
    activations: Vec<Activation>,
    head: Head,
    params: Vec<f64>,
}

/// Intermediates kept by [`Mlp::forward`] for the backward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    /// Input of every layer; `inputs[l + 1]` is the activated output of layer `l`.
    inputs: Vec<Array2<f64>>,
    /// Raw output of the last layer, before the head.
    raw: Array2<f64>,
    /// Head output.
    output: Array2<f64>,
}

impl ForwardCache {
    pub fn output(&self) -> &Array2<f64> {
        &self.output
    }

    pub fn into_output(self) -> Array2<f64> {
        self.output
    }
}

pub fn param_count(sizes: &[usize]) -> usize {
    sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
}

impl Mlp {
    /// Zero-initialized network. `activations` has one entry per hidden layer.
    pub fn zeros(sizes: &[usize], activations: &[Activation], head: Head) -> Result<Self> {
        if sizes.len() < 2 || sizes.iter().any(|&s| s == 0) {
            return Err(Error::invalid("mlp", "need at least input and output sizes, all > 0"));
        }
        if activations.len() != sizes.len() - 2 {
            return Err(Error::DimensionMismatch {
                expected: sizes.len() - 2,
                got: activations.len(),
            });
        }
        if head == Head::SquashedGaussian && sizes[sizes.len() - 1] % 2 != 0 {
            return Err(Error::invalid("mlp", "Gaussian head needs an even output size"));
        }
        Ok(Mlp {
            sizes: sizes.to_vec(),
            activations: activations.to_vec(),
            head,
            params: vec![0.0; param_count(sizes)],
        })
    }

    /// Uniform `±1/√fan_in` initialization of weights and biases.
    pub fn new<R: Rng + ?Sized>(
        sizes: &[usize],
        activations: &[Activation],
        head: Head,
        rng: &mut R,
    ) -> Result<Self> {
        let mut net = Self::zeros(sizes, activations, head)?;
        let mut off = 0;
        for w in sizes.windows(2) {
            let bound = 1.0 / (w[0] as f64).sqrt();
            let n = w[0] * w[1] + w[1];
            for p in &mut net.params[off..off + n] {
                *p = rng.random_range(-bound..bound);
            }
            off += n;
        }
        Ok(net)
    }

    /// Hidden layers of equal width with a shared activation.
    pub fn with_hidden<R: Rng + ?Sized>(
        input: usize,
        hidden: &[usize],
        output: usize,
        activation: Activation,
        head: Head,
        rng: &mut R,
    ) -> Result<Self> {
        let mut sizes = vec![input];
        sizes.extend_from_slice(hidden);
        sizes.push(output);
        Self::new(&sizes, &vec![activation; hidden.len()], head, rng)
    }

    pub fn from_parts(
        sizes: Vec<usize>,
        activations: Vec<Activation>,
        head: Head,
        params: Vec<f64>,
    ) -> Result<Self> {
        let mut net = Self::zeros(&sizes, &activations, head)?;
        if params.len() != net.params.len() {
            return Err(Error::DimensionMismatch {
                expected: net.params.len(),
                got: params.len(),
            });
        }
        net.params = params;
        Ok(net)
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn activations(&self) -> &[Activation] {
        &self.activations
    }

    pub fn head(&self) -> Head {
        self.head
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        self.sizes[self.sizes.len() - 1]
    }

    pub fn num_params(&self) -> usize {
        self.params.len()
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn same_architecture(&self, other: &Mlp) -> bool {
        self.sizes == other.sizes && self.activations == other.activations && self.head == other.head
    }

    /// Polyak averaging `θ ← τ θ_src + (1 − τ) θ`.
    pub fn soft_update(&mut self, src: &Mlp, tau: f64) {
        debug_assert!(self.same_architecture(src));
        for (t, s) in self.params.iter_mut().zip(&src.params) {
            *t = tau * s + (1.0 - tau) * *t;
        }
    }

    fn layer(&self, l: usize) -> (ArrayView2<'_, f64>, ArrayView1<'_, f64>) {
        let off: usize = self.sizes[..l + 1].windows(2).map(|w| w[0] * w[1] + w[1]).sum();
        let (fi, fo) = (self.sizes[l], self.sizes[l + 1]);
        let w = ArrayView2::from_shape((fi, fo), &self.params[off..off + fi * fo]).expect("layer shape");
        let b = ArrayView1::from(&self.params[off + fi * fo..off + fi * fo + fo]);
        (w, b)
    }

    /// Batched forward pass; rows of `x` are samples.
    pub fn forward(&self, x: ArrayView2<'_, f64>) -> Result<ForwardCache> {
        if x.ncols() != self.input_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim(),
                got: x.ncols(),
            });
        }
        let n_layers = self.sizes.len() - 1;
        let mut inputs = Vec::with_capacity(n_layers);
        inputs.push(x.to_owned());
        let mut raw = Array2::zeros((0, 0));
        for l in 0..n_layers {
            let (w, b) = self.layer(l);
            let mut z = Array2::zeros((x.nrows(), self.sizes[l + 1]));
            z.assign(&b.broadcast((x.nrows(), self.sizes[l + 1])).expect("bias broadcast"));
            general_mat_mul(1.0, &inputs[l], &w, 1.0, &mut z);
            if l + 1 < n_layers {
                match self.activations[l] {
                    Activation::Relu => z.mapv_inplace(|v| v.max(0.0)),
                    Activation::Tanh => z.mapv_inplace(f64::tanh),
                }
                inputs.push(z);
            } else {
                raw = z;
            }
        }
        let output = self.apply_head(&raw);
        Ok(ForwardCache { inputs, raw, output })
    }

    /// Forward pass for a single sample.
    pub fn forward_one(&self, x: &[f64]) -> Result<Vec<f64>> {
        let view = ArrayView2::from_shape((1, x.len()), x).expect("row view");
        Ok(self.forward(view)?.output.into_raw_vec_and_offset().0)
    }

    fn apply_head(&self, raw: &Array2<f64>) -> Array2<f64> {
        match self.head {
            Head::Linear => raw.clone(),
            Head::Sigmoid => raw.mapv(sigmoid),
            Head::SquashedGaussian => {
                let half = raw.ncols() / 2;
                let mut out = raw.clone();
                out.slice_mut(ndarray::s![.., half..])
                    .mapv_inplace(|v| v.clamp(LOG_STD_MIN, LOG_STD_MAX));
                out
            }
        }
    }

    /// Reverse pass. `d_out` is the gradient of a scalar loss with respect to
    /// the head output. Returns the parameter gradient (same layout as
    /// [`Mlp::params`]) and the gradient with respect to the input.
    pub fn backward(&self, cache: &ForwardCache, d_out: ArrayView2<'_, f64>) -> (Vec<f64>, Array2<f64>) {
        assert_eq!(d_out.dim(), cache.output.dim(), "upstream gradient shape");
        let mut delta = match self.head {
            Head::Linear => d_out.to_owned(),
            Head::Sigmoid => &d_out * &cache.output.mapv(|y| y * (1.0 - y)),
            Head::SquashedGaussian => {
                let half = cache.raw.ncols() / 2;
                let mut d = d_out.to_owned();
                ndarray::Zip::from(d.slice_mut(ndarray::s![.., half..]))
                    .and(cache.raw.slice(ndarray::s![.., half..]))
                    .for_each(|g, &r| {
                        if !(LOG_STD_MIN..=LOG_STD_MAX).contains(&r) {
                            *g = 0.0;
                        }
                    });
                d
            }
        };

        let mut grads = vec![0.0; self.params.len()];
        let n_layers = self.sizes.len() - 1;
        let offsets: Vec<usize> = std::iter::once(0)
            .chain(self.sizes.windows(2).scan(0, |acc, w| {
                *acc += w[0] * w[1] + w[1];
                Some(*acc)
            }))
            .collect();
        for l in (0..n_layers).rev() {
            let (fi, fo) = (self.sizes[l], self.sizes[l + 1]);
            let off = offsets[l];
            let (gw, gb) = grads[off..off + fi * fo + fo].split_at_mut(fi * fo);
            let mut gw = ArrayViewMut2::from_shape((fi, fo), gw).expect("grad shape");
            general_mat_mul(1.0, &cache.inputs[l].t(), &delta, 0.0, &mut gw);
            for (g, s) in gb.iter_mut().zip(delta.sum_axis(Axis(0))) {
                *g = s;
            }
            let (w, _) = self.layer(l);
            let mut d_in = delta.dot(&w.t());
            if l > 0 {
                let a = &cache.inputs[l];
                match self.activations[l - 1] {
                    Activation::Relu => ndarray::Zip::from(&mut d_in).and(a).for_each(|g, &y| {
                        if y <= 0.0 {
                            *g = 0.0;
                        }
                    }),
                    Activation::Tanh => {
                        ndarray::Zip::from(&mut d_in).and(a).for_each(|g, &y| *g *= 1.0 - y * y)
                    }
                }
            }
            delta = d_in;
        }
        (grads, delta)
    }

    /// Raw pre-activations of every hidden unit, for kink detection in
    /// finite-difference checks.
    pub fn hidden_preactivation_signs(&self, x: ArrayView2<'_, f64>) -> Result<Vec<bool>> {
        let cache = self.forward(x)?;
        Ok(cache.inputs[1..]
            .iter()
            .flat_map(|a| a.iter().map(|&v| v > 0.0).collect::<Vec<_>>())
            .collect())
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use ndarray::array;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_net_outputs_zero() {
        let net = Mlp::zeros(&[3, 4, 2], &[Activation::Relu], Head::Linear).unwrap();
        let y = net.forward_one(&[0.3, -1.0, 2.0]).unwrap();
        assert_eq!(y, vec![0.0, 0.0]);
    }

    #[test]
    fn identity_layer() {
        let net = Mlp::from_parts(vec![2, 2], vec![], Head::Linear, vec![1.0, 0.0, 0.0, 1.0, 0.0, 0.0]).unwrap();
        assert_eq!(net.forward_one(&[0.7, -0.2]).unwrap(), vec![0.7, -0.2]);
    }

    #[test]
    fn hand_computed_2_3_1() {
        // W1 (2×3) row-major, b1, W2 (3×1), b2
        let params = vec![
            0.5, -1.0, 0.25, //
            1.0, 0.5, -0.5, //
            0.1, 0.0, -0.2, //
            1.0, -2.0, 0.5, //
            0.3,
        ];
        let net = Mlp::from_parts(vec![2, 3, 1], vec![Activation::Relu], Head::Linear, params).unwrap();
        // x = (1, 2): z1 = (0.5+2+0.1, -1+1+0, 0.25-1-0.2) = (2.6, 0, -0.95)
        // relu → (2.6, 0, 0); y = 2.6 - 0 + 0 + 0.3 = 2.9
        let y = net.forward_one(&[1.0, 2.0]).unwrap();
        assert_relative_eq!(y[0], 2.9, epsilon = 1e-12);

        let tanh_net = Mlp::from_parts(
            vec![2, 3, 1],
            vec![Activation::Tanh],
            Head::Linear,
            net.params().to_vec(),
        )
        .unwrap();
        let expected = 2.6f64.tanh() - 2.0 * 0.0f64.tanh() + 0.5 * (-0.95f64).tanh() + 0.3;
        assert_relative_eq!(tanh_net.forward_one(&[1.0, 2.0]).unwrap()[0], expected, epsilon = 1e-12);
    }

    #[test]
    fn gaussian_head_clamps_log_std() {
        let params = vec![0.0, 0.0, 1.0, -50.0];
        let net = Mlp::from_parts(vec![1, 2], vec![], Head::SquashedGaussian, params).unwrap();
        // biases: mean 1.0, log-std -50 → clamped
        let y = net.forward_one(&[3.0]).unwrap();
        assert_eq!(y, vec![1.0, LOG_STD_MIN]);
        let net2 = Mlp::from_parts(vec![1, 2], vec![], Head::SquashedGaussian, vec![0.0, 0.0, 0.0, 9.0]).unwrap();
        assert_eq!(net2.forward_one(&[0.0]).unwrap()[1], LOG_STD_MAX);
    }

    #[test]
    fn rejects_wrong_input_dim() {
        let net = Mlp::zeros(&[3, 2], &[], Head::Linear).unwrap();
        assert!(matches!(
            net.forward(array![[1.0, 2.0]].view()),
            Err(Error::DimensionMismatch { expected: 3, got: 2 })
        ));
    }

    #[test]
    fn zero_upstream_gives_zero_gradient() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let net = Mlp::with_hidden(3, &[8, 8], 2, Activation::Relu, Head::Linear, &mut rng).unwrap();
        let x = array![[0.1, 0.2, 0.3], [-0.5, 0.4, 1.0]];
        let c = net.forward(x.view()).unwrap();
        let (g, gx) = net.backward(&c, Array2::zeros((2, 2)).view());
        assert!(g.iter().all(|&v| v == 0.0));
        assert!(gx.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn gradient_scales_with_upstream() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let net = Mlp::with_hidden(3, &[8], 2, Activation::Tanh, Head::Linear, &mut rng).unwrap();
        let x = array![[0.1, 0.2, 0.3]];
        let c = net.forward(x.view()).unwrap();
        let up = array![[1.0, -2.0]];
        let (g1, _) = net.backward(&c, up.view());
        let (g3, _) = net.backward(&c, (&up * 3.0).view());
        for (a, b) in g1.iter().zip(&g3) {
            assert_relative_eq!(3.0 * a, *b, epsilon = 1e-12);
        }
    }

    #[test]
    fn forward_is_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let net = Mlp::with_hidden(9, &[32, 32], 8, Activation::Relu, Head::SquashedGaussian, &mut rng).unwrap();
        let x: Vec<f64> = (0..9).map(|i| i as f64 * 0.1 - 0.4).collect();
        let a = net.forward_one(&x).unwrap();
        let b = net.clone().forward_one(&x).unwrap();
        assert_eq!(a.iter().map(|v| v.to_bits()).collect::<Vec<_>>(), b.iter().map(|v| v.to_bits()).collect::<Vec<_>>());
    }

    #[test]
    fn soft_update_interpolates() {
        let mut a = Mlp::from_parts(vec![1, 1], vec![], Head::Linear, vec![1.0, 0.0]).unwrap();
        let b = Mlp::from_parts(vec![1, 1], vec![], Head::Linear, vec![3.0, 2.0]).unwrap();
        a.soft_update(&b, 0.25);
        assert_eq!(a.params(), &[1.5, 0.5]);
    }
}
