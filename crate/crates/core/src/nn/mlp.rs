//! Feed-forward network: tanh hidden layers, linear output.

use super::{uniform_init, ParamGroup};
use ndarray::linalg::general_mat_mul;
use ndarray::{Array2, ArrayView1, ArrayView2, ArrayViewMut1, ArrayViewMut2, Axis};
use rand::Rng;

#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    sizes: Vec<usize>,
    params: Vec<f64>,
}

/// Layer activations kept for the backward pass; `activations[0]` is the input.
#[derive(Debug, Clone)]
pub struct MlpTrace {
    pub activations: Vec<Array2<f64>>,
}

impl MlpTrace {
    pub fn output(&self) -> &Array2<f64> {
        self.activations.last().expect("trace holds the input at least")
    }
}

impl Mlp {
    /// `sizes = [input, hidden.., output]`.
    pub fn new<R: Rng + ?Sized>(sizes: &[usize], rng: &mut R) -> Self {
        assert!(sizes.len() >= 2, "need input and output sizes");
        let mut net = Self {
            sizes: sizes.to_vec(),
            params: vec![0.0; Self::param_count(sizes)],
        };
        for layer in 0..sizes.len() - 1 {
            let (w_off, fan_in, fan_out) = net.layer_offsets(layer);
            let scale = 1.0 / (fan_in as f64).sqrt();
            uniform_init(&mut net.params[w_off..w_off + fan_in * fan_out], scale, rng);
        }
        net
    }

    pub fn from_params(sizes: &[usize], params: Vec<f64>) -> Option<Self> {
        (sizes.len() >= 2 && params.len() == Self::param_count(sizes)).then(|| Self {
            sizes: sizes.to_vec(),
            params,
        })
    }

    pub fn param_count(sizes: &[usize]) -> usize {
        sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.sizes.last().unwrap()
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn num_params(&self) -> usize {
        self.params.len()
    }

    /// Weight offset, fan-in and fan-out of `layer`; its bias follows the weights.
    fn layer_offsets(&self, layer: usize) -> (usize, usize, usize) {
        let offset = self.sizes[..layer + 1].windows(2).map(|w| w[0] * w[1] + w[1]).sum();
        (offset, self.sizes[layer], self.sizes[layer + 1])
    }

    pub fn param_groups(&self) -> Vec<ParamGroup> {
        let mut groups = Vec::new();
        for layer in 0..self.sizes.len() - 1 {
            let (off, fan_in, fan_out) = self.layer_offsets(layer);
            groups.push(ParamGroup {
                name: format!("dense{layer}.weight"),
                start: off,
                len: fan_in * fan_out,
            });
            groups.push(ParamGroup {
                name: format!("dense{layer}.bias"),
                start: off + fan_in * fan_out,
                len: fan_out,
            });
        }
        groups
    }

    fn weights<'a>(&self, params: &'a [f64], layer: usize) -> (ArrayView2<'a, f64>, ArrayView1<'a, f64>) {
        let (off, fan_in, fan_out) = self.layer_offsets(layer);
        let w = ArrayView2::from_shape((fan_out, fan_in), &params[off..off + fan_in * fan_out]).unwrap();
        let b = ArrayView1::from(&params[off + fan_in * fan_out..off + fan_in * fan_out + fan_out]);
        (w, b)
    }

    /// Forward pass over a batch (rows are samples).
    pub fn forward(&self, input: ArrayView2<f64>) -> MlpTrace {
        self.forward_with(&self.params, input)
    }

    /// Forward pass with an alternative parameter vector of the same layout.
    pub fn forward_with(&self, params: &[f64], input: ArrayView2<f64>) -> MlpTrace {
        let layers = self.sizes.len() - 1;
        let mut activations = Vec::with_capacity(layers + 1);
        activations.push(input.to_owned());
        for layer in 0..layers {
            let (w, b) = self.weights(params, layer);
            let mut z = activations[layer].dot(&w.t());
            z += &b;
            if layer + 1 < layers {
                z.mapv_inplace(f64::tanh);
            }
            activations.push(z);
        }
        MlpTrace { activations }
    }

    /// Outputs for a single input vector.
    pub fn predict(&self, input: &[f64]) -> Vec<f64> {
        let x = ArrayView2::from_shape((1, input.len()), input).unwrap();
        self.forward(x).output().row(0).to_vec()
    }

    /// Gradient of a loss w.r.t. the parameters given its gradient w.r.t. the
    /// outputs of `trace`.
    pub fn backward(&self, trace: &MlpTrace, grad_output: ArrayView2<f64>) -> Vec<f64> {
        let layers = self.sizes.len() - 1;
        let mut grads = vec![0.0; self.params.len()];
        let mut delta: Array2<f64> = grad_output.to_owned();
        for layer in (0..layers).rev() {
            let (off, fan_in, fan_out) = self.layer_offsets(layer);
            let input = &trace.activations[layer];
            {
                let (gw, gb) = grads[off..off + fan_in * fan_out + fan_out].split_at_mut(fan_in * fan_out);
                let mut gw = ArrayViewMut2::from_shape((fan_out, fan_in), gw).unwrap();
                general_mat_mul(1.0, &delta.t(), input, 1.0, &mut gw);
                let mut gb = ArrayViewMut1::from(gb);
                gb += &delta.sum_axis(Axis(0));
            }
            if layer > 0 {
                let (w, _) = self.weights(&self.params, layer);
                let mut back = delta.dot(&w);
                back.zip_mut_with(input, |d, a| *d *= 1.0 - a * a);
                delta = back;
            }
        }
        grads
    }

    /// Gradient w.r.t. the input batch.
    pub fn input_gradient(&self, trace: &MlpTrace, grad_output: ArrayView2<f64>) -> Array2<f64> {
        let layers = self.sizes.len() - 1;
        let mut delta = grad_output.to_owned();
        for layer in (0..layers).rev() {
            let (w, _) = self.weights(&self.params, layer);
            let mut back = delta.dot(&w);
            if layer > 0 {
                back.zip_mut_with(&trace.activations[layer], |d, a| *d *= 1.0 - a * a);
            }
            delta = back;
        }
        delta
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{grad_check, sample_indices};
    use ndarray::{Array1, Array2};
    use rand::SeedableRng;

    fn as_row(values: &[f64]) -> Array2<f64> {
        Array1::from(values.to_vec()).insert_axis(Axis(0))
    }
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let net = Mlp::new(&[5, 7, 6, 3], &mut rng);
        let x = Array2::from_shape_fn((4, 5), |(i, j)| ((i * 5 + j) as f64 * 0.37).sin());
        let target = Array2::from_shape_fn((4, 3), |(i, j)| ((i + 2 * j) as f64).cos());
        let loss = |p: &[f64]| {
            let out = net.forward_with(p, x.view());
            0.5 * (out.output() - &target).mapv(|d| d * d).sum()
        };
        let trace = net.forward(x.view());
        let grads = net.backward(&trace, (trace.output() - &target).view());
        for group in net.param_groups() {
            let idx = sample_indices(&mut rng, group.start, group.len, 10);
            let err = grad_check(net.params(), &grads, loss, &idx, 1e-5);
            assert!(err < 1e-6, "{}: {err}", group.name);
        }
    }

    #[test]
    fn input_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let net = Mlp::new(&[3, 4, 2], &mut rng);
        let x = vec![0.2, -0.4, 0.9];
        let trace = net.forward(as_row(&x).view());
        let g = net.input_gradient(&trace, as_row(&[1.0, -2.0]).view());
        let f = |v: &[f64]| {
            let y = net.predict(v);
            y[0] - 2.0 * y[1]
        };
        let err = grad_check(&x, g.row(0).as_slice().unwrap(), f, &[0, 1, 2], 1e-5);
        assert!(err < 1e-6);
    }
}
