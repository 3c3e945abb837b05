//! Stacked LSTM sequence classifier with a softmax head at every timestep.
//!
//! Gate order inside each layer's packed weights is input, forget, cell,
//! output. Layer `l` maps `[x_t, h_{t-1}]` to the four gate pre-activations
//! with one `(4H) x (in_l + H)` matrix.

use super::{softmax_rows, uniform_init, ParamGroup};
use ndarray::linalg::general_mat_mul;
use ndarray::{s, Array2, ArrayView1, ArrayView2, ArrayViewMut1, ArrayViewMut2, Axis};
use rand::Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LstmShape {
    pub input: usize,
    pub hidden: usize,
    pub layers: usize,
    pub outputs: usize,
}

/// Deliberate gradient corruption, for checking that the gradient checker
/// notices broken backpropagation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum GradFault {
    #[default]
    None,
    /// Drops the sigmoid derivative of the forget gate.
    ForgetGateDerivative,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LstmNet {
    shape: LstmShape,
    params: Vec<f64>,
}

struct LayerStep {
    /// `[x_t, h_{t-1}]`.
    joint: Array2<f64>,
    /// Activated gates `[i, f, g, o]`.
    gates: Array2<f64>,
    cell: Array2<f64>,
    cell_tanh: Array2<f64>,
    hidden: Array2<f64>,
}

/// Recurrent state carried between timesteps.
#[derive(Debug, Clone)]
pub struct LstmState {
    hidden: Vec<Array2<f64>>,
    cells: Vec<Array2<f64>>,
}

/// Forward pass record.
pub struct LstmTrace {
    steps: Vec<Vec<LayerStep>>,
    /// Per-timestep output distributions (batch x outputs).
    pub probs: Vec<Array2<f64>>,
}

impl LstmNet {
    pub fn new<R: Rng + ?Sized>(shape: LstmShape, rng: &mut R) -> Self {
        let mut net = Self {
            shape,
            params: vec![0.0; Self::param_count(shape)],
        };
        let h = shape.hidden;
        for layer in 0..shape.layers {
            let (w_off, rows, cols) = net.layer_weights(layer);
            uniform_init(
                &mut net.params[w_off..w_off + rows * cols],
                1.0 / (cols as f64).sqrt(),
                rng,
            );
            let b_off = w_off + rows * cols;
            // Forget gates start open.
            net.params[b_off + h..b_off + 2 * h].iter_mut().for_each(|b| *b = 1.0);
        }
        let (o_off, _) = net.output_weights();
        let len = shape.outputs * h;
        uniform_init(&mut net.params[o_off..o_off + len], 1.0 / (h as f64).sqrt(), rng);
        net
    }

    pub fn from_params(shape: LstmShape, params: Vec<f64>) -> Option<Self> {
        (params.len() == Self::param_count(shape)).then_some(Self { shape, params })
    }

    pub fn param_count(shape: LstmShape) -> usize {
        let h = shape.hidden;
        let mut total = 0;
        for layer in 0..shape.layers {
            let input = if layer == 0 { shape.input } else { h };
            total += 4 * h * (input + h) + 4 * h;
        }
        total + shape.outputs * h + shape.outputs
    }

    pub fn shape(&self) -> LstmShape {
        self.shape
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    fn layer_input(&self, layer: usize) -> usize {
        if layer == 0 {
            self.shape.input
        } else {
            self.shape.hidden
        }
    }

    /// Offset, rows and columns of a layer's packed gate weights; the
    /// `4H` biases follow.
    fn layer_weights(&self, layer: usize) -> (usize, usize, usize) {
        let h = self.shape.hidden;
        let mut off = 0;
        for l in 0..layer {
            off += 4 * h * (self.layer_input(l) + h) + 4 * h;
        }
        (off, 4 * h, self.layer_input(layer) + h)
    }

    fn output_weights(&self) -> (usize, usize) {
        let (off, rows, cols) = self.layer_weights(self.shape.layers - 1);
        (off + rows * cols + rows, self.shape.outputs * self.shape.hidden)
    }

    pub fn param_groups(&self) -> Vec<ParamGroup> {
        let mut groups = Vec::new();
        for layer in 0..self.shape.layers {
            let (off, rows, cols) = self.layer_weights(layer);
            groups.push(ParamGroup {
                name: format!("lstm{layer}.weight"),
                start: off,
                len: rows * cols,
            });
            groups.push(ParamGroup {
                name: format!("lstm{layer}.bias"),
                start: off + rows * cols,
                len: rows,
            });
        }
        let (off, len) = self.output_weights();
        groups.push(ParamGroup {
            name: "head.weight".into(),
            start: off,
            len,
        });
        groups.push(ParamGroup {
            name: "head.bias".into(),
            start: off + len,
            len: self.shape.outputs,
        });
        groups
    }

    /// Copy whose output `perm[a]` is this net's output `a`.
    pub fn permute_outputs(&self, perm: &[usize]) -> Self {
        let mut out = self.clone();
        let h = self.shape.hidden;
        let (off, len) = self.output_weights();
        for (a, &p) in perm.iter().enumerate() {
            out.params[off + p * h..off + (p + 1) * h].copy_from_slice(&self.params[off + a * h..off + (a + 1) * h]);
            out.params[off + len + p] = self.params[off + len + a];
        }
        out
    }

    /// Runs a batch of sequences; `inputs[t]` is `batch x input`.
    pub fn forward(&self, inputs: &[Array2<f64>]) -> LstmTrace {
        self.forward_with(&self.params, inputs)
    }

    pub fn forward_with(&self, params: &[f64], inputs: &[Array2<f64>]) -> LstmTrace {
        let batch = inputs.first().map(|x| x.nrows()).unwrap_or(0);
        let mut state = self.initial_state(batch);
        let mut steps = Vec::with_capacity(inputs.len());
        let mut probs = Vec::with_capacity(inputs.len());
        for x in inputs {
            let (layer_steps, p) = self.advance(params, &mut state, x.clone());
            steps.push(layer_steps);
            probs.push(p);
        }
        LstmTrace { steps, probs }
    }

    /// Zero hidden and cell state for `batch` sequences.
    pub fn initial_state(&self, batch: usize) -> LstmState {
        let zeros = vec![Array2::<f64>::zeros((batch, self.shape.hidden)); self.shape.layers];
        LstmState {
            hidden: zeros.clone(),
            cells: zeros,
        }
    }

    /// Feeds one timestep of a single sequence and returns the output distribution.
    pub fn step(&self, state: &mut LstmState, input: &[f64]) -> Vec<f64> {
        let x = Array2::from_shape_vec((1, input.len()), input.to_vec()).expect("row vector");
        let (_, probs) = self.advance(&self.params, state, x);
        probs.row(0).to_vec()
    }

    fn advance(&self, params: &[f64], state: &mut LstmState, x: Array2<f64>) -> (Vec<LayerStep>, Array2<f64>) {
        let h = self.shape.hidden;
        let mut below = x;
        let mut layer_steps = Vec::with_capacity(self.shape.layers);
        for layer in 0..self.shape.layers {
            let (off, rows, cols) = self.layer_weights(layer);
            let w = ArrayView2::from_shape((rows, cols), &params[off..off + rows * cols]).unwrap();
            let b = ArrayView1::from(&params[off + rows * cols..off + rows * cols + rows]);
            let joint = ndarray::concatenate(Axis(1), &[below.view(), state.hidden[layer].view()]).unwrap();
            let mut gates = joint.dot(&w.t());
            gates += &b;
            gates.slice_mut(s![.., 0..2 * h]).mapv_inplace(sigmoid);
            gates.slice_mut(s![.., 2 * h..3 * h]).mapv_inplace(f64::tanh);
            gates.slice_mut(s![.., 3 * h..4 * h]).mapv_inplace(sigmoid);
            let cell = &gates.slice(s![.., h..2 * h]) * &state.cells[layer]
                + &gates.slice(s![.., 0..h]) * &gates.slice(s![.., 2 * h..3 * h]);
            let cell_tanh = cell.mapv(f64::tanh);
            let out = &gates.slice(s![.., 3 * h..4 * h]) * &cell_tanh;
            state.hidden[layer] = out.clone();
            state.cells[layer] = cell.clone();
            below = out.clone();
            layer_steps.push(LayerStep {
                joint,
                gates,
                cell,
                cell_tanh,
                hidden: out,
            });
        }
        let (o_off, o_len) = self.output_weights();
        let w_out = ArrayView2::from_shape((self.shape.outputs, h), &params[o_off..o_off + o_len]).unwrap();
        let b_out = ArrayView1::from(&params[o_off + o_len..o_off + o_len + self.shape.outputs]);
        let mut logits = below.dot(&w_out.t());
        logits += &b_out;
        (layer_steps, softmax_rows(&logits))
    }

    /// Mean cross-entropy over all timesteps and sequences against target
    /// distributions (`targets[t]` is `batch x outputs`).
    pub fn loss_with(&self, params: &[f64], inputs: &[Array2<f64>], targets: &[Array2<f64>]) -> f64 {
        let trace = self.forward_with(params, inputs);
        sequence_cross_entropy(&trace.probs, targets)
    }

    /// Loss and its gradient by backpropagation through time.
    pub fn loss_and_grad(&self, inputs: &[Array2<f64>], targets: &[Array2<f64>], fault: GradFault) -> (f64, Vec<f64>) {
        let trace = self.forward(inputs);
        let loss = sequence_cross_entropy(&trace.probs, targets);
        let grads = self.backward(&trace, targets, fault);
        (loss, grads)
    }

    fn backward(&self, trace: &LstmTrace, targets: &[Array2<f64>], fault: GradFault) -> Vec<f64> {
        let h = self.shape.hidden;
        let steps = trace.steps.len();
        let batch = trace.probs.first().map(|p| p.nrows()).unwrap_or(0);
        let norm = (steps * batch).max(1) as f64;
        let mut grads = vec![0.0; self.params.len()];

        // Output head; collects the gradient flowing into the top layer.
        let (o_off, o_len) = self.output_weights();
        let w_out = ArrayView2::from_shape((self.shape.outputs, h), &self.params[o_off..o_off + o_len]).unwrap();
        let mut from_above: Vec<Array2<f64>> = Vec::with_capacity(steps);
        {
            let (gw, gb) = grads[o_off..o_off + o_len + self.shape.outputs].split_at_mut(o_len);
            let mut gw = ArrayViewMut2::from_shape((self.shape.outputs, h), gw).unwrap();
            let mut gb = ArrayViewMut1::from(gb);
            for t in 0..steps {
                let dlogits = (&trace.probs[t] - &targets[t]) / norm;
                let top = &trace.steps[t][self.shape.layers - 1].hidden;
                general_mat_mul(1.0, &dlogits.t(), top, 1.0, &mut gw);
                gb += &dlogits.sum_axis(Axis(0));
                from_above.push(dlogits.dot(&w_out));
            }
        }

        for layer in (0..self.shape.layers).rev() {
            let (off, rows, cols) = self.layer_weights(layer);
            let input = self.layer_input(layer);
            let w = ArrayView2::from_shape((rows, cols), &self.params[off..off + rows * cols]).unwrap();
            let (gw, gb) = grads[off..off + rows * cols + rows].split_at_mut(rows * cols);
            let mut gw = ArrayViewMut2::from_shape((rows, cols), gw).unwrap();
            let mut gb = ArrayViewMut1::from(gb);
            let mut dh_next = Array2::<f64>::zeros((batch, h));
            let mut dc_next = Array2::<f64>::zeros((batch, h));
            let mut to_below = vec![Array2::<f64>::zeros((batch, input)); steps];
            for t in (0..steps).rev() {
                let step = &trace.steps[t][layer];
                let g = &step.gates;
                let (gi, gf, gg, go) = (
                    g.slice(s![.., 0..h]),
                    g.slice(s![.., h..2 * h]),
                    g.slice(s![.., 2 * h..3 * h]),
                    g.slice(s![.., 3 * h..4 * h]),
                );
                let dh = &from_above[t] + &dh_next;
                let mut dc = &dh * &go * step.cell_tanh.mapv(|c| 1.0 - c * c);
                dc += &dc_next;
                let prev_cell = if t > 0 {
                    trace.steps[t - 1][layer].cell.clone()
                } else {
                    Array2::zeros((batch, h))
                };
                let mut dz = Array2::<f64>::zeros((batch, 4 * h));
                dz.slice_mut(s![.., 0..h])
                    .assign(&(&dc * &gg * gi.mapv(|x| x * (1.0 - x))));
                let forget_local = match fault {
                    GradFault::None => gf.mapv(|x| x * (1.0 - x)),
                    GradFault::ForgetGateDerivative => gf.to_owned(),
                };
                dz.slice_mut(s![.., h..2 * h])
                    .assign(&(&dc * &prev_cell * forget_local));
                dz.slice_mut(s![.., 2 * h..3 * h])
                    .assign(&(&dc * &gi * gg.mapv(|x| 1.0 - x * x)));
                dz.slice_mut(s![.., 3 * h..4 * h])
                    .assign(&(&dh * &step.cell_tanh * go.mapv(|x| x * (1.0 - x))));
                dc_next = &dc * &gf;
                general_mat_mul(1.0, &dz.t(), &step.joint, 1.0, &mut gw);
                gb += &dz.sum_axis(Axis(0));
                let djoint = dz.dot(&w);
                to_below[t] = djoint.slice(s![.., 0..input]).to_owned();
                dh_next = djoint.slice(s![.., input..]).to_owned();
            }
            from_above = to_below;
        }
        grads
    }
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Mean cross-entropy across timesteps and batch rows.
pub fn sequence_cross_entropy(probs: &[Array2<f64>], targets: &[Array2<f64>]) -> f64 {
    let steps = probs.len().max(1) as f64;
    probs
        .iter()
        .zip(targets)
        .map(|(p, t)| super::cross_entropy(p.view(), t.view()))
        .sum::<f64>()
        / steps
}
