//! Single-layer LSTM over a (B, T, F) sequence, returning the final hidden state.
//!
//! Gates are laid out as `[input, forget, candidate, output]` blocks of
//! `hidden` rows each. The candidate and cell-output activation is
//! configurable; the gates always use the logistic sigmoid.

use serde::{Deserialize, Serialize};

use super::layers::{axpy, dot, Param};
use super::tensor::Tensor;
use super::NnetError;
use crate::seed::Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum LstmActivation {
    #[default]
    Relu,
    Tanh,
}

impl LstmActivation {
    fn apply(self, z: f64) -> f64 {
        match self {
            LstmActivation::Relu => z.max(0.0),
            LstmActivation::Tanh => z.tanh(),
        }
    }

    /// Derivative expressed through the pre-activation `z` and output `a`.
    fn derivative(self, z: f64, a: f64) -> f64 {
        match self {
            LstmActivation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            LstmActivation::Tanh => 1.0 - a * a,
        }
    }
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Lstm {
    pub inputs: usize,
    pub hidden: usize,
    pub activation: LstmActivation,
    /// `4H × F`
    pub w_input: Param,
    /// `4H × H`
    pub w_hidden: Param,
    /// `4H`, forget-gate block initialised to 1.
    pub bias: Param,
}

#[derive(Debug)]
pub struct LstmCache {
    input: Tensor,
    /// Per step, `B × 4H` post-activation gate values.
    gates: Vec<Vec<f64>>,
    /// Per step, `B × H` candidate pre-activations.
    candidate_pre: Vec<Vec<f64>>,
    /// Cell states `c_0..c_T`, each `B × H`.
    cells: Vec<Vec<f64>>,
    /// Hidden states `h_0..h_T`, each `B × H`.
    hiddens: Vec<Vec<f64>>,
}

impl Lstm {
    pub fn new(inputs: usize, hidden: usize, activation: LstmActivation, rng: &mut Rng) -> Self {
        let limit = 1.0 / (hidden as f64).sqrt();
        let mut bias = vec![0.0; 4 * hidden];
        bias[hidden..2 * hidden].iter_mut().for_each(|b| *b = 1.0);
        Lstm {
            inputs,
            hidden,
            activation,
            w_input: Param::uniform(4 * hidden * inputs, limit, rng),
            w_hidden: Param::uniform(4 * hidden * hidden, limit, rng),
            bias: Param::new(bias),
        }
    }

    pub fn forward(&self, x: Tensor) -> Result<(Tensor, LstmCache), NnetError> {
        let (batch, steps) = match x.shape() {
            [b, t, f] if *f == self.inputs => (*b, *t),
            other => {
                return Err(NnetError::Shape(format!(
                    "lstm expects (B, T, {}), got {other:?}",
                    self.inputs
                )))
            }
        };
        let (h, f) = (self.hidden, self.inputs);
        let mut cells = vec![vec![0.0; batch * h]];
        let mut hiddens = vec![vec![0.0; batch * h]];
        let mut gates_all = Vec::with_capacity(steps);
        let mut cand_all = Vec::with_capacity(steps);
        let xd = x.data();
        let mut z = vec![0.0; 4 * h];
        for t in 0..steps {
            let mut gates = vec![0.0; batch * 4 * h];
            let mut cand = vec![0.0; batch * h];
            let mut c_next = vec![0.0; batch * h];
            let mut h_next = vec![0.0; batch * h];
            for b in 0..batch {
                let xt = &xd[(b * steps + t) * f..][..f];
                let hp = &hiddens[t][b * h..(b + 1) * h];
                let cp = &cells[t][b * h..(b + 1) * h];
                for (row, zr) in z.iter_mut().enumerate() {
                    *zr = self.bias.value[row]
                        + dot(&self.w_input.value[row * f..(row + 1) * f], xt)
                        + dot(&self.w_hidden.value[row * h..(row + 1) * h], hp);
                }
                let g = &mut gates[b * 4 * h..(b + 1) * 4 * h];
                for j in 0..h {
                    let i_g = sigmoid(z[j]);
                    let f_g = sigmoid(z[h + j]);
                    let c_g = self.activation.apply(z[2 * h + j]);
                    let o_g = sigmoid(z[3 * h + j]);
                    g[j] = i_g;
                    g[h + j] = f_g;
                    g[2 * h + j] = c_g;
                    g[3 * h + j] = o_g;
                    cand[b * h + j] = z[2 * h + j];
                    let c = f_g * cp[j] + i_g * c_g;
                    c_next[b * h + j] = c;
                    h_next[b * h + j] = o_g * self.activation.apply(c);
                }
            }
            gates_all.push(gates);
            cand_all.push(cand);
            cells.push(c_next);
            hiddens.push(h_next);
        }
        let out = Tensor::new(vec![batch, h], hiddens[steps].clone())?;
        Ok((
            out,
            LstmCache {
                input: x,
                gates: gates_all,
                candidate_pre: cand_all,
                cells,
                hiddens,
            },
        ))
    }

    /// Backpropagation through time from the gradient of the final hidden state.
    pub fn backward(&mut self, cache: LstmCache, grad: &Tensor) -> Tensor {
        let (h, f) = (self.hidden, self.inputs);
        let LstmCache {
            input,
            gates,
            candidate_pre,
            cells,
            hiddens,
        } = cache;
        let (batch, steps) = (input.shape()[0], input.shape()[1]);
        let xd = input.data();
        let mut dx = vec![0.0; xd.len()];
        let mut dh = grad.data().to_vec();
        let mut dc = vec![0.0; batch * h];
        let mut dz = vec![0.0; 4 * h];
        for t in (0..steps).rev() {
            let mut dh_prev = vec![0.0; batch * h];
            for b in 0..batch {
                let g = &gates[t][b * 4 * h..(b + 1) * 4 * h];
                for j in 0..h {
                    let (i_g, f_g, c_g, o_g) = (g[j], g[h + j], g[2 * h + j], g[3 * h + j]);
                    let c = cells[t + 1][b * h + j];
                    let c_prev = cells[t][b * h + j];
                    let act_c = self.activation.apply(c);
                    let dhj = dh[b * h + j];
                    let d_o = dhj * act_c;
                    let dcj = dc[b * h + j] + dhj * o_g * self.activation.derivative(c, act_c);
                    let d_i = dcj * c_g;
                    let d_g = dcj * i_g;
                    let d_f = dcj * c_prev;
                    dc[b * h + j] = dcj * f_g;
                    dz[j] = d_i * i_g * (1.0 - i_g);
                    dz[h + j] = d_f * f_g * (1.0 - f_g);
                    dz[2 * h + j] =
                        d_g * self.activation.derivative(candidate_pre[t][b * h + j], c_g);
                    dz[3 * h + j] = d_o * o_g * (1.0 - o_g);
                }
                let xt = &xd[(b * steps + t) * f..][..f];
                let hp = &hiddens[t][b * h..(b + 1) * h];
                let dxt = &mut dx[(b * steps + t) * f..][..f];
                let dhp = &mut dh_prev[b * h..(b + 1) * h];
                for (row, &d) in dz.iter().enumerate() {
                    if d == 0.0 {
                        continue;
                    }
                    self.bias.grad[row] += d;
                    axpy(d, xt, &mut self.w_input.grad[row * f..(row + 1) * f]);
                    axpy(d, hp, &mut self.w_hidden.grad[row * h..(row + 1) * h]);
                    axpy(d, &self.w_input.value[row * f..(row + 1) * f], dxt);
                    axpy(d, &self.w_hidden.value[row * h..(row + 1) * h], dhp);
                }
            }
            dh = dh_prev;
        }
        Tensor::new(input.shape().to_vec(), dx).expect("input shape")
    }
}
