//! Minimal dense-network machinery: linear layers with tanh hidden
//! activations, manual backprop, orthogonal initialization, and an Adam
//! optimizer over a flat parameter vector.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

/// Dense layer, weights stored row-major (out x in).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Linear {
    pub in_dim: usize,
    pub out_dim: usize,
    pub w: Vec<f64>,
    pub b: Vec<f64>,
    #[serde(skip)]
    pub gw: Vec<f64>,
    #[serde(skip)]
    pub gb: Vec<f64>,
}

impl Linear {
    pub fn orthogonal<R: Rng>(in_dim: usize, out_dim: usize, gain: f64, rng: &mut R) -> Self {
        let w = orthogonal_matrix(out_dim, in_dim, gain, rng);
        Linear {
            in_dim,
            out_dim,
            w,
            b: vec![0.0; out_dim],
            gw: vec![0.0; out_dim * in_dim],
            gb: vec![0.0; out_dim],
        }
    }

    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        let mut y = self.b.clone();
        for (o, y_o) in y.iter_mut().enumerate() {
            let row = &self.w[o * self.in_dim..(o + 1) * self.in_dim];
            *y_o += row.iter().zip(x).map(|(w, x)| w * x).sum::<f64>();
        }
        y
    }

    /// Accumulates weight/bias gradients and returns dL/dx.
    pub fn backward(&mut self, x: &[f64], grad_out: &[f64]) -> Vec<f64> {
        let mut grad_in = vec![0.0; self.in_dim];
        for (o, &g) in grad_out.iter().enumerate() {
            self.gb[o] += g;
            let row = o * self.in_dim;
            for (i, (xi, gi)) in x.iter().zip(grad_in.iter_mut()).enumerate() {
                self.gw[row + i] += g * xi;
                *gi += g * self.w[row + i];
            }
        }
        grad_in
    }
}

/// Rows (or columns, whichever is shorter) are orthonormal, scaled by `gain`.
fn orthogonal_matrix<R: Rng>(rows: usize, cols: usize, gain: f64, rng: &mut R) -> Vec<f64> {
    let (n, m, transpose) = if rows <= cols {
        (rows, cols, false)
    } else {
        (cols, rows, true)
    };
    // modified Gram-Schmidt on n gaussian vectors of length m
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(n);
    while basis.len() < n {
        let mut v: Vec<f64> = (0..m).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        for u in &basis {
            let dot: f64 = v.iter().zip(u).map(|(a, b)| a * b).sum();
            for (vi, ui) in v.iter_mut().zip(u) {
                *vi -= dot * ui;
            }
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm < 1e-8 {
            continue; // degenerate draw, resample
        }
        for vi in &mut v {
            *vi /= norm;
        }
        basis.push(v);
    }
    let mut w = vec![0.0; rows * cols];
    for r in 0..rows {
        for c in 0..cols {
            let v = if transpose { basis[c][r] } else { basis[r][c] };
            w[r * cols + c] = gain * v;
        }
    }
    w
}

/// Multi-layer perceptron: tanh after every layer except the last.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Mlp {
    pub layers: Vec<Linear>,
}

/// Per-layer inputs saved during forward, needed for backprop.
pub struct MlpCache {
    inputs: Vec<Vec<f64>>,
    output: Vec<f64>,
}

impl MlpCache {
    pub fn output(&self) -> &[f64] {
        &self.output
    }
}

impl Mlp {
    /// `dims` = [in, hidden.., out]; hidden layers get gain sqrt(2),
    /// the output layer gets `out_gain`.
    pub fn new<R: Rng>(dims: &[usize], out_gain: f64, rng: &mut R) -> Self {
        let mut layers = Vec::with_capacity(dims.len() - 1);
        for i in 0..dims.len() - 1 {
            let gain = if i == dims.len() - 2 {
                out_gain
            } else {
                std::f64::consts::SQRT_2
            };
            layers.push(Linear::orthogonal(dims[i], dims[i + 1], gain, rng));
        }
        Mlp { layers }
    }

    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        let mut h = x.to_vec();
        for (i, layer) in self.layers.iter().enumerate() {
            h = layer.forward(&h);
            if i + 1 < self.layers.len() {
                for v in &mut h {
                    *v = v.tanh();
                }
            }
        }
        h
    }

    pub fn forward_cached(&self, x: &[f64]) -> MlpCache {
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut h = x.to_vec();
        for (i, layer) in self.layers.iter().enumerate() {
            inputs.push(h.clone());
            h = layer.forward(&h);
            if i + 1 < self.layers.len() {
                for v in &mut h {
                    *v = v.tanh();
                }
            }
        }
        MlpCache { inputs, output: h }
    }

    pub fn backward(&mut self, cache: &MlpCache, grad_out: &[f64]) {
        let n = self.layers.len();
        let mut grad = grad_out.to_vec();
        for i in (0..n).rev() {
            grad = self.layers[i].backward(&cache.inputs[i], &grad);
            if i > 0 {
                // d tanh = 1 - tanh^2; cache.inputs[i] holds the post-tanh values
                for (g, t) in grad.iter_mut().zip(&cache.inputs[i]) {
                    *g *= 1.0 - t * t;
                }
            }
        }
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.w.len() + l.b.len()).sum()
    }

    pub fn append_params(&self, out: &mut Vec<f64>) {
        for l in &self.layers {
            out.extend_from_slice(&l.w);
            out.extend_from_slice(&l.b);
        }
    }

    pub fn append_grads(&self, out: &mut Vec<f64>) {
        for l in &self.layers {
            out.extend_from_slice(&l.gw);
            out.extend_from_slice(&l.gb);
        }
    }

    /// Reads parameters from `flat` starting at `offset`; returns the new offset.
    pub fn load_params(&mut self, flat: &[f64], mut offset: usize) -> usize {
        for l in &mut self.layers {
            let nw = l.w.len();
            l.w.copy_from_slice(&flat[offset..offset + nw]);
            offset += nw;
            let nb = l.b.len();
            l.b.copy_from_slice(&flat[offset..offset + nb]);
            offset += nb;
        }
        offset
    }

    pub fn zero_grads(&mut self) {
        for l in &mut self.layers {
            // serde(skip) leaves these empty after deserialization
            if l.gw.len() != l.w.len() {
                l.gw = vec![0.0; l.w.len()];
                l.gb = vec![0.0; l.b.len()];
            }
            l.gw.iter_mut().for_each(|g| *g = 0.0);
            l.gb.iter_mut().for_each(|g| *g = 0.0);
        }
    }
}

/// Adam over a flat parameter vector.
pub struct Adam {
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
}

impl Adam {
    pub fn new(n_params: usize, lr: f64) -> Self {
        Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            m: vec![0.0; n_params],
            v: vec![0.0; n_params],
            t: 0,
        }
    }

    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) {
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        for i in 0..params.len() {
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * grads[i];
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * grads[i] * grads[i];
            let m_hat = self.m[i] / bc1;
            let v_hat = self.v[i] / bc2;
            params[i] -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
        }
    }
}

/// Scales `grads` in place so their global L2 norm is at most `max_norm`.
pub fn clip_grad_norm(grads: &mut [f64], max_norm: f64) -> f64 {
    let norm = grads.iter().map(|g| g * g).sum::<f64>().sqrt();
    if norm > max_norm && norm > 0.0 {
        let scale = max_norm / norm;
        for g in grads.iter_mut() {
            *g *= scale;
        }
    }
    norm
}
