//! Minimal dense-MLP numerics.
//!
//! Everything here is 64-bit and allocation-conscious but deliberately
//! simple: the nets are tiny (width 64 by default), the loss set is closed,
//! and gradients are hand-written per loss rather than routed through a
//! general autodiff graph. That keeps every gradient checkable against
//! central finite differences and makes parameter snapshot/restore exact.
//!
//! ## Weight layout
//!
//! A [`ParamStore`] holds an MLP with dims `[d0, d1, ..., dL]` as one flat
//! `Vec<f64>`, layer-major: for each layer `l` the weight matrix `W_l`
//! (shape `d_{l+1} x d_l`, row-major) followed by the bias vector `b_l`
//! (length `d_{l+1}`). Total length is `sum_l (d_l + 1) * d_{l+1}`.
//! Hidden activations are `tanh`; the output layer is linear.

mod blob;
mod losses;
mod policy;

pub use blob::{restore_mlp, restore_policy, snapshot_mlp, snapshot_policy, BlobRole};
pub use losses::{
    awr_loss_grad, bc_loss_grad, ddpgbc_loss_grad, expectile_loss_grad, iql_q_loss_grad,
    iql_v_loss_grad, LossId,
};
pub use policy::{GaussianPolicy, LOG_STD_MAX, LOG_STD_MIN};

use crate::error::ensure_finite;
use crate::{seeding, Error, Result};
use rand::Rng;

/// Flat parameter storage for one MLP (see module docs for the layout).
#[derive(Debug, Clone, PartialEq)]
pub struct ParamStore {
    layer_dims: Vec<usize>,
    weights: Vec<f64>,
}

/// Number of weights an MLP with these dims carries (biases folded in).
pub fn weight_count(layer_dims: &[usize]) -> usize {
    layer_dims
        .windows(2)
        .map(|w| (w[0] + 1) * w[1])
        .sum::<usize>()
}

impl ParamStore {
    /// Builds a store with fan-in-scaled uniform weights and zero biases.
    ///
    /// Each weight of layer `l` is drawn uniformly from
    /// `(-1/sqrt(d_l), 1/sqrt(d_l))`; draws happen in flat layout order, so
    /// equal seeds give bitwise-equal stores.
    pub fn init(seed: u64, layer_dims: &[usize]) -> Result<Self> {
        if layer_dims.len() < 2 {
            return Err(Error::config(format!(
                "layer_dims needs at least input and output, got {layer_dims:?}"
            )));
        }
        if layer_dims.iter().any(|&d| d == 0) {
            return Err(Error::config(format!(
                "layer_dims must all be >= 1, got {layer_dims:?}"
            )));
        }
        let mut rng = seeding::rng(seed);
        let mut weights = vec![0.0; weight_count(layer_dims)];
        let mut off = 0;
        for w in layer_dims.windows(2) {
            let (fan_in, fan_out) = (w[0], w[1]);
            let limit = 1.0 / (fan_in as f64).sqrt();
            for v in &mut weights[off..off + fan_in * fan_out] {
                *v = rng.gen_range(-limit..limit);
            }
            // biases stay zero
            off += (fan_in + 1) * fan_out;
        }
        Ok(Self {
            layer_dims: layer_dims.to_vec(),
            weights,
        })
    }

    /// Wraps existing weights; checks the count and finiteness invariants.
    pub fn from_weights(layer_dims: Vec<usize>, weights: Vec<f64>) -> Result<Self> {
        if layer_dims.len() < 2 || layer_dims.iter().any(|&d| d == 0) {
            return Err(Error::config(format!("invalid layer_dims {layer_dims:?}")));
        }
        if weights.len() != weight_count(&layer_dims) {
            return Err(Error::shape(format!(
                "expected {} weights for dims {:?}, got {}",
                weight_count(&layer_dims),
                layer_dims,
                weights.len()
            )));
        }
        if let Some(&bad) = weights.iter().find(|w| !w.is_finite()) {
            return Err(Error::numeric("weight", bad));
        }
        Ok(Self {
            layer_dims,
            weights,
        })
    }

    pub fn layer_dims(&self) -> &[usize] {
        &self.layer_dims
    }

    pub fn input_dim(&self) -> usize {
        self.layer_dims[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.layer_dims.last().unwrap()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn weights_mut(&mut self) -> &mut [f64] {
        &mut self.weights
    }

    /// Single-sample forward pass. Output length equals the last layer dim.
    ///
    /// Shape contract: `input.len() == layer_dims[0]` (asserted).
    pub fn forward(&self, input: &[f64]) -> Vec<f64> {
        assert_eq!(
            input.len(),
            self.input_dim(),
            "input len {} does not match net input dim {}",
            input.len(),
            self.input_dim()
        );
        let n_layers = self.layer_dims.len() - 1;
        let mut cur = input.to_vec();
        let mut off = 0;
        for (l, w) in self.layer_dims.windows(2).enumerate() {
            let (fan_in, fan_out) = (w[0], w[1]);
            let wmat = &self.weights[off..off + fan_in * fan_out];
            let bias = &self.weights[off + fan_in * fan_out..off + (fan_in + 1) * fan_out];
            let mut next = vec![0.0; fan_out];
            for (j, out) in next.iter_mut().enumerate() {
                let row = &wmat[j * fan_in..(j + 1) * fan_in];
                let mut z = bias[j];
                for (wv, xv) in row.iter().zip(cur.iter()) {
                    z = wv.mul_add(*xv, z);
                }
                *out = if l + 1 < n_layers { z.tanh() } else { z };
            }
            cur = next;
            off += (fan_in + 1) * fan_out;
        }
        cur
    }

    /// Batched forward pass caching post-activations for [`Self::backward_batch`].
    ///
    /// `inputs` is `n` rows of `layer_dims[0]`, flattened row-major.
    pub fn forward_batch<'a>(
        &self,
        inputs: &[f64],
        n: usize,
        cache: &'a mut BatchCache,
    ) -> &'a [f64] {
        assert_eq!(inputs.len(), n * self.input_dim(), "batch input shape");
        cache.reset(&self.layer_dims, n);
        cache.acts[0].copy_from_slice(inputs);
        let n_layers = self.layer_dims.len() - 1;
        let mut off = 0;
        for (l, w) in self.layer_dims.windows(2).enumerate() {
            let (fan_in, fan_out) = (w[0], w[1]);
            let wmat = &self.weights[off..off + fan_in * fan_out];
            let bias = &self.weights[off + fan_in * fan_out..off + (fan_in + 1) * fan_out];
            let (lo, hi) = cache.acts.split_at_mut(l + 1);
            let x = &lo[l];
            let y = &mut hi[0];
            let hidden = l + 1 < n_layers;
            for i in 0..n {
                let xrow = &x[i * fan_in..(i + 1) * fan_in];
                let yrow = &mut y[i * fan_out..(i + 1) * fan_out];
                for (j, out) in yrow.iter_mut().enumerate() {
                    let row = &wmat[j * fan_in..(j + 1) * fan_in];
                    let mut z = bias[j];
                    for (wv, xv) in row.iter().zip(xrow.iter()) {
                        z = wv.mul_add(*xv, z);
                    }
                    *out = if hidden { z.tanh() } else { z };
                }
            }
            off += (fan_in + 1) * fan_out;
        }
        cache.acts.last().unwrap()
    }

    /// Reverse pass from an output gradient. Parameter gradients are written
    /// (overwritten) into `grad`, which must have `weights().len()` entries;
    /// if `dinput` is given it receives the gradient w.r.t. the batch inputs.
    ///
    /// The forward cache must come from a `forward_batch` call on the same
    /// parameters and inputs.
    pub fn backward_batch(
        &self,
        cache: &BatchCache,
        dout: &[f64],
        grad: &mut [f64],
        mut dinput: Option<&mut [f64]>,
    ) {
        let n = cache.n;
        assert_eq!(dout.len(), n * self.output_dim(), "dout shape");
        assert_eq!(grad.len(), self.weights.len(), "grad shape");
        grad.fill(0.0);
        let n_layers = self.layer_dims.len() - 1;

        let mut dy = dout.to_vec();
        let mut layer_offsets = Vec::with_capacity(n_layers);
        let mut off = 0;
        for w in self.layer_dims.windows(2) {
            layer_offsets.push(off);
            off += (w[0] + 1) * w[1];
        }

        for l in (0..n_layers).rev() {
            let fan_in = self.layer_dims[l];
            let fan_out = self.layer_dims[l + 1];
            let off = layer_offsets[l];
            let wmat = &self.weights[off..off + fan_in * fan_out];
            let x = &cache.acts[l];
            let y = &cache.acts[l + 1];
            let hidden = l + 1 < n_layers;

            // dz = dy * act'(z); tanh' expressed from the cached output.
            let mut dz = dy;
            if hidden {
                for (d, yv) in dz.iter_mut().zip(y.iter()) {
                    *d *= 1.0 - yv * yv;
                }
            }

            let (gw, gb) = grad[off..off + (fan_in + 1) * fan_out].split_at_mut(fan_in * fan_out);
            let want_dx = l > 0 || dinput.is_some();
            let mut dx = if want_dx { vec![0.0; n * fan_in] } else { Vec::new() };
            for i in 0..n {
                let xrow = &x[i * fan_in..(i + 1) * fan_in];
                let dzrow = &dz[i * fan_out..(i + 1) * fan_out];
                for (j, dzv) in dzrow.iter().enumerate() {
                    gb[j] += dzv;
                    let grow = &mut gw[j * fan_in..(j + 1) * fan_in];
                    for (g, xv) in grow.iter_mut().zip(xrow.iter()) {
                        *g = dzv.mul_add(*xv, *g);
                    }
                    if want_dx {
                        let wrow = &wmat[j * fan_in..(j + 1) * fan_in];
                        let dxrow = &mut dx[i * fan_in..(i + 1) * fan_in];
                        for (dxv, wv) in dxrow.iter_mut().zip(wrow.iter()) {
                            *dxv = dzv.mul_add(*wv, *dxv);
                        }
                    }
                }
            }
            if l == 0 {
                if let Some(di) = dinput.as_deref_mut() {
                    di.copy_from_slice(&dx);
                }
            }
            dy = dx;
        }
    }
}

/// Reusable per-layer activation buffers for batched passes.
#[derive(Debug, Default)]
pub struct BatchCache {
    acts: Vec<Vec<f64>>,
    n: usize,
}

impl BatchCache {
    pub fn new() -> Self {
        Self::default()
    }

    fn reset(&mut self, layer_dims: &[usize], n: usize) {
        self.n = n;
        self.acts.resize(layer_dims.len(), Vec::new());
        for (buf, &d) in self.acts.iter_mut().zip(layer_dims.iter()) {
            buf.clear();
            buf.resize(n * d, 0.0);
        }
    }

    /// Output rows of the last forward pass.
    pub fn output(&self) -> &[f64] {
        self.acts.last().map(|v| v.as_slice()).unwrap_or(&[])
    }
}

/// Adam optimizer state for one flat parameter vector.
#[derive(Debug, Clone)]
pub struct AdamState {
    first_moment: Vec<f64>,
    second_moment: Vec<f64>,
    step_count: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamState {
    pub fn new(n_params: usize) -> Self {
        Self {
            first_moment: vec![0.0; n_params],
            second_moment: vec![0.0; n_params],
            step_count: 0,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step_count
    }
}

/// One bias-corrected Adam update, in place. Errors on non-finite gradients
/// before touching any state.
pub fn adam_step(params: &mut [f64], grads: &[f64], opt: &mut AdamState, lr: f64) -> Result<()> {
    assert_eq!(params.len(), grads.len(), "param/grad shape");
    assert_eq!(params.len(), opt.first_moment.len(), "optimizer shape");
    assert!(lr >= 0.0, "learning rate must be non-negative");
    for &g in grads {
        ensure_finite("gradient", g)?;
    }
    opt.step_count += 1;
    let t = opt.step_count as i32;
    let bc1 = 1.0 - opt.beta1.powi(t);
    let bc2 = 1.0 - opt.beta2.powi(t);
    for i in 0..params.len() {
        let g = grads[i];
        let m = &mut opt.first_moment[i];
        *m = opt.beta1 * *m + (1.0 - opt.beta1) * g;
        let v = &mut opt.second_moment[i];
        *v = opt.beta2 * *v + (1.0 - opt.beta2) * g * g;
        let m_hat = *m / bc1;
        let v_hat = *v / bc2;
        params[i] -= lr * m_hat / (v_hat.sqrt() + opt.eps);
    }
    Ok(())
}
