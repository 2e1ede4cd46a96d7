//! Gaussian policy head: an MLP mean plus a state-independent, trainable
//! per-dimension `log_std`.

use super::ParamStore;
use crate::Result;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub const LOG_STD_MIN: f64 = -5.0;
pub const LOG_STD_MAX: f64 = 2.0;

const LN_2PI: f64 = 1.8378770664093453; // ln(2*pi)

/// Diagonal-Gaussian policy over actions. The mean comes from `net`
/// (inputs are state-goal concatenations); `log_std` is state-independent
/// and kept inside `[LOG_STD_MIN, LOG_STD_MAX]` by projecting after each
/// optimizer update, so the log-density itself stays smooth in the
/// parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianPolicy {
    pub net: ParamStore,
    log_std: Vec<f64>,
}

impl GaussianPolicy {
    pub fn new(seed: u64, layer_dims: &[usize]) -> Result<Self> {
        let net = ParamStore::init(seed, layer_dims)?;
        let action_dim = net.output_dim();
        Ok(Self {
            net,
            log_std: vec![0.0; action_dim],
        })
    }

    pub fn from_parts(net: ParamStore, log_std: Vec<f64>) -> Self {
        assert_eq!(net.output_dim(), log_std.len(), "log_std shape");
        let mut p = Self { net, log_std };
        p.clamp_log_std();
        p
    }

    pub fn action_dim(&self) -> usize {
        self.log_std.len()
    }

    pub fn log_std(&self) -> &[f64] {
        &self.log_std
    }

    /// Deterministic action: the network mean (callers clip to the action box).
    pub fn mean(&self, input: &[f64]) -> Vec<f64> {
        self.net.forward(input)
    }

    /// Samples an action and clips it to the `[-bound, bound]` box.
    pub fn sample(&self, input: &[f64], bound: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
        let mean = self.mean(input);
        mean.iter()
            .zip(self.log_std.iter())
            .map(|(m, ls)| {
                let z: f64 = standard_normal(rng);
                (m + z * ls.exp()).clamp(-bound, bound)
            })
            .collect()
    }

    /// Per-sample negative log-density of `action` under the current head.
    pub fn nll(&self, mean: &[f64], action: &[f64]) -> f64 {
        mean.iter()
            .zip(action.iter())
            .zip(self.log_std.iter())
            .map(|((m, a), ls)| {
                let r = (a - m) * (-ls).exp();
                ls + 0.5 * LN_2PI + 0.5 * r * r
            })
            .sum()
    }

    /// Total trainable parameter count: net weights plus `log_std`.
    pub fn param_len(&self) -> usize {
        self.net.weights().len() + self.log_std.len()
    }

    /// Flattens `[net weights..., log_std...]`.
    pub fn flat_params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_len());
        out.extend_from_slice(self.net.weights());
        out.extend_from_slice(&self.log_std);
        out
    }

    pub fn set_flat_params(&mut self, flat: &[f64]) {
        let nw = self.net.weights().len();
        assert_eq!(flat.len(), nw + self.log_std.len(), "flat param shape");
        self.net.weights_mut().copy_from_slice(&flat[..nw]);
        self.log_std.copy_from_slice(&flat[nw..]);
    }

    /// Projects `log_std` back into its box; call after optimizer updates.
    pub fn clamp_log_std(&mut self) {
        for ls in &mut self.log_std {
            *ls = ls.clamp(LOG_STD_MIN, LOG_STD_MAX);
        }
    }
}

fn standard_normal(rng: &mut ChaCha8Rng) -> f64 {
    // Box-Muller; two uniforms per draw keeps the stream layout obvious.
    let u1: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
    let u2: f64 = rng.gen::<f64>();
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}
