//! The project's closed loss set, each with a hand-written gradient.
//!
//! Five losses cover pre-training and test-time fine-tuning:
//!
//! - `bc`: mean Gaussian negative log-likelihood of dataset actions.
//! - `iql_q`: mean squared TD error of `Q` against fixed bootstrap targets.
//! - `iql_v`: expectile regression of `V` against fixed `Q` values.
//! - `awr`: advantage-weighted BC (weights `min(exp(beta * A), w_max)`,
//!   treated as constants w.r.t. the policy).
//! - `ddpg_bc`: `-(beta * Q(s, mean(s,g), g) + log pi(a|s,g))`, gradients
//!   flowing into the policy only.
//!
//! All losses are batch means, so duplicating batch rows leaves loss and
//! gradient unchanged. Policy gradients are flattened as
//! `[net weights..., log_std...]` to match [`GaussianPolicy::flat_params`].

use super::{BatchCache, GaussianPolicy, ParamStore};
use crate::error::ensure_finite;
use crate::{Error, Result};

const LN_2PI: f64 = 1.8378770664093453;

/// Tag for dispatching the configured loss at fine-tune time.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LossId {
    Bc,
    IqlQ,
    IqlV,
    Awr,
    DdpgBc,
}

impl LossId {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "bc" => Ok(LossId::Bc),
            "iql_q" => Ok(LossId::IqlQ),
            "iql_v" => Ok(LossId::IqlV),
            "awr" => Ok(LossId::Awr),
            "ddpg_bc" => Ok(LossId::DdpgBc),
            other => Err(Error::config(format!("unknown loss_id `{other}`"))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            LossId::Bc => "bc",
            LossId::IqlQ => "iql_q",
            LossId::IqlV => "iql_v",
            LossId::Awr => "awr",
            LossId::DdpgBc => "ddpg_bc",
        }
    }
}

/// Shared core of `bc` and `awr`: per-sample weighted Gaussian NLL.
/// `weights = None` means all-ones (plain BC).
fn weighted_nll_loss_grad(
    policy: &GaussianPolicy,
    inputs: &[f64],
    actions: &[f64],
    weights: Option<&[f64]>,
    what: &str,
) -> Result<(f64, Vec<f64>)> {
    let da = policy.action_dim();
    let din = policy.net.input_dim();
    assert_eq!(inputs.len() % din, 0, "input shape");
    let n = inputs.len() / din;
    assert!(n > 0, "empty batch");
    assert_eq!(actions.len(), n * da, "action shape");
    if let Some(w) = weights {
        assert_eq!(w.len(), n, "weight shape");
    }

    let mut cache = BatchCache::new();
    let means = policy.net.forward_batch(inputs, n, &mut cache).to_vec();

    let inv_n = 1.0 / n as f64;
    let mut loss = 0.0;
    let mut dmean = vec![0.0; n * da];
    let mut dlog_std = vec![0.0; da];
    for i in 0..n {
        let w = weights.map_or(1.0, |ws| ws[i]);
        for j in 0..da {
            let ls = policy.log_std()[j];
            let inv_std = (-ls).exp();
            let m = means[i * da + j];
            let a = actions[i * da + j];
            let r = (a - m) * inv_std;
            loss += w * (ls + 0.5 * LN_2PI + 0.5 * r * r);
            dmean[i * da + j] = w * (m - a) * inv_std * inv_std * inv_n;
            dlog_std[j] += w * (1.0 - r * r) * inv_n;
        }
    }
    loss *= inv_n;
    ensure_finite(what, loss)?;

    let mut grad = vec![0.0; policy.param_len()];
    let nw = policy.net.weights().len();
    policy
        .net
        .backward_batch(&cache, &dmean, &mut grad[..nw], None);
    grad[nw..].copy_from_slice(&dlog_std);
    Ok((loss, grad))
}

/// Goal-conditioned behavior cloning: mean `-log pi(a | s, g)`.
///
/// `inputs` are state-goal rows matching the policy net's input dim.
pub fn bc_loss_grad(
    policy: &GaussianPolicy,
    inputs: &[f64],
    actions: &[f64],
) -> Result<(f64, Vec<f64>)> {
    weighted_nll_loss_grad(policy, inputs, actions, None, "bc loss")
}

/// Advantage-weighted regression. Weights `min(exp(beta * adv), w_max)` are
/// computed from the (frozen) critic advantages and never differentiated.
pub fn awr_loss_grad(
    policy: &GaussianPolicy,
    inputs: &[f64],
    actions: &[f64],
    advantages: &[f64],
    beta: f64,
    w_max: f64,
) -> Result<(f64, Vec<f64>)> {
    let weights: Vec<f64> = advantages
        .iter()
        .map(|a| (beta * a).exp().min(w_max))
        .collect();
    for &w in &weights {
        ensure_finite("awr weight", w)?;
    }
    weighted_nll_loss_grad(policy, inputs, actions, Some(&weights), "awr loss")
}

/// Mean squared TD error of `Q` against fixed `targets`
/// (`r + gamma * V(s', g)`, computed by the caller with frozen nets).
pub fn iql_q_loss_grad(
    q_net: &ParamStore,
    inputs: &[f64],
    targets: &[f64],
) -> Result<(f64, Vec<f64>)> {
    let din = q_net.input_dim();
    assert_eq!(q_net.output_dim(), 1, "Q must be scalar-valued");
    let n = targets.len();
    assert!(n > 0, "empty batch");
    assert_eq!(inputs.len(), n * din, "input shape");

    let mut cache = BatchCache::new();
    let preds = q_net.forward_batch(inputs, n, &mut cache).to_vec();

    let inv_n = 1.0 / n as f64;
    let mut loss = 0.0;
    let mut dout = vec![0.0; n];
    for i in 0..n {
        let e = preds[i] - targets[i];
        loss += e * e * inv_n;
        dout[i] = 2.0 * e * inv_n;
    }
    ensure_finite("iql_q loss", loss)?;

    let mut grad = vec![0.0; q_net.weights().len()];
    q_net.backward_batch(&cache, &dout, &mut grad, None);
    Ok((loss, grad))
}

/// Per-sample expectile loss `|alpha - 1{x<0}| * x^2` with `x = q - v`, and
/// its derivative w.r.t. `v`. Exposed so scalar expectile fits can reuse the
/// exact same residual math.
pub fn expectile_loss_grad(v: f64, q: f64, alpha: f64) -> (f64, f64) {
    let x = q - v;
    let w = if x < 0.0 { 1.0 - alpha } else { alpha };
    (w * x * x, -2.0 * w * x)
}

/// Expectile regression of `V` against fixed `q_vals`.
pub fn iql_v_loss_grad(
    v_net: &ParamStore,
    inputs: &[f64],
    q_vals: &[f64],
    expectile: f64,
) -> Result<(f64, Vec<f64>)> {
    let din = v_net.input_dim();
    assert_eq!(v_net.output_dim(), 1, "V must be scalar-valued");
    let n = q_vals.len();
    assert!(n > 0, "empty batch");
    assert_eq!(inputs.len(), n * din, "input shape");

    let mut cache = BatchCache::new();
    let preds = v_net.forward_batch(inputs, n, &mut cache).to_vec();

    let inv_n = 1.0 / n as f64;
    let mut loss = 0.0;
    let mut dout = vec![0.0; n];
    for i in 0..n {
        let (l, dv) = expectile_loss_grad(preds[i], q_vals[i], expectile);
        loss += l * inv_n;
        dout[i] = dv * inv_n;
    }
    ensure_finite("iql_v loss", loss)?;

    let mut grad = vec![0.0; v_net.weights().len()];
    v_net.backward_batch(&cache, &dout, &mut grad, None);
    Ok((loss, grad))
}

/// BC-regularized DDPG-style extraction:
/// `-(beta * Q(s, a_hat, g) + log pi(a | s, g))` with `a_hat` the
/// deterministic policy mean. The critic is frozen; its action-input
/// gradient is chained into the policy net.
///
/// `states`/`goals` are passed separately so the Q input rows
/// `s ++ a_hat ++ g` can be assembled here.
pub fn ddpgbc_loss_grad(
    policy: &GaussianPolicy,
    q_net: &ParamStore,
    states: &[f64],
    goals: &[f64],
    actions: &[f64],
    beta: f64,
) -> Result<(f64, Vec<f64>)> {
    let da = policy.action_dim();
    let din = policy.net.input_dim();
    let n = actions.len() / da;
    assert!(n > 0, "empty batch");
    assert_eq!(actions.len(), n * da, "action shape");
    assert_eq!(states.len() % n, 0, "state shape");
    assert_eq!(goals.len() % n, 0, "goal shape");
    let ds = states.len() / n;
    let dg = goals.len() / n;
    assert_eq!(din, ds + dg, "policy input dim");
    assert_eq!(q_net.input_dim(), ds + da + dg, "Q input dim");
    assert_eq!(q_net.output_dim(), 1, "Q must be scalar-valued");

    // Policy forward on s ++ g.
    let mut pol_inputs = vec![0.0; n * din];
    for i in 0..n {
        pol_inputs[i * din..i * din + ds].copy_from_slice(&states[i * ds..(i + 1) * ds]);
        pol_inputs[i * din + ds..(i + 1) * din].copy_from_slice(&goals[i * dg..(i + 1) * dg]);
    }
    let mut pol_cache = BatchCache::new();
    let means = policy
        .net
        .forward_batch(&pol_inputs, n, &mut pol_cache)
        .to_vec();

    let inv_n = 1.0 / n as f64;
    let mut loss = 0.0;
    let mut dmean = vec![0.0; n * da];
    let mut dlog_std = vec![0.0; da];

    // BC term, accumulated exactly like the plain BC loss so the beta = 0
    // reduction is bitwise.
    for i in 0..n {
        for j in 0..da {
            let ls = policy.log_std()[j];
            let inv_std = (-ls).exp();
            let m = means[i * da + j];
            let a = actions[i * da + j];
            let r = (a - m) * inv_std;
            loss += ls + 0.5 * LN_2PI + 0.5 * r * r;
            dmean[i * da + j] = (m - a) * inv_std * inv_std * inv_n;
            dlog_std[j] += (1.0 - r * r) * inv_n;
        }
    }
    loss *= inv_n;

    // Q term, skipped entirely at beta = 0 so the reduction to BC is exact.
    if beta != 0.0 {
        let dqin = ds + da + dg;
        let mut q_inputs = vec![0.0; n * dqin];
        for i in 0..n {
            let row = &mut q_inputs[i * dqin..(i + 1) * dqin];
            row[..ds].copy_from_slice(&states[i * ds..(i + 1) * ds]);
            row[ds..ds + da].copy_from_slice(&means[i * da..(i + 1) * da]);
            row[ds + da..].copy_from_slice(&goals[i * dg..(i + 1) * dg]);
        }
        let mut q_cache = BatchCache::new();
        let q_vals = q_net.forward_batch(&q_inputs, n, &mut q_cache).to_vec();
        for q in &q_vals {
            loss -= beta * q * inv_n;
        }
        let dq = vec![-beta * inv_n; n];
        let mut q_grad_unused = vec![0.0; q_net.weights().len()];
        let mut dq_input = vec![0.0; n * dqin];
        q_net.backward_batch(&q_cache, &dq, &mut q_grad_unused, Some(&mut dq_input));
        for i in 0..n {
            for j in 0..da {
                dmean[i * da + j] += dq_input[i * dqin + ds + j];
            }
        }
    }

    ensure_finite("ddpg_bc loss", loss)?;

    let mut grad = vec![0.0; policy.param_len()];
    let nw = policy.net.weights().len();
    policy
        .net
        .backward_batch(&pol_cache, &dmean, &mut grad[..nw], None);
    grad[nw..].copy_from_slice(&dlog_std);
    Ok((loss, grad))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::weight_count;

    fn toy_policy(seed: u64) -> GaussianPolicy {
        GaussianPolicy::new(seed, &[3, 4, 2]).unwrap()
    }

    fn toy_batch(n: usize) -> (Vec<f64>, Vec<f64>) {
        let inputs: Vec<f64> = (0..n * 3).map(|i| ((i * 7 + 1) as f64 * 0.13).sin()).collect();
        let actions: Vec<f64> = (0..n * 2).map(|i| ((i * 3 + 2) as f64 * 0.29).cos()).collect();
        (inputs, actions)
    }

    #[test]
    fn loss_id_parses_known_tags() {
        for tag in ["bc", "iql_q", "iql_v", "awr", "ddpg_bc"] {
            assert_eq!(LossId::parse(tag).unwrap().name(), tag);
        }
        assert!(LossId::parse("dqn").is_err());
    }

    #[test]
    fn bc_gradient_vanishes_at_the_mode() {
        // zero net => mean 0 everywhere; actions 0 => residual 0
        let net = ParamStore::from_weights(vec![3, 4, 2], vec![0.0; weight_count(&[3, 4, 2])])
            .unwrap();
        let policy = GaussianPolicy::from_parts(net, vec![0.3, -0.2]);
        let (inputs, _) = toy_batch(5);
        let actions = vec![0.0; 10];
        let (_, grad) = bc_loss_grad(&policy, &inputs, &actions).unwrap();
        let nw = policy.net.weights().len();
        assert!(grad[..nw].iter().all(|&g| g == 0.0), "mean-head grads must be 0");
        // log_std still pulls toward smaller values: d/dls = 1 - r^2 = 1
        assert!(grad[nw..].iter().all(|&g| (g - 1.0).abs() < 1e-12));
    }

    #[test]
    fn bc_loss_at_mode_is_gaussian_normalizer() {
        let net = ParamStore::from_weights(vec![3, 4, 2], vec![0.0; weight_count(&[3, 4, 2])])
            .unwrap();
        let policy = GaussianPolicy::from_parts(net, vec![0.0, 0.0]);
        let (inputs, _) = toy_batch(4);
        let actions = vec![0.0; 8];
        let (loss, _) = bc_loss_grad(&policy, &inputs, &actions).unwrap();
        assert!((loss - LN_2PI).abs() < 1e-12); // dim/2 * ln(2pi) with dim = 2
    }

    #[test]
    fn mean_invariance_under_batch_duplication() {
        let policy = toy_policy(11);
        let (inputs, actions) = toy_batch(6);
        let (l1, g1) = bc_loss_grad(&policy, &inputs, &actions).unwrap();
        let mut in2 = inputs.clone();
        in2.extend_from_slice(&inputs);
        let mut ac2 = actions.clone();
        ac2.extend_from_slice(&actions);
        let (l2, g2) = bc_loss_grad(&policy, &in2, &ac2).unwrap();
        assert!((l1 - l2).abs() < 1e-12);
        for (a, b) in g1.iter().zip(g2.iter()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn awr_at_beta_zero_is_exactly_bc() {
        let policy = toy_policy(5);
        let (inputs, actions) = toy_batch(7);
        let adv: Vec<f64> = (0..7).map(|i| i as f64 - 3.0).collect();
        let (lb, gb) = bc_loss_grad(&policy, &inputs, &actions).unwrap();
        let (la, ga) = awr_loss_grad(&policy, &inputs, &actions, &adv, 0.0, 100.0).unwrap();
        assert_eq!(lb, la);
        assert_eq!(gb, ga);
    }

    #[test]
    fn ddpgbc_at_beta_zero_is_exactly_bc() {
        let policy = toy_policy(5);
        // ds = 1, dg = 2 so the policy input dim 3 matches toy_policy
        let q = ParamStore::init(6, &[1 + 2 + 2, 4, 1]).unwrap();
        let n = 6;
        let states: Vec<f64> = (0..n).map(|i| 0.1 * i as f64).collect();
        let goals: Vec<f64> = (0..n * 2).map(|i| 0.05 * i as f64 - 0.2).collect();
        let actions: Vec<f64> = (0..n * 2).map(|i| ((i + 1) as f64 * 0.31).sin()).collect();
        let mut inputs = vec![0.0; n * 3];
        for i in 0..n {
            inputs[i * 3] = states[i];
            inputs[i * 3 + 1] = goals[i * 2];
            inputs[i * 3 + 2] = goals[i * 2 + 1];
        }
        let (lb, gb) = bc_loss_grad(&policy, &inputs, &actions).unwrap();
        let (ld, gd) = ddpgbc_loss_grad(&policy, &q, &states, &goals, &actions, 0.0).unwrap();
        assert_eq!(lb, ld);
        assert_eq!(gb, gd);
    }

    #[test]
    fn awr_constant_advantage_scales_bc_gradient() {
        let policy = toy_policy(9);
        let (inputs, actions) = toy_batch(5);
        let adv = vec![0.7; 5];
        let beta = 1.3;
        let w = (beta * 0.7f64).exp();
        let (lb, gb) = bc_loss_grad(&policy, &inputs, &actions).unwrap();
        let (la, ga) = awr_loss_grad(&policy, &inputs, &actions, &adv, beta, 100.0).unwrap();
        assert!((la - w * lb).abs() < 1e-12);
        for (a, b) in ga.iter().zip(gb.iter()) {
            assert!((a - w * b).abs() < 1e-10);
        }
    }

    #[test]
    fn awr_weights_monotone_and_clipped() {
        let policy = toy_policy(2);
        let (inputs, actions) = toy_batch(3);
        // large advantage saturates at w_max instead of overflowing
        let adv = vec![1e6, 0.0, -1e6];
        let (loss, _) = awr_loss_grad(&policy, &inputs, &actions, &adv, 3.0, 100.0).unwrap();
        assert!(loss.is_finite());
    }

    #[test]
    fn expectile_half_is_half_mse() {
        let (l, d) = expectile_loss_grad(1.0, 3.0, 0.5);
        assert_eq!(l, 0.5 * 4.0);
        assert_eq!(d, -2.0 * 0.5 * 2.0);
    }

    #[test]
    fn expectile_downweights_negative_residuals() {
        // x = q - v = -1, alpha = 0.9 -> |0.9 - 1| * 1 = 0.1
        let (l, _) = expectile_loss_grad(0.0, -1.0, 0.9);
        assert!((l - 0.1).abs() < 1e-15);
    }

    #[test]
    fn iql_v_alpha_half_halves_mse() {
        let v = ParamStore::init(3, &[2, 3, 1]).unwrap();
        let inputs: Vec<f64> = (0..8).map(|i| 0.2 * i as f64).collect();
        let q_vals = vec![0.5, -1.0, 2.0, 0.0];
        let (l, _) = iql_v_loss_grad(&v, &inputs, &q_vals, 0.5).unwrap();
        // recompute MSE directly
        let mse: f64 = (0..4)
            .map(|i| {
                let p = v.forward(&inputs[i * 2..(i + 1) * 2])[0];
                (q_vals[i] - p) * (q_vals[i] - p)
            })
            .sum::<f64>()
            / 4.0;
        assert!((l - 0.5 * mse).abs() < 1e-12);
    }

    #[test]
    fn non_finite_loss_is_reported() {
        let net = ParamStore::from_weights(vec![3, 4, 2], vec![1e308; weight_count(&[3, 4, 2])]);
        let net = net.unwrap();
        let policy = GaussianPolicy::from_parts(net, vec![-5.0, -5.0]);
        let (inputs, actions) = toy_batch(2);
        let err = bc_loss_grad(&policy, &inputs, &actions).unwrap_err();
        assert!(matches!(err, Error::Numeric { .. }));
    }
}
