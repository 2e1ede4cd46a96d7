//! The pre-training loop.
//!
//! BC runs make one policy gradient step per iteration. IQL runs alternate a
//! Q step (bootstrapping through the target V), a V step (expectile
//! regression against the target Q), a soft target update, and one policy
//! extraction step with the critic held fixed. The run is a pure function of
//! `(dataset, config, seed)`: equal seeds give bitwise-equal checkpoints.

use super::{
    sample_batch, Algo, BackboneConfig, CriticPair, GoalSamplerConfig, TransitionSampler,
};
use crate::data::OfflineDataset;
use crate::nn::{
    adam_step, awr_loss_grad, bc_loss_grad, ddpgbc_loss_grad, iql_q_loss_grad, iql_v_loss_grad,
    AdamState, BatchCache, GaussianPolicy,
};
use crate::{seeding, Result};
use std::time::Instant;

/// Frozen parameters emitted at one checkpoint step.
#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub step: usize,
    pub policy: GaussianPolicy,
    pub critic: Option<CriticPair>,
}

/// One training-log record (`wall_ms` is diagnostic, not deterministic).
#[derive(Debug, Clone)]
pub struct LogRow {
    pub step: usize,
    pub loss_name: &'static str,
    pub value: f64,
    pub wall_ms: u128,
}

#[derive(Debug, Clone)]
pub struct PretrainOutput {
    pub checkpoints: Vec<Checkpoint>,
    pub log: Vec<LogRow>,
}

pub fn pretrain(
    ds: &OfflineDataset,
    env_eps: f64,
    cfg: &BackboneConfig,
    goal_sampler: &GoalSamplerConfig,
    seed: u64,
) -> Result<PretrainOutput> {
    cfg.validate()?;
    goal_sampler.validate()?;

    let mut policy = GaussianPolicy::new(seeding::split(seed, "policy", 0), &cfg.policy_dims())?;
    let mut policy_opt = AdamState::new(policy.param_len());
    let mut critic = if cfg.algo.trains_critic() {
        Some(CriticPair::init(seed, cfg)?)
    } else {
        None
    };
    let mut q_opt = critic
        .as_ref()
        .map(|c| AdamState::new(c.q.weights().len()));
    let mut v_opt = critic
        .as_ref()
        .map(|c| AdamState::new(c.v.weights().len()));

    let sampler = TransitionSampler::new(ds);
    let mut rng = seeding::rng(seeding::split(seed, "pretrain", 0));
    let mut cache = BatchCache::new();

    let mut checkpoints = Vec::new();
    let mut log = Vec::new();
    let started = Instant::now();

    for step in 1..=cfg.pretrain_steps {
        let batch = sample_batch(ds, &sampler, goal_sampler, env_eps, cfg.batch_size, &mut rng);
        let mut step_losses: Vec<(&'static str, f64)> = Vec::with_capacity(3);

        if let Some(critic) = critic.as_mut() {
            // Q step: targets r + gamma * V'(s', g), V' frozen.
            let bootstrap_net = if cfg.use_target_networks {
                &critic.v_target
            } else {
                &critic.v
            };
            let next_inputs = batch.next_v_inputs();
            let v_next = bootstrap_net
                .forward_batch(&next_inputs, batch.n, &mut cache)
                .to_vec();
            let targets: Vec<f64> = batch
                .rewards
                .iter()
                .zip(v_next.iter())
                .map(|(r, v)| r + cfg.gamma * v)
                .collect();
            let q_inputs = batch.q_inputs();
            let (q_loss, q_grad) = iql_q_loss_grad(&critic.q, &q_inputs, &targets)?;
            adam_step(
                critic.q.weights_mut(),
                &q_grad,
                q_opt.as_mut().unwrap(),
                cfg.lr,
            )?;

            // V step: expectile regression against the frozen Q.
            let q_net = if cfg.use_target_networks {
                &critic.q_target
            } else {
                &critic.q
            };
            let q_vals = q_net.forward_batch(&q_inputs, batch.n, &mut cache).to_vec();
            let v_inputs = batch.policy_inputs();
            let (v_loss, v_grad) =
                iql_v_loss_grad(&critic.v, &v_inputs, &q_vals, cfg.expectile)?;
            adam_step(
                critic.v.weights_mut(),
                &v_grad,
                v_opt.as_mut().unwrap(),
                cfg.lr,
            )?;

            if cfg.use_target_networks {
                critic.soft_update(cfg.tau);
            }

            step_losses.push(("iql_q", q_loss));
            step_losses.push(("iql_v", v_loss));
        }

        // Policy step.
        let (name, loss, grad) = match cfg.algo {
            Algo::Gcbc => {
                let inputs = batch.policy_inputs();
                let (loss, grad) = bc_loss_grad(&policy, &inputs, &batch.actions)?;
                ("bc", loss, grad)
            }
            Algo::GciqlAwr => {
                let critic = critic.as_ref().unwrap();
                let inputs = batch.policy_inputs();
                let q_inputs = batch.q_inputs();
                let q_vals = critic.q.forward_batch(&q_inputs, batch.n, &mut cache).to_vec();
                let v_vals = critic.v.forward_batch(&inputs, batch.n, &mut cache).to_vec();
                let adv: Vec<f64> = q_vals
                    .iter()
                    .zip(v_vals.iter())
                    .map(|(q, v)| q - v)
                    .collect();
                let (loss, grad) = awr_loss_grad(
                    &policy,
                    &inputs,
                    &batch.actions,
                    &adv,
                    cfg.awr_beta,
                    cfg.awr_weight_max,
                )?;
                ("awr", loss, grad)
            }
            Algo::GciqlDdpgBc => {
                let critic = critic.as_ref().unwrap();
                let (loss, grad) = ddpgbc_loss_grad(
                    &policy,
                    &critic.q,
                    &batch.states,
                    &batch.goals,
                    &batch.actions,
                    cfg.ddpg_beta,
                )?;
                ("ddpg_bc", loss, grad)
            }
        };
        let mut flat = policy.flat_params();
        adam_step(&mut flat, &grad, &mut policy_opt, cfg.lr)?;
        policy.set_flat_params(&flat);
        policy.clamp_log_std();
        step_losses.push((name, loss));

        if step % cfg.log_every == 0 || step == cfg.pretrain_steps {
            let wall_ms = started.elapsed().as_millis();
            for (loss_name, value) in &step_losses {
                log.push(LogRow {
                    step,
                    loss_name,
                    value: *value,
                    wall_ms,
                });
            }
        }
        if cfg.checkpoint_steps.contains(&step) {
            checkpoints.push(Checkpoint {
                step,
                policy: policy.clone(),
                critic: critic.clone(),
            });
        }
    }

    Ok(PretrainOutput { checkpoints, log })
}
