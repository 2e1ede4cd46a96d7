//! Offline pre-training backbones: goal-conditioned behavior cloning and
//! implicit Q-learning (expectile value learning) with AWR or DDPG+BC policy
//! extraction, plus the hindsight goal-relabeling batch sampler.

mod pretrain;
mod sampler;

pub use pretrain::{pretrain, Checkpoint, LogRow, PretrainOutput};
pub use sampler::{sample_batch, TransitionSampler};

use crate::data::{ACTION_DIM, OBS_DIM};
use crate::nn::ParamStore;
use crate::{seeding, Error, Result};
use std::fmt;

/// Which pre-training algorithm owns the run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Algo {
    Gcbc,
    GciqlAwr,
    GciqlDdpgBc,
}

impl Algo {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "gcbc" => Ok(Algo::Gcbc),
            "gciql_awr" => Ok(Algo::GciqlAwr),
            "gciql_ddpgbc" => Ok(Algo::GciqlDdpgBc),
            other => Err(Error::config(format!("unknown algo `{other}`"))),
        }
    }

    pub fn trains_critic(&self) -> bool {
        !matches!(self, Algo::Gcbc)
    }
}

impl fmt::Display for Algo {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Algo::Gcbc => write!(f, "gcbc"),
            Algo::GciqlAwr => write!(f, "gciql_awr"),
            Algo::GciqlDdpgBc => write!(f, "gciql_ddpgbc"),
        }
    }
}

/// Goal relabeling mixture: future states of the same trajectory (geometric
/// offset), uniformly random dataset states, or the current state.
#[derive(Debug, Clone, PartialEq)]
pub struct GoalSamplerConfig {
    pub p_future: f64,
    pub p_random: f64,
    pub p_current: f64,
    pub future_discount: f64,
}

impl Default for GoalSamplerConfig {
    fn default() -> Self {
        Self {
            p_future: 0.7,
            p_random: 0.25,
            p_current: 0.05,
            future_discount: 0.99,
        }
    }
}

impl GoalSamplerConfig {
    pub fn validate(&self) -> Result<()> {
        let ps = [self.p_future, self.p_random, self.p_current];
        if ps.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(Error::config("goal mixture probabilities must be in [0, 1]"));
        }
        let sum: f64 = ps.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::config(format!(
                "goal mixture probabilities sum to {sum}, expected 1"
            )));
        }
        if !(0.0..1.0).contains(&self.future_discount) {
            return Err(Error::config("future_discount must lie in [0, 1)"));
        }
        Ok(())
    }
}

/// Hyperparameters of one pre-training run. Defaults are the desk-scale
/// working point: width 64, batch 256, 40k steps with checkpoints at
/// {30k, 35k, 40k}.
#[derive(Debug, Clone, PartialEq)]
pub struct BackboneConfig {
    pub algo: Algo,
    pub gamma: f64,
    pub expectile: f64,
    pub awr_beta: f64,
    pub ddpg_beta: f64,
    pub awr_weight_max: f64,
    pub batch_size: usize,
    pub pretrain_steps: usize,
    pub checkpoint_steps: Vec<usize>,
    pub hidden_width: usize,
    pub hidden_layers: usize,
    pub lr: f64,
    pub tau: f64,
    pub use_target_networks: bool,
    pub log_every: usize,
}

impl BackboneConfig {
    pub fn new(algo: Algo) -> Self {
        Self {
            algo,
            gamma: 0.99,
            expectile: 0.9,
            awr_beta: 3.0,
            ddpg_beta: 1.0,
            awr_weight_max: 100.0,
            batch_size: 256,
            pretrain_steps: 40_000,
            checkpoint_steps: vec![30_000, 35_000, 40_000],
            hidden_width: 64,
            hidden_layers: 2,
            lr: 3e-4,
            tau: 5e-3,
            use_target_networks: true,
            log_every: 1000,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0 < self.gamma && self.gamma < 1.0) {
            return Err(Error::config("gamma must lie in (0, 1)"));
        }
        if !(0.5 < self.expectile && self.expectile < 1.0) {
            return Err(Error::config("expectile must lie in (0.5, 1)"));
        }
        if self.awr_beta < 0.0 || self.ddpg_beta < 0.0 {
            return Err(Error::config("extraction temperatures must be >= 0"));
        }
        if self.batch_size == 0 || self.hidden_width == 0 || self.hidden_layers == 0 {
            return Err(Error::config("batch size and net dims must be >= 1"));
        }
        if self.lr <= 0.0 {
            return Err(Error::config("learning rate must be positive"));
        }
        if self.checkpoint_steps.is_empty() {
            return Err(Error::config("at least one checkpoint step required"));
        }
        if self
            .checkpoint_steps
            .iter()
            .any(|&s| s == 0 || s > self.pretrain_steps)
        {
            return Err(Error::config(
                "checkpoint steps must lie in [1, pretrain_steps]",
            ));
        }
        Ok(())
    }

    /// Policy net dims: `(s, g) -> action mean`.
    pub fn policy_dims(&self) -> Vec<usize> {
        let mut dims = vec![OBS_DIM * 2];
        dims.extend(std::iter::repeat(self.hidden_width).take(self.hidden_layers));
        dims.push(ACTION_DIM);
        dims
    }

    fn critic_dims(&self, input: usize) -> Vec<usize> {
        let mut dims = vec![input];
        dims.extend(std::iter::repeat(self.hidden_width).take(self.hidden_layers));
        dims.push(1);
        dims
    }

    /// Q net dims: `(s, a, g) -> value`.
    pub fn q_dims(&self) -> Vec<usize> {
        self.critic_dims(OBS_DIM + ACTION_DIM + OBS_DIM)
    }

    /// V net dims: `(s, g) -> value`.
    pub fn v_dims(&self) -> Vec<usize> {
        self.critic_dims(OBS_DIM * 2)
    }
}

/// Q and V networks with target copies tracked by soft updates.
#[derive(Debug, Clone, PartialEq)]
pub struct CriticPair {
    pub q: ParamStore,
    pub v: ParamStore,
    pub q_target: ParamStore,
    pub v_target: ParamStore,
}

impl CriticPair {
    pub fn init(seed: u64, cfg: &BackboneConfig) -> Result<Self> {
        let q = ParamStore::init(seeding::split(seed, "critic_q", 0), &cfg.q_dims())?;
        let v = ParamStore::init(seeding::split(seed, "critic_v", 0), &cfg.v_dims())?;
        Ok(Self {
            q_target: q.clone(),
            v_target: v.clone(),
            q,
            v,
        })
    }

    pub fn from_nets(q: ParamStore, v: ParamStore) -> Self {
        Self {
            q_target: q.clone(),
            v_target: v.clone(),
            q,
            v,
        }
    }

    /// `target <- (1 - tau) * target + tau * online` for both nets.
    pub fn soft_update(&mut self, tau: f64) {
        for (t, o) in self
            .q_target
            .weights_mut()
            .iter_mut()
            .zip(self.q.weights())
        {
            *t += tau * (o - *t);
        }
        for (t, o) in self
            .v_target
            .weights_mut()
            .iter_mut()
            .zip(self.v.weights())
        {
            *t += tau * (o - *t);
        }
    }

    pub fn v_value(&self, s: &[f64], g: &[f64]) -> f64 {
        let mut input = Vec::with_capacity(s.len() + g.len());
        input.extend_from_slice(s);
        input.extend_from_slice(g);
        self.v.forward(&input)[0]
    }

    pub fn q_value(&self, s: &[f64], a: &[f64], g: &[f64]) -> f64 {
        let mut input = Vec::with_capacity(s.len() + a.len() + g.len());
        input.extend_from_slice(s);
        input.extend_from_slice(a);
        input.extend_from_slice(g);
        self.q.forward(&input)[0]
    }
}

/// One relabeled batch of transitions `(s, a, g, r, s')`, flattened row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionBatch {
    pub n: usize,
    pub states: Vec<f64>,
    pub actions: Vec<f64>,
    pub goals: Vec<f64>,
    pub rewards: Vec<f64>,
    pub next_states: Vec<f64>,
}

impl TransitionBatch {
    fn concat_rows(&self, parts: &[&[f64]], dims: &[usize]) -> Vec<f64> {
        let row: usize = dims.iter().sum();
        let mut out = vec![0.0; self.n * row];
        for i in 0..self.n {
            let mut off = 0;
            for (part, &d) in parts.iter().zip(dims.iter()) {
                out[i * row + off..i * row + off + d].copy_from_slice(&part[i * d..(i + 1) * d]);
                off += d;
            }
        }
        out
    }

    /// Policy / V rows: `s ++ g`.
    pub fn policy_inputs(&self) -> Vec<f64> {
        self.concat_rows(&[&self.states, &self.goals], &[OBS_DIM, OBS_DIM])
    }

    /// Q rows: `s ++ a ++ g`.
    pub fn q_inputs(&self) -> Vec<f64> {
        self.concat_rows(
            &[&self.states, &self.actions, &self.goals],
            &[OBS_DIM, ACTION_DIM, OBS_DIM],
        )
    }

    /// Bootstrap rows: `s' ++ g`.
    pub fn next_v_inputs(&self) -> Vec<f64> {
        self.concat_rows(&[&self.next_states, &self.goals], &[OBS_DIM, OBS_DIM])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sampler_config_validates_mixture() {
        assert!(GoalSamplerConfig::default().validate().is_ok());
        let bad = GoalSamplerConfig {
            p_future: 0.9,
            p_random: 0.3,
            p_current: 0.0,
            future_discount: 0.9,
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn backbone_config_defaults_validate() {
        for algo in [Algo::Gcbc, Algo::GciqlAwr, Algo::GciqlDdpgBc] {
            assert!(BackboneConfig::new(algo).validate().is_ok());
        }
        let mut bad = BackboneConfig::new(Algo::Gcbc);
        bad.checkpoint_steps = vec![50_000];
        assert!(bad.validate().is_err());
    }

    #[test]
    fn soft_update_moves_targets_toward_online() {
        let cfg = BackboneConfig::new(Algo::GciqlAwr);
        let mut critic = CriticPair::init(1, &cfg).unwrap();
        let before = critic.q_target.weights()[0];
        critic.q.weights_mut()[0] = before + 1.0;
        critic.soft_update(0.5);
        let after = critic.q_target.weights()[0];
        assert!((after - (before + 0.5)).abs() < 1e-12);
    }

    #[test]
    fn net_dims_cover_state_action_goal() {
        let cfg = BackboneConfig::new(Algo::GciqlDdpgBc);
        assert_eq!(cfg.policy_dims(), vec![4, 64, 64, 2]);
        assert_eq!(cfg.q_dims(), vec![6, 64, 64, 1]);
        assert_eq!(cfg.v_dims(), vec![4, 64, 64, 1]);
    }
}
