//! Analytic inference-compute model.
//!
//! Costs are exact integers under the standard simplifications: a forward
//! pass of an `n`-hidden-layer width-`w` MLP costs `2 n w^2` (input/output
//! dims negligible), a backward pass costs twice a forward, batch size does
//! not enter, and each fine-tune gradient step touches both the policy and
//! an equal-sized critic. Data selection is charged one forward pass per
//! cycle. Everything outside the networks is free.

/// Parameters of the cost model. `ttt_period` is the number of environment
/// steps between fine-tune cycles (the reciprocal of the training frequency
/// `f`); `None` models a frozen policy.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FlopModel {
    pub width: u64,
    pub hidden_layers: u64,
    pub episode_len: u64,
    pub grad_steps_per_cycle: u64,
    pub ttt_period: Option<u64>,
    pub backward_multiplier: u128,
    pub critic_same_size: bool,
}

impl Default for FlopModel {
    fn default() -> Self {
        Self {
            width: 512,
            hidden_layers: 2,
            episode_len: 1000,
            grad_steps_per_cycle: 100,
            ttt_period: Some(200),
            backward_multiplier: 2,
            critic_same_size: true,
        }
    }
}

impl FlopModel {
    /// FLOPs for one forward pass: `2 n w^2`.
    pub fn forward_cost(&self) -> u128 {
        2 * self.hidden_layers as u128 * (self.width as u128) * (self.width as u128)
    }

    /// FLOPs for a full frozen-policy episode: one forward per step.
    pub fn episode_cost_frozen(&self) -> u128 {
        self.episode_len as u128 * self.forward_cost()
    }

    /// FLOPs for one fine-tune cycle: one selection forward plus
    /// `grad_steps` combined forward+backward passes through policy and
    /// (when same-sized) critic — `6 C m` under the defaults.
    pub fn cycle_cost(&self) -> u128 {
        let c = self.forward_cost();
        let per_step = (1 + self.backward_multiplier)
            * c
            * if self.critic_same_size { 2 } else { 1 };
        1 + per_step * self.grad_steps_per_cycle as u128
    }

    /// FLOPs for a test-time-training episode. With period `K` the episode
    /// runs `ceil(episode_len / K)` fine-tune cycles on top of the frozen
    /// rollout cost.
    pub fn episode_cost_ttt(&self) -> u128 {
        match self.ttt_period {
            None => self.episode_cost_frozen(),
            Some(k) => {
                assert!(k >= 1, "ttt_period must be >= 1");
                let cycles = (self.episode_len as u128).div_ceil(k as u128);
                cycles * self.cycle_cost() + self.episode_cost_frozen()
            }
        }
    }

    /// Inverts [`Self::episode_cost_frozen`]: the width whose frozen episode
    /// matches `target_flops`, rounded to the nearest integer.
    pub fn matched_width(&self, target_flops: f64) -> u64 {
        assert!(target_flops >= 0.0, "target must be non-negative");
        let denom = 2.0 * self.hidden_layers as f64 * self.episode_len as f64;
        (target_flops / denom).sqrt().round() as u64
    }
}
