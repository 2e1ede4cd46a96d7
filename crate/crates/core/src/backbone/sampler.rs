//! Relabeled transition batches.
//!
//! States are uniform over dataset transitions; each sampled state keeps its
//! recorded action. Goals follow the mixture in [`GoalSamplerConfig`]:
//! a future state of the same trajectory at a geometric offset (clamped to
//! the trajectory end), a uniformly random dataset state, or the current
//! state itself. Rewards are recomputed against the relabeled goal at the
//! next state.

use super::{GoalSamplerConfig, TransitionBatch};
use crate::data::{OfflineDataset, ACTION_DIM, OBS_DIM};
use crate::env::reward;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Cumulative-count index for uniform draws over transitions and states.
#[derive(Debug, Clone)]
pub struct TransitionSampler {
    /// cumulative transition counts per trajectory
    cum_transitions: Vec<usize>,
    /// cumulative state counts per trajectory
    cum_states: Vec<usize>,
}

impl TransitionSampler {
    pub fn new(ds: &OfflineDataset) -> Self {
        let mut cum_transitions = Vec::with_capacity(ds.n_trajectories());
        let mut cum_states = Vec::with_capacity(ds.n_trajectories());
        let (mut ct, mut cs) = (0, 0);
        for traj in &ds.trajectories {
            ct += traj.len();
            cs += traj.n_states();
            cum_transitions.push(ct);
            cum_states.push(cs);
        }
        Self {
            cum_transitions,
            cum_states,
        }
    }

    pub fn n_transitions(&self) -> usize {
        *self.cum_transitions.last().unwrap_or(&0)
    }

    pub fn n_states(&self) -> usize {
        *self.cum_states.last().unwrap_or(&0)
    }

    fn locate(cum: &[usize], flat: usize) -> (usize, usize) {
        let traj = cum.partition_point(|&c| c <= flat);
        let prev = if traj == 0 { 0 } else { cum[traj - 1] };
        (traj, flat - prev)
    }

    /// Uniform `(trajectory, step)` with `step < T`.
    pub fn transition(&self, rng: &mut ChaCha8Rng) -> (usize, usize) {
        Self::locate(
            &self.cum_transitions,
            rng.gen_range(0..self.n_transitions()),
        )
    }

    /// Uniform `(trajectory, state index)` over all stored states.
    pub fn state(&self, rng: &mut ChaCha8Rng) -> (usize, usize) {
        Self::locate(&self.cum_states, rng.gen_range(0..self.n_states()))
    }
}

/// Geometric offset with continuation probability `discount`:
/// `P(k) = (1 - discount) * discount^k`. A zero discount collapses onto
/// the immediate next state.
fn geometric_offset(discount: f64, rng: &mut ChaCha8Rng) -> usize {
    if discount <= 0.0 {
        return 0;
    }
    let u: f64 = rng.gen();
    let k = ((1.0 - u).ln() / discount.ln()).floor();
    if k.is_finite() && k >= 0.0 {
        k.min(1e9) as usize
    } else {
        0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum GoalKind {
    Future,
    Random,
    Current,
}

fn sample_into(
    ds: &OfflineDataset,
    sampler: &TransitionSampler,
    cfg: &GoalSamplerConfig,
    eps: f64,
    batch_size: usize,
    rng: &mut ChaCha8Rng,
    mut kinds: Option<&mut Vec<GoalKind>>,
) -> TransitionBatch {
    let n = batch_size;
    let mut batch = TransitionBatch {
        n,
        states: Vec::with_capacity(n * OBS_DIM),
        actions: Vec::with_capacity(n * ACTION_DIM),
        goals: Vec::with_capacity(n * OBS_DIM),
        rewards: Vec::with_capacity(n),
        next_states: Vec::with_capacity(n * OBS_DIM),
    };
    for _ in 0..n {
        let (i, t) = sampler.transition(rng);
        let traj = ds.traj(i);
        let u: f64 = rng.gen();
        let (goal, kind): (Vec<f64>, GoalKind) = if u < cfg.p_future {
            let k = geometric_offset(cfg.future_discount, rng);
            let idx = (t + 1 + k).min(traj.len());
            (traj.state(idx).to_vec(), GoalKind::Future)
        } else if u < cfg.p_future + cfg.p_random {
            let (gi, gt) = sampler.state(rng);
            (ds.traj(gi).state(gt).to_vec(), GoalKind::Random)
        } else {
            (traj.state(t).to_vec(), GoalKind::Current)
        };
        if let Some(out) = kinds.as_deref_mut() {
            out.push(kind);
        }
        let next = traj.state(t + 1);
        batch.states.extend_from_slice(traj.state(t));
        batch.actions.extend_from_slice(traj.action(t));
        batch.rewards.push(reward(next, &goal, eps));
        batch.next_states.extend_from_slice(next);
        batch.goals.extend(goal);
    }
    batch
}

pub fn sample_batch(
    ds: &OfflineDataset,
    sampler: &TransitionSampler,
    cfg: &GoalSamplerConfig,
    eps: f64,
    batch_size: usize,
    rng: &mut ChaCha8Rng,
) -> TransitionBatch {
    sample_into(ds, sampler, cfg, eps, batch_size, rng, None)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::generate_expert;
    use crate::env::{GridMaze, MazeLayout};
    use crate::seeding;
    use std::sync::Arc;

    fn dataset() -> OfflineDataset {
        let maze = GridMaze::new(Arc::new(MazeLayout::builtin("medium").unwrap()), 300);
        generate_expert(&maze, 30, 0.1, 8).unwrap()
    }

    #[test]
    fn current_goal_mixture_relabels_to_the_state_itself() {
        let ds = dataset();
        let sampler = TransitionSampler::new(&ds);
        let cfg = GoalSamplerConfig {
            p_future: 0.0,
            p_random: 0.0,
            p_current: 1.0,
            future_discount: 0.99,
        };
        let mut rng = seeding::rng(1);
        let batch = sample_batch(&ds, &sampler, &cfg, 0.5, 64, &mut rng);
        assert_eq!(batch.states, batch.goals);
        // rewards must match reward(s', s) recomputation
        for i in 0..batch.n {
            let want = reward(
                &batch.next_states[i * 2..(i + 1) * 2],
                &batch.states[i * 2..(i + 1) * 2],
                0.5,
            );
            assert_eq!(batch.rewards[i], want);
        }
    }

    #[test]
    fn vanishing_future_discount_picks_the_next_state() {
        let ds = dataset();
        let sampler = TransitionSampler::new(&ds);
        let cfg = GoalSamplerConfig {
            p_future: 1.0,
            p_random: 0.0,
            p_current: 0.0,
            future_discount: 0.0,
        };
        let mut rng = seeding::rng(2);
        let batch = sample_batch(&ds, &sampler, &cfg, 0.5, 128, &mut rng);
        assert_eq!(batch.goals, batch.next_states);
        assert!(batch.rewards.iter().all(|&r| r == 0.0));
    }

    #[test]
    fn mixture_frequencies_match_config() {
        let ds = dataset();
        let sampler = TransitionSampler::new(&ds);
        let cfg = GoalSamplerConfig::default();
        let mut rng = seeding::rng(3);
        let n = 100_000;
        let mut kinds = Vec::with_capacity(n);
        let _ = sample_into(&ds, &sampler, &cfg, 0.5, n, &mut rng, Some(&mut kinds));
        let count = |k: GoalKind| kinds.iter().filter(|&&x| x == k).count() as f64;
        for (k, p) in [
            (GoalKind::Future, cfg.p_future),
            (GoalKind::Random, cfg.p_random),
            (GoalKind::Current, cfg.p_current),
        ] {
            let sigma = (n as f64 * p * (1.0 - p)).sqrt();
            let observed = count(k);
            assert!(
                (observed - n as f64 * p).abs() <= 3.0 * sigma,
                "{k:?}: observed {observed}, expected {}",
                n as f64 * p
            );
        }
    }

    #[test]
    fn batches_are_deterministic_per_rng_stream() {
        let ds = dataset();
        let sampler = TransitionSampler::new(&ds);
        let cfg = GoalSamplerConfig::default();
        let a = sample_batch(&ds, &sampler, &cfg, 0.5, 32, &mut seeding::rng(9));
        let b = sample_batch(&ds, &sampler, &cfg, 0.5, 32, &mut seeding::rng(9));
        assert_eq!(a, b);
    }
}
