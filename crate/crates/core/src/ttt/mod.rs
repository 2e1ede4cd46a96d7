//! The receding-horizon test-time training loop.
//!
//! Per evaluation episode the pre-trained policy parameters are stored once;
//! every cycle then (1) selects relevant/optimal windows for the current
//! state and the episode goal, (2) fine-tunes a fresh copy of the stored
//! parameters for `N` Adam steps with the goal pinned to the evaluation
//! goal, (3) rolls the fine-tuned policy out for `K` environment steps with
//! deterministic mean actions, and (4) resets to the stored parameters.
//! `N = 0` degenerates to the frozen-policy evaluation, bitwise.

mod evaluate;

pub use evaluate::{
    evaluate, episode_seed, stderr_of, AggregateRow, EpisodeRow, EvalCheckpoint, EvalMode,
    EvalProtocol, EvalReport, AGGREGATE_CSV_HEADER, EPISODE_CSV_HEADER,
};

use crate::backbone::CriticPair;
use crate::data::{OfflineDataset, WindowIndex, ACTION_DIM, OBS_DIM};
use crate::env::{reward, GoalEnv, GoalSpec, Obs};
use crate::flops::FlopModel;
use crate::nn::{
    adam_step, awr_loss_grad, bc_loss_grad, ddpgbc_loss_grad, AdamState, BatchCache,
    GaussianPolicy, LossId,
};
use crate::select::{select, SelectionBatch, SelectionConfig, Window};
use crate::{seeding, Error, Result};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Test-time training hyperparameters. Desk-scale defaults: re-select every
/// `K = 50` steps, `N = 100` gradient steps per cycle at `lr = 3e-4`.
#[derive(Debug, Clone, PartialEq)]
pub struct TttConfig {
    /// K: environment steps per cycle.
    pub rollout_horizon: usize,
    /// N: fine-tune gradient steps per cycle.
    pub grad_steps: usize,
    pub lr: f64,
    pub minibatch: usize,
    pub selection: SelectionConfig,
    pub finetune_loss: LossId,
    pub reset_each_cycle: bool,
    pub awr_beta: f64,
    pub ddpg_beta: f64,
    pub awr_weight_max: f64,
    /// Keep the retained window ids per cycle (for selection debug dumps).
    pub record_selected: bool,
}

impl TttConfig {
    pub fn new(selection: SelectionConfig, finetune_loss: LossId) -> Self {
        Self {
            rollout_horizon: 50,
            grad_steps: 100,
            lr: 3e-4,
            minibatch: 256,
            selection,
            finetune_loss,
            reset_each_cycle: true,
            awr_beta: 3.0,
            ddpg_beta: 1.0,
            awr_weight_max: 100.0,
            record_selected: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.rollout_horizon < 1 {
            return Err(Error::config("rollout horizon K must be >= 1"));
        }
        if self.lr <= 0.0 && self.grad_steps > 0 {
            // lr = 0 is allowed as an explicit no-op fine-tune
            if self.lr < 0.0 {
                return Err(Error::config("fine-tune lr must be >= 0"));
            }
        }
        if self.minibatch < 1 {
            return Err(Error::config("fine-tune minibatch must be >= 1"));
        }
        match self.finetune_loss {
            LossId::Bc | LossId::Awr | LossId::DdpgBc => {}
            other => {
                return Err(Error::config(format!(
                    "`{}` is not a policy fine-tune loss",
                    other.name()
                )))
            }
        }
        self.selection.validate()
    }
}

/// Per-cycle bookkeeping.
#[derive(Debug, Clone, PartialEq)]
pub struct CycleStats {
    /// Environment step at which the cycle began.
    pub start_step: usize,
    pub n_relevant: usize,
    pub n_selected: usize,
    pub threshold: Option<f64>,
    /// Parameters matched the stored snapshot bitwise at cycle start.
    pub reset_exact: bool,
    /// Fine-tuning diverged and the snapshot was restored for this cycle.
    pub finetune_aborted: bool,
    /// Retained windows, present only when `record_selected` is on.
    pub retained: Option<Vec<Window>>,
}

/// Everything one evaluation episode produced.
#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeRecord {
    pub goal: Obs,
    pub seed: u64,
    /// Visited states, starting with the reset state.
    pub states: Vec<Obs>,
    /// Executed (clipped) actions.
    pub actions: Vec<Obs>,
    /// Reward of each visited state against the goal (aligned with states).
    pub rewards: Vec<f64>,
    pub cycles: Vec<CycleStats>,
    pub success: bool,
    pub first_success_step: Option<usize>,
    /// Analytic compute charge for the episode.
    pub flops: u128,
    pub clipped_steps: usize,
}

impl EpisodeRecord {
    pub fn n_steps(&self) -> usize {
        self.actions.len()
    }

    fn new(goal: Obs, seed: u64, start: Obs, eps: f64) -> Self {
        let r0 = reward(&start, &goal, eps);
        let success = r0 == 0.0;
        Self {
            goal,
            seed,
            states: vec![start],
            actions: Vec::new(),
            rewards: vec![r0],
            cycles: Vec::new(),
            success,
            first_success_step: if success { Some(0) } else { None },
            flops: 0,
            clipped_steps: 0,
        }
    }
}

fn flop_model(policy: &GaussianPolicy, env: &dyn GoalEnv, cfg: Option<&TttConfig>) -> FlopModel {
    let dims = policy.net.layer_dims();
    FlopModel {
        width: dims[1] as u64,
        hidden_layers: (dims.len() - 2) as u64,
        episode_len: env.episode_cap() as u64,
        grad_steps_per_cycle: cfg.map_or(0, |c| c.grad_steps as u64),
        ttt_period: cfg.map(|c| c.rollout_horizon as u64),
        backward_multiplier: 2,
        critic_same_size: true,
    }
}

/// Rolls `policy` out for up to `k` steps (bounded by the episode cap),
/// recording into `record`. Returns true on goal achievement.
fn rollout_segment(
    env: &dyn GoalEnv,
    policy: &GaussianPolicy,
    record: &mut EpisodeRecord,
    k: usize,
) -> bool {
    let bound = env.action_bound();
    let eps = env.eps();
    let cap = env.episode_cap();
    for _ in 0..k {
        if record.success || record.n_steps() >= cap {
            break;
        }
        let obs = *record.states.last().unwrap();
        let input = [obs[0], obs[1], record.goal[0], record.goal[1]];
        let mean = policy.mean(&input);
        if mean[0].abs() > bound || mean[1].abs() > bound {
            record.clipped_steps += 1;
        }
        let action = [mean[0].clamp(-bound, bound), mean[1].clamp(-bound, bound)];
        let out = env.step(obs, action);
        record.actions.push(action);
        record.states.push(out.obs);
        let r = reward(&out.obs, &record.goal, eps);
        record.rewards.push(r);
        if r == 0.0 {
            record.success = true;
            record.first_success_step = Some(record.n_steps());
        }
    }
    record.success
}

/// Deterministic frozen-policy episode: the baseline for every comparison.
pub fn run_episode_frozen(
    env: &dyn GoalEnv,
    policy: &GaussianPolicy,
    goal: &GoalSpec,
    seed: u64,
) -> EpisodeRecord {
    let start = env.reset(seeding::split(seed, "reset", 0));
    let mut record = EpisodeRecord::new(goal.goal, seed, start, env.eps());
    let cap = env.episode_cap();
    rollout_segment(env, policy, &mut record, cap);
    record.flops = flop_model(policy, env, None).episode_cost_frozen();
    record
}

/// Collects the (state, action) training pairs of a selection.
fn selection_pairs(sel: &SelectionBatch) -> Vec<(u32, u32)> {
    let mut pairs = Vec::new();
    for w in &sel.windows {
        for i in 0..w.n_pairs() as u32 {
            pairs.push((w.traj, w.start + i));
        }
    }
    pairs
}

/// `N` Adam steps on the configured policy loss, goals pinned to `goal`.
/// Fresh optimizer state per call; the critic is never updated.
pub fn finetune(
    policy: &mut GaussianPolicy,
    critic: Option<&CriticPair>,
    ds: &OfflineDataset,
    sel: &SelectionBatch,
    goal: &[f64],
    cfg: &TttConfig,
    rng: &mut ChaCha8Rng,
) -> Result<()> {
    if cfg.grad_steps == 0 {
        return Ok(());
    }
    let pairs = selection_pairs(sel);
    if pairs.is_empty() {
        return Ok(());
    }
    if matches!(cfg.finetune_loss, LossId::Awr | LossId::DdpgBc) && critic.is_none() {
        return Err(Error::config(format!(
            "fine-tune loss `{}` requires a critic",
            cfg.finetune_loss.name()
        )));
    }

    let n = cfg.minibatch.min(pairs.len().max(1));
    let mut opt = AdamState::new(policy.param_len());
    let mut cache = BatchCache::new();
    let mut states = vec![0.0; n * OBS_DIM];
    let mut actions = vec![0.0; n * ACTION_DIM];
    let mut goals = vec![0.0; n * OBS_DIM];
    let mut inputs = vec![0.0; n * OBS_DIM * 2];
    for i in 0..n {
        goals[i * OBS_DIM..(i + 1) * OBS_DIM].copy_from_slice(goal);
    }

    for _ in 0..cfg.grad_steps {
        for i in 0..n {
            let (ti, t) = pairs[rng.gen_range(0..pairs.len())];
            let traj = ds.traj(ti as usize);
            let s = traj.state(t as usize);
            let a = traj.action(t as usize);
            states[i * OBS_DIM..(i + 1) * OBS_DIM].copy_from_slice(s);
            actions[i * ACTION_DIM..(i + 1) * ACTION_DIM].copy_from_slice(a);
            inputs[i * OBS_DIM * 2..i * OBS_DIM * 2 + OBS_DIM].copy_from_slice(s);
            inputs[i * OBS_DIM * 2 + OBS_DIM..(i + 1) * OBS_DIM * 2].copy_from_slice(goal);
        }
        let (_, grad) = match cfg.finetune_loss {
            LossId::Bc => bc_loss_grad(policy, &inputs, &actions)?,
            LossId::Awr => {
                let critic = critic.unwrap();
                let q_vals = {
                    let mut q_in = vec![0.0; n * (OBS_DIM + ACTION_DIM + OBS_DIM)];
                    let row = OBS_DIM + ACTION_DIM + OBS_DIM;
                    for i in 0..n {
                        q_in[i * row..i * row + OBS_DIM]
                            .copy_from_slice(&states[i * OBS_DIM..(i + 1) * OBS_DIM]);
                        q_in[i * row + OBS_DIM..i * row + OBS_DIM + ACTION_DIM]
                            .copy_from_slice(&actions[i * ACTION_DIM..(i + 1) * ACTION_DIM]);
                        q_in[i * row + OBS_DIM + ACTION_DIM..(i + 1) * row]
                            .copy_from_slice(goal);
                    }
                    critic.q.forward_batch(&q_in, n, &mut cache).to_vec()
                };
                let v_vals = critic.v.forward_batch(&inputs, n, &mut cache).to_vec();
                let adv: Vec<f64> = q_vals
                    .iter()
                    .zip(v_vals.iter())
                    .map(|(q, v)| q - v)
                    .collect();
                awr_loss_grad(
                    policy,
                    &inputs,
                    &actions,
                    &adv,
                    cfg.awr_beta,
                    cfg.awr_weight_max,
                )?
            }
            LossId::DdpgBc => {
                let critic = critic.unwrap();
                ddpgbc_loss_grad(policy, &critic.q, &states, &goals, &actions, cfg.ddpg_beta)?
            }
            other => {
                return Err(Error::config(format!(
                    "`{}` is not a policy fine-tune loss",
                    other.name()
                )))
            }
        };
        let mut flat = policy.flat_params();
        adam_step(&mut flat, &grad, &mut opt, cfg.lr)?;
        policy.set_flat_params(&flat);
        policy.clamp_log_std();
    }
    Ok(())
}

/// One full test-time-training episode (select / fine-tune / roll out /
/// reset until success or the step cap).
pub fn run_episode_ttt(
    env: &dyn GoalEnv,
    policy0: &GaussianPolicy,
    critic: Option<&CriticPair>,
    ds: &OfflineDataset,
    index: &WindowIndex,
    cfg: &TttConfig,
    goal: &GoalSpec,
    seed: u64,
) -> Result<EpisodeRecord> {
    cfg.validate()?;
    if cfg.grad_steps == 0 {
        // degenerate case: identical to the frozen evaluation, including
        // the compute charge
        return Ok(run_episode_frozen(env, policy0, goal, seed));
    }
    let v_net = critic.map(|c| &c.v);
    let stored = policy0.flat_params();
    let mut policy = policy0.clone();
    let start = env.reset(seeding::split(seed, "reset", 0));
    let mut record = EpisodeRecord::new(goal.goal, seed, start, env.eps());
    let cap = env.episode_cap();

    let mut cycle = 0u64;
    while !record.success && record.n_steps() < cap {
        // reset to the stored parameters before specializing
        let reset_exact = if cfg.reset_each_cycle || cycle == 0 {
            policy.set_flat_params(&stored);
            policy.flat_params() == stored
        } else {
            false
        };

        let cycle_start = record.n_steps();
        let obs = *record.states.last().unwrap();
        let mut sel_rng = seeding::rng(seeding::split(seed, "select", cycle));
        let sel = select(
            ds,
            index,
            &obs,
            &goal.goal,
            v_net,
            &cfg.selection,
            env.eps(),
            &mut sel_rng,
        )?;

        let mut aborted = false;
        if !sel.is_empty() {
            let mut ft_rng = seeding::rng(seeding::split(seed, "finetune", cycle));
            match finetune(&mut policy, critic, ds, &sel, &goal.goal, cfg, &mut ft_rng) {
                Ok(()) => {}
                Err(Error::Numeric { .. }) => {
                    // divergence: restore the snapshot and roll out frozen
                    policy.set_flat_params(&stored);
                    aborted = true;
                }
                Err(e) => return Err(e),
            }
        }

        record.cycles.push(CycleStats {
            start_step: cycle_start,
            n_relevant: sel.n_relevant,
            n_selected: sel.n_selected(),
            threshold: sel.threshold,
            reset_exact,
            finetune_aborted: aborted,
            retained: cfg.record_selected.then(|| sel.windows.clone()),
        });

        rollout_segment(env, &policy, &mut record, cfg.rollout_horizon);
        cycle += 1;
    }

    record.flops = flop_model(policy0, env, Some(cfg)).episode_cost_ttt();
    Ok(record)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{generate_expert, WindowIndex};
    use crate::env::{GridMaze, MazeLayout, PointMaze};
    use crate::select::SelectionMode;
    use std::sync::Arc;

    fn setup() -> (PointMaze, OfflineDataset, WindowIndex, GaussianPolicy) {
        let maze = PointMaze::new(Arc::new(MazeLayout::builtin("medium").unwrap()), 120);
        let ds = generate_expert(&maze, 20, 0.1, 6).unwrap();
        let index = WindowIndex::build(&ds, 0.5);
        let policy = GaussianPolicy::new(40, &[4, 16, 16, 2]).unwrap();
        (maze, ds, index, policy)
    }

    fn ttt_cfg() -> TttConfig {
        let mut sel = SelectionConfig::new(SelectionMode::CriticFree);
        sel.horizon = 10;
        let mut cfg = TttConfig::new(sel, LossId::Bc);
        cfg.grad_steps = 5;
        cfg.minibatch = 16;
        cfg.rollout_horizon = 20;
        cfg
    }

    #[test]
    fn zero_grad_steps_reproduces_frozen_bitwise() {
        let (maze, ds, index, policy) = setup();
        let goal = GoalSpec {
            goal: [9.5, 9.5],
            eps: maze.eps(),
        };
        let mut cfg = ttt_cfg();
        cfg.grad_steps = 0;
        for seed in 0..8 {
            let frozen = run_episode_frozen(&maze, &policy, &goal, seed);
            let ttt = run_episode_ttt(&maze, &policy, None, &ds, &index, &cfg, &goal, seed)
                .unwrap();
            assert_eq!(frozen, ttt);
        }
    }

    #[test]
    fn zero_lr_leaves_trajectory_frozen() {
        let (maze, ds, index, policy) = setup();
        let goal = GoalSpec {
            goal: [9.5, 1.5],
            eps: maze.eps(),
        };
        let mut cfg = ttt_cfg();
        cfg.lr = 0.0;
        let frozen = run_episode_frozen(&maze, &policy, &goal, 3);
        let ttt =
            run_episode_ttt(&maze, &policy, None, &ds, &index, &cfg, &goal, 3).unwrap();
        assert_eq!(frozen.states, ttt.states);
        assert_eq!(frozen.actions, ttt.actions);
        // compute was still spent on the no-op fine-tuning
        assert!(ttt.flops > frozen.flops);
    }

    #[test]
    fn cycle_resets_are_bitwise_exact() {
        let (maze, ds, index, policy) = setup();
        let goal = GoalSpec {
            goal: [1.5, 9.5],
            eps: maze.eps(),
        };
        let cfg = ttt_cfg();
        let rec = run_episode_ttt(&maze, &policy, None, &ds, &index, &cfg, &goal, 5).unwrap();
        assert!(!rec.cycles.is_empty());
        assert!(rec.cycles.iter().all(|c| c.reset_exact));
    }

    #[test]
    fn episodes_are_deterministic() {
        let (maze, ds, index, policy) = setup();
        let goal = GoalSpec {
            goal: [9.5, 9.5],
            eps: maze.eps(),
        };
        let cfg = ttt_cfg();
        let a = run_episode_ttt(&maze, &policy, None, &ds, &index, &cfg, &goal, 11).unwrap();
        let b = run_episode_ttt(&maze, &policy, None, &ds, &index, &cfg, &goal, 11).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn finetune_reduces_bc_loss_on_a_fixed_selection() {
        let (maze, ds, index, mut policy) = setup();
        let goal = [5.5, 5.5];
        let sel = select(
            &ds,
            &index,
            &maze.reset(1),
            &goal,
            None,
            &SelectionConfig::new(SelectionMode::RelevantOnly),
            maze.eps(),
            &mut seeding::rng(2),
        )
        .unwrap();
        assert!(!sel.is_empty(), "need a non-empty selection for this test");

        let loss_on = |p: &GaussianPolicy| {
            let pairs = selection_pairs(&sel);
            let n = pairs.len();
            let mut inputs = vec![0.0; n * 4];
            let mut actions = vec![0.0; n * 2];
            for (i, (ti, t)) in pairs.iter().enumerate() {
                let traj = ds.traj(*ti as usize);
                inputs[i * 4..i * 4 + 2].copy_from_slice(traj.state(*t as usize));
                inputs[i * 4 + 2..i * 4 + 4].copy_from_slice(&goal);
                actions[i * 2..(i + 1) * 2].copy_from_slice(traj.action(*t as usize));
            }
            bc_loss_grad(p, &inputs, &actions).unwrap().0
        };

        let before = loss_on(&policy);
        let mut cfg = ttt_cfg();
        cfg.grad_steps = 50;
        cfg.lr = 3e-3;
        finetune(
            &mut policy,
            None,
            &ds,
            &sel,
            &goal,
            &cfg,
            &mut seeding::rng(3),
        )
        .unwrap();
        let after = loss_on(&policy);
        assert!(
            after < before,
            "fine-tuning should reduce the bc loss ({before} -> {after})"
        );
    }

    #[test]
    fn frozen_episode_flops_match_the_cost_model() {
        let maze = GridMaze::new(Arc::new(MazeLayout::builtin("medium").unwrap()), 300);
        let policy = GaussianPolicy::new(1, &[4, 64, 64, 2]).unwrap();
        let goal = GoalSpec {
            goal: [9.5, 9.5],
            eps: maze.eps(),
        };
        let rec = run_episode_frozen(&maze, &policy, &goal, 0);
        let model = FlopModel {
            width: 64,
            hidden_layers: 2,
            episode_len: 300,
            grad_steps_per_cycle: 0,
            ttt_period: None,
            backward_multiplier: 2,
            critic_same_size: true,
        };
        assert_eq!(rec.flops, model.episode_cost_frozen());
    }

    #[test]
    fn charged_flops_grow_with_n_and_frequency() {
        let (maze, ds, index, policy) = setup();
        let goal = GoalSpec {
            goal: [9.5, 9.5],
            eps: maze.eps(),
        };
        let flops_for = |n: usize, k: usize| {
            let mut cfg = ttt_cfg();
            cfg.grad_steps = n;
            cfg.rollout_horizon = k;
            run_episode_ttt(&maze, &policy, None, &ds, &index, &cfg, &goal, 7)
                .unwrap()
                .flops
        };
        assert!(flops_for(10, 20) > flops_for(5, 20));
        assert!(flops_for(5, 10) > flops_for(5, 20));
    }
}
