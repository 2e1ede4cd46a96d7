//! The evaluation protocol: per (checkpoint, goal, seed) episodes, averaged
//! success with standard errors across seeds, and the CSV row formats.

use super::{run_episode_frozen, run_episode_ttt, EpisodeRecord, TttConfig};
use crate::data::{OfflineDataset, WindowIndex};
use crate::env::GoalEnv;
use crate::nn::GaussianPolicy;
use crate::select::SelectionMode;
use crate::{backbone::CriticPair, seeding, Error, Result};
use rayon::prelude::*;
use std::io::{self, Write};

/// Evaluation mode: the frozen baseline or test-time training under one of
/// the selection modes (`ttt` = full relevance + optimality).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EvalMode {
    Frozen,
    Ttt,
    CriticFree,
    RelevantOnly,
    OptimalOnly,
    Random,
}

impl EvalMode {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "frozen" => Ok(EvalMode::Frozen),
            "ttt" => Ok(EvalMode::Ttt),
            "critic_free" => Ok(EvalMode::CriticFree),
            "relevant_only" => Ok(EvalMode::RelevantOnly),
            "optimal_only" => Ok(EvalMode::OptimalOnly),
            "random" => Ok(EvalMode::Random),
            other => Err(Error::config(format!("unknown eval mode `{other}`"))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            EvalMode::Frozen => "frozen",
            EvalMode::Ttt => "ttt",
            EvalMode::CriticFree => "critic_free",
            EvalMode::RelevantOnly => "relevant_only",
            EvalMode::OptimalOnly => "optimal_only",
            EvalMode::Random => "random",
        }
    }

    pub fn selection_mode(&self) -> Option<SelectionMode> {
        match self {
            EvalMode::Frozen => None,
            EvalMode::Ttt => Some(SelectionMode::Full),
            EvalMode::CriticFree => Some(SelectionMode::CriticFree),
            EvalMode::RelevantOnly => Some(SelectionMode::RelevantOnly),
            EvalMode::OptimalOnly => Some(SelectionMode::OptimalOnly),
            EvalMode::Random => Some(SelectionMode::Random),
        }
    }

    pub const ABLATION_MODES: [EvalMode; 4] = [
        EvalMode::Random,
        EvalMode::RelevantOnly,
        EvalMode::OptimalOnly,
        EvalMode::Ttt,
    ];
}

/// One pre-trained checkpoint to evaluate.
#[derive(Debug, Clone)]
pub struct EvalCheckpoint {
    pub step: usize,
    pub policy: GaussianPolicy,
    pub critic: Option<CriticPair>,
}

#[derive(Debug, Clone)]
pub struct EvalProtocol {
    pub n_seeds: usize,
    pub master_seed: u64,
}

/// One episode summarized as a results-CSV row.
#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeRow {
    pub backbone: String,
    pub dataset_regime: String,
    pub mode: &'static str,
    pub checkpoint_step: usize,
    pub goal_id: usize,
    pub seed: usize,
    pub success: bool,
    pub first_success_step: Option<usize>,
    pub flops: u128,
    pub n_cycles: usize,
    pub mean_n_selected: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AggregateRow {
    pub backbone: String,
    pub dataset_regime: String,
    pub mode: &'static str,
    pub mean_success: f64,
    pub stderr: f64,
    pub mean_flops: f64,
    pub n_episodes: usize,
}

#[derive(Debug, Clone)]
pub struct EvalReport {
    pub rows: Vec<EpisodeRow>,
    /// Full episode records, aligned with `rows`.
    pub records: Vec<EpisodeRecord>,
    /// Per-protocol-seed success rates (averaged over checkpoints x goals).
    pub per_seed: Vec<f64>,
    pub aggregate: AggregateRow,
}

impl EvalReport {
    pub fn mean_success(&self) -> f64 {
        self.aggregate.mean_success
    }
}

/// Sample standard error (ddof = 1) of `values`; zero for fewer than two.
pub fn stderr_of(values: &[f64]) -> f64 {
    let n = values.len();
    if n < 2 {
        return 0.0;
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64;
    (var / n as f64).sqrt()
}

/// Episode seed derivation, shared by every mode so frozen and TTT episodes
/// with equal protocol coordinates start identically.
pub fn episode_seed(master: u64, checkpoint_step: usize, goal_id: usize, seed_idx: usize) -> u64 {
    let s = seeding::split(master, "checkpoint", checkpoint_step as u64);
    let s = seeding::split(s, "goal", goal_id as u64);
    seeding::split(s, "seed", seed_idx as u64)
}

fn record_to_row(
    record: &EpisodeRecord,
    backbone: &str,
    regime: &str,
    mode: EvalMode,
    checkpoint_step: usize,
    goal_id: usize,
    seed_idx: usize,
) -> EpisodeRow {
    let n_cycles = record.cycles.len();
    let mean_n_selected = if n_cycles == 0 {
        0.0
    } else {
        record.cycles.iter().map(|c| c.n_selected as f64).sum::<f64>() / n_cycles as f64
    };
    EpisodeRow {
        backbone: backbone.to_string(),
        dataset_regime: regime.to_string(),
        mode: mode.name(),
        checkpoint_step,
        goal_id,
        seed: seed_idx,
        success: record.success,
        first_success_step: record.first_success_step,
        flops: record.flops,
        n_cycles,
        mean_n_selected,
    }
}

/// Runs the full protocol: every checkpoint x eval goal x seed. Episodes are
/// independent and run in parallel; results are reduced in protocol order,
/// so reports are identical regardless of worker count.
#[allow(clippy::too_many_arguments)]
pub fn evaluate(
    env: &dyn GoalEnv,
    ds: &OfflineDataset,
    index: &WindowIndex,
    checkpoints: &[EvalCheckpoint],
    mode: EvalMode,
    ttt_cfg: &TttConfig,
    protocol: &EvalProtocol,
    backbone: &str,
) -> Result<EvalReport> {
    if checkpoints.is_empty() {
        return Err(Error::missing("no checkpoints to evaluate"));
    }
    if protocol.n_seeds == 0 {
        return Err(Error::config("protocol needs at least one seed"));
    }
    let goals = env.eval_goals()?;
    let regime = ds.meta.regime.to_string();

    let mut tasks = Vec::new();
    for ck_idx in 0..checkpoints.len() {
        for goal_id in 0..goals.len() {
            for seed_idx in 0..protocol.n_seeds {
                tasks.push((ck_idx, goal_id, seed_idx));
            }
        }
    }

    let records: Result<Vec<(EpisodeRow, EpisodeRecord)>> = tasks
        .par_iter()
        .map(|&(ck_idx, goal_id, seed_idx)| {
            let ck = &checkpoints[ck_idx];
            let goal = &goals[goal_id];
            let seed = episode_seed(protocol.master_seed, ck.step, goal_id, seed_idx);
            let record = match mode.selection_mode() {
                None => run_episode_frozen(env, &ck.policy, goal, seed),
                Some(sel_mode) => {
                    let mut cfg = ttt_cfg.clone();
                    cfg.selection.mode = sel_mode;
                    run_episode_ttt(
                        env,
                        &ck.policy,
                        ck.critic.as_ref(),
                        ds,
                        index,
                        &cfg,
                        goal,
                        seed,
                    )?
                }
            };
            let row = record_to_row(&record, backbone, &regime, mode, ck.step, goal_id, seed_idx);
            Ok((row, record))
        })
        .collect();
    let records = records?;
    let rows: Vec<EpisodeRow> = records.iter().map(|(r, _)| r.clone()).collect();
    let records: Vec<EpisodeRecord> = records.into_iter().map(|(_, rec)| rec).collect();

    // per protocol seed: success averaged over checkpoints x goals
    let mut per_seed = vec![0.0; protocol.n_seeds];
    let mut per_seed_n = vec![0usize; protocol.n_seeds];
    for row in &rows {
        per_seed[row.seed] += row.success as u8 as f64;
        per_seed_n[row.seed] += 1;
    }
    for (sum, n) in per_seed.iter_mut().zip(per_seed_n.iter()) {
        *sum /= (*n).max(1) as f64;
    }

    let mean_success = per_seed.iter().sum::<f64>() / per_seed.len() as f64;
    let mean_flops =
        rows.iter().map(|r| r.flops as f64).sum::<f64>() / rows.len().max(1) as f64;
    let aggregate = AggregateRow {
        backbone: backbone.to_string(),
        dataset_regime: regime,
        mode: mode.name(),
        mean_success,
        stderr: stderr_of(&per_seed),
        mean_flops,
        n_episodes: rows.len(),
    };
    Ok(EvalReport {
        rows,
        records,
        per_seed,
        aggregate,
    })
}

pub const EPISODE_CSV_HEADER: &str = "backbone,dataset_regime,mode,checkpoint_step,goal_id,seed,success,first_success_step,flops,n_cycles,mean_n_selected";

pub const AGGREGATE_CSV_HEADER: &str =
    "backbone,dataset_regime,mode,mean_success,stderr,mean_flops,n_episodes";

impl EpisodeRow {
    pub fn write_csv(&self, w: &mut impl Write) -> io::Result<()> {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{},{},{:.2}",
            self.backbone,
            self.dataset_regime,
            self.mode,
            self.checkpoint_step,
            self.goal_id,
            self.seed,
            self.success as u8,
            self.first_success_step
                .map_or(String::new(), |s| s.to_string()),
            self.flops,
            self.n_cycles,
            self.mean_n_selected,
        )
    }
}

impl AggregateRow {
    pub fn write_csv(&self, w: &mut impl Write) -> io::Result<()> {
        writeln!(
            w,
            "{},{},{},{:.4},{:.4},{:.1},{}",
            self.backbone,
            self.dataset_regime,
            self.mode,
            self.mean_success,
            self.stderr,
            self.mean_flops,
            self.n_episodes,
        )
    }
}
