//! Command implementations behind the `gcttt` binary. Each command is a
//! pure function of its (resolved) config and writes a manifest next to its
//! outputs, so re-running from the manifest reproduces every artifact byte
//! for byte (training-log wall-clock columns excepted).

use crate::config::RunConfig;
use crate::manifest::write_manifest;
use crate::svg;
use gcttt_core::backbone::{pretrain, CriticPair, PretrainOutput};
use gcttt_core::data::{
    generate_expert, generate_play, load_dataset, save_dataset, OfflineDataset, Regime,
    WindowIndex,
};
use gcttt_core::flops::FlopModel;
use gcttt_core::nn::{
    restore_mlp, restore_policy, snapshot_mlp, snapshot_policy, BlobRole, GaussianPolicy,
};
use gcttt_core::ttt::{
    evaluate, AggregateRow, EvalCheckpoint, EvalMode, EvalProtocol, EvalReport,
    AGGREGATE_CSV_HEADER, EPISODE_CSV_HEADER,
};
use gcttt_core::{Error, Result};
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

/// Caps worker threads from `GCTTT_WORKERS` (ignored once a pool exists).
pub fn init_workers() {
    if let Ok(n) = std::env::var("GCTTT_WORKERS") {
        if let Ok(n) = n.parse::<usize>() {
            let _ = rayon::ThreadPoolBuilder::new()
                .num_threads(n.max(1))
                .build_global();
        }
    }
}

pub fn cmd_gen_data(cfg: &RunConfig) -> Result<PathBuf> {
    let env = cfg.env()?;
    let regime = Regime::parse(&cfg.data.regime)?;
    let seed = gcttt_core::seeding::split(cfg.master_seed, "gen-data", 0);
    let ds = match regime {
        Regime::Expert => generate_expert(env.as_ref(), cfg.data.n_trajectories, cfg.data.noise, seed)?,
        Regime::Play => generate_play(
            env.as_ref(),
            cfg.data.n_trajectories,
            cfg.data.n_waypoints,
            cfg.data.leg_cap,
            seed,
        )?,
    };
    let path = cfg.dataset_path();
    save_dataset(&ds, &path)?;
    write_manifest("gen-data", "", cfg, &cfg.out_dir)?;
    Ok(path)
}

fn load_dataset_checked(cfg: &RunConfig) -> Result<OfflineDataset> {
    let ds = load_dataset(&cfg.dataset_path())?;
    let layout = cfg.layout()?;
    if ds.meta.layout_name != layout.name() {
        return Err(Error::config(format!(
            "dataset was generated on layout `{}` but the config selects `{}`",
            ds.meta.layout_name,
            layout.name()
        )));
    }
    if ds.meta.env_kind != cfg.env_kind()? {
        return Err(Error::config(
            "dataset environment kind does not match the config",
        ));
    }
    Ok(ds)
}

fn policy_path(run_dir: &Path, step: usize) -> PathBuf {
    run_dir.join(format!("policy_step{step}.gctt"))
}

fn critic_path(run_dir: &Path, role: &str, step: usize) -> PathBuf {
    run_dir.join(format!("critic_{role}_step{step}.gctt"))
}

pub fn cmd_pretrain(cfg: &RunConfig) -> Result<PathBuf> {
    let env = cfg.env()?;
    let ds = load_dataset_checked(cfg)?;
    let backbone = cfg.backbone_config()?;
    let sampler = cfg.sampler_config();
    let seed = gcttt_core::seeding::split(cfg.master_seed, "pretrain", 0);
    let out: PretrainOutput = pretrain(&ds, env.eps(), &backbone, &sampler, seed)?;

    let run_dir = cfg.run_dir();
    fs::create_dir_all(&run_dir)?;
    for ck in &out.checkpoints {
        fs::write(policy_path(&run_dir, ck.step), snapshot_policy(&ck.policy))?;
        if let Some(critic) = &ck.critic {
            fs::write(
                critic_path(&run_dir, "q", ck.step),
                snapshot_mlp(BlobRole::CriticQ, &critic.q),
            )?;
            fs::write(
                critic_path(&run_dir, "v", ck.step),
                snapshot_mlp(BlobRole::CriticV, &critic.v),
            )?;
        }
    }
    let mut log = String::from("step,loss,value,wall_ms\n");
    for row in &out.log {
        let _ = writeln!(
            log,
            "{},{},{},{}",
            row.step, row.loss_name, row.value, row.wall_ms
        );
    }
    fs::write(run_dir.join("train_log.csv"), log)?;
    write_manifest("pretrain", "", cfg, &run_dir)?;
    Ok(run_dir)
}

fn load_policy(run_dir: &Path, step: usize) -> Result<GaussianPolicy> {
    let path = policy_path(run_dir, step);
    let bytes = fs::read(&path)
        .map_err(|_| Error::missing(format!("policy checkpoint {}", path.display())))?;
    restore_policy(&bytes)
}

fn load_critic(run_dir: &Path, step: usize) -> Result<Option<CriticPair>> {
    let q_path = critic_path(run_dir, "q", step);
    let v_path = critic_path(run_dir, "v", step);
    if !q_path.exists() || !v_path.exists() {
        return Ok(None);
    }
    let q = restore_mlp(&fs::read(&q_path)?, BlobRole::CriticQ)?;
    let v = restore_mlp(&fs::read(&v_path)?, BlobRole::CriticV)?;
    Ok(Some(CriticPair::from_nets(q, v)))
}

/// Loads the protocol checkpoints, borrowing critics from
/// `protocol.critic_run_dir` when the backbone's own run has none.
fn load_checkpoints(cfg: &RunConfig) -> Result<Vec<EvalCheckpoint>> {
    let run_dir = cfg.run_dir();
    let mut out = Vec::new();
    for &step in &cfg.protocol_checkpoints() {
        let policy = load_policy(&run_dir, step)?;
        let mut critic = load_critic(&run_dir, step)?;
        if critic.is_none() && !cfg.protocol.critic_run_dir.is_empty() {
            critic = load_critic(Path::new(&cfg.protocol.critic_run_dir), step)?;
            if critic.is_none() {
                return Err(Error::missing(format!(
                    "critic checkpoint for step {step} in {}",
                    cfg.protocol.critic_run_dir
                )));
            }
        }
        out.push(EvalCheckpoint {
            step,
            policy,
            critic,
        });
    }
    Ok(out)
}

fn episodes_csv(report: &EvalReport) -> String {
    let mut buf = Vec::new();
    use std::io::Write;
    writeln!(buf, "{EPISODE_CSV_HEADER}").unwrap();
    for row in &report.rows {
        row.write_csv(&mut buf).unwrap();
    }
    String::from_utf8(buf).unwrap()
}

fn aggregates_csv(rows: &[AggregateRow]) -> String {
    let mut buf = Vec::new();
    use std::io::Write;
    writeln!(buf, "{AGGREGATE_CSV_HEADER}").unwrap();
    for row in rows {
        row.write_csv(&mut buf).unwrap();
    }
    String::from_utf8(buf).unwrap()
}

/// JSON-lines selection dump for reproducing data-selection visuals.
fn selections_jsonl(report: &EvalReport) -> String {
    let mut out = String::new();
    for (row, record) in report.rows.iter().zip(report.records.iter()) {
        for cycle in &record.cycles {
            let Some(retained) = &cycle.retained else {
                continue;
            };
            let state = record.states[cycle.start_step];
            let ids: Vec<String> = retained
                .iter()
                .map(|w| format!("[{},{},{}]", w.traj, w.start, w.len))
                .collect();
            let threshold = cycle
                .threshold
                .map_or("null".to_string(), |c| format!("{c}"));
            let _ = writeln!(
                out,
                "{{\"checkpoint_step\":{},\"goal_id\":{},\"seed\":{},\"state\":[{},{}],\"goal\":[{},{}],\"n_relevant\":{},\"threshold\":{},\"retained\":[{}]}}",
                row.checkpoint_step,
                row.goal_id,
                row.seed,
                state[0],
                state[1],
                record.goal[0],
                record.goal[1],
                cycle.n_relevant,
                threshold,
                ids.join(","),
            );
        }
    }
    out
}

fn run_eval(cfg: &RunConfig, mode: EvalMode) -> Result<EvalReport> {
    let env = cfg.env()?;
    let ds = load_dataset_checked(cfg)?;
    let index = WindowIndex::build(&ds, cfg.selection.eps);
    let checkpoints = load_checkpoints(cfg)?;
    if let Some(sel_mode) = mode.selection_mode() {
        let needs = sel_mode.needs_critic()
            || matches!(
                cfg.finetune_loss()?,
                gcttt_core::nn::LossId::Awr | gcttt_core::nn::LossId::DdpgBc
            );
        if needs && checkpoints.iter().any(|c| c.critic.is_none()) {
            return Err(Error::missing(format!(
                "mode `{}` needs a critic; pretrain an IQL run or set protocol.critic_run_dir",
                mode.name()
            )));
        }
    }
    let ttt_cfg = cfg.ttt_config(
        mode.selection_mode()
            .unwrap_or(gcttt_core::select::SelectionMode::Full),
    )?;
    let protocol = EvalProtocol {
        n_seeds: cfg.protocol.n_seeds,
        master_seed: cfg.master_seed,
    };
    evaluate(
        env.as_ref(),
        &ds,
        &index,
        &checkpoints,
        mode,
        &ttt_cfg,
        &protocol,
        &cfg.backbone.algo,
    )
}

pub fn cmd_eval(cfg: &RunConfig, mode: EvalMode) -> Result<EvalReport> {
    let report = run_eval(cfg, mode)?;
    fs::create_dir_all(&cfg.out_dir)?;
    fs::write(
        cfg.out_dir.join(format!("episodes_{}.csv", mode.name())),
        episodes_csv(&report),
    )?;
    fs::write(
        cfg.out_dir.join(format!("aggregate_{}.csv", mode.name())),
        aggregates_csv(std::slice::from_ref(&report.aggregate)),
    )?;
    if cfg.protocol.dump_selections && mode != EvalMode::Frozen {
        fs::write(
            cfg.out_dir.join(format!("selections_{}.jsonl", mode.name())),
            selections_jsonl(&report),
        )?;
    }
    write_manifest("eval", &format!("mode={}", mode.name()), cfg, &cfg.out_dir)?;
    Ok(report)
}

pub fn cmd_ablate(cfg: &RunConfig) -> Result<Vec<AggregateRow>> {
    let mut aggregates = Vec::new();
    let mut all_rows = String::from(EPISODE_CSV_HEADER.to_string() + "\n");
    for mode in EvalMode::ABLATION_MODES {
        let report = run_eval(cfg, mode)?;
        all_rows.push_str(&episodes_csv(&report)[EPISODE_CSV_HEADER.len() + 1..]);
        aggregates.push(report.aggregate);
    }
    fs::create_dir_all(&cfg.out_dir)?;
    fs::write(cfg.out_dir.join("ablation.csv"), aggregates_csv(&aggregates))?;
    fs::write(cfg.out_dir.join("ablation_episodes.csv"), all_rows)?;
    let labels: Vec<String> = aggregates.iter().map(|a| a.mode.to_string()).collect();
    let values: Vec<f64> = aggregates.iter().map(|a| a.mean_success).collect();
    svg::bar_chart(
        &cfg.out_dir.join("ablation.svg"),
        "data-selection ablation",
        &labels,
        &values,
    )?;
    write_manifest("ablate", "", cfg, &cfg.out_dir)?;
    Ok(aggregates)
}

pub fn cmd_freq_sweep(cfg: &RunConfig, horizons: &[usize]) -> Result<Vec<AggregateRow>> {
    if horizons.is_empty() {
        return Err(Error::config("freq-sweep needs at least one K"));
    }
    let mut csv = String::from("k,flops,mean_success,stderr\n");
    let mut points = Vec::new();
    let mut aggregates = Vec::new();
    for &k in horizons {
        let mut run_cfg = cfg.clone();
        run_cfg.ttt.k = k;
        let report = run_eval(&run_cfg, EvalMode::Ttt)?;
        let flops = FlopModel {
            width: cfg.backbone.hidden_width as u64,
            hidden_layers: cfg.backbone.hidden_layers as u64,
            episode_len: cfg.env.episode_cap as u64,
            grad_steps_per_cycle: cfg.ttt.n_grad_steps as u64,
            ttt_period: Some(k as u64),
            backward_multiplier: 2,
            critic_same_size: true,
        }
        .episode_cost_ttt();
        let _ = writeln!(
            csv,
            "{},{},{:.4},{:.4}",
            k, flops, report.aggregate.mean_success, report.aggregate.stderr
        );
        points.push((
            flops as f64,
            report.aggregate.mean_success,
            format!("K={k}"),
        ));
        aggregates.push(report.aggregate);
    }
    fs::create_dir_all(&cfg.out_dir)?;
    fs::write(cfg.out_dir.join("freq_sweep.csv"), csv)?;
    svg::line_chart(
        &cfg.out_dir.join("freq_sweep.svg"),
        "success vs inference compute",
        "inference FLOPs per episode",
        "success rate",
        &points,
    )?;
    let args = format!(
        "k={}",
        horizons
            .iter()
            .map(|k| k.to_string())
            .collect::<Vec<_>>()
            .join(",")
    );
    write_manifest("freq-sweep", &args, cfg, &cfg.out_dir)?;
    Ok(aggregates)
}

pub fn cmd_flops(cfg: &RunConfig) -> Result<PathBuf> {
    let reference = FlopModel::default();
    let mut csv =
        String::from("row,width,hidden_layers,episode_len,grad_steps,ttt_period,flops,matched_width\n");
    let _ = writeln!(
        csv,
        "forward_pass,512,2,,,,{},",
        reference.forward_cost()
    );
    let frozen = FlopModel {
        ttt_period: None,
        ..reference.clone()
    };
    let _ = writeln!(
        csv,
        "frozen_episode,512,2,1000,,,{},{}",
        frozen.episode_cost_frozen(),
        frozen.matched_width(frozen.episode_cost_frozen() as f64)
    );
    for k in [1000u64, 500, 200] {
        let m = FlopModel {
            ttt_period: Some(k),
            ..reference.clone()
        };
        let cost = m.episode_cost_ttt();
        let _ = writeln!(
            csv,
            "ttt_episode,512,2,1000,100,{k},{cost},{}",
            frozen.matched_width(cost as f64)
        );
    }
    // widths that the rounded literature budgets invert to
    for target in [1.6e9, 2.2e9, 4.0e9] {
        let _ = writeln!(
            csv,
            "rounded_target,,,1000,,,{},{}",
            target as u128,
            frozen.matched_width(target)
        );
    }
    // the configured desk-scale point, for context
    let desk = FlopModel {
        width: cfg.backbone.hidden_width as u64,
        hidden_layers: cfg.backbone.hidden_layers as u64,
        episode_len: cfg.env.episode_cap as u64,
        grad_steps_per_cycle: cfg.ttt.n_grad_steps as u64,
        ttt_period: Some(cfg.ttt.k as u64),
        backward_multiplier: 2,
        critic_same_size: true,
    };
    let _ = writeln!(
        csv,
        "configured_ttt,{},{},{},{},{},{},",
        desk.width,
        desk.hidden_layers,
        desk.episode_len,
        desk.grad_steps_per_cycle,
        cfg.ttt.k,
        desk.episode_cost_ttt()
    );
    fs::create_dir_all(&cfg.out_dir)?;
    let path = cfg.out_dir.join("flops.csv");
    fs::write(&path, csv)?;
    write_manifest("flops", "", cfg, &cfg.out_dir)?;
    Ok(path)
}
