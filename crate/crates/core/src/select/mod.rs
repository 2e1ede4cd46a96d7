//! Test-time data selection.
//!
//! Given the agent's current state `s` and evaluation goal `g*`, selection
//! produces the set of sub-trajectory windows to fine-tune on:
//!
//! 1. **Relevance**: windows whose start state lies within `eps` of `s`
//!    (or, in value mode, whose start clears `V(s, s_1) > c_rel`).
//! 2. **Scoring**: each window gets an H-step return — discounted rewards
//!    along its states plus a discounted critic bootstrap at its final
//!    state — or, critic-free, the plain discounted reward sum over the
//!    window extended toward the trajectory end (capped at `2H`) so goal
//!    hits stay visible.
//! 3. **Optimality**: the quantile threshold `C` at level `q` is
//!    interpolated linearly between order statistics and every window with
//!    return `>= C` is retained (literal reading; a `top_fraction` flag
//!    flips to keeping only the top `q` fraction).
//!
//! Discount powers are accumulated by running products; the brute-force
//! oracles in the test suite follow the same documented convention so set
//! comparisons are exact.

use crate::data::{OfflineDataset, WindowIndex};
use crate::env::reward;
use crate::nn::ParamStore;
use crate::{Error, Result};
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SelectionMode {
    /// Relevance then optimality with H-step returns.
    Full,
    /// Relevance then optimality with trajectory returns (no critic).
    CriticFree,
    /// Relevance only.
    RelevantOnly,
    /// Optimality over every window, no relevance.
    OptimalOnly,
    /// Uniform windows, count-matched to what `Full` would select.
    Random,
}

impl SelectionMode {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "full" => Ok(SelectionMode::Full),
            "critic_free" => Ok(SelectionMode::CriticFree),
            "relevant_only" => Ok(SelectionMode::RelevantOnly),
            "optimal_only" => Ok(SelectionMode::OptimalOnly),
            "random" => Ok(SelectionMode::Random),
            other => Err(Error::config(format!("unknown selection mode `{other}`"))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            SelectionMode::Full => "full",
            SelectionMode::CriticFree => "critic_free",
            SelectionMode::RelevantOnly => "relevant_only",
            SelectionMode::OptimalOnly => "optimal_only",
            SelectionMode::Random => "random",
        }
    }

    pub fn needs_critic(&self) -> bool {
        matches!(
            self,
            SelectionMode::Full | SelectionMode::OptimalOnly | SelectionMode::Random
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RelevanceKind {
    /// `d(s, s_1) < eps`.
    Distance,
    /// `V(s, s_1) > c_rel` (temporal-distance proxy from the critic).
    Value,
}

impl RelevanceKind {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "distance" => Ok(RelevanceKind::Distance),
            "value" => Ok(RelevanceKind::Value),
            other => Err(Error::config(format!("unknown relevance kind `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SelectionConfig {
    /// Relevance radius (distance mode).
    pub eps: f64,
    /// Window horizon H, in states.
    pub horizon: usize,
    /// Optimality percentile level in [0, 1).
    pub quantile: f64,
    pub mode: SelectionMode,
    pub relevance: RelevanceKind,
    /// Discount for return estimates.
    pub gamma: f64,
    /// Alternative reading of the percentile filter: retain only the top
    /// `quantile` fraction instead of everything above the q-th percentile.
    pub top_fraction: bool,
    /// Relevance threshold for value mode.
    pub value_c_rel: f64,
}

impl SelectionConfig {
    pub fn new(mode: SelectionMode) -> Self {
        Self {
            eps: 0.5,
            horizon: 50,
            quantile: 0.2,
            mode,
            relevance: RelevanceKind::Distance,
            gamma: 0.99,
            top_fraction: false,
            value_c_rel: -20.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.eps <= 0.0 || !self.eps.is_finite() {
            return Err(Error::config("relevance eps must be positive"));
        }
        if self.horizon < 1 {
            return Err(Error::config("selection horizon must be >= 1"));
        }
        if !(0.0..1.0).contains(&self.quantile) {
            return Err(Error::config("quantile must lie in [0, 1)"));
        }
        if !(0.0 < self.gamma && self.gamma < 1.0) {
            return Err(Error::config("gamma must lie in (0, 1)"));
        }
        Ok(())
    }

    /// Critic-free windows run to the trajectory end, capped at `2H`.
    pub fn critic_free_horizon(&self) -> usize {
        self.horizon * 2
    }
}

/// A sub-trajectory window: `len` states of trajectory `traj` starting at
/// offset `start`, with the `len - 1` leading actions paired to the first
/// `len - 1` states.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct Window {
    pub traj: u32,
    pub start: u32,
    pub len: u32,
}

impl Window {
    fn new(ds: &OfflineDataset, traj: u32, start: u32, horizon: usize) -> Self {
        let n_states = ds.traj(traj as usize).n_states();
        debug_assert!((start as usize) < n_states);
        let len = horizon.min(n_states - start as usize) as u32;
        Self { traj, start, len }
    }

    /// Number of (state, action) training pairs the window contributes.
    pub fn n_pairs(&self) -> usize {
        self.len.saturating_sub(1) as usize
    }
}

/// Result of one selection: retained windows with their return estimates,
/// the threshold used, and the relevant-set size before optimality.
#[derive(Debug, Clone, PartialEq)]
pub struct SelectionBatch {
    pub windows: Vec<Window>,
    pub returns: Vec<f64>,
    pub threshold: Option<f64>,
    pub n_relevant: usize,
}

impl SelectionBatch {
    pub fn n_selected(&self) -> usize {
        self.windows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.windows.is_empty()
    }

    fn empty() -> Self {
        Self {
            windows: Vec::new(),
            returns: Vec::new(),
            threshold: None,
            n_relevant: 0,
        }
    }
}

/// Critic value `V(s | g)` from a scalar-valued net over `s ++ g` rows.
pub fn critic_value(v_net: &ParamStore, s: &[f64], g: &[f64]) -> f64 {
    let mut input = Vec::with_capacity(s.len() + g.len());
    input.extend_from_slice(s);
    input.extend_from_slice(g);
    v_net.forward(&input)[0]
}

/// Relevance filter. Distance mode goes through the spatial index; value
/// mode scans all window starts and keeps those with `V(s, s_1) > c_rel`.
pub fn relevant_windows(
    ds: &OfflineDataset,
    index: &WindowIndex,
    s: &[f64],
    v_net: Option<&ParamStore>,
    cfg: &SelectionConfig,
) -> Result<Vec<Window>> {
    let horizon = match cfg.mode {
        SelectionMode::CriticFree => cfg.critic_free_horizon(),
        _ => cfg.horizon,
    };
    match cfg.relevance {
        RelevanceKind::Distance => Ok(index
            .query_ball(ds, s, cfg.eps)
            .into_iter()
            .map(|(i, t)| Window::new(ds, i, t, horizon))
            .collect()),
        RelevanceKind::Value => {
            let v = v_net.ok_or_else(|| {
                Error::config("value-based relevance requires a critic")
            })?;
            let mut out = Vec::new();
            for (i, traj) in ds.trajectories.iter().enumerate() {
                for t in 0..traj.n_states() {
                    if critic_value(v, s, traj.state(t)) > cfg.value_c_rel {
                        out.push(Window::new(ds, i as u32, t as u32, horizon));
                    }
                }
            }
            Ok(out)
        }
    }
}

/// Every window of the dataset at the configured horizon (used by the
/// optimal-only and random ablations).
pub fn all_windows(ds: &OfflineDataset, horizon: usize) -> Vec<Window> {
    let mut out = Vec::with_capacity(ds.n_states());
    for (i, traj) in ds.trajectories.iter().enumerate() {
        for t in 0..traj.n_states() {
            out.push(Window::new(ds, i as u32, t as u32, horizon));
        }
    }
    out
}

/// H-step return estimate: discounted rewards along the window's first
/// `len - 1` states plus the discounted critic value of the final state.
/// A single-state window evaluates to `V(s_1 | g)` exactly.
pub fn hstep_return(
    ds: &OfflineDataset,
    w: &Window,
    goal: &[f64],
    v_net: &ParamStore,
    gamma: f64,
    reward_eps: f64,
) -> f64 {
    let traj = ds.traj(w.traj as usize);
    let mut acc = 0.0;
    let mut gpow = 1.0;
    for i in 0..(w.len - 1) as usize {
        acc += gpow * reward(traj.state(w.start as usize + i), goal, reward_eps);
        gpow *= gamma;
    }
    acc + gpow * critic_value(v_net, traj.state((w.start + w.len - 1) as usize), goal)
}

/// Critic-free score: the discounted reward sum over all window states.
pub fn critic_free_return(
    ds: &OfflineDataset,
    w: &Window,
    goal: &[f64],
    gamma: f64,
    reward_eps: f64,
) -> f64 {
    let traj = ds.traj(w.traj as usize);
    let mut acc = 0.0;
    let mut gpow = 1.0;
    for i in 0..w.len as usize {
        acc += gpow * reward(traj.state(w.start as usize + i), goal, reward_eps);
        gpow *= gamma;
    }
    acc
}

/// Linear-interpolation quantile of `values` at `level`: with ascending
/// order statistics `x_0..x_{n-1}`, the threshold sits at rank
/// `level * (n - 1)`, interpolating `x_lo + frac * (x_hi - x_lo)`.
pub fn interpolated_quantile(values: &[f64], level: f64) -> f64 {
    assert!(!values.is_empty(), "quantile of empty set");
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("returns must be comparable"));
    let pos = level * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] + frac * (sorted[hi] - sorted[lo])
}

/// Percentile optimality filter: retains exactly the windows whose return
/// clears the interpolated quantile threshold. Empty input yields an empty
/// selection (callers decide the fallback).
pub fn optimality_filter(
    windows: Vec<Window>,
    returns: Vec<f64>,
    cfg: &SelectionConfig,
) -> SelectionBatch {
    assert_eq!(windows.len(), returns.len());
    if windows.is_empty() {
        return SelectionBatch::empty();
    }
    let n_relevant = windows.len();
    let level = if cfg.top_fraction {
        1.0 - cfg.quantile
    } else {
        cfg.quantile
    };
    let threshold = interpolated_quantile(&returns, level);
    let (kept, kept_returns): (Vec<Window>, Vec<f64>) = windows
        .into_iter()
        .zip(returns)
        .filter(|(_, r)| *r >= threshold)
        .unzip();
    SelectionBatch {
        windows: kept,
        returns: kept_returns,
        threshold: Some(threshold),
        n_relevant,
    }
}

fn score_hstep(
    ds: &OfflineDataset,
    windows: &[Window],
    goal: &[f64],
    v_net: &ParamStore,
    cfg: &SelectionConfig,
    reward_eps: f64,
) -> Vec<f64> {
    windows
        .iter()
        .map(|w| hstep_return(ds, w, goal, v_net, cfg.gamma, reward_eps))
        .collect()
}

/// The full selection operator (relevance and/or optimality per mode).
///
/// `rng` drives only the random ablation mode. Outputs are sorted by
/// `(trajectory, offset)`, so results are independent of evaluation order.
pub fn select(
    ds: &OfflineDataset,
    index: &WindowIndex,
    s: &[f64],
    goal: &[f64],
    v_net: Option<&ParamStore>,
    cfg: &SelectionConfig,
    reward_eps: f64,
    rng: &mut ChaCha8Rng,
) -> Result<SelectionBatch> {
    cfg.validate()?;
    if cfg.mode.needs_critic() && v_net.is_none() {
        return Err(Error::config(format!(
            "selection mode `{}` requires a critic",
            cfg.mode.name()
        )));
    }
    match cfg.mode {
        SelectionMode::RelevantOnly => {
            let windows = relevant_windows(ds, index, s, v_net, cfg)?;
            let returns = match v_net {
                Some(v) => score_hstep(ds, &windows, goal, v, cfg, reward_eps),
                None => windows
                    .iter()
                    .map(|w| critic_free_return(ds, w, goal, cfg.gamma, reward_eps))
                    .collect(),
            };
            let n_relevant = windows.len();
            Ok(SelectionBatch {
                windows,
                returns,
                threshold: None,
                n_relevant,
            })
        }
        SelectionMode::Full => {
            let windows = relevant_windows(ds, index, s, v_net, cfg)?;
            let returns = score_hstep(ds, &windows, goal, v_net.unwrap(), cfg, reward_eps);
            Ok(optimality_filter(windows, returns, cfg))
        }
        SelectionMode::CriticFree => {
            let windows = relevant_windows(ds, index, s, v_net, cfg)?;
            let returns: Vec<f64> = windows
                .iter()
                .map(|w| critic_free_return(ds, w, goal, cfg.gamma, reward_eps))
                .collect();
            Ok(optimality_filter(windows, returns, cfg))
        }
        SelectionMode::OptimalOnly => {
            let windows = all_windows(ds, cfg.horizon);
            let returns = score_hstep(ds, &windows, goal, v_net.unwrap(), cfg, reward_eps);
            Ok(optimality_filter(windows, returns, cfg))
        }
        SelectionMode::Random => {
            // budget fairness: match the cardinality of the full selection
            let full_cfg = SelectionConfig {
                mode: SelectionMode::Full,
                ..cfg.clone()
            };
            let full = select(ds, index, s, goal, v_net, &full_cfg, reward_eps, rng)?;
            let pool = all_windows(ds, cfg.horizon);
            let m = full.n_selected().min(pool.len());
            let mut picked = rand::seq::index::sample(rng, pool.len(), m).into_vec();
            picked.sort_unstable();
            let windows: Vec<Window> = picked.into_iter().map(|i| pool[i]).collect();
            let returns = score_hstep(ds, &windows, goal, v_net.unwrap(), cfg, reward_eps);
            Ok(SelectionBatch {
                windows,
                returns,
                threshold: None,
                n_relevant: pool.len(),
            })
        }
    }
}
