//! Offline datasets: scripted generation, persistence, and the spatial
//! window index that backs relevance queries.

mod generate;
mod index;
mod store;

pub use generate::{generate_expert, generate_play};
pub use index::WindowIndex;
pub use store::{load_dataset, save_dataset};

use crate::env::MazeKind;
use crate::{Error, Result};
use std::fmt;

pub const OBS_DIM: usize = 2;
pub const ACTION_DIM: usize = 2;

/// Data-collection regime.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Regime {
    /// Goal-directed demonstrations between arbitrary state pairs.
    Expert,
    /// Short task-agnostic waypoint walks; solving evaluation tasks requires
    /// stitching segments from different trajectories.
    Play,
}

impl Regime {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "expert" => Ok(Regime::Expert),
            "play" => Ok(Regime::Play),
            other => Err(Error::config(format!("unknown regime `{other}`"))),
        }
    }
}

impl fmt::Display for Regime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Regime::Expert => write!(f, "expert"),
            Regime::Play => write!(f, "play"),
        }
    }
}

/// One recorded episode: `T + 1` states and `T` actions, flattened row-major.
/// Consecutive states replay exactly under the environment's `step` with the
/// recorded action.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    states: Vec<f64>,
    actions: Vec<f64>,
    source: Regime,
}

impl Trajectory {
    pub fn new(states: Vec<f64>, actions: Vec<f64>, source: Regime) -> Result<Self> {
        if states.len() % OBS_DIM != 0 || actions.len() % ACTION_DIM != 0 {
            return Err(Error::shape("trajectory buffers misaligned"));
        }
        let t = actions.len() / ACTION_DIM;
        if t < 1 {
            return Err(Error::config("trajectory must have at least one step"));
        }
        if states.len() / OBS_DIM != t + 1 {
            return Err(Error::shape(format!(
                "trajectory with {t} actions needs {} states, got {}",
                t + 1,
                states.len() / OBS_DIM
            )));
        }
        Ok(Self {
            states,
            actions,
            source,
        })
    }

    /// Number of transitions `T`.
    pub fn len(&self) -> usize {
        self.actions.len() / ACTION_DIM
    }

    #[allow(clippy::len_without_is_empty)] // empty trajectories are unrepresentable
    /// Number of stored states, `T + 1`.
    pub fn n_states(&self) -> usize {
        self.len() + 1
    }

    pub fn state(&self, t: usize) -> &[f64] {
        &self.states[t * OBS_DIM..(t + 1) * OBS_DIM]
    }

    pub fn action(&self, t: usize) -> &[f64] {
        &self.actions[t * ACTION_DIM..(t + 1) * ACTION_DIM]
    }

    pub fn last_state(&self) -> &[f64] {
        self.state(self.len())
    }

    pub fn source(&self) -> Regime {
        self.source
    }

    pub fn states_flat(&self) -> &[f64] {
        &self.states
    }

    pub fn actions_flat(&self) -> &[f64] {
        &self.actions
    }
}

/// Generation metadata carried alongside the trajectories (and persisted).
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetMeta {
    pub layout_name: String,
    pub env_kind: MazeKind,
    pub regime: Regime,
    pub seed: u64,
    /// Expert only: per-step probability of a random feasible action.
    pub noise: f64,
    /// Play only: waypoints per trajectory.
    pub n_waypoints: u32,
    /// Play only: max BFS length of one waypoint leg, in cells.
    pub leg_cap: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OfflineDataset {
    pub trajectories: Vec<Trajectory>,
    pub meta: DatasetMeta,
}

impl OfflineDataset {
    pub fn new(trajectories: Vec<Trajectory>, meta: DatasetMeta) -> Result<Self> {
        if trajectories.is_empty() {
            return Err(Error::config("dataset must contain trajectories"));
        }
        Ok(Self { trajectories, meta })
    }

    pub fn n_trajectories(&self) -> usize {
        self.trajectories.len()
    }

    /// Total transition count across trajectories.
    pub fn n_transitions(&self) -> usize {
        self.trajectories.iter().map(|t| t.len()).sum()
    }

    /// Total state count (window starts) across trajectories.
    pub fn n_states(&self) -> usize {
        self.trajectories.iter().map(|t| t.n_states()).sum()
    }

    pub fn traj(&self, i: usize) -> &Trajectory {
        &self.trajectories[i]
    }
}
