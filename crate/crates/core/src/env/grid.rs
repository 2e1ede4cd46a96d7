//! Discrete grid maze. States are free cells, observed as cell centers;
//! actions are the four moves plus stay, carried on the wire as displacement
//! vectors in cell units so the same policy machinery serves both mazes.

use super::{pick_start, reset_rng, GoalEnv, MazeKind, MazeLayout, Obs, StepOutcome};
use std::sync::Arc;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GridAction {
    North,
    East,
    South,
    West,
    Stay,
}

impl GridAction {
    pub const ALL: [GridAction; 5] = [
        GridAction::North,
        GridAction::East,
        GridAction::South,
        GridAction::West,
        GridAction::Stay,
    ];

    /// Displacement vector in cell units (y grows with the row index).
    pub fn encode(self) -> [f64; 2] {
        match self {
            GridAction::North => [0.0, -1.0],
            GridAction::East => [1.0, 0.0],
            GridAction::South => [0.0, 1.0],
            GridAction::West => [-1.0, 0.0],
            GridAction::Stay => [0.0, 0.0],
        }
    }

    /// Nearest discrete action to a (clipped) displacement vector: below
    /// half a cell of intent on both axes means stay; otherwise the dominant
    /// axis wins, x breaking exact ties.
    pub fn decode(v: [f64; 2]) -> Self {
        let (ax, ay) = (v[0].abs(), v[1].abs());
        if ax < 0.5 && ay < 0.5 {
            GridAction::Stay
        } else if ax >= ay {
            if v[0] > 0.0 {
                GridAction::East
            } else {
                GridAction::West
            }
        } else if v[1] > 0.0 {
            GridAction::South
        } else {
            GridAction::North
        }
    }

    pub fn apply(self, (r, c): (usize, usize)) -> (usize, usize) {
        match self {
            GridAction::North => (r.wrapping_sub(1), c),
            GridAction::East => (r, c + 1),
            GridAction::South => (r + 1, c),
            GridAction::West => (r, c.wrapping_sub(1)),
            GridAction::Stay => (r, c),
        }
    }
}

#[derive(Debug, Clone)]
pub struct GridMaze {
    layout: Arc<MazeLayout>,
    episode_cap: usize,
}

impl GridMaze {
    pub fn new(layout: Arc<MazeLayout>, episode_cap: usize) -> Self {
        Self {
            layout,
            episode_cap,
        }
    }

    /// Moves a cell; walls block (the agent stays put).
    pub fn step_cell(&self, cell: (usize, usize), action: GridAction) -> (usize, usize) {
        debug_assert!(self.layout.is_free(cell), "state must be in free space");
        let next = action.apply(cell);
        if self.layout.is_free(next) {
            next
        } else {
            cell
        }
    }

    pub fn obs_of(&self, cell: (usize, usize)) -> Obs {
        self.layout.cell_center(cell)
    }

    pub fn cell_of(&self, obs: &[f64]) -> (usize, usize) {
        self.layout.cell_of(obs)
    }
}

impl GoalEnv for GridMaze {
    fn kind(&self) -> MazeKind {
        MazeKind::Grid
    }

    fn layout(&self) -> &MazeLayout {
        &self.layout
    }

    fn action_bound(&self) -> f64 {
        1.0
    }

    fn episode_cap(&self) -> usize {
        self.episode_cap
    }

    /// Success means "same cell": half a cell size is below the minimal
    /// center-to-center distance of 1 cell.
    fn eps(&self) -> f64 {
        0.5 * self.layout.cell_size()
    }

    fn reset(&self, seed: u64) -> Obs {
        let mut rng = reset_rng(seed);
        self.obs_of(pick_start(&self.layout, &mut rng))
    }

    fn step(&self, obs: Obs, action: [f64; 2]) -> StepOutcome {
        let bound = self.action_bound();
        let clipped = action.iter().any(|a| a.abs() > bound);
        let v = [
            action[0].clamp(-bound, bound),
            action[1].clamp(-bound, bound),
        ];
        let cell = self.cell_of(&obs);
        let next = self.step_cell(cell, GridAction::decode(v));
        StepOutcome {
            obs: self.obs_of(next),
            clipped,
        }
    }
}
