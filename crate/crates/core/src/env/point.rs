//! Continuous point maze: positions anywhere in free space, velocity-free
//! dynamics `pos += action` with axis-separated wall collision.

use super::{pick_start, reset_rng, GoalEnv, MazeKind, MazeLayout, Obs, StepOutcome};
use rand::Rng;
use std::sync::Arc;

/// Fraction of a cell the agent may travel per step and per axis.
const ACTION_BOUND_CELLS: f64 = 0.5;
/// Gap left between the agent and a wall face on contact, in cells.
const CONTACT_MARGIN_CELLS: f64 = 1e-3;
/// Start jitter spans the central 80% of the start cell.
const JITTER_CELLS: f64 = 0.4;

#[derive(Debug, Clone)]
pub struct PointMaze {
    layout: Arc<MazeLayout>,
    episode_cap: usize,
}

impl PointMaze {
    pub fn new(layout: Arc<MazeLayout>, episode_cap: usize) -> Self {
        Self {
            layout,
            episode_cap,
        }
    }

    pub fn contact_margin(&self) -> f64 {
        CONTACT_MARGIN_CELLS * self.layout.cell_size()
    }

    /// Slides along one axis, clamping at the first wall face crossed.
    /// `axis` 0 moves x (walls checked in the current row), 1 moves y.
    fn slide(&self, pos: Obs, axis: usize, delta: f64) -> f64 {
        let cs = self.layout.cell_size();
        let margin = self.contact_margin();
        let target = pos[axis] + delta;
        if delta == 0.0 {
            return pos[axis];
        }
        let dir: isize = if delta > 0.0 { 1 } else { -1 };
        let cross = self.layout.cell_of(&pos);
        let mut along = if axis == 0 { cross.1 } else { cross.0 } as isize;
        loop {
            let boundary = if dir > 0 { along + 1 } else { along } as f64 * cs;
            let crossed = if dir > 0 {
                target >= boundary
            } else {
                target <= boundary
            };
            if !crossed {
                return target;
            }
            let next = along + dir;
            let next_cell = if axis == 0 {
                (cross.0 as isize, next)
            } else {
                (next, cross.1 as isize)
            };
            let blocked = next_cell.0 < 0
                || next_cell.1 < 0
                || self
                    .layout
                    .is_wall((next_cell.0 as usize, next_cell.1 as usize));
            if blocked {
                return boundary - dir as f64 * margin;
            }
            along = next;
        }
    }
}

impl GoalEnv for PointMaze {
    fn kind(&self) -> MazeKind {
        MazeKind::Point
    }

    fn layout(&self) -> &MazeLayout {
        &self.layout
    }

    fn action_bound(&self) -> f64 {
        ACTION_BOUND_CELLS * self.layout.cell_size()
    }

    fn episode_cap(&self) -> usize {
        self.episode_cap
    }

    fn eps(&self) -> f64 {
        0.5 * self.layout.cell_size()
    }

    /// Uniform over start cells, then uniform jitter within the cell
    /// (x drawn before y).
    fn reset(&self, seed: u64) -> Obs {
        let mut rng = reset_rng(seed);
        let cell = pick_start(&self.layout, &mut rng);
        let center = self.layout.cell_center(cell);
        let cs = self.layout.cell_size();
        let jx: f64 = rng.gen_range(-JITTER_CELLS..JITTER_CELLS) * cs;
        let jy: f64 = rng.gen_range(-JITTER_CELLS..JITTER_CELLS) * cs;
        [center[0] + jx, center[1] + jy]
    }

    fn step(&self, obs: Obs, action: [f64; 2]) -> StepOutcome {
        let bound = self.action_bound();
        let clipped = action.iter().any(|a| a.abs() > bound);
        let a = [
            action[0].clamp(-bound, bound),
            action[1].clamp(-bound, bound),
        ];
        // resolve x first, then y from the updated position
        let x = self.slide(obs, 0, a[0]);
        let mid = [x, obs[1]];
        let y = self.slide(mid, 1, a[1]);
        StepOutcome {
            obs: [x, y],
            clipped,
        }
    }
}
