//! Deterministic goal-reaching maze environments.
//!
//! Two environments share one wall layout: a discrete [`GridMaze`] whose
//! states are cell centers (used for exact brute-force oracles) and a
//! continuous [`PointMaze`] (the main experiment environment). Both expose
//! Euclidean distance on (x, y), a success threshold `eps`, and the sparse
//! reward `-1` if `d(s, g) >= eps`, else `0`.

mod grid;
mod point;

pub use grid::{GridAction, GridMaze};
pub use point::PointMaze;

use crate::{seeding, Error, Result};
use std::collections::VecDeque;
use std::fmt;

/// Observation / goal coordinates. Both mazes are planar.
pub type Obs = [f64; 2];

/// Euclidean distance on (x, y).
pub fn distance(a: &[f64], b: &[f64]) -> f64 {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    (dx * dx + dy * dy).sqrt()
}

/// Sparse goal reward: `-1` if `d(s, g) >= eps` (strict success band), else `0`.
pub fn reward(s: &[f64], g: &[f64], eps: f64) -> f64 {
    if distance(s, g) >= eps {
        -1.0
    } else {
        0.0
    }
}

pub fn is_success(s: &[f64], g: &[f64], eps: f64) -> bool {
    reward(s, g, eps) == 0.0
}

/// A commanded goal with its success threshold.
#[derive(Debug, Clone, PartialEq)]
pub struct GoalSpec {
    pub goal: Obs,
    pub eps: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MazeKind {
    Grid,
    Point,
}

impl fmt::Display for MazeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MazeKind::Grid => write!(f, "grid"),
            MazeKind::Point => write!(f, "point"),
        }
    }
}

/// Result of one environment step. `clipped` reports whether the raw action
/// had to be clipped into the action box (out-of-range actions are legal and
/// merely counted by callers).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOutcome {
    pub obs: Obs,
    pub clipped: bool,
}

/// Common surface of the two mazes. Stepping is a pure function of
/// `(layout, state, action)`, so episodes parallelize freely.
pub trait GoalEnv: Send + Sync {
    fn kind(&self) -> MazeKind;
    fn layout(&self) -> &MazeLayout;
    /// Per-component action box `[-bound, bound]`.
    fn action_bound(&self) -> f64;
    fn episode_cap(&self) -> usize;
    /// Success threshold of the sparse reward.
    fn eps(&self) -> f64;
    fn reset(&self, seed: u64) -> Obs;
    fn step(&self, obs: Obs, action: [f64; 2]) -> StepOutcome;

    fn name(&self) -> String {
        format!("{}/{}", self.kind(), self.layout().name())
    }

    /// The four annotated evaluation goals of the layout.
    fn eval_goals(&self) -> Result<Vec<GoalSpec>> {
        let layout = self.layout();
        if layout.goals().len() != 4 {
            return Err(Error::config(format!(
                "layout `{}` annotates {} eval goals, expected 4",
                layout.name(),
                layout.goals().len()
            )));
        }
        Ok(layout
            .goals()
            .iter()
            .map(|&cell| GoalSpec {
                goal: layout.cell_center(cell),
                eps: self.eps(),
            })
            .collect())
    }
}

/// Wall grid shared by both environments.
///
/// Text format: a header line `gcttt-maze v1 <rows> <cols> <cell_size>`
/// followed by `rows` lines of `#` (wall), `.` (free), `S` (start, free) and
/// `G` (eval goal, free), row-major, top row first.
#[derive(Debug, Clone, PartialEq)]
pub struct MazeLayout {
    name: String,
    rows: usize,
    cols: usize,
    cell_size: f64,
    walls: Vec<bool>,
    starts: Vec<(usize, usize)>,
    goals: Vec<(usize, usize)>,
}

/// The shipped desk-scale layout: an 11x11 maze with corner-ish eval goals
/// and two designated starts.
pub const MEDIUM_LAYOUT: &str = "\
gcttt-maze v1 11 11 1.0
###########
#G..#....G#
#.#.#.###.#
#.#...#...#
#.###.#.#.#
#...#S..#.#
#.#.###.#.#
#.#...#..S#
#.###.#.###
#G....#..G#
###########
";

impl MazeLayout {
    pub fn parse(name: &str, text: &str) -> Result<Self> {
        let mut lines = text.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::config("empty layout file"))?;
        let fields: Vec<&str> = header.split_whitespace().collect();
        if fields.len() != 5 || fields[0] != "gcttt-maze" || fields[1] != "v1" {
            return Err(Error::config(format!(
                "bad layout header `{header}` (want `gcttt-maze v1 rows cols cell_size`)"
            )));
        }
        let rows: usize = fields[2]
            .parse()
            .map_err(|_| Error::config("bad rows in layout header"))?;
        let cols: usize = fields[3]
            .parse()
            .map_err(|_| Error::config("bad cols in layout header"))?;
        let cell_size: f64 = fields[4]
            .parse()
            .map_err(|_| Error::config("bad cell_size in layout header"))?;
        if cell_size <= 0.0 || !cell_size.is_finite() {
            return Err(Error::config("cell_size must be positive"));
        }

        let mut walls = vec![false; rows * cols];
        let mut starts = Vec::new();
        let mut goals = Vec::new();
        let mut seen_rows = 0;
        for (r, line) in lines.enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            if r >= rows {
                return Err(Error::config("layout has more rows than declared"));
            }
            let chars: Vec<char> = line.chars().collect();
            if chars.len() != cols {
                return Err(Error::config(format!(
                    "layout row {r} has {} cells, expected {cols}",
                    chars.len()
                )));
            }
            for (c, ch) in chars.iter().enumerate() {
                match ch {
                    '#' => walls[r * cols + c] = true,
                    '.' => {}
                    'S' => starts.push((r, c)),
                    'G' => goals.push((r, c)),
                    other => {
                        return Err(Error::config(format!(
                            "unexpected layout character `{other}` at ({r}, {c})"
                        )))
                    }
                }
            }
            seen_rows += 1;
        }
        if seen_rows != rows {
            return Err(Error::config(format!(
                "layout has {seen_rows} rows, expected {rows}"
            )));
        }

        let layout = Self {
            name: name.to_string(),
            rows,
            cols,
            cell_size,
            walls,
            starts,
            goals,
        };
        layout.validate()?;
        Ok(layout)
    }

    /// Builtin layouts by name (currently `medium`).
    pub fn builtin(name: &str) -> Result<Self> {
        match name {
            "medium" => Self::parse("medium", MEDIUM_LAYOUT),
            other => Err(Error::config(format!("unknown builtin layout `{other}`"))),
        }
    }

    fn validate(&self) -> Result<()> {
        for r in 0..self.rows {
            for c in 0..self.cols {
                let border = r == 0 || c == 0 || r == self.rows - 1 || c == self.cols - 1;
                if border && !self.is_wall((r, c)) {
                    return Err(Error::config(format!(
                        "border cell ({r}, {c}) must be a wall"
                    )));
                }
            }
        }
        let free = self.free_cells();
        if free.len() < 2 {
            return Err(Error::config("layout needs at least 2 free cells"));
        }
        if self.starts.is_empty() {
            return Err(Error::config("layout annotates no start cells"));
        }
        // free region must be connected
        let dist = self.bfs_from(free[0]);
        for &cell in &free {
            if dist[self.cell_index(cell)].is_none() {
                return Err(Error::config(format!(
                    "free region is disconnected at {cell:?}"
                )));
            }
        }
        Ok(())
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn cell_size(&self) -> f64 {
        self.cell_size
    }

    pub fn starts(&self) -> &[(usize, usize)] {
        &self.starts
    }

    pub fn goals(&self) -> &[(usize, usize)] {
        &self.goals
    }

    fn cell_index(&self, (r, c): (usize, usize)) -> usize {
        r * self.cols + c
    }

    pub fn is_wall(&self, (r, c): (usize, usize)) -> bool {
        if r >= self.rows || c >= self.cols {
            return true;
        }
        self.walls[r * self.cols + c]
    }

    pub fn is_free(&self, cell: (usize, usize)) -> bool {
        !self.is_wall(cell)
    }

    pub fn free_cells(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for r in 0..self.rows {
            for c in 0..self.cols {
                if !self.walls[r * self.cols + c] {
                    out.push((r, c));
                }
            }
        }
        out
    }

    /// Center of a cell in maze coordinates: `x = (col + 0.5) * cell_size`,
    /// `y = (row + 0.5) * cell_size` (y grows downward with the row index).
    pub fn cell_center(&self, (r, c): (usize, usize)) -> Obs {
        [
            (c as f64 + 0.5) * self.cell_size,
            (r as f64 + 0.5) * self.cell_size,
        ]
    }

    /// Cell containing a position (positions exactly on a boundary belong to
    /// the higher-index cell), clamped into the grid.
    pub fn cell_of(&self, obs: &[f64]) -> (usize, usize) {
        let clamp = |v: f64, n: usize| -> usize {
            let idx = (v / self.cell_size).floor();
            if idx < 0.0 {
                0
            } else if idx as usize >= n {
                n - 1
            } else {
                idx as usize
            }
        };
        (clamp(obs[1], self.rows), clamp(obs[0], self.cols))
    }

    /// 4-neighbors of a cell that are free, in N, E, S, W order.
    pub fn free_neighbors(&self, (r, c): (usize, usize)) -> Vec<(usize, usize)> {
        let mut out = Vec::with_capacity(4);
        if r > 0 && self.is_free((r - 1, c)) {
            out.push((r - 1, c));
        }
        if self.is_free((r, c + 1)) {
            out.push((r, c + 1));
        }
        if self.is_free((r + 1, c)) {
            out.push((r + 1, c));
        }
        if c > 0 && self.is_free((r, c - 1)) {
            out.push((r, c - 1));
        }
        out
    }

    /// BFS step-distance field from `from` over free cells (`None` =
    /// unreachable or wall).
    pub fn bfs_from(&self, from: (usize, usize)) -> Vec<Option<u32>> {
        let mut dist = vec![None; self.rows * self.cols];
        if self.is_wall(from) {
            return dist;
        }
        dist[self.cell_index(from)] = Some(0);
        let mut queue = VecDeque::from([from]);
        while let Some(cell) = queue.pop_front() {
            let d = dist[self.cell_index(cell)].unwrap();
            for nb in self.free_neighbors(cell) {
                let idx = self.cell_index(nb);
                if dist[idx].is_none() {
                    dist[idx] = Some(d + 1);
                    queue.push_back(nb);
                }
            }
        }
        dist
    }

    /// BFS distance between two cells.
    pub fn bfs_distance(&self, from: (usize, usize), to: (usize, usize)) -> Option<u32> {
        self.bfs_from(from)[self.cell_index(to)]
    }
}

/// Uniformly picks a start cell; shared by both envs so grid and point
/// resets with equal seeds agree on the cell.
pub(crate) fn pick_start(layout: &MazeLayout, rng: &mut rand_chacha::ChaCha8Rng) -> (usize, usize) {
    use rand::Rng;
    let starts = layout.starts();
    starts[rng.gen_range(0..starts.len())]
}

pub(crate) fn reset_rng(seed: u64) -> rand_chacha::ChaCha8Rng {
    seeding::rng(seed)
}
