use std::collections::VecDeque;
use std::path::Path;

use rand::Rng;

use super::{Action, ActionDist, ActionSpace, Environment, RolloutOptions, TaskVariable, Trajectory};
use crate::error::{Error, Result};
use crate::rng::{stream, SimRng};

/// Layout shipped with the crate: two 3x3 puddle blocks placed symmetrically
/// about both diagonals, goals at (0,0) and (10,10).
pub const DEFAULT_LAYOUT: &str = include_str!("../../data/default_grid.txt");

pub const DEFAULT_GRID_HORIZON: usize = 60;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct GridState {
    pub x: i64,
    pub y: i64,
}

impl GridState {
    pub fn new(x: i64, y: i64) -> Self {
        Self { x, y }
    }

    pub fn to_vec(self) -> Vec<f64> {
        vec![self.x as f64, self.y as f64]
    }

    pub fn from_slice(s: &[f64]) -> Result<Self> {
        match s {
            [x, y] if x.fract() == 0.0 && y.fract() == 0.0 => Ok(Self::new(*x as i64, *y as i64)),
            _ => Err(Error::InvalidWorld(format!("{s:?} is not a grid state"))),
        }
    }
}

/// Move directions, listed in expert tie-break priority order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GridAction {
    Right,
    Up,
    Left,
    Down,
}

impl GridAction {
    pub const ALL: [GridAction; 4] = [GridAction::Right, GridAction::Up, GridAction::Left, GridAction::Down];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Result<Self> {
        Self::ALL
            .get(i)
            .copied()
            .ok_or_else(|| Error::InvalidAction(format!("grid action index {i}")))
    }

    pub fn from_one_hot(v: &[f64]) -> Result<Self> {
        if v.len() != 4 {
            return Err(Error::InvalidAction(format!("grid action needs 4 entries, got {}", v.len())));
        }
        let task = TaskVariable::from_one_hot(v).map_err(|_| Error::InvalidAction(format!("{v:?} is not one-hot")))?;
        Self::from_index(task.index())
    }

    pub fn one_hot(self) -> Vec<f64> {
        let mut v = vec![0.0; 4];
        v[self.index()] = 1.0;
        v
    }

    pub fn delta(self) -> (i64, i64) {
        match self {
            GridAction::Right => (1, 0),
            GridAction::Up => (0, 1),
            GridAction::Left => (-1, 0),
            GridAction::Down => (0, -1),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridWorld {
    width: usize,
    height: usize,
    puddle: Vec<bool>,
    goals: Vec<GridState>,
    horizon: usize,
}

impl GridWorld {
    /// Parses a layout: one row per line, line `i` is `y = i`; `.` free,
    /// `#` puddle, `1`..`9` the goal of that task.
    pub fn parse(text: &str, horizon: usize) -> Result<Self> {
        let rows: Vec<&str> = text.lines().map(str::trim_end).filter(|l| !l.is_empty()).collect();
        if rows.is_empty() {
            return Err(Error::InvalidWorld("empty layout".into()));
        }
        let width = rows[0].chars().count();
        let height = rows.len();
        let mut puddle = vec![false; width * height];
        let mut goals: Vec<Option<GridState>> = Vec::new();
        for (y, row) in rows.iter().enumerate() {
            if row.chars().count() != width {
                return Err(Error::InvalidWorld(format!("row {y} has a different width")));
            }
            for (x, ch) in row.chars().enumerate() {
                match ch {
                    '.' => {}
                    '#' => puddle[y * width + x] = true,
                    '1'..='9' => {
                        let k = ch as usize - '1' as usize;
                        if goals.len() <= k {
                            goals.resize(k + 1, None);
                        }
                        if goals[k].is_some() {
                            return Err(Error::InvalidWorld(format!("goal {ch} appears twice")));
                        }
                        goals[k] = Some(GridState::new(x as i64, y as i64));
                    }
                    other => return Err(Error::InvalidWorld(format!("unknown layout character '{other}'"))),
                }
            }
        }
        let goals = goals
            .into_iter()
            .enumerate()
            .map(|(k, g)| g.ok_or_else(|| Error::InvalidWorld(format!("goal {} missing", k + 1))))
            .collect::<Result<Vec<_>>>()?;
        Self::new(width, height, puddle, goals, horizon)
    }

    pub fn new(width: usize, height: usize, puddle: Vec<bool>, goals: Vec<GridState>, horizon: usize) -> Result<Self> {
        if puddle.len() != width * height {
            return Err(Error::InvalidWorld("puddle mask size mismatch".into()));
        }
        if goals.is_empty() {
            return Err(Error::InvalidWorld("no goals".into()));
        }
        let world = Self {
            width,
            height,
            puddle,
            goals,
            horizon,
        };
        for g in &world.goals {
            if !world.is_free(*g) {
                return Err(Error::InvalidWorld(format!("goal ({}, {}) is not a free cell", g.x, g.y)));
            }
        }
        for k in 0..world.goals.len() {
            let dist = world.distance_map(k);
            if let Some(s) = world.free_cells().into_iter().find(|s| dist[world.cell(*s)].is_none()) {
                return Err(Error::Unreachable { x: s.x, y: s.y });
            }
        }
        Ok(world)
    }

    pub fn default_world() -> Self {
        Self::parse(DEFAULT_LAYOUT, DEFAULT_GRID_HORIZON).expect("shipped layout is valid")
    }

    pub fn load(path: &Path, horizon: usize) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?, horizon)
    }

    pub fn with_horizon(mut self, horizon: usize) -> Self {
        self.horizon = horizon;
        self
    }

    pub fn to_layout_string(&self) -> String {
        let mut out = String::new();
        for y in 0..self.height as i64 {
            for x in 0..self.width as i64 {
                let s = GridState::new(x, y);
                let ch = if let Some(k) = self.goals.iter().position(|g| *g == s) {
                    char::from(b'1' + k as u8)
                } else if self.is_puddle(s) {
                    '#'
                } else {
                    '.'
                };
                out.push(ch);
            }
            out.push('\n');
        }
        out
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn goals(&self) -> &[GridState] {
        &self.goals
    }

    pub fn goal(&self, task: &TaskVariable) -> GridState {
        self.goals[task.index()]
    }

    pub fn in_bounds(&self, s: GridState) -> bool {
        s.x >= 0 && s.y >= 0 && (s.x as usize) < self.width && (s.y as usize) < self.height
    }

    pub fn is_puddle(&self, s: GridState) -> bool {
        self.in_bounds(s) && self.puddle[self.cell(s)]
    }

    pub fn is_free(&self, s: GridState) -> bool {
        self.in_bounds(s) && !self.puddle[self.cell(s)]
    }

    pub(crate) fn cell(&self, s: GridState) -> usize {
        s.y as usize * self.width + s.x as usize
    }

    pub fn free_cells(&self) -> Vec<GridState> {
        (0..self.height as i64)
            .flat_map(|y| (0..self.width as i64).map(move |x| GridState::new(x, y)))
            .filter(|s| self.is_free(*s))
            .collect()
    }

    /// Deterministic move; blocked moves (puddle or boundary) stay in place.
    pub fn next_cell(&self, s: GridState, a: GridAction) -> GridState {
        let (dx, dy) = a.delta();
        let next = GridState::new(s.x + dx, s.y + dy);
        if self.is_free(next) {
            next
        } else {
            s
        }
    }

    /// [`GridWorld::step`] with a one-hot action vector.
    pub fn grid_step(&self, s: GridState, action: &[f64]) -> Result<GridState> {
        Ok(self.next_cell(s, GridAction::from_one_hot(action)?))
    }

    /// BFS step counts to the goal of task `k` (`None` for puddles).
    pub fn distance_map(&self, k: usize) -> Vec<Option<usize>> {
        let mut dist = vec![None; self.width * self.height];
        let goal = self.goals[k];
        dist[self.cell(goal)] = Some(0);
        let mut queue = VecDeque::from([goal]);
        while let Some(s) = queue.pop_front() {
            let d = dist[self.cell(s)].expect("queued cells have a distance");
            // moves are reversible on a grid: a neighbor n reaches s in one step
            for a in GridAction::ALL {
                let n = self.next_cell(s, a);
                if n != s && dist[self.cell(n)].is_none() {
                    dist[self.cell(n)] = Some(d + 1);
                    queue.push_back(n);
                }
            }
        }
        dist
    }
}

impl Environment for GridWorld {
    fn state_dim(&self) -> usize {
        2
    }

    fn action_space(&self) -> ActionSpace {
        ActionSpace::Discrete(4)
    }

    fn horizon(&self) -> usize {
        self.horizon
    }

    fn n_tasks(&self) -> usize {
        self.goals.len()
    }

    /// Uniform over free cells other than the task's goal.
    fn sample_start(&self, task: &TaskVariable, rng: &mut SimRng) -> Vec<f64> {
        let goal = self.goal(task);
        let cells: Vec<GridState> = self.free_cells().into_iter().filter(|s| *s != goal).collect();
        cells[rng.random_range(0..cells.len())].to_vec()
    }

    fn step(&self, state: &[f64], action: &Action) -> Result<Vec<f64>> {
        let s = GridState::from_slice(state)?;
        if !self.is_free(s) {
            return Err(Error::InvalidWorld(format!("({}, {}) is not a free cell", s.x, s.y)));
        }
        match action {
            Action::Discrete(i) => Ok(self.next_cell(s, GridAction::from_index(*i)?).to_vec()),
            Action::Continuous(v) => Ok(self.grid_step(s, v)?.to_vec()),
        }
    }

    fn is_success(&self, state: &[f64], task: &TaskVariable) -> bool {
        GridState::from_slice(state).map(|s| s == self.goal(task)).unwrap_or(false)
    }

    /// Coordinates scaled to [-1, 1].
    fn features(&self, state: &[f64]) -> Vec<f64> {
        let sx = (self.width.max(2) - 1) as f64;
        let sy = (self.height.max(2) - 1) as f64;
        vec![2.0 * state[0] / sx - 1.0, 2.0 * state[1] / sy - 1.0]
    }

    fn sweep_starts(&self, task: &TaskVariable) -> Option<Vec<Vec<f64>>> {
        let goal = self.goal(task);
        Some(self.free_cells().into_iter().filter(|s| *s != goal).map(GridState::to_vec).collect())
    }
}

/// Shortest-path demonstrator: among moves that lower the BFS distance to the
/// goal, takes the first in right, up, left, down order.
#[derive(Debug, Clone)]
pub struct GridExpert<'a> {
    world: &'a GridWorld,
    distances: Vec<Vec<Option<usize>>>,
}

impl<'a> GridExpert<'a> {
    pub fn new(world: &'a GridWorld) -> Self {
        let distances = (0..world.goals.len()).map(|k| world.distance_map(k)).collect();
        Self { world, distances }
    }

    pub fn action(&self, s: GridState, task: &TaskVariable) -> Result<GridAction> {
        let dist = &self.distances[task.index()];
        let d = dist[self.world.cell(s)].ok_or(Error::Unreachable { x: s.x, y: s.y })?;
        GridAction::ALL
            .into_iter()
            .find(|&a| {
                let n = self.world.next_cell(s, a);
                n != s && dist[self.world.cell(n)] == Some(d.wrapping_sub(1))
            })
            .ok_or(Error::Unreachable { x: s.x, y: s.y })
    }

    /// The expert as a deterministic conditional policy.
    pub fn policy(&self) -> impl FnMut(&[f64], &TaskVariable) -> Result<ActionDist> + '_ {
        move |state, task| {
            let a = self.action(GridState::from_slice(state)?, task)?;
            let mut p = vec![0.0; 4];
            p[a.index()] = 1.0;
            Ok(ActionDist::Categorical(p))
        }
    }

    pub fn demonstrate(&self, start: GridState, task: &TaskVariable) -> Result<Trajectory> {
        let dist = self.distances[task.index()][self.world.cell(start)].ok_or(Error::Unreachable { x: start.x, y: start.y })?;
        if dist > self.world.horizon {
            return Err(Error::ExpertFailed(format!("shortest path of {dist} exceeds the horizon")));
        }
        let opts = RolloutOptions {
            start: Some(start.to_vec()),
            greedy: true,
        };
        let mut rng = stream(0, 0);
        super::rollout(self.world, self.policy(), task, &mut rng, &opts)
    }
}

/// `n` shortest-path demonstrations from uniformly sampled non-goal free cells.
pub fn expert_grid(world: &GridWorld, task: &TaskVariable, n: usize, seed: u64) -> Result<Vec<Trajectory>> {
    let expert = GridExpert::new(world);
    let mut rng = stream(seed, 0x4558_5047);
    (0..n)
        .map(|_| {
            let start = GridState::from_slice(&world.sample_start(task, &mut rng))?;
            expert.demonstrate(start, task)
        })
        .collect()
}
