//! Tabular ground truth used by tests and diagnostics: soft value iteration,
//! shortest paths on the grid, exact mutual information.

use std::collections::VecDeque;

use crate::autodiff::log_sum_exp;
use crate::env::{GridAction, GridState, GridWorld, TaskVariable};
use crate::error::{Error, Result};

/// Discounted finite MDP with dense transition rows, indexed `s * n_actions + a`.
#[derive(Debug, Clone, PartialEq)]
pub struct TabularMdp {
    n_states: usize,
    n_actions: usize,
    transition: Vec<Vec<f64>>,
    reward: Vec<f64>,
    gamma: f64,
    omega: f64,
}

impl TabularMdp {
    pub fn new(
        n_states: usize,
        n_actions: usize,
        transition: Vec<Vec<f64>>,
        reward: Vec<f64>,
        gamma: f64,
        omega: f64,
    ) -> Result<Self> {
        if n_states == 0 || n_actions == 0 {
            return Err(Error::InvalidSpec("MDP needs at least one state and one action".into()));
        }
        if !(0.0..1.0).contains(&gamma) {
            return Err(Error::InvalidSpec(format!("gamma {gamma} outside [0, 1)")));
        }
        if !(omega > 0.0 && omega.is_finite()) {
            return Err(Error::InvalidSpec(format!("omega {omega} must be positive")));
        }
        let pairs = n_states * n_actions;
        crate::error::check_len("transition rows", pairs, transition.len())?;
        crate::error::check_len("reward", pairs, reward.len())?;
        for (i, row) in transition.iter().enumerate() {
            crate::error::check_len("transition row", n_states, row.len())?;
            let total: f64 = row.iter().sum();
            if row.iter().any(|p| *p < 0.0 || !p.is_finite()) || (total - 1.0).abs() > 1e-12 {
                return Err(Error::InvalidDistribution(format!(
                    "transition row for (s={}, a={}) sums to {total}",
                    i / n_actions,
                    i % n_actions
                )));
            }
        }
        if reward.iter().any(|r| !r.is_finite()) {
            return Err(Error::NonFinite("reward"));
        }
        Ok(Self {
            n_states,
            n_actions,
            transition,
            reward,
            gamma,
            omega,
        })
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn omega(&self) -> f64 {
        self.omega
    }

    pub fn with_omega(mut self, omega: f64) -> Result<Self> {
        if !(omega > 0.0 && omega.is_finite()) {
            return Err(Error::InvalidSpec(format!("omega {omega} must be positive")));
        }
        self.omega = omega;
        Ok(self)
    }

    pub fn reward(&self, s: usize, a: usize) -> f64 {
        self.reward[s * self.n_actions + a]
    }

    pub fn transition(&self, s: usize, a: usize) -> &[f64] {
        &self.transition[s * self.n_actions + a]
    }

    /// `Q(s,a) = R(s,a) + gamma * sum_s' P(s'|s,a) V(s')`.
    pub fn bellman_q(&self, v: &[f64]) -> Vec<Vec<f64>> {
        (0..self.n_states)
            .map(|s| {
                (0..self.n_actions)
                    .map(|a| {
                        let ev: f64 = self.transition(s, a).iter().zip(v).map(|(p, vv)| p * vv).sum();
                        self.reward(s, a) + self.gamma * ev
                    })
                    .collect()
            })
            .collect()
    }

    fn soft_backup(&self, v: &[f64]) -> Vec<f64> {
        let w = self.omega;
        self.bellman_q(v)
            .iter()
            .map(|q| {
                let scaled: Vec<f64> = q.iter().map(|x| x / w).collect();
                w * log_sum_exp(&scaled)
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SoftSolution {
    pub v: Vec<f64>,
    pub q: Vec<Vec<f64>>,
    pub policy: Vec<Vec<f64>>,
    /// `max_s |T V - V|` at the returned `V`.
    pub residual: f64,
    /// Sup-norm change of each sweep.
    pub gaps: Vec<f64>,
}

fn sup_gap(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Iterates `V <- omega * logsumexp_a(Q(s,a) / omega)` until successive iterates
/// differ by at most `tol`.
pub fn soft_value_iteration(m: &TabularMdp, tol: f64, max_iter: usize) -> Result<SoftSolution> {
    if !(tol > 0.0) {
        return Err(Error::InvalidSpec(format!("tolerance {tol} must be positive")));
    }
    let mut v = vec![0.0; m.n_states];
    let mut gaps = Vec::new();
    for _ in 0..max_iter {
        let next = m.soft_backup(&v);
        let gap = sup_gap(&next, &v);
        gaps.push(gap);
        v = next;
        if gap <= tol {
            let residual = sup_gap(&m.soft_backup(&v), &v);
            let q = m.bellman_q(&v);
            let policy = q
                .iter()
                .zip(&v)
                .map(|(qs, vs)| qs.iter().map(|x| ((x - vs) / m.omega).exp()).collect())
                .collect();
            return Ok(SoftSolution {
                v,
                q,
                policy,
                residual,
                gaps,
            });
        }
    }
    Err(Error::NoConvergence(format!(
        "soft value iteration after {max_iter} sweeps, last gap {:e}",
        gaps.last().copied().unwrap_or(f64::NAN)
    )))
}

/// Standard (hard-max) value iteration; returns `V` and `Q`.
pub fn value_iteration(m: &TabularMdp, tol: f64, max_iter: usize) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
    let mut v = vec![0.0; m.n_states];
    for _ in 0..max_iter {
        let q = m.bellman_q(&v);
        let next: Vec<f64> = q.iter().map(|qs| qs.iter().copied().fold(f64::NEG_INFINITY, f64::max)).collect();
        let gap = sup_gap(&next, &v);
        v = next;
        if gap <= tol {
            let q = m.bellman_q(&v);
            return Ok((v, q));
        }
    }
    Err(Error::NoConvergence(format!("value iteration after {max_iter} sweeps")))
}

/// `A*(s,a) = Q*(s,a) - V*(s)`; equals `omega * log pi*(a|s)` at the soft optimum.
pub fn soft_advantage(v: &[f64], q: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    crate::error::check_len("soft advantage", v.len(), q.len())?;
    Ok(q.iter().zip(v).map(|(qs, vs)| qs.iter().map(|x| x - vs).collect()).collect())
}

/// Grid world as a tabular MDP for one task: free cells are the states
/// (in row-major order), the task goal absorbs and pays `+1` per step.
#[derive(Debug, Clone)]
pub struct GridMdp {
    pub mdp: TabularMdp,
    pub cells: Vec<GridState>,
    pub goal_index: usize,
}

impl GridMdp {
    pub fn index_of(&self, s: GridState) -> Option<usize> {
        self.cells.iter().position(|c| *c == s)
    }
}

pub fn grid_mdp(world: &GridWorld, task: &TaskVariable, gamma: f64, omega: f64) -> Result<GridMdp> {
    if task.index() >= world.goals().len() {
        return Err(Error::InvalidSpec(format!("task {} has no goal", task.index())));
    }
    let cells = world.free_cells();
    let goal = world.goal(task);
    let index = |s: GridState| cells.iter().position(|c| *c == s).expect("free cell");
    let n = cells.len();
    let na = GridAction::ALL.len();
    let mut transition = Vec::with_capacity(n * na);
    let mut reward = Vec::with_capacity(n * na);
    for &s in &cells {
        for a in GridAction::ALL {
            let next = if s == goal { s } else { world.next_cell(s, a) };
            let mut row = vec![0.0; n];
            row[index(next)] = 1.0;
            transition.push(row);
            reward.push(if s == goal { 1.0 } else { 0.0 });
        }
    }
    let goal_index = index(goal);
    Ok(GridMdp {
        mdp: TabularMdp::new(n, na, transition, reward, gamma, omega)?,
        cells,
        goal_index,
    })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ShortestPath {
    pub length: usize,
    /// Visited cells from `start` to `goal` inclusive.
    pub path: Vec<GridState>,
}

/// Shortest path under grid adjacency, breaking ties by the fixed action
/// priority (right, up, left, down) at every step.
pub fn bfs_shortest_path(world: &GridWorld, start: GridState, goal: GridState) -> Result<ShortestPath> {
    for c in [start, goal] {
        if !world.is_free(c) {
            return Err(Error::InvalidWorld(format!("({}, {}) is not a free cell", c.x, c.y)));
        }
    }
    let (w, h) = (world.width(), world.height());
    let slot = |s: GridState| s.y as usize * w + s.x as usize;
    // distances to goal; grid moves are reversible so a forward BFS from the goal suffices
    let mut dist: Vec<Option<usize>> = vec![None; w * h];
    dist[slot(goal)] = Some(0);
    let mut queue = VecDeque::from([goal]);
    while let Some(c) = queue.pop_front() {
        let d = dist[slot(c)].expect("queued cells have a distance");
        for a in GridAction::ALL {
            let (dx, dy) = a.delta();
            let n = GridState::new(c.x + dx, c.y + dy);
            if world.is_free(n) && dist[slot(n)].is_none() {
                dist[slot(n)] = Some(d + 1);
                queue.push_back(n);
            }
        }
    }
    let Some(length) = dist[slot(start)] else {
        return Err(Error::Unreachable { x: start.x, y: start.y });
    };
    let mut path = vec![start];
    let mut cur = start;
    for remaining in (0..length).rev() {
        cur = GridAction::ALL
            .iter()
            .map(|a| {
                let (dx, dy) = a.delta();
                GridState::new(cur.x + dx, cur.y + dy)
            })
            .find(|n| world.is_free(*n) && dist[slot(*n)] == Some(remaining))
            .expect("a predecessor one step closer exists");
        path.push(cur);
    }
    Ok(ShortestPath { length, path })
}

/// `sum p(c,x) log(p(c,x) / (p(c) p(x)))` for a joint table with rows `c`.
pub fn mutual_information_exact(joint: &[Vec<f64>]) -> Result<f64> {
    let cols = joint.first().map(Vec::len).ok_or(Error::Empty("joint table"))?;
    let mut total = 0.0;
    for row in joint {
        crate::error::check_len("joint row", cols, row.len())?;
        if row.iter().any(|p| *p < 0.0 || !p.is_finite()) {
            return Err(Error::InvalidDistribution("joint table has a negative or non-finite entry".into()));
        }
        total += row.iter().sum::<f64>();
    }
    if (total - 1.0).abs() > 1e-12 {
        return Err(Error::InvalidDistribution(format!("joint table sums to {total}")));
    }
    let pc: Vec<f64> = joint.iter().map(|r| r.iter().sum()).collect();
    let px: Vec<f64> = (0..cols).map(|j| joint.iter().map(|r| r[j]).sum()).collect();
    let mut mi = 0.0;
    for (i, row) in joint.iter().enumerate() {
        for (j, &p) in row.iter().enumerate() {
            if p > 0.0 {
                mi += p * (p / (pc[i] * px[j])).ln();
            }
        }
    }
    Ok(mi)
}

/// Entropy in nats, with `0 log 0 = 0`.
pub fn entropy(p: &[f64]) -> f64 {
    -p.iter().filter(|x| **x > 0.0).map(|x| x * x.ln()).sum::<f64>()
}
