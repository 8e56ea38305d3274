//! Environments, demonstrations and the rollout engine.
//!
//! Two native environments share the [`Environment`] trait:
//! - [`GridWorld`]: the puddle grid with deterministic four-way moves.
//! - [`ReacherWorld`]: a gravity-free two-link planar arm.
//!
//! States are carried as raw `Vec<f64>` so trajectories from either
//! environment have the same shape: `[x, y]` for the grid and the six-value
//! `(sin t1, cos t1, sin t2, cos t2, w1, w2)` observation for the reacher.

mod grid;
mod reacher;

use std::io::Write;

use rand::Rng;
use rand_distr::StandardNormal;

pub use grid::{expert_grid, GridAction, GridExpert, GridState, GridWorld, DEFAULT_GRID_HORIZON, DEFAULT_LAYOUT};
pub use reacher::{expert_reacher, ReacherExpert, ReacherState, ReacherWorld, THETA1_START_RANGE};

use crate::error::{check_len, Error, Result};
use crate::rng::{stream, SimRng};

/// Number of task-variable slots; only the first `n_tasks` are ever hot.
pub const DEFAULT_TASK_DIM: usize = 3;

/// One-hot task selector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct TaskVariable {
    index: usize,
    dim: usize,
}

impl TaskVariable {
    pub fn new(index: usize, dim: usize) -> Result<Self> {
        if index >= dim {
            return Err(Error::InvalidAction(format!("task index {index} out of range for dim {dim}")));
        }
        Ok(Self { index, dim })
    }

    pub fn from_one_hot(v: &[f64]) -> Result<Self> {
        let hot: Vec<usize> = v.iter().enumerate().filter(|(_, &x)| x == 1.0).map(|(i, _)| i).collect();
        let zeros = v.iter().filter(|&&x| x == 0.0).count();
        if hot.len() != 1 || zeros + 1 != v.len() {
            return Err(Error::InvalidAction(format!("task variable {v:?} is not one-hot")));
        }
        Self::new(hot[0], v.len())
    }

    pub fn index(&self) -> usize {
        self.index
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn one_hot(&self) -> Vec<f64> {
        let mut v = vec![0.0; self.dim];
        v[self.index] = 1.0;
        v
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ActionSpace {
    Discrete(usize),
    Continuous(usize),
}

impl ActionSpace {
    /// Width of the action encoding fed to networks.
    pub fn encoded_dim(&self) -> usize {
        match *self {
            ActionSpace::Discrete(n) | ActionSpace::Continuous(n) => n,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Action {
    Discrete(usize),
    Continuous(Vec<f64>),
}

impl Action {
    /// One-hot for discrete actions, raw values for continuous ones.
    pub fn encode(&self, space: ActionSpace) -> Vec<f64> {
        match (self, space) {
            (Action::Discrete(a), ActionSpace::Discrete(n)) => {
                let mut v = vec![0.0; n];
                v[*a] = 1.0;
                v
            }
            (Action::Continuous(v), _) => v.clone(),
            (Action::Discrete(a), ActionSpace::Continuous(_)) => vec![*a as f64],
        }
    }

    pub fn check(&self, space: ActionSpace) -> Result<()> {
        match (self, space) {
            (Action::Discrete(a), ActionSpace::Discrete(n)) if *a < n => Ok(()),
            (Action::Continuous(v), ActionSpace::Continuous(n)) if v.len() == n => {
                if v.iter().all(|x| x.is_finite()) {
                    Ok(())
                } else {
                    Err(Error::NonFinite("action"))
                }
            }
            _ => Err(Error::InvalidAction(format!("{self:?} does not fit {space:?}"))),
        }
    }
}

/// Action distribution returned by a conditional policy.
#[derive(Debug, Clone, PartialEq)]
pub enum ActionDist {
    Categorical(Vec<f64>),
    Gaussian { mean: Vec<f64>, std: Vec<f64> },
}

impl ActionDist {
    pub fn validate(&self) -> Result<()> {
        match self {
            ActionDist::Categorical(p) => {
                let total: f64 = p.iter().sum();
                if p.is_empty() || p.iter().any(|&x| !(x >= 0.0) || !x.is_finite()) || (total - 1.0).abs() > 1e-6 {
                    return Err(Error::InvalidDistribution(format!("categorical {p:?}")));
                }
            }
            ActionDist::Gaussian { mean, std } => {
                if mean.len() != std.len()
                    || mean.iter().any(|m| !m.is_finite())
                    || std.iter().any(|s| !(*s > 0.0) || !s.is_finite())
                {
                    return Err(Error::InvalidDistribution(format!("gaussian mean {mean:?} std {std:?}")));
                }
            }
        }
        Ok(())
    }

    pub fn sample(&self, rng: &mut SimRng) -> Action {
        match self {
            ActionDist::Categorical(p) => {
                let u: f64 = rng.random();
                let mut acc = 0.0;
                for (i, &pi) in p.iter().enumerate() {
                    acc += pi;
                    if u < acc {
                        return Action::Discrete(i);
                    }
                }
                // rounding: fall back to the last action with mass
                Action::Discrete(p.iter().rposition(|&x| x > 0.0).unwrap_or(p.len() - 1))
            }
            ActionDist::Gaussian { mean, std } => Action::Continuous(
                mean.iter()
                    .zip(std)
                    .map(|(m, s)| {
                        let z: f64 = rng.sample(StandardNormal);
                        m + s * z
                    })
                    .collect(),
            ),
        }
    }

    /// Argmax (lowest index on ties) or the mean.
    pub fn mode(&self) -> Action {
        match self {
            ActionDist::Categorical(p) => {
                let mut best = 0;
                for (i, &x) in p.iter().enumerate() {
                    if x > p[best] {
                        best = i;
                    }
                }
                Action::Discrete(best)
            }
            ActionDist::Gaussian { mean, .. } => Action::Continuous(mean.clone()),
        }
    }

    pub fn log_prob(&self, action: &Action) -> Result<f64> {
        match (self, action) {
            (ActionDist::Categorical(p), Action::Discrete(a)) if *a < p.len() => Ok(p[*a].ln()),
            (ActionDist::Gaussian { mean, std }, Action::Continuous(x)) if x.len() == mean.len() => {
                Ok(gaussian_log_prob(x, mean, std))
            }
            _ => Err(Error::InvalidAction(format!("{action:?} does not fit distribution"))),
        }
    }
}

pub fn gaussian_log_prob(x: &[f64], mean: &[f64], std: &[f64]) -> f64 {
    const HALF_LN_2PI: f64 = 0.918_938_533_204_672_8;
    x.iter()
        .zip(mean)
        .zip(std)
        .map(|((x, m), s)| {
            let z = (x - m) / s;
            -0.5 * z * z - s.ln() - HALF_LN_2PI
        })
        .sum()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Step {
    pub state: Vec<f64>,
    pub action: Action,
    pub next_state: Vec<f64>,
}

/// One episode: start state, chained transitions, and whether the goal was reached.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub task: TaskVariable,
    pub start: Vec<f64>,
    pub steps: Vec<Step>,
    pub reached_goal: bool,
}

impl Trajectory {
    pub fn new(task: TaskVariable, start: Vec<f64>, steps: Vec<Step>, reached_goal: bool) -> Result<Self> {
        let mut prev = &start;
        for (t, step) in steps.iter().enumerate() {
            if &step.state != prev {
                return Err(Error::InvalidWorld(format!("trajectory breaks its chain at step {t}")));
            }
            prev = &step.next_state;
        }
        Ok(Self {
            task,
            start,
            steps,
            reached_goal,
        })
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn final_state(&self) -> &[f64] {
        self.steps.last().map(|s| s.next_state.as_slice()).unwrap_or(&self.start)
    }
}

/// Common surface of the grid world and the reacher.
pub trait Environment {
    /// Width of the raw state vector.
    fn state_dim(&self) -> usize;
    /// Width of the network-facing state features.
    fn feature_dim(&self) -> usize {
        self.state_dim()
    }
    fn action_space(&self) -> ActionSpace;
    fn horizon(&self) -> usize;
    fn n_tasks(&self) -> usize;
    fn sample_start(&self, task: &TaskVariable, rng: &mut SimRng) -> Vec<f64>;
    fn step(&self, state: &[f64], action: &Action) -> Result<Vec<f64>>;
    fn is_success(&self, state: &[f64], task: &TaskVariable) -> bool;
    /// Scaled state fed to networks.
    fn features(&self, state: &[f64]) -> Vec<f64>;
    /// Every start state for a deterministic sweep evaluation, if the state
    /// space is enumerable.
    fn sweep_starts(&self, _task: &TaskVariable) -> Option<Vec<Vec<f64>>> {
        None
    }
}

/// Either native environment, chosen at run time.
#[derive(Debug, Clone)]
pub enum EnvKind {
    Grid(GridWorld),
    Reacher(ReacherWorld),
}

macro_rules! dispatch {
    ($self:ident, $e:ident => $body:expr) => {
        match $self {
            EnvKind::Grid($e) => $body,
            EnvKind::Reacher($e) => $body,
        }
    };
}

impl Environment for EnvKind {
    fn state_dim(&self) -> usize {
        dispatch!(self, e => e.state_dim())
    }
    fn feature_dim(&self) -> usize {
        dispatch!(self, e => e.feature_dim())
    }
    fn action_space(&self) -> ActionSpace {
        dispatch!(self, e => e.action_space())
    }
    fn horizon(&self) -> usize {
        dispatch!(self, e => e.horizon())
    }
    fn n_tasks(&self) -> usize {
        dispatch!(self, e => e.n_tasks())
    }
    fn sample_start(&self, task: &TaskVariable, rng: &mut SimRng) -> Vec<f64> {
        dispatch!(self, e => e.sample_start(task, rng))
    }
    fn step(&self, state: &[f64], action: &Action) -> Result<Vec<f64>> {
        dispatch!(self, e => e.step(state, action))
    }
    fn is_success(&self, state: &[f64], task: &TaskVariable) -> bool {
        dispatch!(self, e => e.is_success(state, task))
    }
    fn features(&self, state: &[f64]) -> Vec<f64> {
        dispatch!(self, e => e.features(state))
    }
    fn sweep_starts(&self, task: &TaskVariable) -> Option<Vec<Vec<f64>>> {
        dispatch!(self, e => e.sweep_starts(task))
    }
}

#[derive(Debug, Clone, Default)]
pub struct RolloutOptions {
    /// Fixed start state; sampled from the environment when `None`.
    pub start: Option<Vec<f64>>,
    /// Take the distribution's mode instead of sampling.
    pub greedy: bool,
}

/// Runs `policy` from a start state until success or the horizon.
///
/// `policy` maps a raw state and task to an action distribution.
pub fn rollout<E, P>(
    env: &E,
    mut policy: P,
    task: &TaskVariable,
    rng: &mut SimRng,
    opts: &RolloutOptions,
) -> Result<Trajectory>
where
    E: Environment + ?Sized,
    P: FnMut(&[f64], &TaskVariable) -> Result<ActionDist>,
{
    let start = match &opts.start {
        Some(s) => {
            check_len("rollout start", env.state_dim(), s.len())?;
            s.clone()
        }
        None => env.sample_start(task, rng),
    };
    let space = env.action_space();
    let mut steps = Vec::new();
    let mut state = start.clone();
    let mut reached = env.is_success(&state, task);
    while !reached && steps.len() < env.horizon() {
        let dist = policy(&state, task)?;
        dist.validate()?;
        let action = if opts.greedy { dist.mode() } else { dist.sample(rng) };
        action.check(space)?;
        let next = env.step(&state, &action)?;
        reached = env.is_success(&next, task);
        steps.push(Step {
            state: std::mem::replace(&mut state, next.clone()),
            action,
            next_state: next,
        });
    }
    Trajectory::new(*task, start, steps, reached)
}

/// [`rollout`] with a fresh stream seeded from `seed`.
pub fn rollout_seeded<E, P>(env: &E, policy: P, task: &TaskVariable, seed: u64, opts: &RolloutOptions) -> Result<Trajectory>
where
    E: Environment + ?Sized,
    P: FnMut(&[f64], &TaskVariable) -> Result<ActionDist>,
{
    let mut rng = stream(seed, 0x524f_4c4c);
    rollout(env, policy, task, &mut rng, opts)
}

/// Number of `n_trials` rollouts from random starts that reach the goal.
pub fn evaluate<E, P>(env: &E, mut policy: P, task: &TaskVariable, n_trials: usize, seed: u64, greedy: bool) -> Result<usize>
where
    E: Environment + ?Sized,
    P: FnMut(&[f64], &TaskVariable) -> Result<ActionDist>,
{
    let mut rng = stream(seed, 0x4556_414c);
    let opts = RolloutOptions { start: None, greedy };
    let mut successes = 0;
    for _ in 0..n_trials {
        if rollout(env, &mut policy, task, &mut rng, &opts)?.reached_goal {
            successes += 1;
        }
    }
    Ok(successes)
}

/// Successes over every enumerable start; returns `(successes, trials)`.
pub fn evaluate_sweep<E, P>(env: &E, mut policy: P, task: &TaskVariable, seed: u64, greedy: bool) -> Result<(usize, usize)>
where
    E: Environment + ?Sized,
    P: FnMut(&[f64], &TaskVariable) -> Result<ActionDist>,
{
    let starts = env
        .sweep_starts(task)
        .ok_or_else(|| Error::Config("environment has no enumerable start states".into()))?;
    let mut rng = stream(seed, 0x5357_4550);
    let mut successes = 0;
    for start in &starts {
        let opts = RolloutOptions {
            start: Some(start.clone()),
            greedy,
        };
        if rollout(env, &mut policy, task, &mut rng, &opts)?.reached_goal {
            successes += 1;
        }
    }
    Ok((successes, starts.len()))
}

/// CSV export: `episode,t,s0..,a0..,task`.
pub fn write_trajectories_csv<W: Write>(mut out: W, trajectories: &[Trajectory], space: ActionSpace) -> Result<()> {
    let state_dim = trajectories.first().map(|t| t.start.len()).unwrap_or(0);
    let mut header = vec!["episode".to_string(), "t".to_string()];
    header.extend((0..state_dim).map(|i| format!("s{i}")));
    header.extend((0..space.encoded_dim()).map(|i| format!("a{i}")));
    header.push("task".into());
    writeln!(out, "{}", header.join(","))?;
    for (ep, traj) in trajectories.iter().enumerate() {
        for (t, step) in traj.steps.iter().enumerate() {
            let mut row = vec![ep.to_string(), t.to_string()];
            row.extend(step.state.iter().map(|v| v.to_string()));
            row.extend(step.action.encode(space).iter().map(|v| v.to_string()));
            row.push(traj.task.index().to_string());
            writeln!(out, "{}", row.join(","))?;
        }
    }
    Ok(())
}
