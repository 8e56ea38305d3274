use rand::Rng;

use super::{Action, ActionDist, ActionSpace, Environment, RolloutOptions, TaskVariable, Trajectory};
use crate::error::{check_len, Error, Result};
use crate::rng::{stream, SimRng};

/// Initial shoulder angle range (rad); the elbow starts straight.
pub const THETA1_START_RANGE: (f64, f64) = (-3.0, 1.3);

/// Two-link planar arm: gravity-free damped double integrator per joint,
/// semi-implicit Euler.
///
/// Actions are normalized torques in `[-torque_limit, torque_limit]`; the joint
/// receives `gear * action`.
#[derive(Debug, Clone, PartialEq)]
pub struct ReacherWorld {
    pub link1: f64,
    pub link2: f64,
    pub dt: f64,
    /// Viscous damping coefficient (1/s).
    pub damping: f64,
    pub inertia: f64,
    pub gear: f64,
    pub torque_limit: f64,
    /// Joint speed clamp (rad/s).
    pub max_speed: f64,
    pub targets: Vec<[f64; 2]>,
    pub success_radius: f64,
    pub horizon: usize,
}

impl Default for ReacherWorld {
    fn default() -> Self {
        let (link1, link2) = (0.1, 0.11);
        let reach = link1 + link2;
        Self {
            link1,
            link2,
            dt: 0.02,
            damping: 0.1,
            inertia: 1.0,
            gear: 10.0,
            torque_limit: 1.0,
            max_speed: 10.0,
            targets: vec![[0.7 * reach, 0.7 * reach], [-0.7 * reach, -0.7 * reach]],
            success_radius: 0.05 * reach,
            horizon: 200,
        }
    }
}

/// Joint angles (rad) and velocities (rad/s); `theta2` is relative to link 1.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReacherState {
    pub theta1: f64,
    pub theta2: f64,
    pub omega1: f64,
    pub omega2: f64,
}

impl ReacherState {
    pub fn at_rest(theta1: f64, theta2: f64) -> Self {
        Self {
            theta1,
            theta2,
            omega1: 0.0,
            omega2: 0.0,
        }
    }

    /// `(sin t1, cos t1, sin t2, cos t2, w1, w2)`
    pub fn observation(&self) -> Vec<f64> {
        vec![
            self.theta1.sin(),
            self.theta1.cos(),
            self.theta2.sin(),
            self.theta2.cos(),
            self.omega1,
            self.omega2,
        ]
    }

    pub fn from_observation(obs: &[f64]) -> Result<Self> {
        check_len("reacher state", 6, obs.len())?;
        if obs.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("reacher state"));
        }
        Ok(Self {
            theta1: obs[0].atan2(obs[1]),
            theta2: obs[2].atan2(obs[3]),
            omega1: obs[4],
            omega2: obs[5],
        })
    }
}

impl ReacherWorld {
    pub fn validate(&self) -> Result<()> {
        let reach = self.link1 + self.link2;
        let positive = [self.link1, self.link2, self.dt, self.inertia, self.gear, self.torque_limit, self.max_speed, self.success_radius];
        if positive.iter().any(|v| !(*v > 0.0) || !v.is_finite()) || !(self.damping >= 0.0) {
            return Err(Error::InvalidWorld("reacher parameters must be positive and finite".into()));
        }
        if self.targets.is_empty() {
            return Err(Error::InvalidWorld("reacher needs at least one target".into()));
        }
        for t in &self.targets {
            if t[0].hypot(t[1]) > reach {
                return Err(Error::InvalidWorld(format!("target {t:?} beyond reach {reach}")));
            }
        }
        Ok(())
    }

    pub fn reach(&self) -> f64 {
        self.link1 + self.link2
    }

    pub fn reacher_step(&self, s: &ReacherState, torque: &[f64]) -> Result<ReacherState> {
        check_len("reacher torque", 2, torque.len())?;
        if torque.iter().any(|t| !t.is_finite()) {
            return Err(Error::NonFinite("torque"));
        }
        if ![s.theta1, s.theta2, s.omega1, s.omega2].iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("reacher state"));
        }
        let lim = self.torque_limit;
        let advance = |omega: f64, tau: f64| {
            let tau = tau.clamp(-lim, lim) * self.gear;
            ((1.0 - self.damping * self.dt) * omega + self.dt * tau / self.inertia).clamp(-self.max_speed, self.max_speed)
        };
        let omega1 = advance(s.omega1, torque[0]);
        let omega2 = advance(s.omega2, torque[1]);
        Ok(ReacherState {
            theta1: wrap_angle(s.theta1 + self.dt * omega1),
            theta2: wrap_angle(s.theta2 + self.dt * omega2),
            omega1,
            omega2,
        })
    }

    pub fn tip_position(&self, s: &ReacherState) -> [f64; 2] {
        let a12 = s.theta1 + s.theta2;
        [
            self.link1 * s.theta1.cos() + self.link2 * a12.cos(),
            self.link1 * s.theta1.sin() + self.link2 * a12.sin(),
        ]
    }

    /// d(tip)/d(theta), row-major 2x2.
    pub fn jacobian(&self, s: &ReacherState) -> [[f64; 2]; 2] {
        let a12 = s.theta1 + s.theta2;
        let (s1, c1) = s.theta1.sin_cos();
        let (s12, c12) = a12.sin_cos();
        [
            [-self.link1 * s1 - self.link2 * s12, -self.link2 * s12],
            [self.link1 * c1 + self.link2 * c12, self.link2 * c12],
        ]
    }

    pub fn target(&self, task: &TaskVariable) -> [f64; 2] {
        self.targets[task.index()]
    }

    pub fn distance_to_target(&self, s: &ReacherState, task: &TaskVariable) -> f64 {
        let p = self.tip_position(s);
        let t = self.target(task);
        (p[0] - t[0]).hypot(p[1] - t[1])
    }
}

fn wrap_angle(a: f64) -> f64 {
    use std::f64::consts::PI;
    if (-PI..PI).contains(&a) {
        a
    } else {
        (a + PI).rem_euclid(2.0 * PI) - PI
    }
}

impl Environment for ReacherWorld {
    fn state_dim(&self) -> usize {
        6
    }

    fn action_space(&self) -> ActionSpace {
        ActionSpace::Continuous(2)
    }

    fn horizon(&self) -> usize {
        self.horizon
    }

    fn n_tasks(&self) -> usize {
        self.targets.len()
    }

    fn sample_start(&self, _task: &TaskVariable, rng: &mut SimRng) -> Vec<f64> {
        let (lo, hi) = THETA1_START_RANGE;
        ReacherState::at_rest(rng.random_range(lo..=hi), 0.0).observation()
    }

    fn step(&self, state: &[f64], action: &Action) -> Result<Vec<f64>> {
        let s = ReacherState::from_observation(state)?;
        match action {
            Action::Continuous(t) => Ok(self.reacher_step(&s, t)?.observation()),
            Action::Discrete(_) => Err(Error::InvalidAction("reacher takes continuous torques".into())),
        }
    }

    fn is_success(&self, state: &[f64], task: &TaskVariable) -> bool {
        ReacherState::from_observation(state)
            .map(|s| self.distance_to_target(&s, task) <= self.success_radius)
            .unwrap_or(false)
    }

    /// Observation with joint speeds scaled by 1/5.
    fn features(&self, state: &[f64]) -> Vec<f64> {
        let mut f = state.to_vec();
        f[4] *= 0.2;
        f[5] *= 0.2;
        f
    }
}

/// Resolved-rate proportional controller: commands a tip velocity along the
/// straight segment to the target, maps it to joint velocities through a
/// damped least-squares inverse Jacobian, and tracks those with a velocity
/// loop.
#[derive(Debug, Clone)]
pub struct ReacherExpert<'a> {
    world: &'a ReacherWorld,
    /// Tip velocity per metre of error (1/s).
    pub position_gain: f64,
    /// Tip speed cap (m/s).
    pub max_tip_speed: f64,
    /// Joint velocity tracking gain (1/s).
    pub velocity_gain: f64,
    /// Damped least-squares regularizer (m).
    pub dls_damping: f64,
}

impl<'a> ReacherExpert<'a> {
    pub fn new(world: &'a ReacherWorld) -> Self {
        Self {
            world,
            position_gain: 8.0,
            max_tip_speed: 0.4,
            velocity_gain: 20.0,
            dls_damping: 0.02,
        }
    }

    pub fn torque(&self, s: &ReacherState, task: &TaskVariable) -> Vec<f64> {
        let w = self.world;
        let p = w.tip_position(s);
        let t = w.target(task);
        let mut v = [self.position_gain * (t[0] - p[0]), self.position_gain * (t[1] - p[1])];
        let speed = v[0].hypot(v[1]);
        if speed > self.max_tip_speed {
            v = [v[0] * self.max_tip_speed / speed, v[1] * self.max_tip_speed / speed];
        }
        let j = w.jacobian(s);
        // qdot = J^T (J J^T + l^2 I)^-1 v
        let l2 = self.dls_damping * self.dls_damping;
        let a = j[0][0] * j[0][0] + j[0][1] * j[0][1] + l2;
        let b = j[0][0] * j[1][0] + j[0][1] * j[1][1];
        let d = j[1][0] * j[1][0] + j[1][1] * j[1][1] + l2;
        let det = a * d - b * b;
        let y = [(d * v[0] - b * v[1]) / det, (a * v[1] - b * v[0]) / det];
        let qdot = [j[0][0] * y[0] + j[1][0] * y[1], j[0][1] * y[0] + j[1][1] * y[1]];
        let omega = [s.omega1, s.omega2];
        (0..2)
            .map(|i| {
                let accel = self.velocity_gain * (qdot[i] - omega[i]) + w.damping * omega[i];
                (accel * w.inertia / w.gear).clamp(-w.torque_limit, w.torque_limit)
            })
            .collect()
    }

    pub fn policy(&self) -> impl FnMut(&[f64], &TaskVariable) -> Result<ActionDist> + '_ {
        move |state, task| {
            let s = ReacherState::from_observation(state)?;
            let mean = self.torque(&s, task);
            Ok(ActionDist::Gaussian {
                std: vec![1e-6; mean.len()],
                mean,
            })
        }
    }

    pub fn demonstrate(&self, start: &ReacherState, task: &TaskVariable) -> Result<Trajectory> {
        let opts = RolloutOptions {
            start: Some(start.observation()),
            greedy: true,
        };
        let mut rng = stream(0, 0);
        let traj = super::rollout(self.world, self.policy(), task, &mut rng, &opts)?;
        if !traj.reached_goal {
            return Err(Error::ExpertFailed(format!(
                "no success within {} steps from theta1 = {}",
                self.world.horizon, start.theta1
            )));
        }
        Ok(traj)
    }
}

/// `n` controller demonstrations from `theta1 ~ U(-3.0, 1.3)`, `theta2 = 0`.
pub fn expert_reacher(world: &ReacherWorld, task: &TaskVariable, n: usize, seed: u64) -> Result<Vec<Trajectory>> {
    world.validate()?;
    let expert = ReacherExpert::new(world);
    let mut rng = stream(seed, 0x4558_5052);
    (0..n)
        .map(|_| {
            let start = ReacherState::from_observation(&world.sample_start(task, &mut rng))?;
            expert.demonstrate(&start, task)
        })
        .collect()
}
