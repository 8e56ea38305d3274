//! One set of networks trained together, serving one or more tasks.

use ndarray::Array2;

use crate::autodiff::{stack_rows, ParamVector};
use crate::env::{rollout, Action, ActionDist, Environment, RolloutOptions, TaskVariable, Trajectory};
use crate::error::{Error, Result};
use crate::models::{
    AirlDiscriminator, BatchActions, ConditionalPolicy, InputLayout, PlainDiscriminator, PosteriorQ, ValueFunction,
};
use crate::optim::{trpo_step, AdamConfig, AdamState, TrpoReport};
use crate::rng::SimRng;

use super::objectives::{discounted_returns, discriminator_loss, standardize, DiscBatch, DiscHead};
use super::{Algorithm, TrainConfig};

/// Transitions of a set of trajectories, laid out for every network.
#[derive(Debug, Clone)]
pub struct TransitionBatch {
    pub policy_inputs: Array2<f64>,
    pub disc_inputs: Array2<f64>,
    pub value_inputs: Array2<f64>,
    pub next_value_inputs: Array2<f64>,
    pub posterior_inputs: Option<Array2<f64>>,
    pub actions: BatchActions,
    pub codes: Vec<usize>,
    pub terminal: Vec<bool>,
    /// One past the last row of each trajectory.
    pub episode_ends: Vec<usize>,
}

impl TransitionBatch {
    pub fn len(&self) -> usize {
        self.terminal.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terminal.is_empty()
    }
}

/// Networks, optimizer state and demonstrations for one learner.
#[derive(Debug, Clone)]
pub struct Learner {
    pub tasks: Vec<TaskVariable>,
    pub policy: ConditionalPolicy,
    pub disc: DiscHead,
    pub value: ValueFunction,
    pub posterior: Option<PosteriorQ>,
    disc_opt: AdamState,
    value_opt: AdamState,
    posterior_opt: Option<AdamState>,
    expert: Option<TransitionBatch>,
}

/// Per-epoch diagnostics of one learner.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct EpochStats {
    pub d_loss: f64,
    pub v_loss: f64,
    pub surrogate_gain: f64,
    pub trpo: TrpoReport,
}

fn encode_all(actions: &[Action], dim: usize, space: crate::env::ActionSpace) -> Vec<Vec<f64>> {
    actions
        .iter()
        .map(|a| {
            let e = a.encode(space);
            debug_assert_eq!(e.len(), dim);
            e
        })
        .collect()
}

impl Learner {
    /// Builds the networks for `tasks` under `cfg`'s variant; `seed` fixes initial weights.
    pub fn new<E: Environment + ?Sized>(cfg: &TrainConfig, env: &E, tasks: Vec<TaskVariable>, seed: u64) -> Result<Self> {
        if tasks.is_empty() {
            return Err(Error::Config("learner serves no task".into()));
        }
        let alg = cfg.variant.algorithm;
        let fd = env.feature_dim();
        let ad = env.action_space().encoded_dim();
        let conditioned = alg != Algorithm::AirlSingleTask;
        let c = if conditioned { cfg.task_dim } else { 0 };
        let hidden = &cfg.hidden;
        let policy = ConditionalPolicy::new(fd, c, env.action_space(), hidden, crate::rng::derive_seed(seed, 1))?;
        let disc_layout = InputLayout {
            feature_dim: fd,
            action_dim: ad,
            task_dim: if alg == Algorithm::Sgail { cfg.task_dim } else { 0 },
        };
        let disc_seed = crate::rng::derive_seed(seed, 2);
        let disc = match alg {
            Algorithm::InfoGail => DiscHead::Plain(PlainDiscriminator::new(disc_layout, hidden, disc_seed)?),
            _ => DiscHead::Airl(AirlDiscriminator::new(disc_layout, hidden, disc_seed)?),
        };
        let value_layout = InputLayout {
            feature_dim: fd,
            action_dim: 0,
            task_dim: c,
        };
        let value = ValueFunction::new(value_layout, hidden, crate::rng::derive_seed(seed, 3))?;
        let posterior = if matches!(alg, Algorithm::InfoGail | Algorithm::InfoGailAirl) {
            let layout = InputLayout {
                feature_dim: fd,
                action_dim: ad,
                task_dim: 0,
            };
            Some(PosteriorQ::new(layout, cfg.task_dim, hidden, crate::rng::derive_seed(seed, 4))?)
        } else {
            None
        };
        Ok(Self::from_networks(cfg, tasks, policy, disc, value, posterior))
    }

    pub fn from_networks(
        cfg: &TrainConfig,
        tasks: Vec<TaskVariable>,
        policy: ConditionalPolicy,
        disc: DiscHead,
        value: ValueFunction,
        posterior: Option<PosteriorQ>,
    ) -> Self {
        let disc_opt = AdamState::new(disc.net().param_len(), AdamConfig::with_lr(cfg.disc_lr));
        let value_opt = AdamState::new(value.net.param_len(), AdamConfig::with_lr(cfg.value_lr));
        let posterior_opt = posterior
            .as_ref()
            .map(|q| AdamState::new(q.net.param_len(), AdamConfig::with_lr(cfg.posterior_lr)));
        Self {
            tasks,
            policy,
            disc,
            value,
            posterior,
            disc_opt,
            value_opt,
            posterior_opt,
            expert: None,
        }
    }

    pub fn serves(&self, task: &TaskVariable) -> bool {
        self.tasks.iter().any(|t| t.index() == task.index())
    }

    /// Action distribution for a raw environment state.
    pub fn act<E: Environment + ?Sized>(&self, env: &E, state: &[f64], task: &TaskVariable) -> Result<ActionDist> {
        self.policy.distribution(&env.features(state), task)
    }

    pub fn set_demonstrations<E: Environment + ?Sized>(&mut self, env: &E, demos: &[Trajectory]) -> Result<()> {
        if let Some(t) = demos.iter().find(|t| !self.serves(&t.task)) {
            return Err(Error::Config(format!("demonstration for task {} given to a learner without it", t.task.index())));
        }
        let batch = self.batch(env, demos)?;
        if batch.is_empty() {
            return Err(Error::Empty("expert transitions"));
        }
        self.expert = Some(batch);
        Ok(())
    }

    pub fn demonstrations(&self) -> Option<&TransitionBatch> {
        self.expert.as_ref()
    }

    /// Lays out every transition of `trajs` for the networks of this learner.
    pub fn batch<E: Environment + ?Sized>(&self, env: &E, trajs: &[Trajectory]) -> Result<TransitionBatch> {
        let space = env.action_space();
        let ad = space.encoded_dim();
        let mut policy_rows = Vec::new();
        let mut disc_rows = Vec::new();
        let mut value_rows = Vec::new();
        let mut next_rows = Vec::new();
        let mut post_rows = Vec::new();
        let mut actions = Vec::new();
        let mut codes = Vec::new();
        let mut terminal = Vec::new();
        let mut episode_ends = Vec::new();
        let disc_layout = self.disc.layout();
        let value_layout = self.value.layout;
        for traj in trajs {
            let c = &traj.task;
            let n = traj.steps.len();
            let encoded = encode_all(&traj.steps.iter().map(|s| s.action.clone()).collect::<Vec<_>>(), ad, space);
            for (t, (step, a)) in traj.steps.iter().zip(&encoded).enumerate() {
                let f = env.features(&step.state);
                let fnext = env.features(&step.next_state);
                policy_rows.push(self.policy.input(&f, c)?);
                disc_rows.push(disc_layout.compose(&f, Some(a), Some(c))?);
                value_rows.push(value_layout.compose(&f, None, Some(c))?);
                next_rows.push(value_layout.compose(&fnext, None, Some(c))?);
                if let Some(q) = &self.posterior {
                    post_rows.push(q.layout.compose(&f, Some(a), None)?);
                }
                actions.push(step.action.clone());
                codes.push(c.index());
                terminal.push(t + 1 == n);
            }
            episode_ends.push(codes.len());
        }
        Ok(TransitionBatch {
            policy_inputs: stack_rows(&policy_rows, self.policy.layout().width())?,
            disc_inputs: stack_rows(&disc_rows, disc_layout.width())?,
            value_inputs: stack_rows(&value_rows, value_layout.width())?,
            next_value_inputs: stack_rows(&next_rows, value_layout.width())?,
            posterior_inputs: match &self.posterior {
                Some(q) => Some(stack_rows(&post_rows, q.layout.width())?),
                None => None,
            },
            actions: BatchActions::from_actions(&actions, space)?,
            codes,
            terminal,
            episode_ends,
        })
    }

    /// `per_task` stochastic episodes for every served task.
    pub fn collect<E: Environment + ?Sized>(&self, env: &E, per_task: usize, rng: &mut SimRng) -> Result<Vec<Trajectory>> {
        let opts = RolloutOptions::default();
        let mut out = Vec::with_capacity(per_task * self.tasks.len());
        for task in &self.tasks {
            for _ in 0..per_task {
                out.push(rollout(env, |s: &[f64], c: &TaskVariable| self.act(env, s, c), task, rng, &opts)?);
            }
        }
        Ok(out)
    }

    fn adam(opt: &mut AdamState, net: &mut crate::autodiff::Approximator, grad: &ParamVector) -> Result<()> {
        let mut p = net.get_params();
        opt.step(&mut p, grad)?;
        net.set_params(p)
    }

    /// One Adam step on the negated discriminator objective; returns the pre-step loss.
    pub fn update_discriminator(&mut self, generator: &TransitionBatch) -> Result<f64> {
        let expert = self.expert.as_ref().ok_or(Error::Empty("expert transitions"))?;
        if generator.is_empty() {
            return Err(Error::Empty("generator transitions"));
        }
        let lp_e = self.policy.reward_log_probs_batch(expert.policy_inputs.view(), &expert.actions)?;
        let lp_g = self.policy.reward_log_probs_batch(generator.policy_inputs.view(), &generator.actions)?;
        let (loss, grad) = discriminator_loss(
            &self.disc,
            DiscBatch {
                inputs: expert.disc_inputs.view(),
                log_pi: &lp_e,
            },
            DiscBatch {
                inputs: generator.disc_inputs.view(),
                log_pi: &lp_g,
            },
        )?;
        Self::adam(&mut self.disc_opt, self.disc.net_mut(), &grad)?;
        Ok(loss)
    }

    /// Per-transition reward `head - lambda1 (1 - beta) log pi [+ lambda2 log Q(c|s,a)]`,
    /// where `head` is `f` for the odds-ratio discriminator and the logit otherwise.
    pub fn rewards(&self, batch: &TransitionBatch, beta: f64, lambda1: f64, lambda2: f64) -> Result<Vec<f64>> {
        let head = self.disc.raw(batch.disc_inputs.view())?;
        let log_pi = self.policy.reward_log_probs_batch(batch.policy_inputs.view(), &batch.actions)?;
        let mut r: Vec<f64> = head.iter().zip(&log_pi).map(|(h, l)| h - lambda1 * (1.0 - beta) * l).collect();
        if let (Some(q), Some(inputs)) = (&self.posterior, &batch.posterior_inputs) {
            if lambda2 != 0.0 {
                let lq = q.log_q_batch(inputs.view(), &batch.codes)?;
                r.iter_mut().zip(lq).for_each(|(ri, l)| *ri += lambda2 * l);
            }
        }
        Ok(r)
    }

    /// Standardized one-step advantages under the current value function.
    pub fn advantages(&self, batch: &TransitionBatch, rewards: &[f64], gamma: f64) -> Result<Vec<f64>> {
        let v = self.value.value_batch(batch.value_inputs.view())?;
        let vn = self.value.value_batch(batch.next_value_inputs.view())?;
        let mut adv: Vec<f64> = (0..batch.len())
            .map(|i| crate::models::advantage(rewards[i], v[i], vn[i], gamma, batch.terminal[i]))
            .collect();
        standardize(&mut adv);
        Ok(adv)
    }

    /// Discounted reward-to-go along each trajectory of `batch`.
    pub fn value_targets(batch: &TransitionBatch, rewards: &[f64], gamma: f64) -> Vec<f64> {
        let mut out = Vec::with_capacity(rewards.len());
        let mut start = 0;
        for &end in &batch.episode_ends {
            out.extend(discounted_returns(&rewards[start..end], gamma));
            start = end;
        }
        out
    }

    /// One Adam step of value regression; returns the pre-step mean squared error.
    pub fn update_value(&mut self, batch: &TransitionBatch, targets: &[f64]) -> Result<f64> {
        let (loss, grad) = self.value.mse_and_gradient(batch.value_inputs.view(), targets)?;
        Self::adam(&mut self.value_opt, &mut self.value.net, &grad)?;
        Ok(loss)
    }

    /// One Adam ascent step on `mean log Q(c|s,a)` over the batch.
    pub fn update_posterior(&mut self, batch: &TransitionBatch) -> Result<Option<f64>> {
        let (Some(q), Some(opt), Some(inputs)) = (&mut self.posterior, &mut self.posterior_opt, &batch.posterior_inputs)
        else {
            return Ok(None);
        };
        let (mean, mut grad) = q.mean_log_q_and_gradient(inputs.view(), &batch.codes)?;
        grad.scale(-1.0);
        Self::adam(opt, &mut q.net, &grad)?;
        Ok(Some(mean))
    }

    /// Trust-region step on the policy with the given (already standardized) advantages.
    pub fn generator_update(&mut self, batch: &TransitionBatch, advantages: &[f64], cfg: &crate::optim::TrpoConfig) -> Result<TrpoReport> {
        let mut bound = self.policy.bind(batch.policy_inputs.clone(), batch.actions.clone())?;
        trpo_step(&mut bound, advantages, cfg)
    }

    /// Discriminator, value and generator updates for one epoch, in that order.
    pub fn epoch(&mut self, cfg: &TrainConfig, generator: &TransitionBatch, beta: f64) -> Result<EpochStats> {
        let mut d_loss = 0.0;
        for _ in 0..cfg.disc_updates {
            d_loss = self.update_discriminator(generator)?;
        }
        let (l1, l2) = cfg.variant.lambdas();
        let rewards = self.rewards(generator, beta, l1, l2)?;
        let adv = self.advantages(generator, &rewards, cfg.gamma)?;
        let targets = Self::value_targets(generator, &rewards, cfg.gamma);
        let v_loss = self.update_value(generator, &targets)?;
        self.update_posterior(generator)?;
        let trpo = self.generator_update(generator, &adv, &cfg.trpo)?;
        Ok(EpochStats {
            d_loss,
            v_loss,
            surrogate_gain: trpo.surrogate_gain(),
            trpo,
        })
    }
}
