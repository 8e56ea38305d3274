//! Adversarial training loop, entropy-correction schedule and variant registry.

mod learner;
pub mod metrics;
pub mod objectives;

use std::fmt;
use std::str::FromStr;

pub use learner::{EpochStats, Learner, TransitionBatch};
pub use metrics::{read_metrics_csv, write_metrics_csv, MetricsRecord};
pub use objectives::{
    discounted_returns, discriminator_loss, discriminator_objective, mi_lower_bound, mi_lower_bound_weighted,
    standardize, DiscBatch, DiscHead,
};

use crate::checkpoint::Checkpoint;
use crate::env::{evaluate, evaluate_sweep, ActionSpace, Environment, TaskVariable, Trajectory, DEFAULT_TASK_DIM};
use crate::error::{Error, Result};
use crate::models::{AirlDiscriminator, ConditionalPolicy, InputLayout, PlainDiscriminator, PolicyHead, PosteriorQ, ValueFunction};
use crate::optim::TrpoConfig;
use crate::rng::{derive_seed, stream};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Algorithm {
    Sgail,
    InfoGail,
    InfoGailAirl,
    AirlSingleTask,
}

impl Algorithm {
    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Sgail => "sgail",
            Algorithm::InfoGail => "infogail",
            Algorithm::InfoGailAirl => "infogail-airl",
            Algorithm::AirlSingleTask => "airl-single",
        }
    }
}

/// Algorithm plus entropy-correction switch and the InfoGAIL weights.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelVariant {
    pub algorithm: Algorithm,
    pub erc: bool,
    pub info_lambda1: f64,
    pub info_lambda2: f64,
}

impl ModelVariant {
    pub const DEFAULT_LAMBDA1: f64 = 1.0;
    pub const DEFAULT_LAMBDA2: f64 = 0.1;

    pub fn new(algorithm: Algorithm, erc: bool) -> Self {
        Self {
            algorithm,
            erc,
            info_lambda1: Self::DEFAULT_LAMBDA1,
            info_lambda2: Self::DEFAULT_LAMBDA2,
        }
    }

    pub fn uses_posterior(&self) -> bool {
        matches!(self.algorithm, Algorithm::InfoGail | Algorithm::InfoGailAirl)
    }

    /// `(lambda1, lambda2)` as applied in the reward; S-GAIL and single-task AIRL use `(1, 0)`.
    pub fn lambdas(&self) -> (f64, f64) {
        if self.uses_posterior() {
            (self.info_lambda1, self.info_lambda2)
        } else {
            (1.0, 0.0)
        }
    }

    pub fn name(&self) -> String {
        if self.erc {
            format!("{}-erc", self.algorithm.name())
        } else {
            self.algorithm.name().to_string()
        }
    }
}

impl fmt::Display for ModelVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name())
    }
}

impl FromStr for ModelVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (base, erc) = match s.strip_suffix("-erc") {
            Some(b) => (b, true),
            None => (s, false),
        };
        let algorithm = match base {
            "sgail" => Algorithm::Sgail,
            "infogail" => Algorithm::InfoGail,
            "infogail-airl" => Algorithm::InfoGailAirl,
            "airl-single" => Algorithm::AirlSingleTask,
            _ => return Err(Error::Config(format!("unknown variant '{s}'"))),
        };
        Ok(Self::new(algorithm, erc))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BetaMode {
    Constant,
    Linear,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BetaSchedule {
    pub start: f64,
    pub end: f64,
    pub mode: BetaMode,
    /// Epochs over which a linear ramp runs.
    pub span: usize,
}

impl BetaSchedule {
    pub fn constant(beta: f64) -> Self {
        Self {
            start: beta,
            end: beta,
            mode: BetaMode::Constant,
            span: 0,
        }
    }

    pub fn linear(start: f64, end: f64, span: usize) -> Self {
        Self {
            start,
            end,
            mode: BetaMode::Linear,
            span,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for b in [self.start, self.end] {
            if !(0.0..=1.0).contains(&b) {
                return Err(Error::Config(format!("beta {b} outside [0, 1]")));
            }
        }
        if self.mode == BetaMode::Constant && self.start != self.end {
            return Err(Error::Config("constant beta schedule needs start = end".into()));
        }
        Ok(())
    }

    /// `start` for constant schedules, else a linear ramp reaching `end` at `span`.
    pub fn beta_at(&self, epoch: usize) -> f64 {
        match self.mode {
            BetaMode::Constant => self.start,
            BetaMode::Linear if self.span == 0 || epoch >= self.span => self.end,
            BetaMode::Linear => self.start + (self.end - self.start) * epoch as f64 / self.span as f64,
        }
    }

    /// Text form accepted by [`BetaSchedule::parse`]: `0.9` or `0.9->0.6`.
    pub fn describe(&self) -> String {
        match self.mode {
            BetaMode::Constant => format!("{}", self.start),
            BetaMode::Linear => format!("{}->{}", self.start, self.end),
        }
    }

    /// Parses `b` or `start->end`; a linear ramp spans `span` epochs.
    pub fn parse(s: &str, span: usize) -> Result<Self> {
        let num = |t: &str| {
            t.trim()
                .parse::<f64>()
                .map_err(|_| Error::Config(format!("bad beta value '{t}'")))
        };
        let sched = match s.split_once("->") {
            Some((a, b)) => Self::linear(num(a)?, num(b)?, span),
            None => Self::constant(num(s)?),
        };
        sched.validate()?;
        Ok(sched)
    }
}

pub fn beta_at(schedule: &BetaSchedule, epoch: usize) -> f64 {
    schedule.beta_at(epoch)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EvalMode {
    /// `n` greedy trials from random starts.
    Random(usize),
    /// Greedy trials from every enumerable start.
    Sweep,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub variant: ModelVariant,
    pub experts_per_task: usize,
    pub epochs: usize,
    pub rollouts_per_task: usize,
    pub disc_updates: usize,
    pub gamma: f64,
    pub disc_lr: f64,
    pub value_lr: f64,
    pub posterior_lr: f64,
    pub trpo: TrpoConfig,
    pub beta: BetaSchedule,
    pub hidden: Vec<usize>,
    pub task_dim: usize,
    pub eval_interval: usize,
    pub eval: EvalMode,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            variant: ModelVariant::new(Algorithm::Sgail, true),
            experts_per_task: 30,
            epochs: 30_000,
            rollouts_per_task: 10,
            disc_updates: 1,
            gamma: 0.95,
            disc_lr: 0.001,
            value_lr: 0.001,
            posterior_lr: 0.001,
            trpo: TrpoConfig::default(),
            beta: BetaSchedule::constant(0.9),
            hidden: vec![64, 64],
            task_dim: DEFAULT_TASK_DIM,
            eval_interval: 250,
            eval: EvalMode::Random(40),
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let counts = [
            ("epochs", self.epochs),
            ("rollouts_per_task", self.rollouts_per_task),
            ("disc_updates", self.disc_updates),
            ("experts_per_task", self.experts_per_task),
            ("eval_interval", self.eval_interval),
            ("task_dim", self.task_dim),
        ];
        if let Some((name, _)) = counts.iter().find(|(_, v)| *v == 0) {
            return Err(Error::Config(format!("{name} must be at least 1")));
        }
        if !(0.0..1.0).contains(&self.gamma) {
            return Err(Error::Config(format!("gamma {} outside [0, 1)", self.gamma)));
        }
        for (name, lr) in [("disc_lr", self.disc_lr), ("value_lr", self.value_lr), ("posterior_lr", self.posterior_lr)] {
            if !(lr > 0.0 && lr.is_finite()) {
                return Err(Error::Config(format!("{name} must be positive")));
            }
        }
        if self.variant.info_lambda1 < 0.0 || self.variant.info_lambda2 < 0.0 {
            return Err(Error::Config("InfoGAIL weights must be nonnegative".into()));
        }
        self.trpo.validate().map_err(|e| Error::Config(e.to_string()))?;
        self.beta.validate()
    }

    /// Beta in effect at `epoch`; zero when the correction is off.
    pub fn beta_at(&self, epoch: usize) -> f64 {
        if self.variant.erc {
            self.beta.beta_at(epoch)
        } else {
            0.0
        }
    }

    /// Whether a metrics record is written after `epoch`.
    pub fn is_eval_epoch(&self, epoch: usize) -> bool {
        epoch % self.eval_interval == 0 || epoch + 1 == self.epochs
    }
}

const ROLLOUT_TAG: u64 = 0x524f;
const EVAL_TAG: u64 = 0x4556;
const INIT_TAG: u64 = 0x494e;

/// Networks of a finished (or in-progress) run.
#[derive(Debug, Clone)]
pub struct TrainedModel {
    pub variant: ModelVariant,
    pub learners: Vec<Learner>,
}

impl TrainedModel {
    pub fn learner_for(&self, task: &TaskVariable) -> Result<&Learner> {
        self.learners
            .iter()
            .find(|l| l.serves(task))
            .ok_or_else(|| Error::Config(format!("no learner for task {}", task.index())))
    }

    /// Every task served by some learner, in index order.
    pub fn tasks(&self) -> Vec<TaskVariable> {
        let mut tasks: Vec<TaskVariable> = self.learners.iter().flat_map(|l| l.tasks.iter().copied()).collect();
        tasks.sort_by_key(TaskVariable::index);
        tasks
    }

    pub fn policy_for(&self, task: &TaskVariable) -> Result<&ConditionalPolicy> {
        Ok(&self.learner_for(task)?.policy)
    }

    pub fn value_for(&self, task: &TaskVariable) -> Result<&ValueFunction> {
        Ok(&self.learner_for(task)?.value)
    }

    /// Greedy successes for `task` under `mode`; returns `(successes, trials)`.
    pub fn evaluate<E: Environment + ?Sized>(&self, env: &E, task: &TaskVariable, mode: EvalMode, seed: u64) -> Result<(usize, usize)> {
        let learner = self.learner_for(task)?;
        let policy = |s: &[f64], c: &TaskVariable| learner.act(env, s, c);
        match mode {
            EvalMode::Random(n) => Ok((evaluate(env, policy, task, n, seed, true)?, n)),
            EvalMode::Sweep => evaluate_sweep(env, policy, task, seed, true),
        }
    }

    pub fn to_checkpoint(&self) -> Result<Checkpoint> {
        let mut ck = Checkpoint::new();
        ck.push_meta("variant", self.variant.name())?;
        ck.push_meta("info_lambda1", self.variant.info_lambda1)?;
        ck.push_meta("info_lambda2", self.variant.info_lambda2)?;
        ck.push_meta("learners", self.learners.len())?;
        for (i, l) in self.learners.iter().enumerate() {
            let tasks: Vec<String> = l.tasks.iter().map(|t| t.index().to_string()).collect();
            ck.push_meta(&format!("tasks.{i}"), tasks.join(","))?;
            ck.push_meta(&format!("task_dim.{i}"), l.tasks[0].dim())?;
            let space = match l.policy.action_space() {
                ActionSpace::Discrete(n) => format!("discrete:{n}"),
                ActionSpace::Continuous(n) => format!("continuous:{n}"),
            };
            ck.push_meta(&format!("action_space.{i}"), space)?;
            for (name, layout) in [
                ("policy", l.policy.layout()),
                ("disc", l.disc.layout()),
                ("value", l.value.layout),
            ] {
                ck.push_meta(&format!("layout.{name}.{i}"), layout_string(layout))?;
            }
            ck.push_net(&format!("policy.{i}"), l.policy.net())?;
            if let Some(ls) = l.policy.log_std() {
                ck.push_vector(&format!("log_std.{i}"), ls)?;
            }
            ck.push_net(&format!("disc.{i}"), l.disc.net())?;
            ck.push_net(&format!("value.{i}"), &l.value.net)?;
            if let Some(q) = &l.posterior {
                ck.push_meta(&format!("layout.posterior.{i}"), layout_string(q.layout))?;
                ck.push_net(&format!("posterior.{i}"), &q.net)?;
            }
        }
        Ok(ck)
    }

    /// Rebuilds the networks; optimizer state and demonstrations are not restored.
    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        let mut variant: ModelVariant = ck.meta("variant")?.parse()?;
        variant.info_lambda1 = parse_meta(ck, "info_lambda1")?;
        variant.info_lambda2 = parse_meta(ck, "info_lambda2")?;
        let n: usize = parse_meta(ck, "learners")?;
        let cfg = TrainConfig {
            variant,
            ..TrainConfig::default()
        };
        let mut learners = Vec::with_capacity(n);
        for i in 0..n {
            let task_dim: usize = parse_meta(ck, &format!("task_dim.{i}"))?;
            let tasks = ck
                .meta(&format!("tasks.{i}"))?
                .split(',')
                .map(|t| {
                    let k = t.parse().map_err(|_| Error::Parse(format!("bad task index '{t}'")))?;
                    TaskVariable::new(k, task_dim)
                })
                .collect::<Result<Vec<_>>>()?;
            let space = parse_space(ck.meta(&format!("action_space.{i}"))?)?;
            let head = match space {
                ActionSpace::Discrete(_) => PolicyHead::Categorical,
                ActionSpace::Continuous(_) => PolicyHead::Gaussian {
                    log_std: ck.vector(&format!("log_std.{i}"))?.to_vec(),
                },
            };
            let layout = |name: &str| parse_layout(ck.meta(&format!("layout.{name}.{i}"))?);
            let policy = ConditionalPolicy::from_parts(ck.net(&format!("policy.{i}"))?.clone(), head, layout("policy")?, space)?;
            let disc_net = ck.net(&format!("disc.{i}"))?.clone();
            let disc = if variant.algorithm == Algorithm::InfoGail {
                DiscHead::Plain(PlainDiscriminator {
                    net: disc_net,
                    layout: layout("disc")?,
                })
            } else {
                DiscHead::Airl(AirlDiscriminator {
                    net: disc_net,
                    layout: layout("disc")?,
                })
            };
            let value = ValueFunction {
                net: ck.net(&format!("value.{i}"))?.clone(),
                layout: layout("value")?,
            };
            let posterior = if variant.uses_posterior() {
                Some(PosteriorQ {
                    net: ck.net(&format!("posterior.{i}"))?.clone(),
                    layout: layout("posterior")?,
                })
            } else {
                None
            };
            for (what, width, net_in) in [
                ("policy", policy.layout().width(), policy.net().spec().input_dim),
                ("disc", disc.layout().width(), disc.net().spec().input_dim),
                ("value", value.layout.width(), value.net.spec().input_dim),
            ] {
                if width != net_in {
                    return Err(Error::Parse(format!("{what} layout does not match its network")));
                }
            }
            learners.push(Learner::from_networks(&cfg, tasks, policy, disc, value, posterior));
        }
        Ok(Self { variant, learners })
    }

    /// Fails when the networks do not fit `env`'s features and actions.
    pub fn check_env<E: Environment + ?Sized>(&self, env: &E) -> Result<()> {
        for l in &self.learners {
            if l.policy.layout().feature_dim != env.feature_dim() || l.policy.action_space() != env.action_space() {
                return Err(Error::Config("checkpoint does not match the environment".into()));
            }
            if let Some(t) = l.tasks.iter().find(|t| t.index() >= env.n_tasks()) {
                return Err(Error::Config(format!("checkpoint task {} missing from the environment", t.index())));
            }
        }
        Ok(())
    }
}

fn parse_meta<T: FromStr>(ck: &Checkpoint, key: &str) -> Result<T> {
    let v = ck.meta(key)?;
    v.parse().map_err(|_| Error::Parse(format!("bad value '{v}' for {key}")))
}

fn layout_string(l: InputLayout) -> String {
    format!("{},{},{}", l.feature_dim, l.action_dim, l.task_dim)
}

fn parse_layout(s: &str) -> Result<InputLayout> {
    let parts: Vec<usize> = s
        .split(',')
        .map(|p| p.parse().map_err(|_| Error::Parse(format!("bad layout '{s}'"))))
        .collect::<Result<_>>()?;
    match parts.as_slice() {
        [f, a, c] => Ok(InputLayout {
            feature_dim: *f,
            action_dim: *a,
            task_dim: *c,
        }),
        _ => Err(Error::Parse(format!("bad layout '{s}'"))),
    }
}

fn parse_space(s: &str) -> Result<ActionSpace> {
    let bad = || Error::Parse(format!("bad action space '{s}'"));
    let (kind, n) = s.split_once(':').ok_or_else(bad)?;
    let n: usize = n.parse().map_err(|_| bad())?;
    match kind {
        "discrete" => Ok(ActionSpace::Discrete(n)),
        "continuous" => Ok(ActionSpace::Continuous(n)),
        _ => Err(bad()),
    }
}

/// Output of [`train`].
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub records: Vec<MetricsRecord>,
    pub model: TrainedModel,
}

/// Active tasks `0..env.n_tasks()` as task variables of width `cfg.task_dim`.
pub fn active_tasks<E: Environment + ?Sized>(cfg: &TrainConfig, env: &E) -> Result<Vec<TaskVariable>> {
    (0..env.n_tasks()).map(|k| TaskVariable::new(k, cfg.task_dim)).collect()
}

/// Builds the learners for `cfg` and loads their demonstrations.
pub fn initialize<E: Environment + ?Sized>(cfg: &TrainConfig, env: &E, experts: &[Vec<Trajectory>]) -> Result<TrainedModel> {
    cfg.validate()?;
    let tasks = active_tasks(cfg, env)?;
    if experts.len() != tasks.len() {
        return Err(Error::Config(format!("expected demonstrations for {} tasks, got {}", tasks.len(), experts.len())));
    }
    if let Some(k) = experts.iter().position(|e| e.iter().all(|t| t.steps.is_empty())) {
        return Err(Error::Config(format!("no expert transitions for task {k}")));
    }
    let groups: Vec<Vec<TaskVariable>> = if cfg.variant.algorithm == Algorithm::AirlSingleTask {
        tasks.iter().map(|t| vec![*t]).collect()
    } else {
        vec![tasks.clone()]
    };
    let mut learners = Vec::with_capacity(groups.len());
    for (i, group) in groups.into_iter().enumerate() {
        let demos: Vec<Trajectory> = group.iter().flat_map(|t| experts[t.index()].iter().cloned()).collect();
        let mut learner = Learner::new(cfg, env, group, derive_seed(derive_seed(cfg.seed, INIT_TAG), i as u64))?;
        learner.set_demonstrations(env, &demos)?;
        learners.push(learner);
    }
    Ok(TrainedModel {
        variant: cfg.variant,
        learners,
    })
}

/// Runs one epoch for every learner; returns the averaged statistics.
pub fn run_epoch<E: Environment + ?Sized>(cfg: &TrainConfig, env: &E, model: &mut TrainedModel, epoch: usize) -> Result<EpochStats> {
    let beta = cfg.beta_at(epoch);
    let mut total = EpochStats::default();
    let n = model.learners.len() as f64;
    for (i, learner) in model.learners.iter_mut().enumerate() {
        let mut rng = stream(derive_seed(derive_seed(cfg.seed, ROLLOUT_TAG), i as u64), epoch as u64);
        let trajs = learner.collect(env, cfg.rollouts_per_task, &mut rng)?;
        let batch = learner.batch(env, &trajs)?;
        if batch.is_empty() {
            // every episode started at its goal; nothing to learn from
            continue;
        }
        let stats = learner.epoch(cfg, &batch, beta)?;
        total.d_loss += stats.d_loss / n;
        total.v_loss += stats.v_loss / n;
        total.surrogate_gain += stats.surrogate_gain / n;
        total.trpo = stats.trpo;
    }
    Ok(total)
}

/// Greedy success counts for every active task at `epoch`.
pub fn evaluate_model<E: Environment + ?Sized>(cfg: &TrainConfig, env: &E, model: &TrainedModel, epoch: usize) -> Result<Vec<usize>> {
    let base = derive_seed(derive_seed(cfg.seed, EVAL_TAG), epoch as u64);
    active_tasks(cfg, env)?
        .iter()
        .map(|t| Ok(model.evaluate(env, t, cfg.eval, derive_seed(base, t.index() as u64))?.0))
        .collect()
}

/// Full training run; `on_record` sees each metrics record as it is produced.
pub fn train_with<E, F>(cfg: &TrainConfig, env: &E, experts: &[Vec<Trajectory>], mut on_record: F) -> Result<TrainOutcome>
where
    E: Environment + ?Sized,
    F: FnMut(&MetricsRecord) -> Result<()>,
{
    let mut model = initialize(cfg, env, experts)?;
    let mut records = Vec::new();
    for epoch in 0..cfg.epochs {
        let stats = run_epoch(cfg, env, &mut model, epoch)?;
        if cfg.is_eval_epoch(epoch) {
            let record = MetricsRecord {
                epoch,
                beta: cfg.beta_at(epoch),
                d_loss: stats.d_loss,
                v_loss: stats.v_loss,
                surrogate_gain: stats.surrogate_gain,
                successes: evaluate_model(cfg, env, &model, epoch)?,
            };
            on_record(&record)?;
            records.push(record);
        }
    }
    Ok(TrainOutcome { records, model })
}

pub fn train<E: Environment + ?Sized>(cfg: &TrainConfig, env: &E, experts: &[Vec<Trajectory>]) -> Result<TrainOutcome> {
    train_with(cfg, env, experts, |_| Ok(()))
}
