//! Flat `key = value` configuration files.
//!
//! ```text
//! # comment
//! experiment = grid-erc
//! seeds = 0, 1, 2, 3, 4
//! train.epochs = 5000
//! train.beta = 0.9->0.6
//! trpo.max_kl = 0.01
//! ```

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::env::{EnvKind, GridWorld, ReacherWorld, DEFAULT_GRID_HORIZON};
use crate::error::{Error, Result};
use crate::trainer::{BetaSchedule, EvalMode, ModelVariant, TrainConfig};

/// Parsed `key = value` pairs, keeping the line each came from.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConfigMap {
    entries: BTreeMap<String, (String, usize)>,
}

impl ConfigMap {
    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Parse(format!("config line {line_no}: expected 'key = value'")))?;
            let key = key.trim();
            if key.is_empty() || key.contains(char::is_whitespace) {
                return Err(Error::Parse(format!("config line {line_no}: bad key '{key}'")));
            }
            if entries.insert(key.to_string(), (value.trim().to_string(), line_no)).is_some() {
                return Err(Error::Parse(format!("config line {line_no}: duplicate key '{key}'")));
            }
        }
        Ok(Self { entries })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(|(v, _)| v.as_str())
    }

    pub fn set(&mut self, key: &str, value: impl ToString) {
        self.entries.insert(key.to_string(), (value.to_string(), 0));
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    /// Typed lookup; `None` when the key is absent.
    pub fn parse_value<T: FromStr>(&self, key: &str) -> Result<Option<T>> {
        match self.entries.get(key) {
            None => Ok(None),
            Some((v, line)) => v
                .parse()
                .map(Some)
                .map_err(|_| Error::Parse(format!("{}bad value '{v}' for {key}", location(*line)))),
        }
    }

    /// Comma-separated list lookup.
    pub fn parse_list<T: FromStr>(&self, key: &str) -> Result<Option<Vec<T>>> {
        match self.entries.get(key) {
            None => Ok(None),
            Some((v, line)) => v
                .split(',')
                .map(str::trim)
                .filter(|s| !s.is_empty())
                .map(|s| s.parse().map_err(|_| Error::Parse(format!("{}bad list item '{s}' for {key}", location(*line)))))
                .collect::<Result<Vec<T>>>()
                .map(Some),
        }
    }

    /// Fails on the first key outside `known`.
    pub fn check_keys(&self, known: &[&str]) -> Result<()> {
        match self.entries.iter().find(|(k, _)| !known.contains(&k.as_str())) {
            Some((k, (_, line))) => Err(Error::Config(format!("config line {line}: unknown key '{k}'"))),
            None => Ok(()),
        }
    }
}

/// Line prefix for messages; values set programmatically have no line.
fn location(line: usize) -> String {
    if line == 0 {
        String::new()
    } else {
        format!("config line {line}: ")
    }
}

pub const TRAIN_KEYS: &[&str] = &[
    "variant",
    "env",
    "env.layout",
    "env.horizon",
    "train.epochs",
    "train.experts_per_task",
    "train.rollouts_per_task",
    "train.disc_updates",
    "train.gamma",
    "train.disc_lr",
    "train.value_lr",
    "train.posterior_lr",
    "train.beta",
    "train.beta_span",
    "train.hidden",
    "train.task_dim",
    "train.eval_interval",
    "train.eval",
    "train.info_lambda1",
    "train.info_lambda2",
    "train.seed",
    "trpo.max_kl",
    "trpo.cg_iterations",
    "trpo.cg_damping",
    "trpo.line_search_shrink",
    "trpo.max_backtracks",
];

pub const EXPERIMENT_KEYS: &[&str] = &["experiment", "seeds", "variants", "out", "jobs"];

/// Which environment a run uses and how it is built.
#[derive(Debug, Clone, PartialEq)]
pub enum EnvSpec {
    Grid { layout: Option<PathBuf>, horizon: usize },
    Reacher { horizon: usize },
}

impl EnvSpec {
    pub fn grid() -> Self {
        EnvSpec::Grid {
            layout: None,
            horizon: DEFAULT_GRID_HORIZON,
        }
    }

    pub fn reacher() -> Self {
        EnvSpec::Reacher {
            horizon: ReacherWorld::default().horizon,
        }
    }

    pub fn is_grid(&self) -> bool {
        matches!(self, EnvSpec::Grid { .. })
    }

    pub fn build(&self) -> Result<EnvKind> {
        match self {
            EnvSpec::Grid { layout: None, horizon } => Ok(EnvKind::Grid(GridWorld::default_world().with_horizon(*horizon))),
            EnvSpec::Grid {
                layout: Some(path),
                horizon,
            } => Ok(EnvKind::Grid(GridWorld::load(path, *horizon)?)),
            EnvSpec::Reacher { horizon } => Ok(EnvKind::Reacher(ReacherWorld {
                horizon: *horizon,
                ..ReacherWorld::default()
            })),
        }
    }

    /// Reads `env`, `env.layout` and `env.horizon`, starting from `default`.
    pub fn from_map(map: &ConfigMap, default: EnvSpec) -> Result<Self> {
        let mut spec = match map.get("env") {
            None => default,
            Some("grid") => EnvSpec::grid(),
            Some("reacher") => EnvSpec::reacher(),
            Some(other) => return Err(Error::Config(format!("unknown env '{other}' (expected grid or reacher)"))),
        };
        if let Some(h) = map.parse_value::<usize>("env.horizon")? {
            match &mut spec {
                EnvSpec::Grid { horizon, .. } | EnvSpec::Reacher { horizon } => *horizon = h,
            }
        }
        if let Some(path) = map.get("env.layout") {
            match &mut spec {
                EnvSpec::Grid { layout, .. } => *layout = Some(PathBuf::from(path)),
                EnvSpec::Reacher { .. } => return Err(Error::Config("env.layout applies to the grid only".into())),
            }
        }
        Ok(spec)
    }
}

/// Applies `train.*`, `trpo.*` and `variant` overrides to `cfg`.
///
/// `train.beta` is resolved last so that its default span follows the final
/// epoch count.
pub fn apply_train_overrides(map: &ConfigMap, cfg: &mut TrainConfig) -> Result<()> {
    if let Some(v) = map.parse_value::<ModelVariant>("variant")? {
        let (l1, l2) = (cfg.variant.info_lambda1, cfg.variant.info_lambda2);
        cfg.variant = v;
        if (l1, l2) != (ModelVariant::DEFAULT_LAMBDA1, ModelVariant::DEFAULT_LAMBDA2) {
            cfg.variant.info_lambda1 = l1;
            cfg.variant.info_lambda2 = l2;
        }
    }
    macro_rules! set {
        ($key:literal, $field:expr) => {
            if let Some(v) = map.parse_value($key)? {
                $field = v;
            }
        };
    }
    set!("train.epochs", cfg.epochs);
    set!("train.experts_per_task", cfg.experts_per_task);
    set!("train.rollouts_per_task", cfg.rollouts_per_task);
    set!("train.disc_updates", cfg.disc_updates);
    set!("train.gamma", cfg.gamma);
    set!("train.disc_lr", cfg.disc_lr);
    set!("train.value_lr", cfg.value_lr);
    set!("train.posterior_lr", cfg.posterior_lr);
    set!("train.task_dim", cfg.task_dim);
    set!("train.eval_interval", cfg.eval_interval);
    set!("train.info_lambda1", cfg.variant.info_lambda1);
    set!("train.info_lambda2", cfg.variant.info_lambda2);
    set!("train.seed", cfg.seed);
    set!("trpo.max_kl", cfg.trpo.max_kl);
    set!("trpo.cg_iterations", cfg.trpo.cg_iterations);
    set!("trpo.cg_damping", cfg.trpo.cg_damping);
    set!("trpo.line_search_shrink", cfg.trpo.line_search_shrink);
    set!("trpo.max_backtracks", cfg.trpo.max_backtracks);
    if let Some(h) = map.parse_list::<usize>("train.hidden")? {
        cfg.hidden = h;
    }
    if let Some(e) = map.get("train.eval") {
        cfg.eval = parse_eval(e)?;
    }
    let span = map.parse_value::<usize>("train.beta_span")?;
    if let Some(b) = map.get("train.beta") {
        cfg.beta = BetaSchedule::parse(b, span.unwrap_or(cfg.epochs / 2))?;
    } else if let Some(span) = span {
        cfg.beta.span = span;
    }
    cfg.validate()
}

/// `sweep` or `random:N` (a bare `N` also means random).
pub fn parse_eval(s: &str) -> Result<EvalMode> {
    let s = s.trim();
    if s == "sweep" {
        return Ok(EvalMode::Sweep);
    }
    let n = s.strip_prefix("random:").unwrap_or(s);
    match n.trim().parse::<usize>() {
        Ok(n) if n > 0 => Ok(EvalMode::Random(n)),
        _ => Err(Error::Config(format!("bad eval mode '{s}' (expected sweep or random:N)"))),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExperimentId {
    GridVariants,
    GridErc,
    GridSingleVsMulti,
    Reacher,
}

impl ExperimentId {
    pub const ALL: [ExperimentId; 4] = [
        ExperimentId::GridVariants,
        ExperimentId::GridErc,
        ExperimentId::GridSingleVsMulti,
        ExperimentId::Reacher,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ExperimentId::GridVariants => "grid-variants",
            ExperimentId::GridErc => "grid-erc",
            ExperimentId::GridSingleVsMulti => "grid-singleVsMulti",
            ExperimentId::Reacher => "reacher",
        }
    }

    pub fn default_env(self) -> EnvSpec {
        match self {
            ExperimentId::Reacher => EnvSpec::reacher(),
            _ => EnvSpec::grid(),
        }
    }
}

impl fmt::Display for ExperimentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ExperimentId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|e| e.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown experiment '{s}'")))
    }
}

pub const DEFAULT_SEEDS: [u64; 5] = [0, 1, 2, 3, 4];

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub experiment: ExperimentId,
    /// Base settings; each condition overrides its own fields.
    pub train: TrainConfig,
    /// Variant list for grid-variants and reacher; `None` uses the defaults.
    pub variants: Option<Vec<ModelVariant>>,
    pub seeds: Vec<u64>,
    pub out: PathBuf,
    pub env: EnvSpec,
    /// Explicit `train.beta_span`; schedules built per condition default to
    /// half the epochs.
    pub beta_span: Option<usize>,
    /// Whether `train.eval` was given, which suppresses per-experiment
    /// evaluation defaults.
    pub eval_overridden: bool,
    /// Runs executed concurrently.
    pub jobs: usize,
}

impl ExperimentConfig {
    pub fn new(experiment: ExperimentId, out: impl Into<PathBuf>) -> Self {
        Self {
            experiment,
            train: TrainConfig::default(),
            variants: None,
            seeds: DEFAULT_SEEDS.to_vec(),
            out: out.into(),
            env: experiment.default_env(),
            beta_span: None,
            eval_overridden: false,
            jobs: 1,
        }
    }

    pub fn from_map(map: &ConfigMap) -> Result<Self> {
        let known: Vec<&str> = EXPERIMENT_KEYS.iter().chain(TRAIN_KEYS).copied().collect();
        map.check_keys(&known)?;
        let experiment: ExperimentId = map
            .get("experiment")
            .ok_or_else(|| Error::Config("config needs an 'experiment' key".into()))?
            .parse()?;
        let mut cfg = Self::new(experiment, map.get("out").unwrap_or("runs"));
        apply_train_overrides(map, &mut cfg.train)?;
        if let Some(seeds) = map.parse_list::<u64>("seeds")? {
            cfg.seeds = seeds;
        }
        cfg.variants = map.parse_list::<ModelVariant>("variants")?;
        cfg.env = EnvSpec::from_map(map, experiment.default_env())?;
        cfg.beta_span = map.parse_value("train.beta_span")?;
        cfg.eval_overridden = map.get("train.eval").is_some();
        if let Some(jobs) = map.parse_value("jobs")? {
            cfg.jobs = jobs;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_map(&ConfigMap::load(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(Error::Config("seeds must not be empty".into()));
        }
        let mut sorted = self.seeds.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != self.seeds.len() {
            return Err(Error::Config("seeds must be distinct".into()));
        }
        if self.jobs == 0 {
            return Err(Error::Config("jobs must be at least 1".into()));
        }
        if matches!(&self.variants, Some(v) if v.is_empty()) {
            return Err(Error::Config("variants must not be empty".into()));
        }
        if (self.experiment == ExperimentId::Reacher) == self.env.is_grid() {
            return Err(Error::Config(format!("experiment {} cannot run on this env", self.experiment)));
        }
        self.train.validate()
    }
}
