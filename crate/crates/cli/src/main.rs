use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};

use sgail::checkpoint::Checkpoint;
use sgail::env::{EnvKind, Environment, TaskVariable};
use sgail::experiment::config::{EnvSpec, TRAIN_KEYS};
use sgail::experiment::{
    apply_train_overrides, heatmap_file, parse_eval, run_experiment, run_single, ConfigMap, ExperimentConfig, HeatmapGrid,
};
use sgail::oracle::{grid_mdp, soft_value_iteration};
use sgail::rng::derive_seed;
use sgail::trainer::{metrics::MetricsRecord, EvalMode, ModelVariant, TrainConfig, TrainedModel};

#[derive(Parser)]
#[command(name = "sgail", version, about = "Situated GAIL training and evaluation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train one model and write its metrics, checkpoint and heatmaps.
    Train {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        variant: Option<String>,
    },
    /// Greedy success counts of a saved model.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Run every condition and seed of an experiment.
    Experiment {
        #[arg(long)]
        config: PathBuf,
        /// Replaces the configured output directory.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Runs this single seed instead of the configured list.
        #[arg(long)]
        seed: Option<u64>,
        /// Restricts grid-variants and reacher to one variant.
        #[arg(long)]
        variant: Option<String>,
    },
    /// Export value heatmaps of a saved grid model.
    Heatmap {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Solve the grid by soft value iteration and report the optimal values.
    Oracle {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn load_map(path: Option<&Path>) -> Result<ConfigMap> {
    match path {
        Some(p) => Ok(ConfigMap::load(p)?),
        None => Ok(ConfigMap::default()),
    }
}

fn env_from(map: &ConfigMap) -> Result<EnvKind> {
    Ok(EnvSpec::from_map(map, EnvSpec::grid())?.build()?)
}

fn grid_of(env: &EnvKind) -> Result<&sgail::env::GridWorld> {
    match env {
        EnvKind::Grid(w) => Ok(w),
        EnvKind::Reacher(_) => bail!("this command needs the grid environment"),
    }
}

fn successes_line(record: &MetricsRecord, trials: &str) -> String {
    let per_task: Vec<String> = record.successes.iter().map(|s| format!("{s}/{trials}")).collect();
    format!(
        "epoch {:>6}  beta {:.3}  d_loss {:.4}  v_loss {:.4}  success {}",
        record.epoch,
        record.beta,
        record.d_loss,
        record.v_loss,
        per_task.join(" ")
    )
}

fn trials_label(mode: EvalMode) -> String {
    match mode {
        EvalMode::Random(n) => n.to_string(),
        EvalMode::Sweep => "sweep".into(),
    }
}

fn train(config: Option<&Path>, seed: Option<u64>, out: &Path, variant: Option<&str>) -> Result<()> {
    let mut map = load_map(config)?;
    let mut known: Vec<&str> = TRAIN_KEYS.to_vec();
    known.push("out");
    map.check_keys(&known)?;
    if let Some(v) = variant {
        map.set("variant", v);
    }
    if let Some(s) = seed {
        map.set("train.seed", s);
    }
    let env = env_from(&map)?;
    let mut cfg = TrainConfig::default();
    apply_train_overrides(&map, &mut cfg)?;
    let label = trials_label(cfg.eval);
    eprintln!("training {} for {} epochs (seed {})", cfg.variant.name(), cfg.epochs, cfg.seed);
    let run = run_single(&cfg, &env, out, |r| eprintln!("{}", successes_line(r, &label)))?;
    if let Some(last) = run.records.last() {
        println!("{}", successes_line(last, &label));
    }
    println!("wrote {}", out.display());
    Ok(())
}

fn load_model(checkpoint: &Path) -> Result<TrainedModel> {
    let ck = Checkpoint::load(checkpoint).with_context(|| format!("loading {}", checkpoint.display()))?;
    Ok(TrainedModel::from_checkpoint(&ck)?)
}

/// Environment for a saved model: the configured one, or the one its action
/// space implies.
fn env_for_model(map: &ConfigMap, model: &TrainedModel) -> Result<EnvKind> {
    let default = match model.learners.first().map(|l| l.policy.action_space()) {
        Some(sgail::env::ActionSpace::Continuous(_)) => EnvSpec::reacher(),
        _ => EnvSpec::grid(),
    };
    let env = EnvSpec::from_map(map, default)?.build()?;
    model.check_env(&env)?;
    Ok(env)
}

fn eval(checkpoint: &Path, config: Option<&Path>, seed: u64) -> Result<()> {
    let map = load_map(config)?;
    let model = load_model(checkpoint)?;
    let env = env_for_model(&map, &model)?;
    let mode = match map.get("train.eval") {
        Some(e) => parse_eval(e)?,
        None => EvalMode::Random(40),
    };
    for task in model.tasks() {
        let (succ, trials) = model.evaluate(&env, &task, mode, derive_seed(seed, task.index() as u64))?;
        println!("task{} {succ}/{trials}", task.index() + 1);
    }
    Ok(())
}

fn experiment(config: &Path, out: Option<PathBuf>, seed: Option<u64>, variant: Option<&str>) -> Result<()> {
    let mut cfg = ExperimentConfig::load(config)?;
    if let Some(out) = out {
        cfg.out = out;
    }
    if let Some(s) = seed {
        cfg.seeds = vec![s];
    }
    if let Some(v) = variant {
        cfg.variants = Some(vec![v.parse::<ModelVariant>()?]);
    }
    eprintln!(
        "experiment {} with {} seed(s) into {}",
        cfg.experiment,
        cfg.seeds.len(),
        cfg.out.display()
    );
    let progress = |cond: &str, seed: u64, r: &MetricsRecord| {
        eprintln!("{cond} seed {seed}: {}", successes_line(r, "-"));
    };
    let report = run_experiment(&cfg, Some(&progress))?;
    for (name, curve) in &report.curves {
        if let Some(last) = curve.last() {
            let medians: Vec<String> = last.medians.iter().map(|m| format!("{m}")).collect();
            println!("{name}: final median success {}", medians.join(" "));
        }
    }
    println!("wrote {}", cfg.out.display());
    Ok(())
}

fn heatmap(checkpoint: &Path, config: Option<&Path>, out: &Path) -> Result<()> {
    let map = load_map(config)?;
    let model = load_model(checkpoint)?;
    let env = env_for_model(&map, &model)?;
    let world = grid_of(&env)?;
    std::fs::create_dir_all(out)?;
    for task in model.tasks() {
        let path = out.join(heatmap_file(&task));
        let grid = sgail::experiment::export_value_heatmap(model.value_for(&task)?, world, &task, &path)?;
        let best = grid.argmax()?;
        println!("task{}: argmax V at ({}, {}) -> {}", task.index() + 1, best.x, best.y, path.display());
    }
    Ok(())
}

fn oracle(config: Option<&Path>, out: Option<&Path>) -> Result<()> {
    let map = load_map(config)?;
    let env = env_from(&map)?;
    let world = grid_of(&env)?;
    let gamma = map.parse_value::<f64>("train.gamma")?.unwrap_or(0.95);
    let omega = map.parse_value::<f64>("oracle.omega")?.unwrap_or(1.0);
    if let Some(dir) = out {
        std::fs::create_dir_all(dir)?;
    }
    for k in 0..env.n_tasks() {
        let task = TaskVariable::new(k, sgail::env::DEFAULT_TASK_DIM)?;
        let g = grid_mdp(world, &task, gamma, omega)?;
        let sol = soft_value_iteration(&g.mdp, 1e-12, 100_000)?;
        let grid = HeatmapGrid::from_fn(world, |s| Ok(sol.v[g.index_of(s).expect("free cell")]))?;
        let best = grid.argmax()?;
        println!(
            "task{}: {} sweeps, residual {:.3e}, argmax V* at ({}, {})",
            k + 1,
            sol.gaps.len(),
            sol.residual,
            best.x,
            best.y
        );
        if let Some(dir) = out {
            let path = dir.join(format!("oracle_value_task{}.csv", k + 1));
            grid.save(&path)?;
            println!("wrote {}", path.display());
        }
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Train {
            config,
            seed,
            out,
            variant,
        } => train(config.as_deref(), seed, &out, variant.as_deref()),
        Command::Eval { checkpoint, config, seed } => eval(&checkpoint, config.as_deref(), seed),
        Command::Experiment {
            config,
            out,
            seed,
            variant,
        } => experiment(&config, out, seed, variant.as_deref()),
        Command::Heatmap { checkpoint, config, out } => heatmap(&checkpoint, config.as_deref(), &out),
        Command::Oracle { config, out } => oracle(config.as_deref(), out.as_deref()),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let msg = format!("{e:#}").replace('\n', " ");
            eprintln!("error: {msg}");
            ExitCode::FAILURE
        }
    }
}
