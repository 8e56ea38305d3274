//! Experiment orchestration: conditions, seeds, artifacts and manifests.
//!
//! Each `(condition, seed)` run owns `out/<condition>/seed-<seed>/` and writes
//! `metrics.csv`, `model.ckpt`, `experts.csv` and, on the grid, one
//! `heatmap_task<k>.csv` per task. The experiment root gets `summary.csv`
//! (median curves) and `manifest.csv` (every file with its SHA-256).

pub mod config;
pub mod curves;
pub mod heatmap;
pub mod manifest;

use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

pub use config::{apply_train_overrides, parse_eval, ConfigMap, EnvSpec, ExperimentConfig, ExperimentId, DEFAULT_SEEDS};
pub use curves::{median, median_curve, plot_curves, read_curves_csv, write_curves_csv, CurvePoint};
pub use heatmap::{export_value_heatmap, HeatmapGrid};
pub use manifest::{sha256_hex, Manifest, ManifestEntry};

use crate::env::{
    expert_grid, expert_reacher, rollout_seeded, write_trajectories_csv, EnvKind, Environment, ReacherState, ReacherWorld,
    RolloutOptions, TaskVariable, Trajectory,
};
use crate::error::{Error, Result};
use crate::rng::derive_seed;
use crate::trainer::{
    active_tasks, metrics::metrics_header, train_with, Algorithm, BetaSchedule, EvalMode, MetricsRecord, ModelVariant, TrainConfig,
    TrainedModel,
};

const EXPERT_TAG: u64 = 0x4558;

pub const METRICS_FILE: &str = "metrics.csv";
pub const CHECKPOINT_FILE: &str = "model.ckpt";
pub const EXPERTS_FILE: &str = "experts.csv";
pub const SUMMARY_FILE: &str = "summary.csv";
pub const MANIFEST_FILE: &str = "manifest.csv";
pub const CROSSOVER_FILE: &str = "crossover.csv";

/// Trials per task in the reacher experiment, so the two tasks share 40.
pub const REACHER_TRIALS_PER_TASK: usize = 20;

pub fn heatmap_file(task: &TaskVariable) -> String {
    format!("heatmap_task{}.csv", task.index() + 1)
}

pub fn default_grid_variants() -> Vec<ModelVariant> {
    vec![
        ModelVariant::new(Algorithm::Sgail, true),
        ModelVariant::new(Algorithm::InfoGail, false),
        ModelVariant::new(Algorithm::InfoGailAirl, false),
        ModelVariant::new(Algorithm::InfoGailAirl, true),
    ]
}

pub fn default_reacher_variants() -> Vec<ModelVariant> {
    vec![
        ModelVariant::new(Algorithm::Sgail, true),
        ModelVariant::new(Algorithm::InfoGail, false),
        ModelVariant::new(Algorithm::InfoGailAirl, false),
    ]
}

/// Demonstrations per task for `seed`; a longer request extends a shorter
/// one, so smaller budgets see a prefix of larger ones.
pub fn generate_experts(env: &EnvKind, n_per_task: usize, task_dim: usize, seed: u64) -> Result<Vec<Vec<Trajectory>>> {
    let base = derive_seed(seed, EXPERT_TAG);
    (0..env.n_tasks())
        .map(|k| {
            let task = TaskVariable::new(k, task_dim)?;
            let s = derive_seed(base, k as u64);
            match env {
                EnvKind::Grid(w) => expert_grid(w, &task, n_per_task, s),
                EnvKind::Reacher(w) => expert_reacher(w, &task, n_per_task, s),
            }
        })
        .collect()
}

/// One training setting within an experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct Condition {
    pub name: String,
    pub train: TrainConfig,
}

fn with_variant(base: &TrainConfig, variant: ModelVariant) -> TrainConfig {
    let mut cfg = base.clone();
    cfg.variant = ModelVariant {
        info_lambda1: base.variant.info_lambda1,
        info_lambda2: base.variant.info_lambda2,
        ..variant
    };
    cfg
}

/// Expands an experiment into its conditions.
pub fn conditions(cfg: &ExperimentConfig) -> Result<Vec<Condition>> {
    let base = &cfg.train;
    let span = cfg.beta_span.unwrap_or(base.epochs / 2);
    let sgail = ModelVariant::new(Algorithm::Sgail, true);
    let out = match cfg.experiment {
        ExperimentId::GridVariants => cfg
            .variants
            .clone()
            .unwrap_or_else(default_grid_variants)
            .into_iter()
            .map(|v| Condition {
                name: v.name(),
                train: with_variant(base, v),
            })
            .collect(),
        ExperimentId::GridErc => [
            ("beta-0.9", BetaSchedule::constant(0.9)),
            ("beta-0.6", BetaSchedule::constant(0.6)),
            ("beta-0.9-to-0.6", BetaSchedule::linear(0.9, 0.6, span)),
            ("beta-0.9-to-0.0", BetaSchedule::linear(0.9, 0.0, span)),
        ]
        .into_iter()
        .map(|(name, beta)| {
            let mut train = with_variant(base, sgail);
            train.beta = beta;
            train.experts_per_task = 5;
            Condition { name: name.into(), train }
        })
        .collect(),
        ExperimentId::GridSingleVsMulti => {
            // every model sees ten demonstrations in total
            let schedule = BetaSchedule::linear(0.9, 0.6, span);
            let setups = [
                (sgail, 5),
                (ModelVariant::new(Algorithm::AirlSingleTask, false), 10),
                (ModelVariant::new(Algorithm::AirlSingleTask, true), 10),
            ];
            setups
                .into_iter()
                .map(|(v, n)| {
                    let mut train = with_variant(base, v);
                    train.beta = schedule;
                    train.experts_per_task = n;
                    train.eval = EvalMode::Sweep;
                    Condition { name: v.name(), train }
                })
                .collect()
        }
        ExperimentId::Reacher => cfg
            .variants
            .clone()
            .unwrap_or_else(default_reacher_variants)
            .into_iter()
            .map(|v| {
                let mut train = with_variant(base, v);
                if !cfg.eval_overridden {
                    train.eval = EvalMode::Random(REACHER_TRIALS_PER_TASK);
                }
                Condition { name: v.name(), train }
            })
            .collect(),
    };
    let out: Vec<Condition> = out;
    for c in &out {
        c.train.validate()?;
    }
    Ok(out)
}

/// Files and records of one finished run.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub dir: PathBuf,
    pub records: Vec<MetricsRecord>,
    pub model: TrainedModel,
    pub files: Vec<PathBuf>,
}

/// Generates demonstrations, trains and writes every per-run artifact into
/// `dir`. `on_record` sees each metrics record as it is written.
pub fn run_single<F>(train: &TrainConfig, env: &EnvKind, dir: &Path, mut on_record: F) -> Result<RunOutput>
where
    F: FnMut(&MetricsRecord),
{
    std::fs::create_dir_all(dir)?;
    let experts = generate_experts(env, train.experts_per_task, train.task_dim, train.seed)?;
    let mut files = Vec::new();

    let experts_path = dir.join(EXPERTS_FILE);
    let all: Vec<Trajectory> = experts.iter().flatten().cloned().collect();
    let mut out = std::io::BufWriter::new(std::fs::File::create(&experts_path)?);
    write_trajectories_csv(&mut out, &all, env.action_space())?;
    out.flush()?;
    files.push(experts_path);

    let metrics_path = dir.join(METRICS_FILE);
    let mut metrics = std::io::BufWriter::new(std::fs::File::create(&metrics_path)?);
    writeln!(metrics, "{}", metrics_header(env.n_tasks()))?;
    files.push(metrics_path);
    let outcome = train_with(train, env, &experts, |r| {
        writeln!(metrics, "{}", r.to_csv_row())?;
        metrics.flush()?;
        on_record(r);
        Ok(())
    })?;
    drop(metrics);

    let ckpt_path = dir.join(CHECKPOINT_FILE);
    outcome.model.to_checkpoint()?.save(&ckpt_path)?;
    files.push(ckpt_path);

    match env {
        EnvKind::Grid(world) => {
            for task in active_tasks(train, env)? {
                let path = dir.join(heatmap_file(&task));
                export_value_heatmap(outcome.model.value_for(&task)?, world, &task, &path)?;
                files.push(path);
            }
        }
        EnvKind::Reacher(world) => {
            let path = dir.join(CROSSOVER_FILE);
            let mut out = std::io::BufWriter::new(std::fs::File::create(&path)?);
            write_crossover_csv(&mut out, &reacher_crossover(&outcome.model, world)?)?;
            out.flush()?;
            files.push(path);
        }
    }
    Ok(RunOutput {
        dir: dir.to_path_buf(),
        records: outcome.records,
        model: outcome.model,
        files,
    })
}

pub fn run_dir(out: &Path, condition: &str, seed: u64) -> PathBuf {
    out.join(condition).join(format!("seed-{seed}"))
}

/// Everything an experiment produced.
#[derive(Debug, Clone)]
pub struct ExperimentReport {
    pub conditions: Vec<Condition>,
    /// Records per condition, one entry per seed in config order.
    pub records: Vec<Vec<Vec<MetricsRecord>>>,
    pub curves: Vec<(String, Vec<CurvePoint>)>,
    pub manifest: Manifest,
}

/// Progress callback: condition name, seed and the record just written.
pub type Progress<'a> = &'a (dyn Fn(&str, u64, &MetricsRecord) + Sync);

/// Runs every `(condition, seed)` pair, then writes the summary and
/// manifest. A failed run is flagged in the manifest and its error returned
/// after the remaining runs finish.
pub fn run_experiment(cfg: &ExperimentConfig, progress: Option<Progress<'_>>) -> Result<ExperimentReport> {
    cfg.validate()?;
    let env = cfg.env.build()?;
    let conds = conditions(cfg)?;
    std::fs::create_dir_all(&cfg.out)?;

    let jobs: Vec<(usize, usize)> = (0..conds.len()).flat_map(|c| (0..cfg.seeds.len()).map(move |s| (c, s))).collect();
    let results: Mutex<Vec<Option<std::result::Result<RunOutput, (PathBuf, Error)>>>> =
        Mutex::new((0..jobs.len()).map(|_| None).collect());
    let next = AtomicUsize::new(0);
    let worker = || loop {
        let j = next.fetch_add(1, Ordering::SeqCst);
        let Some(&(c, s)) = jobs.get(j) else { break };
        let cond = &conds[c];
        let seed = cfg.seeds[s];
        let mut train = cond.train.clone();
        train.seed = seed;
        let dir = run_dir(&cfg.out, &cond.name, seed);
        let res = run_single(&train, &env, &dir, |r| {
            if let Some(p) = progress {
                p(&cond.name, seed, r)
            }
        })
        .map_err(|e| (dir, e));
        results.lock().expect("results lock")[j] = Some(res);
    };
    std::thread::scope(|scope| {
        for _ in 1..cfg.jobs {
            scope.spawn(worker);
        }
        worker();
    });
    let results = results.into_inner().expect("results lock");

    let mut manifest = Manifest::default();
    let mut first_error = None;
    let mut records: Vec<Vec<Vec<MetricsRecord>>> = vec![Vec::new(); conds.len()];
    for (&(c, _), res) in jobs.iter().zip(results) {
        match res.expect("every job ran") {
            Ok(run) => {
                for f in &run.files {
                    manifest.add_file(&cfg.out, f, "ok", "")?;
                }
                records[c].push(run.records);
            }
            Err((dir, e)) => {
                manifest.add_partial_run(&cfg.out, &dir, &e.to_string())?;
                first_error.get_or_insert(e);
            }
        }
    }

    let mut curves = Vec::new();
    for (cond, runs) in conds.iter().zip(&records) {
        if runs.len() == cfg.seeds.len() {
            curves.push((cond.name.clone(), median_curve(runs)?));
        }
    }
    let summary_path = cfg.out.join(SUMMARY_FILE);
    let mut out = std::io::BufWriter::new(std::fs::File::create(&summary_path)?);
    write_curves_csv(&mut out, &curves)?;
    out.flush()?;
    drop(out);
    manifest.add_file(&cfg.out, &summary_path, if first_error.is_some() { "partial" } else { "ok" }, "")?;
    manifest.sort();
    manifest.save(&cfg.out.join(MANIFEST_FILE))?;

    if let Some(e) = first_error {
        return Err(e);
    }
    Ok(ExperimentReport {
        conditions: conds,
        records,
        curves,
        manifest,
    })
}

/// A reacher start at rest with the arm stretched toward target `k`, which
/// puts the tip inside that target's success radius.
pub fn reacher_start_on_target(world: &ReacherWorld, k: usize) -> Result<ReacherState> {
    let t = world
        .targets
        .get(k)
        .ok_or_else(|| Error::Config(format!("reacher has no target {}", k + 1)))?;
    Ok(ReacherState::at_rest(t[1].atan2(t[0]), 0.0))
}

/// One greedy rollout that starts on one target under another task.
#[derive(Debug, Clone, PartialEq)]
pub struct CrossoverTrial {
    pub start_target: usize,
    pub task: usize,
    pub reached: bool,
    pub steps: usize,
}

/// For every ordered pair of distinct targets, starts on the first and
/// rolls out greedily under the second's task variable.
pub fn reacher_crossover(model: &TrainedModel, world: &ReacherWorld) -> Result<Vec<CrossoverTrial>> {
    let mut out = Vec::new();
    let tasks = model.tasks();
    for from in 0..world.targets.len() {
        let start = reacher_start_on_target(world, from)?.observation();
        for task in tasks.iter().filter(|t| t.index() != from) {
            let learner = model.learner_for(task)?;
            let opts = RolloutOptions {
                start: Some(start.clone()),
                greedy: true,
            };
            let policy = |s: &[f64], c: &TaskVariable| learner.act(world, s, c);
            let traj = rollout_seeded(world, policy, task, 0, &opts)?;
            out.push(CrossoverTrial {
                start_target: from,
                task: task.index(),
                reached: traj.reached_goal,
                steps: traj.len(),
            });
        }
    }
    Ok(out)
}

pub fn write_crossover_csv<W: Write>(mut out: W, trials: &[CrossoverTrial]) -> Result<()> {
    writeln!(out, "start_target,task,reached,steps")?;
    for t in trials {
        writeln!(out, "{},{},{},{}", t.start_target + 1, t.task + 1, u8::from(t.reached), t.steps)?;
    }
    Ok(())
}

pub fn read_crossover_csv<R: std::io::Read>(mut input: R) -> Result<Vec<CrossoverTrial>> {
    let mut text = String::new();
    input.read_to_string(&mut text)?;
    let mut lines = text.lines();
    if lines.next().map(str::trim_end) != Some("start_target,task,reached,steps") {
        return Err(Error::Parse("unexpected crossover header".into()));
    }
    lines
        .filter(|l| !l.trim().is_empty())
        .map(|l| {
            let f: Vec<&str> = l.trim_end().split(',').collect();
            let num = |s: &str| s.parse::<usize>().map_err(|_| Error::Parse(format!("bad crossover field '{s}'")));
            match f.as_slice() {
                [a, b, c, d] if num(a)? >= 1 && num(b)? >= 1 && num(c)? <= 1 => Ok(CrossoverTrial {
                    start_target: num(a)? - 1,
                    task: num(b)? - 1,
                    reached: num(c)? == 1,
                    steps: num(d)?,
                }),
                _ => Err(Error::Parse(format!("bad crossover row '{l}'"))),
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{GridWorld, ReacherWorld};

    fn small(experiment: ExperimentId, out: &Path) -> ExperimentConfig {
        let mut cfg = ExperimentConfig::new(experiment, out);
        cfg.train.epochs = 2;
        cfg.train.hidden = vec![8];
        cfg.train.rollouts_per_task = 2;
        cfg.seeds = vec![0, 1];
        cfg
    }

    #[test]
    fn condition_sets() {
        let dir = Path::new("unused");
        let names = |e| conditions(&small(e, dir)).unwrap().into_iter().map(|c| c.name).collect::<Vec<_>>();
        assert_eq!(names(ExperimentId::GridVariants), ["sgail-erc", "infogail", "infogail-airl", "infogail-airl-erc"]);
        assert_eq!(names(ExperimentId::GridErc).len(), 4);
        assert_eq!(names(ExperimentId::GridSingleVsMulti), ["sgail-erc", "airl-single", "airl-single-erc"]);
        let erc = conditions(&small(ExperimentId::GridErc, dir)).unwrap();
        assert!(erc.iter().all(|c| c.train.experts_per_task == 5 && c.train.variant.erc));
        assert_eq!(erc[3].train.beta.beta_at(1), 0.0);
        let svm = conditions(&small(ExperimentId::GridSingleVsMulti, dir)).unwrap();
        assert!(svm.iter().all(|c| c.train.eval == EvalMode::Sweep));
        // equal totals: two tasks of five against one task of ten
        assert_eq!(2 * svm[0].train.experts_per_task, svm[1].train.experts_per_task);
        let reacher = conditions(&small(ExperimentId::Reacher, dir)).unwrap();
        assert!(reacher.iter().all(|c| c.train.eval == EvalMode::Random(REACHER_TRIALS_PER_TASK)));
    }

    #[test]
    fn expert_budgets_nest() {
        let env = EnvKind::Grid(GridWorld::default_world());
        let five = generate_experts(&env, 5, 3, 11).unwrap();
        let ten = generate_experts(&env, 10, 3, 11).unwrap();
        for k in 0..2 {
            assert_eq!(five[k][..], ten[k][..5]);
        }
    }

    #[test]
    fn starts_on_targets_are_inside_the_success_radius() {
        let world = ReacherWorld::default();
        for k in 0..2 {
            let s = reacher_start_on_target(&world, k).unwrap();
            assert!(world.is_success(&s.observation(), &TaskVariable::new(k, 3).unwrap()));
            assert!(!world.is_success(&s.observation(), &TaskVariable::new(1 - k, 3).unwrap()));
            let (lo, hi) = crate::env::THETA1_START_RANGE;
            assert!((lo..=hi).contains(&s.theta1));
        }
        assert!(reacher_start_on_target(&world, 2).is_err());
    }

    #[test]
    fn reacher_run_writes_crossover_trials() {
        let tmp = tempfile::tempdir().unwrap();
        let train = TrainConfig { epochs: 1, hidden: vec![8], rollouts_per_task: 1, experts_per_task: 1, ..TrainConfig::default() };
        let run = run_single(&train, &EnvKind::Reacher(ReacherWorld::default()), tmp.path(), |_| {}).unwrap();
        let trials = read_crossover_csv(std::fs::File::open(tmp.path().join(CROSSOVER_FILE)).unwrap()).unwrap();
        assert_eq!(trials.len(), 2);
        assert_eq!((trials[0].start_target, trials[0].task), (0, 1));
        assert_eq!((trials[1].start_target, trials[1].task), (1, 0));
        assert_eq!(run.records.len(), 1);
        let mut buf = Vec::new();
        write_crossover_csv(&mut buf, &trials).unwrap();
        assert_eq!(read_crossover_csv(buf.as_slice()).unwrap(), trials);
    }

    #[test]
    fn experiment_writes_every_artifact_and_is_reproducible() {
        let tmp = tempfile::tempdir().unwrap();
        let cfg = small(ExperimentId::GridSingleVsMulti, &tmp.path().join("a"));
        let report = run_experiment(&cfg, None).unwrap();
        assert_eq!(report.curves.len(), 3);
        for cond in &report.conditions {
            for seed in &cfg.seeds {
                let dir = run_dir(&cfg.out, &cond.name, *seed);
                for f in [METRICS_FILE, CHECKPOINT_FILE, EXPERTS_FILE, "heatmap_task1.csv", "heatmap_task2.csv"] {
                    assert!(dir.join(f).is_file(), "{}", dir.join(f).display());
                }
            }
        }
        let manifest = Manifest::load(&cfg.out.join(MANIFEST_FILE)).unwrap();
        assert_eq!(manifest.entries.len(), 3 * 2 * 5 + 1);
        assert!(manifest.verify(&cfg.out).unwrap());

        let again = small(ExperimentId::GridSingleVsMulti, &tmp.path().join("b"));
        run_experiment(&again, None).unwrap();
        let a = std::fs::read(cfg.out.join(MANIFEST_FILE)).unwrap();
        let b = std::fs::read(again.out.join(MANIFEST_FILE)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn parallel_jobs_match_sequential() {
        let tmp = tempfile::tempdir().unwrap();
        let mut seq = small(ExperimentId::GridErc, &tmp.path().join("seq"));
        seq.seeds = vec![3];
        let mut par = seq.clone();
        par.out = tmp.path().join("par");
        par.jobs = 3;
        run_experiment(&seq, None).unwrap();
        run_experiment(&par, None).unwrap();
        assert_eq!(
            std::fs::read(seq.out.join(MANIFEST_FILE)).unwrap(),
            std::fs::read(par.out.join(MANIFEST_FILE)).unwrap()
        );
    }
}
