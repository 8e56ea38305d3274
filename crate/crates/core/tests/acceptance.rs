//! Acceptance gates, one PASS/FAIL line per criterion.
//!
//! Criteria that need full-scale training (5 through 9) are judged on the
//! recorded experiment outputs under `results/` (override with
//! `SGAIL_RESULTS`). `SGAIL_ACCEPTANCE_FULL=1` regenerates those outputs from
//! `configs/` first, which takes hours. The reduced grid gate of criterion 5
//! always trains live.
//!
//! The process exits non-zero on a FAIL only when `SGAIL_ACCEPTANCE_STRICT=1`.

use std::path::{Path, PathBuf};
use std::time::Instant;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_distr::StandardNormal;

use sgail::autodiff::{stack_rows, ParamVector};
use sgail::env::{
    Action, ActionSpace, EnvKind, Environment, GridAction, GridState, GridWorld, ReacherWorld, TaskVariable,
};
use sgail::experiment::{
    generate_experts, median, read_crossover_csv, run_experiment, ExperimentConfig, HeatmapGrid, Manifest, CROSSOVER_FILE,
    MANIFEST_FILE, METRICS_FILE,
};
use sgail::models::{airl_log_d, BatchActions, ConditionalPolicy};
use sgail::optim::{surrogate, trpo_step, TrpoConfig, TrustRegionProblem};
use sgail::oracle::{grid_mdp, mutual_information_exact, soft_advantage, soft_value_iteration};
use sgail::rng::SimRng;
use sgail::trainer::objectives::{discriminator_loss, mi_lower_bound_weighted, DiscBatch};
use sgail::trainer::{
    read_metrics_csv, train, train_with, write_metrics_csv, Algorithm, Learner, MetricsRecord, ModelVariant, TrainConfig,
    TrainedModel,
};

// criterion 1
const IDENTITY_SAMPLES: usize = 10_000;
const IDENTITY_TOL: f64 = 1e-9;
// criterion 2
const FD_COORDS: usize = 120;
const FD_STEPS: [f64; 3] = [1e-5, 1e-6, 1e-7];
/// Steps kept per trajectory, so few rows sit near a leaky-ReLU kink.
const FD_STEPS_PER_TRAJ: usize = 30;
const FD_FLOOR: f64 = 1e-5;
const FD_TOL: f64 = 1e-4;
// criterion 3
const VI_RESIDUAL: f64 = 1e-10;
const ADVANTAGE_TOL: f64 = 1e-9;
const MI_JOINTS: usize = 1_000;
const MI_GAP_TOL: f64 = 1e-9;
// criterion 4
const TRPO_CASES: usize = 50;
const TRPO_KL_FACTOR: f64 = 1.5;
// criterion 5
const GRID_TRIALS: f64 = 40.0;
const FULL_SGAIL_MIN: f64 = 36.0;
const FULL_MARGIN_OVER_INFOGAIL: f64 = 0.20;
const INFOGAIL_AIRL_TARGET: f64 = 0.70;
const INFOGAIL_AIRL_BAND: f64 = 0.15;
const REDUCED_EPOCHS: usize = 5_000;
const REDUCED_SGAIL_MIN: f64 = 30.0;
const REDUCED_SEEDS: [u64; 5] = [0, 1, 2, 3, 4];
// criterion 6
const HEATMAP_CHEBYSHEV: i64 = 1;
const HEATMAP_MIN_SEEDS: usize = 4;
// criterion 7
const ERC_FRACTION_OF_FINAL: f64 = 0.8;
const ERC_DECAY_DROP: f64 = 0.10;
// criterion 9
const REACHER_TRIALS: f64 = 40.0;
const REACHER_TOTAL_MIN: f64 = 28.0;
const REACHER_TASK_MIN: f64 = 12.0;
const REACHER_MARGIN: f64 = 8.0;
const CROSSOVER_MIN_SEEDS: usize = 3;
// diagnostic
const SPEARMAN_TARGET: f64 = 0.5;

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict {
        pass,
        detail: detail.into(),
    }
}

fn fail(detail: impl Into<String>) -> Verdict {
    verdict(false, detail)
}

fn env_flag(name: &str) -> bool {
    std::env::var(name).is_ok_and(|v| v == "1")
}

fn workspace_root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn results_root() -> PathBuf {
    std::env::var_os("SGAIL_RESULTS")
        .map(PathBuf::from)
        .unwrap_or_else(|| workspace_root().join("results"))
}

fn task(k: usize) -> TaskVariable {
    TaskVariable::new(k, 3).expect("task variable")
}

fn rng(seed: u64) -> SimRng {
    SimRng::seed_from_u64(seed)
}

// ---------------------------------------------------------------- criterion 1

fn identity_suite() -> Verdict {
    let mut r = rng(1);
    let mut worst: f64 = 0.0;
    for _ in 0..IDENTITY_SAMPLES {
        let f = r.random_range(-20.0..20.0);
        let log_pi = r.random_range(-20.0..0.0);
        let beta = r.random_range(0.0..=1.0);
        let (log_d, log_1md) = match airl_log_d(f, log_pi) {
            Ok(v) => v,
            Err(e) => return fail(format!("log D failed at f={f}, log pi={log_pi}: {e}")),
        };
        let lhs = log_d - log_1md + beta * log_pi;
        let rhs = f - (1.0 - beta) * log_pi;
        worst = worst.max((lhs - rhs).abs());
    }
    verdict(
        worst <= IDENTITY_TOL,
        format!("max |error| {worst:.2e} over {IDENTITY_SAMPLES} triples (tol {IDENTITY_TOL:.0e})"),
    )
}

// ---------------------------------------------------------------- criterion 2

/// Worst relative error of `grad` against central differences of `loss` on
/// `FD_COORDS` random coordinates. A coordinate that misses at the first step
/// is retried at smaller steps, since a larger step can straddle a
/// leaky-ReLU kink; the best agreement counts.
fn fd_worst<F>(params: &[f64], grad: &[f64], mut loss: F, r: &mut SimRng) -> sgail::Result<f64>
where
    F: FnMut(&[f64]) -> sgail::Result<f64>,
{
    let mut worst: f64 = 0.0;
    let mut p = params.to_vec();
    for _ in 0..FD_COORDS {
        let i = r.random_range(0..p.len());
        let orig = p[i];
        let mut best = f64::INFINITY;
        for h in FD_STEPS {
            p[i] = orig + h;
            let up = loss(&p)?;
            p[i] = orig - h;
            let down = loss(&p)?;
            p[i] = orig;
            let fd = (up - down) / (2.0 * h);
            best = best.min((grad[i] - fd).abs() / grad[i].abs().max(fd.abs()).max(FD_FLOOR));
            if best <= FD_TOL {
                break;
            }
        }
        worst = worst.max(best);
    }
    Ok(worst)
}

struct GradientReport {
    name: String,
    worst: f64,
    coords: usize,
}

fn gradient_checks(alg: Algorithm, env: &EnvKind, seed: u64) -> sgail::Result<Vec<GradientReport>> {
    let variant = ModelVariant::new(alg, alg != Algorithm::InfoGail);
    let cfg = TrainConfig {
        variant,
        ..TrainConfig::default()
    };
    let tasks = if alg == Algorithm::AirlSingleTask { vec![task(0)] } else { vec![task(0), task(1)] };
    let learner = Learner::new(&cfg, env, tasks.clone(), seed)?;
    let experts = generate_experts(env, 2, 3, seed)?;
    let truncate = |mut t: sgail::env::Trajectory| {
        t.steps.truncate(FD_STEPS_PER_TRAJ);
        t
    };
    let demos: Vec<_> = tasks.iter().flat_map(|t| experts[t.index()].iter().cloned().map(truncate)).collect();
    let expert = learner.batch(env, &demos)?;
    let mut r = rng(seed ^ 0x5eed);
    let gen_trajs: Vec<_> = learner.collect(env, 1, &mut r)?.into_iter().map(truncate).collect();
    let generator = learner.batch(env, &gen_trajs)?;
    let env_name = if matches!(env, EnvKind::Grid(_)) { "grid" } else { "reacher" };
    let label = |net: &str| format!("{}/{env_name}/{net}", variant.name());
    let mut out = Vec::new();

    // discriminator
    let log_pi_e: Vec<f64> = (0..expert.len()).map(|_| r.random_range(-3.0..0.0)).collect();
    let log_pi_g: Vec<f64> = (0..generator.len()).map(|_| r.random_range(-3.0..0.0)).collect();
    let batches = |h: &sgail::trainer::objectives::DiscHead| {
        discriminator_loss(
            h,
            DiscBatch {
                inputs: expert.disc_inputs.view(),
                log_pi: &log_pi_e,
            },
            DiscBatch {
                inputs: generator.disc_inputs.view(),
                log_pi: &log_pi_g,
            },
        )
    };
    let (_, grad) = batches(&learner.disc)?;
    let mut head = learner.disc.clone();
    let params = head.net().params().to_vec();
    let worst = fd_worst(
        &params,
        &grad,
        |p| {
            head.net_mut().set_params(ParamVector::from_vec(p.to_vec()))?;
            Ok(batches(&head)?.0)
        },
        &mut r,
    )?;
    out.push(GradientReport {
        name: label(if learner.disc.is_airl() { "airl-disc" } else { "plain-disc" }),
        worst,
        coords: FD_COORDS,
    });

    // value function
    let targets: Vec<f64> = (0..generator.len()).map(|_| r.random_range(-1.0..1.0)).collect();
    let (_, grad) = learner.value.mse_and_gradient(generator.value_inputs.view(), &targets)?;
    let mut value = learner.value.clone();
    let params = value.net.params().to_vec();
    let worst = fd_worst(
        &params,
        &grad,
        |p| {
            value.net.set_params(ParamVector::from_vec(p.to_vec()))?;
            Ok(value.mse_and_gradient(generator.value_inputs.view(), &targets)?.0)
        },
        &mut r,
    )?;
    out.push(GradientReport {
        name: label("value"),
        worst,
        coords: FD_COORDS,
    });

    // posterior
    if let (Some(q), Some(inputs)) = (&learner.posterior, &generator.posterior_inputs) {
        let (_, grad) = q.mean_log_q_and_gradient(inputs.view(), &generator.codes)?;
        let mut q = q.clone();
        let params = q.net.params().to_vec();
        let worst = fd_worst(
            &params,
            &grad,
            |p| {
                q.net.set_params(ParamVector::from_vec(p.to_vec()))?;
                Ok(q.mean_log_q_and_gradient(inputs.view(), &generator.codes)?.0)
            },
            &mut r,
        )?;
        out.push(GradientReport {
            name: label("posterior"),
            worst,
            coords: FD_COORDS,
        });
    }

    // policy score
    let weights: Vec<f64> = (0..generator.len()).map(|_| r.sample(StandardNormal)).collect();
    let mut policy = learner.policy.clone();
    let mut batch = policy.bind(generator.policy_inputs.clone(), generator.actions.clone())?;
    let grad = batch.weighted_score(&weights)?;
    let params = batch.params();
    let worst = fd_worst(
        &params,
        &grad,
        |p| {
            batch.set_params(&ParamVector::from_vec(p.to_vec()))?;
            Ok(batch.log_probs()?.iter().zip(&weights).map(|(l, w)| l * w).sum())
        },
        &mut r,
    )?;
    out.push(GradientReport {
        name: label("policy"),
        worst,
        coords: FD_COORDS,
    });
    Ok(out)
}

fn gradient_suite() -> Verdict {
    let envs = [
        EnvKind::Grid(GridWorld::default_world()),
        EnvKind::Reacher(ReacherWorld::default()),
    ];
    let algs = [Algorithm::Sgail, Algorithm::InfoGail, Algorithm::InfoGailAirl, Algorithm::AirlSingleTask];
    let mut reports = Vec::new();
    for (i, env) in envs.iter().enumerate() {
        for (j, alg) in algs.iter().enumerate() {
            match gradient_checks(*alg, env, (10 * i + j) as u64) {
                Ok(r) => reports.extend(r),
                Err(e) => return fail(format!("{} on env {i}: {e}", alg.name())),
            }
        }
    }
    let worst = reports.iter().max_by(|a, b| a.worst.total_cmp(&b.worst)).expect("reports");
    let min_coords = reports.iter().map(|r| r.coords).min().unwrap_or(0);
    verdict(
        worst.worst <= FD_TOL && min_coords >= 100,
        format!(
            "{} network checks, {} coordinates each, worst relative error {:.2e} ({}) (tol {FD_TOL:.0e})",
            reports.len(),
            min_coords,
            worst.worst,
            worst.name
        ),
    )
}

// ---------------------------------------------------------------- criterion 3

fn random_simplex(r: &mut SimRng, n: usize) -> Vec<f64> {
    let raw: Vec<f64> = (0..n).map(|_| r.random_range(0.01..1.0)).collect();
    let s: f64 = raw.iter().sum();
    raw.into_iter().map(|x| x / s).collect()
}

fn oracle_suite() -> Verdict {
    let world = GridWorld::default_world();
    let mut worst_residual: f64 = 0.0;
    let mut worst_adv: f64 = 0.0;
    for k in 0..2 {
        let g = match grid_mdp(&world, &task(k), 0.95, 1.0) {
            Ok(g) => g,
            Err(e) => return fail(e.to_string()),
        };
        let sol = match soft_value_iteration(&g.mdp, 1e-13, 100_000) {
            Ok(s) => s,
            Err(e) => return fail(e.to_string()),
        };
        worst_residual = worst_residual.max(sol.residual);
        let adv = soft_advantage(&sol.v, &sol.q).expect("shapes");
        for (a_s, p_s) in adv.iter().zip(&sol.policy) {
            for (a, p) in a_s.iter().zip(p_s) {
                worst_adv = worst_adv.max((a - g.mdp.omega() * p.ln()).abs());
            }
        }
    }

    let mut r = rng(3);
    let mut violations = 0;
    let mut worst_gap: f64 = 0.0;
    for _ in 0..MI_JOINTS {
        let nc = r.random_range(2..=4);
        let nx = r.random_range(2..=6);
        let flat = random_simplex(&mut r, nc * nx);
        let joint: Vec<Vec<f64>> = flat.chunks(nx).map(<[f64]>::to_vec).collect();
        let prior: Vec<f64> = joint.iter().map(|row| row.iter().sum()).collect();
        let px: Vec<f64> = (0..nx).map(|x| joint.iter().map(|row| row[x]).sum()).collect();
        let mi = mutual_information_exact(&joint).expect("valid joint");
        let weights: Vec<f64> = joint.iter().flatten().copied().collect();
        // a random posterior for every x
        let q: Vec<Vec<f64>> = (0..nx).map(|_| random_simplex(&mut r, nc)).collect();
        let log_q: Vec<f64> = (0..nc).flat_map(|c| (0..nx).map(|x| q[x][c].ln()).collect::<Vec<_>>()).collect();
        let bound = mi_lower_bound_weighted(&weights, &log_q, &prior).expect("bound");
        if bound > mi + 1e-12 {
            violations += 1;
        }
        let true_log_q: Vec<f64> = (0..nc)
            .flat_map(|c| (0..nx).map(|x| (joint[c][x] / px[x]).ln()).collect::<Vec<_>>())
            .collect();
        let tight = mi_lower_bound_weighted(&weights, &true_log_q, &prior).expect("bound");
        worst_gap = worst_gap.max((tight - mi).abs());
    }
    verdict(
        worst_residual <= VI_RESIDUAL && worst_adv <= ADVANTAGE_TOL && violations == 0 && worst_gap <= MI_GAP_TOL,
        format!(
            "residual {worst_residual:.1e}, |A* - w log pi*| {worst_adv:.1e}, bound violations {violations}/{MI_JOINTS}, tight gap {worst_gap:.1e}"
        ),
    )
}

// ---------------------------------------------------------------- criterion 4

fn random_policy_batch(r: &mut SimRng, case: usize) -> sgail::Result<(ConditionalPolicy, Array2<f64>, BatchActions)> {
    let feature_dim = r.random_range(1..=4);
    let task_dim = r.random_range(0..=3);
    let space = if case % 2 == 0 {
        ActionSpace::Discrete(r.random_range(2..=5))
    } else {
        ActionSpace::Continuous(r.random_range(1..=3))
    };
    let hidden: Vec<usize> = (0..r.random_range(1..=2)).map(|_| r.random_range(4..=12)).collect();
    let policy = ConditionalPolicy::new(feature_dim, task_dim, space, &hidden, case as u64)?;
    let n = r.random_range(8..=40);
    let mut rows = Vec::with_capacity(n);
    let mut actions = Vec::with_capacity(n);
    for _ in 0..n {
        let features: Vec<f64> = (0..feature_dim).map(|_| r.random_range(-1.0..1.0)).collect();
        let row = if task_dim > 0 {
            policy.input(&features, &TaskVariable::new(r.random_range(0..task_dim), task_dim)?)?
        } else {
            features
        };
        rows.push(row);
        actions.push(match space {
            ActionSpace::Discrete(k) => Action::Discrete(r.random_range(0..k)),
            ActionSpace::Continuous(d) => Action::Continuous((0..d).map(|_| r.sample(StandardNormal)).collect()),
        });
    }
    let inputs = stack_rows(&rows, feature_dim + task_dim)?;
    Ok((policy, inputs, BatchActions::from_actions(&actions, space)?))
}

fn trpo_contract() -> Verdict {
    let cfg = TrpoConfig::default();
    let mut r = rng(4);
    let (mut accepted, mut worst_kl, mut worst_gain) = (0, 0.0_f64, f64::INFINITY);
    let mut untouched = 0;
    for case in 0..TRPO_CASES {
        let mut run = || -> sgail::Result<(bool, f64, f64, bool)> {
            let (mut policy, inputs, actions) = random_policy_batch(&mut r, case)?;
            let mut zero_policy = policy.clone();
            let n = inputs.nrows();
            let mut adv: Vec<f64> = (0..n).map(|_| r.sample(StandardNormal)).collect();
            let mean = adv.iter().sum::<f64>() / n as f64;
            adv.iter_mut().for_each(|a| *a -= mean);

            let mut batch = policy.bind(inputs.clone(), actions.clone())?;
            let before = surrogate(&batch, &adv)?;
            let report = trpo_step(&mut batch, &adv, &cfg)?;
            let kl = batch.mean_kl()?;
            let gain = surrogate(&batch, &adv)? - before;

            let mut zero_batch = zero_policy.bind(inputs, actions)?;
            let p0 = zero_batch.params();
            trpo_step(&mut zero_batch, &vec![0.0; n], &cfg)?;
            let p1 = zero_batch.params();
            let same = p0.iter().zip(p1.iter()).all(|(a, b)| a.to_bits() == b.to_bits());
            Ok((report.accepted, kl, gain, same))
        };
        match run() {
            Ok((acc, kl, gain, same)) => {
                if acc {
                    accepted += 1;
                    worst_kl = worst_kl.max(kl);
                    worst_gain = worst_gain.min(gain);
                }
                if same {
                    untouched += 1;
                }
            }
            Err(e) => return fail(format!("case {case}: {e}")),
        }
    }
    let limit = TRPO_KL_FACTOR * cfg.max_kl;
    verdict(
        accepted > 0 && worst_kl <= limit && worst_gain >= 0.0 && untouched == TRPO_CASES,
        format!(
            "{accepted}/{TRPO_CASES} steps accepted, max KL {worst_kl:.4} (limit {limit}), min surrogate gain {worst_gain:.2e}, zero-advantage untouched {untouched}/{TRPO_CASES}"
        ),
    )
}

// ---------------------------------------------------------------- artifacts

fn load_runs(exp_dir: &Path, condition: &str) -> Result<Vec<(u64, Vec<MetricsRecord>)>, String> {
    let dir = exp_dir.join(condition);
    let entries = std::fs::read_dir(&dir).map_err(|e| format!("{}: {e}", dir.display()))?;
    let mut runs = Vec::new();
    for entry in entries.flatten() {
        let name = entry.file_name().to_string_lossy().into_owned();
        let Some(seed) = name.strip_prefix("seed-").and_then(|s| s.parse::<u64>().ok()) else {
            continue;
        };
        let path = entry.path().join(METRICS_FILE);
        let file = std::fs::File::open(&path).map_err(|e| format!("{}: {e}", path.display()))?;
        let records = read_metrics_csv(file).map_err(|e| format!("{}: {e}", path.display()))?;
        if records.is_empty() {
            return Err(format!("{} has no records", path.display()));
        }
        runs.push((seed, records));
    }
    runs.sort_by_key(|(s, _)| *s);
    if runs.is_empty() {
        return Err(format!("no runs under {}", dir.display()));
    }
    Ok(runs)
}

fn check_manifest(exp_dir: &Path) -> Result<(), String> {
    let manifest = Manifest::load(&exp_dir.join(MANIFEST_FILE)).map_err(|e| format!("{}: {e}", exp_dir.display()))?;
    if !manifest.is_complete() {
        return Err(format!("{} lists failed or partial runs", exp_dir.display()));
    }
    for e in &manifest.entries {
        let path = exp_dir.join(&e.path);
        if let Ok(bytes) = std::fs::read(&path) {
            if sgail::experiment::sha256_hex(&bytes) != e.sha256 {
                return Err(format!("{} does not match its manifest hash", path.display()));
            }
        }
    }
    Ok(())
}

fn final_of(records: &[MetricsRecord]) -> &MetricsRecord {
    records.last().expect("nonempty run")
}

fn median_of(values: impl IntoIterator<Item = f64>) -> f64 {
    median(&values.into_iter().collect::<Vec<_>>()).expect("nonempty")
}

/// Median across seeds of the final success on task `k`.
fn median_final_task(runs: &[(u64, Vec<MetricsRecord>)], k: usize) -> f64 {
    median_of(runs.iter().map(|(_, r)| final_of(r).successes[k] as f64))
}

fn median_final_total(runs: &[(u64, Vec<MetricsRecord>)]) -> f64 {
    median_of(runs.iter().map(|(_, r)| final_of(r).successes.iter().sum::<usize>() as f64))
}

/// Median-across-seeds curve of a per-record statistic.
fn median_curve_of(runs: &[(u64, Vec<MetricsRecord>)], stat: impl Fn(&MetricsRecord) -> f64) -> Result<Vec<(usize, f64)>, String> {
    let first = &runs[0].1;
    if runs.iter().any(|(_, r)| r.len() != first.len()) {
        return Err("runs disagree on the evaluation schedule".into());
    }
    Ok((0..first.len())
        .map(|i| (first[i].epoch, median_of(runs.iter().map(|(_, r)| stat(&r[i])))))
        .collect())
}

fn with_experiment<F>(name: &str, judge: F) -> Verdict
where
    F: FnOnce(&Path) -> Result<Verdict, String>,
{
    let dir = results_root().join(name);
    if let Err(e) = check_manifest(&dir) {
        return fail(format!("recorded {name} outputs unusable: {e}"));
    }
    judge(&dir).unwrap_or_else(fail)
}

/// Runs every experiment from `configs/` into the results directory.
fn regenerate_results() -> Result<(), String> {
    let configs = workspace_root().join("configs");
    for name in ["grid-variants", "grid-erc", "grid-singleVsMulti", "reacher"] {
        let path = configs.join(format!("{name}.cfg"));
        let mut cfg = ExperimentConfig::load(&path).map_err(|e| format!("{}: {e}", path.display()))?;
        cfg.out = results_root().join(name);
        eprintln!("regenerating {name} into {}", cfg.out.display());
        run_experiment(&cfg, None).map_err(|e| format!("{name}: {e}"))?;
    }
    Ok(())
}

// ---------------------------------------------------------------- criterion 5

struct ReducedGate {
    medians: Vec<f64>,
    models: Vec<TrainedModel>,
    seconds: f64,
}

fn reduced_gate() -> sgail::Result<ReducedGate> {
    let start = Instant::now();
    let env = EnvKind::Grid(GridWorld::default_world());
    let mut finals: Vec<Vec<usize>> = Vec::new();
    let mut models = Vec::new();
    for seed in REDUCED_SEEDS {
        let cfg = TrainConfig {
            epochs: REDUCED_EPOCHS,
            seed,
            ..TrainConfig::default()
        };
        let experts = generate_experts(&env, cfg.experts_per_task, cfg.task_dim, seed)?;
        let out = train(&cfg, &env, &experts)?;
        finals.push(final_of(&out.records).successes.clone());
        models.push(out.model);
    }
    let medians = (0..2).map(|k| median_of(finals.iter().map(|f| f[k] as f64))).collect();
    Ok(ReducedGate {
        medians,
        models,
        seconds: start.elapsed().as_secs_f64(),
    })
}

fn grid_reproduction(reduced: &sgail::Result<ReducedGate>) -> Verdict {
    let reduced = match reduced {
        Ok(r) => r,
        Err(e) => return fail(format!("reduced gate failed to train: {e}")),
    };
    let reduced_ok = reduced.medians.iter().all(|m| *m >= REDUCED_SGAIL_MIN) && reduced.seconds <= 1800.0;
    let reduced_text = format!(
        "reduced gate ({REDUCED_EPOCHS} epochs) medians {:?} in {:.0} s (need >= {REDUCED_SGAIL_MIN} within 30 min)",
        reduced.medians, reduced.seconds
    );
    let full = with_experiment("grid-variants", |dir| {
        let sgail = load_runs(dir, "sgail-erc")?;
        let info = load_runs(dir, "infogail")?;
        let info_airl = load_runs(dir, "infogail-airl-erc")?;
        let epochs = final_of(&sgail[0].1).epoch + 1;
        let s: Vec<f64> = (0..2).map(|k| median_final_task(&sgail, k)).collect();
        let i: Vec<f64> = (0..2).map(|k| median_final_task(&info, k)).collect();
        let a: Vec<f64> = (0..2).map(|k| median_final_task(&info_airl, k)).collect();
        let margin = s.iter().zip(&i).map(|(s, i)| (s - i) / GRID_TRIALS).fold(f64::INFINITY, f64::min);
        let airl_rate = a.iter().sum::<f64>() / (2.0 * GRID_TRIALS);
        let ok = s.iter().all(|m| *m >= FULL_SGAIL_MIN)
            && margin >= FULL_MARGIN_OVER_INFOGAIL
            && (airl_rate - INFOGAIL_AIRL_TARGET).abs() <= INFOGAIL_AIRL_BAND;
        Ok(verdict(
            ok,
            format!(
                "full ({epochs} epochs, {} seeds): S-GAIL+ERC medians {s:?} (need >= {FULL_SGAIL_MIN}), InfoGAIL {i:?}, \
                 smallest margin {:.0}% (need >= {:.0}%), InfoGAIL+AIRL+ERC {:.0}% of expert (need {:.0}% +- {:.0})",
                sgail.len(),
                100.0 * margin,
                100.0 * FULL_MARGIN_OVER_INFOGAIL,
                100.0 * airl_rate,
                100.0 * INFOGAIL_AIRL_TARGET,
                100.0 * INFOGAIL_AIRL_BAND
            ),
        ))
    });
    verdict(reduced_ok && full.pass, format!("{reduced_text}; {}", full.detail))
}

// ---------------------------------------------------------------- criterion 6

fn value_separation() -> Verdict {
    with_experiment("grid-variants", |dir| {
        let world = GridWorld::default_world();
        let runs = load_runs(dir, "sgail-erc")?;
        let mut good = 0;
        let mut cells = Vec::new();
        for (seed, _) in &runs {
            let mut seed_ok = true;
            for (k, goal) in world.goals().iter().enumerate() {
                let path = dir.join("sgail-erc").join(format!("seed-{seed}")).join(format!("heatmap_task{}.csv", k + 1));
                let grid = HeatmapGrid::load(&path).map_err(|e| format!("{}: {e}", path.display()))?;
                let best = grid.argmax().map_err(|e| e.to_string())?;
                let d = (best.x - goal.x).abs().max((best.y - goal.y).abs());
                seed_ok &= d <= HEATMAP_CHEBYSHEV;
                cells.push(format!("s{seed}/c{}:({},{})", k + 1, best.x, best.y));
            }
            good += usize::from(seed_ok);
        }
        Ok(verdict(
            good >= HEATMAP_MIN_SEEDS,
            format!("{good}/{} seeds with both argmax cells next to their goals (need {HEATMAP_MIN_SEEDS}); {}", runs.len(), cells.join(" ")),
        ))
    })
}

// ---------------------------------------------------------------- criterion 7

fn erc_ablation() -> Verdict {
    with_experiment("grid-erc", |dir| {
        let total = |r: &MetricsRecord| r.successes.iter().sum::<usize>() as f64;
        let curve = |name: &str| -> Result<Vec<(usize, f64)>, String> { median_curve_of(&load_runs(dir, name)?, total) };
        let c09 = curve("beta-0.9")?;
        let c06 = curve("beta-0.6")?;
        let ramp = curve("beta-0.9-to-0.6")?;
        let decay = curve("beta-0.9-to-0.0")?;
        let last = |c: &[(usize, f64)]| c.last().expect("points").1;
        let hit = |c: &[(usize, f64)]| {
            let target = ERC_FRACTION_OF_FINAL * last(c);
            c.iter().find(|(_, v)| *v >= target).map_or(usize::MAX, |(e, _)| *e)
        };
        let n_trials = 2.0 * GRID_TRIALS;
        let peak = decay.iter().map(|(_, v)| *v).fold(f64::NEG_INFINITY, f64::max);
        let drop = (peak - last(&decay)) / n_trials;
        let ok_final = last(&ramp) >= last(&c09) && last(&ramp) >= last(&c06);
        let ok_speed = hit(&ramp) < hit(&c06);
        let ok_decay = drop >= ERC_DECAY_DROP;
        Ok(verdict(
            ok_final && ok_speed && ok_decay,
            format!(
                "final medians (sum of tasks /80): 0.9->0.6 {}, 0.9 {}, 0.6 {}; 80% reached at epoch {} vs {} for 0.6; \
                 0.9->0.0 peak {} final {} (drop {:.0}%, need >= {:.0}%)",
                last(&ramp),
                last(&c09),
                last(&c06),
                hit(&ramp),
                hit(&c06),
                peak,
                last(&decay),
                100.0 * drop,
                100.0 * ERC_DECAY_DROP
            ),
        ))
    })
}

// ---------------------------------------------------------------- criterion 8

fn single_vs_multi() -> Verdict {
    with_experiment("grid-singleVsMulti", |dir| {
        let task1 = |r: &MetricsRecord| r.successes[0] as f64;
        let sgail = median_curve_of(&load_runs(dir, "sgail-erc")?, task1)?;
        let epochs = sgail.last().expect("points").0 + 1;
        let mut worst = f64::INFINITY;
        let mut worst_at = 0;
        for other in ["airl-single", "airl-single-erc"] {
            let curve = median_curve_of(&load_runs(dir, other)?, task1)?;
            if curve.len() != sgail.len() {
                return Err(format!("{other} has a different evaluation schedule"));
            }
            for ((e, s), (_, o)) in sgail.iter().zip(&curve) {
                if *e >= epochs / 4 && s - o < worst {
                    worst = s - o;
                    worst_at = *e;
                }
            }
        }
        Ok(verdict(
            worst >= 0.0,
            format!("smallest S-GAIL lead on task 1 past epoch {}: {worst} at epoch {worst_at}", epochs / 4),
        ))
    })
}

// ---------------------------------------------------------------- criterion 9

fn reacher_reproduction() -> Verdict {
    with_experiment("reacher", |dir| {
        let sgail = load_runs(dir, "sgail-erc")?;
        let info = load_runs(dir, "infogail")?;
        let total = median_final_total(&sgail);
        let per_task: Vec<f64> = (0..2).map(|k| median_final_task(&sgail, k)).collect();
        let info_total = median_final_total(&info);
        let mut crossed = 0;
        for (seed, _) in &sgail {
            let path = dir.join("sgail-erc").join(format!("seed-{seed}")).join(CROSSOVER_FILE);
            let file = std::fs::File::open(&path).map_err(|e| format!("{}: {e}", path.display()))?;
            let trials = read_crossover_csv(file).map_err(|e| e.to_string())?;
            crossed += usize::from(trials.iter().any(|t| t.start_target == 0 && t.task == 1 && t.reached));
        }
        let ok = total >= REACHER_TOTAL_MIN
            && per_task.iter().all(|m| *m >= REACHER_TASK_MIN)
            && total >= info_total + REACHER_MARGIN
            && crossed >= CROSSOVER_MIN_SEEDS;
        Ok(verdict(
            ok,
            format!(
                "S-GAIL median total {total}/{REACHER_TRIALS} (need >= {REACHER_TOTAL_MIN}), per task {per_task:?} (need >= {REACHER_TASK_MIN}), \
                 InfoGAIL {info_total} (need lead >= {REACHER_MARGIN}), task-2 reached from the task-1 target in {crossed}/{} seeds (need {CROSSOVER_MIN_SEEDS})",
                sgail.len()
            ),
        ))
    })
}

// ---------------------------------------------------------------- criterion 10

fn metrics_bytes(cfg: &TrainConfig, env: &EnvKind) -> sgail::Result<Vec<u8>> {
    let experts = generate_experts(env, 5, cfg.task_dim, cfg.seed)?;
    let mut records = Vec::new();
    train_with(cfg, env, &experts, |r| {
        records.push(r.clone());
        Ok(())
    })?;
    let mut buf = Vec::new();
    write_metrics_csv(&mut buf, &records)?;
    Ok(buf)
}

fn determinism() -> Verdict {
    let grid = EnvKind::Grid(GridWorld::default_world());
    let reacher = EnvKind::Reacher(ReacherWorld::default());
    let cases: Vec<(&str, TrainConfig, &EnvKind)> = vec![
        ("sgail-erc", 300, &grid, 7),
        ("infogail", 60, &grid, 8),
        ("infogail-airl-erc", 60, &grid, 9),
        ("airl-single-erc", 60, &grid, 10),
        ("sgail-erc", 6, &reacher, 11),
    ]
    .into_iter()
    .map(|(v, epochs, env, seed)| {
        let cfg = TrainConfig {
            variant: v.parse().expect("variant"),
            epochs,
            eval_interval: (epochs / 3).max(1),
            hidden: vec![32, 32],
            eval: sgail::trainer::EvalMode::Random(10),
            seed,
            ..TrainConfig::default()
        };
        (v, cfg, env)
    })
    .collect();
    let mut identical = 0;
    for (name, cfg, env) in &cases {
        match (metrics_bytes(cfg, env), metrics_bytes(cfg, env)) {
            (Ok(a), Ok(b)) if a == b => identical += 1,
            (Ok(_), Ok(_)) => return fail(format!("{name} metrics differ between identical runs")),
            (Err(e), _) | (_, Err(e)) => return fail(format!("{name}: {e}")),
        }
    }
    let tmp = std::env::temp_dir().join(format!("sgail-acceptance-{}", std::process::id()));
    let manifests: Result<Vec<Vec<u8>>, String> = ["a", "b"]
        .iter()
        .map(|sub| {
            let mut cfg = ExperimentConfig::new(sgail::experiment::ExperimentId::GridErc, tmp.join(sub));
            cfg.train.epochs = 20;
            cfg.train.eval_interval = 10;
            cfg.train.hidden = vec![16];
            cfg.seeds = vec![0, 1];
            run_experiment(&cfg, None).map_err(|e| e.to_string())?;
            std::fs::read(cfg.out.join(MANIFEST_FILE)).map_err(|e| e.to_string())
        })
        .collect();
    let _ = std::fs::remove_dir_all(&tmp);
    match manifests {
        Ok(m) => verdict(
            identical == cases.len() && m[0] == m[1],
            format!(
                "{identical}/{} training configurations byte-identical on rerun; experiment manifests identical: {}",
                cases.len(),
                m[0] == m[1]
            ),
        ),
        Err(e) => fail(e),
    }
}

// ---------------------------------------------------------------- diagnostic

fn ranks(values: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut out = vec![0.0; values.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && values[idx[j + 1]] == values[idx[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0;
        for &k in &idx[i..=j] {
            out[k] = avg;
        }
        i = j + 1;
    }
    out
}

fn spearman(a: &[f64], b: &[f64]) -> f64 {
    let (ra, rb) = (ranks(a), ranks(b));
    let n = ra.len() as f64;
    let (ma, mb) = (ra.iter().sum::<f64>() / n, rb.iter().sum::<f64>() / n);
    let cov: f64 = ra.iter().zip(&rb).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = ra.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = rb.iter().map(|y| (y - mb).powi(2)).sum();
    cov / (va * vb).sqrt()
}

fn reward_correlation(model: &TrainedModel) -> sgail::Result<f64> {
    let world = GridWorld::default_world();
    let mut rhos = Vec::new();
    for k in 0..2 {
        let c = task(k);
        let g = grid_mdp(&world, &c, 0.95, 1.0)?;
        let sol = soft_value_iteration(&g.mdp, 1e-10, 100_000)?;
        let adv = soft_advantage(&sol.v, &sol.q)?;
        let learner = model.learner_for(&c)?;
        let layout = learner.disc.layout();
        let (mut learned, mut oracle) = (Vec::new(), Vec::new());
        for (i, cell) in g.cells.iter().enumerate() {
            if i == g.goal_index {
                continue;
            }
            for a in GridAction::ALL {
                let feats = world.features(&GridState::new(cell.x, cell.y).to_vec());
                let input = layout.compose(&feats, Some(&a.one_hot()), Some(&c))?;
                learned.push(learner.disc.raw(stack_rows(&[input], layout.width())?.view())?[0]);
                oracle.push(adv[i][a.index()]);
            }
        }
        rhos.push(spearman(&learned, &oracle));
    }
    Ok(rhos.iter().sum::<f64>() / rhos.len() as f64)
}

// ---------------------------------------------------------------- driver

fn report(id: usize, name: &str, start: Instant, v: &Verdict) {
    println!(
        "{} criterion {id:>2}: {name} ({}; {:.1} s)",
        if v.pass { "PASS" } else { "FAIL" },
        v.detail,
        start.elapsed().as_secs_f64()
    );
}

/// Criteria named in `SGAIL_ACCEPTANCE_ONLY` (comma-separated ids), or all.
fn selected() -> Vec<usize> {
    match std::env::var("SGAIL_ACCEPTANCE_ONLY") {
        Ok(list) => list.split(',').filter_map(|t| t.trim().parse().ok()).collect(),
        Err(_) => (1..=10).collect(),
    }
}

fn main() {
    let only = selected();
    let failures = std::cell::Cell::new(0);
    let run = |id: usize, name: &str, f: &dyn Fn() -> Verdict| {
        if !only.contains(&id) {
            return;
        }
        let start = Instant::now();
        let v = f();
        report(id, name, start, &v);
        failures.set(failures.get() + usize::from(!v.pass));
    };
    run(1, "pseudo-reward identity", &identity_suite);
    run(2, "finite-difference gradients", &gradient_suite);
    run(3, "oracle suite", &oracle_suite);
    run(4, "TRPO contract", &trpo_contract);

    if env_flag("SGAIL_ACCEPTANCE_FULL") {
        if let Err(e) = regenerate_results() {
            println!("note: regenerating results failed: {e}");
        }
    }
    let mut reduced = None;
    if only.contains(&5) {
        let start = Instant::now();
        let r = reduced_gate();
        let v = grid_reproduction(&r);
        report(5, "grid multitask reproduction", start, &v);
        failures.set(failures.get() + usize::from(!v.pass));
        reduced = Some(r);
    }

    run(6, "value-function separation", &value_separation);
    run(7, "ERC ablation", &erc_ablation);
    run(8, "single- vs multi-task", &single_vs_multi);
    run(9, "reacher", &reacher_reproduction);
    run(10, "determinism", &determinism);

    if let Some(Ok(r)) = &reduced {
        let rhos: Vec<String> = r
            .models
            .iter()
            .map(|m| reward_correlation(m).map_or_else(|e| format!("error: {e}"), |x| format!("{x:.2}")))
            .collect();
        println!(
            "DIAG spearman(f, oracle soft advantage) per reduced-gate seed: {} (reference {SPEARMAN_TARGET}, not gating)",
            rhos.join(" ")
        );
    }
    let failures = failures.get();
    println!("acceptance: {} of {} criteria passed", only.len() - failures, only.len());
    if failures > 0 && env_flag("SGAIL_ACCEPTANCE_STRICT") {
        std::process::exit(1);
    }
}
