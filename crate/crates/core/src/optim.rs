//! Adam for the discriminator, value function and posterior; trust-region
//! policy optimization for the generator.
//!
//! All objectives are phrased as minimization for Adam. Maximized objectives
//! (the discriminator's log-likelihood, the posterior's log Q) are negated by
//! the caller before the gradient reaches [`AdamState::step`].

use crate::autodiff::ParamVector;
use crate::error::{check_len, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 0.001,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl AdamConfig {
    pub fn with_lr(lr: f64) -> Self {
        Self {
            lr,
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub config: AdamConfig,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u64,
}

impl AdamState {
    pub fn new(len: usize, config: AdamConfig) -> Self {
        Self {
            config,
            m: vec![0.0; len],
            v: vec![0.0; len],
            t: 0,
        }
    }

    /// One bias-corrected descent step, in place.
    pub fn step(&mut self, params: &mut ParamVector, grad: &[f64]) -> Result<()> {
        check_len("adam params", self.m.len(), params.len())?;
        check_len("adam gradient", self.m.len(), grad.len())?;
        if grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::NonFinite("adam gradient"));
        }
        let AdamConfig {
            lr,
            beta1,
            beta2,
            eps,
        } = self.config;
        self.t += 1;
        let bc1 = 1.0 - beta1.powi(self.t as i32);
        let bc2 = 1.0 - beta2.powi(self.t as i32);
        for i in 0..grad.len() {
            let g = grad[i];
            self.m[i] = beta1 * self.m[i] + (1.0 - beta1) * g;
            self.v[i] = beta2 * self.v[i] + (1.0 - beta2) * g * g;
            let m_hat = self.m[i] / bc1;
            let v_hat = self.v[i] / bc2;
            params[i] -= lr * m_hat / (v_hat.sqrt() + eps);
        }
        Ok(())
    }
}

/// Functional form of [`AdamState::step`].
pub fn adam_step(
    params: &ParamVector,
    grad: &ParamVector,
    state: &AdamState,
) -> Result<(ParamVector, AdamState)> {
    let mut p = params.clone();
    let mut st = state.clone();
    st.step(&mut p, grad)?;
    Ok((p, st))
}

/// Conjugate-gradient solve of `A x = b` for a symmetric positive-definite
/// operator given only through `matvec`. Stops when `|Ax - b| <= tol |b|` or
/// after `iters` iterations, or on a non-positive curvature direction.
pub fn conjugate_gradient<F>(mut matvec: F, b: &[f64], iters: usize, tol: f64) -> Vec<f64>
where
    F: FnMut(&[f64]) -> Vec<f64>,
{
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
    let mut x = vec![0.0; b.len()];
    let mut r = b.to_vec();
    let mut p = b.to_vec();
    let b_norm = dot(b, b).sqrt();
    let mut rr = dot(&r, &r);
    if b_norm == 0.0 {
        return x;
    }
    for _ in 0..iters {
        let ap = matvec(&p);
        let curvature = dot(&p, &ap);
        if !(curvature > 0.0) {
            break;
        }
        let alpha = rr / curvature;
        for i in 0..x.len() {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        let rr_new = dot(&r, &r);
        if rr_new.sqrt() <= tol * b_norm {
            break;
        }
        let beta = rr_new / rr;
        for i in 0..p.len() {
            p[i] = r[i] + beta * p[i];
        }
        rr = rr_new;
    }
    x
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrpoConfig {
    pub max_kl: f64,
    pub cg_iterations: usize,
    pub cg_damping: f64,
    pub line_search_shrink: f64,
    pub max_backtracks: usize,
}

impl Default for TrpoConfig {
    fn default() -> Self {
        Self {
            max_kl: 0.01,
            cg_iterations: 10,
            cg_damping: 0.1,
            line_search_shrink: 0.8,
            max_backtracks: 10,
        }
    }
}

impl TrpoConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.max_kl > 0.0) || self.cg_iterations == 0 || self.max_backtracks == 0 {
            return Err(Error::Config("trpo: max_kl > 0 and counts >= 1 required".into()));
        }
        if !(self.line_search_shrink > 0.0 && self.line_search_shrink < 1.0) {
            return Err(Error::Config("trpo: line_search_shrink must be in (0, 1)".into()));
        }
        Ok(())
    }
}

/// A policy bound to one update batch, as seen by the trust-region step.
///
/// "Old" quantities refer to the distribution captured when the problem was
/// built; they do not move when parameters are set.
pub trait TrustRegionProblem {
    fn params(&self) -> ParamVector;
    fn set_params(&mut self, params: &ParamVector) -> Result<()>;
    /// Log-probability of each batch action at the current parameters.
    fn log_probs(&self) -> Result<Vec<f64>>;
    /// Log-probability of each batch action under the old distribution.
    fn old_log_probs(&self) -> &[f64];
    /// `sum_i weights_i * grad log pi(a_i | x_i)` at the current parameters.
    fn weighted_score(&self, weights: &[f64]) -> Result<ParamVector>;
    /// Mean `KL(old || current)` over the batch inputs.
    fn mean_kl(&self) -> Result<f64>;
    /// Product of the mean Fisher information at the old parameters with `v`.
    fn fisher_vector_product(&self, v: &[f64]) -> Result<ParamVector>;
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct TrpoReport {
    pub accepted: bool,
    pub surrogate_before: f64,
    pub surrogate_after: f64,
    pub kl: f64,
    pub backtracks: usize,
    pub cg_breakdown: bool,
}

impl TrpoReport {
    pub fn surrogate_gain(&self) -> f64 {
        self.surrogate_after - self.surrogate_before
    }
}

/// `mean_i exp(log pi(a_i) - log pi_old(a_i)) * A_i` at the current parameters.
pub fn surrogate<P: TrustRegionProblem + ?Sized>(problem: &P, advantages: &[f64]) -> Result<f64> {
    let logp = problem.log_probs()?;
    let old = problem.old_log_probs();
    let n = advantages.len() as f64;
    Ok(logp
        .iter()
        .zip(old)
        .zip(advantages)
        .map(|((l, o), a)| (l - o).exp() * a)
        .sum::<f64>()
        / n)
}

/// One trust-region step on `problem` with per-sample `advantages`.
///
/// Leaves the parameters bit-identical when the gradient vanishes, when CG
/// breaks down, or when no line-search candidate satisfies both the KL limit
/// and a non-negative surrogate change.
pub fn trpo_step<P: TrustRegionProblem + ?Sized>(
    problem: &mut P,
    advantages: &[f64],
    cfg: &TrpoConfig,
) -> Result<TrpoReport> {
    cfg.validate()?;
    if advantages.is_empty() {
        return Err(Error::Empty("trpo batch"));
    }
    check_len("trpo advantages", problem.old_log_probs().len(), advantages.len())?;
    if advantages.iter().any(|a| !a.is_finite()) {
        return Err(Error::NonFinite("advantage"));
    }
    let start = problem.params();
    let before = surrogate(problem, advantages)?;
    let mut report = TrpoReport {
        surrogate_before: before,
        surrogate_after: before,
        ..TrpoReport::default()
    };

    let n = advantages.len() as f64;
    let weights: Vec<f64> = advantages.iter().map(|a| a / n).collect();
    let grad = problem.weighted_score(&weights)?;
    if grad.iter().all(|&g| g == 0.0) {
        return Ok(report);
    }

    let damping = cfg.cg_damping;
    let mut fvp_err = None;
    let mut damped_fvp = |v: &[f64]| -> Vec<f64> {
        match problem.fisher_vector_product(v) {
            Ok(mut fv) => {
                fv.axpy(damping, v);
                fv.into_vec()
            }
            Err(e) => {
                fvp_err.get_or_insert(e);
                vec![f64::NAN; v.len()]
            }
        }
    };
    let dir = conjugate_gradient(&mut damped_fvp, &grad, cfg.cg_iterations, 1e-10);
    let fdir = damped_fvp(&dir);
    if let Some(e) = fvp_err {
        return Err(e);
    }
    let shs: f64 = dir.iter().zip(&fdir).map(|(a, b)| a * b).sum();
    if !(shs > 0.0) || !shs.is_finite() || dir.iter().any(|d| !d.is_finite()) {
        report.cg_breakdown = true;
        return Ok(report);
    }
    let scale = (2.0 * cfg.max_kl / shs).sqrt();

    let mut frac = 1.0;
    for k in 0..=cfg.max_backtracks {
        let mut candidate = start.clone();
        candidate.axpy(frac * scale, &dir);
        problem.set_params(&candidate)?;
        let after = surrogate(problem, advantages)?;
        let kl = problem.mean_kl()?;
        if after.is_finite() && kl.is_finite() && after - before >= 0.0 && kl <= cfg.max_kl {
            report.accepted = true;
            report.surrogate_after = after;
            report.kl = kl;
            report.backtracks = k;
            return Ok(report);
        }
        frac *= cfg.line_search_shrink;
    }
    problem.set_params(&start)?;
    report.backtracks = cfg.max_backtracks;
    Ok(report)
}
