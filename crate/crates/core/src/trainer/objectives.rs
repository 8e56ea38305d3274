//! Losses and estimators used by the update steps.

use ndarray::ArrayView2;

use crate::autodiff::{Approximator, ParamVector};
use crate::error::{check_len, Error, Result};
use crate::models::{log_sigmoid, sigmoid, AirlDiscriminator, InputLayout, PlainDiscriminator};

/// Discriminator head: odds-ratio (`f` against `log pi`) or plain logistic.
#[derive(Debug, Clone, PartialEq)]
pub enum DiscHead {
    Airl(AirlDiscriminator),
    Plain(PlainDiscriminator),
}

impl DiscHead {
    pub fn layout(&self) -> InputLayout {
        match self {
            DiscHead::Airl(d) => d.layout,
            DiscHead::Plain(d) => d.layout,
        }
    }

    pub fn net(&self) -> &Approximator {
        match self {
            DiscHead::Airl(d) => &d.net,
            DiscHead::Plain(d) => &d.net,
        }
    }

    pub fn net_mut(&mut self) -> &mut Approximator {
        match self {
            DiscHead::Airl(d) => &mut d.net,
            DiscHead::Plain(d) => &mut d.net,
        }
    }

    pub fn is_airl(&self) -> bool {
        matches!(self, DiscHead::Airl(_))
    }

    /// Raw network output per row: `f` for the odds-ratio head, the logit otherwise.
    pub fn raw(&self, inputs: ArrayView2<f64>) -> Result<Vec<f64>> {
        match self {
            DiscHead::Airl(d) => d.f_batch(inputs),
            DiscHead::Plain(d) => d.logit_batch(inputs),
        }
    }

    /// `log D - log(1 - D)` per row; `log_pi` only enters the odds-ratio head.
    pub fn log_odds(&self, inputs: ArrayView2<f64>, log_pi: &[f64]) -> Result<Vec<f64>> {
        let raw = self.raw(inputs)?;
        check_len("discriminator log pi", raw.len(), log_pi.len())?;
        Ok(match self {
            DiscHead::Airl(_) => raw.iter().zip(log_pi).map(|(f, l)| f - l).collect(),
            DiscHead::Plain(_) => raw,
        })
    }

    fn backward(&self, inputs: ArrayView2<f64>, weights: &[f64]) -> Result<ParamVector> {
        match self {
            DiscHead::Airl(d) => d.backward(inputs, weights),
            DiscHead::Plain(d) => d.backward(inputs, weights),
        }
    }
}

/// Rows fed to the discriminator; `log_pi` is the policy's log-probability of
/// each row's action, held fixed during the discriminator update.
#[derive(Debug, Clone, Copy)]
pub struct DiscBatch<'a> {
    pub inputs: ArrayView2<'a, f64>,
    pub log_pi: &'a [f64],
}

/// `E_expert[log D] + E_generator[log(1 - D)]` from per-row log-odds.
pub fn discriminator_objective(expert_log_odds: &[f64], generator_log_odds: &[f64]) -> Result<f64> {
    if expert_log_odds.is_empty() || generator_log_odds.is_empty() {
        return Err(Error::Empty("discriminator batch"));
    }
    let e = expert_log_odds.iter().map(|&x| log_sigmoid(x)).sum::<f64>() / expert_log_odds.len() as f64;
    let g = generator_log_odds.iter().map(|&x| log_sigmoid(-x)).sum::<f64>() / generator_log_odds.len() as f64;
    Ok(e + g)
}

/// Negated discriminator objective (a loss to minimize) and its gradient with
/// respect to the discriminator parameters.
pub fn discriminator_loss(head: &DiscHead, expert: DiscBatch<'_>, generator: DiscBatch<'_>) -> Result<(f64, ParamVector)> {
    let xe = head.log_odds(expert.inputs, expert.log_pi)?;
    let xg = head.log_odds(generator.inputs, generator.log_pi)?;
    let loss = -discriminator_objective(&xe, &xg)?;
    let (ne, ng) = (xe.len() as f64, xg.len() as f64);
    // d log sigmoid(x)/dx = sigmoid(-x); d log sigmoid(-x)/dx = -sigmoid(x)
    let we: Vec<f64> = xe.iter().map(|&x| -sigmoid(-x) / ne).collect();
    let wg: Vec<f64> = xg.iter().map(|&x| sigmoid(x) / ng).collect();
    let mut grad = head.backward(expert.inputs, &we)?;
    let gg = head.backward(generator.inputs, &wg)?;
    grad.axpy(1.0, &gg);
    Ok((loss, grad))
}

/// Return-to-go `G_t = r_t + gamma G_{t+1}` with `G` zero past the end.
pub fn discounted_returns(rewards: &[f64], gamma: f64) -> Vec<f64> {
    let mut out = vec![0.0; rewards.len()];
    let mut acc = 0.0;
    for (o, r) in out.iter_mut().zip(rewards).rev() {
        acc = r + gamma * acc;
        *o = acc;
    }
    out
}

/// Shifts to zero mean and scales to unit variance; near-constant input becomes all zeros.
pub fn standardize(values: &mut [f64]) {
    if values.is_empty() {
        return;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let scale = mean.abs().max(1.0);
    if var.sqrt() <= 1e-12 * scale {
        values.iter_mut().for_each(|v| *v = 0.0);
        return;
    }
    let sd = var.sqrt();
    values.iter_mut().for_each(|v| *v = (*v - mean) / sd);
}

fn prior_entropy(prior: &[f64]) -> Result<f64> {
    let total: f64 = prior.iter().sum();
    if prior.is_empty() || prior.iter().any(|p| *p < 0.0) || (total - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidDistribution(format!("task prior {prior:?}")));
    }
    Ok(crate::oracle::entropy(prior))
}

/// `mean(log Q(c|s,a)) + H(c)` over samples drawn from the joint.
pub fn mi_lower_bound(log_q: &[f64], prior: &[f64]) -> Result<f64> {
    if log_q.is_empty() {
        return Err(Error::Empty("mutual information sample"));
    }
    Ok(log_q.iter().sum::<f64>() / log_q.len() as f64 + prior_entropy(prior)?)
}

/// `sum_i w_i log Q_i + H(c)` for an explicitly weighted joint (weights sum to one).
pub fn mi_lower_bound_weighted(weights: &[f64], log_q: &[f64], prior: &[f64]) -> Result<f64> {
    check_len("mutual information weights", weights.len(), log_q.len())?;
    let mut total = 0.0;
    for (w, l) in weights.iter().zip(log_q) {
        if *w > 0.0 {
            total += w * l;
        }
    }
    Ok(total + prior_entropy(prior)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::stack_rows;
    use crate::oracle::mutual_information_exact;
    use crate::rng::stream;
    use rand::Rng;

    fn layout() -> InputLayout {
        InputLayout {
            feature_dim: 2,
            action_dim: 4,
            task_dim: 3,
        }
    }

    #[test]
    fn confused_discriminator_objective() {
        let obj = discriminator_objective(&[0.0, 0.0], &[0.0]).unwrap();
        assert!((obj + 2.0 * 2f64.ln()).abs() < 1e-15);
        assert!((obj + 1.38629).abs() < 1e-5);
        let sharp = discriminator_objective(&[40.0], &[-40.0]).unwrap();
        assert!(sharp < 0.0 && sharp > -1e-15);
        assert!(discriminator_objective(&[], &[0.0]).is_err());
    }

    fn rows(seed: u64, n: usize) -> ndarray::Array2<f64> {
        let mut rng = stream(seed, 9);
        let r: Vec<Vec<f64>> = (0..n)
            .map(|_| {
                let mut v: Vec<f64> = (0..2).map(|_| rng.random_range(-1.0..1.0)).collect();
                let mut a = [0.0; 4];
                a[rng.random_range(0..4)] = 1.0;
                v.extend(a);
                let mut c = [0.0; 3];
                c[rng.random_range(0..2)] = 1.0;
                v.extend(c);
                v
            })
            .collect();
        stack_rows(&r, 9).unwrap()
    }

    #[test]
    fn discriminator_gradient_matches_finite_differences() {
        for airl in [true, false] {
            let mut head = if airl {
                DiscHead::Airl(AirlDiscriminator::new(layout(), &[8, 8], 3).unwrap())
            } else {
                DiscHead::Plain(PlainDiscriminator::new(layout(), &[8, 8], 3).unwrap())
            };
            let (xe, xg) = (rows(1, 5), rows(2, 7));
            let lpe: Vec<f64> = (0..5).map(|i| -1.0 - 0.1 * i as f64).collect();
            let lpg: Vec<f64> = (0..7).map(|i| -0.5 - 0.2 * i as f64).collect();
            let loss_at = |h: &DiscHead| {
                discriminator_loss(
                    h,
                    DiscBatch {
                        inputs: xe.view(),
                        log_pi: &lpe,
                    },
                    DiscBatch {
                        inputs: xg.view(),
                        log_pi: &lpg,
                    },
                )
                .unwrap()
            };
            let (_, grad) = loss_at(&head);
            let base = head.net().get_params();
            let h = 1e-5;
            for i in (0..base.len()).step_by(7) {
                let mut p = base.clone();
                p[i] += h;
                head.net_mut().set_params(p.clone()).unwrap();
                let up = loss_at(&head).0;
                p[i] -= 2.0 * h;
                head.net_mut().set_params(p).unwrap();
                let dn = loss_at(&head).0;
                let fd = (up - dn) / (2.0 * h);
                assert!((fd - grad[i]).abs() <= 1e-4 * fd.abs().max(1e-4), "airl={airl} coord {i}: {fd} vs {}", grad[i]);
            }
            head.net_mut().set_params(base).unwrap();
        }
    }

    #[test]
    fn returns_and_standardization() {
        let g = discounted_returns(&[1.0, 0.0, 2.0], 0.5);
        assert_eq!(g, vec![1.5, 1.0, 2.0]);
        let mut same = vec![3.0; 5];
        standardize(&mut same);
        assert!(same.iter().all(|v| *v == 0.0));
        let mut v = vec![1.0, 2.0, 3.0, 4.0];
        standardize(&mut v);
        assert!(v.iter().sum::<f64>().abs() < 1e-12);
        assert!((v.iter().map(|x| x * x).sum::<f64>() / 4.0 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn mi_bound_uniform_posterior_is_zero() {
        let lq = vec![(1.0f64 / 3.0).ln(); 10];
        assert!(mi_lower_bound(&lq, &[1.0 / 3.0; 3]).unwrap().abs() < 1e-12);
    }

    #[test]
    fn mi_bound_is_below_exact_and_tight_at_posterior() {
        let mut rng = stream(17, 1);
        for _ in 0..200 {
            let (nc, nx) = (rng.random_range(2..4), rng.random_range(2..5));
            let raw: Vec<Vec<f64>> = (0..nc).map(|_| (0..nx).map(|_| rng.random::<f64>() + 1e-3).collect()).collect();
            let total: f64 = raw.iter().flatten().sum();
            let joint: Vec<Vec<f64>> = raw.iter().map(|r| r.iter().map(|v| v / total).collect()).collect();
            let prior: Vec<f64> = joint.iter().map(|r| r.iter().sum()).collect();
            let px: Vec<f64> = (0..nx).map(|j| joint.iter().map(|r| r[j]).sum()).collect();
            let exact = mutual_information_exact(&joint).unwrap();
            let mut w = Vec::new();
            let mut true_lq = Vec::new();
            let mut other_lq = Vec::new();
            for j in 0..nx {
                let q: Vec<f64> = (0..nc).map(|_| rng.random::<f64>() + 1e-3).collect();
                let qt: f64 = q.iter().sum();
                for c in 0..nc {
                    w.push(joint[c][j]);
                    true_lq.push((joint[c][j] / px[j]).ln());
                    other_lq.push((q[c] / qt).ln());
                }
            }
            let tight = mi_lower_bound_weighted(&w, &true_lq, &prior).unwrap();
            let loose = mi_lower_bound_weighted(&w, &other_lq, &prior).unwrap();
            assert!((tight - exact).abs() <= 1e-9);
            assert!(loose <= exact + 1e-12);
        }
    }
}
