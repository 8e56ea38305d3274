//! The four task-conditioned networks: generator policy, discriminator heads,
//! value function and the InfoGAIL posterior.

use ndarray::{Array2, ArrayView2, Axis};

use crate::autodiff::{log_softmax, softmax, Approximator, ApproximatorSpec, OutputHead, ParamVector};
use crate::env::{gaussian_log_prob, Action, ActionDist, ActionSpace, TaskVariable};
use crate::error::{check_len, Error, Result};
use crate::optim::TrustRegionProblem;

/// Initial log standard deviation of Gaussian policies.
pub const INITIAL_LOG_STD: f64 = -std::f64::consts::LN_2;

/// Per-dimension floor applied to Gaussian log-probabilities inside rewards.
pub const GAUSSIAN_LOG_PROB_FLOOR: f64 = -20.0;

/// Which pieces a network reads, concatenated in the order features, action, task.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct InputLayout {
    pub feature_dim: usize,
    pub action_dim: usize,
    pub task_dim: usize,
}

impl InputLayout {
    pub fn width(&self) -> usize {
        self.feature_dim + self.action_dim + self.task_dim
    }

    pub fn uses_task(&self) -> bool {
        self.task_dim > 0
    }

    pub fn compose(&self, features: &[f64], action: Option<&[f64]>, task: Option<&TaskVariable>) -> Result<Vec<f64>> {
        check_len("input features", self.feature_dim, features.len())?;
        let mut out = Vec::with_capacity(self.width());
        out.extend_from_slice(features);
        if self.action_dim > 0 {
            let a = action.ok_or_else(|| Error::InvalidAction("network expects an action input".into()))?;
            check_len("input action", self.action_dim, a.len())?;
            out.extend_from_slice(a);
        }
        if self.task_dim > 0 {
            let c = task.ok_or_else(|| Error::InvalidSpec("network expects a task input".into()))?;
            check_len("input task", self.task_dim, c.dim())?;
            out.extend(c.one_hot());
        }
        Ok(out)
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `log(1 + e^x)` without overflow.
pub fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

/// `log sigmoid(x)`.
pub fn log_sigmoid(x: f64) -> f64 {
    -softplus(-x)
}

/// Odds-ratio discriminator `exp(f) / (exp(f) + pi)`, evaluated as `sigmoid(f - log pi)`.
pub fn airl_d(f: f64, log_pi: f64) -> Result<f64> {
    if !f.is_finite() {
        return Err(Error::NonFinite("discriminator f"));
    }
    if !log_pi.is_finite() {
        return Err(Error::NonFinite("policy log-probability"));
    }
    Ok(sigmoid(f - log_pi))
}

/// `(log D, log(1 - D))` of the odds-ratio discriminator, stable for extreme odds.
pub fn airl_log_d(f: f64, log_pi: f64) -> Result<(f64, f64)> {
    airl_d(f, log_pi)?;
    let x = f - log_pi;
    Ok((log_sigmoid(x), log_sigmoid(-x)))
}

/// `log D - log(1 - D) + beta log pi` in closed form, `f - (1 - beta) log pi`.
pub fn pseudo_reward(f: f64, log_pi: f64, beta: f64) -> f64 {
    f - (1.0 - beta) * log_pi
}

/// `r + gamma V(s') - V(s)`, with `V(s') = 0` on terminal transitions.
pub fn advantage(reward: f64, v_s: f64, v_next: f64, gamma: f64, terminal: bool) -> f64 {
    let boot = if terminal { 0.0 } else { v_next };
    reward + gamma * boot - v_s
}

#[derive(Debug, Clone, PartialEq)]
pub enum PolicyHead {
    Categorical,
    Gaussian { log_std: Vec<f64> },
}

/// `pi(a | s, c)` over a softmax or diagonal-Gaussian action model.
///
/// Flat parameters are the network parameters followed, for Gaussian
/// policies, by the state-independent log standard deviations.
#[derive(Debug, Clone, PartialEq)]
pub struct ConditionalPolicy {
    net: Approximator,
    head: PolicyHead,
    layout: InputLayout,
    space: ActionSpace,
}

/// Actions of an update batch in network-friendly form.
#[derive(Debug, Clone, PartialEq)]
pub enum BatchActions {
    Discrete(Vec<usize>),
    Continuous(Array2<f64>),
}

impl BatchActions {
    pub fn from_actions(actions: &[Action], space: ActionSpace) -> Result<Self> {
        for a in actions {
            a.check(space)?;
        }
        Ok(match space {
            ActionSpace::Discrete(_) => BatchActions::Discrete(
                actions
                    .iter()
                    .map(|a| match a {
                        Action::Discrete(i) => *i,
                        Action::Continuous(_) => unreachable!("checked above"),
                    })
                    .collect(),
            ),
            ActionSpace::Continuous(n) => {
                let mut m = Array2::zeros((actions.len(), n));
                for (mut row, a) in m.rows_mut().into_iter().zip(actions) {
                    if let Action::Continuous(v) = a {
                        row.iter_mut().zip(v).for_each(|(r, x)| *r = *x);
                    }
                }
                BatchActions::Continuous(m)
            }
        })
    }

    pub fn len(&self) -> usize {
        match self {
            BatchActions::Discrete(v) => v.len(),
            BatchActions::Continuous(m) => m.nrows(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl ConditionalPolicy {
    /// `task_dim = 0` builds an unconditioned policy.
    pub fn new(feature_dim: usize, task_dim: usize, space: ActionSpace, hidden: &[usize], seed: u64) -> Result<Self> {
        let layout = InputLayout {
            feature_dim,
            action_dim: 0,
            task_dim,
        };
        let (out, head, net_head) = match space {
            ActionSpace::Discrete(n) => (n, PolicyHead::Categorical, OutputHead::Softmax),
            ActionSpace::Continuous(n) => (
                n,
                PolicyHead::Gaussian {
                    log_std: vec![INITIAL_LOG_STD; n],
                },
                OutputHead::Linear,
            ),
        };
        let net = Approximator::build(ApproximatorSpec::new(layout.width(), hidden, out, net_head), seed)?;
        Ok(Self {
            net,
            head,
            layout,
            space,
        })
    }

    pub fn from_parts(net: Approximator, head: PolicyHead, layout: InputLayout, space: ActionSpace) -> Result<Self> {
        check_len("policy net input", layout.width(), net.spec().input_dim)?;
        let out = match space {
            ActionSpace::Discrete(n) | ActionSpace::Continuous(n) => n,
        };
        check_len("policy net output", out, net.spec().output_dim)?;
        match (&head, space, net.spec().output_head) {
            (PolicyHead::Categorical, ActionSpace::Discrete(_), OutputHead::Softmax) => {}
            (PolicyHead::Gaussian { log_std }, ActionSpace::Continuous(n), OutputHead::Linear) => {
                check_len("policy log_std", n, log_std.len())?
            }
            _ => return Err(Error::InvalidSpec("policy head does not fit the action space".into())),
        }
        Ok(Self {
            net,
            head,
            layout,
            space,
        })
    }

    pub fn net(&self) -> &Approximator {
        &self.net
    }

    pub fn head(&self) -> &PolicyHead {
        &self.head
    }

    pub fn layout(&self) -> InputLayout {
        self.layout
    }

    pub fn action_space(&self) -> ActionSpace {
        self.space
    }

    pub fn input(&self, features: &[f64], task: &TaskVariable) -> Result<Vec<f64>> {
        self.layout.compose(features, None, Some(task))
    }

    pub fn param_len(&self) -> usize {
        self.net.param_len() + self.log_std().map_or(0, <[f64]>::len)
    }

    pub fn log_std(&self) -> Option<&[f64]> {
        match &self.head {
            PolicyHead::Categorical => None,
            PolicyHead::Gaussian { log_std } => Some(log_std),
        }
    }

    pub fn get_params(&self) -> ParamVector {
        let mut p = self.net.get_params();
        if let Some(ls) = self.log_std() {
            p.extend_from_slice(ls);
        }
        p
    }

    pub fn set_params(&mut self, params: &[f64]) -> Result<()> {
        check_len("policy params", self.param_len(), params.len())?;
        let n = self.net.param_len();
        self.net.set_params(ParamVector::from_vec(params[..n].to_vec()))?;
        if let PolicyHead::Gaussian { log_std } = &mut self.head {
            log_std.copy_from_slice(&params[n..]);
        }
        Ok(())
    }

    /// Action distribution for one state-feature vector under task `task`.
    pub fn distribution(&self, features: &[f64], task: &TaskVariable) -> Result<ActionDist> {
        let out = self.net.forward(&self.input(features, task)?)?;
        Ok(match &self.head {
            PolicyHead::Categorical => ActionDist::Categorical(out),
            PolicyHead::Gaussian { log_std } => ActionDist::Gaussian {
                mean: out,
                std: log_std.iter().map(|l| l.exp()).collect(),
            },
        })
    }

    /// Log-probabilities of `actions` for each row of `inputs` (already composed).
    pub fn log_probs_batch(&self, inputs: ArrayView2<f64>, actions: &BatchActions) -> Result<Vec<f64>> {
        check_len("policy batch", inputs.nrows(), actions.len())?;
        let logits = self.net.logits_batch(inputs)?;
        match (&self.head, actions) {
            (PolicyHead::Categorical, BatchActions::Discrete(idx)) => Ok(logits
                .rows()
                .into_iter()
                .zip(idx)
                .map(|(row, &a)| log_softmax(row.as_slice().expect("contiguous"))[a])
                .collect()),
            (PolicyHead::Gaussian { log_std }, BatchActions::Continuous(acts)) => {
                let std: Vec<f64> = log_std.iter().map(|l| l.exp()).collect();
                Ok(logits
                    .rows()
                    .into_iter()
                    .zip(acts.rows())
                    .map(|(mean, a)| {
                        gaussian_log_prob(
                            a.as_slice().expect("contiguous"),
                            mean.as_slice().expect("contiguous"),
                            &std,
                        )
                    })
                    .collect())
            }
            _ => Err(Error::InvalidAction("batch actions do not fit the policy head".into())),
        }
    }

    /// Log-probability as fed into rewards: Gaussian terms are floored per dimension.
    pub fn reward_log_probs_batch(&self, inputs: ArrayView2<f64>, actions: &BatchActions) -> Result<Vec<f64>> {
        match (&self.head, actions) {
            (PolicyHead::Gaussian { log_std }, BatchActions::Continuous(acts)) => {
                check_len("policy batch", inputs.nrows(), acts.nrows())?;
                let means = self.net.logits_batch(inputs)?;
                Ok(means
                    .rows()
                    .into_iter()
                    .zip(acts.rows())
                    .map(|(mean, a)| {
                        mean.iter()
                            .zip(a)
                            .zip(log_std)
                            .map(|((m, x), l)| {
                                gaussian_log_prob(&[*x], &[*m], &[l.exp()]).max(GAUSSIAN_LOG_PROB_FLOOR)
                            })
                            .sum()
                    })
                    .collect())
            }
            _ => self.log_probs_batch(inputs, actions),
        }
    }

    /// Binds the policy to one update batch for a trust-region step.
    pub fn bind(&mut self, inputs: Array2<f64>, actions: BatchActions) -> Result<PolicyBatch<'_>> {
        if actions.is_empty() {
            return Err(Error::Empty("policy batch"));
        }
        let old = self.clone();
        let old_log_probs = old.log_probs_batch(inputs.view(), &actions)?;
        let old_out = old.net.logits_batch(inputs.view())?;
        Ok(PolicyBatch {
            policy: self,
            old,
            inputs,
            actions,
            old_out,
            old_log_probs,
        })
    }
}

/// A policy together with the batch and the frozen pre-update distribution.
#[derive(Debug)]
pub struct PolicyBatch<'a> {
    policy: &'a mut ConditionalPolicy,
    old: ConditionalPolicy,
    inputs: Array2<f64>,
    actions: BatchActions,
    /// Old logits (categorical) or means (Gaussian).
    old_out: Array2<f64>,
    old_log_probs: Vec<f64>,
}

impl PolicyBatch<'_> {
    pub fn len(&self) -> usize {
        self.inputs.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn policy(&self) -> &ConditionalPolicy {
        self.policy
    }

    /// Gradient of the mean `KL(old || current)` with respect to the current parameters.
    pub fn kl_gradient(&self) -> Result<ParamVector> {
        let n = self.len() as f64;
        let logits = self.policy.net.logits_batch(self.inputs.view())?;
        match (&self.policy.head, &self.old.head) {
            (PolicyHead::Categorical, PolicyHead::Categorical) => {
                let mut d = Array2::zeros(logits.raw_dim());
                for ((mut drow, cur), old) in d.rows_mut().into_iter().zip(logits.rows()).zip(self.old_out.rows()) {
                    let p = softmax(cur.as_slice().expect("contiguous"));
                    let q = softmax(old.as_slice().expect("contiguous"));
                    for ((dv, pv), qv) in drow.iter_mut().zip(p).zip(q) {
                        *dv = (pv - qv) / n;
                    }
                }
                self.policy.net.backward_logits_batch(self.inputs.view(), d.view())
            }
            (PolicyHead::Gaussian { log_std }, PolicyHead::Gaussian { log_std: old_ls }) => {
                let var: Vec<f64> = log_std.iter().map(|l| (2.0 * l).exp()).collect();
                let old_var: Vec<f64> = old_ls.iter().map(|l| (2.0 * l).exp()).collect();
                let mut d = Array2::zeros(logits.raw_dim());
                let mut g_ls = vec![0.0; log_std.len()];
                for ((mut drow, cur), old) in d.rows_mut().into_iter().zip(logits.rows()).zip(self.old_out.rows()) {
                    for j in 0..var.len() {
                        let diff = cur[j] - old[j];
                        drow[j] = diff / var[j] / n;
                        g_ls[j] += (1.0 - (old_var[j] + diff * diff) / var[j]) / n;
                    }
                }
                let mut g = self.policy.net.backward_logits_batch(self.inputs.view(), d.view())?;
                g.extend_from_slice(&g_ls);
                Ok(g)
            }
            _ => unreachable!("old and current heads share a kind"),
        }
    }
}

impl TrustRegionProblem for PolicyBatch<'_> {
    fn params(&self) -> ParamVector {
        self.policy.get_params()
    }

    fn set_params(&mut self, params: &ParamVector) -> Result<()> {
        self.policy.set_params(params)
    }

    fn log_probs(&self) -> Result<Vec<f64>> {
        self.policy.log_probs_batch(self.inputs.view(), &self.actions)
    }

    fn old_log_probs(&self) -> &[f64] {
        &self.old_log_probs
    }

    fn weighted_score(&self, weights: &[f64]) -> Result<ParamVector> {
        check_len("score weights", self.len(), weights.len())?;
        let logits = self.policy.net.logits_batch(self.inputs.view())?;
        match (&self.policy.head, &self.actions) {
            (PolicyHead::Categorical, BatchActions::Discrete(idx)) => {
                let mut d = Array2::zeros(logits.raw_dim());
                for (((mut drow, row), &a), &w) in d.rows_mut().into_iter().zip(logits.rows()).zip(idx).zip(weights) {
                    let p = softmax(row.as_slice().expect("contiguous"));
                    for (j, (dv, pv)) in drow.iter_mut().zip(p).enumerate() {
                        *dv = w * (if j == a { 1.0 } else { 0.0 } - pv);
                    }
                }
                self.policy.net.backward_logits_batch(self.inputs.view(), d.view())
            }
            (PolicyHead::Gaussian { log_std }, BatchActions::Continuous(acts)) => {
                let var: Vec<f64> = log_std.iter().map(|l| (2.0 * l).exp()).collect();
                let mut d = Array2::zeros(logits.raw_dim());
                let mut g_ls = vec![0.0; log_std.len()];
                for (((mut drow, mean), a), &w) in d.rows_mut().into_iter().zip(logits.rows()).zip(acts.rows()).zip(weights)
                {
                    for j in 0..var.len() {
                        let diff = a[j] - mean[j];
                        drow[j] = w * diff / var[j];
                        g_ls[j] += w * (diff * diff / var[j] - 1.0);
                    }
                }
                let mut g = self.policy.net.backward_logits_batch(self.inputs.view(), d.view())?;
                g.extend_from_slice(&g_ls);
                Ok(g)
            }
            _ => Err(Error::InvalidAction("batch actions do not fit the policy head".into())),
        }
    }

    fn mean_kl(&self) -> Result<f64> {
        let n = self.len() as f64;
        let logits = self.policy.net.logits_batch(self.inputs.view())?;
        let total: f64 = match (&self.policy.head, &self.old.head) {
            (PolicyHead::Categorical, PolicyHead::Categorical) => logits
                .rows()
                .into_iter()
                .zip(self.old_out.rows())
                .map(|(cur, old)| {
                    let lp = log_softmax(cur.as_slice().expect("contiguous"));
                    let lq = log_softmax(old.as_slice().expect("contiguous"));
                    lq.iter().zip(&lp).map(|(q, p)| q.exp() * (q - p)).sum::<f64>()
                })
                .sum(),
            (PolicyHead::Gaussian { log_std }, PolicyHead::Gaussian { log_std: old_ls }) => logits
                .rows()
                .into_iter()
                .zip(self.old_out.rows())
                .map(|(cur, old)| {
                    (0..log_std.len())
                        .map(|j| {
                            let var = (2.0 * log_std[j]).exp();
                            let old_var = (2.0 * old_ls[j]).exp();
                            let diff = cur[j] - old[j];
                            log_std[j] - old_ls[j] + (old_var + diff * diff) / (2.0 * var) - 0.5
                        })
                        .sum::<f64>()
                })
                .sum(),
            _ => unreachable!("old and current heads share a kind"),
        };
        Ok(total / n)
    }

    fn fisher_vector_product(&self, v: &[f64]) -> Result<ParamVector> {
        check_len("fisher vector", self.old.param_len(), v.len())?;
        let n = self.len() as f64;
        let net_len = self.old.net.param_len();
        let (logits, dz) = self.old.net.jvp_logits_batch(self.inputs.view(), &v[..net_len])?;
        match &self.old.head {
            PolicyHead::Categorical => {
                let mut u = Array2::zeros(dz.raw_dim());
                for ((mut urow, z), d) in u.rows_mut().into_iter().zip(logits.rows()).zip(dz.rows()) {
                    let p = softmax(z.as_slice().expect("contiguous"));
                    let pd: f64 = p.iter().zip(d).map(|(a, b)| a * b).sum();
                    for ((uv, pv), dv) in urow.iter_mut().zip(&p).zip(d) {
                        *uv = pv * (dv - pd) / n;
                    }
                }
                self.old.net.backward_logits_batch(self.inputs.view(), u.view())
            }
            PolicyHead::Gaussian { log_std } => {
                let mut u = dz;
                for mut row in u.rows_mut() {
                    for (j, x) in row.iter_mut().enumerate() {
                        *x /= (2.0 * log_std[j]).exp() * n;
                    }
                }
                let mut g = self.old.net.backward_logits_batch(self.inputs.view(), u.view())?;
                let scaled: Vec<f64> = v[net_len..].iter().map(|x| 2.0 * x).collect();
                g.extend_from_slice(&scaled);
                Ok(g)
            }
        }
    }
}

/// Scalar-output network helpers shared by the discriminators and the value function.
fn scalar_batch(net: &Approximator, inputs: ArrayView2<f64>) -> Result<Vec<f64>> {
    Ok(net.logits_batch(inputs)?.index_axis(Axis(1), 0).to_vec())
}

fn scalar_backward(net: &Approximator, inputs: ArrayView2<f64>, weights: &[f64]) -> Result<ParamVector> {
    check_len("scalar output gradient", inputs.nrows(), weights.len())?;
    let g = ArrayView2::from_shape((weights.len(), 1), weights).expect("column view");
    net.backward_logits_batch(inputs, g)
}

fn scalar_net(layout: InputLayout, hidden: &[usize], seed: u64) -> Result<Approximator> {
    Approximator::build(ApproximatorSpec::new(layout.width(), hidden, 1, OutputHead::Linear), seed)
}

/// Body `f_w(s, a[, c])` of the odds-ratio discriminator.
#[derive(Debug, Clone, PartialEq)]
pub struct AirlDiscriminator {
    pub net: Approximator,
    pub layout: InputLayout,
}

impl AirlDiscriminator {
    pub fn new(layout: InputLayout, hidden: &[usize], seed: u64) -> Result<Self> {
        Ok(Self {
            net: scalar_net(layout, hidden, seed)?,
            layout,
        })
    }

    pub fn f(&self, input: &[f64]) -> Result<f64> {
        Ok(self.net.forward(input)?[0])
    }

    pub fn f_batch(&self, inputs: ArrayView2<f64>) -> Result<Vec<f64>> {
        scalar_batch(&self.net, inputs)
    }

    /// Gradient of `sum_i weights_i f(x_i)`.
    pub fn backward(&self, inputs: ArrayView2<f64>, weights: &[f64]) -> Result<ParamVector> {
        scalar_backward(&self.net, inputs, weights)
    }

    pub fn d(&self, input: &[f64], log_pi: f64) -> Result<f64> {
        airl_d(self.f(input)?, log_pi)
    }
}

/// Logistic discriminator `D = sigmoid(logit(s, a[, c]))`.
#[derive(Debug, Clone, PartialEq)]
pub struct PlainDiscriminator {
    pub net: Approximator,
    pub layout: InputLayout,
}

impl PlainDiscriminator {
    pub fn new(layout: InputLayout, hidden: &[usize], seed: u64) -> Result<Self> {
        Ok(Self {
            net: scalar_net(layout, hidden, seed)?,
            layout,
        })
    }

    pub fn logit(&self, input: &[f64]) -> Result<f64> {
        Ok(self.net.forward(input)?[0])
    }

    pub fn logit_batch(&self, inputs: ArrayView2<f64>) -> Result<Vec<f64>> {
        scalar_batch(&self.net, inputs)
    }

    pub fn backward(&self, inputs: ArrayView2<f64>, weights: &[f64]) -> Result<ParamVector> {
        scalar_backward(&self.net, inputs, weights)
    }

    pub fn d(&self, input: &[f64]) -> Result<f64> {
        Ok(sigmoid(self.logit(input)?))
    }
}

/// `V_phi(s[, c])`.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueFunction {
    pub net: Approximator,
    pub layout: InputLayout,
}

impl ValueFunction {
    pub fn new(layout: InputLayout, hidden: &[usize], seed: u64) -> Result<Self> {
        Ok(Self {
            net: scalar_net(layout, hidden, seed)?,
            layout,
        })
    }

    pub fn value(&self, features: &[f64], task: &TaskVariable) -> Result<f64> {
        Ok(self.net.forward(&self.layout.compose(features, None, Some(task))?)?[0])
    }

    pub fn value_batch(&self, inputs: ArrayView2<f64>) -> Result<Vec<f64>> {
        scalar_batch(&self.net, inputs)
    }

    /// Mean squared error against `targets` and its parameter gradient.
    pub fn mse_and_gradient(&self, inputs: ArrayView2<f64>, targets: &[f64]) -> Result<(f64, ParamVector)> {
        if targets.is_empty() {
            return Err(Error::Empty("value regression batch"));
        }
        let v = self.value_batch(inputs)?;
        check_len("value targets", v.len(), targets.len())?;
        let n = v.len() as f64;
        let resid: Vec<f64> = v.iter().zip(targets).map(|(a, b)| a - b).collect();
        let loss = resid.iter().map(|r| r * r).sum::<f64>() / n;
        let weights: Vec<f64> = resid.iter().map(|r| 2.0 * r / n).collect();
        Ok((loss, scalar_backward(&self.net, inputs, &weights)?))
    }
}

/// Posterior `Q(c | s, a)` over task codes.
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorQ {
    pub net: Approximator,
    pub layout: InputLayout,
}

impl PosteriorQ {
    pub fn new(layout: InputLayout, n_codes: usize, hidden: &[usize], seed: u64) -> Result<Self> {
        if layout.uses_task() {
            return Err(Error::InvalidSpec("posterior cannot read the task it predicts".into()));
        }
        let spec = ApproximatorSpec::new(layout.width(), hidden, n_codes, OutputHead::Softmax);
        Ok(Self {
            net: Approximator::build(spec, seed)?,
            layout,
        })
    }

    pub fn n_codes(&self) -> usize {
        self.net.spec().output_dim
    }

    pub fn posterior_log_q(&self, features: &[f64], action: &[f64]) -> Result<Vec<f64>> {
        let x = self.layout.compose(features, Some(action), None)?;
        let batch = ArrayView2::from_shape((1, x.len()), &x).expect("row view");
        let logits = self.net.logits_batch(batch)?;
        Ok(log_softmax(logits.row(0).as_slice().expect("contiguous")))
    }

    /// `log Q(c_i | x_i)` for each row.
    pub fn log_q_batch(&self, inputs: ArrayView2<f64>, codes: &[usize]) -> Result<Vec<f64>> {
        check_len("posterior codes", inputs.nrows(), codes.len())?;
        let logits = self.net.logits_batch(inputs)?;
        Ok(logits
            .rows()
            .into_iter()
            .zip(codes)
            .map(|(row, &c)| log_softmax(row.as_slice().expect("contiguous"))[c])
            .collect())
    }

    /// Mean `log Q(c_i | x_i)` and its gradient.
    pub fn mean_log_q_and_gradient(&self, inputs: ArrayView2<f64>, codes: &[usize]) -> Result<(f64, ParamVector)> {
        if codes.is_empty() {
            return Err(Error::Empty("posterior batch"));
        }
        let logits = self.net.logits_batch(inputs)?;
        check_len("posterior codes", logits.nrows(), codes.len())?;
        let n = codes.len() as f64;
        let mut d = Array2::zeros(logits.raw_dim());
        let mut total = 0.0;
        for ((mut drow, row), &c) in d.rows_mut().into_iter().zip(logits.rows()).zip(codes) {
            let lp = log_softmax(row.as_slice().expect("contiguous"));
            total += lp[c];
            for (j, (dv, l)) in drow.iter_mut().zip(&lp).enumerate() {
                *dv = (if j == c { 1.0 } else { 0.0 } - l.exp()) / n;
            }
        }
        Ok((total / n, self.net.backward_logits_batch(inputs, d.view())?))
    }
}
