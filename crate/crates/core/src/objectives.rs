//! Objectives and gradient estimators.
//!
//! Sample-based estimators work on a [`TrajectoryBatch`] plus per-transition
//! [`ValueEstimates`]. Exact estimators work on an [`ExactSetting`], a small
//! enumerable game with frozen critic tables, and exist mainly so the
//! sample-based code has something to be checked against.
//!
//! All gradients are ascent directions on the objective they belong to.
//! `ppo_surrogate` additionally reports the loss it minimizes.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::envs::matrix::MatrixGameSpec;
use crate::error::{Error, Result};
use crate::game::{n_step_targets, AgentId, Observation, OpponentTag, TrajectoryBatch};
use crate::policy::{PolicyParams, ValueHead};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MiMode {
    Exact,
    Sampled,
}

/// Which gradient drives the parameter update.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UpdateMode {
    /// Clipped surrogate on the advantage signal.
    Ppo,
    /// Clipped surrogate plus `lambda_mi` times the sampled MI gradient.
    PpoWithMi,
    /// Plain policy gradient plus `lambda_mi` times the MI gradient.
    Augmented,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ObjectiveConfig {
    pub gamma: f64,
    pub lambda_mi: f64,
    pub ppo_clip: f64,
    pub n_step: usize,
    pub learning_rate: f64,
    /// Step size for the value regression; the policy rate when unset.
    pub value_learning_rate: Option<f64>,
    pub value_epochs: usize,
    pub mi_mode: MiMode,
    pub state_buckets: usize,
    pub ppo_epochs: usize,
    pub update_mode: UpdateMode,
    pub normalize_advantages: bool,
    pub max_grad_norm: f64,
}

impl Default for ObjectiveConfig {
    fn default() -> Self {
        Self {
            gamma: 0.995,
            lambda_mi: 0.1,
            ppo_clip: 0.1,
            n_step: 100,
            learning_rate: 1e-4,
            value_learning_rate: None,
            value_epochs: 1,
            mi_mode: MiMode::Sampled,
            state_buckets: crate::envs::duel::N_BUCKETS,
            ppo_epochs: 4,
            update_mode: UpdateMode::Ppo,
            normalize_advantages: true,
            max_grad_norm: 10.0,
        }
    }
}

impl ObjectiveConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.into()));
        if !(0.0..1.0).contains(&self.gamma) {
            return Err(Error::BadGamma(self.gamma));
        }
        if !(self.ppo_clip > 0.0) {
            return bad("ppo_clip must be > 0");
        }
        if !(self.lambda_mi >= 0.0) {
            return bad("lambda_mi must be >= 0");
        }
        if self.n_step == 0 {
            return bad("n_step must be >= 1");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be positive");
        }
        if let Some(v) = self.value_learning_rate {
            if !(v >= 0.0 && v.is_finite()) {
                return bad("value_learning_rate must be non-negative");
            }
        }
        if self.state_buckets == 0 {
            return bad("state_buckets must be >= 1");
        }
        if !(self.max_grad_norm > 0.0) {
            return bad("max_grad_norm must be > 0");
        }
        Ok(())
    }

    pub fn value_lr(&self) -> f64 {
        self.value_learning_rate.unwrap_or(self.learning_rate)
    }
}

/// Per-transition critic quantities aligned with a batch.
#[derive(Clone, Debug, PartialEq)]
pub struct ValueEstimates {
    pub q: Vec<f64>,
    pub v: Vec<f64>,
    pub advantage: Vec<f64>,
}

impl ValueEstimates {
    /// `advantage = q - v`.
    pub fn new(q: Vec<f64>, v: Vec<f64>) -> Result<Self> {
        if q.len() != v.len() {
            return Err(Error::Dimension {
                what: "baseline values",
                expected: q.len(),
                got: v.len(),
            });
        }
        let advantage: Vec<f64> = q.iter().zip(&v).map(|(q, v)| q - v).collect();
        if advantage.iter().any(|a| !a.is_finite()) {
            return Err(Error::NonFinite("advantage"));
        }
        Ok(Self { q, v, advantage })
    }

    fn check(&self, batch: &TrajectoryBatch) -> Result<()> {
        if self.q.len() != batch.len() || self.advantage.len() != batch.len() {
            return Err(Error::Dimension {
                what: "value estimates",
                expected: batch.len(),
                got: self.q.len(),
            });
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct GradDiagnostics {
    /// Norm of the reward-driven term.
    pub reward_term: f64,
    /// Norm of the mutual-information term before weighting.
    pub mi_term: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GradEstimate {
    pub grad: Vec<f64>,
    pub n_samples: usize,
    pub diagnostics: GradDiagnostics,
}

impl GradEstimate {
    fn zeros(dim: usize, n_samples: usize) -> Self {
        Self {
            grad: vec![0.0; dim],
            n_samples,
            diagnostics: GradDiagnostics::default(),
        }
    }

    pub fn norm(&self) -> f64 {
        norm(&self.grad)
    }
}

pub fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Rescales `grad` in place so its norm is at most `max_norm`; returns the
/// norm before clipping.
pub fn clip_grad_norm(grad: &mut [f64], max_norm: f64) -> f64 {
    let n = norm(grad);
    if n > max_norm {
        let s = max_norm / n;
        grad.iter_mut().for_each(|g| *g *= s);
    }
    n
}

/// Shifts and scales to zero mean and unit variance. Returns `false` and
/// leaves the input alone when the variance is below `1e-8`.
pub fn normalize_advantages(adv: &mut [f64]) -> bool {
    if adv.is_empty() {
        return false;
    }
    let n = adv.len() as f64;
    let mean = adv.iter().sum::<f64>() / n;
    let var = adv.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / n;
    if var < 1e-8 {
        return false;
    }
    let sd = var.sqrt();
    adv.iter_mut().for_each(|a| *a = (*a - mean) / sd);
    true
}

/// Baselines from `head` and n-step targets per episode. A truncated final
/// step bootstraps from the value of its successor state.
pub fn estimate_values(
    batch: &TrajectoryBatch,
    head: &ValueHead,
    config: &ObjectiveConfig,
) -> Result<ValueEstimates> {
    let mut q = Vec::with_capacity(batch.len());
    let mut v = Vec::with_capacity(batch.len());
    for ep in batch.episodes() {
        let ts = &batch.transitions[ep];
        let rewards: Vec<f64> = ts.iter().map(|t| t.reward).collect();
        let values = ts
            .iter()
            .map(|t| head.value(&t.state, t.id_self))
            .collect::<Result<Vec<_>>>()?;
        let last = ts.last().ok_or(Error::Empty("episode"))?;
        let tail = if last.done {
            0.0
        } else {
            head.value(&last.next_state, last.id_self)?
        };
        q.extend(n_step_targets(&rewards, &values, config.gamma, config.n_step, tail)?);
        v.extend(values);
    }
    ValueEstimates::new(q, v)
}

/// Regresses `head` onto the targets `q`. Tabular heads take the exact
/// per-cell least-squares solution; MLP heads take `value_epochs` full-batch
/// gradient steps. Returns the mean squared error.
pub fn fit_value_head(
    head: &mut ValueHead,
    batch: &TrajectoryBatch,
    q: &[f64],
    config: &ObjectiveConfig,
) -> Result<f64> {
    let samples: Vec<(&Observation, AgentId, f64)> = batch
        .transitions
        .iter()
        .zip(q)
        .map(|(t, q)| (&t.state, t.id_self, *q))
        .collect();
    match head.arch {
        crate::policy::Arch::TabularSoftmax { .. } => {
            head.fit_cell_means(&samples)?;
            let mse = samples
                .iter()
                .map(|(o, id, q)| head.value(o, *id).map(|v| (v - q).powi(2)))
                .sum::<Result<f64>>()?;
            Ok(mse / samples.len().max(1) as f64)
        }
        crate::policy::Arch::Mlp { .. } => {
            head.regress(&samples, config.value_lr(), config.value_epochs.max(1))
        }
    }
}

/// Monte-Carlo estimate of the shared objective: per-agent mean of `q`,
/// averaged over the agents present in the batch.
pub fn estimate_j(batch: &TrajectoryBatch, values: &ValueEstimates) -> Result<f64> {
    if batch.is_empty() {
        return Err(Error::Empty("batch"));
    }
    values.check(batch)?;
    let mut per_agent: BTreeMap<usize, (f64, usize)> = BTreeMap::new();
    for (t, q) in batch.transitions.iter().zip(&values.q) {
        let e = per_agent.entry(t.id_self.0).or_default();
        e.0 += q;
        e.1 += 1;
    }
    let k = per_agent.len() as f64;
    Ok(per_agent.values().map(|(s, n)| s / *n as f64).sum::<f64>() / k)
}

fn check_params(params: &PolicyParams) -> Result<()> {
    params.validate()
}

/// Score-function policy gradient `mean_t A_t * grad log pi(a_t)`. When the
/// opponent acted with the same parameters its score term is added too.
pub fn policy_gradient(
    batch: &TrajectoryBatch,
    values: &ValueEstimates,
    params: &PolicyParams,
) -> Result<GradEstimate> {
    check_params(params)?;
    values.check(batch)?;
    let mut est = GradEstimate::zeros(params.flat.len(), batch.len());
    if batch.is_empty() {
        return Ok(est);
    }
    let scale = 1.0 / batch.len() as f64;
    for (t, a) in batch.transitions.iter().zip(&values.advantage) {
        let w = a * scale;
        params.accumulate_score(&t.state, t.id_self, &t.mask_self, t.action_self, w, &mut est.grad)?;
        if t.opponent == OpponentTag::SelfPlay {
            params.accumulate_score(&t.opp_state, t.id_opp, &t.mask_opp, t.action_opp, w, &mut est.grad)?;
        }
    }
    est.diagnostics.reward_term = est.norm();
    Ok(est)
}

/// A small enumerable game: weighted states, the two ids that meet there,
/// and frozen critic tables `q_i[a_i][a_ii]`, `q_ii[a_i][a_ii]`.
#[derive(Clone, Debug, PartialEq)]
pub struct ExactSetting {
    pub states: Vec<(Observation, f64)>,
    pub id_i: AgentId,
    pub id_ii: AgentId,
    pub mask_i: Vec<bool>,
    pub mask_ii: Vec<bool>,
    pub q_i: Vec<Vec<f64>>,
    pub q_ii: Vec<Vec<f64>>,
}

pub fn matrix_observation() -> Observation {
    Observation {
        index: 0,
        features: vec![1.0],
    }
}

impl ExactSetting {
    /// One-shot matrix game with its zero-sum payoffs as critics. Tables
    /// are padded to `n_actions` square; padded actions are masked.
    pub fn matrix(spec: &MatrixGameSpec, n_actions: usize, id_i: AgentId, id_ii: AgentId) -> Self {
        let mut q_i = vec![vec![0.0; n_actions]; n_actions];
        for (a, row) in spec.payoff.iter().enumerate() {
            for (b, v) in row.iter().enumerate() {
                q_i[a][b] = *v;
            }
        }
        let q_ii = q_i.iter().map(|r| r.iter().map(|v| -v).collect()).collect();
        Self {
            states: vec![(matrix_observation(), 1.0)],
            id_i,
            id_ii,
            mask_i: (0..n_actions).map(|a| a < spec.n_actions_i()).collect(),
            mask_ii: (0..n_actions).map(|a| a < spec.n_actions_ii()).collect(),
            q_i,
            q_ii,
        }
    }

    pub fn with_critics(mut self, q_i: Vec<Vec<f64>>, q_ii: Vec<Vec<f64>>) -> Self {
        self.q_i = q_i;
        self.q_ii = q_ii;
        self
    }

    fn probs(&self, params: &PolicyParams, obs: &Observation) -> Result<(Vec<f64>, Vec<f64>)> {
        Ok((
            params.forward(obs, self.id_i, &self.mask_i)?.probs,
            params.forward(obs, self.id_ii, &self.mask_ii)?.probs,
        ))
    }

    /// State-marginalized joint `p(a, b) = sum_s w_s pi(a|s,i) pi(b|s,ii)`.
    pub fn joint(&self, params: &PolicyParams) -> Result<Vec<Vec<f64>>> {
        let n = params.n_actions;
        let mut joint = vec![vec![0.0; n]; n];
        for (obs, w) in &self.states {
            let (pi, pii) = self.probs(params, obs)?;
            for a in 0..n {
                for b in 0..n {
                    joint[a][b] += w * pi[a] * pii[b];
                }
            }
        }
        Ok(joint)
    }

    fn critic(&self, a: usize, b: usize) -> f64 {
        0.5 * (self.q_i[a][b] + self.q_ii[a][b])
    }
}

/// `J = sum_s w_s sum_{a,b} pi(a|s,i) pi(b|s,ii) (q_i + q_ii)(a,b) / 2`.
pub fn exact_objective(params: &PolicyParams, setting: &ExactSetting) -> Result<f64> {
    let n = params.n_actions;
    let mut j = 0.0;
    for (obs, w) in &setting.states {
        let (pi, pii) = setting.probs(params, obs)?;
        for a in 0..n {
            for b in 0..n {
                j += w * pi[a] * pii[b] * setting.critic(a, b);
            }
        }
    }
    Ok(j)
}

/// Pushes `d(sum_c pi(c) m(c)) / d logits = pi (m - pi . m)` back through the
/// network, scaled by `w`.
fn backprop_expectation(
    params: &PolicyParams,
    obs: &Observation,
    id: AgentId,
    probs: &[f64],
    m: &[f64],
    w: f64,
    grad: &mut [f64],
) -> Result<()> {
    let mean: f64 = probs.iter().zip(m).map(|(p, m)| p * m).sum();
    let dlogits: Vec<f64> = probs.iter().zip(m).map(|(p, m)| w * p * (m - mean)).collect();
    params.backward_logits(obs, id, &dlogits, grad)
}

/// Exact gradient of [`exact_objective`] with the critics held fixed.
pub fn policy_gradient_exact(params: &PolicyParams, setting: &ExactSetting) -> Result<GradEstimate> {
    check_params(params)?;
    let n = params.n_actions;
    let mut est = GradEstimate::zeros(params.flat.len(), setting.states.len());
    for (obs, w) in &setting.states {
        let (pi, pii) = setting.probs(params, obs)?;
        let m_i: Vec<f64> = (0..n)
            .map(|a| (0..n).map(|b| setting.critic(a, b) * pii[b]).sum())
            .collect();
        let m_ii: Vec<f64> = (0..n)
            .map(|b| (0..n).map(|a| setting.critic(a, b) * pi[a]).sum())
            .collect();
        backprop_expectation(params, obs, setting.id_i, &pi, &m_i, *w, &mut est.grad)?;
        backprop_expectation(params, obs, setting.id_ii, &pii, &m_ii, *w, &mut est.grad)?;
    }
    est.diagnostics.reward_term = est.norm();
    Ok(est)
}

/// `I(A; B)` in nats of a joint table. Rejects tables with negative
/// entries or a total away from 1.
pub fn mutual_information_joint(joint: &[Vec<f64>]) -> Result<f64> {
    let total: f64 = joint.iter().flatten().sum();
    if joint.iter().flatten().any(|p| !(*p >= 0.0)) || (total - 1.0).abs() > 1e-9 {
        return Err(Error::NotNormalized(total));
    }
    let pa: Vec<f64> = joint.iter().map(|r| r.iter().sum()).collect();
    let width = joint.iter().map(Vec::len).max().unwrap_or(0);
    let pb: Vec<f64> = (0..width)
        .map(|b| joint.iter().map(|r| r.get(b).copied().unwrap_or(0.0)).sum())
        .collect();
    let mut mi = 0.0;
    for (a, row) in joint.iter().enumerate() {
        for (b, &p) in row.iter().enumerate() {
            if p > 0.0 {
                mi += p * (p / (pa[a] * pb[b])).ln();
            }
        }
    }
    Ok(mi.max(0.0))
}

/// MI between the two ids' actions in state `obs` under the factorized
/// policy. Zero up to rounding by construction.
pub fn mutual_information_exact(
    params: &PolicyParams,
    obs: &Observation,
    id_i: AgentId,
    id_ii: AgentId,
    mask_i: &[bool],
    mask_ii: &[bool],
) -> Result<f64> {
    let pi = params.forward(obs, id_i, mask_i)?.probs;
    let pii = params.forward(obs, id_ii, mask_ii)?.probs;
    let joint: Vec<Vec<f64>> = pi
        .iter()
        .map(|a| pii.iter().map(|b| a * b).collect())
        .collect();
    mutual_information_joint(&joint)
}

/// MI of the state-marginalized joint of an [`ExactSetting`]. Positive when
/// the two ids' actions co-vary across states.
pub fn coupled_mutual_information(params: &PolicyParams, setting: &ExactSetting) -> Result<f64> {
    mutual_information_joint(&setting.joint(params)?)
}

fn pmi_table(joint: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = joint.len();
    let pa: Vec<f64> = joint.iter().map(|r| r.iter().sum()).collect();
    let pb: Vec<f64> = (0..n).map(|b| joint.iter().map(|r| r[b]).sum()).collect();
    joint
        .iter()
        .enumerate()
        .map(|(a, row)| {
            row.iter()
                .enumerate()
                .map(|(b, &p)| if p > 0.0 { (p / (pa[a] * pb[b])).ln() } else { 0.0 })
                .collect()
        })
        .collect()
}

/// Exact gradient of [`coupled_mutual_information`]. With a single state the
/// joint factorizes and the gradient is exactly zero.
pub fn mi_gradient_exact(params: &PolicyParams, setting: &ExactSetting) -> Result<GradEstimate> {
    check_params(params)?;
    let n = params.n_actions;
    let mut est = GradEstimate::zeros(params.flat.len(), setting.states.len());
    let pmi = pmi_table(&setting.joint(params)?);
    if pmi.iter().flatten().all(|v| *v == 0.0) {
        return Ok(est);
    }
    for (obs, w) in &setting.states {
        let (pi, pii) = setting.probs(params, obs)?;
        let m_i: Vec<f64> = (0..n).map(|a| (0..n).map(|b| pmi[a][b] * pii[b]).sum()).collect();
        let m_ii: Vec<f64> = (0..n).map(|b| (0..n).map(|a| pmi[a][b] * pi[a]).sum()).collect();
        backprop_expectation(params, obs, setting.id_i, &pi, &m_i, *w, &mut est.grad)?;
        backprop_expectation(params, obs, setting.id_ii, &pii, &m_ii, *w, &mut est.grad)?;
    }
    est.diagnostics.mi_term = est.norm();
    Ok(est)
}

#[derive(Default)]
struct BucketTable {
    joint: BTreeMap<(usize, usize), usize>,
    a: BTreeMap<usize, usize>,
    b: BTreeMap<usize, usize>,
    n: usize,
}

impl BucketTable {
    fn add(&mut self, a: usize, b: usize) {
        *self.joint.entry((a, b)).or_default() += 1;
        *self.a.entry(a).or_default() += 1;
        *self.b.entry(b).or_default() += 1;
        self.n += 1;
    }

    /// Plug-in pointwise MI `log p(a,b) - log p(a) - log p(b)`.
    fn pmi(&self, a: usize, b: usize) -> f64 {
        let n = self.n as f64;
        let pab = self.joint[&(a, b)] as f64 / n;
        let pa = self.a[&a] as f64 / n;
        let pb = self.b[&b] as f64 / n;
        (pab / (pa * pb)).ln()
    }

    fn mi(&self) -> f64 {
        let n = self.n as f64;
        self.joint
            .iter()
            .map(|(&(a, b), &c)| c as f64 / n * self.pmi(a, b))
            .sum::<f64>()
            .max(0.0)
    }
}

fn bucket_tables(samples: &[(usize, usize)], buckets: &[usize]) -> Result<BTreeMap<usize, BucketTable>> {
    if samples.is_empty() {
        return Err(Error::Empty("joint action samples"));
    }
    if samples.len() != buckets.len() {
        return Err(Error::Dimension {
            what: "bucket assignments",
            expected: samples.len(),
            got: buckets.len(),
        });
    }
    let mut tables: BTreeMap<usize, BucketTable> = BTreeMap::new();
    for (&(a, b), &k) in samples.iter().zip(buckets) {
        tables.entry(k).or_default().add(a, b);
    }
    Ok(tables)
}

/// Plug-in MI per state bucket, averaged with visitation weights.
pub fn mutual_information_sampled(samples: &[(usize, usize)], buckets: &[usize]) -> Result<f64> {
    let tables = bucket_tables(samples, buckets)?;
    let n = samples.len() as f64;
    Ok(tables.values().map(|t| t.n as f64 / n * t.mi()).sum())
}

/// Joint actions and buckets of every transition in a batch.
pub fn batch_joint_actions(batch: &TrajectoryBatch) -> (Vec<(usize, usize)>, Vec<usize>) {
    batch
        .transitions
        .iter()
        .map(|t| ((t.action_self, t.action_opp), t.bucket))
        .unzip()
}

pub fn batch_mutual_information(batch: &TrajectoryBatch) -> Result<f64> {
    let (s, b) = batch_joint_actions(batch);
    mutual_information_sampled(&s, &b)
}

/// Score-function MI gradient with plug-in tables:
/// `mean_t pmi(a_t, b_t | bucket_t) * grad log pi(a_t)`, adding the
/// opponent's score when it shares the parameters.
pub fn mi_gradient_sampled(batch: &TrajectoryBatch, params: &PolicyParams) -> Result<GradEstimate> {
    check_params(params)?;
    let (samples, buckets) = batch_joint_actions(batch);
    let tables = bucket_tables(&samples, &buckets)?;
    let mut est = GradEstimate::zeros(params.flat.len(), batch.len());
    let scale = 1.0 / batch.len() as f64;
    for t in &batch.transitions {
        let w = scale * tables[&t.bucket].pmi(t.action_self, t.action_opp);
        if w == 0.0 {
            continue;
        }
        params.accumulate_score(&t.state, t.id_self, &t.mask_self, t.action_self, w, &mut est.grad)?;
        if t.opponent == OpponentTag::SelfPlay {
            params.accumulate_score(&t.opp_state, t.id_opp, &t.mask_opp, t.action_opp, w, &mut est.grad)?;
        }
    }
    est.diagnostics.mi_term = est.norm();
    Ok(est)
}

/// Where the MI term comes from.
#[derive(Clone, Copy, Debug)]
pub enum MiSource<'a> {
    Exact(&'a ExactSetting),
    Sampled(&'a TrajectoryBatch),
}

pub fn mi_gradient(params: &PolicyParams, source: MiSource<'_>) -> Result<GradEstimate> {
    match source {
        MiSource::Exact(s) => mi_gradient_exact(params, s),
        MiSource::Sampled(b) => mi_gradient_sampled(b, params),
    }
}

fn combine(reward: GradEstimate, mi: GradEstimate, lambda: f64) -> GradEstimate {
    let mut grad = reward.grad;
    if lambda != 0.0 {
        for (g, m) in grad.iter_mut().zip(&mi.grad) {
            *g += lambda * m;
        }
    }
    GradEstimate {
        grad,
        n_samples: reward.n_samples,
        diagnostics: GradDiagnostics {
            reward_term: reward.diagnostics.reward_term,
            mi_term: mi.diagnostics.mi_term,
        },
    }
}

/// `policy_gradient + lambda_mi * mi_gradient`.
pub fn augmented_gradient(
    batch: &TrajectoryBatch,
    values: &ValueEstimates,
    params: &PolicyParams,
    config: &ObjectiveConfig,
    mi: MiSource<'_>,
) -> Result<GradEstimate> {
    config.validate()?;
    let reward = policy_gradient(batch, values, params)?;
    let mi = mi_gradient(params, mi)?;
    Ok(combine(reward, mi, config.lambda_mi))
}

/// Exact gradient of `J + lambda * I` on an enumerable setting.
pub fn augmented_gradient_exact(
    params: &PolicyParams,
    setting: &ExactSetting,
    lambda: f64,
) -> Result<GradEstimate> {
    let reward = policy_gradient_exact(params, setting)?;
    let mi = mi_gradient_exact(params, setting)?;
    Ok(combine(reward, mi, lambda))
}

fn joint_terms(params: &PolicyParams, t: &crate::game::Transition) -> Result<(f64, f64)> {
    let lp_i = params.log_prob(&t.state, t.id_self, &t.mask_self, t.action_self)?;
    let lp_ii = params.log_prob(&t.opp_state, t.id_opp, &t.mask_opp, t.action_opp)?;
    Ok((lp_i, lp_ii))
}

/// `mean_t [ q P log P - v P (log pi_i + log pi_ii) ]` with `P` the joint
/// probability of the recorded joint action under `params`.
pub fn mia_loss(batch: &TrajectoryBatch, values: &ValueEstimates, params: &PolicyParams) -> Result<f64> {
    values.check(batch)?;
    if batch.is_empty() {
        return Ok(0.0);
    }
    let mut total = 0.0;
    for (k, t) in batch.transitions.iter().enumerate() {
        let (lp_i, lp_ii) = joint_terms(params, t)?;
        let log_joint = lp_i + lp_ii;
        let p = log_joint.exp();
        total += values.q[k] * p * log_joint - values.v[k] * p * (lp_i + lp_ii);
    }
    Ok(total / batch.len() as f64)
}

/// The same expression summed over every joint action of an enumerable
/// setting, with seat I's critic as `q` and a constant baseline `v`.
pub fn mia_loss_exact(params: &PolicyParams, setting: &ExactSetting, v: f64) -> Result<f64> {
    let n = params.n_actions;
    let mut total = 0.0;
    for (obs, w) in &setting.states {
        let (pi, pii) = setting.probs(params, obs)?;
        for a in 0..n {
            for b in 0..n {
                let p = pi[a] * pii[b];
                if p == 0.0 {
                    continue;
                }
                let (li, lii) = (pi[a].ln(), pii[b].ln());
                total += w * (setting.q_i[a][b] * p * (li + lii) - v * p * (li + lii));
            }
        }
    }
    Ok(total)
}

/// Comparative-advantage loss of specialists that played the frozen
/// baseline: per-agent mean of `pi A log pi`, averaged over agents.
pub fn cam_loss(batch: &TrajectoryBatch, values: &ValueEstimates, specialist: &PolicyParams) -> Result<f64> {
    values.check(batch)?;
    if batch
        .transitions
        .iter()
        .any(|t| t.opponent != OpponentTag::FrozenBaseline)
    {
        return Err(Error::NotAgainstBaseline);
    }
    if batch.is_empty() {
        return Ok(0.0);
    }
    let mut per_agent: BTreeMap<usize, (f64, usize)> = BTreeMap::new();
    for (t, a) in batch.transitions.iter().zip(&values.advantage) {
        let lp = specialist.log_prob(&t.state, t.id_self, &t.mask_self, t.action_self)?;
        let e = per_agent.entry(t.id_self.0).or_default();
        e.0 += lp.exp() * a * lp;
        e.1 += 1;
    }
    let k = per_agent.len() as f64;
    Ok(per_agent.values().map(|(s, n)| s / *n as f64).sum::<f64>() / k)
}

/// Clipped surrogate against the behavior log-probs recorded in the batch.
/// Returns the loss `-mean min(rho A, clip(rho) A)` and the ascent gradient
/// of the objective with respect to `params`.
pub fn ppo_surrogate(
    batch: &TrajectoryBatch,
    advantages: &[f64],
    params: &PolicyParams,
    clip: f64,
) -> Result<(f64, GradEstimate)> {
    check_params(params)?;
    if advantages.len() != batch.len() {
        return Err(Error::Dimension {
            what: "advantages",
            expected: batch.len(),
            got: advantages.len(),
        });
    }
    let mut est = GradEstimate::zeros(params.flat.len(), batch.len());
    if batch.is_empty() {
        return Ok((0.0, est));
    }
    let scale = 1.0 / batch.len() as f64;
    let mut objective = 0.0;
    for (t, &a) in batch.transitions.iter().zip(advantages) {
        let lp = params.log_prob(&t.state, t.id_self, &t.mask_self, t.action_self)?;
        let rho = (lp - t.log_prob_self).exp();
        let clipped = rho.clamp(1.0 - clip, 1.0 + clip);
        objective += (rho * a).min(clipped * a);
        let active = if a >= 0.0 { rho <= 1.0 + clip } else { rho >= 1.0 - clip };
        if active && a != 0.0 {
            params.accumulate_score(
                &t.state,
                t.id_self,
                &t.mask_self,
                t.action_self,
                scale * rho * a,
                &mut est.grad,
            )?;
        }
    }
    est.diagnostics.reward_term = est.norm();
    Ok((-objective * scale, est))
}

/// Plain ascent `params + lr * grad`.
pub fn sgd_step(params: &PolicyParams, grad: &GradEstimate, learning_rate: f64) -> Result<PolicyParams> {
    if grad.grad.len() != params.flat.len() {
        return Err(Error::Dimension {
            what: "gradient",
            expected: params.flat.len(),
            got: grad.grad.len(),
        });
    }
    if grad.grad.iter().any(|g| !g.is_finite()) || !learning_rate.is_finite() {
        return Err(Error::NonFinite("gradient"));
    }
    let mut out = params.clone();
    for (p, g) in out.flat.iter_mut().zip(&grad.grad) {
        *p += learning_rate * g;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::game::Transition;
    use crate::rng::stream;
    use rand::Rng;

    fn mobs() -> Observation {
        matrix_observation()
    }

    fn tr(id: usize, opp: usize, a: usize, b: usize, n: usize, lp: f64, tag: OpponentTag) -> Transition {
        Transition {
            state: mobs(),
            opp_state: mobs(),
            next_state: mobs(),
            id_self: AgentId(id),
            id_opp: AgentId(opp),
            action_self: a,
            action_opp: b,
            reward: 0.0,
            done: true,
            mask_self: vec![true; n],
            mask_opp: vec![true; n],
            log_prob_self: lp,
            bucket: 0,
            opponent: tag,
        }
    }

    fn batch_of(ts: Vec<Transition>) -> TrajectoryBatch {
        let mut b = TrajectoryBatch::default();
        for t in ts {
            b.push_episode(vec![t]);
        }
        b
    }

    fn random_tabular(n_states: usize, n_ids: usize, n_actions: usize, seed: u64) -> PolicyParams {
        let mut p = PolicyParams::tabular(n_states, n_ids, n_actions);
        let mut rng = stream(seed, &[]);
        for v in &mut p.flat {
            *v = rng.gen_range(-1.5..1.5);
        }
        p
    }

    #[test]
    fn config_defaults_and_validation() {
        let c = ObjectiveConfig::default();
        assert_eq!(c.gamma, 0.995);
        assert_eq!(c.ppo_clip, 0.1);
        assert_eq!(c.n_step, 100);
        assert_eq!(c.learning_rate, 1e-4);
        c.validate().unwrap();
        for bad in [
            ObjectiveConfig { gamma: 1.0, ..c.clone() },
            ObjectiveConfig { ppo_clip: 0.0, ..c.clone() },
            ObjectiveConfig { lambda_mi: -0.1, ..c.clone() },
            ObjectiveConfig { n_step: 0, ..c.clone() },
        ] {
            assert!(bad.validate().is_err());
        }
    }

    #[test]
    fn estimate_j_examples() {
        let b = batch_of(vec![
            tr(0, 1, 0, 0, 2, 0.0, OpponentTag::SelfPlay),
            tr(1, 0, 0, 0, 2, 0.0, OpponentTag::SelfPlay),
        ]);
        let zero = ValueEstimates::new(vec![0.0; 2], vec![0.0; 2]).unwrap();
        assert_eq!(estimate_j(&b, &zero).unwrap(), 0.0);
        let sym = ValueEstimates::new(vec![4.0, -4.0], vec![0.0; 2]).unwrap();
        assert_eq!(estimate_j(&b, &sym).unwrap(), 0.0);
        assert!(estimate_j(&TrajectoryBatch::default(), &ValueEstimates::new(vec![], vec![]).unwrap()).is_err());
    }

    #[test]
    fn estimate_j_matches_enumeration() {
        let spec = MatrixGameSpec::skewed_2x2();
        let mut p = PolicyParams::tabular(1, 2, 2);
        p.flat = vec![0.4, -0.2, -0.3, 0.5];
        let m = [true, true];
        let pi = p.forward(&mobs(), AgentId(0), &m).unwrap().probs;
        let pii = p.forward(&mobs(), AgentId(1), &m).unwrap().probs;
        let exact = spec.expected_payoff(&pi, &pii);
        let mut rng = stream(11, &[]);
        let n = 50_000;
        let mut ts = Vec::with_capacity(n);
        let mut q = Vec::with_capacity(n);
        for _ in 0..n {
            let a = p.forward(&mobs(), AgentId(0), &m).unwrap().sample(&mut rng);
            let b = p.forward(&mobs(), AgentId(1), &m).unwrap().sample(&mut rng);
            ts.push(tr(0, 1, a, b, 2, 0.0, OpponentTag::Generation(0)));
            q.push(spec.payoff[a][b]);
        }
        let mean = q.iter().sum::<f64>() / n as f64;
        let sd = (q.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n as f64).sqrt();
        let b = batch_of(ts);
        let v = ValueEstimates::new(q, vec![0.0; n]).unwrap();
        let j = estimate_j(&b, &v).unwrap();
        assert!((j - exact).abs() < 3.0 * sd / (n as f64).sqrt(), "{j} vs {exact}");
    }

    #[test]
    fn zero_advantage_zero_gradient() {
        let p = random_tabular(1, 2, 3, 1);
        let b = batch_of(vec![tr(0, 1, 1, 2, 3, 0.0, OpponentTag::SelfPlay)]);
        let v = ValueEstimates::new(vec![2.0], vec![2.0]).unwrap();
        let g = policy_gradient(&b, &v, &p).unwrap();
        assert!(g.grad.iter().all(|x| *x == 0.0));
        let (loss, g) = ppo_surrogate(&b, &v.advantage, &p, 0.1).unwrap();
        assert_eq!(loss, 0.0);
        assert!(g.grad.iter().all(|x| *x == 0.0));
    }

    fn fd<F: Fn(&PolicyParams) -> f64>(p: &PolicyParams, f: F) -> Vec<f64> {
        let h = 1e-6;
        (0..p.flat.len())
            .map(|i| {
                let mut hi = p.clone();
                hi.flat[i] += h;
                let mut lo = p.clone();
                lo.flat[i] -= h;
                (f(&hi) - f(&lo)) / (2.0 * h)
            })
            .collect()
    }

    fn rel_err(a: &[f64], b: &[f64]) -> f64 {
        let diff = norm(&a.iter().zip(b).map(|(x, y)| x - y).collect::<Vec<_>>());
        diff / norm(a).max(norm(b)).max(1e-8)
    }

    #[test]
    fn exact_policy_gradient_matches_fd() {
        let spec = MatrixGameSpec::skewed_2x2();
        let p = random_tabular(1, 2, 2, 2);
        let s = ExactSetting::matrix(&spec, 2, AgentId(0), AgentId(1))
            .with_critics(spec.payoff.clone(), vec![vec![0.5, -1.0], vec![2.0, 0.25]]);
        let g = policy_gradient_exact(&p, &s).unwrap();
        let f = fd(&p, |q| exact_objective(q, &s).unwrap());
        assert!(rel_err(&g.grad, &f) < 1e-4);
    }

    #[test]
    fn matching_pennies_uniform_is_stationary() {
        let spec = MatrixGameSpec::matching_pennies();
        let p = PolicyParams::tabular(1, 2, 2);
        let s = ExactSetting::matrix(&spec, 2, AgentId(0), AgentId(1));
        let g = policy_gradient_exact(&p, &s).unwrap();
        assert!(g.grad.iter().all(|x| x.abs() < 1e-15));
    }

    #[test]
    fn mi_of_joints() {
        let corr = vec![vec![0.5, 0.0], vec![0.0, 0.5]];
        assert!((mutual_information_joint(&corr).unwrap() - 2f64.ln()).abs() < 1e-12);
        let point = vec![vec![1.0, 0.0], vec![0.0, 0.0]];
        assert_eq!(mutual_information_joint(&point).unwrap(), 0.0);
        assert!(matches!(
            mutual_information_joint(&[vec![0.5, 0.1]]),
            Err(Error::NotNormalized(_))
        ));
        let p = random_tabular(1, 2, 3, 3);
        let mi = mutual_information_exact(&p, &mobs(), AgentId(0), AgentId(1), &[true; 3], &[true; 3]).unwrap();
        assert!(mi.abs() < 1e-12);
    }

    #[test]
    fn sampled_mi_examples() {
        let corr: Vec<(usize, usize)> = (0..1000).map(|i| (i % 2, i % 2)).collect();
        let mi = mutual_information_sampled(&corr, &vec![0; 1000]).unwrap();
        assert!((mi - 2f64.ln()).abs() < 1e-6);
        assert_eq!(mutual_information_sampled(&[(1, 2); 5], &[3; 5]).unwrap(), 0.0);
        assert!(mutual_information_sampled(&[], &[]).is_err());
        // Correlation that only exists across buckets is removed by conditioning.
        let s = vec![(0, 0), (0, 0), (1, 1), (1, 1)];
        assert_eq!(mutual_information_sampled(&s, &[0, 0, 1, 1]).unwrap(), 0.0);
        assert!(mutual_information_sampled(&s, &[0; 4]).unwrap() > 0.69);
    }

    #[test]
    fn independent_samples_have_small_mi() {
        let mut rng = stream(12, &[]);
        let n = 100_000;
        let s: Vec<(usize, usize)> = (0..n).map(|_| (rng.gen_range(0..3), rng.gen_range(0..4))).collect();
        let mi = mutual_information_sampled(&s, &vec![0; n]).unwrap();
        assert!(mi <= 0.01, "{mi}");
    }

    fn coupled_setting(n_actions: usize) -> ExactSetting {
        let states = (0..3)
            .map(|i| {
                (
                    Observation {
                        index: i,
                        features: vec![],
                    },
                    [0.2, 0.5, 0.3][i],
                )
            })
            .collect();
        ExactSetting {
            states,
            id_i: AgentId(0),
            id_ii: AgentId(1),
            mask_i: vec![true; n_actions],
            mask_ii: vec![true; n_actions],
            q_i: vec![vec![1.0, -2.0, 0.5], vec![0.0, 1.0, -1.0], vec![2.0, 0.3, 0.0]],
            q_ii: vec![vec![-0.5, 1.0, 0.0], vec![1.5, -1.0, 0.2], vec![0.0, 0.7, -2.0]],
        }
    }

    #[test]
    fn coupled_mi_gradient_matches_fd() {
        let p = random_tabular(3, 2, 3, 4);
        let s = coupled_setting(3);
        assert!(coupled_mutual_information(&p, &s).unwrap() > 0.0);
        let g = mi_gradient_exact(&p, &s).unwrap();
        let f = fd(&p, |q| coupled_mutual_information(q, &s).unwrap());
        assert!(rel_err(&g.grad, &f) < 1e-4, "{}", rel_err(&g.grad, &f));
        let aug = augmented_gradient_exact(&p, &s, 0.7).unwrap();
        let f = fd(&p, |q| exact_objective(q, &s).unwrap() + 0.7 * coupled_mutual_information(q, &s).unwrap());
        assert!(rel_err(&aug.grad, &f) < 1e-4);
    }

    #[test]
    fn factorized_mi_gradient_is_zero() {
        let p = random_tabular(1, 2, 3, 5);
        let s = ExactSetting::matrix(&MatrixGameSpec::biased_rps(), 3, AgentId(0), AgentId(1));
        let g = mi_gradient_exact(&p, &s).unwrap();
        assert!(g.grad.iter().all(|x| x.abs() < 1e-12));
    }

    #[test]
    fn augmented_term_isolation() {
        let p = random_tabular(1, 2, 2, 6);
        let b = batch_of(vec![
            tr(0, 1, 0, 0, 2, 0.0, OpponentTag::SelfPlay),
            tr(0, 1, 1, 1, 2, 0.0, OpponentTag::SelfPlay),
            tr(0, 1, 0, 1, 2, 0.0, OpponentTag::SelfPlay),
        ]);
        let v = ValueEstimates::new(vec![1.0, -2.0, 0.5], vec![0.0; 3]).unwrap();
        let c0 = ObjectiveConfig {
            lambda_mi: 0.0,
            ..Default::default()
        };
        let pg = policy_gradient(&b, &v, &p).unwrap();
        let aug = augmented_gradient(&b, &v, &p, &c0, MiSource::Sampled(&b)).unwrap();
        assert_eq!(aug.grad, pg.grad);
        let c1 = ObjectiveConfig {
            lambda_mi: 1.0,
            ..Default::default()
        };
        let zero = ValueEstimates::new(vec![0.0; 3], vec![0.0; 3]).unwrap();
        let aug = augmented_gradient(&b, &zero, &p, &c1, MiSource::Sampled(&b)).unwrap();
        let mi = mi_gradient_sampled(&b, &p).unwrap();
        assert_eq!(aug.grad, mi.grad);
    }

    #[test]
    fn mia_loss_examples() {
        let p = random_tabular(1, 2, 2, 7);
        let b = batch_of(vec![
            tr(0, 1, 0, 1, 2, 0.0, OpponentTag::SelfPlay),
            tr(1, 0, 1, 1, 2, 0.0, OpponentTag::SelfPlay),
        ]);
        let same = ValueEstimates::new(vec![3.0, -1.5], vec![3.0, -1.5]).unwrap();
        assert_eq!(mia_loss(&b, &same, &p).unwrap(), 0.0);
        let zero = ValueEstimates::new(vec![0.0; 2], vec![0.0; 2]).unwrap();
        assert_eq!(mia_loss(&b, &zero, &p).unwrap(), 0.0);
        // Uniform policy on the skewed game: P = 1/4 everywhere, sum of payoffs 1.
        let u = PolicyParams::tabular(1, 2, 2);
        let s = ExactSetting::matrix(&MatrixGameSpec::skewed_2x2(), 2, AgentId(0), AgentId(1));
        let want = 0.25 * (0.25f64).ln() * (3.0 - 1.0 - 2.0 + 1.0);
        assert!((mia_loss_exact(&u, &s, 0.0).unwrap() - want).abs() < 1e-9);
    }

    #[test]
    fn cam_loss_examples() {
        let mut p = PolicyParams::tabular(1, 2, 2);
        p.flat = vec![0.0, (3.0f64).ln(), 0.0, 0.0];
        let b = batch_of(vec![
            tr(0, 1, 1, 0, 2, 0.0, OpponentTag::FrozenBaseline),
            tr(0, 1, 0, 0, 2, 0.0, OpponentTag::FrozenBaseline),
            tr(1, 0, 0, 1, 2, 0.0, OpponentTag::FrozenBaseline),
        ]);
        let same = ValueEstimates::new(vec![1.0, 2.0, 3.0], vec![1.0, 2.0, 3.0]).unwrap();
        assert_eq!(cam_loss(&b, &same, &p).unwrap(), 0.0);
        let v = ValueEstimates::new(vec![2.0, -1.0, 1.0], vec![0.0, 0.0, 0.5]).unwrap();
        // id 0: probs (1/4, 3/4); id 1 uniform.
        let id0 = (0.75 * 2.0 * 0.75f64.ln() + 0.25 * -1.0 * 0.25f64.ln()) / 2.0;
        let id1 = 0.5 * 0.5 * 0.5f64.ln();
        let want = (id0 + id1) / 2.0;
        assert!((cam_loss(&b, &v, &p).unwrap() - want).abs() < 1e-9);
        let mut det = PolicyParams::tabular(1, 2, 2);
        det.flat = vec![0.0, 0.0, 0.0, 0.0];
        let only = batch_of(vec![Transition {
            mask_self: vec![true, false],
            ..tr(0, 1, 0, 0, 2, 0.0, OpponentTag::FrozenBaseline)
        }]);
        let v1 = ValueEstimates::new(vec![5.0], vec![0.0]).unwrap();
        assert_eq!(cam_loss(&only, &v1, &det).unwrap(), 0.0);
        let wrong = batch_of(vec![tr(0, 1, 0, 0, 2, 0.0, OpponentTag::SelfPlay)]);
        assert!(matches!(cam_loss(&wrong, &v1, &det), Err(Error::NotAgainstBaseline)));
    }

    #[test]
    fn ppo_clip_rule() {
        // old prob 0.5 -> new prob 0.75 gives rho = 1.5.
        let mut p = PolicyParams::tabular(1, 1, 2);
        p.flat = vec![(3.0f64).ln(), 0.0];
        let b = batch_of(vec![tr(0, 0, 0, 0, 2, 0.5f64.ln(), OpponentTag::Generation(0))]);
        let (loss, g) = ppo_surrogate(&b, &[1.0], &p, 0.1).unwrap();
        assert!((loss + 1.1).abs() < 1e-12);
        assert!(g.grad.iter().all(|x| *x == 0.0));
        let (loss, _) = ppo_surrogate(&b, &[-1.0], &p, 0.1).unwrap();
        assert!((loss - 1.5).abs() < 1e-12);
    }

    #[test]
    fn ppo_at_ratio_one_is_vanilla_pg() {
        let p = random_tabular(1, 2, 3, 8);
        let m = [true; 3];
        let ts: Vec<Transition> = [(0, 2), (1, 0), (0, 1), (1, 1)]
            .iter()
            .map(|&(id, a)| {
                let lp = p.log_prob(&mobs(), AgentId(id), &m, a).unwrap();
                tr(id, 1 - id, a, 0, 3, lp, OpponentTag::Generation(0))
            })
            .collect();
        let b = batch_of(ts);
        let adv = vec![1.0, -0.5, 2.0, 0.3];
        let v = ValueEstimates::new(adv.clone(), vec![0.0; 4]).unwrap();
        let (loss, g) = ppo_surrogate(&b, &adv, &p, 0.1).unwrap();
        assert!((loss + adv.iter().sum::<f64>() / 4.0).abs() < 1e-12);
        let pg = policy_gradient(&b, &v, &p).unwrap();
        assert!(rel_err(&g.grad, &pg.grad) < 1e-12);
        let f = fd(&p, |q| -ppo_surrogate(&b, &adv, q, 0.1).unwrap().0);
        assert!(rel_err(&g.grad, &f) < 1e-4);
    }

    #[test]
    fn sgd_examples() {
        let p = random_tabular(1, 1, 3, 9);
        let zero = GradEstimate::zeros(3, 1);
        assert_eq!(sgd_step(&p, &zero, 1e-4).unwrap(), p);
        let unit = GradEstimate {
            grad: vec![1.0; 3],
            ..zero.clone()
        };
        let q = sgd_step(&p, &unit, 1e-4).unwrap();
        for (a, b) in q.flat.iter().zip(&p.flat) {
            assert!((a - b - 1e-4).abs() < 1e-15);
        }
        let g = GradEstimate {
            grad: vec![0.25, -1.0, 0.5],
            ..zero.clone()
        };
        let g2 = GradEstimate {
            grad: g.grad.iter().map(|x| 2.0 * x).collect(),
            ..zero.clone()
        };
        let twice = sgd_step(&sgd_step(&p, &g, 0.5).unwrap(), &g, 0.5).unwrap();
        let once = sgd_step(&p, &g2, 0.5).unwrap();
        for (a, b) in twice.flat.iter().zip(&once.flat) {
            assert!((a - b).abs() < 1e-15);
        }
        let nan = GradEstimate {
            grad: vec![f64::NAN, 0.0, 0.0],
            ..zero
        };
        assert!(sgd_step(&p, &nan, 0.1).is_err());
    }

    #[test]
    fn normalization_and_clipping() {
        let mut a = vec![1.0, -3.0, 0.5, 2.0];
        let m0 = a.iter().sum::<f64>() / 4.0;
        let signs_before: Vec<bool> = a.iter().map(|x| *x > m0).collect();
        assert!(normalize_advantages(&mut a));
        let mean: f64 = a.iter().sum::<f64>() / 4.0;
        assert!(mean.abs() < 1e-12);
        let signs_after: Vec<bool> = a.iter().map(|x| *x > 0.0).collect();
        assert_eq!(signs_before, signs_after);
        let mut flat = vec![2.0; 3];
        assert!(!normalize_advantages(&mut flat));
        assert_eq!(flat, vec![2.0; 3]);
        let mut g = vec![30.0, 40.0];
        assert_eq!(clip_grad_norm(&mut g, 10.0), 50.0);
        assert!((norm(&g) - 10.0).abs() < 1e-12);
    }

    #[test]
    fn values_from_head() {
        let p = PolicyParams::tabular(1, 2, 2);
        let mut rng = stream(1, &[]);
        let mut head = ValueHead::for_policy(&p, &mut rng);
        let mut b = TrajectoryBatch::default();
        let mut t = tr(0, 1, 0, 0, 2, 0.0, OpponentTag::SelfPlay);
        t.reward = 1.0;
        t.done = false;
        let mut last = t.clone();
        last.done = true;
        last.reward = 2.0;
        b.push_episode(vec![t, last]);
        let cfg = ObjectiveConfig {
            gamma: 0.5,
            ..Default::default()
        };
        let v = estimate_values(&b, &head, &cfg).unwrap();
        assert_eq!(v.q, vec![2.0, 2.0]);
        assert_eq!(v.advantage, vec![2.0, 2.0]);
        fit_value_head(&mut head, &b, &v.q, &cfg).unwrap();
        assert_eq!(head.value(&mobs(), AgentId(0)).unwrap(), 2.0);
    }

    proptest::proptest! {
        #[test]
        fn ppo_depends_only_on_ratio(l1 in -3.0f64..3.0, l2 in -3.0f64..3.0, d in -0.5f64..0.5, a in -2.0f64..2.0) {
            let run = |l: f64| {
                let mut p = PolicyParams::tabular(1, 1, 2);
                p.flat = vec![l, 0.0];
                let lp = p.log_prob(&mobs(), AgentId(0), &[true; 2], 0).unwrap();
                let b = batch_of(vec![tr(0, 0, 0, 0, 2, lp - d, OpponentTag::Generation(0))]);
                ppo_surrogate(&b, &[a], &p, 0.1).unwrap().0
            };
            proptest::prop_assert!((run(l1) - run(l2)).abs() < 1e-12);
        }

        #[test]
        fn normalization_keeps_order(xs in proptest::collection::vec(-10.0f64..10.0, 2..20)) {
            let mut ys = xs.clone();
            if normalize_advantages(&mut ys) {
                for i in 0..xs.len() {
                    for j in 0..xs.len() {
                        if xs[i] < xs[j] {
                            proptest::prop_assert!(ys[i] < ys[j]);
                        }
                    }
                }
            }
        }

        #[test]
        fn factorized_mi_is_zero(seed in 0u64..1000) {
            let p = random_tabular(1, 2, 4, seed);
            let mi = mutual_information_exact(&p, &mobs(), AgentId(0), AgentId(1), &[true; 4], &[true, true, false, true]).unwrap();
            proptest::prop_assert!(mi.abs() < 1e-12);
        }
    }
}
