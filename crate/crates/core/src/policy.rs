//! Identity-conditioned policies `pi(a | s, id)` and value baselines.
//!
//! Two parameterizations share one flat parameter vector layout:
//!
//! * `TabularSoftmax`: one logit row per (state index, agent id). Rows for
//!   different ids are disjoint, so an update driven by one id never moves
//!   another id's distribution.
//! * `Mlp`: features concatenated with a one-hot id, one tanh hidden layer,
//!   linear output. The trunk is shared across ids.
//!
//! Masked actions get a `-inf` logit, so their probability and their
//! gradient contributions are exactly zero.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::game::{AgentId, Observation};

pub const INIT_SCALE: f64 = 0.05;
pub const DEFAULT_HIDDEN: usize = 32;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Arch {
    TabularSoftmax { n_states: usize },
    Mlp { input_dim: usize, hidden: usize },
}

impl Arch {
    fn n_params(&self, n_ids: usize, out: usize) -> usize {
        match *self {
            Arch::TabularSoftmax { n_states } => n_states * n_ids * out,
            Arch::Mlp { input_dim, hidden } => {
                let fan_in = input_dim + n_ids;
                hidden * fan_in + hidden + out * hidden + out
            }
        }
    }
}

/// A network evaluation: output vector plus the hidden activations the
/// backward pass needs.
struct Eval {
    out: Vec<f64>,
    hidden: Vec<f64>,
}

/// Raw network shared by policies (`out = n_actions`) and value heads (`out = 1`).
#[derive(Clone, Copy)]
struct Net<'a> {
    arch: &'a Arch,
    n_ids: usize,
    out: usize,
    flat: &'a [f64],
}

impl Net<'_> {
    fn check(&self, obs: &Observation, id: AgentId) -> Result<()> {
        if id.0 >= self.n_ids {
            return Err(Error::BadId {
                id: id.0,
                n: self.n_ids,
            });
        }
        match *self.arch {
            Arch::TabularSoftmax { n_states } if obs.index >= n_states => Err(Error::Dimension {
                what: "state index",
                expected: n_states,
                got: obs.index,
            }),
            Arch::Mlp { input_dim, .. } if obs.features.len() != input_dim => {
                Err(Error::Dimension {
                    what: "observation features",
                    expected: input_dim,
                    got: obs.features.len(),
                })
            }
            _ => Ok(()),
        }
    }

    fn eval(&self, obs: &Observation, id: AgentId) -> Result<Eval> {
        self.check(obs, id)?;
        match *self.arch {
            Arch::TabularSoftmax { .. } => {
                let off = (obs.index * self.n_ids + id.0) * self.out;
                Ok(Eval {
                    out: self.flat[off..off + self.out].to_vec(),
                    hidden: Vec::new(),
                })
            }
            Arch::Mlp { input_dim, hidden } => {
                let fan_in = input_dim + self.n_ids;
                let (w1, rest) = self.flat.split_at(hidden * fan_in);
                let (b1, rest) = rest.split_at(hidden);
                let (w2, b2) = rest.split_at(self.out * hidden);
                let h: Vec<f64> = (0..hidden)
                    .map(|j| {
                        let row = &w1[j * fan_in..(j + 1) * fan_in];
                        let pre = b1[j]
                            + row[..input_dim]
                                .iter()
                                .zip(&obs.features)
                                .map(|(w, x)| w * x)
                                .sum::<f64>()
                            + row[input_dim + id.0];
                        pre.tanh()
                    })
                    .collect();
                let out = (0..self.out)
                    .map(|o| {
                        b2[o]
                            + w2[o * hidden..(o + 1) * hidden]
                                .iter()
                                .zip(&h)
                                .map(|(w, x)| w * x)
                                .sum::<f64>()
                    })
                    .collect();
                Ok(Eval { out, hidden: h })
            }
        }
    }

    /// Accumulates `d(out . dout) / d(params)` into `grad`.
    fn backward(&self, obs: &Observation, id: AgentId, eval: &Eval, dout: &[f64], grad: &mut [f64]) {
        match *self.arch {
            Arch::TabularSoftmax { .. } => {
                let off = (obs.index * self.n_ids + id.0) * self.out;
                for (g, d) in grad[off..off + self.out].iter_mut().zip(dout) {
                    *g += d;
                }
            }
            Arch::Mlp { input_dim, hidden } => {
                let fan_in = input_dim + self.n_ids;
                let w2_off = hidden * fan_in + hidden;
                let b2_off = w2_off + self.out * hidden;
                let h = &eval.hidden;
                let mut dh = vec![0.0; hidden];
                for (o, &d) in dout.iter().enumerate() {
                    if d == 0.0 {
                        continue;
                    }
                    grad[b2_off + o] += d;
                    let row = w2_off + o * hidden;
                    for j in 0..hidden {
                        grad[row + j] += d * h[j];
                        dh[j] += self.flat[row + j] * d;
                    }
                }
                for j in 0..hidden {
                    let dpre = dh[j] * (1.0 - h[j] * h[j]);
                    if dpre == 0.0 {
                        continue;
                    }
                    grad[hidden * fan_in + j] += dpre;
                    let row = j * fan_in;
                    for (g, x) in grad[row..row + input_dim].iter_mut().zip(&obs.features) {
                        *g += dpre * x;
                    }
                    grad[row + input_dim + id.0] += dpre;
                }
            }
        }
    }
}

fn init_flat(arch: &Arch, n_ids: usize, out: usize, zero_output: bool, rng: &mut impl Rng) -> Vec<f64> {
    let n = arch.n_params(n_ids, out);
    match *arch {
        Arch::TabularSoftmax { .. } => vec![0.0; n],
        Arch::Mlp { input_dim, hidden } => {
            let fan_in = input_dim + n_ids;
            let w1 = hidden * fan_in;
            let w2_off = w1 + hidden;
            let mut flat = vec![0.0; n];
            for (i, p) in flat.iter_mut().enumerate() {
                let is_w1 = i < w1;
                let is_w2 = i >= w2_off && i < w2_off + out * hidden;
                if is_w1 || (is_w2 && !zero_output) {
                    *p = rng.gen_range(-INIT_SCALE..=INIT_SCALE);
                }
            }
            flat
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolicyParams {
    pub arch: Arch,
    pub n_ids: usize,
    pub n_actions: usize,
    pub flat: Vec<f64>,
}

/// Action probabilities after masking.
#[derive(Clone, Debug, PartialEq)]
pub struct ActionDistribution {
    pub probs: Vec<f64>,
}

impl ActionDistribution {
    /// Inverse-CDF draw.
    pub fn sample(&self, rng: &mut impl Rng) -> usize {
        let u: f64 = rng.gen();
        let mut cum = 0.0;
        let mut last = 0;
        for (a, &p) in self.probs.iter().enumerate() {
            if p > 0.0 {
                cum += p;
                last = a;
                if u < cum {
                    return a;
                }
            }
        }
        last
    }
}

pub fn sample(dist: &ActionDistribution, rng: &mut impl Rng) -> usize {
    dist.sample(rng)
}

/// Log-softmax over the available actions; masked entries are `-inf`.
pub fn masked_log_softmax(logits: &[f64], mask: &[bool]) -> Result<Vec<f64>> {
    if logits.len() != mask.len() {
        return Err(Error::Dimension {
            what: "action mask",
            expected: logits.len(),
            got: mask.len(),
        });
    }
    let max = logits
        .iter()
        .zip(mask)
        .filter(|(_, &m)| m)
        .map(|(l, _)| *l)
        .fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return Err(Error::AllMasked);
    }
    let z: f64 = logits
        .iter()
        .zip(mask)
        .filter(|(_, &m)| m)
        .map(|(l, _)| (l - max).exp())
        .sum();
    let lse = max + z.ln();
    Ok(logits
        .iter()
        .zip(mask)
        .map(|(l, &m)| if m { l - lse } else { f64::NEG_INFINITY })
        .collect())
}

pub fn masked_softmax(logits: &[f64], mask: &[bool]) -> Result<Vec<f64>> {
    Ok(masked_log_softmax(logits, mask)?
        .into_iter()
        .map(f64::exp)
        .collect())
}

impl PolicyParams {
    /// Zero-logit tabular policy: uniform over available actions.
    pub fn tabular(n_states: usize, n_ids: usize, n_actions: usize) -> Self {
        let arch = Arch::TabularSoftmax { n_states };
        let flat = vec![0.0; arch.n_params(n_ids, n_actions)];
        Self {
            arch,
            n_ids,
            n_actions,
            flat,
        }
    }

    /// MLP with weights uniform in `[-INIT_SCALE, INIT_SCALE]` and zero biases.
    pub fn mlp(
        input_dim: usize,
        hidden: usize,
        n_ids: usize,
        n_actions: usize,
        rng: &mut impl Rng,
    ) -> Self {
        let arch = Arch::Mlp { input_dim, hidden };
        let flat = init_flat(&arch, n_ids, n_actions, false, rng);
        Self {
            arch,
            n_ids,
            n_actions,
            flat,
        }
    }

    pub fn n_params(&self) -> usize {
        self.arch.n_params(self.n_ids, self.n_actions)
    }

    pub fn validate(&self) -> Result<()> {
        if self.flat.len() != self.n_params() {
            return Err(Error::Dimension {
                what: "policy parameters",
                expected: self.n_params(),
                got: self.flat.len(),
            });
        }
        if self.flat.iter().any(|p| !p.is_finite()) {
            return Err(Error::NonFinite("policy parameters"));
        }
        Ok(())
    }

    fn net(&self) -> Net<'_> {
        Net {
            arch: &self.arch,
            n_ids: self.n_ids,
            out: self.n_actions,
            flat: &self.flat,
        }
    }

    pub fn logits(&self, obs: &Observation, id: AgentId) -> Result<Vec<f64>> {
        Ok(self.net().eval(obs, id)?.out)
    }

    pub fn log_probs(&self, obs: &Observation, id: AgentId, mask: &[bool]) -> Result<Vec<f64>> {
        masked_log_softmax(&self.logits(obs, id)?, mask)
    }

    pub fn forward(&self, obs: &Observation, id: AgentId, mask: &[bool]) -> Result<ActionDistribution> {
        Ok(ActionDistribution {
            probs: masked_softmax(&self.logits(obs, id)?, mask)?,
        })
    }

    pub fn log_prob(&self, obs: &Observation, id: AgentId, mask: &[bool], action: usize) -> Result<f64> {
        let lp = self.log_probs(obs, id, mask)?;
        match lp.get(action) {
            None => Err(Error::ActionOutOfRange {
                action,
                n_actions: lp.len(),
            }),
            Some(v) if *v == f64::NEG_INFINITY => Err(Error::MaskedAction(action)),
            Some(v) => Ok(*v),
        }
    }

    /// Backpropagates an arbitrary logit gradient into `grad`.
    pub fn backward_logits(
        &self,
        obs: &Observation,
        id: AgentId,
        dlogits: &[f64],
        grad: &mut [f64],
    ) -> Result<()> {
        let net = self.net();
        let eval = net.eval(obs, id)?;
        net.backward(obs, id, &eval, dlogits, grad);
        Ok(())
    }

    /// Adds `scale * grad log pi(action | obs, id)` to `grad` and returns
    /// the log-probability.
    pub fn accumulate_score(
        &self,
        obs: &Observation,
        id: AgentId,
        mask: &[bool],
        action: usize,
        scale: f64,
        grad: &mut [f64],
    ) -> Result<f64> {
        let net = self.net();
        let eval = net.eval(obs, id)?;
        let lp = masked_log_softmax(&eval.out, mask)?;
        if action >= lp.len() {
            return Err(Error::ActionOutOfRange {
                action,
                n_actions: lp.len(),
            });
        }
        if lp[action] == f64::NEG_INFINITY {
            return Err(Error::MaskedAction(action));
        }
        if scale != 0.0 {
            let dlogits: Vec<f64> = lp
                .iter()
                .enumerate()
                .map(|(a, l)| scale * (f64::from(u8::from(a == action)) - l.exp()))
                .collect();
            net.backward(obs, id, &eval, &dlogits, grad);
        }
        Ok(lp[action])
    }

    /// Exact `grad_theta log pi(action | obs, id)`.
    pub fn grad_log_prob(
        &self,
        obs: &Observation,
        id: AgentId,
        mask: &[bool],
        action: usize,
    ) -> Result<Vec<f64>> {
        let mut g = vec![0.0; self.flat.len()];
        self.accumulate_score(obs, id, mask, action, 1.0, &mut g)?;
        Ok(g)
    }

    /// Independent copy used to seed a specialist for `id`.
    pub fn clone_for_specialist(&self, id: AgentId) -> Result<Self> {
        if id.0 >= self.n_ids {
            return Err(Error::BadId {
                id: id.0,
                n: self.n_ids,
            });
        }
        Ok(self.clone())
    }
}

/// `log pi(a_i | s_i, id_i) + log pi(a_ii | s_ii, id_ii)` under the
/// factorized joint policy.
#[allow(clippy::too_many_arguments)]
pub fn joint_log_prob(
    params: &PolicyParams,
    obs_i: &Observation,
    id_i: AgentId,
    a_i: usize,
    mask_i: &[bool],
    obs_ii: &Observation,
    id_ii: AgentId,
    a_ii: usize,
    mask_ii: &[bool],
) -> Result<f64> {
    Ok(params.log_prob(obs_i, id_i, mask_i, a_i)? + params.log_prob(obs_ii, id_ii, mask_ii, a_ii)?)
}

/// State-value baseline `V(s, id)`, kept separate from the policy network.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ValueHead {
    pub arch: Arch,
    pub n_ids: usize,
    pub flat: Vec<f64>,
}

impl ValueHead {
    /// A head whose initial output is exactly zero everywhere. The MLP
    /// variant still draws random first-layer weights so its hidden units
    /// are not dead.
    pub fn for_policy(policy: &PolicyParams, rng: &mut impl Rng) -> Self {
        let flat = init_flat(&policy.arch, policy.n_ids, 1, true, rng);
        Self {
            arch: policy.arch.clone(),
            n_ids: policy.n_ids,
            flat,
        }
    }

    fn net(&self) -> Net<'_> {
        Net {
            arch: &self.arch,
            n_ids: self.n_ids,
            out: 1,
            flat: &self.flat,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.arch.n_params(self.n_ids, 1);
        if self.flat.len() != n {
            return Err(Error::Dimension {
                what: "value parameters",
                expected: n,
                got: self.flat.len(),
            });
        }
        Ok(())
    }

    pub fn value(&self, obs: &Observation, id: AgentId) -> Result<f64> {
        Ok(self.net().eval(obs, id)?.out[0])
    }

    /// Gradient descent on the mean squared error against `targets`.
    /// Returns the mean squared error before the last epoch.
    pub fn regress(
        &mut self,
        samples: &[(&Observation, AgentId, f64)],
        learning_rate: f64,
        epochs: usize,
    ) -> Result<f64> {
        if samples.is_empty() {
            return Ok(0.0);
        }
        let mut mse = 0.0;
        for _ in 0..epochs {
            let mut grad = vec![0.0; self.flat.len()];
            mse = 0.0;
            let net = self.net();
            for (obs, id, target) in samples {
                let eval = net.eval(obs, *id)?;
                let err = eval.out[0] - target;
                mse += err * err;
                net.backward(obs, *id, &eval, &[err], &mut grad);
            }
            let n = samples.len() as f64;
            mse /= n;
            for (p, g) in self.flat.iter_mut().zip(&grad) {
                *p -= learning_rate * g / n;
            }
        }
        Ok(mse)
    }

    /// Closed-form least squares for the tabular head: every visited cell
    /// becomes the mean of its targets. Other cells are untouched.
    pub fn fit_cell_means(&mut self, samples: &[(&Observation, AgentId, f64)]) -> Result<()> {
        if !matches!(self.arch, Arch::TabularSoftmax { .. }) {
            return Err(Error::Config("cell means need a tabular value head".into()));
        }
        let mut sums = vec![(0.0, 0usize); self.flat.len()];
        for (obs, id, target) in samples {
            self.net().check(obs, *id)?;
            let cell = obs.index * self.n_ids + id.0;
            sums[cell].0 += target;
            sums[cell].1 += 1;
        }
        for (p, (s, c)) in self.flat.iter_mut().zip(sums) {
            if c > 0 {
                *p = s / c as f64;
            }
        }
        Ok(())
    }
}
