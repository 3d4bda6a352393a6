//! Shared vocabulary for two-player zero-sum games with heterogeneous
//! agents: identities, character descriptions, transitions, and return
//! computations used by every environment and learner.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Index of a population member.
#[derive(
    Clone, Copy, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize,
)]
#[serde(transparent)]
pub struct AgentId(pub usize);

impl AgentId {
    pub fn new(index: usize, population: usize) -> Result<Self> {
        if index >= population {
            return Err(Error::BadId {
                id: index,
                n: population,
            });
        }
        Ok(Self(index))
    }

    pub fn index(self) -> usize {
        self.0
    }
}

impl std::fmt::Display for AgentId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Seat in a two-player match. Seat `I` moves first in the payoff table
/// and starts on the left of the duel arena.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Seat {
    I,
    II,
}

impl Seat {
    pub fn other(self) -> Self {
        match self {
            Seat::I => Seat::II,
            Seat::II => Seat::I,
        }
    }

    pub fn index(self) -> usize {
        match self {
            Seat::I => 0,
            Seat::II => 1,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SkillCategory {
    /// Initiates engagement: dashes in and strikes.
    ForcingMove,
    /// Punishes an incoming forcing move on the same tick.
    CounterMove,
    /// Temporary invincibility.
    Substitute,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SkillSpec {
    pub category: SkillCategory,
    pub cooldown: u32,
    pub damage: u32,
    pub range: u32,
    pub mana_cost: u32,
    pub effect_duration: u32,
}

impl SkillSpec {
    pub fn validate(&self) -> Result<()> {
        if self.category == SkillCategory::Substitute {
            if self.damage != 0 {
                return Err(Error::Character("substitute skills deal no damage".into()));
            }
            if self.effect_duration < 1 {
                return Err(Error::Character(
                    "substitute skills need effect_duration >= 1".into(),
                ));
            }
        }
        Ok(())
    }
}

/// Per-character attributes: the agent's type.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CharacterSpec {
    pub name: String,
    pub move_speed: u32,
    pub attack_range: u32,
    pub attack_damage: u32,
    pub max_hp: u32,
    pub max_mana: u32,
    /// Mana regained per tick.
    #[serde(default = "default_mana_regen")]
    pub mana_regen: u32,
    pub skills: Vec<SkillSpec>,
}

fn default_mana_regen() -> u32 {
    1
}

impl CharacterSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::Character(format!("{}: {msg}", self.name)));
        if self.max_hp == 0 {
            return bad("max_hp must be positive");
        }
        if self.move_speed < 1 {
            return bad("move_speed must be >= 1");
        }
        if self.attack_range < 1 {
            return bad("attack_range must be >= 1");
        }
        for cat in [
            SkillCategory::ForcingMove,
            SkillCategory::CounterMove,
            SkillCategory::Substitute,
        ] {
            if !self.skills.iter().any(|s| s.category == cat) {
                return bad(&format!("missing a {cat:?} skill"));
            }
        }
        for s in &self.skills {
            s.validate()
                .map_err(|e| Error::Character(format!("{}: {e}", self.name)))?;
        }
        Ok(())
    }
}

/// What an environment exposes to a policy. Tabular policies read
/// `index`; network policies read `features`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub index: usize,
    pub features: Vec<f64>,
}

/// Who produced the opponent's actions.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum OpponentTag {
    /// The same parameters as the learner.
    SelfPlay,
    /// A stored generation of the shared policy.
    Generation(usize),
    /// The frozen stage-one baseline.
    FrozenBaseline,
    /// Another agent's specialist policy.
    Specialist(usize),
}

#[derive(Clone, Debug, PartialEq)]
pub struct Transition {
    pub state: Observation,
    pub opp_state: Observation,
    pub next_state: Observation,
    pub id_self: AgentId,
    pub id_opp: AgentId,
    pub action_self: usize,
    pub action_opp: usize,
    /// Zero-sum reward for the learner.
    pub reward: f64,
    pub done: bool,
    pub mask_self: Vec<bool>,
    pub mask_opp: Vec<bool>,
    pub log_prob_self: f64,
    /// State bucket used by the sampled mutual-information estimator.
    pub bucket: usize,
    pub opponent: OpponentTag,
}

/// Transitions from one or more learner agents, grouped into episodes.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrajectoryBatch {
    pub transitions: Vec<Transition>,
    /// Agents whose transitions are contained, in first-seen order.
    pub agents: Vec<AgentId>,
    /// Exclusive end index of every episode.
    pub episode_ends: Vec<usize>,
}

impl TrajectoryBatch {
    pub fn len(&self) -> usize {
        self.transitions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.transitions.is_empty()
    }

    pub fn push_episode(&mut self, episode: Vec<Transition>) {
        if let Some(t) = episode.first() {
            if !self.agents.contains(&t.id_self) {
                self.agents.push(t.id_self);
            }
        }
        self.transitions.extend(episode);
        self.episode_ends.push(self.transitions.len());
    }

    pub fn append(&mut self, other: TrajectoryBatch) {
        let offset = self.transitions.len();
        for a in other.agents {
            if !self.agents.contains(&a) {
                self.agents.push(a);
            }
        }
        self.transitions.extend(other.transitions);
        self.episode_ends
            .extend(other.episode_ends.into_iter().map(|e| e + offset));
    }

    /// Iterates episodes as `start..end` ranges.
    pub fn episodes(&self) -> impl Iterator<Item = std::ops::Range<usize>> + '_ {
        let starts = std::iter::once(0).chain(self.episode_ends.iter().copied());
        starts.zip(self.episode_ends.iter().copied()).map(|(s, e)| s..e)
    }

    pub fn n_episodes(&self) -> usize {
        self.episode_ends.len()
    }
}

pub fn zero_sum_reward(payoff_self: f64, payoff_opp: f64) -> Result<f64> {
    if !payoff_self.is_finite() || !payoff_opp.is_finite() {
        return Err(Error::NonFinite("payoff"));
    }
    Ok(payoff_self - payoff_opp)
}

fn check_gamma(gamma: f64) -> Result<()> {
    if !(0.0..1.0).contains(&gamma) {
        return Err(Error::BadGamma(gamma));
    }
    Ok(())
}

/// Finite-horizon discounted sum `sum_k gamma^k r_k`.
pub fn discounted_return(rewards: &[f64], gamma: f64) -> Result<f64> {
    check_gamma(gamma)?;
    if rewards.iter().any(|r| !r.is_finite()) {
        return Err(Error::NonFinite("rewards"));
    }
    // Horner form keeps the sum exact for short horizons.
    Ok(rewards.iter().rev().fold(0.0, |acc, r| r + gamma * acc))
}

/// `sum_{k<n} gamma^k r_k + gamma^n * bootstrap_value` with `n = rewards.len()`.
pub fn n_step_return(rewards: &[f64], gamma: f64, bootstrap_value: f64) -> Result<f64> {
    if rewards.is_empty() {
        return Err(Error::Empty("rewards"));
    }
    check_gamma(gamma)?;
    if !bootstrap_value.is_finite() {
        return Err(Error::NonFinite("bootstrap value"));
    }
    let head = discounted_return(rewards, gamma)?;
    Ok(head + gamma.powi(rewards.len() as i32) * bootstrap_value)
}

/// n-step targets for every step of one episode.
///
/// `values[t]` is the baseline at step `t`; a target whose window runs
/// past the end of the episode is truncated there and bootstraps from
/// `tail_value` (zero for a terminal episode).
pub fn n_step_targets(
    rewards: &[f64],
    values: &[f64],
    gamma: f64,
    n: usize,
    tail_value: f64,
) -> Result<Vec<f64>> {
    check_gamma(gamma)?;
    if n == 0 {
        return Err(Error::Config("n_step must be >= 1".into()));
    }
    if rewards.len() != values.len() {
        return Err(Error::Dimension {
            what: "values",
            expected: rewards.len(),
            got: values.len(),
        });
    }
    let len = rewards.len();
    let mut out = Vec::with_capacity(len);
    for t in 0..len {
        let end = (t + n).min(len);
        let boot = if end < len { values[end] } else { tail_value };
        out.push(n_step_return(&rewards[t..end], gamma, boot)?);
    }
    Ok(out)
}
