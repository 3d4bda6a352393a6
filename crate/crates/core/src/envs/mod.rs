//! Built-in environments and the uniform interface the learners use.

pub mod duel;
pub mod matrix;
pub mod roster;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::game::{AgentId, CharacterSpec, Observation, Seat};
use duel::{DuelConfig, DuelState, RewardWeights};
use matrix::MatrixGameSpec;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MatrixEnvConfig {
    /// Name of a built-in game; ignored when `payoff` is set.
    #[serde(default = "default_matrix_game")]
    pub game: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub payoff: Option<Vec<Vec<f64>>>,
}

fn default_matrix_game() -> String {
    "biased_rps".into()
}

impl MatrixEnvConfig {
    pub fn spec(&self) -> Result<MatrixGameSpec> {
        match &self.payoff {
            Some(p) => MatrixGameSpec::new(p.clone()),
            None => MatrixGameSpec::by_name(&self.game)
                .ok_or_else(|| Error::Config(format!("unknown matrix game `{}`", self.game))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DuelEnvConfig {
    #[serde(default = "default_arena")]
    pub arena_length: u32,
    #[serde(default = "default_tick_limit")]
    pub tick_limit: u32,
    #[serde(default)]
    pub reward_weights: RewardWeights,
    /// Population members map onto the roster round-robin.
    #[serde(default = "roster::default_roster")]
    pub roster: Vec<CharacterSpec>,
}

fn default_arena() -> u32 {
    11
}

fn default_tick_limit() -> u32 {
    60
}

impl Default for DuelEnvConfig {
    fn default() -> Self {
        Self {
            arena_length: default_arena(),
            tick_limit: default_tick_limit(),
            reward_weights: RewardWeights::default(),
            roster: roster::default_roster(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EnvSpec {
    Matrix(MatrixEnvConfig),
    Duel(DuelEnvConfig),
}

impl EnvSpec {
    pub fn matrix(name: &str) -> Self {
        Self::Matrix(MatrixEnvConfig {
            game: name.into(),
            payoff: None,
        })
    }

    pub fn duel() -> Self {
        Self::Duel(DuelEnvConfig::default())
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Self::Matrix(m) => m.spec().map(|_| ()),
            Self::Duel(d) => {
                if d.roster.is_empty() {
                    return Err(Error::Config("duel roster is empty".into()));
                }
                for c in &d.roster {
                    self.duel_config_for(c, c)?.validate()?;
                }
                Ok(())
            }
        }
    }

    fn duel_config_for(&self, a: &CharacterSpec, b: &CharacterSpec) -> Result<DuelConfig> {
        let Self::Duel(d) = self else {
            return Err(Error::Config("not a duel environment".into()));
        };
        Ok(DuelConfig {
            arena_length: d.arena_length,
            tick_limit: d.tick_limit,
            char_i: a.clone(),
            char_ii: b.clone(),
            reward_weights: d.reward_weights,
        })
    }

    /// The concrete game played when `id_i` sits in seat I and `id_ii` in seat II.
    pub fn game(&self, id_i: AgentId, id_ii: AgentId) -> Result<Game> {
        match self {
            Self::Matrix(m) => Ok(Game::Matrix(m.spec()?)),
            Self::Duel(d) => {
                let r = d.roster.len();
                let cfg = self.duel_config_for(&d.roster[id_i.0 % r], &d.roster[id_ii.0 % r])?;
                Ok(Game::Duel(cfg))
            }
        }
    }

    pub fn character(&self, id: AgentId) -> Option<&CharacterSpec> {
        match self {
            Self::Duel(d) => d.roster.get(id.0 % d.roster.len()),
            Self::Matrix(_) => None,
        }
    }

    pub fn n_actions(&self) -> Result<usize> {
        Ok(match self {
            Self::Matrix(m) => {
                let s = m.spec()?;
                s.n_actions_i().max(s.n_actions_ii())
            }
            Self::Duel(_) => duel::N_DUEL_ACTIONS,
        })
    }

    pub fn obs_dim(&self) -> usize {
        match self {
            Self::Matrix(_) => 1,
            Self::Duel(_) => duel::OBS_DIM,
        }
    }

    /// Size of the observation index space seen by tabular policies.
    pub fn n_states(&self) -> usize {
        match self {
            Self::Matrix(_) => 1,
            Self::Duel(_) => duel::N_BUCKETS,
        }
    }

    pub fn n_buckets(&self) -> usize {
        match self {
            Self::Matrix(_) => 1,
            Self::Duel(_) => duel::N_BUCKETS,
        }
    }

    pub fn is_enumerable(&self) -> bool {
        matches!(self, Self::Matrix(_))
    }

    /// The seat `id` occupies in a matrix game: even ids sit in seat I.
    pub fn matrix_seat(id: AgentId) -> Seat {
        if id.0 % 2 == 0 {
            Seat::I
        } else {
            Seat::II
        }
    }

    /// Seat and admissible opponent ids for a learner. Matrix games pit
    /// the two seats against each other; duels accept any pairing with
    /// the learner in seat I.
    pub fn matchups(&self, learner: AgentId, population: usize) -> Vec<(Seat, AgentId)> {
        match self {
            Self::Matrix(_) => {
                let seat = Self::matrix_seat(learner);
                (0..population)
                    .map(AgentId)
                    .filter(|y| Self::matrix_seat(*y) != seat)
                    .map(|y| (seat, y))
                    .collect()
            }
            Self::Duel(_) => (0..population).map(|y| (Seat::I, AgentId(y))).collect(),
        }
    }

    pub fn category_names(&self) -> Result<Vec<String>> {
        Ok(match self {
            Self::Matrix(_) => (0..self.n_actions()?).map(|a| format!("action_{a}")).collect(),
            Self::Duel(_) => duel::ActionCategory::ALL
                .iter()
                .map(|c| c.name().to_string())
                .collect(),
        })
    }

    /// Longest possible episode.
    pub fn max_steps(&self) -> usize {
        match self {
            Self::Matrix(_) => 1,
            Self::Duel(d) => d.tick_limit as usize,
        }
    }
}

/// One concrete matchup.
#[derive(Clone, Debug, PartialEq)]
pub enum Game {
    Matrix(MatrixGameSpec),
    Duel(DuelConfig),
}

#[derive(Clone, Debug, PartialEq)]
pub enum GameState {
    Matrix { done: bool, reward_i: f64 },
    Duel(DuelState),
}

#[derive(Clone, Debug, PartialEq)]
pub struct Step {
    pub state: GameState,
    pub reward_i: f64,
    pub done: bool,
}

impl Step {
    pub fn reward(&self, seat: Seat) -> f64 {
        match seat {
            Seat::I => self.reward_i,
            Seat::II => -self.reward_i,
        }
    }
}

impl Game {
    pub fn n_actions(&self) -> usize {
        match self {
            Self::Matrix(m) => m.n_actions_i().max(m.n_actions_ii()),
            Self::Duel(_) => duel::N_DUEL_ACTIONS,
        }
    }

    pub fn reset(&self, seed: u64) -> GameState {
        match self {
            Self::Matrix(_) => GameState::Matrix {
                done: false,
                reward_i: 0.0,
            },
            Self::Duel(c) => GameState::Duel(duel::duel_reset(c, seed)),
        }
    }

    pub fn observe(&self, state: &GameState, seat: Seat) -> Observation {
        match (self, state) {
            (Self::Duel(c), GameState::Duel(s)) => duel::observe(s, c, seat),
            _ => Observation {
                index: 0,
                features: vec![1.0],
            },
        }
    }

    pub fn mask(&self, state: &GameState, seat: Seat) -> Vec<bool> {
        match (self, state) {
            (Self::Duel(c), GameState::Duel(s)) => duel::action_mask(s, c, seat),
            (Self::Matrix(m), _) => {
                let n = match seat {
                    Seat::I => m.n_actions_i(),
                    Seat::II => m.n_actions_ii(),
                };
                (0..self.n_actions()).map(|a| a < n).collect()
            }
            _ => unreachable!("state does not belong to this game"),
        }
    }

    pub fn step(&self, state: &GameState, a_i: usize, a_ii: usize) -> Result<Step> {
        match (self, state) {
            (Self::Matrix(m), GameState::Matrix { .. }) => {
                let (r, _) = matrix::matrix_play(m, a_i, a_ii)?;
                Ok(Step {
                    state: GameState::Matrix {
                        done: true,
                        reward_i: r,
                    },
                    reward_i: r,
                    done: true,
                })
            }
            (Self::Duel(c), GameState::Duel(s)) => {
                let (next, r, done) = duel::duel_step(s, c, a_i, a_ii)?;
                Ok(Step {
                    state: GameState::Duel(next),
                    reward_i: r,
                    done,
                })
            }
            _ => Err(Error::Config("state does not belong to this game".into())),
        }
    }

    /// Seat I's score in `[0, 1]` for a finished episode.
    pub fn score_i(&self, state: &GameState) -> f64 {
        match (self, state) {
            (Self::Matrix(m), GameState::Matrix { reward_i, .. }) => m.score_i(*reward_i),
            (Self::Duel(c), GameState::Duel(s)) => {
                duel::outcome(s, c).score_i().unwrap_or(0.5)
            }
            _ => 0.5,
        }
    }

    pub fn bucket(&self, state: &GameState, seat: Seat) -> usize {
        match (self, state) {
            (Self::Duel(c), GameState::Duel(s)) => duel::bucket(s, c, seat),
            _ => 0,
        }
    }

    /// Behavior category of `action` for frequency statistics. Matrix
    /// actions are their own categories.
    pub fn category(&self, seat: Seat, action: usize) -> Result<usize> {
        match self {
            Self::Matrix(_) => Ok(action),
            Self::Duel(c) => Ok(duel::action_category(c, seat, action)?.index()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matrix_matchups_pair_opposite_seats() {
        let env = EnvSpec::matrix("biased_rps");
        assert_eq!(env.matchups(AgentId(0), 2), vec![(Seat::I, AgentId(1))]);
        assert_eq!(env.matchups(AgentId(1), 2), vec![(Seat::II, AgentId(0))]);
        let env = EnvSpec::duel();
        assert_eq!(env.matchups(AgentId(2), 4).len(), 4);
    }

    #[test]
    fn heterogeneous_matrix_masks() {
        let env = EnvSpec::matrix("heterogeneous_3x4");
        let g = env.game(AgentId(0), AgentId(1)).unwrap();
        let s = g.reset(0);
        assert_eq!(g.mask(&s, Seat::I), vec![true, true, true, false]);
        assert_eq!(g.mask(&s, Seat::II), vec![true; 4]);
    }

    #[test]
    fn env_spec_toml_round_trip() {
        for env in [EnvSpec::matrix("rps"), EnvSpec::duel()] {
            let text = toml::to_string(&env).unwrap();
            let back: EnvSpec = toml::from_str(&text).unwrap();
            assert_eq!(back, env);
        }
        let bad = "kind = \"matrix\"\ngame = \"rps\"\nbogus = 1\n";
        assert!(toml::from_str::<EnvSpec>(bad).is_err());
    }

    #[test]
    fn duel_roster_round_robin() {
        let env = EnvSpec::duel();
        let Game::Duel(c) = env.game(AgentId(5), AgentId(2)).unwrap() else {
            panic!()
        };
        assert_eq!(c.char_i.name, "archer");
        assert_eq!(c.char_ii.name, "guardian");
    }
}
