//! One-shot zero-sum matrix games small enough for exact enumeration.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Payoff table for seat I; seat II receives the negation. Rows index
/// seat I's actions, columns seat II's, and the two sides may have
/// different action counts.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MatrixGameSpec {
    pub payoff: Vec<Vec<f64>>,
}

impl MatrixGameSpec {
    pub fn new(payoff: Vec<Vec<f64>>) -> Result<Self> {
        let spec = Self { payoff };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        let rows = self.payoff.len();
        if !(2..=8).contains(&rows) {
            return Err(Error::Config(format!(
                "matrix game needs 2..=8 actions for seat I, got {rows}"
            )));
        }
        let cols = self.payoff[0].len();
        if !(2..=8).contains(&cols) {
            return Err(Error::Config(format!(
                "matrix game needs 2..=8 actions for seat II, got {cols}"
            )));
        }
        if self.payoff.iter().any(|r| r.len() != cols) {
            return Err(Error::Config("ragged payoff table".into()));
        }
        if self.payoff.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("payoff table"));
        }
        Ok(())
    }

    pub fn n_actions_i(&self) -> usize {
        self.payoff.len()
    }

    pub fn n_actions_ii(&self) -> usize {
        self.payoff[0].len()
    }

    /// Largest absolute payoff; scales rewards into per-game scores.
    pub fn payoff_scale(&self) -> f64 {
        self.payoff
            .iter()
            .flatten()
            .fold(0.0f64, |m, v| m.max(v.abs()))
    }

    /// Seat I's score in `[0, 1]` for one play: `0.5 + 0.5 * payoff / scale`.
    /// With unit payoffs this is 1 / 0.5 / 0 for win / draw / loss.
    pub fn score_i(&self, reward_i: f64) -> f64 {
        let scale = self.payoff_scale();
        if scale == 0.0 {
            0.5
        } else {
            0.5 + 0.5 * reward_i / scale
        }
    }

    /// Expected payoff to seat I under mixed strategies `x` (rows) and `y` (columns).
    pub fn expected_payoff(&self, x: &[f64], y: &[f64]) -> f64 {
        self.payoff
            .iter()
            .zip(x)
            .map(|(row, xi)| xi * row.iter().zip(y).map(|(p, yj)| p * yj).sum::<f64>())
            .sum()
    }

    pub fn matching_pennies() -> Self {
        Self {
            payoff: vec![vec![1.0, -1.0], vec![-1.0, 1.0]],
        }
    }

    /// A 2x2 game with a skewed interior equilibrium.
    pub fn skewed_2x2() -> Self {
        Self {
            payoff: vec![vec![3.0, -1.0], vec![-2.0, 1.0]],
        }
    }

    pub fn rock_paper_scissors() -> Self {
        Self {
            payoff: vec![
                vec![0.0, -1.0, 1.0],
                vec![1.0, 0.0, -1.0],
                vec![-1.0, 1.0, 0.0],
            ],
        }
    }

    /// Rock-paper-scissors where rock beats scissors twice as hard.
    /// The unique equilibrium is (1/4, 1/2, 1/4) for both seats.
    pub fn biased_rps() -> Self {
        Self {
            payoff: vec![
                vec![0.0, -1.0, 2.0],
                vec![1.0, 0.0, -1.0],
                vec![-2.0, 1.0, 0.0],
            ],
        }
    }

    /// Asymmetric game: seat I has three actions, seat II four.
    pub fn heterogeneous_3x4() -> Self {
        Self {
            payoff: vec![
                vec![1.0, -1.0, 0.5, -0.5],
                vec![-1.0, 2.0, -0.5, 0.0],
                vec![0.0, -0.5, -1.0, 1.5],
            ],
        }
    }

    /// Four-action antisymmetric cycle game.
    pub fn cyclic_4x4() -> Self {
        Self {
            payoff: vec![
                vec![0.0, 1.0, -1.0, 2.0],
                vec![-1.0, 0.0, 2.0, -1.0],
                vec![1.0, -2.0, 0.0, 1.0],
                vec![-2.0, 1.0, -1.0, 0.0],
            ],
        }
    }

    pub fn by_name(name: &str) -> Option<Self> {
        Some(match name {
            "matching_pennies" => Self::matching_pennies(),
            "skewed_2x2" => Self::skewed_2x2(),
            "rps" => Self::rock_paper_scissors(),
            "biased_rps" => Self::biased_rps(),
            "heterogeneous_3x4" => Self::heterogeneous_3x4(),
            "cyclic_4x4" => Self::cyclic_4x4(),
            _ => return None,
        })
    }
}

/// Plays one round; returns `(reward_i, reward_ii)`.
pub fn matrix_play(spec: &MatrixGameSpec, a_i: usize, a_ii: usize) -> Result<(f64, f64)> {
    if a_i >= spec.n_actions_i() {
        return Err(Error::ActionOutOfRange {
            action: a_i,
            n_actions: spec.n_actions_i(),
        });
    }
    if a_ii >= spec.n_actions_ii() {
        return Err(Error::ActionOutOfRange {
            action: a_ii,
            n_actions: spec.n_actions_ii(),
        });
    }
    let p = spec.payoff[a_i][a_ii];
    Ok((p, -p))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn biased_rps_lookup() {
        let g = MatrixGameSpec::biased_rps();
        assert_eq!(matrix_play(&g, 0, 1).unwrap(), (-1.0, 1.0));
    }

    #[test]
    fn symmetric_diagonal_is_zero() {
        let g = MatrixGameSpec::rock_paper_scissors();
        for a in 0..3 {
            let (r1, r2) = matrix_play(&g, a, a).unwrap();
            assert_eq!(r1, 0.0);
            assert_eq!(r2, 0.0);
        }
    }

    #[test]
    fn every_pair_is_zero_sum() {
        for name in [
            "matching_pennies",
            "skewed_2x2",
            "rps",
            "biased_rps",
            "heterogeneous_3x4",
            "cyclic_4x4",
        ] {
            let g = MatrixGameSpec::by_name(name).unwrap();
            g.validate().unwrap();
            for a in 0..g.n_actions_i() {
                for b in 0..g.n_actions_ii() {
                    let (r1, r2) = matrix_play(&g, a, b).unwrap();
                    assert_eq!(r1 + r2, 0.0, "{name} ({a},{b})");
                }
            }
        }
    }

    #[test]
    fn out_of_range_rejected() {
        let g = MatrixGameSpec::heterogeneous_3x4();
        assert!(matrix_play(&g, 3, 0).is_err());
        assert!(matrix_play(&g, 0, 4).is_err());
        assert!(matrix_play(&g, 2, 3).is_ok());
    }

    #[test]
    fn validation() {
        assert!(MatrixGameSpec::new(vec![vec![1.0]]).is_err());
        assert!(MatrixGameSpec::new(vec![vec![1.0, 2.0], vec![1.0]]).is_err());
        assert!(MatrixGameSpec::new(vec![vec![1.0, f64::NAN], vec![0.0, 0.0]]).is_err());
    }

    #[test]
    fn biased_rps_equilibrium_is_indifferent() {
        let g = MatrixGameSpec::biased_rps();
        let ne = [0.25, 0.5, 0.25];
        for a in 0..3 {
            let mut pure = [0.0; 3];
            pure[a] = 1.0;
            assert!(g.expected_payoff(&pure, &ne).abs() < 1e-15);
            assert!(g.expected_payoff(&ne, &pure).abs() < 1e-15);
        }
    }
}
