//! Measurement: win-rate matrices, equilibrium gaps, behavior statistics,
//! mutual-information reports and brute-force exploitability.

use serde::{Deserialize, Serialize};

use crate::envs::matrix::MatrixGameSpec;
use crate::envs::EnvSpec;
use crate::error::{Error, Result};
use crate::game::AgentId;
use crate::objectives::{matrix_observation, mutual_information_sampled};
use crate::policy::PolicyParams;
use crate::population::{par_map, run_episode, seat_for, Player};
use crate::rng::stream;

const EVAL_STREAM: u64 = 0xE7A1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WinRateMatrix {
    pub labels_a: Vec<String>,
    pub labels_b: Vec<String>,
    pub w: Vec<Vec<f64>>,
    pub games: Vec<Vec<usize>>,
}

impl WinRateMatrix {
    /// Header row of column labels, then one labelled row per agent.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("agent");
        for l in &self.labels_b {
            out.push(',');
            out.push_str(l);
        }
        out.push('\n');
        for (l, row) in self.labels_a.iter().zip(&self.w) {
            out.push_str(l);
            for v in row {
                out.push_str(&format!(",{v}"));
            }
            out.push('\n');
        }
        out
    }

    /// Mean over all entries, excluding the diagonal of a square matrix.
    pub fn mean_off_diagonal(&self) -> f64 {
        let square = self.labels_a == self.labels_b;
        let mut s = 0.0;
        let mut n = 0;
        for (x, row) in self.w.iter().enumerate() {
            for (y, v) in row.iter().enumerate() {
                if !(square && x == y) {
                    s += v;
                    n += 1;
                }
            }
        }
        if n == 0 {
            0.5
        } else {
            s / n as f64
        }
    }
}

/// Mean score of `a` against `b` over `games` games. In duels the seats
/// alternate; in matrix games `a` sits where its id puts it.
pub fn play_match(
    env: &EnvSpec,
    a: Player<'_>,
    b: Player<'_>,
    games: usize,
    seed: u64,
    path: &[u64],
) -> Result<f64> {
    if games == 0 {
        return Err(Error::Config("games must be >= 1".into()));
    }
    let ks: Vec<usize> = (0..games).collect();
    let scores = par_map(&ks, |&k| -> Result<f64> {
        let mut p = path.to_vec();
        p.push(k as u64);
        let mut rng = stream(seed, &p);
        let seat = seat_for(env, a.id, k);
        let (i, ii) = match seat {
            crate::game::Seat::I => (a, b),
            crate::game::Seat::II => (b, a),
        };
        let out = run_episode(env, i, ii, None, &mut rng)?;
        Ok(match seat {
            crate::game::Seat::I => out.score_i,
            crate::game::Seat::II => 1.0 - out.score_i,
        })
    });
    let mut total = 0.0;
    for s in scores {
        total += s?;
    }
    Ok(total / games as f64)
}

/// `w[x][y]` is the mean score of `pop_a[x]` against `pop_b[y]`. With
/// `pop_b = None` the population plays itself: each unordered pair is
/// played once and both entries come from that tally.
pub fn win_rate_matrix(
    env: &EnvSpec,
    pop_a: &[(String, Player<'_>)],
    pop_b: Option<&[(String, Player<'_>)]>,
    games_per_pair: usize,
    seed: u64,
) -> Result<WinRateMatrix> {
    if pop_a.is_empty() || pop_b.is_some_and(|b| b.is_empty()) {
        return Err(Error::Empty("population"));
    }
    if games_per_pair == 0 {
        return Err(Error::Config("games_per_pair must be >= 1".into()));
    }
    let labels_a: Vec<String> = pop_a.iter().map(|(l, _)| l.clone()).collect();
    match pop_b {
        None => {
            let n = pop_a.len();
            let mut w = vec![vec![0.5; n]; n];
            let mut games = vec![vec![0; n]; n];
            for x in 0..n {
                for y in x + 1..n {
                    let s = play_match(env, pop_a[x].1, pop_a[y].1, games_per_pair, seed, &[EVAL_STREAM, x as u64, y as u64])?;
                    w[x][y] = s;
                    w[y][x] = 1.0 - s;
                    games[x][y] = games_per_pair;
                    games[y][x] = games_per_pair;
                }
            }
            Ok(WinRateMatrix {
                labels_b: labels_a.clone(),
                labels_a,
                w,
                games,
            })
        }
        Some(pop_b) => {
            let mut w = vec![vec![0.0; pop_b.len()]; pop_a.len()];
            for (x, (_, a)) in pop_a.iter().enumerate() {
                for (y, (_, b)) in pop_b.iter().enumerate() {
                    w[x][y] = play_match(env, *a, *b, games_per_pair, seed, &[EVAL_STREAM, 1 << 32, x as u64, y as u64])?;
                }
            }
            Ok(WinRateMatrix {
                labels_a,
                labels_b: pop_b.iter().map(|(l, _)| l.clone()).collect(),
                games: vec![vec![games_per_pair; pop_b.len()]; pop_a.len()],
                w,
            })
        }
    }
}

/// Distance of a win rate from an even split.
pub fn epsilon_ne(winrate_vs_prev: f64) -> f64 {
    (winrate_vs_prev - 0.5).abs()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ActionFrequencyVector {
    pub freq: Vec<f64>,
    pub episodes_observed: usize,
}

/// Normalized counts of the behavior categories `player` executes against
/// a fixed opponent.
pub fn action_frequency_vector(
    env: &EnvSpec,
    player: Player<'_>,
    opponent: Player<'_>,
    episodes: usize,
    seed: u64,
    path: &[u64],
) -> Result<ActionFrequencyVector> {
    if episodes == 0 {
        return Err(Error::Config("episodes must be >= 1".into()));
    }
    let n_cat = env.category_names()?.len();
    let ks: Vec<usize> = (0..episodes).collect();
    let per_episode = par_map(&ks, |&k| -> Result<Vec<usize>> {
        let mut p = path.to_vec();
        p.push(k as u64);
        let mut rng = stream(seed, &p);
        let seat = seat_for(env, player.id, k);
        let (i, ii) = match seat {
            crate::game::Seat::I => (player, opponent),
            crate::game::Seat::II => (opponent, player),
        };
        let out = run_episode(env, i, ii, None, &mut rng)?;
        Ok(out.categories[seat.index()].clone())
    });
    let mut counts = vec![0usize; n_cat];
    for cats in per_episode {
        for c in cats? {
            counts[c] += 1;
        }
    }
    let total: usize = counts.iter().sum();
    Ok(ActionFrequencyVector {
        freq: counts.iter().map(|c| *c as f64 / total.max(1) as f64).collect(),
        episodes_observed: episodes,
    })
}

/// Frequency vector of each `players[k]` against `opponent` queried with
/// every id of `k`'s matchups, `episodes` episodes per matchup. Every player
/// sees the same opponents for the same number of episodes, drawn from the
/// same random streams.
pub fn population_frequencies(
    env: &EnvSpec,
    players: &[Player<'_>],
    opponent: &PolicyParams,
    episodes: usize,
    seed: u64,
) -> Result<Vec<ActionFrequencyVector>> {
    let n = players.len();
    players
        .iter()
        .map(|&me| {
            let mut counts: Vec<f64> = Vec::new();
            let mut observed = 0;
            for (j, &(_, y)) in env.matchups(me.id, n).iter().enumerate() {
                let opp = Player {
                    policy: opponent,
                    id: y,
                };
                let v = action_frequency_vector(env, me, opp, episodes, seed, &[EVAL_STREAM, 3 << 32, j as u64])?;
                if counts.is_empty() {
                    counts = vec![0.0; v.freq.len()];
                }
                for (c, f) in counts.iter_mut().zip(&v.freq) {
                    *c += f;
                }
                observed += v.episodes_observed;
            }
            let total: f64 = counts.iter().sum();
            Ok(ActionFrequencyVector {
                freq: counts.iter().map(|c| c / total).collect(),
                episodes_observed: observed,
            })
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiversityReport {
    /// `(x, y, distance)` for every unordered pair `x < y`.
    pub pairwise_distances: Vec<(usize, usize, f64)>,
    pub expected_distance: f64,
}

fn euclid(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

pub fn diversity_score(vectors: &[ActionFrequencyVector]) -> Result<DiversityReport> {
    if vectors.len() < 2 {
        return Err(Error::Config("diversity needs at least two vectors".into()));
    }
    let dim = vectors[0].freq.len();
    if let Some(v) = vectors.iter().find(|v| v.freq.len() != dim) {
        return Err(Error::Dimension {
            what: "frequency vector",
            expected: dim,
            got: v.freq.len(),
        });
    }
    let mut pairs = Vec::new();
    for x in 0..vectors.len() {
        for y in x + 1..vectors.len() {
            pairs.push((x, y, euclid(&vectors[x].freq, &vectors[y].freq)));
        }
    }
    let expected = pairs.iter().map(|p| p.2).sum::<f64>() / pairs.len() as f64;
    Ok(DiversityReport {
        pairwise_distances: pairs,
        expected_distance: expected,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RadialRow {
    pub agent: String,
    pub category: String,
    pub frequency: f64,
    pub deviation: f64,
}

/// Per-category deviation of every agent from the population mean.
pub fn radial_export(
    labels: &[String],
    vectors: &[ActionFrequencyVector],
    categories: &[String],
) -> Result<Vec<RadialRow>> {
    if vectors.is_empty() {
        return Err(Error::Empty("frequency vectors"));
    }
    let dim = categories.len();
    if vectors.iter().any(|v| v.freq.len() != dim) || labels.len() != vectors.len() {
        return Err(Error::Dimension {
            what: "radial export",
            expected: dim,
            got: vectors[0].freq.len(),
        });
    }
    let n = vectors.len() as f64;
    let mean: Vec<f64> = (0..dim)
        .map(|c| vectors.iter().map(|v| v.freq[c]).sum::<f64>() / n)
        .collect();
    let mut rows = Vec::with_capacity(vectors.len() * dim);
    for (label, v) in labels.iter().zip(vectors) {
        for c in 0..dim {
            rows.push(RadialRow {
                agent: label.clone(),
                category: categories[c].clone(),
                frequency: v.freq[c],
                deviation: v.freq[c] - mean[c],
            });
        }
    }
    Ok(rows)
}

pub fn radial_csv(rows: &[RadialRow]) -> String {
    let mut out = String::from("agent,category,frequency,deviation\n");
    for r in rows {
        out.push_str(&format!("{},{},{},{}\n", r.agent, r.category, r.frequency, r.deviation));
    }
    out
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MiReport {
    /// `(x, y, nats)` for every unordered pair.
    pub pairs: Vec<(usize, usize, f64)>,
    pub aggregate: f64,
}

/// Plug-in MI between the actions of every pair of agents playing each
/// other, conditioned on the state bucket of the first agent. The
/// aggregate is the mean over pairs.
pub fn mi_report(
    env: &EnvSpec,
    players: &[Player<'_>],
    episodes: usize,
    seed: u64,
) -> Result<MiReport> {
    if players.len() < 2 {
        return Err(Error::Config("mi_report needs at least two agents".into()));
    }
    let mut pairs = Vec::new();
    for x in 0..players.len() {
        for y in x + 1..players.len() {
            let ks: Vec<usize> = (0..episodes.max(1)).collect();
            let per_episode = par_map(&ks, |&k| -> Result<Vec<((usize, usize), usize)>> {
                let mut rng = stream(seed, &[EVAL_STREAM, 2 << 32, x as u64, y as u64, k as u64]);
                let seat = seat_for(env, players[x].id, k);
                let (i, ii) = match seat {
                    crate::game::Seat::I => (players[x], players[y]),
                    crate::game::Seat::II => (players[y], players[x]),
                };
                let out = run_episode(env, i, ii, None, &mut rng)?;
                let me = seat.index();
                let op = 1 - me;
                Ok((0..out.actions[me].len())
                    .map(|t| ((out.actions[me][t], out.actions[op][t]), out.buckets[me][t]))
                    .collect())
            });
            let mut samples = Vec::new();
            let mut buckets = Vec::new();
            for ep in per_episode {
                for (s, b) in ep? {
                    samples.push(s);
                    buckets.push(b);
                }
            }
            pairs.push((x, y, mutual_information_sampled(&samples, &buckets)?));
        }
    }
    let aggregate = pairs.iter().map(|p| p.2).sum::<f64>() / pairs.len() as f64;
    Ok(MiReport { pairs, aggregate })
}

/// Largest gain either seat can get by deviating to a pure best response,
/// with `x` played in seat I and `y` in seat II.
pub fn exploitability_of(spec: &MatrixGameSpec, x: &[f64], y: &[f64]) -> f64 {
    let v = spec.expected_payoff(x, y);
    let br_i = spec
        .payoff
        .iter()
        .map(|row| row.iter().zip(y).map(|(p, q)| p * q).sum::<f64>())
        .fold(f64::NEG_INFINITY, f64::max);
    let col_min = (0..spec.n_actions_ii())
        .map(|b| spec.payoff.iter().zip(x).map(|(row, p)| p * row[b]).sum::<f64>())
        .fold(f64::INFINITY, f64::min);
    (br_i - v).max(v - col_min).max(0.0)
}

/// Exploitability of the policy pair (id 0 in seat I, id 1 in seat II) on a
/// matrix-game environment, by enumeration of pure responses.
pub fn exploitability(policy: &PolicyParams, env: &EnvSpec) -> Result<f64> {
    let EnvSpec::Matrix(m) = env else {
        return Err(Error::NotEnumerable);
    };
    let spec = m.spec()?;
    let (x, y) = matrix_strategies(policy, &spec, AgentId(0), AgentId(1))?;
    Ok(exploitability_of(&spec, &x, &y))
}

/// Mixed strategies of two ids, truncated to each seat's action count.
pub fn matrix_strategies(
    policy: &PolicyParams,
    spec: &MatrixGameSpec,
    id_i: AgentId,
    id_ii: AgentId,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let n = policy.n_actions;
    let obs = matrix_observation();
    let mi: Vec<bool> = (0..n).map(|a| a < spec.n_actions_i()).collect();
    let mii: Vec<bool> = (0..n).map(|a| a < spec.n_actions_ii()).collect();
    let mut x = policy.forward(&obs, id_i, &mi)?.probs;
    let mut y = policy.forward(&obs, id_ii, &mii)?.probs;
    x.truncate(spec.n_actions_i());
    y.truncate(spec.n_actions_ii());
    Ok((x, y))
}

/// `(new - old) / old`.
pub fn relative_change(old: f64, new: f64) -> f64 {
    (new - old) / old
}

/// Signed percentage with one decimal, e.g. `+14.9%`.
pub fn format_relative_change(old: f64, new: f64) -> String {
    format!("{:+.1}%", 100.0 * relative_change(old, new))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn epsilon_examples() {
        assert!((epsilon_ne(0.576) - 0.076).abs() < 1e-12);
        assert_eq!(epsilon_ne(0.5), 0.0);
        assert!((epsilon_ne(0.3) - 0.2).abs() < 1e-12);
    }

    #[test]
    fn relative_change_arithmetic() {
        assert_eq!(format_relative_change(0.9210, 1.0585), "+14.9%");
        assert!((relative_change(0.9210, 1.0585) - 0.149294).abs() < 1e-6);
        assert_eq!(format_relative_change(2.0, 1.0), "-50.0%");
    }

    fn afv(freq: Vec<f64>) -> ActionFrequencyVector {
        ActionFrequencyVector {
            freq,
            episodes_observed: 1,
        }
    }

    #[test]
    fn diversity_examples() {
        let same = vec![afv(vec![0.5, 0.5]), afv(vec![0.5, 0.5])];
        assert_eq!(diversity_score(&same).unwrap().expected_distance, 0.0);
        let hot = vec![afv(vec![1.0, 0.0]), afv(vec![0.0, 1.0])];
        assert!((diversity_score(&hot).unwrap().expected_distance - 2f64.sqrt()).abs() < 1e-12);
        let three = vec![afv(vec![1.0, 0.0]), afv(vec![0.0, 1.0]), afv(vec![0.5, 0.5])];
        assert_eq!(diversity_score(&three).unwrap().pairwise_distances.len(), 3);
        assert!(diversity_score(&[afv(vec![1.0])]).is_err());
        assert!(diversity_score(&[afv(vec![1.0]), afv(vec![0.5, 0.5])]).is_err());
    }

    #[test]
    fn radial_examples() {
        let cats = vec!["a".to_string(), "b".to_string(), "c".to_string()];
        let labels = vec!["x".to_string(), "y".to_string()];
        let v = vec![afv(vec![0.2, 0.3, 0.5]), afv(vec![0.6, 0.1, 0.3])];
        let rows = radial_export(&labels, &v, &cats).unwrap();
        assert_eq!(rows.len(), 6);
        for c in 0..3 {
            assert!((rows[c].deviation + rows[3 + c].deviation).abs() < 1e-15);
        }
        let same = vec![afv(vec![0.2, 0.3, 0.5]); 2];
        assert!(radial_export(&labels, &same, &cats)
            .unwrap()
            .iter()
            .all(|r| r.deviation == 0.0));
    }

    #[test]
    fn exploitability_examples() {
        let rps = MatrixGameSpec::rock_paper_scissors();
        let u = [1.0 / 3.0; 3];
        assert!(exploitability_of(&rps, &u, &u) < 1e-12);
        assert!((exploitability_of(&rps, &[1.0, 0.0, 0.0], &u) - 1.0).abs() < 1e-12);
        let mp = MatrixGameSpec::matching_pennies();
        assert!(exploitability_of(&mp, &[0.5, 0.5], &[0.5, 0.5]) < 1e-12);
        let brps = MatrixGameSpec::biased_rps();
        let ne = [0.25, 0.5, 0.25];
        assert!(exploitability_of(&brps, &ne, &ne) < 1e-12);
        let policy = PolicyParams::tabular(1, 2, 3);
        let env = EnvSpec::matrix("rps");
        assert!(exploitability(&policy, &env).unwrap() < 1e-12);
        assert!(matches!(
            exploitability(&policy, &EnvSpec::duel()),
            Err(Error::NotEnumerable)
        ));
    }

    proptest::proptest! {
        #[test]
        fn exploitability_nonnegative(a in 0.0f64..1.0, b in 0.0f64..1.0, c in 0.0f64..1.0, d in 0.0f64..1.0) {
            let spec = MatrixGameSpec::biased_rps();
            let x = [a, 1.0 - a, 0.0];
            let s = b + c + d + 1e-9;
            let y = [b / s, c / s, d / s];
            proptest::prop_assert!(exploitability_of(&spec, &x, &y) >= 0.0);
        }

        #[test]
        fn epsilon_is_seat_symmetric(w in 0.0f64..1.0) {
            proptest::prop_assert!((epsilon_ne(w) - epsilon_ne(1.0 - w)).abs() < 1e-15);
        }

        #[test]
        fn diversity_permutation_invariant(v in proptest::collection::vec(proptest::collection::vec(0.0f64..1.0, 4), 2..6), k in 0usize..5) {
            let vs: Vec<ActionFrequencyVector> = v.iter().map(|f| afv(f.clone())).collect();
            let mut rotated = vs.clone();
            rotated.rotate_left(k % vs.len());
            let relabeled: Vec<ActionFrequencyVector> = vs.iter().map(|x| afv(x.freq.iter().rev().copied().collect())).collect();
            let base = diversity_score(&vs).unwrap().expected_distance;
            proptest::prop_assert!((diversity_score(&rotated).unwrap().expected_distance - base).abs() < 1e-12);
            proptest::prop_assert!((diversity_score(&relabeled).unwrap().expected_distance - base).abs() < 1e-12);
        }
    }
}
