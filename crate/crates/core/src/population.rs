//! Training loops: generation storage, the payoff matrix and interaction
//! graph, episode collection, shared-policy self-play and per-agent
//! specialization.
//!
//! Every episode and evaluation game draws from its own random stream keyed
//! by its position in the run, so results do not depend on scheduling.

use rand::distributions::{Distribution, WeightedIndex};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::checkpoint::{params_hash, Stage};
use crate::config::RunConfig;
use crate::envs::EnvSpec;
use crate::error::{Error, Result};
use crate::eval;
use crate::game::{AgentId, OpponentTag, Seat, TrajectoryBatch, Transition};
use crate::objectives::{
    batch_mutual_information, cam_loss, clip_grad_norm, estimate_j, estimate_values,
    fit_value_head, mi_gradient, mia_loss, normalize_advantages, policy_gradient, ppo_surrogate,
    sgd_step, ExactSetting, GradEstimate, MiMode, MiSource, ObjectiveConfig, UpdateMode,
    ValueEstimates,
};
use crate::policy::{PolicyParams, ValueHead};
use crate::rng::{stream, StreamRng};

const INIT_STREAM: u64 = 1;
const COLLECT_STREAM: u64 = 2;
const EVAL_STREAM: u64 = 3;
const CAM_COLLECT_STREAM: u64 = 4;
const CAM_EVAL_STREAM: u64 = 5;

/// Ordered map, parallel when the `parallel` feature is on.
pub fn par_map<T: Sync, R: Send>(items: &[T], f: impl Fn(&T) -> R + Sync + Send) -> Vec<R> {
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        items.par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        items.iter().map(f).collect()
    }
}

/// A policy queried with a fixed id.
#[derive(Clone, Copy, Debug)]
pub struct Player<'a> {
    pub policy: &'a PolicyParams,
    pub id: AgentId,
}

/// An opponent slot for collection.
#[derive(Clone, Copy, Debug)]
pub struct Opponent<'a> {
    pub player: Player<'a>,
    pub tag: OpponentTag,
}

/// Seat taken by `id` in its `k`-th game. Matrix seats follow id parity;
/// duel seats alternate.
pub fn seat_for(env: &EnvSpec, id: AgentId, k: usize) -> Seat {
    match env {
        EnvSpec::Matrix(_) => EnvSpec::matrix_seat(id),
        EnvSpec::Duel(_) => {
            if k % 2 == 0 {
                Seat::I
            } else {
                Seat::II
            }
        }
    }
}

#[derive(Clone, Debug, Default)]
pub struct EpisodeOutcome {
    pub score_i: f64,
    /// Transitions of the recorded seat, if any.
    pub transitions: Vec<Transition>,
    /// Executed actions, behavior categories and state buckets per seat.
    pub actions: [Vec<usize>; 2],
    pub categories: [Vec<usize>; 2],
    pub buckets: [Vec<usize>; 2],
}

/// Plays one episode. With `record = Some((seat, tag))` the transitions of
/// that seat are returned, tagged with who the opponent was.
pub fn run_episode(
    env: &EnvSpec,
    seat_i: Player<'_>,
    seat_ii: Player<'_>,
    record: Option<(Seat, OpponentTag)>,
    rng: &mut StreamRng,
) -> Result<EpisodeOutcome> {
    let game = env.game(seat_i.id, seat_ii.id)?;
    let players = [seat_i, seat_ii];
    let mut state = game.reset(0);
    let mut out = EpisodeOutcome::default();
    for _ in 0..env.max_steps() {
        let seats = [Seat::I, Seat::II];
        let obs = seats.map(|s| game.observe(&state, s));
        let masks = seats.map(|s| game.mask(&state, s));
        let mut acts = [0usize; 2];
        let mut lps = [0.0; 2];
        for k in 0..2 {
            let lp = players[k].policy.log_probs(&obs[k], players[k].id, &masks[k])?;
            let probs: Vec<f64> = lp.iter().map(|l| l.exp()).collect();
            let a = crate::policy::ActionDistribution { probs }.sample(rng);
            acts[k] = a;
            lps[k] = lp[a];
            out.actions[k].push(a);
            out.categories[k].push(game.category(seats[k], a)?);
            out.buckets[k].push(game.bucket(&state, seats[k]));
        }
        let step = game.step(&state, acts[0], acts[1])?;
        if let Some((seat, tag)) = record {
            let me = seat.index();
            let op = 1 - me;
            out.transitions.push(Transition {
                state: obs[me].clone(),
                opp_state: obs[op].clone(),
                next_state: game.observe(&step.state, seat),
                id_self: players[me].id,
                id_opp: players[op].id,
                action_self: acts[me],
                action_opp: acts[op],
                reward: step.reward(seat),
                done: step.done,
                mask_self: masks[me].clone(),
                mask_opp: masks[op].clone(),
                log_prob_self: lps[me],
                bucket: out.buckets[me][out.buckets[me].len() - 1],
                opponent: tag,
            });
        }
        state = step.state;
        if step.done {
            break;
        }
    }
    out.score_i = game.score_i(&state);
    Ok(out)
}

/// Categorical draw from a weight row.
pub fn sample_opponent(row: &[f64], rng: &mut impl Rng) -> Result<usize> {
    let dist = WeightedIndex::new(row).map_err(|e| Error::Config(format!("bad opponent weights: {e}")))?;
    Ok(dist.sample(rng))
}

/// Runs `episodes` episodes of `learner` against opponents drawn from
/// `weights`, returning the learner's transitions.
pub fn npl_collect(
    env: &EnvSpec,
    learner: Player<'_>,
    weights: &[f64],
    opponents: &[Opponent<'_>],
    episodes: usize,
    seed: u64,
    path: &[u64],
) -> Result<TrajectoryBatch> {
    if episodes == 0 {
        return Err(Error::Config("episode count must be >= 1".into()));
    }
    if weights.len() != opponents.len() {
        return Err(Error::Dimension {
            what: "opponent weights",
            expected: opponents.len(),
            got: weights.len(),
        });
    }
    let ks: Vec<usize> = (0..episodes).collect();
    let results = par_map(&ks, |&k| -> Result<Vec<Transition>> {
        let mut p = path.to_vec();
        p.push(k as u64);
        let mut rng = stream(seed, &p);
        let opp = opponents[sample_opponent(weights, &mut rng)?];
        let seat = seat_for(env, learner.id, k);
        let (i, ii) = match seat {
            Seat::I => (learner, opp.player),
            Seat::II => (opp.player, learner),
        };
        Ok(run_episode(env, i, ii, Some((seat, opp.tag)), &mut rng)?.transitions)
    });
    let mut batch = TrajectoryBatch::default();
    for (k, r) in results.into_iter().enumerate() {
        let episode = r.map_err(|e| Error::Episode {
            episode: k,
            source: Box::new(e),
        })?;
        batch.push_episode(episode);
    }
    Ok(batch)
}

/// Empirical win rates between population members. Each pair's entries are
/// derived from one tally, so `u[x][y] + u[y][x] = 1`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PayoffMatrix {
    pub u: Vec<Vec<f64>>,
    pub games_played: Vec<Vec<usize>>,
}

impl PayoffMatrix {
    pub fn new(n: usize) -> Self {
        Self {
            u: vec![vec![0.5; n]; n],
            games_played: vec![vec![0; n]; n],
        }
    }

    pub fn len(&self) -> usize {
        self.u.len()
    }

    pub fn is_empty(&self) -> bool {
        self.u.is_empty()
    }

    /// Adds an unevaluated member.
    pub fn grow(&mut self) {
        for (row, g) in self.u.iter_mut().zip(&mut self.games_played) {
            row.push(0.5);
            g.push(0);
        }
        let n = self.u.len() + 1;
        self.u.push(vec![0.5; n]);
        self.games_played.push(vec![0; n]);
    }

    /// Stores `x`'s mean score against `y` and its complement.
    pub fn record(&mut self, x: usize, y: usize, score_x: f64, games: usize) {
        self.u[x][y] = score_x;
        self.u[y][x] = 1.0 - score_x;
        self.games_played[x][y] = games;
        self.games_played[y][x] = games;
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.u.len();
        for x in 0..n {
            if self.u[x].len() != n {
                return Err(Error::Dimension {
                    what: "payoff row",
                    expected: n,
                    got: self.u[x].len(),
                });
            }
            for y in 0..n {
                if !(0.0..=1.0).contains(&self.u[x][y]) {
                    return Err(Error::Config(format!("win rate u[{x}][{y}] outside [0, 1]")));
                }
            }
        }
        Ok(())
    }

    pub fn to_csv(&self) -> String {
        let n = self.u.len();
        let mut out = String::from("generation");
        for y in 0..n {
            out.push_str(&format!(",{y}"));
        }
        out.push('\n');
        for (x, row) in self.u.iter().enumerate() {
            out.push_str(&x.to_string());
            for v in row {
                out.push_str(&format!(",{v}"));
            }
            out.push('\n');
        }
        out
    }
}

/// Row-stochastic opponent weights.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InteractionGraph {
    pub sigma: Vec<Vec<f64>>,
}

/// Weights `(1 - u)^exponent`, normalized; uniform if they are all zero.
pub fn solve_row(win_rates: &[f64], exponent: f64) -> Vec<f64> {
    let w: Vec<f64> = win_rates
        .iter()
        .map(|u| (1.0 - u).clamp(0.0, 1.0).powf(exponent))
        .collect();
    let total: f64 = w.iter().sum();
    if total > 0.0 {
        w.iter().map(|x| x / total).collect()
    } else {
        vec![1.0 / win_rates.len() as f64; win_rates.len()]
    }
}

/// Opponent weights for every member over all other members.
pub fn graph_solve(u: &PayoffMatrix, exponent: f64) -> Result<InteractionGraph> {
    let n = u.len();
    if n < 2 {
        return Err(Error::Config("graph solver needs at least two members".into()));
    }
    u.validate()?;
    let sigma = (0..n)
        .map(|x| {
            let others: Vec<f64> = (0..n).filter(|y| *y != x).map(|y| u.u[x][y]).collect();
            let w = solve_row(&others, exponent);
            let mut row = Vec::with_capacity(n);
            let mut it = w.into_iter();
            for y in 0..n {
                row.push(if y == x { 0.0 } else { it.next().unwrap_or(0.0) });
            }
            row
        })
        .collect();
    Ok(InteractionGraph { sigma })
}

/// True when the last `patience` win rates are all within `threshold` of 0.5.
pub fn convergence_check(history: &[f64], threshold: f64, patience: usize) -> bool {
    patience > 0
        && history.len() >= patience
        && history[history.len() - patience..]
            .iter()
            .all(|w| eval::epsilon_ne(*w) <= threshold)
}

#[derive(Clone, Debug, PartialEq)]
pub struct Generation {
    pub index: usize,
    pub parent: Option<usize>,
    pub policy: PolicyParams,
    pub value: ValueHead,
}

/// Append-only list of checkpointed generations.
#[derive(Clone, Debug, PartialEq)]
pub struct GenerationStore {
    pub stage: Stage,
    pub seed: u64,
    gens: Vec<Generation>,
}

impl GenerationStore {
    pub fn new(stage: Stage, seed: u64) -> Self {
        Self {
            stage,
            seed,
            gens: Vec::new(),
        }
    }

    pub fn push(&mut self, policy: PolicyParams, value: ValueHead, parent: Option<usize>) -> usize {
        let index = self.gens.len();
        self.gens.push(Generation {
            index,
            parent,
            policy,
            value,
        });
        index
    }

    pub fn get(&self, index: usize) -> Option<&Generation> {
        self.gens.get(index)
    }

    pub fn latest(&self) -> Option<&Generation> {
        self.gens.last()
    }

    pub fn len(&self) -> usize {
        self.gens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gens.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Generation> {
        self.gens.iter()
    }
}

/// Diagnostics of one parameter update.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct UpdateReport {
    pub transitions: usize,
    pub episodes: usize,
    pub j: f64,
    pub ppo_loss: f64,
    pub mia_loss: f64,
    pub mi: f64,
    pub reward_grad_norm: f64,
    pub mi_grad_norm: f64,
    pub value_mse: f64,
}

/// One line of `metrics.jsonl` for the shared-policy stage.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GenerationMetrics {
    pub stage: Stage,
    pub generation: usize,
    pub win_rate_vs_prev: f64,
    pub epsilon: f64,
    pub converged: bool,
    /// Opponent weights over stored generations, one row per id.
    pub opponent_weights: Vec<Vec<f64>>,
    pub eval_games: usize,
    pub exploitability: Option<f64>,
    pub update: UpdateReport,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainState {
    pub tau: usize,
    pub converged: bool,
    pub converged_at: Option<usize>,
    pub history: Vec<GenerationMetrics>,
}

impl TrainState {
    pub fn win_rates(&self) -> Vec<f64> {
        self.history.iter().map(|m| m.win_rate_vs_prev).collect()
    }
}

pub struct MiaRun {
    pub store: GenerationStore,
    pub payoff: PayoffMatrix,
    pub state: TrainState,
}

/// Progress handed to the caller after every stored generation.
pub struct MiaProgress<'a> {
    pub store: &'a GenerationStore,
    pub payoff: &'a PayoffMatrix,
    pub metrics: Option<&'a GenerationMetrics>,
}

fn diverged(generation: usize) -> impl Fn(Error) -> Error {
    move |e| match e {
        Error::NonFinite(_) => Error::Diverged(generation),
        other => other,
    }
}

/// PPO-style update of `params` on `batch`, then value regression.
pub fn update_policy(
    env: &EnvSpec,
    params: &mut PolicyParams,
    value: &mut ValueHead,
    batch: &TrajectoryBatch,
    cfg: &ObjectiveConfig,
) -> Result<UpdateReport> {
    let values = estimate_values(batch, value, cfg)?;
    let mut adv = values.advantage.clone();
    if cfg.normalize_advantages {
        normalize_advantages(&mut adv);
    }
    let mut report = UpdateReport {
        transitions: batch.len(),
        episodes: batch.n_episodes(),
        j: estimate_j(batch, &values)?,
        mia_loss: mia_loss(batch, &values, params)?,
        mi: batch_mutual_information(batch)?,
        ..Default::default()
    };
    let exact_setting = match (cfg.mi_mode, env) {
        (MiMode::Exact, EnvSpec::Matrix(m)) => {
            Some(ExactSetting::matrix(&m.spec()?, params.n_actions, AgentId(0), AgentId(1)))
        }
        (MiMode::Exact, EnvSpec::Duel(_)) => return Err(Error::NotEnumerable),
        _ => None,
    };
    let shaped = ValueEstimates {
        q: values.q.clone(),
        v: values.v.clone(),
        advantage: adv.clone(),
    };
    for epoch in 0..cfg.ppo_epochs {
        let mut g: GradEstimate = match cfg.update_mode {
            UpdateMode::Ppo | UpdateMode::PpoWithMi => {
                let (loss, g) = ppo_surrogate(batch, &adv, params, cfg.ppo_clip)?;
                if epoch == 0 {
                    report.ppo_loss = loss;
                }
                g
            }
            UpdateMode::Augmented => policy_gradient(batch, &shaped, params)?,
        };
        if epoch == 0 {
            report.reward_grad_norm = g.norm();
        }
        if cfg.update_mode != UpdateMode::Ppo && cfg.lambda_mi > 0.0 {
            let source = match &exact_setting {
                Some(s) => MiSource::Exact(s),
                None => MiSource::Sampled(batch),
            };
            let mi = mi_gradient(params, source)?;
            if epoch == 0 {
                report.mi_grad_norm = mi.norm();
            }
            for (a, b) in g.grad.iter_mut().zip(&mi.grad) {
                *a += cfg.lambda_mi * b;
            }
        }
        clip_grad_norm(&mut g.grad, cfg.max_grad_norm);
        *params = sgd_step(params, &g, cfg.learning_rate)?;
    }
    report.value_mse = fit_value_head(value, batch, &values.q, cfg)?;
    if !report.ppo_loss.is_finite() || !report.mia_loss.is_finite() || !report.j.is_finite() {
        return Err(Error::NonFinite("loss"));
    }
    params.validate()?;
    Ok(report)
}

/// `(id_x, id_y)` combinations used when two populations meet.
pub fn pairings(env: &EnvSpec, population: usize) -> Vec<(AgentId, AgentId)> {
    (0..population)
        .flat_map(|a| {
            env.matchups(AgentId(a), population)
                .into_iter()
                .map(move |(_, b)| (AgentId(a), b))
        })
        .collect()
}

/// Result of pitting one policy against another.
#[derive(Clone, Debug, PartialEq)]
pub struct PairEval {
    /// Mean score of `x` over all games.
    pub overall: f64,
    /// Mean score of `x` in the games where it was queried with each id.
    pub per_id: Vec<f64>,
}

/// Mean score of policy `x` against policy `y`, cycling through every id
/// pairing and, in duels, both seats.
pub fn evaluate_policies(
    env: &EnvSpec,
    x: &PolicyParams,
    y: &PolicyParams,
    population: usize,
    games: usize,
    seed: u64,
    path: &[u64],
) -> Result<PairEval> {
    let combos = pairings(env, population);
    let ks: Vec<usize> = (0..games).collect();
    let scores = par_map(&ks, |&k| -> Result<f64> {
        let (a, b) = combos[k % combos.len()];
        let mut p = path.to_vec();
        p.push(k as u64);
        let mut rng = stream(seed, &p);
        let seat = match env {
            EnvSpec::Matrix(_) => EnvSpec::matrix_seat(a),
            EnvSpec::Duel(_) => {
                if (k / combos.len()) % 2 == 0 {
                    Seat::I
                } else {
                    Seat::II
                }
            }
        };
        let pa = Player { policy: x, id: a };
        let pb = Player { policy: y, id: b };
        let out = match seat {
            Seat::I => run_episode(env, pa, pb, None, &mut rng)?.score_i,
            Seat::II => 1.0 - run_episode(env, pb, pa, None, &mut rng)?.score_i,
        };
        Ok(out)
    });
    let mut total = 0.0;
    let mut per_id = vec![(0.0, 0usize); population];
    for (k, s) in scores.into_iter().enumerate() {
        let s = s?;
        total += s;
        let a = combos[k % combos.len()].0 .0;
        per_id[a].0 += s;
        per_id[a].1 += 1;
    }
    Ok(PairEval {
        overall: total / games.max(1) as f64,
        per_id: per_id
            .into_iter()
            .map(|(s, c)| if c == 0 { 0.5 } else { s / c as f64 })
            .collect(),
    })
}

/// Shared-policy self-play against weighted past generations.
pub fn mia_train(
    config: &RunConfig,
    observer: &mut dyn FnMut(MiaProgress<'_>) -> Result<()>,
) -> Result<MiaRun> {
    config.validate()?;
    let env = &config.env;
    let n = config.population_size;
    let seed = config.master_seed;
    let (mut theta, mut value) = config.policy.init(env, n, &mut stream(seed, &[INIT_STREAM]))?;
    let mut store = GenerationStore::new(Stage::Mia, seed);
    store.push(theta.clone(), value.clone(), None);
    let mut payoff = PayoffMatrix::new(1);
    // id_rates[x][t][g]: score of generation t queried as id x against generation g < t.
    let mut id_rates: Vec<Vec<Vec<f64>>> = vec![vec![Vec::new()]; n];
    let mut state = TrainState::default();
    observer(MiaProgress {
        store: &store,
        payoff: &payoff,
        metrics: None,
    })?;
    let games = config.eval_games();
    for tau in 1..=config.generations {
        let cur = tau - 1;
        let mut batch = TrajectoryBatch::default();
        let mut all_weights = Vec::with_capacity(n);
        for x in 0..n {
            // Weights over stored generations 0..=cur from this id's own
            // results; the current policy's slot is only used before any
            // past generation exists.
            let weights: Vec<f64> = if cur == 0 {
                vec![1.0]
            } else {
                let mut w = solve_row(&id_rates[x][cur], config.solver_exponent);
                w.push(0.0);
                w
            };
            let learner = Player {
                policy: &theta,
                id: AgentId(x),
            };
            let mut slots = Vec::new();
            let mut slot_w = Vec::new();
            let matchups = env.matchups(AgentId(x), n);
            for (g, &w) in weights.iter().enumerate() {
                if w <= 0.0 {
                    continue;
                }
                for &(_, y) in &matchups {
                    slots.push(Opponent {
                        player: Player {
                            policy: &store.get(g).expect("stored generation").policy,
                            id: y,
                        },
                        tag: OpponentTag::Generation(g),
                    });
                    slot_w.push(w / matchups.len() as f64);
                }
            }
            let part = npl_collect(
                env,
                learner,
                &slot_w,
                &slots,
                config.episodes_per_generation,
                seed,
                &[COLLECT_STREAM, tau as u64, x as u64],
            )?;
            batch.append(part);
            all_weights.push(weights);
        }
        let update = update_policy(env, &mut theta, &mut value, &batch, &config.objective)
            .map_err(diverged(tau))?;
        store.push(theta.clone(), value.clone(), Some(cur));
        payoff.grow();
        let gens: Vec<usize> = (0..tau).collect();
        let scores = gens
            .iter()
            .map(|&g| {
                evaluate_policies(
                    env,
                    &theta,
                    &store.get(g).expect("stored generation").policy,
                    n,
                    games,
                    seed,
                    &[EVAL_STREAM, tau as u64, g as u64],
                )
            })
            .collect::<Result<Vec<PairEval>>>()?;
        for rates in &mut id_rates {
            rates.push(Vec::with_capacity(tau));
        }
        for (g, s) in gens.into_iter().zip(scores) {
            payoff.record(tau, g, s.overall, games);
            for (x, r) in s.per_id.iter().enumerate() {
                id_rates[x][tau].push(*r);
            }
        }
        let win_rate = payoff.u[tau][cur];
        let exploitability = match env {
            EnvSpec::Matrix(_) => Some(eval::exploitability(&theta, env)?),
            EnvSpec::Duel(_) => None,
        };
        let mut history = state.win_rates();
        history.push(win_rate);
        let converged = convergence_check(
            &history,
            config.convergence.threshold,
            config.convergence.patience,
        );
        let metrics = GenerationMetrics {
            stage: Stage::Mia,
            generation: tau,
            win_rate_vs_prev: win_rate,
            epsilon: eval::epsilon_ne(win_rate),
            converged,
            opponent_weights: all_weights,
            eval_games: games,
            exploitability,
            update,
        };
        state.tau = tau;
        if converged && !state.converged {
            state.converged = true;
            state.converged_at = Some(tau);
        }
        state.history.push(metrics);
        observer(MiaProgress {
            store: &store,
            payoff: &payoff,
            metrics: state.history.last(),
        })?;
        if converged && config.convergence.stop {
            break;
        }
    }
    Ok(MiaRun {
        store,
        payoff,
        state,
    })
}

/// Per-agent diagnostics of one specialization sweep.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AgentSweepMetrics {
    pub agent: usize,
    /// Mean score against the frozen shared policy after the update.
    pub win_rate_vs_baseline: f64,
    /// Mean score against the other specialists, if they are opponents.
    pub win_rate_vs_specialists: Option<f64>,
    pub opponent_weights: Vec<f64>,
    pub cam_loss: f64,
    pub update: UpdateReport,
}

/// One line of `metrics.jsonl` for the specialization stage.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepMetrics {
    pub stage: Stage,
    pub sweep: usize,
    pub agents: Vec<AgentSweepMetrics>,
    pub mean_win_rate_vs_baseline: f64,
}

pub struct CamRun {
    pub specialists: Vec<PolicyParams>,
    pub values: Vec<ValueHead>,
    pub history: Vec<SweepMetrics>,
    pub baseline_hash: String,
}

struct Slot {
    id: AgentId,
    specialist: Option<usize>,
}

fn cam_slots(env: &EnvSpec, agent: usize, n: usize, include_specialists: bool) -> Vec<Slot> {
    let matchups = env.matchups(AgentId(agent), n);
    let mut slots: Vec<Slot> = matchups
        .iter()
        .map(|&(_, y)| Slot {
            id: y,
            specialist: None,
        })
        .collect();
    if include_specialists {
        slots.extend(
            matchups
                .iter()
                .filter(|(_, y)| y.0 != agent)
                .map(|&(_, y)| Slot {
                    id: y,
                    specialist: Some(y.0),
                }),
        );
    }
    slots
}

fn slot_opponent<'a>(slot: &Slot, baseline: &'a PolicyParams, pool: &'a [PolicyParams]) -> Opponent<'a> {
    match slot.specialist {
        None => Opponent {
            player: Player {
                policy: baseline,
                id: slot.id,
            },
            tag: OpponentTag::FrozenBaseline,
        },
        Some(y) => Opponent {
            player: Player {
                policy: &pool[y],
                id: slot.id,
            },
            tag: OpponentTag::Specialist(y),
        },
    }
}

fn eval_slots(
    env: &EnvSpec,
    me: Player<'_>,
    slots: &[Slot],
    baseline: &PolicyParams,
    pool: &[PolicyParams],
    games: usize,
    seed: u64,
    path: &[u64],
) -> Result<Vec<f64>> {
    slots
        .iter()
        .enumerate()
        .map(|(j, s)| {
            let mut p = path.to_vec();
            p.push(j as u64);
            eval::play_match(env, me, slot_opponent(s, baseline, pool).player, games, seed, &p)
        })
        .collect()
}

/// Fine-tunes one copy of the frozen shared policy per agent against the
/// shared policy and the current specialist pool.
pub fn cam_specialize(
    config: &RunConfig,
    baseline: &PolicyParams,
    baseline_value: Option<&ValueHead>,
    observer: &mut dyn FnMut(&SweepMetrics) -> Result<()>,
) -> Result<CamRun> {
    config.validate()?;
    let env = &config.env;
    let n = config.population_size;
    if baseline.n_ids != n {
        return Err(Error::BadId {
            id: baseline.n_ids,
            n,
        });
    }
    let seed = config.master_seed;
    let hash_before = params_hash(baseline)?;
    let cfg = config.cam_objective();
    let games = config.cam_eval_games();
    let mut rng = stream(seed, &[CAM_COLLECT_STREAM, u64::MAX]);
    let mut specialists = (0..n)
        .map(|k| baseline.clone_for_specialist(AgentId(k)))
        .collect::<Result<Vec<_>>>()?;
    let mut values: Vec<ValueHead> = (0..n)
        .map(|_| match baseline_value {
            Some(v) => v.clone(),
            None => ValueHead::for_policy(baseline, &mut rng),
        })
        .collect();
    let slots: Vec<Vec<Slot>> = (0..n)
        .map(|k| cam_slots(env, k, n, config.cam.include_specialists))
        .collect();
    let mut pool = specialists.clone();
    let ids: Vec<usize> = (0..n).collect();
    let mut win_rates = par_map(&ids, |&k| {
        eval_slots(
            env,
            Player {
                policy: &specialists[k],
                id: AgentId(k),
            },
            &slots[k],
            baseline,
            &pool,
            games,
            seed,
            &[CAM_EVAL_STREAM, 0, k as u64],
        )
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    let mut history = Vec::new();
    for sweep in 1..=config.cam.sweeps {
        let results = par_map(&ids, |&k| -> Result<(PolicyParams, ValueHead, Vec<f64>, AgentSweepMetrics)> {
            let mut psi = specialists[k].clone();
            let mut value = values[k].clone();
            let weights = solve_row(&win_rates[k], config.solver_exponent);
            let opponents: Vec<Opponent<'_>> = slots[k]
                .iter()
                .map(|s| slot_opponent(s, baseline, &pool))
                .collect();
            let batch = npl_collect(
                env,
                Player {
                    policy: &psi,
                    id: AgentId(k),
                },
                &weights,
                &opponents,
                config.cam.episodes_per_sweep,
                seed,
                &[CAM_COLLECT_STREAM, sweep as u64, k as u64],
            )?;
            let mut vs_baseline = TrajectoryBatch::default();
            for ep in batch.episodes() {
                if batch.transitions[ep.start].opponent == OpponentTag::FrozenBaseline {
                    vs_baseline.push_episode(batch.transitions[ep].to_vec());
                }
            }
            let loss = if vs_baseline.is_empty() {
                0.0
            } else {
                let v = estimate_values(&vs_baseline, &value, cfg)?;
                cam_loss(&vs_baseline, &v, &psi)?
            };
            let update = update_policy(env, &mut psi, &mut value, &batch, cfg).map_err(diverged(sweep))?;
            let rates = eval_slots(
                env,
                Player {
                    policy: &psi,
                    id: AgentId(k),
                },
                &slots[k],
                baseline,
                &pool,
                games,
                seed,
                &[CAM_EVAL_STREAM, sweep as u64, k as u64],
            )?;
            let mean_of = |spec: bool| {
                let v: Vec<f64> = slots[k]
                    .iter()
                    .zip(&rates)
                    .filter(|(s, _)| s.specialist.is_some() == spec)
                    .map(|(_, r)| *r)
                    .collect();
                (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
            };
            let metrics = AgentSweepMetrics {
                agent: k,
                win_rate_vs_baseline: mean_of(false).unwrap_or(0.5),
                win_rate_vs_specialists: mean_of(true),
                opponent_weights: weights,
                cam_loss: loss,
                update,
            };
            Ok((psi, value, rates, metrics))
        });
        let mut agents = Vec::with_capacity(n);
        for (k, r) in results.into_iter().enumerate() {
            let (psi, value, rates, metrics) = r?;
            specialists[k] = psi;
            values[k] = value;
            win_rates[k] = rates;
            agents.push(metrics);
        }
        pool = specialists.clone();
        let mean = agents.iter().map(|a| a.win_rate_vs_baseline).sum::<f64>() / n as f64;
        let m = SweepMetrics {
            stage: Stage::Cam,
            sweep,
            agents,
            mean_win_rate_vs_baseline: mean,
        };
        observer(&m)?;
        history.push(m);
    }
    let hash_after = params_hash(baseline)?;
    if hash_after != hash_before {
        return Err(Error::Checkpoint("frozen baseline was modified".into()));
    }
    Ok(CamRun {
        specialists,
        values,
        history,
        baseline_hash: hash_after,
    })
}

/// Mean score of each specialist against the frozen shared policy over
/// all of its matchups, with at least `games` games per agent.
pub fn specialist_win_rates(
    env: &EnvSpec,
    specialists: &[PolicyParams],
    baseline: &PolicyParams,
    games: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    let n = specialists.len();
    (0..n)
        .map(|k| {
            let me = Player {
                policy: &specialists[k],
                id: AgentId(k),
            };
            let matchups = env.matchups(AgentId(k), n);
            let per = games.div_ceil(matchups.len().max(1));
            let mut total = 0.0;
            for (j, &(_, y)) in matchups.iter().enumerate() {
                let opp = Player {
                    policy: baseline,
                    id: y,
                };
                total += eval::play_match(env, me, opp, per, seed, &[CAM_EVAL_STREAM, u64::MAX, k as u64, j as u64])?;
            }
            Ok(total / matchups.len() as f64)
        })
        .collect()
}
