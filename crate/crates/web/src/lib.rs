//! WebAssembly bindings for the static demo page in `www/`.
//!
//! Each export has a plain Rust counterpart so it can be tested natively.

use serde::Serialize;
use wasm_bindgen::prelude::*;

use cam_core::config::{PolicyConfig, RunConfig};
use cam_core::envs::{EnvSpec, GameState};
use cam_core::envs::duel::DuelAction;
use cam_core::game::{AgentId, Seat, SkillCategory};
use cam_core::policy::PolicyParams;
use cam_core::population::{mia_train, solve_row};
use cam_core::rng::stream;

/// Opponent weights for one row of win rates.
pub fn weights(win_rates: &[f64], exponent: f64) -> cam_core::Result<Vec<f64>> {
    if win_rates.iter().any(|u| !(0.0..=1.0).contains(u)) {
        return Err(cam_core::Error::Config("win rates must lie in [0, 1]".into()));
    }
    if !(exponent.is_finite() && exponent >= 0.0) {
        return Err(cam_core::Error::Config("exponent must be finite and non-negative".into()));
    }
    Ok(solve_row(win_rates, exponent))
}

#[derive(Clone, Debug, Serialize)]
pub struct Curve {
    pub exploitability: Vec<f64>,
    /// Final mixed strategy of each seat.
    pub strategy: [Vec<f64>; 2],
}

/// Shared-policy training on biased rock-paper-scissors.
pub fn rps_curve(generations: usize, learning_rate: f64, seed: u64) -> cam_core::Result<Curve> {
    let mut c = RunConfig::new(EnvSpec::matrix("biased_rps"));
    c.policy = PolicyConfig::Tabular;
    c.generations = generations;
    c.episodes_per_generation = 128;
    c.eval_games = Some(200);
    c.convergence.stop = false;
    c.objective.learning_rate = learning_rate;
    c.objective.ppo_epochs = 1;
    c.master_seed = seed;
    let run = mia_train(&c, &mut |_| Ok(()))?;
    let exploitability = run.state.history.iter().filter_map(|m| m.exploitability).collect();
    let policy = &run.store.latest().expect("initial generation is stored").policy;
    let strategy = [matrix_strategy(&c.env, policy, 0)?, matrix_strategy(&c.env, policy, 1)?];
    Ok(Curve {
        exploitability,
        strategy,
    })
}

fn matrix_strategy(env: &EnvSpec, policy: &PolicyParams, id: usize) -> cam_core::Result<Vec<f64>> {
    let game = env.game(AgentId(0), AgentId(1))?;
    let state = game.reset(0);
    let seat = EnvSpec::matrix_seat(AgentId(id));
    Ok(policy
        .forward(&game.observe(&state, seat), AgentId(id), &game.mask(&state, seat))?
        .probs)
}

#[derive(Clone, Debug, Serialize)]
pub struct Frame {
    pub tick: u32,
    pub position: [u32; 2],
    pub hp: [u32; 2],
    pub mana: [u32; 2],
    /// Actions taken from this frame, empty on the last one.
    pub actions: Vec<String>,
}

#[derive(Clone, Debug, Serialize)]
pub struct Replay {
    pub names: [String; 2],
    pub arena_length: u32,
    pub max_hp: [u32; 2],
    pub frames: Vec<Frame>,
    pub score_i: f64,
}

fn action_name(env: &EnvSpec, id: AgentId, a: usize) -> String {
    match DuelAction::from_index(a) {
        Ok(DuelAction::NoOp) => "wait".into(),
        Ok(DuelAction::Forward) => "forward".into(),
        Ok(DuelAction::Back) => "back".into(),
        Ok(DuelAction::Attack) => "attack".into(),
        Ok(DuelAction::Skill(s)) => env
            .character(id)
            .and_then(|c| c.skills.get(s))
            .map(|k| match k.category {
                SkillCategory::ForcingMove => "forcing move".into(),
                SkillCategory::CounterMove => "counter".into(),
                SkillCategory::Substitute => "substitute".into(),
            })
            .unwrap_or_else(|| format!("skill {s}")),
        Err(_) => "?".into(),
    }
}

/// Briefly trains a four-member duel population, then replays one game
/// between members `id_i` and `id_ii`.
pub fn duel_replay(generations: usize, id_i: usize, id_ii: usize, seed: u64) -> cam_core::Result<Replay> {
    let mut c = RunConfig::new(EnvSpec::duel());
    c.population_size = 4;
    c.generations = generations;
    c.episodes_per_generation = 32;
    c.eval_games = Some(8);
    c.convergence.stop = false;
    c.objective.learning_rate = 0.3;
    c.master_seed = seed;
    if id_i >= c.population_size || id_ii >= c.population_size {
        return Err(cam_core::Error::BadId {
            id: id_i.max(id_ii),
            n: c.population_size,
        });
    }
    let run = mia_train(&c, &mut |_| Ok(()))?;
    let policy = &run.store.latest().expect("initial generation is stored").policy;
    let env = &c.env;
    let ids = [AgentId(id_i), AgentId(id_ii)];
    let game = env.game(ids[0], ids[1])?;
    let cfg = match &game {
        cam_core::envs::Game::Duel(d) => d.clone(),
        cam_core::envs::Game::Matrix(_) => unreachable!("duel environment"),
    };
    let mut rng = stream(seed, &[0x5EED, id_i as u64, id_ii as u64]);
    let mut state = game.reset(0);
    let mut frames = Vec::new();
    for _ in 0..env.max_steps() {
        let GameState::Duel(d) = &state else { unreachable!() };
        let mut frame = frame_of(d);
        let mut acts = [0usize; 2];
        for (k, seat) in [Seat::I, Seat::II].into_iter().enumerate() {
            let dist = policy.forward(&game.observe(&state, seat), ids[k], &game.mask(&state, seat))?;
            acts[k] = dist.sample(&mut rng);
            frame.actions.push(action_name(env, ids[k], acts[k]));
        }
        frames.push(frame);
        let step = game.step(&state, acts[0], acts[1])?;
        state = step.state;
        if step.done {
            break;
        }
    }
    let GameState::Duel(d) = &state else { unreachable!() };
    frames.push(frame_of(d));
    Ok(Replay {
        names: [cfg.char_i.name.clone(), cfg.char_ii.name.clone()],
        arena_length: cfg.arena_length,
        max_hp: [cfg.char_i.max_hp, cfg.char_ii.max_hp],
        frames,
        score_i: game.score_i(&state),
    })
}

fn frame_of(d: &cam_core::envs::duel::DuelState) -> Frame {
    Frame {
        tick: d.tick,
        position: [d.fighters[0].position, d.fighters[1].position],
        hp: [d.fighters[0].hp, d.fighters[1].hp],
        mana: [d.fighters[0].mana, d.fighters[1].mana],
        actions: Vec::new(),
    }
}

fn js<T: Serialize>(r: cam_core::Result<T>) -> Result<String, JsError> {
    let v = r.map_err(|e| JsError::new(&e.to_string()))?;
    serde_json::to_string(&v).map_err(|e| JsError::new(&e.to_string()))
}

#[wasm_bindgen(js_name = opponentWeights)]
pub fn opponent_weights(win_rates: Vec<f64>, exponent: f64) -> Result<Vec<f64>, JsError> {
    weights(&win_rates, exponent).map_err(|e| JsError::new(&e.to_string()))
}

/// JSON `{exploitability, strategy}`.
#[wasm_bindgen(js_name = trainRps)]
pub fn train_rps(generations: usize, learning_rate: f64, seed: u32) -> Result<String, JsError> {
    js(rps_curve(generations, learning_rate, seed as u64))
}

/// JSON replay with one frame per tick.
#[wasm_bindgen(js_name = replayDuel)]
pub fn replay_duel(generations: usize, id_i: usize, id_ii: usize, seed: u32) -> Result<String, JsError> {
    js(duel_replay(generations, id_i, id_ii, seed as u64))
}
