//! Tick-stepped 1v1 skirmish on a one-dimensional arena.
//!
//! Both fighters act simultaneously each tick. Within a tick the effects
//! resolve in a fixed order: substitutes, then counters (which only fire
//! against a forcing move that would land), then forcing moves (dash and
//! strike), then basic attacks, then plain movement. Damage from all
//! phases is applied together at the end of the tick.
//!
//! Actions are egocentric: "forward" always means toward the opponent, so
//! swapping seats and mirroring the arena mirrors the whole trajectory.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::game::{CharacterSpec, Observation, Seat, SkillCategory};

/// Fixed actions preceding the skill slots.
pub const N_BASE_ACTIONS: usize = 4;
pub const MAX_SKILLS: usize = 4;
pub const N_DUEL_ACTIONS: usize = N_BASE_ACTIONS + MAX_SKILLS;
pub const COMBO_CAP: u32 = 5;
pub const OBS_DIM: usize = 24;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DuelAction {
    NoOp,
    Forward,
    Back,
    Attack,
    Skill(usize),
}

impl DuelAction {
    pub fn from_index(index: usize) -> Result<Self> {
        Ok(match index {
            0 => Self::NoOp,
            1 => Self::Forward,
            2 => Self::Back,
            3 => Self::Attack,
            i if i < N_DUEL_ACTIONS => Self::Skill(i - N_BASE_ACTIONS),
            _ => {
                return Err(Error::ActionOutOfRange {
                    action: index,
                    n_actions: N_DUEL_ACTIONS,
                })
            }
        })
    }

    pub fn index(self) -> usize {
        match self {
            Self::NoOp => 0,
            Self::Forward => 1,
            Self::Back => 2,
            Self::Attack => 3,
            Self::Skill(s) => N_BASE_ACTIONS + s,
        }
    }
}

/// Behavior categories used for action-frequency statistics.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActionCategory {
    ForcingMove,
    CounterMove,
    Substitute,
    BasicAttack,
    Movement,
    NoOp,
}

impl ActionCategory {
    pub const ALL: [ActionCategory; 6] = [
        Self::ForcingMove,
        Self::CounterMove,
        Self::Substitute,
        Self::BasicAttack,
        Self::Movement,
        Self::NoOp,
    ];

    pub fn index(self) -> usize {
        Self::ALL.iter().position(|c| *c == self).unwrap()
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::ForcingMove => "forcing_move",
            Self::CounterMove => "counter_move",
            Self::Substitute => "substitute",
            Self::BasicAttack => "basic_attack",
            Self::Movement => "movement",
            Self::NoOp => "no_op",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RewardWeights {
    pub own_hp: f64,
    pub opp_hp: f64,
    pub result: f64,
    pub combo: f64,
    pub mana: f64,
}

impl Default for RewardWeights {
    fn default() -> Self {
        Self {
            own_hp: 10.0,
            opp_hp: 10.0,
            result: 10.0,
            combo: 5.0,
            mana: 5.0,
        }
    }
}

impl RewardWeights {
    pub fn total(&self) -> f64 {
        self.own_hp + self.opp_hp + self.result + self.combo + self.mana
    }

    pub fn validate(&self) -> Result<()> {
        let w = [self.own_hp, self.opp_hp, self.result, self.combo, self.mana];
        if w.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::Config("reward weights must be finite and >= 0".into()));
        }
        // The hp terms only cancel between the two seats when equal.
        if self.own_hp != self.opp_hp {
            return Err(Error::Config(
                "reward weights own_hp and opp_hp must be equal for a zero-sum reward".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DuelConfig {
    pub arena_length: u32,
    pub tick_limit: u32,
    pub char_i: CharacterSpec,
    pub char_ii: CharacterSpec,
    pub reward_weights: RewardWeights,
}

impl DuelConfig {
    pub fn new(char_i: CharacterSpec, char_ii: CharacterSpec) -> Self {
        Self {
            arena_length: 11,
            tick_limit: 60,
            char_i,
            char_ii,
            reward_weights: RewardWeights::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.tick_limit < 1 {
            return Err(Error::Config("tick_limit must be >= 1".into()));
        }
        if self.arena_length < 3 {
            return Err(Error::Config("arena_length must be >= 3".into()));
        }
        self.char_i.validate()?;
        self.char_ii.validate()?;
        for c in [&self.char_i, &self.char_ii] {
            if c.skills.len() > MAX_SKILLS {
                return Err(Error::Character(format!(
                    "{}: at most {MAX_SKILLS} skills",
                    c.name
                )));
            }
        }
        self.reward_weights.validate()
    }

    pub fn character(&self, seat: Seat) -> &CharacterSpec {
        match seat {
            Seat::I => &self.char_i,
            Seat::II => &self.char_ii,
        }
    }

    /// The same matchup with the seats swapped.
    pub fn swapped(&self) -> Self {
        Self {
            char_i: self.char_ii.clone(),
            char_ii: self.char_i.clone(),
            ..self.clone()
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FighterState {
    pub position: u32,
    pub hp: u32,
    pub mana: u32,
    pub combo: u32,
    pub cooldowns: Vec<u32>,
    /// Invincible while `tick < invincible_until`.
    pub invincible_until: u32,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct DuelState {
    pub tick: u32,
    /// Indexed by seat.
    pub fighters: [FighterState; 2],
}

impl DuelState {
    pub fn fighter(&self, seat: Seat) -> &FighterState {
        &self.fighters[seat.index()]
    }

    pub fn distance(&self) -> u32 {
        self.fighters[0].position.abs_diff(self.fighters[1].position)
    }

    /// Swaps the seats and reflects positions through the arena center.
    pub fn mirrored(&self, arena_length: u32) -> Self {
        let mut f = self.fighters.clone();
        f.swap(0, 1);
        for x in &mut f {
            x.position = arena_length - 1 - x.position;
        }
        Self {
            tick: self.tick,
            fighters: f,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Outcome {
    WinI,
    WinII,
    Draw,
    Ongoing,
}

impl Outcome {
    /// Seat I's score: 1 for a win, 0.5 for a draw, 0 for a loss.
    pub fn score_i(self) -> Option<f64> {
        match self {
            Self::WinI => Some(1.0),
            Self::WinII => Some(0.0),
            Self::Draw => Some(0.5),
            Self::Ongoing => None,
        }
    }
}

/// Fighters start one cell in from each end, clamped so they never start
/// adjacent on short arenas. The duel has no stochastic elements; `seed`
/// is accepted so every environment resets through the same signature.
pub fn duel_reset(config: &DuelConfig, _seed: u64) -> DuelState {
    let inset = ((config.arena_length - 3) / 2).min(1);
    let fighter = |c: &CharacterSpec, position| FighterState {
        position,
        hp: c.max_hp,
        mana: c.max_mana,
        combo: 0,
        cooldowns: vec![0; c.skills.len()],
        invincible_until: 0,
    };
    DuelState {
        tick: 0,
        fighters: [
            fighter(&config.char_i, inset),
            fighter(&config.char_ii, config.arena_length - 1 - inset),
        ],
    }
}

pub fn action_mask(state: &DuelState, config: &DuelConfig, seat: Seat) -> Vec<bool> {
    let c = config.character(seat);
    let f = state.fighter(seat);
    let mut mask = vec![false; N_DUEL_ACTIONS];
    mask[..N_BASE_ACTIONS].fill(true);
    for (slot, skill) in c.skills.iter().enumerate() {
        mask[N_BASE_ACTIONS + slot] = f.cooldowns[slot] == 0 && skill.mana_cost <= f.mana;
    }
    mask
}

pub fn outcome(state: &DuelState, config: &DuelConfig) -> Outcome {
    let (a, b) = (state.fighters[0].hp, state.fighters[1].hp);
    match (a == 0, b == 0) {
        (true, true) => Outcome::Draw,
        (false, true) => Outcome::WinI,
        (true, false) => Outcome::WinII,
        (false, false) if state.tick >= config.tick_limit => match a.cmp(&b) {
            std::cmp::Ordering::Greater => Outcome::WinI,
            std::cmp::Ordering::Less => Outcome::WinII,
            std::cmp::Ordering::Equal => Outcome::Draw,
        },
        _ => Outcome::Ongoing,
    }
}

fn forward_dir(seat: usize) -> i64 {
    if seat == 0 {
        1
    } else {
        -1
    }
}

/// Moves both fighters one cell at a time. `steps[k]` is signed in the
/// fighter's own forward direction. A sub-step that would make the two
/// fighters meet or cross cancels every forward move in that sub-step.
fn resolve_moves(pos: &mut [u32; 2], steps: [i64; 2], arena_length: u32) {
    let rounds = steps[0].unsigned_abs().max(steps[1].unsigned_abs());
    let max = i64::from(arena_length) - 1;
    for r in 0..rounds {
        let mut delta = [0i64; 2];
        for k in 0..2 {
            if r < steps[k].unsigned_abs() {
                delta[k] = steps[k].signum() * forward_dir(k);
            }
        }
        let mut next = [0i64; 2];
        for k in 0..2 {
            next[k] = (i64::from(pos[k]) + delta[k]).clamp(0, max);
        }
        if next[0] >= next[1] {
            for k in 0..2 {
                if steps[k] > 0 {
                    next[k] = i64::from(pos[k]);
                }
            }
        }
        pos[0] = next[0] as u32;
        pos[1] = next[1] as u32;
    }
}

/// Advances one tick. Returns the next state, seat I's shaped reward, and
/// whether the episode ended.
pub fn duel_step(
    state: &DuelState,
    config: &DuelConfig,
    a_i: usize,
    a_ii: usize,
) -> Result<(DuelState, f64, bool)> {
    let chars = [&config.char_i, &config.char_ii];
    let mut acts = [DuelAction::NoOp; 2];
    for (k, (&a, seat)) in [a_i, a_ii].iter().zip([Seat::I, Seat::II]).enumerate() {
        acts[k] = DuelAction::from_index(a)?;
        if !action_mask(state, config, seat)[a] {
            return Err(Error::MaskedAction(a));
        }
    }
    let t = state.tick;
    let mut next = state.clone();
    for f in &mut next.fighters {
        for cd in &mut f.cooldowns {
            *cd = cd.saturating_sub(1);
        }
    }

    let skill_of = |k: usize| match acts[k] {
        DuelAction::Skill(s) => Some(&chars[k].skills[s]),
        _ => None,
    };
    let is = |k: usize, cat: SkillCategory| skill_of(k).is_some_and(|s| s.category == cat);

    for k in 0..2 {
        if let DuelAction::Skill(s) = acts[k] {
            let skill = &chars[k].skills[s];
            next.fighters[k].mana -= skill.mana_cost;
            next.fighters[k].cooldowns[s] = skill.cooldown;
        }
    }

    // Substitutes.
    for k in 0..2 {
        if is(k, SkillCategory::Substitute) {
            let until = t + skill_of(k).unwrap().effect_duration;
            next.fighters[k].invincible_until = next.fighters[k].invincible_until.max(until);
        }
    }
    let invincible = |f: &FighterState| t < f.invincible_until;

    let mut damage = [0u32; 2];
    let d0 = state.distance();
    // A forcing move lands if the dash brings the target into the skill's range.
    let reach_after_dash = |k: usize| d0.saturating_sub(chars[k].move_speed).max(1);
    let lands = |k: usize| {
        is(k, SkillCategory::ForcingMove) && reach_after_dash(k) <= skill_of(k).unwrap().range
    };

    // Counters.
    let mut cancelled = [false; 2];
    for k in 0..2 {
        let o = 1 - k;
        if is(k, SkillCategory::CounterMove)
            && lands(o)
            && reach_after_dash(o) <= skill_of(k).unwrap().range
        {
            cancelled[o] = true;
            if !invincible(&next.fighters[o]) {
                damage[o] += skill_of(k).unwrap().damage;
            }
        }
    }

    // Forcing moves.
    let mut pos = [next.fighters[0].position, next.fighters[1].position];
    let mut dash = [0i64; 2];
    for k in 0..2 {
        if is(k, SkillCategory::ForcingMove) && !cancelled[k] {
            dash[k] = i64::from(chars[k].move_speed);
        }
    }
    resolve_moves(&mut pos, dash, config.arena_length);
    let d1 = pos[0].abs_diff(pos[1]);
    for k in 0..2 {
        let o = 1 - k;
        if dash[k] > 0 && d1 <= skill_of(k).unwrap().range && !invincible(&next.fighters[o]) {
            damage[o] += skill_of(k).unwrap().damage;
        }
    }

    // Basic attacks.
    for k in 0..2 {
        let o = 1 - k;
        if acts[k] == DuelAction::Attack
            && d1 <= chars[k].attack_range
            && !invincible(&next.fighters[o])
        {
            damage[o] += chars[k].attack_damage;
        }
    }

    // Movement.
    let mut walk = [0i64; 2];
    for k in 0..2 {
        walk[k] = match acts[k] {
            DuelAction::Forward => i64::from(chars[k].move_speed),
            DuelAction::Back => -i64::from(chars[k].move_speed),
            _ => 0,
        };
    }
    resolve_moves(&mut pos, walk, config.arena_length);

    for k in 0..2 {
        let o = 1 - k;
        let f = &mut next.fighters[k];
        f.position = pos[k];
        f.hp = f.hp.saturating_sub(damage[k]);
        if damage[k] > 0 {
            f.combo = 0;
        }
        if damage[o] > 0 {
            f.combo = (f.combo + 1).min(COMBO_CAP);
        }
        f.mana = (f.mana + chars[k].mana_regen).min(chars[k].max_mana);
    }
    next.tick = t + 1;

    let done = outcome(&next, config) != Outcome::Ongoing;
    let reward = shaped_reward(state, &next, config, Seat::I);
    Ok((next, reward, done))
}

fn norm(v: u32, max: u32) -> f64 {
    if max == 0 {
        0.0
    } else {
        f64::from(v) / f64::from(max)
    }
}

/// Weighted shaped reward for `seat` over one transition. The combo and
/// mana terms are self-minus-opponent differences, so the two seats'
/// rewards are exact negations.
pub fn shaped_reward(prev: &DuelState, next: &DuelState, config: &DuelConfig, seat: Seat) -> f64 {
    let w = &config.reward_weights;
    let me = seat.index();
    let op = seat.other().index();
    let c = [&config.char_i, &config.char_ii];
    let d_hp =
        |k: usize| norm(next.fighters[k].hp, c[k].max_hp) - norm(prev.fighters[k].hp, c[k].max_hp);
    let d_combo =
        |k: usize| norm(next.fighters[k].combo, COMBO_CAP) - norm(prev.fighters[k].combo, COMBO_CAP);
    let d_mana = |k: usize| {
        norm(next.fighters[k].mana, c[k].max_mana) - norm(prev.fighters[k].mana, c[k].max_mana)
    };
    let result = match outcome(next, config) {
        Outcome::WinI => 1.0,
        Outcome::WinII => -1.0,
        _ => 0.0,
    } * if seat == Seat::I { 1.0 } else { -1.0 };
    w.own_hp * d_hp(me) - w.opp_hp * d_hp(op)
        + w.result * result
        + w.combo * (d_combo(me) - d_combo(op))
        + w.mana * (d_mana(me) - d_mana(op))
}

/// Same as [`shaped_reward`] but rejects configs whose characters do not
/// match the states.
pub fn checked_shaped_reward(
    prev: &DuelState,
    next: &DuelState,
    config: &DuelConfig,
    seat: Seat,
) -> Result<f64> {
    for k in 0..2 {
        let n = [&config.char_i, &config.char_ii][k].skills.len();
        if prev.fighters[k].cooldowns.len() != n || next.fighters[k].cooldowns.len() != n {
            return Err(Error::Config("state does not match duel config".into()));
        }
    }
    Ok(shaped_reward(prev, next, config, seat))
}

/// Egocentric encoding of the full state for `seat`: own fighter, then the
/// opponent, then geometry and clock, then the opponent's character stats.
pub fn observe(state: &DuelState, config: &DuelConfig, seat: Seat) -> Observation {
    let me = seat.index();
    let op = seat.other().index();
    let chars = [&config.char_i, &config.char_ii];
    let span = f64::from(config.arena_length - 1);
    let mut x = Vec::with_capacity(OBS_DIM);
    for k in [me, op] {
        let f = &state.fighters[k];
        let c = chars[k];
        x.push(norm(f.hp, c.max_hp));
        x.push(norm(f.mana, c.max_mana));
        x.push(norm(f.combo, COMBO_CAP));
        x.push((f64::from(f.invincible_until.saturating_sub(state.tick)) / 3.0).min(1.0));
        for slot in 0..MAX_SKILLS {
            x.push(match c.skills.get(slot) {
                Some(s) => norm(f.cooldowns[slot], s.cooldown.max(1)),
                None => 1.0,
            });
        }
    }
    let back_room = |k: usize| {
        let p = state.fighters[k].position;
        f64::from(if k == 0 { p } else { config.arena_length - 1 - p }) / span
    };
    x.push(f64::from(state.distance()) / span);
    x.push(back_room(me));
    x.push(back_room(op));
    x.push(f64::from(state.tick) / f64::from(config.tick_limit));
    let oc = chars[op];
    x.push(f64::from(oc.max_hp) / 100.0);
    x.push(f64::from(oc.move_speed) / 2.0);
    x.push(f64::from(oc.attack_range) / 4.0);
    x.push(f64::from(oc.attack_damage) / 20.0);
    debug_assert_eq!(x.len(), OBS_DIM);
    Observation {
        index: bucket(state, config, seat),
        features: x,
    }
}

/// Number of state buckets produced by [`bucket`].
pub const N_BUCKETS: usize = 75;

/// Coarse discretization (distance band, own-hp quintile, opp-hp quintile)
/// from `seat`'s perspective.
pub fn bucket(state: &DuelState, config: &DuelConfig, seat: Seat) -> usize {
    let d = state.distance();
    let band = if d <= 1 {
        0
    } else if d <= 3 {
        1
    } else {
        2
    };
    let quint = |k: usize| {
        let c = [&config.char_i, &config.char_ii][k];
        ((5 * state.fighters[k].hp) / c.max_hp).min(4) as usize
    };
    band * 25 + quint(seat.index()) * 5 + quint(seat.other().index())
}

pub fn action_category(config: &DuelConfig, seat: Seat, action: usize) -> Result<ActionCategory> {
    Ok(match DuelAction::from_index(action)? {
        DuelAction::NoOp => ActionCategory::NoOp,
        DuelAction::Forward | DuelAction::Back => ActionCategory::Movement,
        DuelAction::Attack => ActionCategory::BasicAttack,
        DuelAction::Skill(s) => match config.character(seat).skills.get(s) {
            Some(skill) => match skill.category {
                SkillCategory::ForcingMove => ActionCategory::ForcingMove,
                SkillCategory::CounterMove => ActionCategory::CounterMove,
                SkillCategory::Substitute => ActionCategory::Substitute,
            },
            None => return Err(Error::MaskedAction(action)),
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::roster::default_roster;
    use crate::game::SkillSpec;

    fn cfg() -> DuelConfig {
        let r = default_roster();
        DuelConfig::new(r[0].clone(), r[1].clone())
    }

    fn plain(name: &str, hp: u32, dmg: u32, range: u32) -> CharacterSpec {
        let s = |category, damage, range, cooldown, effect_duration| SkillSpec {
            category,
            cooldown,
            damage,
            range,
            mana_cost: 1,
            effect_duration,
        };
        CharacterSpec {
            name: name.into(),
            move_speed: 1,
            attack_range: range,
            attack_damage: dmg,
            max_hp: hp,
            max_mana: 4,
            mana_regen: 0,
            skills: vec![
                s(SkillCategory::ForcingMove, 20, 2, 5, 0),
                s(SkillCategory::CounterMove, 15, 2, 3, 0),
                s(SkillCategory::Substitute, 0, 0, 4, 1),
            ],
        }
    }

    fn near(config: &DuelConfig, gap: u32) -> DuelState {
        let mut s = duel_reset(config, 0);
        s.fighters[0].position = 4;
        s.fighters[1].position = 4 + gap;
        s
    }

    #[test]
    fn reset_placement() {
        let c = cfg();
        let s = duel_reset(&c, 0);
        assert_eq!((s.fighters[0].position, s.fighters[1].position), (1, 9));
        assert_eq!(s.fighters[0].hp, c.char_i.max_hp);
        assert_eq!(s.fighters[1].hp, c.char_ii.max_hp);
        assert_eq!(s.tick, 0);
        assert_eq!(s, duel_reset(&c, 0));
        assert_eq!(duel_reset(&c, 7), duel_reset(&c, 7));
        let mut short = c.clone();
        short.arena_length = 3;
        let s = duel_reset(&short, 0);
        assert_eq!((s.fighters[0].position, s.fighters[1].position), (0, 2));
    }

    #[test]
    fn idle_out_of_range_is_neutral() {
        let c = cfg();
        let s = duel_reset(&c, 0);
        let (n, r, done) = duel_step(&s, &c, 0, 0).unwrap();
        assert_eq!(n.fighters[0].hp, s.fighters[0].hp);
        assert_eq!(n.fighters[1].hp, s.fighters[1].hp);
        assert_eq!(r, 0.0);
        assert!(!done);
        assert_eq!(n.tick, 1);
    }

    #[test]
    fn basic_attack_reward() {
        // 10 damage against 100 max hp: normalized hp drops by 0.1.
        let c = DuelConfig::new(plain("a", 100, 10, 1), plain("b", 100, 10, 1));
        let s = near(&c, 1);
        let (n, r, _) = duel_step(&s, &c, 3, 0).unwrap();
        assert_eq!(n.fighters[1].hp, 90);
        // combo term: seat I gains one combo step (0.2) under weight 5.
        let combo = 5.0 * (1.0 / COMBO_CAP as f64);
        assert!((r - (1.0 + combo)).abs() < 1e-12, "{r}");
        let mut no_combo = c.clone();
        no_combo.reward_weights.combo = 0.0;
        let (_, r, _) = duel_step(&s, &no_combo, 3, 0).unwrap();
        assert!((r - 1.0).abs() < 1e-12);
    }

    #[test]
    fn shaped_reward_examples() {
        let c = DuelConfig::new(plain("a", 100, 10, 1), plain("b", 100, 10, 1));
        let prev = near(&c, 1);
        let mut next = prev.clone();
        next.tick = 1;
        assert_eq!(shaped_reward(&prev, &next, &c, Seat::I), 0.0);
        next.fighters[1].hp = 80;
        assert!((shaped_reward(&prev, &next, &c, Seat::I) - 2.0).abs() < 1e-12);
        assert!((shaped_reward(&prev, &next, &c, Seat::II) + 2.0).abs() < 1e-12);
        let mut end = prev.clone();
        end.tick = 1;
        end.fighters[0].hp = 0;
        let r = shaped_reward(&prev, &end, &c, Seat::I);
        // -10 from own hp (100 -> 0) and -10 from the result term.
        assert!((r - (-10.0 - 10.0)).abs() < 1e-12);
    }

    #[test]
    fn substitute_nullifies_forcing_move() {
        let c = DuelConfig::new(plain("a", 100, 10, 1), plain("b", 100, 10, 1));
        let s = near(&c, 2);
        let forcing = N_BASE_ACTIONS;
        let substitute = N_BASE_ACTIONS + 2;
        let (n, _, _) = duel_step(&s, &c, forcing, substitute).unwrap();
        assert_eq!(n.fighters[1].hp, 100);
        let (n, _, _) = duel_step(&s, &c, forcing, 0).unwrap();
        assert_eq!(n.fighters[1].hp, 80);
    }

    #[test]
    fn counter_cancels_forcing_move() {
        let c = DuelConfig::new(plain("a", 100, 10, 1), plain("b", 100, 10, 1));
        let s = near(&c, 2);
        let (forcing, counter) = (N_BASE_ACTIONS, N_BASE_ACTIONS + 1);
        let (n, _, _) = duel_step(&s, &c, forcing, counter).unwrap();
        assert_eq!(n.fighters[0].hp, 85);
        assert_eq!(n.fighters[1].hp, 100);
        // Cancelled dash: seat I did not move.
        assert_eq!(n.fighters[0].position, 4);
        // A counter without an incoming forcing move whiffs.
        let (n, _, _) = duel_step(&s, &c, 0, counter).unwrap();
        assert_eq!(n.fighters[0].hp, 100);
    }

    #[test]
    fn cooldown_window() {
        let mut ch = plain("a", 100, 10, 1);
        ch.skills[0].cooldown = 5;
        ch.max_mana = 100;
        let c = DuelConfig::new(ch.clone(), ch);
        let slot = N_BASE_ACTIONS;
        let mut s = duel_reset(&c, 0);
        assert!(action_mask(&s, &c, Seat::I)[..N_BASE_ACTIONS + 3].iter().all(|&m| m));
        let t = 3;
        for _ in 0..t {
            s = duel_step(&s, &c, 0, 0).unwrap().0;
        }
        s = duel_step(&s, &c, slot, 0).unwrap().0;
        for tick in t + 1..=t + 5 {
            assert_eq!(s.tick, tick);
            assert!(!action_mask(&s, &c, Seat::I)[slot], "tick {tick}");
            s = duel_step(&s, &c, 0, 0).unwrap().0;
        }
        assert_eq!(s.tick, t + 6);
        assert!(action_mask(&s, &c, Seat::I)[slot]);
    }

    #[test]
    fn mana_gating_and_rejection() {
        let c = cfg();
        let mut s = duel_reset(&c, 0);
        s.fighters[0].mana = 0;
        let m = action_mask(&s, &c, Seat::I);
        assert!(m[..N_BASE_ACTIONS].iter().all(|&x| x));
        for (slot, skill) in c.char_i.skills.iter().enumerate() {
            if skill.mana_cost >= 1 {
                assert!(!m[N_BASE_ACTIONS + slot]);
            }
        }
        assert!(matches!(
            duel_step(&s, &c, N_BASE_ACTIONS, 0),
            Err(Error::MaskedAction(_))
        ));
        // Missing skill slots are always masked.
        assert!(!action_mask(&s, &c, Seat::II)[N_DUEL_ACTIONS - 1]);
    }

    #[test]
    fn outcome_rules() {
        let c = cfg();
        let mut s = duel_reset(&c, 0);
        s.tick = 30;
        s.fighters[0].hp = 0;
        s.fighters[1].hp = 5;
        assert_eq!(outcome(&s, &c), Outcome::WinII);
        s.tick = 60;
        s.fighters[0].hp = 40;
        s.fighters[1].hp = 30;
        assert_eq!(outcome(&s, &c), Outcome::WinI);
        s.fighters[1].hp = 40;
        assert_eq!(outcome(&s, &c), Outcome::Draw);
        s.tick = 59;
        assert_eq!(outcome(&s, &c), Outcome::Ongoing);
    }

    #[test]
    fn fighters_never_overlap() {
        let c = cfg();
        let mut s = near(&c, 1);
        let (n, _, _) = duel_step(&s, &c, 1, 1).unwrap();
        assert_eq!(n.distance(), 1);
        s.fighters[1].position = 6;
        let (n, _, _) = duel_step(&s, &c, 1, 1).unwrap();
        assert!(n.fighters[0].position < n.fighters[1].position);
    }

    #[test]
    fn observations_are_mirror_images() {
        let c = cfg();
        let mut s = duel_reset(&c, 0);
        s = duel_step(&s, &c, 1, 2).unwrap().0;
        let oi = observe(&s, &c, Seat::I);
        let mirrored = observe(&s.mirrored(c.arena_length), &c.swapped(), Seat::II);
        assert_eq!(oi, mirrored);
        assert_eq!(oi.features.len(), OBS_DIM);
        assert!(bucket(&s, &c, Seat::I) < N_BUCKETS);
    }
}
