//! Built-in heterogeneous characters. All numbers are hand-tuned desk-scale
//! choices, not measurements of any real game.

use crate::game::{CharacterSpec, SkillCategory, SkillSpec};

fn skill(
    category: SkillCategory,
    cooldown: u32,
    damage: u32,
    range: u32,
    mana_cost: u32,
    effect_duration: u32,
) -> SkillSpec {
    SkillSpec {
        category,
        cooldown,
        damage,
        range,
        mana_cost,
        effect_duration,
    }
}

use SkillCategory::{CounterMove as Counter, ForcingMove as Forcing, Substitute};

/// Short-range and fast.
pub fn striker() -> CharacterSpec {
    CharacterSpec {
        name: "striker".into(),
        move_speed: 2,
        attack_range: 1,
        attack_damage: 8,
        max_hp: 100,
        max_mana: 10,
        mana_regen: 1,
        skills: vec![
            skill(Forcing, 4, 16, 1, 3, 0),
            skill(Counter, 5, 14, 1, 3, 0),
            skill(Substitute, 8, 0, 0, 4, 2),
        ],
    }
}

/// Long-range and slow.
pub fn archer() -> CharacterSpec {
    CharacterSpec {
        name: "archer".into(),
        move_speed: 1,
        attack_range: 4,
        attack_damage: 5,
        max_hp: 90,
        max_mana: 12,
        mana_regen: 1,
        skills: vec![
            skill(Forcing, 6, 12, 4, 4, 0),
            skill(Counter, 6, 10, 2, 3, 0),
            skill(Substitute, 9, 0, 0, 4, 2),
        ],
    }
}

/// Tanky, with a cheap and hard-hitting counter.
pub fn guardian() -> CharacterSpec {
    CharacterSpec {
        name: "guardian".into(),
        move_speed: 1,
        attack_range: 2,
        attack_damage: 6,
        max_hp: 120,
        max_mana: 10,
        mana_regen: 1,
        skills: vec![
            skill(Forcing, 6, 12, 2, 4, 0),
            skill(Counter, 3, 24, 3, 2, 0),
            skill(Substitute, 10, 0, 0, 5, 1),
        ],
    }
}

/// Fast, fragile, and carries two substitutes.
pub fn phantom() -> CharacterSpec {
    CharacterSpec {
        name: "phantom".into(),
        move_speed: 2,
        attack_range: 1,
        attack_damage: 7,
        max_hp: 95,
        max_mana: 12,
        mana_regen: 1,
        skills: vec![
            skill(Forcing, 5, 15, 2, 3, 0),
            skill(Counter, 7, 12, 1, 3, 0),
            skill(Substitute, 5, 0, 0, 3, 2),
            skill(Substitute, 8, 0, 0, 4, 3),
        ],
    }
}

pub fn default_roster() -> Vec<CharacterSpec> {
    vec![striker(), archer(), guardian(), phantom()]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roster_is_valid_and_heterogeneous() {
        let r = default_roster();
        for c in &r {
            c.validate().unwrap();
        }
        for (i, a) in r.iter().enumerate() {
            for b in &r[i + 1..] {
                assert_ne!(a, b);
            }
        }
    }
}
