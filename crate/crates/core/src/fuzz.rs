//! Random scenario and state generators for property tests and fuzz harnesses.

use rand::seq::SliceRandom;
use rand::Rng;

use crate::engine::{CombatConfig, Faction, GameState, ObjectiveSpec, Scenario, UnitKind, UnitSpec};
use crate::hexgrid::HexCoord;
use crate::hierarchy::{Posture, Subgoal};

#[derive(Clone, Debug)]
pub struct FuzzParams {
    pub min_side: u32,
    pub max_side: u32,
    pub max_units_per_side: usize,
    pub max_objectives: usize,
    pub water_prob: f64,
    pub max_turns: u32,
}

impl Default for FuzzParams {
    fn default() -> Self {
        Self { min_side: 3, max_side: 8, max_units_per_side: 4, max_objectives: 3, water_prob: 0.1, max_turns: 8 }
    }
}

pub fn random_scenario_with<R: Rng + ?Sized>(rng: &mut R, p: &FuzzParams) -> Scenario {
    let width = rng.random_range(p.min_side..=p.max_side);
    let height = rng.random_range(p.min_side..=p.max_side);
    let mut terrain: Vec<String> = (0..height)
        .map(|_| {
            (0..width)
                .map(|_| {
                    let x: f64 = rng.random();
                    if x < p.water_prob {
                        'w'
                    } else if x < p.water_prob + 0.15 {
                        'r'
                    } else if x < p.water_prob + 0.25 {
                        'u'
                    } else {
                        'c'
                    }
                })
                .collect()
        })
        .collect();
    let is_land = |t: &[String], c: &HexCoord| t[c.r as usize].as_bytes()[c.q as usize] != b'w';
    let all: Vec<HexCoord> =
        (0..height as i32).flat_map(|r| (0..width as i32).map(move |q| HexCoord::new(q, r))).collect();
    if all.iter().filter(|c| is_land(&terrain, c)).count() < 2 {
        // room for at least one unit per side
        terrain[0] = "c".repeat(width as usize);
    }
    let mut land: Vec<HexCoord> = all.iter().copied().filter(|c| is_land(&terrain, c)).collect();
    land.shuffle(rng);
    let n_blue = rng.random_range(1..=p.max_units_per_side).min(land.len() / 2).max(1);
    let n_red = rng.random_range(1..=p.max_units_per_side).min(land.len() - n_blue).max(1);
    let mut units = Vec::new();
    for (i, &pos) in land.iter().take(n_blue + n_red).enumerate() {
        units.push(UnitSpec {
            id: i as u32 + 1,
            faction: if i < n_blue { Faction::Blue } else { Faction::Red },
            kind: if rng.random_bool(0.5) { UnitKind::Infantry } else { UnitKind::Armor },
            strength: rng.random_range(1..=100),
            q: pos.q,
            r: pos.r,
        });
    }
    // Shuffle ids so id order differs from placement order.
    let mut ids: Vec<u32> = (1..=units.len() as u32).map(|i| i * 3).collect();
    ids.shuffle(rng);
    for (u, id) in units.iter_mut().zip(ids) {
        u.id = id;
    }
    let mut cells = all;
    cells.shuffle(rng);
    let n_obj = rng.random_range(0..=p.max_objectives);
    let objectives =
        cells.iter().take(n_obj).map(|c| ObjectiveSpec { q: c.q, r: c.r, value: rng.random_range(1..=5) }).collect();
    let combat = CombatConfig { deterministic: rng.random_bool(0.5), ..CombatConfig::default() };
    let s = Scenario {
        name: "fuzz".into(),
        width,
        height,
        max_turns: rng.random_range(1..=p.max_turns),
        terrain,
        objectives,
        units,
        combat,
    };
    debug_assert!(s.validate().is_ok());
    s
}

pub fn random_scenario<R: Rng + ?Sized>(rng: &mut R) -> Scenario {
    random_scenario_with(rng, &FuzzParams::default())
}

/// A random scenario advanced by a random number of uniformly random legal steps.
pub fn random_state<R: Rng + ?Sized>(rng: &mut R) -> GameState {
    let scenario = random_scenario(rng);
    let mut s = GameState::new(&scenario, rng.random());
    let steps = rng.random_range(0..24);
    for _ in 0..steps {
        let Some(unit) = s.unit_on_move() else { break };
        let legal = s.legal_actions(unit).expect("unit on move is alive");
        let a = legal[rng.random_range(0..legal.len())];
        s.apply(unit, a).expect("legal action applies");
    }
    s
}

/// Like `random_state`, but retries until some unit is on move.
pub fn random_live_state<R: Rng + ?Sized>(rng: &mut R) -> (GameState, crate::engine::UnitId) {
    loop {
        let s = random_state(rng);
        if let Some(u) = s.unit_on_move() {
            return (s, u);
        }
    }
}

pub fn random_subgoal<R: Rng + ?Sized>(rng: &mut R, s: &GameState) -> Subgoal {
    let target = HexCoord::new(rng.random_range(0..s.board.width as i32), rng.random_range(0..s.board.height as i32));
    let posture = [Posture::Seize, Posture::Defend, Posture::Attrit][rng.random_range(0..3)];
    Subgoal::new(target, posture)
}
