use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::scenario::{CombatConfig, Scenario};
use super::types::{Action, Event, Faction, Objective, Terrain, Unit, UnitId};
use crate::error::{Error, Result};
use crate::hexgrid::HexCoord;

/// Static part of a game: map, objectives, combat rules.
#[derive(Debug)]
pub struct Board {
    pub scenario: Scenario,
    pub width: u32,
    pub height: u32,
    terrain: Vec<Terrain>,
    pub objectives: Vec<Objective>,
    pub combat: CombatConfig,
}

impl Board {
    fn new(scenario: &Scenario) -> Board {
        let mut terrain = Vec::with_capacity((scenario.width * scenario.height) as usize);
        for r in 0..scenario.height as i32 {
            for q in 0..scenario.width as i32 {
                terrain.push(scenario.terrain_at(HexCoord::new(q, r)).expect("validated"));
            }
        }
        Board {
            scenario: scenario.clone(),
            width: scenario.width,
            height: scenario.height,
            terrain,
            objectives: scenario
                .objectives
                .iter()
                .map(|o| Objective { pos: HexCoord::new(o.q, o.r), value: o.value })
                .collect(),
            combat: scenario.combat.clone(),
        }
    }

    pub fn in_bounds(&self, c: HexCoord) -> bool {
        c.q >= 0 && c.r >= 0 && (c.q as u32) < self.width && (c.r as u32) < self.height
    }

    pub fn terrain(&self, c: HexCoord) -> Option<Terrain> {
        self.in_bounds(c).then(|| self.terrain[(c.r as u32 * self.width + c.q as u32) as usize])
    }

    pub fn objective_at(&self, c: HexCoord) -> Option<&Objective> {
        self.objectives.iter().find(|o| o.pos == c)
    }

    pub fn max_objective_value(&self) -> i64 {
        self.objectives.iter().map(|o| o.value).max().unwrap_or(0)
    }

    /// Every board hex, row-major.
    pub fn cells(&self) -> impl Iterator<Item = HexCoord> + '_ {
        (0..self.height as i32).flat_map(move |r| (0..self.width as i32).map(move |q| HexCoord::new(q, r)))
    }
}

/// Outcome of a single accepted step.
#[derive(Clone, Debug, PartialEq)]
pub struct StepOutcome {
    /// Blue-positive score delta caused by this step.
    pub reward: i64,
    pub events: Vec<Event>,
}

/// Canonical, serializable view of the dynamic state.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub turn: u32,
    pub phase: Faction,
    pub score: i64,
    pub units: Vec<Unit>,
}

#[derive(Clone, Debug)]
pub struct GameState {
    pub board: Arc<Board>,
    /// Living units, sorted by id.
    pub units: Vec<Unit>,
    pub turn: u32,
    pub max_turns: u32,
    pub score: i64,
    pub phase: Faction,
    rng: ChaCha8Rng,
}

impl GameState {
    pub fn new(scenario: &Scenario, seed: u64) -> GameState {
        let mut units: Vec<Unit> = scenario
            .units
            .iter()
            .map(|u| Unit {
                id: u.id,
                faction: u.faction,
                kind: u.kind,
                strength: u.strength,
                pos: HexCoord::new(u.q, u.r),
                acted: false,
            })
            .collect();
        units.sort_by_key(|u| u.id);
        GameState {
            board: Arc::new(Board::new(scenario)),
            units,
            turn: 0,
            max_turns: scenario.max_turns,
            score: 0,
            phase: Faction::Blue,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn unit(&self, id: UnitId) -> Option<&Unit> {
        self.units.binary_search_by_key(&id, |u| u.id).ok().map(|i| &self.units[i])
    }

    pub fn unit_at(&self, c: HexCoord) -> Option<&Unit> {
        self.units.iter().find(|u| u.pos == c)
    }

    pub fn faction_units(&self, f: Faction) -> impl Iterator<Item = &Unit> {
        self.units.iter().filter(move |u| u.faction == f)
    }

    pub fn total_strength(&self, f: Faction) -> u64 {
        self.faction_units(f).map(|u| u.strength as u64).sum()
    }

    pub fn is_terminal(&self) -> bool {
        self.turn >= self.max_turns
            || self.faction_units(Faction::Blue).next().is_none()
            || self.faction_units(Faction::Red).next().is_none()
    }

    /// Lowest-id un-acted unit of the phase faction, or `None` when terminal.
    pub fn unit_on_move(&self) -> Option<UnitId> {
        if self.is_terminal() {
            return None;
        }
        self.faction_units(self.phase).find(|u| !u.acted).map(|u| u.id)
    }

    pub fn legal_actions(&self, unit_id: UnitId) -> Result<Vec<Action>> {
        let unit = self
            .unit(unit_id)
            .ok_or_else(|| Error::InvalidArgument(format!("unit {unit_id} does not exist or is destroyed")))?;
        let mut moves = Vec::with_capacity(7);
        let mut attacks = Vec::new();
        moves.push(Action::Pass);
        for dir in 0..6u8 {
            let dest = unit.pos.neighbor(dir as usize);
            match self.unit_at(dest) {
                Some(other) if other.faction != unit.faction => attacks.push(Action::Attack(dir)),
                Some(_) => {}
                None => {
                    if self.board.terrain(dest).is_some_and(Terrain::passable) {
                        moves.push(Action::Move(dir));
                    }
                }
            }
        }
        moves.extend(attacks);
        Ok(moves)
    }

    pub fn is_legal(&self, unit_id: UnitId, action: Action) -> bool {
        self.legal_actions(unit_id).is_ok_and(|l| l.contains(&action))
    }

    pub fn snapshot(&self) -> Snapshot {
        Snapshot { turn: self.turn, phase: self.phase, score: self.score, units: self.units.clone() }
    }

    /// Same board, dynamic part taken from `snap`. The RNG stream is not part
    /// of a snapshot and is left as is.
    pub fn with_snapshot(&self, snap: &Snapshot) -> GameState {
        let mut s = self.clone();
        s.turn = snap.turn;
        s.phase = snap.phase;
        s.score = snap.score;
        s.units = snap.units.clone();
        s.units.sort_by_key(|u| u.id);
        s
    }

    /// Functional step: returns the successor state, leaving `self` untouched.
    pub fn step(&self, unit_id: UnitId, action: Action) -> Result<(GameState, StepOutcome)> {
        let mut next = self.clone();
        let outcome = next.apply(unit_id, action)?;
        Ok((next, outcome))
    }

    /// Applies `action` for the unit on move. On error the state is unchanged.
    pub fn apply(&mut self, unit_id: UnitId, action: Action) -> Result<StepOutcome> {
        match self.unit_on_move() {
            Some(id) if id == unit_id => {}
            Some(_) => return Err(Error::InvalidArgument(format!("unit {unit_id} is not on move"))),
            None => return Err(Error::InvalidArgument("game is over".into())),
        }
        if !self.is_legal(unit_id, action) {
            return Err(Error::IllegalAction { unit: unit_id, action: action.to_string() });
        }

        let mut events = Vec::new();
        let mut reward = 0i64;
        let idx = self.index_of(unit_id);
        match action {
            Action::Pass => events.push(Event::Passed { unit: unit_id }),
            Action::Move(dir) => {
                let from = self.units[idx].pos;
                let to = from.neighbor(dir as usize);
                self.units[idx].pos = to;
                events.push(Event::Moved { unit: unit_id, from, to });
            }
            Action::Attack(dir) => {
                reward += self.resolve_attack(idx, dir as usize, &mut events);
            }
        }
        if let Some(u) = self.units.iter_mut().find(|u| u.id == unit_id) {
            u.acted = true;
        }
        self.units.retain(|u| u.strength > 0);

        if !self.is_terminal() && self.faction_units(self.phase).all(|u| u.acted) {
            reward += self.end_phase(&mut events);
        }
        self.score += reward;
        Ok(StepOutcome { reward, events })
    }

    fn index_of(&self, id: UnitId) -> usize {
        self.units.binary_search_by_key(&id, |u| u.id).expect("unit exists")
    }

    fn draw_eta(&mut self) -> f64 {
        if self.board.combat.deterministic {
            1.0
        } else {
            let etas = &self.board.combat.eta;
            etas[self.rng.random_range(0..etas.len())]
        }
    }

    /// Returns the blue-positive strength delta.
    fn resolve_attack(&mut self, attacker_idx: usize, dir: usize, events: &mut Vec<Event>) -> i64 {
        let target = self.units[attacker_idx].pos.neighbor(dir);
        let defender_idx = self.units.iter().position(|u| u.pos == target).expect("legal attack has a target");
        let eta = self.draw_eta();
        let combat = &self.board.combat;
        let defense = self.board.terrain(target).and_then(Terrain::defense_mult).unwrap_or(1.0);

        let attacker_strength = self.units[attacker_idx].strength;
        let damage = ceil_damage(attacker_strength as f64 * combat.attack_coef * defense * eta)
            .min(self.units[defender_idx].strength);
        self.units[defender_idx].strength -= damage;
        let defender_after = self.units[defender_idx].strength;
        let counter = ceil_damage(defender_after as f64 * combat.counter_coef * eta).min(attacker_strength);
        self.units[attacker_idx].strength -= counter;

        let attacker = &self.units[attacker_idx];
        let defender = &self.units[defender_idx];
        events.push(Event::Attacked { attacker: attacker.id, defender: defender.id, damage, counter, eta });
        for u in [defender, attacker] {
            if u.strength == 0 {
                events.push(Event::Destroyed { unit: u.id });
            }
        }
        // Attacker's side gains `damage`, loses `counter`.
        attacker.faction.sign() * (damage as i64 - counter as i64)
    }

    fn end_phase(&mut self, events: &mut Vec<Event>) -> i64 {
        match self.phase {
            Faction::Blue => {
                self.phase = Faction::Red;
                events.push(Event::PhaseEnded { next: Faction::Red });
                0
            }
            Faction::Red => {
                let points = self.objective_points();
                if points != 0 {
                    events.push(Event::ObjectivesScored { points });
                }
                self.turn += 1;
                self.phase = Faction::Blue;
                for u in &mut self.units {
                    u.acted = false;
                }
                events.push(Event::TurnEnded { turn: self.turn });
                points
            }
        }
    }

    /// Blue-positive points for current objective occupation.
    pub fn objective_points(&self) -> i64 {
        self.board.objectives.iter().filter_map(|o| self.unit_at(o.pos).map(|u| u.faction.sign() * o.value)).sum()
    }
}

/// `ceil` that ignores floating-point noise just above an integer.
fn ceil_damage(x: f64) -> u32 {
    (x - 1e-9).ceil().max(0.0) as u32
}

/// Parse and validate a scenario document, then build its initial state.
pub fn load_scenario(doc: &str, seed: u64) -> Result<GameState> {
    Ok(GameState::new(&Scenario::from_json(doc)?, seed))
}
