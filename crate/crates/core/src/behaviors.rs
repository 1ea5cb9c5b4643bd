//! Scripted behavior models: baselines, adversaries, and repository members
//! for the multi-model arbiter.
//!
//! Every tie is broken toward the lowest direction index (then lowest unit id
//! or objective index). Pathing is greedy and can stall behind water, in which
//! case the policy passes.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::engine::{Action, DecisionTrace, GameState, Unit, UnitId};
use crate::error::{Error, Result};
use crate::hexgrid::{distance, HexCoord};
use crate::hierarchy::{Posture, Subgoal};

/// Anything that picks an action for the unit on move.
pub trait BehaviorModel: Send {
    fn name(&self) -> &str;

    /// Must return a member of `state.legal_actions(unit)`.
    fn act(&mut self, state: &GameState, unit: UnitId) -> Result<Action>;

    /// Called once before each episode with a per-episode stream seed.
    fn begin_episode(&mut self, _seed: u64) {}

    /// Explanation for the most recent `act`, if the model produces one.
    fn take_trace(&mut self) -> Option<DecisionTrace> {
        None
    }

    fn is_deterministic(&self) -> bool {
        true
    }
}

fn unit_of(s: &GameState, id: UnitId) -> &Unit {
    s.unit(id).expect("policy called for a living unit")
}

fn legal(s: &GameState, id: UnitId) -> Vec<Action> {
    s.legal_actions(id).unwrap_or_else(|_| vec![Action::Pass])
}

/// Attack on the weakest adjacent enemy; ties go to the lowest direction.
fn attack_weakest(s: &GameState, unit: &Unit, legal: &[Action]) -> Option<Action> {
    legal
        .iter()
        .filter_map(|&a| match a {
            Action::Attack(d) => {
                let target = s.unit_at(unit.pos.neighbor(d as usize))?;
                Some((target.strength, d, a))
            }
            _ => None,
        })
        .min_by_key(|&(strength, d, _)| (strength, d))
        .map(|(_, _, a)| a)
}

/// Legal move that strictly reduces distance to `target`, choosing the
/// closest destination and then the lowest direction.
fn step_toward(unit: &Unit, target: HexCoord, legal: &[Action]) -> Option<Action> {
    let here = distance(unit.pos, target);
    legal
        .iter()
        .filter_map(|&a| match a {
            Action::Move(d) => Some((distance(unit.pos.neighbor(d as usize), target), d, a)),
            _ => None,
        })
        .filter(|&(dist, _, _)| dist < here)
        .min_by_key(|&(dist, d, _)| (dist, d))
        .map(|(_, _, a)| a)
}

fn nearest_enemy(s: &GameState, unit: &Unit) -> Option<HexCoord> {
    s.faction_units(unit.faction.opponent()).min_by_key(|e| (distance(unit.pos, e.pos), e.id)).map(|e| e.pos)
}

fn nearest_objective(s: &GameState, from: HexCoord) -> Option<HexCoord> {
    s.board.objectives.iter().enumerate().min_by_key(|(i, o)| (distance(from, o.pos), *i)).map(|(_, o)| o.pos)
}

fn best_objective(s: &GameState) -> Option<HexCoord> {
    s.board.objectives.iter().enumerate().max_by_key(|(i, o)| (o.value, std::cmp::Reverse(*i))).map(|(_, o)| o.pos)
}

pub fn pass_policy(_s: &GameState, _unit: UnitId) -> Action {
    Action::Pass
}

/// Uniform over legal actions.
pub fn random_policy<R: Rng + ?Sized>(s: &GameState, unit: UnitId, rng: &mut R) -> Action {
    let legal = legal(s, unit);
    legal[rng.random_range(0..legal.len())]
}

pub fn greedy_attack_policy(s: &GameState, unit: UnitId) -> Action {
    let legal = legal(s, unit);
    let u = unit_of(s, unit);
    if let Some(a) = attack_weakest(s, u, &legal) {
        return a;
    }
    let target = nearest_enemy(s, u).or_else(|| best_objective(s));
    target.and_then(|t| step_toward(u, t, &legal)).unwrap_or(Action::Pass)
}

fn hold_at(s: &GameState, u: &Unit, objective: Option<HexCoord>, legal: &[Action]) -> Action {
    match objective {
        Some(o) if o == u.pos => attack_weakest(s, u, legal).unwrap_or(Action::Pass),
        Some(o) => step_toward(u, o, legal).unwrap_or(Action::Pass),
        None => Action::Pass,
    }
}

pub fn objective_hold_policy(s: &GameState, unit: UnitId) -> Action {
    let legal = legal(s, unit);
    let u = unit_of(s, unit);
    hold_at(s, u, nearest_objective(s, u.pos), &legal)
}

/// Radius around an attrition target inside which the unit fights greedily.
pub const ATTRIT_RADIUS: u32 = 4;

pub fn goal_seek_policy(s: &GameState, unit: UnitId, goal: &Subgoal) -> Action {
    let legal = legal(s, unit);
    let u = unit_of(s, unit);
    match goal.posture {
        Posture::Seize => {
            attack_weakest(s, u, &legal).or_else(|| step_toward(u, goal.target, &legal)).unwrap_or(Action::Pass)
        }
        Posture::Defend => hold_at(s, u, Some(goal.target), &legal),
        Posture::Attrit => {
            if distance(u.pos, goal.target) <= ATTRIT_RADIUS {
                greedy_attack_policy(s, unit)
            } else {
                step_toward(u, goal.target, &legal).unwrap_or(Action::Pass)
            }
        }
    }
}

/// Default standalone subgoal for the "goal" policy: seize the most valuable
/// objective, or attrit toward the nearest enemy on objective-free maps.
pub fn default_subgoal(s: &GameState, unit: UnitId) -> Subgoal {
    let u = unit_of(s, unit);
    match best_objective(s) {
        Some(o) => Subgoal::new(o, Posture::Seize),
        None => Subgoal::new(nearest_enemy(s, u).unwrap_or(u.pos), Posture::Attrit),
    }
}

#[derive(Debug)]
enum Kind {
    Pass,
    Random { seed: u64, rng: ChaCha8Rng },
    Greedy,
    Hold,
    Goal,
}

/// Scripted policies addressable by name.
#[derive(Debug)]
pub struct ScriptedPolicy {
    name: &'static str,
    kind: Kind,
}

impl ScriptedPolicy {
    pub fn pass() -> Self {
        Self { name: "pass", kind: Kind::Pass }
    }

    pub fn random(seed: u64) -> Self {
        Self { name: "random", kind: Kind::Random { seed, rng: ChaCha8Rng::seed_from_u64(seed) } }
    }

    pub fn greedy() -> Self {
        Self { name: "greedy", kind: Kind::Greedy }
    }

    pub fn hold() -> Self {
        Self { name: "hold", kind: Kind::Hold }
    }

    pub fn goal() -> Self {
        Self { name: "goal", kind: Kind::Goal }
    }
}

impl BehaviorModel for ScriptedPolicy {
    fn name(&self) -> &str {
        self.name
    }

    fn act(&mut self, s: &GameState, unit: UnitId) -> Result<Action> {
        if s.unit(unit).is_none() {
            return Err(Error::InvalidArgument(format!("unit {unit} does not exist or is destroyed")));
        }
        Ok(match &mut self.kind {
            Kind::Pass => pass_policy(s, unit),
            Kind::Random { rng, .. } => random_policy(s, unit, rng),
            Kind::Greedy => greedy_attack_policy(s, unit),
            Kind::Hold => objective_hold_policy(s, unit),
            Kind::Goal => goal_seek_policy(s, unit, &default_subgoal(s, unit)),
        })
    }

    fn begin_episode(&mut self, seed: u64) {
        if let Kind::Random { seed: base, rng } = &mut self.kind {
            *rng = ChaCha8Rng::seed_from_u64(crate::engine::derive_seed(seed, *base));
        }
    }

    fn is_deterministic(&self) -> bool {
        !matches!(self.kind, Kind::Random { .. })
    }
}

pub const SCRIPTED_NAMES: [&str; 5] = ["pass", "random", "greedy", "hold", "goal"];

/// Looks up a scripted policy by its CLI/config name.
pub fn named_policy(name: &str, seed: u64) -> Option<Box<dyn BehaviorModel>> {
    let p = match name {
        "pass" => ScriptedPolicy::pass(),
        "random" => ScriptedPolicy::random(seed),
        "greedy" => ScriptedPolicy::greedy(),
        "hold" => ScriptedPolicy::hold(),
        "goal" => ScriptedPolicy::goal(),
        _ => return None,
    };
    Some(Box::new(p))
}
