//! Commander / manager / unit decision hierarchy.
//!
//! A faction's units are partitioned into manager groups of three to five.
//! Every turn the commander assigns each manager an objective (or an
//! attrition target on objective-free maps) from the coarse global
//! abstraction. Managers turn assignments into per-unit subgoals that persist
//! for `horizon` turns or until satisfied. Only the unit level emits
//! primitive actions.

use std::collections::{BTreeMap, BTreeSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::behaviors::{default_subgoal, goal_seek_policy, BehaviorModel};
use crate::engine::{derive_seed, Action, DecisionTrace, Faction, GameState, Objective, Scenario, UnitId, RED_STREAM};
use crate::error::{Error, Result};
use crate::hexgrid::{distance, distance_f64, hex_round, ring, HexCoord};
use crate::learn::{
    linear_epsilon, Approximator, CurvePoint, ForwardCache, Gradients, ModelFile, ModelKind, Optimizer, OptimizerKind,
    CURVE_WINDOW,
};
use crate::observation::{encode_global, encode_region, EncoderParams, GlobalAbstraction, Region};

pub const DEFAULT_HORIZON: u32 = 4;
pub const MIN_GROUP: usize = 3;
pub const MAX_GROUP: usize = 5;
/// A unit farther than this from every open group's centroid seeds a new group.
pub const JOIN_RADIUS: f64 = 6.0;
/// Search radius for attrition targets of units not holding the objective.
pub const ENGAGE_RADIUS: u32 = 6;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Posture {
    Seize,
    Defend,
    Attrit,
}

/// Option-level directive for one unit.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Subgoal {
    pub target: HexCoord,
    pub posture: Posture,
    /// Persistence in turns.
    pub horizon: u32,
}

impl Subgoal {
    pub fn new(target: HexCoord, posture: Posture) -> Self {
        Self { target, posture, horizon: DEFAULT_HORIZON }
    }

    pub fn with_horizon(mut self, horizon: u32) -> Self {
        self.horizon = horizon;
        self
    }
}

/// Commander directive for one manager.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Assignment {
    pub target: HexCoord,
    pub posture: Posture,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActiveSubgoal {
    pub subgoal: Subgoal,
    pub issued_turn: u32,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ManagerAgent {
    pub id: usize,
    pub faction: Faction,
    /// Ascending unit ids.
    pub units: Vec<UnitId>,
    /// Remainder group left below `MIN_GROUP` because no merge fit.
    pub flagged: bool,
    pub assignment: Option<Assignment>,
    pub subgoals: BTreeMap<UnitId, ActiveSubgoal>,
}

impl ManagerAgent {
    /// Mean axial position of the group's living units.
    pub fn centroid(&self, s: &GameState) -> Option<(f64, f64)> {
        centroid(self.units.iter().filter_map(|&id| s.unit(id)).map(|u| u.pos))
    }

    pub fn living(&self, s: &GameState) -> Vec<UnitId> {
        self.units.iter().copied().filter(|&id| s.unit(id).is_some()).collect()
    }
}

fn centroid(cells: impl Iterator<Item = HexCoord>) -> Option<(f64, f64)> {
    let (mut q, mut r, mut n) = (0.0, 0.0, 0usize);
    for c in cells {
        q += c.q as f64;
        r += c.r as f64;
        n += 1;
    }
    (n > 0).then(|| (q / n as f64, r / n as f64))
}

fn as_point(c: HexCoord) -> (f64, f64) {
    (c.q as f64, c.r as f64)
}

fn min_by_distance<T>(items: impl Iterator<Item = (f64, usize, T)>) -> Option<(f64, usize, T)> {
    items.min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)))
}

/// Greedy spatial clustering of a faction's units into manager groups.
///
/// Units are visited by ascending id. A unit joins the nearest non-full group
/// whose centroid is within `JOIN_RADIUS`, otherwise it seeds a new group. A
/// final pass folds every group smaller than `MIN_GROUP` into the nearest group
/// that can absorb it whole; groups that still fall short are flagged.
pub fn partition_units(s: &GameState, faction: Faction) -> Vec<ManagerAgent> {
    let mut groups: Vec<Vec<(UnitId, HexCoord)>> = Vec::new();
    for u in s.faction_units(faction) {
        let nearest = min_by_distance(
            groups
                .iter()
                .enumerate()
                .filter(|(_, g)| g.len() < MAX_GROUP)
                .map(|(i, g)| (distance_f64(group_centroid(g), as_point(u.pos)), i, ())),
        );
        match nearest {
            Some((d, i, _)) if d <= JOIN_RADIUS => groups[i].push((u.id, u.pos)),
            _ => groups.push(vec![(u.id, u.pos)]),
        }
    }
    merge_small_groups(&mut groups);
    groups
        .into_iter()
        .enumerate()
        .map(|(id, g)| {
            let mut units: Vec<UnitId> = g.iter().map(|&(id, _)| id).collect();
            units.sort_unstable();
            ManagerAgent {
                id,
                faction,
                flagged: units.len() < MIN_GROUP,
                units,
                assignment: None,
                subgoals: BTreeMap::new(),
            }
        })
        .collect()
}

fn group_centroid(g: &[(UnitId, HexCoord)]) -> (f64, f64) {
    centroid(g.iter().map(|&(_, p)| p)).expect("groups are non-empty")
}

fn merge_small_groups(groups: &mut Vec<Vec<(UnitId, HexCoord)>>) {
    'scan: loop {
        for i in 0..groups.len() {
            if groups[i].len() >= MIN_GROUP {
                continue;
            }
            let c = group_centroid(&groups[i]);
            let target = min_by_distance(
                groups
                    .iter()
                    .enumerate()
                    .filter(|&(j, g)| j != i && g.len() + groups[i].len() <= MAX_GROUP)
                    .map(|(j, g)| (distance_f64(group_centroid(g), c), j, ())),
            );
            if let Some((_, j, _)) = target {
                let moved = groups.remove(i);
                let j = if j > i { j - 1 } else { j };
                groups[j].extend(moved);
                continue 'scan;
            }
        }
        return;
    }
}

/// What the commander knows about its managers and the map.
#[derive(Clone, Debug, PartialEq)]
pub struct CommanderAgent {
    pub faction: Faction,
    /// `(manager id, centroid)` for every manager with living units.
    pub managers: Vec<(usize, (f64, f64))>,
    pub objectives: Vec<Objective>,
    pub assignment: BTreeMap<usize, Assignment>,
}

impl CommanderAgent {
    pub fn new(faction: Faction, s: &GameState, managers: &[ManagerAgent]) -> Self {
        let mut c =
            Self { faction, managers: Vec::new(), objectives: s.board.objectives.clone(), assignment: BTreeMap::new() };
        c.observe(s, managers);
        c
    }

    pub fn observe(&mut self, s: &GameState, managers: &[ManagerAgent]) {
        self.managers = managers.iter().filter_map(|m| Some((m.id, m.centroid(s)?))).collect();
    }
}

/// Commander priority of an objective: its value minus half the strength
/// (in hundreds) of the enemy super-cell nearest to it.
pub fn objective_priority(o: &Objective, g: &GlobalAbstraction, faction: Faction) -> f64 {
    let enemy = g.strength(faction.opponent());
    let nearest = min_by_distance(
        enemy
            .iter()
            .enumerate()
            .filter(|&(_, &v)| v > 0.0)
            .map(|(i, &v)| (distance_f64(g.super_cell_center(i), as_point(o.pos)), i, v)),
    );
    o.value as f64 - 0.5 * nearest.map_or(0.0, |(_, _, v)| v)
}

/// Objective indices, highest priority first; ties keep scenario order.
pub fn rank_objectives(objectives: &[Objective], g: &GlobalAbstraction, faction: Faction) -> Vec<usize> {
    let scores: Vec<f64> = objectives.iter().map(|o| objective_priority(o, g, faction)).collect();
    let mut idx: Vec<usize> = (0..objectives.len()).collect();
    idx.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    idx
}

/// Strength-weighted center of the enemy super-cells, snapped to a hex in
/// the abstraction's region.
pub fn enemy_mass_center(g: &GlobalAbstraction, faction: Faction) -> Option<HexCoord> {
    let enemy = g.strength(faction.opponent());
    let total: f64 = enemy.iter().sum();
    if total <= 0.0 {
        return None;
    }
    let (mut q, mut r) = (0.0, 0.0);
    for (i, &v) in enemy.iter().enumerate() {
        let (cq, cr) = g.super_cell_center(i);
        q += v * cq;
        r += v * cr;
    }
    Some(clamp_to_region(hex_round(q / total, r / total), &g.region))
}

fn clamp_to_region(c: HexCoord, region: &Region) -> HexCoord {
    HexCoord::new(
        c.q.clamp(region.q0, region.q0 + region.width as i32 - 1),
        c.r.clamp(region.r0, region.r0 + region.height as i32 - 1),
    )
}

/// Scripted commander rule.
///
/// Objectives are ranked by `objective_priority`. Managers are paired with
/// the top-ranked objectives one-to-one, closest pair first (ties: lowest
/// manager id, then lowest objective index); with more managers than
/// objectives the pairing repeats over the leftover managers. Without
/// objectives every manager attrits toward the enemy mass center.
pub fn commander_decide(c: &CommanderAgent, g: &GlobalAbstraction) -> BTreeMap<usize, Assignment> {
    let mut out = BTreeMap::new();
    if c.objectives.is_empty() {
        let center = enemy_mass_center(g, c.faction);
        for &(id, cen) in &c.managers {
            let target = center.unwrap_or_else(|| clamp_to_region(hex_round(cen.0, cen.1), &g.region));
            out.insert(id, Assignment { target, posture: Posture::Attrit });
        }
        return out;
    }
    let ranked = rank_objectives(&c.objectives, g, c.faction);
    let mut pending: Vec<(usize, (f64, f64))> = c.managers.clone();
    while !pending.is_empty() {
        let top = &ranked[..ranked.len().min(pending.len())];
        let mut pairs: Vec<(f64, usize, usize)> = Vec::with_capacity(pending.len() * top.len());
        for &(id, cen) in &pending {
            for &oi in top {
                pairs.push((distance_f64(cen, as_point(c.objectives[oi].pos)), id, oi));
            }
        }
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
        let mut taken = BTreeSet::new();
        for (_, id, oi) in pairs {
            if out.contains_key(&id) || taken.contains(&oi) {
                continue;
            }
            out.insert(id, Assignment { target: c.objectives[oi].pos, posture: Posture::Seize });
            taken.insert(oi);
        }
        pending.retain(|(id, _)| !out.contains_key(id));
    }
    out
}

/// Commander decision hook.
pub trait CommanderPolicy: Send {
    fn decide(&mut self, c: &CommanderAgent, g: &GlobalAbstraction) -> Result<BTreeMap<usize, Assignment>>;
}

#[derive(Clone, Copy, Debug, Default)]
pub struct ScriptedCommander;

impl CommanderPolicy for ScriptedCommander {
    fn decide(&mut self, c: &CommanderAgent, g: &GlobalAbstraction) -> Result<BTreeMap<usize, Assignment>> {
        Ok(commander_decide(c, g))
    }
}

/// Scripted manager rule.
///
/// An objective not held by the manager's faction is seized by every unit.
/// Once held, the holder defends it; each other unit attrits the nearest
/// enemy within `ENGAGE_RADIUS`, or else seizes a distinct hex adjacent to
/// the objective in ring order. Attrit and defend assignments are passed
/// through unchanged.
pub fn manager_decide(mgr: &ManagerAgent, s: &GameState, horizon: u32) -> BTreeMap<UnitId, Subgoal> {
    let living = mgr.living(s);
    let Some(a) = mgr.assignment else {
        return living.into_iter().map(|id| (id, default_subgoal(s, id).with_horizon(horizon))).collect();
    };
    let goal = |target, posture| Subgoal { target, posture, horizon };
    if a.posture != Posture::Seize {
        return living.into_iter().map(|id| (id, goal(a.target, a.posture))).collect();
    }
    let held = s.unit_at(a.target).is_some_and(|u| u.faction == mgr.faction);
    if !held {
        return living.into_iter().map(|id| (id, goal(a.target, Posture::Seize))).collect();
    }
    let mut free =
        ring(a.target, 1).expect("radius 1").into_iter().filter(|&c| s.board.terrain(c).is_some_and(|t| t.passable()));
    let mut out = BTreeMap::new();
    for id in living {
        let u = s.unit(id).expect("living unit");
        let sg = if u.pos == a.target {
            goal(a.target, Posture::Defend)
        } else if let Some(e) = s
            .faction_units(mgr.faction.opponent())
            .filter(|e| distance(u.pos, e.pos) <= ENGAGE_RADIUS)
            .min_by_key(|e| (distance(u.pos, e.pos), e.id))
        {
            goal(e.pos, Posture::Attrit)
        } else if let Some(c) = free.next() {
            goal(c, Posture::Seize)
        } else {
            goal(a.target, Posture::Defend)
        };
        out.insert(id, sg);
    }
    out
}

/// Manager decision hook: subgoals for (a superset of) the group's living units.
pub trait ManagerPolicy: Send {
    fn decide(&mut self, mgr: &ManagerAgent, s: &GameState) -> Result<BTreeMap<UnitId, Subgoal>>;
}

#[derive(Clone, Copy, Debug)]
pub struct ScriptedManager {
    pub horizon: u32,
}

impl Default for ScriptedManager {
    fn default() -> Self {
        Self { horizon: DEFAULT_HORIZON }
    }
}

impl ManagerPolicy for ScriptedManager {
    fn decide(&mut self, mgr: &ManagerAgent, s: &GameState) -> Result<BTreeMap<UnitId, Subgoal>> {
        Ok(manager_decide(mgr, s, self.horizon))
    }
}

/// Goal-conditioned unit-level policy. The only level that emits actions.
pub trait UnitPolicy: Send {
    fn name(&self) -> &str;
    fn act(&mut self, s: &GameState, unit: UnitId, goal: &Subgoal) -> Result<Action>;
}

#[derive(Clone, Copy, Debug, Default)]
pub struct GoalSeek;

impl UnitPolicy for GoalSeek {
    fn name(&self) -> &str {
        "goal_seek"
    }

    fn act(&mut self, s: &GameState, unit: UnitId, goal: &Subgoal) -> Result<Action> {
        Ok(goal_seek_policy(s, unit, goal))
    }
}

/// Seize: the unit stands on the target. Attrit: no enemy remains on the
/// target hex. Defend is never satisfied early. A destroyed unit counts as done.
pub fn subgoal_satisfied(s: &GameState, unit: UnitId, goal: &Subgoal) -> bool {
    let Some(u) = s.unit(unit) else { return true };
    match goal.posture {
        Posture::Seize => u.pos == goal.target,
        Posture::Attrit => !s.unit_at(goal.target).is_some_and(|e| e.faction != u.faction),
        Posture::Defend => false,
    }
}

/// Whether `unit` may receive a new subgoal in state `s`.
pub fn at_boundary(s: &GameState, unit: UnitId, active: Option<&ActiveSubgoal>) -> bool {
    match active {
        None => true,
        Some(a) => s.turn >= a.issued_turn + a.subgoal.horizon || subgoal_satisfied(s, unit, &a.subgoal),
    }
}

/// Three-level policy: commander, managers, goal-conditioned units.
pub struct HierarchicalPolicy {
    name: String,
    grid: u32,
    horizon: u32,
    commander_policy: Box<dyn CommanderPolicy>,
    manager_policy: Box<dyn ManagerPolicy>,
    unit_policy: Box<dyn UnitPolicy>,
    commander: Option<CommanderAgent>,
    managers: Vec<ManagerAgent>,
    turn: Option<u32>,
    trace: Option<DecisionTrace>,
}

impl HierarchicalPolicy {
    /// Scripted commander and managers over `goal_seek_policy`.
    pub fn scripted() -> Self {
        Self {
            name: "hierarchy".into(),
            grid: EncoderParams::default().grid,
            horizon: DEFAULT_HORIZON,
            commander_policy: Box::new(ScriptedCommander),
            manager_policy: Box::new(ScriptedManager::default()),
            unit_policy: Box::new(GoalSeek),
            commander: None,
            managers: Vec::new(),
            turn: None,
            trace: None,
        }
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    pub fn with_horizon(mut self, horizon: u32) -> Self {
        self.horizon = horizon.max(1);
        self.manager_policy = Box::new(ScriptedManager { horizon: self.horizon });
        self
    }

    pub fn with_commander_policy(mut self, p: Box<dyn CommanderPolicy>) -> Self {
        self.commander_policy = p;
        self
    }

    pub fn with_manager_policy(mut self, p: Box<dyn ManagerPolicy>) -> Self {
        self.manager_policy = p;
        self
    }

    pub fn with_unit_policy(mut self, p: Box<dyn UnitPolicy>) -> Self {
        self.unit_policy = p;
        self
    }

    pub fn managers(&self) -> &[ManagerAgent] {
        &self.managers
    }

    pub fn commander(&self) -> Option<&CommanderAgent> {
        self.commander.as_ref()
    }

    pub fn current_subgoal(&self, unit: UnitId) -> Option<&ActiveSubgoal> {
        self.managers.iter().find_map(|m| m.subgoals.get(&unit))
    }

    pub fn reset(&mut self) {
        self.commander = None;
        self.managers.clear();
        self.turn = None;
        self.trace = None;
    }

    fn ensure_initialized(&mut self, s: &GameState, faction: Faction) {
        let stale = match (&self.commander, self.turn) {
            (Some(c), Some(t)) => c.faction != faction || s.turn < t,
            _ => true,
        };
        if stale {
            self.reset();
            self.managers = partition_units(s, faction);
            self.commander = Some(CommanderAgent::new(faction, s, &self.managers));
        }
    }

    fn refresh_commander(&mut self, s: &GameState) -> Result<()> {
        for m in &mut self.managers {
            m.units.retain(|&id| s.unit(id).is_some());
            m.subgoals.retain(|id, _| s.unit(*id).is_some());
        }
        self.managers.retain(|m| !m.units.is_empty());
        let commander = self.commander.as_mut().expect("initialized");
        commander.observe(s, &self.managers);
        let assignment = self.commander_policy.decide(commander, &encode_global(s, self.grid))?;
        for m in &mut self.managers {
            let a = assignment.get(&m.id).copied().ok_or_else(|| Error::ModelFault {
                model: self.name.clone(),
                msg: format!("commander left manager {} unassigned", m.id),
            })?;
            m.assignment = Some(a);
        }
        commander.assignment = assignment;
        Ok(())
    }

    fn group_index(&mut self, s: &GameState, unit: UnitId) -> usize {
        if let Some(i) = self.managers.iter().position(|m| m.units.contains(&unit)) {
            return i;
        }
        let pos = as_point(s.unit(unit).expect("living unit").pos);
        let nearest = min_by_distance(
            self.managers.iter().enumerate().filter_map(|(i, m)| Some((distance_f64(m.centroid(s)?, pos), i, ()))),
        );
        let i = match nearest {
            Some((_, i, _)) => i,
            None => {
                let id = self.managers.iter().map(|m| m.id + 1).max().unwrap_or(0);
                let faction = s.unit(unit).expect("living unit").faction;
                self.managers.push(ManagerAgent {
                    id,
                    faction,
                    units: Vec::new(),
                    flagged: true,
                    assignment: None,
                    subgoals: BTreeMap::new(),
                });
                self.managers.len() - 1
            }
        };
        log::warn!("unit {unit} was not in any group; assigned to manager {}", self.managers[i].id);
        let m = &mut self.managers[i];
        m.units.push(unit);
        m.units.sort_unstable();
        i
    }
}

impl BehaviorModel for HierarchicalPolicy {
    fn name(&self) -> &str {
        &self.name
    }

    fn act(&mut self, s: &GameState, unit: UnitId) -> Result<Action> {
        let faction = s
            .unit(unit)
            .ok_or_else(|| Error::InvalidArgument(format!("unit {unit} does not exist or is destroyed")))?
            .faction;
        self.ensure_initialized(s, faction);
        if self.turn != Some(s.turn) {
            self.refresh_commander(s)?;
            self.turn = Some(s.turn);
        }
        let gi = self.group_index(s, unit);
        let mgr = &mut self.managers[gi];
        if at_boundary(s, unit, mgr.subgoals.get(&unit)) {
            let fresh = self.manager_policy.decide(mgr, s)?;
            let goal = fresh.get(&unit).copied().unwrap_or_else(|| default_subgoal(s, unit).with_horizon(self.horizon));
            if goal.horizon == 0 || !s.board.in_bounds(goal.target) {
                return Err(Error::ModelFault {
                    model: self.name.clone(),
                    msg: format!("manager {} issued invalid subgoal {goal:?}", mgr.id),
                });
            }
            mgr.subgoals.insert(unit, ActiveSubgoal { subgoal: goal, issued_turn: s.turn });
        }
        let active = mgr.subgoals[&unit];
        let action = self.unit_policy.act(s, unit, &active.subgoal)?;
        if !s.is_legal(unit, action) {
            return Err(Error::ModelFault {
                model: self.unit_policy.name().to_string(),
                msg: format!("illegal action {action} for unit {unit}"),
            });
        }
        let assignment =
            mgr.assignment.unwrap_or(Assignment { target: active.subgoal.target, posture: active.subgoal.posture });
        self.trace = Some(DecisionTrace::Hierarchy {
            manager: mgr.id,
            assignment,
            subgoal: active.subgoal,
            issued_turn: active.issued_turn,
        });
        Ok(action)
    }

    fn begin_episode(&mut self, _seed: u64) {
        self.reset();
    }

    fn take_trace(&mut self) -> Option<DecisionTrace> {
        self.trace.take()
    }
}

/// One manager action: every unit in the group pursues `target` with `posture`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct OptionTemplate {
    pub target: HexCoord,
    pub posture: Posture,
}

/// Seize, defend, and attrit for every objective, in scenario order.
pub fn option_templates(objectives: &[Objective]) -> Vec<OptionTemplate> {
    objectives
        .iter()
        .flat_map(|o| {
            [Posture::Seize, Posture::Defend, Posture::Attrit].map(|posture| OptionTemplate { target: o.pos, posture })
        })
        .collect()
}

/// Margin added around a group's bounding box for its regional abstraction.
pub const REGION_MARGIN: i32 = 2;

pub fn group_region(s: &GameState, units: &[UnitId]) -> Region {
    let cells: Vec<HexCoord> = units.iter().filter_map(|&id| s.unit(id)).map(|u| u.pos).collect();
    let (w, h) = (s.board.width as i32, s.board.height as i32);
    if cells.is_empty() {
        return Region { q0: 0, r0: 0, width: w as u32, height: h as u32 };
    }
    let q0 = (cells.iter().map(|c| c.q).min().unwrap() - REGION_MARGIN).max(0);
    let r0 = (cells.iter().map(|c| c.r).min().unwrap() - REGION_MARGIN).max(0);
    let q1 = (cells.iter().map(|c| c.q).max().unwrap() + REGION_MARGIN).min(w - 1);
    let r1 = (cells.iter().map(|c| c.r).max().unwrap() + REGION_MARGIN).min(h - 1);
    Region { q0, r0, width: (q1 - q0 + 1) as u32, height: (r1 - r0 + 1) as u32 }
}

pub fn manager_input_len(grid: u32) -> usize {
    4 * (grid * grid) as usize + 1 + 2
}

/// Regional abstraction around the group plus group strength (hundreds) and
/// living-unit count as a fraction of `MAX_GROUP`.
pub fn manager_features(s: &GameState, units: &[UnitId], grid: u32) -> Vec<f64> {
    let mut x = encode_region(s, grid, group_region(s, units)).values;
    let living: Vec<_> = units.iter().filter_map(|&id| s.unit(id)).collect();
    x.push(living.iter().map(|u| u.strength as f64).sum::<f64>() / 100.0);
    x.push(living.len() as f64 / MAX_GROUP as f64);
    x
}

/// Manager policy learned by option-level Q-learning.
#[derive(Clone, Debug, PartialEq)]
pub struct LearnedManager {
    pub net: Approximator,
    pub templates: Vec<OptionTemplate>,
    pub grid: u32,
    pub horizon: u32,
}

impl LearnedManager {
    pub fn option_values(&self, s: &GameState, units: &[UnitId]) -> Result<Vec<f64>> {
        self.net.forward(&manager_features(s, units, self.grid))
    }

    /// Greedy template index; ties go to the lowest index.
    pub fn choose(&self, s: &GameState, units: &[UnitId]) -> Result<usize> {
        Ok(argmax(&self.option_values(s, units)?))
    }

    pub fn to_model_file(&self) -> ModelFile {
        let encoder = EncoderParams { grid: self.grid, ..EncoderParams::default() };
        ModelFile::new(
            ModelKind::Manager { templates: self.templates.clone(), horizon: self.horizon },
            &self.net,
            encoder,
        )
    }

    pub fn from_model_file(f: ModelFile) -> Result<Self> {
        let net = f.network()?;
        match f.model {
            ModelKind::Manager { templates, horizon } => {
                let expected = manager_input_len(f.encoder.grid);
                if net.input_len() != expected || net.output_len() != templates.len() || horizon == 0 {
                    return Err(Error::Shape { expected, got: net.input_len() });
                }
                Ok(Self { net, templates, grid: f.encoder.grid, horizon })
            }
            _ => Err(Error::Format("not a manager model file".into())),
        }
    }
}

impl ManagerPolicy for LearnedManager {
    fn decide(&mut self, mgr: &ManagerAgent, s: &GameState) -> Result<BTreeMap<UnitId, Subgoal>> {
        let living = mgr.living(s);
        let t = self.templates[self.choose(s, &living)?];
        Ok(living
            .into_iter()
            .map(|id| (id, Subgoal { target: t.target, posture: t.posture, horizon: self.horizon }))
            .collect())
    }
}

fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ManagerTrainConfig {
    pub episodes: u64,
    pub horizon: u32,
    pub gamma: f64,
    pub lr: f64,
    pub optimizer: OptimizerKind,
    pub hidden: Vec<usize>,
    pub grid: u32,
    pub epsilon_start: f64,
    pub epsilon_end: f64,
    pub epsilon_decay_episodes: u64,
    /// Multiplies option rewards before they enter Q-targets.
    pub reward_scale: f64,
    pub seed: u64,
    pub learner: Faction,
    /// Cap on the number of option records returned.
    pub max_option_records: usize,
}

impl Default for ManagerTrainConfig {
    fn default() -> Self {
        Self {
            episodes: 300,
            horizon: DEFAULT_HORIZON,
            gamma: 0.95,
            lr: 1e-2,
            optimizer: OptimizerKind::Adam,
            hidden: vec![32],
            grid: 4,
            epsilon_start: 1.0,
            epsilon_end: 0.05,
            epsilon_decay_episodes: 200,
            reward_scale: 0.1,
            seed: 0,
            learner: Faction::Blue,
            max_option_records: 10_000,
        }
    }
}

impl ManagerTrainConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.horizon >= 1
            && (0.0..=1.0).contains(&self.gamma)
            && self.lr > 0.0
            && self.grid >= 1
            && self.reward_scale > 0.0
            && (0.0..=1.0).contains(&self.epsilon_start)
            && (0.0..=1.0).contains(&self.epsilon_end);
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!("bad manager training config: {self:?}")))
        }
    }
}

/// Bookkeeping for one executed option.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OptionRecord {
    pub episode: u64,
    pub manager: usize,
    pub template: usize,
    pub start_turn: u32,
    pub end_turn: u32,
    /// Learner-signed score at option start and end.
    pub score_before: i64,
    pub score_after: i64,
    /// `(turn, learner-signed reward)` for every engine step inside the option.
    pub step_rewards: Vec<(u32, i64)>,
    /// `sum gamma^(turn - start_turn) * reward` over `step_rewards`.
    pub reward: f64,
}

/// SMDP target: `reward + gamma^tau * next_max`, without bootstrap at terminal.
pub fn smdp_target(reward: f64, gamma: f64, tau: u32, next_max: Option<f64>) -> f64 {
    reward + next_max.map_or(0.0, |v| gamma.powi(tau as i32) * v)
}

pub struct ManagerTrainOutcome {
    pub policy: LearnedManager,
    pub options: Vec<OptionRecord>,
    pub curve: Vec<CurvePoint>,
    pub updates: u64,
}

struct RunningOption {
    features: Vec<f64>,
    record: OptionRecord,
}

/// Semi-Markov Q-learning over option templates with a frozen unit level.
///
/// Every manager group of the learner picks a template at the start of its
/// faction's phase once its previous option has run for `horizon` turns. The
/// option's reward is the per-turn discounted score change while it ran.
pub fn train_manager_options(
    scenario: &Scenario,
    unit_policy: &mut dyn UnitPolicy,
    adversary: &mut dyn BehaviorModel,
    cfg: &ManagerTrainConfig,
) -> Result<ManagerTrainOutcome> {
    cfg.validate()?;
    let templates = option_templates(&GameState::new(scenario, 0).board.objectives);
    if templates.is_empty() {
        return Err(Error::InvalidArgument("option templates need at least one objective".into()));
    }
    let learner = cfg.learner;
    let sign = learner.sign();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut sizes = vec![manager_input_len(cfg.grid)];
    sizes.extend(&cfg.hidden);
    sizes.push(templates.len());
    let mut net = Approximator::random(&sizes, &mut rng)?;
    let mut opt = Optimizer::new(cfg.optimizer, cfg.lr, &net);
    let mut cache = ForwardCache::default();
    let mut grads = Gradients::zeros_like(&net);
    let mut options = Vec::new();
    let mut curve = Vec::new();
    let mut window = Vec::with_capacity(CURVE_WINDOW as usize);
    let mut updates = 0u64;

    for ep in 0..cfg.episodes {
        let seed = derive_seed(cfg.seed, ep);
        let mut s = GameState::new(scenario, seed);
        adversary.begin_episode(derive_seed(seed, RED_STREAM));
        let groups: Vec<Vec<UnitId>> = partition_units(&s, learner).into_iter().map(|m| m.units).collect();
        let mut running: Vec<Option<RunningOption>> = (0..groups.len()).map(|_| None).collect();
        let eps = linear_epsilon(cfg.epsilon_start, cfg.epsilon_end, cfg.epsilon_decay_episodes, ep);
        let mut checked_turn = None;

        while let Some(unit) = s.unit_on_move() {
            if s.phase == learner && checked_turn != Some(s.turn) {
                checked_turn = Some(s.turn);
                for (gi, slot) in running.iter_mut().enumerate() {
                    let due = slot.as_ref().is_none_or(|o| s.turn >= o.record.start_turn + cfg.horizon);
                    if !due {
                        continue;
                    }
                    let alive = groups[gi].iter().any(|&id| s.unit(id).is_some());
                    if let Some(done) = slot.take() {
                        let next = alive.then(|| manager_features(&s, &groups[gi], cfg.grid));
                        finish_option(
                            done,
                            &s,
                            sign,
                            next,
                            cfg,
                            &mut net,
                            &mut opt,
                            &mut cache,
                            &mut grads,
                            &mut options,
                            ep,
                        )?;
                        updates += 1;
                    }
                    if alive {
                        let features = manager_features(&s, &groups[gi], cfg.grid);
                        let template = if rng.random::<f64>() < eps {
                            rng.random_range(0..templates.len())
                        } else {
                            argmax(&net.forward(&features)?)
                        };
                        *slot = Some(RunningOption {
                            features,
                            record: OptionRecord {
                                episode: ep,
                                manager: gi,
                                template,
                                start_turn: s.turn,
                                end_turn: s.turn,
                                score_before: sign * s.score,
                                score_after: sign * s.score,
                                step_rewards: Vec::new(),
                                reward: 0.0,
                            },
                        });
                    }
                }
            }

            let action = if s.phase == learner {
                let gi = groups.iter().position(|g| g.contains(&unit)).expect("partition covers the learner");
                let t =
                    templates[running[gi].as_ref().expect("group with a living unit has an option").record.template];
                let goal = Subgoal { target: t.target, posture: t.posture, horizon: cfg.horizon };
                let a = unit_policy.act(&s, unit, &goal)?;
                if !s.is_legal(unit, a) {
                    return Err(Error::ModelFault {
                        model: unit_policy.name().to_string(),
                        msg: format!("illegal action {a} for unit {unit}"),
                    });
                }
                a
            } else {
                adversary.act(&s, unit)?
            };
            let turn = s.turn;
            let out = s.apply(unit, action)?;
            for o in running.iter_mut().flatten() {
                let r = sign * out.reward;
                o.record.step_rewards.push((turn, r));
                o.record.reward += cfg.gamma.powi((turn - o.record.start_turn) as i32) * r as f64;
            }
        }
        for slot in &mut running {
            if let Some(done) = slot.take() {
                finish_option(done, &s, sign, None, cfg, &mut net, &mut opt, &mut cache, &mut grads, &mut options, ep)?;
                updates += 1;
            }
        }
        window.push((sign * s.score) as f64);
        if window.len() as u64 == CURVE_WINDOW {
            curve.push(CurvePoint {
                episode_window: ep + 1,
                mean_score: window.iter().sum::<f64>() / window.len() as f64,
            });
            window.clear();
        }
    }
    let policy = LearnedManager { net, templates, grid: cfg.grid, horizon: cfg.horizon };
    Ok(ManagerTrainOutcome { policy, options, curve, updates })
}

#[allow(clippy::too_many_arguments)]
fn finish_option(
    mut done: RunningOption,
    s: &GameState,
    sign: i64,
    next: Option<Vec<f64>>,
    cfg: &ManagerTrainConfig,
    net: &mut Approximator,
    opt: &mut Optimizer,
    cache: &mut ForwardCache,
    grads: &mut Gradients,
    options: &mut Vec<OptionRecord>,
    episode: u64,
) -> Result<()> {
    done.record.end_turn = s.turn;
    done.record.score_after = sign * s.score;
    let tau = (s.turn - done.record.start_turn).max(1);
    let next_max = match next {
        Some(x) => Some(net.forward(&x)?.iter().copied().fold(f64::NEG_INFINITY, f64::max)),
        None => None,
    };
    let target = smdp_target(cfg.reward_scale * done.record.reward, cfg.gamma, tau, next_max);
    net.forward_cached(&done.features, cache)?;
    let mut upstream = vec![0.0; net.output_len()];
    upstream[done.record.template] = 2.0 * (cache.output()[done.record.template] - target);
    grads.clear();
    net.accumulate_gradient(cache, &upstream, grads)?;
    opt.step(net, grads);
    if !net.is_finite() {
        return Err(Error::Divergence(format!("non-finite manager parameters in episode {episode}")));
    }
    if options.len() < cfg.max_option_records {
        options.push(done.record);
    }
    Ok(())
}
