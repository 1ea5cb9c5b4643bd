//! Board-size-independent state encodings.
//!
//! The local encoding is an exact multi-channel window of radius `R` around
//! the unit on move. Anything farther away, up to the horizon `D0`, is scaled
//! by a piecewise-linear decay weight and added into the window's outer ring
//! cell nearest to it. Hexes beyond the board edge read as impassable terrain,
//! both inside the window and in the decayed far field, so the encoding of a
//! neighborhood does not depend on how large the board around it is.
//!
//! The global abstraction sums the board into a fixed `G x G` grid of
//! super-cells for commanders and score predictors.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::engine::{Faction, GameState, Unit, UnitId};
use crate::error::{Error, Result};
use crate::hexgrid::{disk, disk_size, distance, HexCoord, RadialTable};

pub const NUM_CHANNELS: usize = 6;
pub const NUM_SCALARS: usize = 2;
/// Upper bound applied to every encoded value after accumulation.
pub const VALUE_CAP: f64 = 4.0;

pub const CH_FRIENDLY: usize = 0;
pub const CH_ENEMY: usize = 1;
pub const CH_OBJECTIVE: usize = 2;
pub const CH_MOVE_COST: usize = 3;
pub const CH_DEFENSE: usize = 4;
pub const CH_SUBGOAL: usize = 5;

/// Piecewise-linear spatial decay: 1 inside `radius`, 0 from `horizon` on.
pub fn decay_weight(d: u32, radius: u32, horizon: u32) -> Result<f64> {
    if radius >= horizon {
        return Err(Error::InvalidArgument(format!("decay needs radius {radius} < horizon {horizon}")));
    }
    Ok(decay_unchecked(d, radius, horizon))
}

fn decay_unchecked(d: u32, radius: u32, horizon: u32) -> f64 {
    if d <= radius {
        1.0
    } else if d >= horizon {
        0.0
    } else {
        (horizon - d) as f64 / (horizon - radius) as f64
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncoderParams {
    pub radius: u32,
    pub horizon: u32,
    pub grid: u32,
}

impl Default for EncoderParams {
    fn default() -> Self {
        Self { radius: 3, horizon: 12, grid: 4 }
    }
}

impl EncoderParams {
    pub fn validate(&self) -> Result<()> {
        if self.radius < 1 || self.radius >= self.horizon {
            return Err(Error::InvalidArgument(format!(
                "encoder needs 1 <= radius < horizon, got radius {} horizon {}",
                self.radius, self.horizon
            )));
        }
        if self.grid < 1 {
            return Err(Error::InvalidArgument("global grid must be at least 1".into()));
        }
        Ok(())
    }

    pub fn local_len(&self) -> usize {
        local_len(self.radius)
    }

    pub fn global_len(&self) -> usize {
        4 * (self.grid * self.grid) as usize + 1
    }
}

pub fn local_len(radius: u32) -> usize {
    NUM_CHANNELS * disk_size(radius) + NUM_SCALARS
}

/// Flat local observation: `NUM_CHANNELS` blocks of disk cells (canonical
/// disk order), followed by own strength and turn fraction.
#[derive(Clone, Debug, PartialEq)]
pub struct ObservationVector {
    pub radius: u32,
    pub values: Vec<f64>,
}

impl ObservationVector {
    pub fn cells_per_channel(&self) -> usize {
        disk_size(self.radius)
    }

    pub fn channel(&self, ch: usize) -> &[f64] {
        let n = self.cells_per_channel();
        &self.values[ch * n..(ch + 1) * n]
    }

    pub fn scalars(&self) -> &[f64] {
        &self.values[NUM_CHANNELS * self.cells_per_channel()..]
    }
}

struct FarCell {
    offset: HexCoord,
    weight: f64,
    /// Slot within one channel block (disk index of the target ring cell).
    slot: usize,
}

/// Local encoder with far-field lookup tables precomputed for `(R, D0)`.
pub struct LocalEncoder {
    radius: u32,
    horizon: u32,
    window: Vec<HexCoord>,
    far: Vec<FarCell>,
}

impl LocalEncoder {
    pub fn new(radius: u32, horizon: u32) -> Result<Self> {
        EncoderParams { radius, horizon, grid: 1 }.validate()?;
        let window = disk(HexCoord::ORIGIN, radius);
        let table = RadialTable::new(radius);
        let ring_start = disk_size(radius - 1);
        let far = disk(HexCoord::ORIGIN, horizon - 1)
            .into_iter()
            .filter(|&c| distance(HexCoord::ORIGIN, c) > radius)
            .map(|offset| FarCell {
                offset,
                weight: decay_unchecked(distance(HexCoord::ORIGIN, offset), radius, horizon),
                slot: ring_start + table.index_for(offset),
            })
            .collect();
        Ok(Self { radius, horizon, window, far })
    }

    pub fn radius(&self) -> u32 {
        self.radius
    }

    pub fn horizon(&self) -> u32 {
        self.horizon
    }

    pub fn len(&self) -> usize {
        local_len(self.radius)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Encoding before the final clamp.
    pub fn encode_unclamped(
        &self,
        s: &GameState,
        unit: UnitId,
        subgoal: Option<HexCoord>,
    ) -> Result<ObservationVector> {
        let me = s
            .unit(unit)
            .ok_or_else(|| Error::InvalidArgument(format!("unit {unit} does not exist or is destroyed")))?;
        let ctx = CellContext::new(s, me.faction, subgoal);
        let n = self.window.len();
        let mut values = vec![0.0; local_len(self.radius)];

        for (slot, &off) in self.window.iter().enumerate() {
            let v = ctx.values(me.pos + off);
            for ch in 0..NUM_CHANNELS {
                values[ch * n + slot] = v[ch];
            }
        }
        for far in &self.far {
            let v = ctx.values(me.pos + far.offset);
            for ch in 0..NUM_CHANNELS {
                if v[ch] != 0.0 {
                    values[ch * n + far.slot] += far.weight * v[ch];
                }
            }
        }
        values[NUM_CHANNELS * n] = me.strength as f64 / 100.0;
        values[NUM_CHANNELS * n + 1] = s.turn as f64 / s.max_turns as f64;
        Ok(ObservationVector { radius: self.radius, values })
    }

    pub fn encode(&self, s: &GameState, unit: UnitId, subgoal: Option<HexCoord>) -> Result<ObservationVector> {
        let mut obs = self.encode_unclamped(s, unit, subgoal)?;
        for v in &mut obs.values {
            *v = v.clamp(0.0, VALUE_CAP);
        }
        Ok(obs)
    }
}

/// One-shot convenience wrapper around [`LocalEncoder`].
pub fn encode_local(s: &GameState, unit: UnitId, radius: u32, horizon: u32) -> Result<ObservationVector> {
    LocalEncoder::new(radius, horizon)?.encode(s, unit, None)
}

/// Per-hex channel values from one faction's point of view.
pub(crate) struct CellContext<'a> {
    s: &'a GameState,
    units: HashMap<HexCoord, &'a Unit>,
    faction: Faction,
    max_objective: f64,
    subgoal: Option<HexCoord>,
}

impl<'a> CellContext<'a> {
    pub(crate) fn new(s: &'a GameState, faction: Faction, subgoal: Option<HexCoord>) -> Self {
        Self {
            s,
            units: s.units.iter().map(|u| (u.pos, u)).collect(),
            faction,
            max_objective: s.board.max_objective_value() as f64,
            subgoal,
        }
    }

    pub(crate) fn values(&self, c: HexCoord) -> [f64; NUM_CHANNELS] {
        let Some(terrain) = self.s.board.terrain(c) else {
            return [0.0, 0.0, 0.0, 1.0, 0.0, 0.0];
        };
        let mut v = [0.0; NUM_CHANNELS];
        if let Some(u) = self.units.get(&c) {
            let ch = if u.faction == self.faction { CH_FRIENDLY } else { CH_ENEMY };
            v[ch] = u.strength as f64 / 100.0;
        }
        if self.max_objective > 0.0 {
            if let Some(o) = self.s.board.objective_at(c) {
                v[CH_OBJECTIVE] = o.value as f64 / self.max_objective;
            }
        }
        v[CH_MOVE_COST] = terrain.move_cost().map_or(1.0, |m| m as f64 / 2.0);
        v[CH_DEFENSE] = terrain.defense_mult().unwrap_or(0.0);
        if self.subgoal == Some(c) {
            v[CH_SUBGOAL] = 1.0;
        }
        v
    }
}

/// Rectangular band of the board in axial coordinates.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Region {
    pub q0: i32,
    pub r0: i32,
    pub width: u32,
    pub height: u32,
}

impl Region {
    pub fn contains(&self, c: HexCoord) -> bool {
        c.q >= self.q0
            && c.r >= self.r0
            && ((c.q - self.q0) as u32) < self.width
            && ((c.r - self.r0) as u32) < self.height
    }
}

pub const G_BLUE: usize = 0;
pub const G_RED: usize = 1;
pub const G_OBJECTIVE: usize = 2;
pub const G_HELD: usize = 3;

/// Coarse `G x G` super-cell summary, channel-major, plus a turn scalar.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GlobalAbstraction {
    pub grid: u32,
    pub region: Region,
    pub values: Vec<f64>,
}

impl GlobalAbstraction {
    fn cells(&self) -> usize {
        (self.grid * self.grid) as usize
    }

    pub fn channel(&self, ch: usize) -> &[f64] {
        let n = self.cells();
        &self.values[ch * n..(ch + 1) * n]
    }

    pub fn turn_fraction(&self) -> f64 {
        *self.values.last().expect("non-empty")
    }

    /// Super-cell index of a hex inside the region.
    pub fn super_cell_of(&self, c: HexCoord) -> Option<usize> {
        super_cell(self.grid, &self.region, c)
    }

    /// Approximate axial center of a super-cell.
    pub fn super_cell_center(&self, idx: usize) -> (f64, f64) {
        let g = self.grid as usize;
        let (i, j) = (idx % g, idx / g);
        let q = self.region.q0 as f64 + (i as f64 + 0.5) * self.region.width as f64 / g as f64 - 0.5;
        let r = self.region.r0 as f64 + (j as f64 + 0.5) * self.region.height as f64 / g as f64 - 0.5;
        (q, r)
    }

    /// Strength channel for the given faction (strength / 100 per super-cell).
    pub fn strength(&self, f: Faction) -> &[f64] {
        self.channel(match f {
            Faction::Blue => G_BLUE,
            Faction::Red => G_RED,
        })
    }
}

fn super_cell(grid: u32, region: &Region, c: HexCoord) -> Option<usize> {
    if !region.contains(c) {
        return None;
    }
    let i = (c.q - region.q0) as u64 * grid as u64 / region.width as u64;
    let j = (c.r - region.r0) as u64 * grid as u64 / region.height as u64;
    Some((j * grid as u64 + i) as usize)
}

pub fn encode_global(s: &GameState, grid: u32) -> GlobalAbstraction {
    let region = Region { q0: 0, r0: 0, width: s.board.width, height: s.board.height };
    encode_region(s, grid, region)
}

/// Global abstraction restricted to `region` (clipped to the board).
pub fn encode_region(s: &GameState, grid: u32, region: Region) -> GlobalAbstraction {
    assert!(grid >= 1 && region.width >= 1 && region.height >= 1, "empty abstraction grid");
    let n = (grid * grid) as usize;
    let mut values = vec![0.0; 4 * n + 1];
    for u in &s.units {
        if let Some(idx) = super_cell(grid, &region, u.pos) {
            let ch = match u.faction {
                Faction::Blue => G_BLUE,
                Faction::Red => G_RED,
            };
            values[ch * n + idx] += u.strength as f64 / 100.0;
        }
    }
    let mut counts = vec![0u32; n];
    let mut held = vec![0u32; n];
    for o in &s.board.objectives {
        if let Some(idx) = super_cell(grid, &region, o.pos) {
            values[G_OBJECTIVE * n + idx] += o.value as f64;
            counts[idx] += 1;
            if s.unit_at(o.pos).is_some_and(|u| u.faction == Faction::Blue) {
                held[idx] += 1;
            }
        }
    }
    for idx in 0..n {
        if counts[idx] > 0 {
            values[G_HELD * n + idx] = held[idx] as f64 / counts[idx] as f64;
        }
    }
    values[4 * n] = s.turn as f64 / s.max_turns as f64;
    GlobalAbstraction { grid, region, values }
}
