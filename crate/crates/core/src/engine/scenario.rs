//! Scenario documents (JSON) and their validation.

use std::collections::HashSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::types::{Faction, Terrain, UnitKind};
use crate::error::{Error, Result};
use crate::hexgrid::HexCoord;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub name: String,
    pub width: u32,
    pub height: u32,
    pub max_turns: u32,
    /// One string per row `r`, one char per column `q` over `{c, r, u, w}`.
    /// Empty means all clear.
    #[serde(default)]
    pub terrain: Vec<String>,
    #[serde(default)]
    pub objectives: Vec<ObjectiveSpec>,
    pub units: Vec<UnitSpec>,
    #[serde(default)]
    pub combat: CombatConfig,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveSpec {
    pub q: i32,
    pub r: i32,
    pub value: i64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct UnitSpec {
    pub id: u32,
    pub faction: Faction,
    #[serde(default = "default_kind")]
    pub kind: UnitKind,
    pub strength: u32,
    pub q: i32,
    pub r: i32,
}

fn default_kind() -> UnitKind {
    UnitKind::Infantry
}

/// Adjudication constants.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CombatConfig {
    pub deterministic: bool,
    pub attack_coef: f64,
    pub counter_coef: f64,
    /// Damage multipliers drawn uniformly when not deterministic.
    pub eta: Vec<f64>,
}

impl Default for CombatConfig {
    fn default() -> Self {
        Self { deterministic: true, attack_coef: 0.4, counter_coef: 0.2, eta: vec![0.75, 1.0, 1.25] }
    }
}

impl Scenario {
    pub fn from_json(doc: &str) -> Result<Scenario> {
        let scenario: Scenario =
            serde_json::from_str(doc).map_err(|e| Error::Scenario(format!("malformed document: {e}")))?;
        scenario.validate()?;
        Ok(scenario)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Scenario> {
        let path = path.as_ref();
        let doc = std::fs::read_to_string(path)
            .map_err(|e| Error::Scenario(format!("cannot read {}: {e}", path.display())))?;
        Scenario::from_json(&doc)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("scenario serializes")
    }

    pub fn in_bounds(&self, c: HexCoord) -> bool {
        c.q >= 0 && c.r >= 0 && (c.q as u32) < self.width && (c.r as u32) < self.height
    }

    pub fn terrain_at(&self, c: HexCoord) -> Option<Terrain> {
        if !self.in_bounds(c) {
            return None;
        }
        if self.terrain.is_empty() {
            return Some(Terrain::Clear);
        }
        self.terrain[c.r as usize].chars().nth(c.q as usize).and_then(Terrain::from_char)
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Scenario(m));
        if self.width == 0 || self.height == 0 {
            return fail("board must be at least 1x1".into());
        }
        if self.max_turns == 0 {
            return fail("max_turns must be at least 1".into());
        }
        if !self.terrain.is_empty() {
            if self.terrain.len() != self.height as usize {
                return fail(format!("terrain has {} rows, expected {}", self.terrain.len(), self.height));
            }
            for (r, row) in self.terrain.iter().enumerate() {
                if row.chars().count() != self.width as usize {
                    return fail(format!("terrain row {r} has length {}, expected {}", row.len(), self.width));
                }
                if let Some(bad) = row.chars().find(|&c| Terrain::from_char(c).is_none()) {
                    return fail(format!("terrain row {r}: unknown terrain `{bad}`"));
                }
            }
        }
        let c = &self.combat;
        if !(c.attack_coef > 0.0 && c.attack_coef.is_finite() && c.counter_coef >= 0.0 && c.counter_coef.is_finite()) {
            return fail("combat coefficients must be finite and positive".into());
        }
        if !c.deterministic && (c.eta.is_empty() || c.eta.iter().any(|e| !(e.is_finite() && *e > 0.0))) {
            return fail("stochastic combat needs a non-empty set of positive eta values".into());
        }
        let mut seen_obj = HashSet::new();
        for o in &self.objectives {
            let at = HexCoord::new(o.q, o.r);
            if !self.in_bounds(at) {
                return fail(format!("objective at {at} is off the board"));
            }
            if o.value < 0 {
                return fail(format!("objective at {at} has negative value"));
            }
            if !seen_obj.insert(at) {
                return fail(format!("duplicate objective at {at}"));
            }
        }
        let mut ids = HashSet::new();
        let mut occupied = HashSet::new();
        for u in &self.units {
            let at = HexCoord::new(u.q, u.r);
            if !ids.insert(u.id) {
                return fail(format!("duplicate unit id {}", u.id));
            }
            if u.strength == 0 || u.strength > 100 {
                return fail(format!("unit {} strength {} outside 1..=100", u.id, u.strength));
            }
            match self.terrain_at(at) {
                None => return fail(format!("unit {} at {at} is off the board", u.id)),
                Some(t) if !t.passable() => return fail(format!("impassable placement: unit {} at {at}", u.id)),
                _ => {}
            }
            if !occupied.insert(at) {
                return fail(format!("hex occupied: {at} holds more than one unit"));
            }
        }
        Ok(())
    }

    /// Same map with factions exchanged; each unit keeps its position.
    pub fn swap_factions(&self) -> Scenario {
        let mut s = self.clone();
        for u in &mut s.units {
            u.faction = u.faction.opponent();
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{
        "name": "minimal", "width": 5, "height": 5, "max_turns": 10,
        "terrain": ["ccccc","ccccc","ccccc","ccccc","ccccc"],
        "objectives": [{"q":2,"r":2,"value":1}],
        "units": [
            {"id":1,"faction":"blue","kind":"infantry","strength":100,"q":1,"r":1},
            {"id":2,"faction":"red","kind":"armor","strength":100,"q":3,"r":3}
        ]
    }"#;

    #[test]
    fn loads_minimal_document() {
        let s = Scenario::from_json(MINIMAL).unwrap();
        assert_eq!(s.units.len(), 2);
        assert_eq!(s.objectives.len(), 1);
        assert!(s.combat.deterministic);
    }

    #[test]
    fn rejects_overlapping_units() {
        let doc = MINIMAL.replace(r#""q":3,"r":3"#, r#""q":1,"r":1"#);
        let err = Scenario::from_json(&doc).unwrap_err().to_string();
        assert!(err.contains("hex occupied"), "{err}");
    }

    #[test]
    fn rejects_unit_on_water() {
        let doc = MINIMAL.replacen("ccccc", "cwccc", 2);
        let err = Scenario::from_json(&doc).unwrap_err().to_string();
        assert!(err.contains("impassable placement"), "{err}");
    }

    #[test]
    fn rejects_schema_violations() {
        assert!(Scenario::from_json("{}").is_err());
        assert!(Scenario::from_json(&MINIMAL.replace("ccccc\",\"ccccc\",\"ccccc\"", "ccccc\",\"ccxcc\",\"ccccc\""))
            .is_err());
        assert!(Scenario::from_json(&MINIMAL.replace(r#""strength":100,"q":3"#, r#""strength":0,"q":3"#)).is_err());
        assert!(Scenario::from_json(&MINIMAL.replace(r#""q":2,"r":2,"value":1"#, r#""q":9,"r":2,"value":1"#)).is_err());
    }

    #[test]
    fn empty_terrain_means_clear() {
        let s = Scenario::from_json(&MINIMAL.replace(r#""terrain": ["ccccc","ccccc","ccccc","ccccc","ccccc"],"#, ""))
            .unwrap();
        assert_eq!(s.terrain_at(HexCoord::new(4, 4)), Some(Terrain::Clear));
        assert_eq!(s.terrain_at(HexCoord::new(5, 4)), None);
    }
}
