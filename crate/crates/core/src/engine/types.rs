use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::hexgrid::HexCoord;

pub type UnitId = u32;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Faction {
    Blue,
    Red,
}

impl Faction {
    pub fn opponent(self) -> Faction {
        match self {
            Faction::Blue => Faction::Red,
            Faction::Red => Faction::Blue,
        }
    }

    /// +1 for blue, -1 for red. Scores are blue-positive.
    pub fn sign(self) -> i64 {
        match self {
            Faction::Blue => 1,
            Faction::Red => -1,
        }
    }
}

impl fmt::Display for Faction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Faction::Blue => "blue",
            Faction::Red => "red",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum UnitKind {
    Infantry,
    Armor,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Terrain {
    Clear,
    Rough,
    Urban,
    Water,
}

impl Terrain {
    pub fn from_char(c: char) -> Option<Terrain> {
        match c {
            'c' => Some(Terrain::Clear),
            'r' => Some(Terrain::Rough),
            'u' => Some(Terrain::Urban),
            'w' => Some(Terrain::Water),
            _ => None,
        }
    }

    pub fn to_char(self) -> char {
        match self {
            Terrain::Clear => 'c',
            Terrain::Rough => 'r',
            Terrain::Urban => 'u',
            Terrain::Water => 'w',
        }
    }

    /// Action-point cost to enter; `None` for impassable.
    pub fn move_cost(self) -> Option<u32> {
        match self {
            Terrain::Clear | Terrain::Urban => Some(1),
            Terrain::Rough => Some(2),
            Terrain::Water => None,
        }
    }

    pub fn passable(self) -> bool {
        self.move_cost().is_some()
    }

    /// Multiplier on damage received; `None` where units cannot stand.
    pub fn defense_mult(self) -> Option<f64> {
        match self {
            Terrain::Clear => Some(1.0),
            Terrain::Rough => Some(0.75),
            Terrain::Urban => Some(0.5),
            Terrain::Water => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Unit {
    pub id: UnitId,
    pub faction: Faction,
    pub kind: UnitKind,
    pub strength: u32,
    pub pos: HexCoord,
    pub acted: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Objective {
    pub pos: HexCoord,
    pub value: i64,
}

/// Nominal action. Index layout: 0 = pass, 1..=6 = move, 7..=12 = attack.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Action {
    Pass,
    Move(u8),
    Attack(u8),
}

pub const NUM_ACTIONS: usize = 13;

impl Action {
    pub fn index(self) -> usize {
        match self {
            Action::Pass => 0,
            Action::Move(d) => 1 + d as usize,
            Action::Attack(d) => 7 + d as usize,
        }
    }

    pub fn from_index(i: usize) -> Option<Action> {
        match i {
            0 => Some(Action::Pass),
            1..=6 => Some(Action::Move((i - 1) as u8)),
            7..=12 => Some(Action::Attack((i - 7) as u8)),
            _ => None,
        }
    }

    pub fn all() -> impl Iterator<Item = Action> {
        (0..NUM_ACTIONS).filter_map(Action::from_index)
    }
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Action::Pass => f.write_str("pass"),
            Action::Move(d) => write!(f, "move({d})"),
            Action::Attack(d) => write!(f, "attack({d})"),
        }
    }
}

#[derive(Serialize, Deserialize)]
struct ActionRepr {
    kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    dir: Option<u8>,
}

impl Serialize for Action {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let repr = match *self {
            Action::Pass => ActionRepr { kind: "pass".into(), dir: None },
            Action::Move(d) => ActionRepr { kind: "move".into(), dir: Some(d) },
            Action::Attack(d) => ActionRepr { kind: "attack".into(), dir: Some(d) },
        };
        repr.serialize(s)
    }
}

impl<'de> Deserialize<'de> for Action {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        use serde::de::Error;
        let repr = ActionRepr::deserialize(d)?;
        let dir = |r: &ActionRepr| match r.dir {
            Some(x) if x < 6 => Ok(x),
            Some(x) => Err(D::Error::custom(format!("direction {x} out of range 0..6"))),
            None => Err(D::Error::custom(format!("`{}` needs a `dir`", r.kind))),
        };
        match repr.kind.as_str() {
            "pass" => Ok(Action::Pass),
            "move" => Ok(Action::Move(dir(&repr)?)),
            "attack" => Ok(Action::Attack(dir(&repr)?)),
            other => Err(D::Error::custom(format!("unknown action kind `{other}`"))),
        }
    }
}

/// Things that happened during one step.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum Event {
    Passed { unit: UnitId },
    Moved { unit: UnitId, from: HexCoord, to: HexCoord },
    Attacked { attacker: UnitId, defender: UnitId, damage: u32, counter: u32, eta: f64 },
    Destroyed { unit: UnitId },
    ObjectivesScored { points: i64 },
    PhaseEnded { next: Faction },
    TurnEnded { turn: u32 },
}
