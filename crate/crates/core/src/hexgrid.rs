//! Axial hex-coordinate geometry.
//!
//! Neighbor directions use a fixed index order `0..6`:
//! `(+1,0) (+1,-1) (0,-1) (-1,0) (-1,+1) (0,+1)`. Every tie-break in the
//! crate that involves directions refers to this order.

use std::fmt;
use std::ops::{Add, Mul, Sub};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A hex cell in axial coordinates.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct HexCoord {
    pub q: i32,
    pub r: i32,
}

/// Canonical neighbor offsets, indexed by direction.
pub const DIRECTIONS: [HexCoord; 6] = [
    HexCoord { q: 1, r: 0 },
    HexCoord { q: 1, r: -1 },
    HexCoord { q: 0, r: -1 },
    HexCoord { q: -1, r: 0 },
    HexCoord { q: -1, r: 1 },
    HexCoord { q: 0, r: 1 },
];

/// Order in which a ring walk turns, starting from `center + radius * DIRECTIONS[0]`.
const RING_WALK: [usize; 6] = [2, 3, 4, 5, 0, 1];

impl HexCoord {
    pub const ORIGIN: HexCoord = HexCoord { q: 0, r: 0 };

    pub const fn new(q: i32, r: i32) -> Self {
        Self { q, r }
    }

    /// Neighbor in direction `dir` (0..6).
    pub fn neighbor(self, dir: usize) -> HexCoord {
        self + DIRECTIONS[dir]
    }

    pub fn neighbors(self) -> impl Iterator<Item = HexCoord> {
        DIRECTIONS.iter().map(move |&d| self + d)
    }

    pub fn distance(self, other: HexCoord) -> u32 {
        distance(self, other)
    }

    /// Direction index whose neighbor equals `other`, if adjacent.
    pub fn direction_to(self, other: HexCoord) -> Option<usize> {
        let delta = other - self;
        DIRECTIONS.iter().position(|&d| d == delta)
    }
}

impl Add for HexCoord {
    type Output = HexCoord;
    fn add(self, o: HexCoord) -> HexCoord {
        HexCoord::new(self.q + o.q, self.r + o.r)
    }
}

impl Sub for HexCoord {
    type Output = HexCoord;
    fn sub(self, o: HexCoord) -> HexCoord {
        HexCoord::new(self.q - o.q, self.r - o.r)
    }
}

impl Mul<i32> for HexCoord {
    type Output = HexCoord;
    fn mul(self, k: i32) -> HexCoord {
        HexCoord::new(self.q * k, self.r * k)
    }
}

impl fmt::Display for HexCoord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{})", self.q, self.r)
    }
}

/// Hex metric: `(|dq| + |dr| + |dq + dr|) / 2`.
pub fn distance(a: HexCoord, b: HexCoord) -> u32 {
    let dq = (a.q - b.q) as i64;
    let dr = (a.r - b.r) as i64;
    ((dq.abs() + dr.abs() + (dq + dr).abs()) / 2) as u32
}

/// Distance between fractional axial positions (used for group centroids).
pub fn distance_f64(a: (f64, f64), b: (f64, f64)) -> f64 {
    let dq = a.0 - b.0;
    let dr = a.1 - b.1;
    (dq.abs() + dr.abs() + (dq + dr).abs()) / 2.0
}

/// Nearest hex to a fractional axial position (cube rounding).
pub fn hex_round(q: f64, r: f64) -> HexCoord {
    let s = -q - r;
    let (mut rq, mut rr, rs) = (q.round(), r.round(), s.round());
    let (dq, dr, ds) = ((rq - q).abs(), (rr - r).abs(), (rs - s).abs());
    if dq > dr && dq > ds {
        rq = -rr - rs;
    } else if dr > ds {
        rr = -rq - rs;
    }
    HexCoord::new(rq as i32, rr as i32)
}

/// The `6 * radius` cells at exactly `radius` from `center`.
///
/// Starts at `center + radius * DIRECTIONS[0]` and walks `radius` steps in
/// directions 2, 3, 4, 5, 0, 1.
pub fn ring(center: HexCoord, radius: u32) -> Result<Vec<HexCoord>> {
    if radius < 1 {
        return Err(Error::InvalidArgument("ring radius must be at least 1".into()));
    }
    Ok(ring_unchecked(center, radius))
}

fn ring_unchecked(center: HexCoord, radius: u32) -> Vec<HexCoord> {
    let mut cells = Vec::with_capacity(6 * radius as usize);
    let mut cur = center + DIRECTIONS[0] * radius as i32;
    for &dir in &RING_WALK {
        for _ in 0..radius {
            cells.push(cur);
            cur = cur.neighbor(dir);
        }
    }
    cells
}

/// Center followed by rings `1..=radius`. This is the canonical cell order of
/// local observations.
pub fn disk(center: HexCoord, radius: u32) -> Vec<HexCoord> {
    let mut cells = Vec::with_capacity(disk_size(radius));
    cells.push(center);
    for k in 1..=radius {
        cells.extend(ring_unchecked(center, k));
    }
    cells
}

pub const fn disk_size(radius: u32) -> usize {
    1 + 3 * radius as usize * (radius as usize + 1)
}

/// The cell of `ring(center, radius)` closest to `far`; ties go to the
/// earliest cell in ring order.
pub fn radial_target(center: HexCoord, far: HexCoord, radius: u32) -> Result<HexCoord> {
    if radius < 1 || distance(center, far) <= radius {
        return Err(Error::InvalidArgument(format!("radial_target needs distance({center}, {far}) > radius {radius}")));
    }
    Ok(ring_unchecked(center, radius).into_iter().min_by_key(|&c| distance(c, far)).expect("ring is non-empty"))
}

/// Precomputed ring-cell lookup for a fixed radius, keyed by offset from the
/// center. Returns the index into the ring (not the disk).
#[derive(Clone, Debug)]
pub(crate) struct RadialTable {
    radius: u32,
    ring: Vec<HexCoord>,
}

impl RadialTable {
    pub(crate) fn new(radius: u32) -> Self {
        Self { radius, ring: ring_unchecked(HexCoord::ORIGIN, radius) }
    }

    /// Ring index for an offset strictly beyond the radius.
    pub(crate) fn index_for(&self, offset: HexCoord) -> usize {
        debug_assert!(distance(HexCoord::ORIGIN, offset) > self.radius);
        let mut best = 0;
        let mut best_d = u32::MAX;
        for (i, &c) in self.ring.iter().enumerate() {
            let d = distance(c, offset);
            if d < best_d {
                best_d = d;
                best = i;
            }
        }
        best
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::{HashMap, VecDeque};

    fn bfs_distances(src: HexCoord, limit: u32) -> HashMap<HexCoord, u32> {
        let mut seen = HashMap::from([(src, 0u32)]);
        let mut queue = VecDeque::from([src]);
        while let Some(c) = queue.pop_front() {
            let d = seen[&c];
            if d == limit {
                continue;
            }
            for n in c.neighbors() {
                seen.entry(n).or_insert_with(|| {
                    queue.push_back(n);
                    d + 1
                });
            }
        }
        seen
    }

    #[test]
    fn distance_examples() {
        assert_eq!(distance(HexCoord::new(0, 0), HexCoord::new(0, 0)), 0);
        assert_eq!(distance(HexCoord::new(0, 0), HexCoord::new(1, 0)), 1);
        let bfs = bfs_distances(HexCoord::ORIGIN, 4);
        assert_eq!(bfs[&HexCoord::new(2, -1)], 2);
        assert_eq!(distance(HexCoord::new(0, 0), HexCoord::new(2, -1)), 2);
    }

    #[test]
    fn ring_examples() {
        let r1 = ring(HexCoord::ORIGIN, 1).unwrap();
        assert_eq!(r1.len(), 6);
        assert_eq!(r1[0], HexCoord::new(1, 0));

        let r3 = ring(HexCoord::ORIGIN, 3).unwrap();
        assert_eq!(r3.len(), 18);
        let unique: std::collections::HashSet<_> = r3.iter().collect();
        assert_eq!(unique.len(), 18);

        let c = HexCoord::new(2, 2);
        assert!(ring(c, 2).unwrap().iter().all(|&x| distance(c, x) == 2));
    }

    #[test]
    fn ring_rejects_zero_radius() {
        assert!(matches!(ring(HexCoord::ORIGIN, 0), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn ring_is_a_closed_walk() {
        for radius in 1..5 {
            let cells = ring(HexCoord::new(-3, 7), radius).unwrap();
            for w in cells.windows(2) {
                assert_eq!(distance(w[0], w[1]), 1);
            }
            assert_eq!(distance(cells[0], *cells.last().unwrap()), 1);
        }
    }

    #[test]
    fn disk_examples() {
        assert_eq!(disk(HexCoord::new(4, -1), 0), vec![HexCoord::new(4, -1)]);
        assert_eq!(disk(HexCoord::ORIGIN, 3).len(), 37);
        let d2 = disk(HexCoord::ORIGIN, 2);
        assert_eq!(d2.len(), 19);
        assert!(d2[7..].iter().all(|&c| distance(HexCoord::ORIGIN, c) == 2));
    }

    #[test]
    fn radial_target_examples() {
        let o = HexCoord::ORIGIN;
        assert_eq!(radial_target(o, HexCoord::new(7, 0), 3).unwrap(), HexCoord::new(3, 0));
        assert_eq!(radial_target(o, HexCoord::new(0, -9), 3).unwrap(), HexCoord::new(0, -3));

        // exhaustive argmin oracle with first-index tie-break
        let far = HexCoord::new(5, -2);
        let cells = ring(o, 3).unwrap();
        let best = cells.iter().map(|&c| distance(c, far)).min().unwrap();
        let expected = *cells.iter().find(|&&c| distance(c, far) == best).unwrap();
        assert_eq!(radial_target(o, far, 3).unwrap(), expected);
    }

    #[test]
    fn radial_target_rejects_near_cells() {
        assert!(radial_target(HexCoord::ORIGIN, HexCoord::new(2, 1), 3).is_err());
        assert!(radial_target(HexCoord::ORIGIN, HexCoord::new(3, 0), 3).is_err());
    }

    #[test]
    fn radial_table_agrees_with_radial_target() {
        let table = RadialTable::new(3);
        let ring3 = ring(HexCoord::ORIGIN, 3).unwrap();
        for far in disk(HexCoord::ORIGIN, 12) {
            if distance(HexCoord::ORIGIN, far) <= 3 {
                continue;
            }
            let t = radial_target(HexCoord::ORIGIN, far, 3).unwrap();
            assert_eq!(ring3[table.index_for(far)], t);
        }
    }

    #[test]
    fn direction_to_inverts_neighbor() {
        let c = HexCoord::new(3, -2);
        for d in 0..6 {
            assert_eq!(c.direction_to(c.neighbor(d)), Some(d));
        }
        assert_eq!(c.direction_to(c), None);
    }

    #[test]
    fn hex_round_picks_a_nearest_hex() {
        for i in -20..=20 {
            for j in -20..=20 {
                let (q, r) = (i as f64 * 0.37, j as f64 * 0.29);
                let h = hex_round(q, r);
                let best = disk(HexCoord::new(q.round() as i32, r.round() as i32), 2)
                    .into_iter()
                    .map(|c| distance_f64((q, r), (c.q as f64, c.r as f64)))
                    .fold(f64::INFINITY, f64::min);
                assert!(distance_f64((q, r), (h.q as f64, h.r as f64)) <= best + 1e-12, "{q} {r} -> {h}");
            }
        }
        assert_eq!(hex_round(3.0, -2.0), HexCoord::new(3, -2));
    }
}
