//! Multi-level spatial hash for balls of mixed sizes.
//!
//! A ball of diameter `d` lives on the level whose cell side `h = 2^-k` is
//! the smallest power of two with `d ≤ h`, filed under the cell containing
//! its center. A query around a point then touches only a few cells per
//! level.

use std::collections::HashMap;

use crate::geometry::Point;

#[derive(Debug, Default)]
struct Level {
    cell: f64,
    buckets: HashMap<(i64, i64), Vec<usize>>,
}

impl Level {
    fn key(&self, p: Point) -> (i64, i64) {
        (
            (p.x / self.cell).floor() as i64,
            (p.y / self.cell).floor() as i64,
        )
    }
}

/// Index of `(center, diameter)` pairs, identified by caller-supplied ids.
#[derive(Debug, Default)]
pub struct BallIndex {
    levels: HashMap<i32, Level>,
}

fn level_of(diameter: f64) -> i32 {
    (-diameter.log2()).floor().clamp(-60.0, 1000.0) as i32
}

impl BallIndex {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, id: usize, center: Point, diameter: f64) {
        let k = level_of(diameter);
        let level = self.levels.entry(k).or_insert_with(|| Level {
            cell: 2f64.powi(-k),
            buckets: HashMap::new(),
        });
        let key = level.key(center);
        level.buckets.entry(key).or_default().push(id);
    }

    /// Calls `visit` with every id whose center lies within `reach(h)` of
    /// `p` (and possibly some farther ones), restricted to levels whose cell
    /// side `h` is at least `min_diameter`'s level cell. `reach` receives the
    /// cell side, an upper bound on the diameters stored on that level.
    pub fn for_each_near(
        &self,
        p: Point,
        min_diameter: f64,
        reach: impl Fn(f64) -> f64,
        mut visit: impl FnMut(usize) -> bool,
    ) -> bool {
        let kmax = level_of(min_diameter);
        for (&k, level) in &self.levels {
            if k > kmax {
                continue;
            }
            let r = reach(level.cell);
            let lo = level.key(Point::new(p.x - r, p.y - r));
            let hi = level.key(Point::new(p.x + r, p.y + r));
            let span = (hi.0 - lo.0 + 1) as u128 * (hi.1 - lo.1 + 1) as u128;
            if span > level.buckets.len() as u128 {
                for ids in level.buckets.values() {
                    for &id in ids {
                        if !visit(id) {
                            return false;
                        }
                    }
                }
                continue;
            }
            for i in lo.0..=hi.0 {
                for j in lo.1..=hi.1 {
                    if let Some(ids) = level.buckets.get(&(i, j)) {
                        for &id in ids {
                            if !visit(id) {
                                return false;
                            }
                        }
                    }
                }
            }
        }
        true
    }
}
