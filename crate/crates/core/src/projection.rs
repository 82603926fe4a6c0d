//! Orthogonal projections of identity-type systems and the search for
//! directions whose projected balls form a separated family of dimension
//! above `1 − ε`.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dimension::moran_root;
use crate::geometry::{Interval, Point};
use crate::ifs::{generation_balls, Ball, IfsError, IfsSystem, Word};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProjectionError {
    #[error("map {0} is not of identity type; projections need a derotated system")]
    NotDerotated(usize),
    #[error("direction not certified up to generation {max_generation} (best exponent {best})")]
    NotCertified { max_generation: usize, best: f64 },
    #[error("direction {0:?} is not a unit vector")]
    NotUnit(Point),
    #[error(transparent)]
    Ifs(#[from] IfsError),
}

/// `[c·e − d/2, c·e + d/2]`.
pub fn project_interval(ball: &Ball, e: Point) -> Interval {
    Interval::centered(ball.center.dot(e), ball.diameter)
}

/// Representative of `±e` on the upper half-circle.
pub fn canonical_direction(e: Point) -> Point {
    if e.y < 0.0 || (e.y == 0.0 && e.x < 0.0) {
        -e
    } else {
        e
    }
}

/// Direction plus a same-generation ball family whose projections are
/// separated by at least `separation`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GoodFamily {
    pub direction: Point,
    pub words: Vec<Word>,
    pub exponent: f64,
    pub separation: f64,
    pub stability: f64,
    pub generation: usize,
}

impl GoodFamily {
    pub fn balls(&self, sys: &IfsSystem) -> Vec<Ball> {
        self.words.iter().map(|w| sys.ball(w)).collect()
    }

    pub fn diameters(&self, sys: &IfsSystem) -> Vec<f64> {
        self.words.iter().map(|w| sys.word_map(w).ratio()).collect()
    }

    /// Smallest gap between projections at `e`, negative on overlap.
    pub fn min_gap_at(&self, sys: &IfsSystem, e: Point) -> f64 {
        min_gap(&self.balls(sys), e)
    }

    /// Recomputes every invariant from scratch.
    pub fn verify(&self, sys: &IfsSystem, epsilon: f64) -> Result<(), String> {
        if (self.direction.norm() - 1.0).abs() > 1e-12 {
            return Err("direction is not a unit vector".into());
        }
        for w in &self.words {
            sys.check_word(w).map_err(|e| e.to_string())?;
            if w.len() != self.generation {
                return Err(format!("word {w} is not of generation {}", self.generation));
            }
        }
        let gap = self.min_gap_at(sys, self.direction);
        if !(gap > 0.0) || gap < self.separation * (1.0 - 1e-9) {
            return Err(format!(
                "projected gap {gap} below separation {}",
                self.separation
            ));
        }
        let d = self.diameters(sys);
        let target: f64 = d.iter().map(|x| x.powf(1.0 - epsilon)).sum();
        if !(target > 1.0) {
            return Err(format!("sum of d^(1-eps) is {target}, not above 1"));
        }
        let s = moran_root(&d, 1.0).map_err(|e| e.to_string())?.value;
        if !(s > 1.0 - epsilon) || (s - self.exponent).abs() > 1e-9 {
            return Err(format!("exponent {s} vs recorded {}", self.exponent));
        }
        if !(self.stability > 0.0 && self.stability <= self.separation / 4.0 * (1.0 + 1e-12)) {
            return Err("stability radius exceeds a quarter of the separation".into());
        }
        for k in 1..=4 {
            for side in [1.0, -1.0] {
                let dist = self.stability * (1.0 - 1e-6) * k as f64 / 4.0;
                let tilt = perturb(self.direction, dist, side);
                if !(self.min_gap_at(sys, tilt) > 0.0) {
                    return Err(format!("overlap after tilting the direction by {dist}"));
                }
            }
        }
        Ok(())
    }
}

/// The unit vector at chord distance `dist` from `e`, counter-clockwise
/// for positive `side`.
pub fn perturb(e: Point, dist: f64, side: f64) -> Point {
    let angle = 2.0 * (0.5 * dist).asin();
    Point::unit(e.angle() + side.signum() * angle)
}

/// Minimum gap between the projections of a family; negative if two meet.
pub fn min_gap(balls: &[Ball], e: Point) -> f64 {
    let mut iv: Vec<Interval> = balls.iter().map(|b| project_interval(b, e)).collect();
    iv.sort_by(|a, b| a.lo.total_cmp(&b.lo));
    let mut gap = f64::INFINITY;
    let mut reach = f64::NEG_INFINITY;
    for i in &iv {
        gap = gap.min(i.lo - reach);
        reach = reach.max(i.hi);
    }
    gap
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Key(f64);

impl Eq for Key {}

impl PartialOrd for Key {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Key {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.0.total_cmp(&other.0)
    }
}

/// Greedy longest-first disjoint selection, ties by left endpoint. Returns
/// indices into `intervals`.
pub fn vitali_intervals(intervals: &[Interval]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..intervals.len()).collect();
    order.sort_by(|&a, &b| {
        intervals[b]
            .length()
            .total_cmp(&intervals[a].length())
            .then_with(|| intervals[a].lo.total_cmp(&intervals[b].lo))
    });
    let mut taken: BTreeMap<Key, f64> = BTreeMap::new();
    let mut out = Vec::new();
    for i in order {
        let iv = intervals[i];
        let before = taken.range(..=Key(iv.lo)).next_back();
        let after = taken.range(Key(iv.lo)..).next();
        let clear_before = before.is_none_or(|(_, &hi)| hi < iv.lo);
        let clear_after = after.is_none_or(|(lo, _)| lo.0 > iv.hi);
        if clear_before && clear_after {
            taken.insert(Key(iv.lo), iv.hi);
            out.push(i);
        }
    }
    out
}

/// Every interval's midpoint is within `5/2` of the length of a selected
/// interval at least as long.
pub fn verify_interval_cover(intervals: &[Interval], selected: &[usize]) -> bool {
    intervals.par_iter().all(|iv| {
        selected.iter().any(|&k| {
            let s = intervals[k];
            s.length() >= iv.length() && (s.mid() - iv.mid()).abs() <= 2.5 * s.length()
        })
    })
}

fn require_identity(sys: &IfsSystem) -> Result<(), ProjectionError> {
    match sys.maps().iter().position(|m| !m.isometry().is_identity()) {
        Some(j) => Err(ProjectionError::NotDerotated(j)),
        None => Ok(()),
    }
}

fn family_at_generation(
    sys: &IfsSystem,
    e: Point,
    n: usize,
    budget: usize,
) -> Result<Option<(Vec<Word>, f64, f64)>, ProjectionError> {
    let ce = canonical_direction(e);
    let balls = generation_balls(sys, n, budget)?;
    let intervals: Vec<Interval> = balls.iter().map(|b| project_interval(b, ce)).collect();
    let mut chosen = vitali_intervals(&intervals);
    if chosen.len() < 2 {
        return Ok(None);
    }
    chosen.sort_by(|&a, &b| intervals[a].lo.total_cmp(&intervals[b].lo));
    let sep = chosen
        .windows(2)
        .map(|p| intervals[p[1]].lo - intervals[p[0]].hi)
        .fold(f64::INFINITY, f64::min);
    let diam: Vec<f64> = chosen.iter().map(|&k| balls[k].diameter).collect();
    let s = moran_root(&diam, 1.0).map(|r| r.value).unwrap_or(0.0);
    let mut words: Vec<Word> = chosen.iter().map(|&k| balls[k].word.clone()).collect();
    words.sort();
    Ok(Some((words, s, sep)))
}

/// First generation whose projected Vitali family has Moran root above
/// `1 − ε`.
pub fn find_good_family(
    sys: &IfsSystem,
    e: Point,
    epsilon: f64,
    max_generation: usize,
    budget: usize,
) -> Result<GoodFamily, ProjectionError> {
    require_identity(sys)?;
    if (e.norm() - 1.0).abs() > 1e-12 {
        return Err(ProjectionError::NotUnit(e));
    }
    let mut best: f64 = 0.0;
    for n in 1..=max_generation {
        let Some((words, s, sep)) = family_at_generation(sys, e, n, budget)? else {
            continue;
        };
        if s > 1.0 - epsilon && sep > 0.0 {
            return Ok(GoodFamily {
                direction: e,
                words,
                exponent: s,
                separation: sep,
                stability: sep / 4.0,
                generation: n,
            });
        }
        best = best.max(s);
    }
    Err(ProjectionError::NotCertified {
        max_generation,
        best,
    })
}

/// `find_good_family` at the directions `(cos πk/N, sin πk/N)`, in grid
/// order. Directions stopped by the budget count as failures.
pub fn scan_directions(
    sys: &IfsSystem,
    epsilon: f64,
    grid_count: usize,
    max_generation: usize,
    budget: usize,
) -> Vec<GoodFamily> {
    (0..grid_count)
        .into_par_iter()
        .filter_map(|k| {
            let e = Point::unit(std::f64::consts::PI * k as f64 / grid_count as f64);
            find_good_family(sys, e, epsilon, max_generation, budget).ok()
        })
        .collect()
}
