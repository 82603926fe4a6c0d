//! Identity-type points, direction sets, cones, pinned distance intervals
//! and the nested-interval (Cantor) systems they generate.

use std::collections::HashMap;
use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dimension::{moran_root, sample_attractor};
use crate::geometry::{Interval, Point};
use crate::ifs::{Ball, IfsError, IfsSystem, Similitude, Word};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DistanceError {
    #[error("no map has zero translation; normalize the system first")]
    NoZeroTranslation,
    #[error("map {0} has an irrational angle; identity-type words need rational types")]
    IrrationalType(usize),
    #[error(
        "K0 enumeration to depth {depth} needs {requested} words, above the budget of {budget}"
    )]
    BudgetExceeded {
        depth: usize,
        requested: u128,
        budget: usize,
    },
    #[error("all points coincide; no directions")]
    NoDirections,
    #[error("pin {pin:?} lies inside the ball")]
    PinInsideBall { pin: Point },
    #[error("a Cantor system needs at least two maps of identity type")]
    DegenerateFamily,
    #[error("map {0} of the generating system is not a pure homothety")]
    NotHomothety(usize),
    #[error("siblings {left} and {right} of node {parent} overlap (gap {gap})")]
    SiblingOverlap {
        parent: Word,
        left: usize,
        right: usize,
        gap: f64,
    },
    #[error("child {child} of node {parent} is not nested in it")]
    NotNested { parent: Word, child: usize },
    #[error("power sum deviates from the parent length by {0}")]
    PowerSum(f64),
    #[error(transparent)]
    Ifs(#[from] IfsError),
}

/// `ψ_w(base)` for a word `w` of identity type.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct K0Point {
    pub point: Point,
    pub word: Word,
}

/// Identity-type points based at the origin, which must be fixed by a map
/// of the system (a map with zero translation).
pub fn enumerate_k0(
    sys: &IfsSystem,
    max_depth: usize,
    budget: usize,
) -> Result<Vec<K0Point>, DistanceError> {
    if !sys.maps().iter().any(|m| m.translation() == Point::ORIGIN) {
        return Err(DistanceError::NoZeroTranslation);
    }
    enumerate_k0_at(sys, Point::ORIGIN, max_depth, budget)
}

/// `ψ_w(base)` over all identity-type words of length `1..=max_depth`,
/// shortest and then lexicographically least word first, without repeated
/// points (closer than 1e−12).
pub fn enumerate_k0_at(
    sys: &IfsSystem,
    base: Point,
    max_depth: usize,
    budget: usize,
) -> Result<Vec<K0Point>, DistanceError> {
    if let Some(j) = sys.first_irrational() {
        return Err(DistanceError::IrrationalType(j));
    }
    let q = sys.len() as u128;
    let requested: u128 = (1..=max_depth as u32)
        .map(|k| q.checked_pow(k).unwrap_or(u128::MAX))
        .fold(0u128, u128::saturating_add);
    if requested > budget as u128 {
        return Err(DistanceError::BudgetExceeded {
            depth: max_depth,
            requested,
            budget,
        });
    }
    let mut out = Vec::new();
    let mut seen = PointSet::new(1e-12);
    let mut level: Vec<(Word, Similitude)> = Vec::new();
    for depth in 1..=max_depth {
        level = if depth == 1 {
            sys.maps()
                .iter()
                .enumerate()
                .map(|(j, m)| (Word::single(j), *m))
                .collect()
        } else {
            level
                .par_iter()
                .flat_map_iter(|(w, m)| {
                    sys.maps()
                        .iter()
                        .enumerate()
                        .map(move |(j, g)| (w.pushed(j), m.compose(g)))
                })
                .collect()
        };
        for (w, m) in &level {
            if m.isometry().is_identity() {
                let p = m.apply(base);
                if seen.insert(p) {
                    out.push(K0Point {
                        point: p,
                        word: w.clone(),
                    });
                }
            }
        }
    }
    Ok(out)
}

/// Points up to a tolerance, hashed on a grid of that size.
struct PointSet {
    tol: f64,
    cells: HashMap<(i64, i64), Vec<Point>>,
}

impl PointSet {
    fn new(tol: f64) -> Self {
        PointSet {
            tol,
            cells: HashMap::new(),
        }
    }

    fn key(&self, p: Point) -> (i64, i64) {
        (
            (p.x / self.tol).floor() as i64,
            (p.y / self.tol).floor() as i64,
        )
    }

    fn insert(&mut self, p: Point) -> bool {
        let (i, j) = self.key(p);
        for a in i - 1..=i + 1 {
            for b in j - 1..=j + 1 {
                if let Some(v) = self.cells.get(&(a, b)) {
                    if v.iter().any(|q| q.dist(p) <= self.tol) {
                        return false;
                    }
                }
            }
        }
        self.cells.entry((i, j)).or_default().push(p);
        true
    }
}

/// Pair directions folded to angles in `[0, π)`, distinct, sorted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DirectionSet {
    pub directions: Vec<Point>,
    /// Largest angular gap between consecutive directions, wrapping at π.
    pub max_gap: f64,
}

fn folded_angle(v: Point) -> f64 {
    let a = v.angle().rem_euclid(PI);
    if a >= PI {
        0.0
    } else {
        a
    }
}

/// Directions `(x − y)/|x − y|` of all pairs, or of `max_pairs` random
/// pairs when there are more.
pub fn direction_set(
    points: &[Point],
    max_pairs: usize,
    seed: u64,
) -> Result<DirectionSet, DistanceError> {
    let n = points.len();
    let total = n * n.saturating_sub(1) / 2;
    let mut angles: Vec<f64> = if total <= max_pairs {
        (0..n)
            .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
            .filter_map(|(i, j)| pair_angle(points[i], points[j]))
            .collect()
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..max_pairs)
            .filter_map(|_| {
                let i = rng.gen_range(0..n);
                let j = rng.gen_range(0..n);
                pair_angle(points[i], points[j])
            })
            .collect()
    };
    if angles.is_empty() {
        return Err(DistanceError::NoDirections);
    }
    angles.sort_by(f64::total_cmp);
    angles.dedup_by(|a, b| (*a - *b).abs() <= 1e-12);
    if angles.len() > 1 && PI - angles[angles.len() - 1] + angles[0] <= 1e-12 {
        angles.pop();
    }
    let wrap = PI - angles[angles.len() - 1] + angles[0];
    let max_gap = angles.windows(2).map(|w| w[1] - w[0]).fold(wrap, f64::max);
    Ok(DirectionSet {
        directions: angles.into_iter().map(Point::unit).collect(),
        max_gap,
    })
}

fn pair_angle(a: Point, b: Point) -> Option<f64> {
    let v = a - b;
    (v.norm() > 0.0).then(|| folded_angle(v))
}

/// `{y : dist(y − apex, L) ≤ α·|y − apex|}` for the line `L = ℝ·axis`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Cone {
    pub apex: Point,
    pub axis: Point,
    pub alpha: f64,
}

impl Cone {
    pub fn contains(&self, y: Point) -> bool {
        let v = y - self.apex;
        v.dot(self.axis.perp()).abs() <= self.alpha * v.norm()
    }
}

/// Distance from `v` to the line spanned by the unit vector `axis`.
fn line_distance(v: Point, axis: Point) -> f64 {
    v.dot(axis.perp()).abs()
}

/// Apex distance beyond which circles around the apex cut `B₀` along
/// chords within the `α`-cone of the perpendicular direction.
pub fn cone_safe_radius(alpha: f64) -> f64 {
    0.5 + 2.0 / alpha
}

/// Samples pairs `y, y'` of `B₀` on common circles around `x` and checks
/// that each chord lies in the `α`-cone around `ξ`.
pub fn verify_cone_condition(x: Point, xi: Point, alpha: f64, samples: usize, seed: u64) -> bool {
    if alpha >= 1.0 {
        return true;
    }
    let d = x.norm();
    if d < 0.5 {
        return false;
    }
    let toward = -(1.0 / d) * x;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut checked = 0;
    while checked < samples {
        let y = Point::new(rng.gen_range(-0.5..0.5), rng.gen_range(-0.5..0.5));
        if y.norm() > 0.5 {
            continue;
        }
        checked += 1;
        let r = x.dist(y);
        let cos_max = ((d * d + r * r - 0.25) / (2.0 * d * r)).clamp(-1.0, 1.0);
        let beta_max = cos_max.acos();
        let beta = rng.gen_range(-beta_max..=beta_max);
        let y2 = x + r * Point::unit(beta).cmul(toward);
        let chord = y - y2;
        let len = chord.norm();
        if len == 0.0 {
            continue;
        }
        if line_distance(chord, xi) > alpha * len {
            return false;
        }
    }
    true
}

/// Conservative check that no cone with apex in one ball of generation
/// `1..=depth` meets another: the gap between the projections on `ξ⊥`
/// must exceed `α·(|c − c'| + (d + d')/2)`.
///
/// Gap and reach are monotone under inclusion, so a pair of balls that
/// passes covers every pair of their descendants. The search walks pairs
/// of subtrees and only descends where the test fails, which gives the
/// same answer as testing all pairs of each generation. `budget` caps the
/// number of sibling pair tests.
pub fn verify_cone_separation(
    g: &IfsSystem,
    xi: Point,
    alpha: f64,
    depth: usize,
    budget: usize,
) -> Result<bool, DistanceError> {
    let q = g.len() as u128;
    let per_node = q * q.saturating_sub(1) / 2;
    let mut requested: u128 = 0;
    let mut nodes: u128 = 1;
    for _ in 0..depth {
        requested = requested.saturating_add(nodes.saturating_mul(per_node));
        nodes = nodes.saturating_mul(q);
    }
    if requested > budget as u128 {
        return Err(DistanceError::BudgetExceeded {
            depth,
            requested,
            budget,
        });
    }
    let probe = ConeProbe {
        maps: g.maps(),
        e: xi.perp(),
        alpha,
    };
    Ok(probe.within(probe.maps.to_vec(), 1.0, depth))
}

struct ConeProbe<'a> {
    maps: &'a [Similitude],
    e: Point,
    alpha: f64,
}

impl ConeProbe<'_> {
    fn children(&self, node: &Similitude) -> Vec<Similitude> {
        self.maps.iter().map(|m| node.compose(m)).collect()
    }

    fn passes(&self, a: &Similitude, b: &Similitude) -> bool {
        let (ca, cb) = (a.ball_center(), b.ball_center());
        let (ra, rb) = (0.5 * a.ratio(), 0.5 * b.ratio());
        let (pa, pb) = (ca.dot(self.e), cb.dot(self.e));
        let gap = (pa - pb).abs() - ra - rb;
        gap > self.alpha * (ca.dist(cb) + ra + rb)
    }

    /// Checks all pairs inside a subtree of diameter `size` whose top-level
    /// children are `kids`.
    fn within(&self, kids: Vec<Similitude>, size: f64, levels: usize) -> bool {
        if levels == 0 {
            return true;
        }
        let mut order: Vec<(Interval, &Similitude)> = kids
            .iter()
            .map(|k| {
                (
                    Interval::centered(k.ball_center().dot(self.e), k.ratio()),
                    k,
                )
            })
            .collect();
        order.sort_by(|a, b| a.0.lo.total_cmp(&b.0.lo));
        // both balls lie in the parent, so the reach is at most `size`
        let pairs = |i: usize| {
            let (iv, a) = order[i];
            order[i + 1..]
                .iter()
                .take_while(|(jv, _)| jv.lo - iv.hi <= self.alpha * size)
                .all(|(_, b)| self.across(a, b, levels - 1))
        };
        let subtree =
            |k: &Similitude| levels == 1 || self.within(self.children(k), k.ratio(), levels - 1);
        if levels == 1 || size < 1.0 {
            (0..order.len()).all(pairs) && kids.iter().all(subtree)
        } else {
            (0..order.len()).into_par_iter().all(pairs) && kids.par_iter().all(subtree)
        }
    }

    fn across(&self, a: &Similitude, b: &Similitude, levels: usize) -> bool {
        if self.passes(a, b) {
            return true;
        }
        if levels == 0 {
            return false;
        }
        let (ka, kb) = (self.children(a), self.children(b));
        ka.iter()
            .all(|x| kb.iter().all(|y| self.across(x, y, levels - 1)))
    }
}

/// `{|x − y| : y ∈ B}`.
pub fn distance_interval(x: Point, ball: &Ball) -> Result<Interval, DistanceError> {
    let r = x.dist(ball.center);
    if r < ball.radius() {
        return Err(DistanceError::PinInsideBall { pin: x });
    }
    Ok(Interval::centered(r, ball.diameter))
}

/// `|x − y|` over a chaos-game sample of the attractor.
pub fn sample_pinned_distances(sys: &IfsSystem, x: Point, n_points: usize, seed: u64) -> Vec<f64> {
    sample_attractor(sys, n_points, seed)
        .into_iter()
        .map(|y| x.dist(y))
        .collect()
}

/// The system `B₀ ↦ B` for the balls of a family: pure scaling plus
/// translation to the ball's center.
pub fn homothety_system(balls: &[Ball]) -> Result<IfsSystem, DistanceError> {
    let maps = balls
        .iter()
        .map(|b| Similitude::homothety(b.diameter, b.center))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(IfsSystem::new(maps)?)
}

/// Nested distance intervals `I_w = {|x − y| : y ∈ ψ_w(B₀)}` of a
/// homothety system seen from a pin `x`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CantorSystem {
    pub pin: Point,
    pub ratios: Vec<f64>,
    pub translations: Vec<Point>,
    pub exponent: f64,
    pub depth: usize,
}

/// Outcome of checking the nested-interval conditions to finite depth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CantorReport {
    pub nodes_checked: u64,
    /// Smallest sibling gap divided by the parent length.
    pub min_relative_gap: f64,
    /// Largest interval length at each depth `1..=depth`.
    pub max_length: Vec<f64>,
    /// Largest `|Σ ℓ_child^s / ℓ_parent^s − 1|`.
    pub power_sum_error: f64,
}

const GAP_TOLERANCE: f64 = 1e-12;
const POWER_SUM_TOLERANCE: f64 = 1e-10;

impl CantorSystem {
    /// Intervals of `g` (pure homotheties, at least two) seen from `pin`.
    pub fn new(g: &IfsSystem, pin: Point, depth: usize) -> Result<Self, DistanceError> {
        if g.len() < 2 {
            return Err(DistanceError::DegenerateFamily);
        }
        if let Some(j) = g.maps().iter().position(|m| !m.isometry().is_identity()) {
            return Err(DistanceError::NotHomothety(j));
        }
        if pin.norm() <= 0.5 {
            return Err(DistanceError::PinInsideBall { pin });
        }
        let exponent = moran_root(&g.ratios(), 1.0)
            .map_err(|_| DistanceError::DegenerateFamily)?
            .value;
        Ok(CantorSystem {
            pin,
            ratios: g.ratios(),
            translations: g.maps().iter().map(|m| m.translation()).collect(),
            exponent,
            depth,
        })
    }

    pub fn len(&self) -> usize {
        self.ratios.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ratios.is_empty()
    }

    /// Center and diameter of `ψ_w(B₀)`.
    pub fn ball(&self, w: &Word) -> (Point, f64) {
        let mut c = Point::ORIGIN;
        let mut d = 1.0;
        for j in w.indices() {
            c = c + d * self.translations[j];
            d *= self.ratios[j];
        }
        (c, d)
    }

    pub fn root(&self) -> Interval {
        Interval::centered(self.pin.norm(), 1.0)
    }

    pub fn interval(&self, w: &Word) -> Interval {
        let (c, d) = self.ball(w);
        Interval::centered(self.pin.dist(c), d)
    }

    /// Nodes below the root down to `depth`.
    pub fn node_count(&self) -> u128 {
        let p = self.len() as u128;
        (1..=self.depth as u32).map(|k| p.pow(k)).sum()
    }

    /// Checks nesting, sibling disjointness and the power-sum identity at
    /// every node to `depth`, visiting the tree depth first.
    ///
    /// Child positions are offsets `|u − v| − |u|` from the parent distance,
    /// with `u` the pin relative to the parent center and `v` the child
    /// center relative to the parent center, computed as
    /// `(|v|² − 2u·v)/(|u − v| + |u|)` so that far pins lose no precision.
    pub fn validate(&self) -> Result<CantorReport, DistanceError> {
        let p = self.len();
        let rs: Vec<f64> = self.ratios.iter().map(|r| r.powf(self.exponent)).collect();
        let power_sum_error = (rs.iter().sum::<f64>() - 1.0).abs();
        if power_sum_error > POWER_SUM_TOLERANCE {
            return Err(DistanceError::PowerSum(power_sum_error));
        }
        let order = {
            let u = self.pin;
            let mut o: Vec<(f64, usize)> = (0..p)
                .map(|j| (offset(u, self.translations[j]), j))
                .collect();
            o.sort_by(|a, b| a.0.total_cmp(&b.0));
            o.into_iter().map(|(_, j)| j).collect::<Vec<_>>()
        };
        let rmax = self.ratios.iter().copied().fold(0.0, f64::max);
        let max_length: Vec<f64> = (1..=self.depth as i32).map(|k| rmax.powi(k)).collect();
        if self.depth == 0 {
            return Ok(CantorReport {
                nodes_checked: 0,
                min_relative_gap: f64::INFINITY,
                max_length,
                power_sum_error,
            });
        }
        let root = Walk {
            sys: self,
            order: &order,
        };
        let (min_gap, nodes) = root.node(self.pin, 1.0, &[])?;
        // depth-first below the first level, one subtree per child
        let sub: Vec<Result<(f64, u64), DistanceError>> = if self.depth > 1 {
            (0..p)
                .into_par_iter()
                .map(|j| {
                    let u = self.pin - self.translations[j];
                    let mut stack = vec![j as u32];
                    root.subtree(u, self.ratios[j], &mut stack, self.depth - 1)
                })
                .collect()
        } else {
            Vec::new()
        };
        let mut min_relative_gap = min_gap;
        let mut nodes_checked = nodes;
        for r in sub {
            let (g, n) = r?;
            min_relative_gap = min_relative_gap.min(g);
            nodes_checked += n;
        }
        Ok(CantorReport {
            nodes_checked,
            min_relative_gap,
            max_length,
            power_sum_error,
        })
    }
}

/// `|u − v| − |u|` without cancellation.
fn offset(u: Point, v: Point) -> f64 {
    (v.norm_sq() - 2.0 * u.dot(v)) / ((u - v).norm() + u.norm())
}

struct Walk<'a> {
    sys: &'a CantorSystem,
    order: &'a [usize],
}

impl Walk<'_> {
    /// Checks the children of one node; returns the smallest relative gap
    /// and the number of children checked.
    fn node(&self, u: Point, d: f64, word: &[u32]) -> Result<(f64, u64), DistanceError> {
        let sys = self.sys;
        let p = sys.len();
        let mut offs: Vec<(f64, usize)> = Vec::with_capacity(p);
        let mut sorted = true;
        let mut last = f64::NEG_INFINITY;
        for &j in self.order {
            let o = offset(u, d * sys.translations[j]);
            let half = 0.5 * d * sys.ratios[j];
            if o.abs() + half > 0.5 * d * (1.0 + GAP_TOLERANCE) {
                return Err(DistanceError::NotNested {
                    parent: Word(word.to_vec()),
                    child: j,
                });
            }
            sorted &= o >= last;
            last = o;
            offs.push((o, j));
        }
        if !sorted {
            offs.sort_by(|a, b| a.0.total_cmp(&b.0));
        }
        let mut min_gap = f64::INFINITY;
        for k in 1..p {
            let (o1, a) = offs[k - 1];
            let (o2, b) = offs[k];
            let gap = (o2 - 0.5 * d * sys.ratios[b]) - (o1 + 0.5 * d * sys.ratios[a]);
            if !(gap > GAP_TOLERANCE * d) {
                return Err(DistanceError::SiblingOverlap {
                    parent: Word(word.to_vec()),
                    left: a,
                    right: b,
                    gap,
                });
            }
            min_gap = min_gap.min(gap / d);
        }
        Ok((min_gap, p as u64))
    }

    /// Checks the node and all its descendants down to `left` more levels.
    fn subtree(
        &self,
        u: Point,
        d: f64,
        word: &mut Vec<u32>,
        left: usize,
    ) -> Result<(f64, u64), DistanceError> {
        let (mut min_gap, mut nodes) = self.node(u, d, word)?;
        if left > 1 {
            let sys = self.sys;
            for j in 0..sys.len() {
                word.push(j as u32);
                let (g, n) = self.subtree(
                    u - d * sys.translations[j],
                    d * sys.ratios[j],
                    word,
                    left - 1,
                )?;
                word.pop();
                min_gap = min_gap.min(g);
                nodes += n;
            }
        }
        Ok((min_gap, nodes))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dimension::{box_dimension, default_scales};
    use crate::fixtures;
    use crate::ifs::generation_balls;
    use crate::ifs::{normalize_zero_translation, DEFAULT_BUDGET};
    use crate::projection::project_interval;
    use proptest::prelude::*;

    fn brute_cantor(c: &CantorSystem) {
        // every sibling pair, every node, absolute intervals
        let p = c.len();
        let mut level = vec![Word::empty()];
        for _ in 0..c.depth {
            let mut next = Vec::new();
            for w in &level {
                let parent = if w.is_empty() {
                    c.root()
                } else {
                    c.interval(w)
                };
                let kids: Vec<Interval> = (0..p).map(|j| c.interval(&w.pushed(j))).collect();
                for (a, k) in kids.iter().enumerate() {
                    assert!(parent.lo <= k.lo + 1e-12 && k.hi <= parent.hi + 1e-12);
                    for k2 in &kids[a + 1..] {
                        assert!(k.gap(k2) > 0.0);
                    }
                }
                next.extend((0..p).map(|j| w.pushed(j)));
            }
            level = next;
        }
    }

    #[test]
    fn four_corner_k0() {
        let fc = normalize_zero_translation(&fixtures::four_corner(), 0)
            .unwrap()
            .system;
        let pts = enumerate_k0(&fc, 2, DEFAULT_BUDGET).unwrap();
        // ψ_i ψ_1(0) = ψ_i(0) since ψ_1 fixes 0; no other coincidences
        assert_eq!(pts.len(), 4 + 16 - 4);
        for k in &pts {
            assert!(fc.word_type(&k.word).is_identity());
            assert!(fc.word_map(&k.word).apply(Point::ORIGIN).dist(k.point) < 1e-15);
            assert!(k.point.norm() <= 0.5);
        }
    }

    #[test]
    fn rot3_k0_needs_quarter_turn_counts() {
        let sys = normalize_zero_translation(&fixtures::rot3(), 0)
            .unwrap()
            .system;
        let pts = enumerate_k0(&sys, 5, DEFAULT_BUDGET).unwrap();
        assert!(!pts.is_empty());
        for k in &pts {
            assert_eq!(k.word.indices().filter(|&j| j == 0).count() % 4, 0);
        }
    }

    #[test]
    fn k0_needs_a_zero_translation() {
        assert_eq!(
            enumerate_k0(&fixtures::four_corner(), 2, DEFAULT_BUDGET),
            Err(DistanceError::NoZeroTranslation)
        );
    }

    #[test]
    fn k0_is_dense() {
        for (sys, depth) in [(fixtures::four_corner(), 5), (fixtures::rot3(), 10)] {
            let sys = normalize_zero_translation(&sys, 0).unwrap().system;
            let pts = enumerate_k0(&sys, depth, DEFAULT_BUDGET).unwrap();
            for y in sample_attractor(&sys, 2000, 9) {
                assert!(pts.iter().any(|k| k.point.dist(y) <= 0.05));
            }
        }
    }

    #[test]
    fn direction_set_examples() {
        let line = [
            Point::new(0.0, 0.0),
            Point::new(1.0, 0.0),
            Point::new(2.0, 0.0),
        ];
        let d = direction_set(&line, 100, 0).unwrap();
        assert_eq!(d.directions.len(), 1);
        assert!((d.max_gap - PI).abs() < 1e-15);

        let square = [
            Point::new(0.0, 0.0),
            Point::new(1.0, 0.0),
            Point::new(0.0, 1.0),
            Point::new(1.0, 1.0),
        ];
        let d = direction_set(&square, 100, 0).unwrap();
        assert_eq!(d.directions.len(), 4);
        assert!((d.max_gap - PI / 4.0).abs() < 1e-12);

        assert_eq!(
            direction_set(&[Point::ORIGIN, Point::ORIGIN], 10, 0),
            Err(DistanceError::NoDirections)
        );
    }

    #[test]
    fn four_corner_k0_directions_are_dense() {
        let fc = normalize_zero_translation(&fixtures::four_corner(), 0)
            .unwrap()
            .system;
        let pts: Vec<Point> = enumerate_k0(&fc, 4, DEFAULT_BUDGET)
            .unwrap()
            .into_iter()
            .map(|k| k.point)
            .collect();
        let d = direction_set(&pts, 1_000_000, 0).unwrap();
        assert!(d.max_gap < 0.1, "{}", d.max_gap);
    }

    #[test]
    fn cone_radius_examples() {
        assert_eq!(cone_safe_radius(0.5), 4.5);
        assert_eq!(cone_safe_radius(1.0), 2.5);
        assert!(cone_safe_radius(0.1) > cone_safe_radius(0.2));
    }

    #[test]
    fn cone_condition_examples() {
        let up = Point::new(0.0, 1.0);
        assert!(verify_cone_condition(
            Point::new(100.0, 0.0),
            up,
            0.1,
            10_000,
            1
        ));
        assert!(!verify_cone_condition(
            Point::new(0.6, 0.0),
            up,
            0.05,
            10_000,
            1
        ));
        assert!(verify_cone_condition(
            Point::new(0.6, 0.0),
            up,
            1.0,
            10_000,
            1
        ));
        for alpha in [0.5, 0.25, 0.1] {
            let x = Point::new(cone_safe_radius(alpha), 0.0);
            assert!(verify_cone_condition(x, up, alpha, 10_000, 2));
        }
    }

    #[test]
    fn cone_membership() {
        let c = Cone {
            apex: Point::ORIGIN,
            axis: Point::new(0.0, 1.0),
            alpha: 0.1,
        };
        assert!(c.contains(Point::new(0.05, 1.0)));
        assert!(!c.contains(Point::new(0.2, 1.0)));
    }

    #[test]
    fn cone_separation_examples() {
        let fc = fixtures::four_corner();
        let e = Point::new(2.0, 1.0).normalized();
        let fam = crate::projection::find_good_family(&fc, e, 0.3, 6, DEFAULT_BUDGET).unwrap();
        let g = homothety_system(&fam.balls(&fc)).unwrap();
        let xi = e.perp();
        let mut alpha = 0.5;
        while !verify_cone_separation(&g, xi, alpha, 1, DEFAULT_BUDGET).unwrap() {
            alpha /= 2.0;
            assert!(alpha > 1e-9);
        }
        assert!(verify_cone_separation(&g, xi, alpha, 3, 10_000_000).unwrap());

        let overlapping = vec![
            Ball {
                center: Point::ORIGIN,
                diameter: 0.2,
                word: Word::single(0),
            },
            Ball {
                center: Point::new(0.05, 0.0),
                diameter: 0.2,
                word: Word::single(1),
            },
        ];
        let g = homothety_system(&overlapping).unwrap();
        for alpha in [0.5, 1e-3, 1e-9] {
            assert!(!verify_cone_separation(&g, Point::new(0.0, 1.0), alpha, 1, 100).unwrap());
        }
    }

    #[test]
    fn distance_interval_examples() {
        let b = Ball {
            center: Point::ORIGIN,
            diameter: 0.5,
            word: Word::empty(),
        };
        assert_eq!(
            distance_interval(Point::new(2.0, 0.0), &b).unwrap(),
            Interval::new(1.75, 2.25)
        );
        let b = Ball {
            center: Point::new(0.0, 1.0),
            diameter: 1.0,
            word: Word::empty(),
        };
        assert_eq!(
            distance_interval(Point::new(0.0, 3.0), &b).unwrap(),
            Interval::new(1.5, 2.5)
        );
        assert!(distance_interval(Point::new(0.0, 1.2), &b).is_err());
    }

    #[test]
    fn four_corner_cantor_system_at_distance_100() {
        // corner balls shrunk to diameter 1/10 separate along slope 1/2
        let g = IfsSystem::new(
            [(-1.0, -1.0), (-1.0, 1.0), (1.0, -1.0), (1.0, 1.0)]
                .iter()
                .map(|&(x, y)| Similitude::homothety(0.1, Point::new(0.25 * x, 0.25 * y)).unwrap())
                .collect(),
        )
        .unwrap();
        let e = Point::new(2.0, 1.0).normalized();
        let pin = 100.0 * e;
        let c = CantorSystem::new(&g, pin, 3).unwrap();
        assert_eq!(c.node_count(), 84);
        let report = c.validate().unwrap();
        assert_eq!(report.nodes_checked, 84);
        assert!((c.exponent - 4f64.ln() / 10f64.ln()).abs() < 1e-12);
        brute_cantor(&c);
        assert!(report.power_sum_error <= 1e-10);
    }

    #[test]
    fn overlapping_siblings_are_reported() {
        let g = fixtures::four_corner();
        let c = CantorSystem::new(&g, Point::new(100.0, 0.0), 2).unwrap();
        match c.validate() {
            Err(DistanceError::SiblingOverlap { parent, .. }) => assert_eq!(parent, Word::empty()),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn single_ball_family_is_refused() {
        let g = homothety_system(&[Ball {
            center: Point::ORIGIN,
            diameter: 0.5,
            word: Word::empty(),
        }])
        .unwrap();
        assert_eq!(
            CantorSystem::new(&g, Point::new(3.0, 0.0), 2),
            Err(DistanceError::DegenerateFamily)
        );
    }

    #[test]
    fn pinned_distance_examples() {
        let single = IfsSystem::new(vec![
            Similitude::homothety(0.5, Point::new(0.1, 0.0)).unwrap()
        ])
        .unwrap();
        let v = sample_pinned_distances(&single, Point::new(1.0, 1.0), 100, 1);
        assert!(v.iter().all(|&d| (d - v[0]).abs() < 1e-15));

        // from (100, 0) the distances differ from the x-projection by at
        // most 0.25/199, so down to boxes of 2^-9 they see the projection,
        // the middle-half Cantor set of dimension 1/2
        let fc = fixtures::four_corner();
        let v = sample_pinned_distances(&fc, Point::new(100.0, 0.0), 1_000_000, 1);
        assert!(v.iter().all(|&d| (99.5..=100.5).contains(&d)));
        let coarse: Vec<f64> = (3..=9).map(|k| 0.5f64.powi(k)).collect();
        let est = box_dimension(&v, &coarse).unwrap();
        assert!((0.45..=0.6).contains(&est.value), "{est:?}");

        // along slope 1/2 the projection is an interval (digits -3,-1,1,3 in base 4)
        let pin = 100.0 * Point::new(2.0, 1.0).normalized();
        let v = sample_pinned_distances(&fc, pin, 1_000_000, 1);
        let est = box_dimension(&v, &default_scales()).unwrap();
        assert!((0.85..=1.05).contains(&est.value), "{est:?}");
    }

    fn brute_cone_separation(g: &IfsSystem, xi: Point, alpha: f64, depth: usize) -> bool {
        let e = xi.perp();
        (1..=depth).all(|n| {
            let balls = generation_balls(g, n, DEFAULT_BUDGET).unwrap();
            balls.iter().enumerate().all(|(i, a)| {
                balls[i + 1..].iter().all(|b| {
                    let gap = project_interval(a, e).gap(&project_interval(b, e));
                    gap > alpha * (a.center.dist(b.center) + 0.5 * (a.diameter + b.diameter))
                })
            })
        })
    }

    proptest! {
        #[test]
        fn distance_interval_length_is_the_diameter(
            x in 1.0f64..50.0, y in -50.0f64..50.0, d in 0.0f64..1.0
        ) {
            let b = Ball { center: Point::new(0.1, -0.2), diameter: d, word: Word::empty() };
            let iv = distance_interval(Point::new(x, y), &b).unwrap();
            prop_assert!((iv.length() - d).abs() < 1e-12);
        }

        #[test]
        fn pinned_distances_scale(rho in 0.1f64..0.9, x in 1.0f64..10.0) {
            let fc = fixtures::four_corner();
            let scaled = IfsSystem::new(
                fc.maps().iter().map(|m| m.with_translation(rho * m.translation())).collect(),
            ).unwrap();
            let pin = Point::new(x, 0.3);
            let a = sample_pinned_distances(&fc, pin, 200, 3);
            let b = sample_pinned_distances(&scaled, rho * pin, 200, 3);
            for (u, v) in a.iter().zip(&b) {
                prop_assert!((rho * u - v).abs() < 1e-12);
            }
        }

        #[test]
        fn offsets_match_direct_distances(
            ux in 2.0f64..1e3, uy in -1e3f64..1e3, vx in -0.5f64..0.5, vy in -0.5f64..0.5
        ) {
            let u = Point::new(ux, uy);
            let v = Point::new(vx, vy);
            let direct = (u - v).norm() - u.norm();
            prop_assert!((offset(u, v) - direct).abs() <= 1e-12 * u.norm());
        }

        #[test]
        fn cone_separation_matches_all_pairs(
            raw in prop::collection::vec((-0.45f64..0.45, -0.45f64..0.45, 0.05f64..0.5), 2..5),
            phi in 0.0f64..PI,
            alpha in 1e-3f64..0.3,
            depth in 1usize..4,
        ) {
            let balls: Vec<Ball> = raw.iter().enumerate().map(|(j, &(x, y, d))| {
                let c = Point::new(x, y);
                let d = d.min(1.0 - 2.0 * c.norm()).max(0.01);
                let c = if c.norm() + 0.5 * d > 0.5 { (0.5 - 0.5 * d) * c.normalized() } else { c };
                Ball { center: c, diameter: d, word: Word::single(j) }
            }).collect();
            let g = homothety_system(&balls).unwrap();
            let xi = Point::unit(phi);
            prop_assert_eq!(
                verify_cone_separation(&g, xi, alpha, depth, DEFAULT_BUDGET).unwrap(),
                brute_cone_separation(&g, xi, alpha, depth)
            );
        }
    }
}
