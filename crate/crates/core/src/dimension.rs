//! Moran-equation roots and box-counting dimension estimates.

use rand::distributions::{Distribution, WeightedIndex};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::Point;
use crate::ifs::IfsSystem;

const BURN_IN: usize = 100;
const SEARCH_MAX: f64 = 64.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DimensionError {
    #[error("moran_root needs at least one weight")]
    NoWeights,
    #[error("weight {0} is not in (0, 1)")]
    WeightOutOfRange(f64),
    #[error("no positive root: {count} weights cannot exceed target {target}")]
    NoPositiveRoot { count: usize, target: f64 },
    #[error("no root in [0, 64]")]
    NoRootInRange,
    #[error("box counting needs at least one point")]
    NoPoints,
    #[error("box counting needs at least two scales")]
    TooFewScales,
}

/// Solution of `Σ wⱼˢ = target`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MoranRoot {
    pub value: f64,
    /// Set when the root lies above 2, which no planar system can reach.
    pub exceeds_two: bool,
}

pub fn moran_sum(weights: &[f64], s: f64) -> f64 {
    weights.iter().map(|w| w.powf(s)).sum()
}

/// Bisection for the unique `s > 0` with `Σ wⱼˢ = target`.
pub fn moran_root(weights: &[f64], target: f64) -> Result<MoranRoot, DimensionError> {
    if weights.is_empty() {
        return Err(DimensionError::NoWeights);
    }
    if let Some(&w) = weights.iter().find(|&&w| !(w > 0.0 && w < 1.0)) {
        return Err(DimensionError::WeightOutOfRange(w));
    }
    if weights.len() as f64 <= target {
        return Err(DimensionError::NoPositiveRoot {
            count: weights.len(),
            target,
        });
    }
    if moran_sum(weights, SEARCH_MAX) > target {
        return Err(DimensionError::NoRootInRange);
    }
    let (mut lo, mut hi) = (0.0f64, SEARCH_MAX);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if moran_sum(weights, mid) > target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let value = 0.5 * (lo + hi);
    Ok(MoranRoot {
        value,
        exceeds_two: value > 2.0,
    })
}

/// How the chaos game picks the next map.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum MapSelection {
    #[default]
    Uniform,
    /// Map `j` with probability `rⱼˢ`, `s` the similarity dimension.
    RatioWeighted,
}

pub fn sample_attractor(sys: &IfsSystem, n_points: usize, seed: u64) -> Vec<Point> {
    sample_attractor_with(sys, n_points, seed, MapSelection::Uniform)
}

/// Chaos game started at the fixed point of the first map.
pub fn sample_attractor_with(
    sys: &IfsSystem,
    n_points: usize,
    seed: u64,
    selection: MapSelection,
) -> Vec<Point> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let maps = sys.maps();
    let weighted = match selection {
        MapSelection::Uniform => None,
        MapSelection::RatioWeighted => {
            let s = sys.sim_dimension().max(1e-9);
            Some(WeightedIndex::new(maps.iter().map(|m| m.ratio().powf(s))).unwrap())
        }
    };
    let mut x = maps[0].fixed_point();
    let mut out = Vec::with_capacity(n_points);
    for k in 0..BURN_IN + n_points {
        let j = match &weighted {
            Some(d) => d.sample(&mut rng),
            None => rng.gen_range(0..maps.len()),
        };
        x = maps[j].apply(x);
        if k >= BURN_IN {
            out.push(x);
        }
    }
    out
}

/// Independent chaos-game runs, one per seed, computed in parallel.
pub fn sample_attractor_seeds(sys: &IfsSystem, n_points: usize, seeds: &[u64]) -> Vec<Vec<Point>> {
    seeds
        .par_iter()
        .map(|&s| sample_attractor(sys, n_points, s))
        .collect()
}

/// Box sizes `2^-3, …, 2^-12`.
pub fn default_scales() -> Vec<f64> {
    (3..=12).map(|k| 0.5f64.powi(k)).collect()
}

/// Least-squares box-counting estimate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DimensionEstimate {
    pub value: f64,
    pub stderr: f64,
    /// `(box size, occupied boxes)`, box sizes strictly decreasing.
    pub scales_used: Vec<(f64, usize)>,
    pub fit_r2: f64,
}

/// Something that can be dropped into an origin-anchored grid.
pub trait GridSample: Sync {
    fn cell(&self, size: f64) -> (i64, i64);
}

impl GridSample for Point {
    fn cell(&self, size: f64) -> (i64, i64) {
        (
            (self.x / size).floor() as i64,
            (self.y / size).floor() as i64,
        )
    }
}

impl GridSample for f64 {
    fn cell(&self, size: f64) -> (i64, i64) {
        ((self / size).floor() as i64, 0)
    }
}

fn occupied(points: &[impl GridSample], size: f64) -> usize {
    let mut cells: Vec<(i64, i64)> = points.iter().map(|p| p.cell(size)).collect();
    cells.sort_unstable();
    cells.dedup();
    cells.len()
}

/// Slope of `log N(δ)` against `log(1/δ)`.
pub fn box_dimension<P: GridSample>(
    points: &[P],
    scales: &[f64],
) -> Result<DimensionEstimate, DimensionError> {
    if points.is_empty() {
        return Err(DimensionError::NoPoints);
    }
    let mut scales: Vec<f64> = scales.to_vec();
    scales.sort_by(|a, b| b.total_cmp(a));
    scales.dedup();
    if scales.len() < 2 {
        return Err(DimensionError::TooFewScales);
    }
    let counts: Vec<usize> = scales.par_iter().map(|&s| occupied(points, s)).collect();
    let scales_used: Vec<(f64, usize)> = scales.iter().copied().zip(counts).collect();

    let xs: Vec<f64> = scales_used.iter().map(|(s, _)| (1.0 / s).ln()).collect();
    let ys: Vec<f64> = scales_used.iter().map(|&(_, c)| (c as f64).ln()).collect();
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    let slope = sxy / sxx;
    let ss_res: f64 = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| (y - my - slope * (x - mx)).powi(2))
        .sum();
    let fit_r2 = if syy > 0.0 {
        (1.0 - ss_res / syy).clamp(0.0, 1.0)
    } else {
        1.0
    };
    let stderr = if xs.len() > 2 {
        (ss_res / (n - 2.0) / sxx).sqrt()
    } else {
        0.0
    };
    Ok(DimensionEstimate {
        value: slope.clamp(0.0, 2.0),
        stderr,
        scales_used,
        fit_r2,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::ifs::{generation_balls, Similitude, DEFAULT_BUDGET};
    use proptest::prelude::*;
    use rand::Rng;
    use std::collections::HashSet;

    #[test]
    fn moran_root_examples() {
        let s = moran_root(&[0.25; 4], 1.0).unwrap();
        assert!((s.value - 1.0).abs() < 1e-13);
        assert!(!s.exceeds_two);

        let s = moran_root(&[1.0 / 3.0; 2], 1.0).unwrap();
        assert!((s.value - 2f64.ln() / 3f64.ln()).abs() < 1e-13);
        assert!((s.value - 0.630_929_753_571_457_4).abs() < 1e-13);

        assert!(matches!(
            moran_root(&[0.5], 1.0),
            Err(DimensionError::NoPositiveRoot { .. })
        ));
        assert!(moran_root(&[], 1.0).is_err());
        assert!(moran_root(&[1.0, 0.5], 1.0).is_err());
    }

    #[test]
    fn moran_root_flags_large_roots() {
        let s = moran_root(&[0.5; 9], 1.0).unwrap();
        assert!((s.value - 9f64.log2()).abs() < 1e-12);
        assert!(s.exceeds_two);
    }

    #[test]
    fn single_map_samples_its_fixed_point() {
        let m = Similitude::homothety(0.5, Point::new(0.2, -0.1)).unwrap();
        let sys = IfsSystem::new(vec![m]).unwrap();
        let p = m.fixed_point();
        for x in sample_attractor(&sys, 50, 3) {
            assert!(x.dist(p) < 1e-15);
        }
    }

    #[test]
    fn four_corner_samples_lie_near_generation_five() {
        let sys = fixtures::four_corner();
        let balls = generation_balls(&sys, 5, DEFAULT_BUDGET).unwrap();
        let radius = 0.25f64.powi(5);
        for x in sample_attractor(&sys, 2000, 11) {
            assert!(x.norm() <= 0.5 + 1e-12);
            assert!(balls.iter().any(|b| b.center.dist(x) <= radius));
        }
    }

    #[test]
    fn rot3_seeds_agree_on_a_grid() {
        // occupancy of 0.005-cells; every occupied cell of one sample must be
        // adjacent to an occupied cell of the other, so Hausdorff ≤ 2·√2·0.005
        let sys = fixtures::rot3();
        let runs = sample_attractor_seeds(&sys, 100_000, &[1, 2]);
        let h = 0.005;
        let cells = |pts: &[Point]| pts.iter().map(|p| p.cell(h)).collect::<HashSet<_>>();
        let (a, b) = (cells(&runs[0]), cells(&runs[1]));
        let near = |c: &(i64, i64), other: &HashSet<(i64, i64)>| {
            (-1..=1).any(|dx| (-1..=1).any(|dy| other.contains(&(c.0 + dx, c.1 + dy))))
        };
        assert!(a.iter().all(|c| near(c, &b)));
        assert!(b.iter().all(|c| near(c, &a)));
    }

    #[test]
    fn sampling_is_deterministic() {
        let sys = fixtures::rot3();
        assert_eq!(
            sample_attractor(&sys, 100, 7),
            sample_attractor(&sys, 100, 7)
        );
        assert_ne!(
            sample_attractor(&sys, 100, 7),
            sample_attractor(&sys, 100, 8)
        );
    }

    #[test]
    fn weighted_selection_stays_on_the_attractor() {
        let sys = fixtures::rot3();
        let pts = sample_attractor_with(&sys, 1000, 5, MapSelection::RatioWeighted);
        assert!(pts.iter().all(|p| p.norm() <= 0.5 + 1e-12));
    }

    #[test]
    fn segment_has_dimension_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let pts: Vec<f64> = (0..100_000).map(|_| rng.gen::<f64>()).collect();
        let est = box_dimension(&pts, &default_scales()).unwrap();
        assert!((0.95..=1.05).contains(&est.value), "{est:?}");
        assert!(est.scales_used.windows(2).all(|w| w[0].0 > w[1].0));
    }

    #[test]
    fn four_corner_box_dimension() {
        let pts = sample_attractor(&fixtures::four_corner(), 1_000_000, 1);
        let est = box_dimension(&pts, &default_scales()).unwrap();
        assert!((0.9..=1.1).contains(&est.value), "{est:?}");
    }

    #[test]
    fn middle_thirds_box_dimension() {
        let pts: Vec<f64> = sample_attractor(&fixtures::middle_thirds(), 200_000, 4)
            .into_iter()
            .map(|p| p.x)
            .collect();
        let est = box_dimension(&pts, &default_scales()).unwrap();
        assert!((0.58..=0.68).contains(&est.value), "{est:?}");
    }

    #[test]
    fn moran_fixtures_bracketed_over_three_seeds() {
        for sys in [fixtures::four_corner(), fixtures::rot3()] {
            let runs = sample_attractor_seeds(&sys, 1_000_000, &[1, 2, 3]);
            let mean = runs
                .iter()
                .map(|p| box_dimension(p, &default_scales()).unwrap().value)
                .sum::<f64>()
                / 3.0;
            assert!((mean - sys.sim_dimension()).abs() <= 0.1, "{mean}");
        }
    }

    #[test]
    fn degenerate_sample() {
        let pts = vec![Point::new(0.1, 0.1); 2000];
        let est = box_dimension(&pts, &default_scales()).unwrap();
        assert_eq!(est.value, 0.0);
        assert_eq!(est.fit_r2, 1.0);
    }

    proptest! {
        #[test]
        fn root_solves_the_equation(ws in prop::collection::vec(0.01f64..0.99, 2..8)) {
            let s = moran_root(&ws, 1.0).unwrap();
            prop_assert!((moran_sum(&ws, s.value) - 1.0).abs() <= 1e-12);
        }

        #[test]
        fn adding_a_weight_raises_the_root(
            ws in prop::collection::vec(0.01f64..0.99, 2..8),
            extra in 0.01f64..0.99,
        ) {
            let base = moran_root(&ws, 1.0).unwrap().value;
            let mut more = ws.clone();
            more.push(extra);
            let grown = moran_root(&more, 1.0).unwrap().value;
            prop_assert!(grown >= base);
            // below this the residual change is lost in rounding
            if extra.powf(base) > 1e-12 {
                prop_assert!(grown > base);
            }
        }
    }
}
