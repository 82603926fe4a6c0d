//! Very strong separation and greedy Vitali extraction of separated
//! subsystems.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dimension::moran_root;
use crate::grid::BallIndex;
use crate::ifs::{generation_balls, Ball, IfsError, IfsSystem, Word};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SeparationError {
    #[error(transparent)]
    Ifs(#[from] IfsError),
    #[error(
        "no generation up to {max_generation} reaches dimension {target}; best was {best} at generation {best_generation}"
    )]
    MaxGenerationExhausted {
        target: f64,
        max_generation: usize,
        best: f64,
        best_generation: usize,
    },
    #[error("map {0} has a rational angle; an irrational one is required")]
    RationalMap(usize),
    #[error("the subsystem has no words")]
    EmptySubsystem,
}

/// A disjoint family of generation-`n` balls and its Moran dimension.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeparatedSubsystem {
    pub words: Vec<Word>,
    pub diameters: Vec<f64>,
    pub sub_dimension: f64,
    pub generation: usize,
}

impl SeparatedSubsystem {
    pub fn system(&self, base: &IfsSystem) -> Result<IfsSystem, IfsError> {
        base.subsystem(&self.words)
    }
}

/// First-generation balls pairwise disjoint (strictly, as closed balls).
pub fn check_very_strong_separation(sys: &IfsSystem) -> bool {
    let balls: Vec<Ball> = (0..sys.len()).map(|j| sys.ball(&Word::single(j))).collect();
    pairwise_disjoint(&balls)
}

/// Exact pairwise disjointness, pruned with a spatial index.
pub fn pairwise_disjoint(balls: &[Ball]) -> bool {
    let mut index = BallIndex::new();
    for (i, b) in balls.iter().enumerate() {
        index.insert(i, b.center, b.diameter);
    }
    balls.par_iter().enumerate().all(|(i, b)| {
        index.for_each_near(
            b.center,
            b.diameter,
            |h| 0.5 * (h + b.diameter),
            |j| j == i || balls[j].diameter < b.diameter || b.is_disjoint(&balls[j]),
        )
    })
}

fn vitali_order(balls: &[Ball]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..balls.len()).collect();
    order.par_sort_by(|&a, &b| {
        balls[b]
            .diameter
            .total_cmp(&balls[a].diameter)
            .then_with(|| balls[a].word.cmp(&balls[b].word))
    });
    order
}

/// Greedy largest-first selection of pairwise disjoint balls. Ties in
/// diameter go to the lexicographically smaller word. The output keeps the
/// selection order.
pub fn vitali_disjoint_subfamily(balls: &[Ball]) -> Vec<Ball> {
    let mut index = BallIndex::new();
    let mut selected: Vec<Ball> = Vec::new();
    for i in vitali_order(balls) {
        let b = &balls[i];
        let free = index.for_each_near(
            b.center,
            b.diameter,
            |h| 0.5 * (h + b.diameter),
            |k| b.is_disjoint(&selected[k]),
        );
        if free {
            index.insert(selected.len(), b.center, b.diameter);
            selected.push(b.clone());
        }
    }
    selected
}

/// Every input center lies within `5/2·d(S)` of the center of a selected
/// ball `S` with `d(S) ≥ d(B)`.
pub fn verify_five_cover(input: &[Ball], selected: &[Ball]) -> bool {
    let mut index = BallIndex::new();
    for (i, s) in selected.iter().enumerate() {
        index.insert(i, s.center, s.diameter);
    }
    input.par_iter().all(|b| {
        !index.for_each_near(
            b.center,
            b.diameter,
            |h| 2.5 * h,
            |k| {
                let s = &selected[k];
                !(s.diameter >= b.diameter && s.center.dist(b.center) <= 2.5 * s.diameter)
            },
        )
    })
}

fn family_dimension(diameters: &[f64]) -> f64 {
    if diameters.len() < 2 {
        return 0.0;
    }
    moran_root(diameters, 1.0).map(|r| r.value).unwrap_or(0.0)
}

/// Vitali families of successive generations until one has Moran dimension
/// above `target_dim`.
pub fn extract_separated_subsystem(
    sys: &IfsSystem,
    target_dim: f64,
    max_generation: usize,
    budget: usize,
) -> Result<SeparatedSubsystem, SeparationError> {
    let (mut best, mut best_generation) = (f64::NEG_INFINITY, 0);
    for n in 1..=max_generation {
        let balls = generation_balls(sys, n, budget)?;
        let chosen = vitali_disjoint_subfamily(&balls);
        let diameters: Vec<f64> = chosen.iter().map(|b| b.diameter).collect();
        let s = family_dimension(&diameters);
        if s > target_dim {
            let mut chosen = chosen;
            chosen.sort_by(|a, b| a.word.cmp(&b.word));
            return Ok(SeparatedSubsystem {
                diameters: chosen.iter().map(|b| b.diameter).collect(),
                words: chosen.into_iter().map(|b| b.word).collect(),
                sub_dimension: s,
                generation: n,
            });
        }
        if s > best {
            best = s;
            best_generation = n;
        }
    }
    Err(SeparationError::MaxGenerationExhausted {
        target: target_dim,
        max_generation,
        best: best.max(0.0),
        best_generation,
    })
}

/// Extends the smallest selected word by the irrational map `j`, so the
/// subsystem keeps an irrational rotation.
pub fn preserve_irrational(
    sys: &IfsSystem,
    sub: &SeparatedSubsystem,
    j: usize,
) -> Result<SeparatedSubsystem, SeparationError> {
    if j >= sys.len() {
        return Err(IfsError::IndexOutOfRange {
            index: j,
            len: sys.len(),
        }
        .into());
    }
    if sys.map(j).isometry().is_rational() {
        return Err(SeparationError::RationalMap(j));
    }
    let k = (0..sub.words.len())
        .min_by(|&a, &b| {
            sub.diameters[a]
                .total_cmp(&sub.diameters[b])
                .then_with(|| sub.words[a].cmp(&sub.words[b]))
        })
        .ok_or(SeparationError::EmptySubsystem)?;
    let mut out = sub.clone();
    out.words[k] = sub.words[k].pushed(j);
    out.diameters[k] *= sys.map(j).ratio();
    out.sub_dimension = family_dimension(&out.diameters);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::geometry::Point;
    use crate::ifs::{Angle, IsometryType, Similitude, DEFAULT_BUDGET};
    use proptest::prelude::*;

    fn ball(x: f64, y: f64, d: f64, w: Vec<u32>) -> Ball {
        Ball {
            center: Point::new(x, y),
            diameter: d,
            word: Word(w),
        }
    }

    fn brute_disjoint(balls: &[Ball]) -> bool {
        (0..balls.len()).all(|i| (i + 1..balls.len()).all(|j| balls[i].is_disjoint(&balls[j])))
    }

    fn brute_cover(input: &[Ball], sel: &[Ball]) -> bool {
        input.iter().all(|b| {
            sel.iter()
                .any(|s| s.diameter >= b.diameter && s.center.dist(b.center) <= 2.5 * s.diameter)
        })
    }

    #[test]
    fn very_strong_separation_examples() {
        assert!(check_very_strong_separation(&fixtures::four_corner()));
        assert!(check_very_strong_separation(&fixtures::rot3()));
        assert!(!check_very_strong_separation(
            &fixtures::four_corner_with_offset(0.0)
        ));
        // touching closed balls are not disjoint
        assert!(!check_very_strong_separation(
            &fixtures::four_corner_with_offset(0.125)
        ));
    }

    #[test]
    fn vitali_examples() {
        let two = vec![ball(0.0, 0.0, 0.2, vec![0]), ball(0.5, 0.0, 0.2, vec![1])];
        assert_eq!(vitali_disjoint_subfamily(&two).len(), 2);

        let nested = vec![ball(0.0, 0.0, 0.2, vec![0]), ball(0.0, 0.0, 0.4, vec![1])];
        let got = vitali_disjoint_subfamily(&nested);
        assert_eq!(got.len(), 1);
        assert_eq!(got[0].diameter, 0.4);

        let g2 = generation_balls(&fixtures::four_corner(), 2, DEFAULT_BUDGET).unwrap();
        assert!(brute_disjoint(&g2));
        assert_eq!(vitali_disjoint_subfamily(&g2).len(), 16);
    }

    #[test]
    fn vitali_tie_break_prefers_smaller_word() {
        let pair = vec![ball(0.05, 0.0, 0.2, vec![1]), ball(0.0, 0.0, 0.2, vec![0])];
        let got = vitali_disjoint_subfamily(&pair);
        assert_eq!(got.len(), 1);
        assert_eq!(got[0].word, Word(vec![0]));
    }

    #[test]
    fn extract_examples() {
        let fc = fixtures::four_corner();
        let sub = extract_separated_subsystem(&fc, 0.9, 6, DEFAULT_BUDGET).unwrap();
        assert_eq!(sub.generation, 1);
        assert_eq!(sub.words.len(), 4);
        assert!((sub.sub_dimension - 1.0).abs() < 1e-12);

        assert!(matches!(
            extract_separated_subsystem(&fc, 1.99, 3, DEFAULT_BUDGET),
            Err(SeparationError::MaxGenerationExhausted { .. })
        ));
    }

    #[test]
    fn extract_on_overlapping_corners() {
        let sys = fixtures::four_corner_with_offset(0.125);
        let sub = extract_separated_subsystem(&sys, 0.5, 6, DEFAULT_BUDGET).unwrap();
        assert!(sub.sub_dimension > 0.5);
        // independent recomputation
        let balls: Vec<Ball> = sub.words.iter().map(|w| sys.ball(w)).collect();
        assert!(brute_disjoint(&balls));
        let roots = moran_root(&sub.diameters, 1.0).unwrap().value;
        assert!((roots - sub.sub_dimension).abs() < 1e-12);
        let derived = sub.system(&sys).unwrap();
        assert!(check_very_strong_separation(&derived));
        let all = generation_balls(&sys, sub.generation, DEFAULT_BUDGET).unwrap();
        assert!(brute_cover(&all, &balls));
        // the dimensions found along the way do not decrease
        let s: Vec<f64> = (1..=sub.generation)
            .map(|n| {
                let b = generation_balls(&sys, n, DEFAULT_BUDGET).unwrap();
                let d: Vec<f64> = vitali_disjoint_subfamily(&b)
                    .iter()
                    .map(|b| b.diameter)
                    .collect();
                family_dimension(&d)
            })
            .collect();
        assert!(s.windows(2).all(|w| w[1] >= w[0] - 1e-12), "{s:?}");
    }

    fn irrational_system() -> IfsSystem {
        let t = IsometryType::new(Angle::irrational(0.1234), false);
        IfsSystem::new(vec![
            Similitude::new(0.25, t, Point::new(-0.25, -0.25)).unwrap(),
            Similitude::homothety(0.25, Point::new(-0.25, 0.25)).unwrap(),
            Similitude::homothety(0.25, Point::new(0.25, -0.25)).unwrap(),
            Similitude::homothety(0.25, Point::new(0.25, 0.25)).unwrap(),
        ])
        .unwrap()
    }

    #[test]
    fn preserve_irrational_examples() {
        let sys = irrational_system();
        let words: Vec<Word> = generation_balls(&sys, 2, DEFAULT_BUDGET)
            .unwrap()
            .into_iter()
            .map(|b| b.word)
            .collect();
        let sub = SeparatedSubsystem {
            diameters: vec![1.0 / 16.0; 16],
            words,
            sub_dimension: 1.0,
            generation: 2,
        };
        let out = preserve_irrational(&sys, &sub, 0).unwrap();
        assert_eq!(
            out.diameters.iter().filter(|&&d| d == 1.0 / 64.0).count(),
            1
        );
        let mut expected = vec![1.0 / 16.0; 15];
        expected.push(1.0 / 64.0);
        let oracle = moran_root(&expected, 1.0).unwrap().value;
        assert!((out.sub_dimension - oracle).abs() < 1e-12);
        assert!(out.sub_dimension < sub.sub_dimension);
        assert_eq!(out.words[0], Word(vec![0, 0, 0]));
        assert!(check_very_strong_separation(&out.system(&sys).unwrap()));

        let twice = preserve_irrational(&sys, &out, 0).unwrap();
        assert_eq!(twice.words[0], Word(vec![0, 0, 0, 0]));

        let one = SeparatedSubsystem {
            words: vec![Word(vec![1])],
            diameters: vec![0.25],
            sub_dimension: 0.0,
            generation: 1,
        };
        let out = preserve_irrational(&sys, &one, 0).unwrap();
        assert_eq!(out.words, vec![Word(vec![1, 0])]);
        assert!(out.system(&sys).is_ok());

        assert!(matches!(
            preserve_irrational(&sys, &sub, 1),
            Err(SeparationError::RationalMap(1))
        ));
    }

    fn arb_balls() -> impl Strategy<Value = Vec<Ball>> {
        prop::collection::vec((-0.5f64..0.5, -0.5f64..0.5, 0.001f64..0.2), 1..300).prop_map(|v| {
            v.into_iter()
                .enumerate()
                .map(|(i, (x, y, d))| ball(x, y, d, vec![i as u32]))
                .collect()
        })
    }

    proptest! {
        #[test]
        fn vitali_output_is_disjoint_and_covers(balls in arb_balls()) {
            let sel = vitali_disjoint_subfamily(&balls);
            prop_assert!(brute_disjoint(&sel));
            prop_assert!(brute_cover(&balls, &sel));
            prop_assert!(verify_five_cover(&balls, &sel));
            prop_assert_eq!(pairwise_disjoint(&balls), brute_disjoint(&balls));
        }

        #[test]
        fn extracted_systems_are_separated(t in 0.05f64..0.25, target in 0.3f64..0.7) {
            let sys = fixtures::four_corner_with_offset(t);
            if let Ok(sub) = extract_separated_subsystem(&sys, target, 4, DEFAULT_BUDGET) {
                prop_assert!(check_very_strong_separation(&sub.system(&sys).unwrap()));
                prop_assert!(sub.sub_dimension > target);
            }
        }
    }
}
