//! Small reference systems shared by tests, examples and the CLI.

use crate::geometry::Point;
use crate::ifs::{Angle, IfsSystem, IsometryType, Similitude};

fn rational(num: i64, den: i64, reflect: bool) -> IsometryType {
    IsometryType::new(
        Angle::rational(num, den).expect("valid fixture angle"),
        reflect,
    )
}

fn system(maps: Vec<Similitude>) -> IfsSystem {
    IfsSystem::new(maps).expect("valid fixture system")
}

fn homothety(r: f64, x: f64, y: f64) -> Similitude {
    Similitude::homothety(r, Point::new(x, y)).expect("valid fixture map")
}

/// Four maps of ratio 1/4 towards the corners `(±1/4, ±1/4)`.
pub fn four_corner() -> IfsSystem {
    four_corner_with_offset(0.25)
}

/// The four-corner layout with translations `(±t, ±t)`.
pub fn four_corner_with_offset(t: f64) -> IfsSystem {
    system(vec![
        homothety(0.25, -t, -t),
        homothety(0.25, -t, t),
        homothety(0.25, t, -t),
        homothety(0.25, t, t),
    ])
}

/// Ratio 1/3; the first map also rotates by a quarter turn.
pub fn rot3() -> IfsSystem {
    let r = 1.0 / 3.0;
    system(vec![
        Similitude::new(r, rational(1, 4, false), Point::new(-0.3, 0.0)).unwrap(),
        homothety(r, 0.3, 0.0),
        homothety(r, 0.0, 0.3),
    ])
}

/// Ratio 1/2, angle 1/3, reflected.
pub fn refl1() -> Similitude {
    Similitude::new(0.5, rational(1, 3, true), Point::ORIGIN).unwrap()
}

/// Middle-thirds Cantor set on the segment `[-1/2, 1/2] × {0}`.
pub fn middle_thirds() -> IfsSystem {
    let r = 1.0 / 3.0;
    system(vec![
        homothety(r, -1.0 / 3.0, 0.0),
        homothety(r, 1.0 / 3.0, 0.0),
    ])
}

/// Three collinear maps of ratio 0.3 spaced by 0.34; very strongly separated
/// with dimension `ln 3 / ln(10/3)`.
pub fn collinear3() -> IfsSystem {
    system(vec![
        homothety(0.3, -0.34, 0.0),
        homothety(0.3, 0.0, 0.0),
        homothety(0.3, 0.34, 0.0),
    ])
}
