//! End-to-end search for a certified lower bound on the dimension of the
//! distance set, or for the irrational-rotation witness.

use std::collections::BTreeMap;
use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::derotation::{derotate, MassRecord};
use crate::dimension::{box_dimension, default_scales, sample_attractor, DimensionEstimate};
use crate::distance::{
    cone_safe_radius, enumerate_k0_at, homothety_system, sample_pinned_distances,
    verify_cone_condition, verify_cone_separation, CantorSystem, K0Point,
};
use crate::geometry::Point;
use crate::ifs::{generation_balls, normalize_into_ball, IfsSystem, Word, DEFAULT_BUDGET};
use crate::projection::{find_good_family, scan_directions, GoodFamily};
use crate::separation::{
    check_very_strong_separation, extract_separated_subsystem, SeparatedSubsystem,
};
use crate::specfile::SpecFile;

pub const CERTIFICATE_VERSION: u32 = 1;
pub const INCLUSION_TOLERANCE: f64 = 1e-9;
pub const ASSUMPTION_LENGTH: &str = "H^1(K) > 0 asserted by user";
pub const NOTE_RIGHT_COMPOSITION: &str =
    "derotation extends bad words on the right (psi_w o psi_u), so each killing word cancels the type of w";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Budgets {
    pub enumeration: usize,
    pub separation_generations: usize,
    pub derotation_iterations: usize,
    pub scan_grid: usize,
    pub family_generations: usize,
    pub k0_depth: usize,
    pub cantor_depth: usize,
    pub cone_samples: usize,
    pub inclusion_samples: usize,
    pub alpha_floor: f64,
    pub pinned_points: usize,
}

impl Default for Budgets {
    fn default() -> Self {
        Budgets {
            enumeration: DEFAULT_BUDGET,
            separation_generations: 8,
            derotation_iterations: 12,
            scan_grid: 360,
            family_generations: 6,
            k0_depth: 8,
            cantor_depth: 4,
            cone_samples: 10_000,
            inclusion_samples: 1_000,
            alpha_floor: 1e-9,
            pinned_points: 100_000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Input,
    Normalize,
    Separation,
    Derotation,
    Scan,
    K0Pair,
    Family,
    Cone,
    Pin,
    Cantor,
    Inclusion,
    Witness,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let v = serde_json::to_value(self).map_err(|_| fmt::Error)?;
        f.write_str(v.as_str().unwrap_or("unknown"))
    }
}

#[derive(Debug, Error, Clone, PartialEq, Serialize)]
#[error("{stage} stage failed: {detail}")]
pub struct CertifyError {
    pub stage: Stage,
    pub detail: String,
}

fn fail(stage: Stage, detail: impl fmt::Display) -> CertifyError {
    CertifyError {
        stage,
        detail: detail.to_string(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Branch {
    Rational,
    Irrational,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FamilySource {
    /// `find_good_family` succeeded at the pair direction itself.
    Rerun,
    /// The scanned family, re-verified at the pair direction.
    Transferred,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DerotationRecord {
    /// Words over the separated subsystem.
    pub words: Vec<Word>,
    pub iterations: usize,
    pub mass_trace: Vec<MassRecord>,
    pub c: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConeRecord {
    pub xi: Point,
    pub alpha: f64,
    pub r_alpha: f64,
    pub samples: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct K0Pair {
    pub depth: usize,
    pub x_o: K0Point,
    pub y_o: K0Point,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PinRecord {
    /// Order of the type of the base map.
    pub m: u64,
    pub n: usize,
    /// `y_o`'s word followed by `m·n` copies of the base map.
    pub word: Word,
    pub rho_n: f64,
    pub x_n: Point,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CantorRecord {
    pub exponent: f64,
    pub depth: usize,
    pub nodes_checked: u64,
    pub min_relative_gap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RationalWitness {
    pub base_map: Word,
    pub base_point: Point,
    pub separated: SeparatedSubsystem,
    pub derotation: DerotationRecord,
    pub scan_grid: usize,
    pub scan_successes: usize,
    /// Good family found by the scan, over the derotated system.
    pub scanned: GoodFamily,
    /// Good family at the pair direction, over the derotated system.
    pub family: GoodFamily,
    pub family_source: FamilySource,
    pub k0_pair: K0Pair,
    pub cone: ConeRecord,
    pub pin: PinRecord,
    pub cantor: CantorRecord,
    pub inclusion_samples: usize,
    pub inclusion_max_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IrrationalWitness {
    pub irrational_map: Word,
    pub x_o: Point,
    /// First generation ball, lexicographically, missing `x_o`.
    pub ball_word: Word,
    pub ball_ratio: f64,
    /// `ψ_B⁻¹(x_o)`.
    pub pin: Point,
    pub pinned_points: usize,
    pub estimate: DimensionEstimate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Certificate {
    pub version: u32,
    pub spec_hash: String,
    pub spec: SpecFile,
    pub normalized: SpecFile,
    pub lambda: f64,
    pub epsilon: f64,
    pub seed: u64,
    pub budgets: Budgets,
    pub branch: Branch,
    pub assumptions: Vec<String>,
    pub notes: Vec<String>,
    pub rational: Option<RationalWitness>,
    pub irrational: Option<IrrationalWitness>,
    pub bound: Option<f64>,
    pub verified: BTreeMap<String, bool>,
}

impl Certificate {
    pub fn to_json(&self) -> String {
        crate::specfile::to_canonical_json(self)
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }
}

/// Decreasing grid `0.5, 0.25, 0.1, 0.05, 0.025, 0.01, …` down to `floor`.
pub fn alpha_grid(floor: f64) -> Vec<f64> {
    let mut out = Vec::new();
    let mut scale = 1.0;
    'outer: loop {
        for m in [5.0, 2.5, 1.0] {
            let a = m / (10.0 * scale);
            if a < floor * (1.0 - 1e-9) {
                break 'outer;
            }
            out.push(a);
        }
        scale *= 10.0;
    }
    out
}

pub fn certify(
    spec: &SpecFile,
    epsilon: f64,
    budgets: &Budgets,
    seed: u64,
) -> Result<Certificate, CertifyError> {
    if !(epsilon > 0.0 && epsilon <= 0.5) {
        return Err(fail(
            Stage::Input,
            format!("epsilon must lie in (0, 1/2], got {epsilon}"),
        ));
    }
    let maps = spec.similitudes().map_err(|e| fail(Stage::Input, e))?;
    let normalized = normalize_into_ball(maps).map_err(|e| fail(Stage::Normalize, e))?;
    let sys = &normalized.system;
    let mut cert = Certificate {
        version: CERTIFICATE_VERSION,
        spec_hash: spec.hash(),
        spec: spec.clone(),
        normalized: SpecFile::from_system(sys),
        lambda: normalized.lambda,
        epsilon,
        seed,
        budgets: *budgets,
        branch: Branch::Rational,
        assumptions: vec![ASSUMPTION_LENGTH.to_string()],
        notes: Vec::new(),
        rational: None,
        irrational: None,
        bound: None,
        verified: BTreeMap::new(),
    };
    if let Some(j) = sys.first_irrational() {
        let witness = irrational_witness(sys, j, budgets, seed)?;
        cert.branch = Branch::Irrational;
        cert.notes.push(
            "irrational rotation present: the bound is not computed, an empirical estimate is attached"
                .into(),
        );
        cert.verified.insert("witness_ball".into(), true);
        cert.irrational = Some(witness);
        return Ok(cert);
    }
    cert.notes.push(NOTE_RIGHT_COMPOSITION.into());
    let witness = rational_witness(sys, epsilon, budgets, seed, &mut cert.verified)?;
    cert.bound = Some(witness.cantor.exponent);
    cert.rational = Some(witness);
    Ok(cert)
}

fn rational_witness(
    sys: &IfsSystem,
    epsilon: f64,
    b: &Budgets,
    seed: u64,
    verified: &mut BTreeMap<String, bool>,
) -> Result<RationalWitness, CertifyError> {
    let j = 0;
    let base_point = sys.map(j).fixed_point();

    let separated =
        extract_separated_subsystem(sys, 1.0 - epsilon, b.separation_generations, b.enumeration)
            .map_err(|e| fail(Stage::Separation, e))?;
    let s_sys = separated
        .system(sys)
        .map_err(|e| fail(Stage::Separation, e))?;
    verified.insert("separation".into(), check_very_strong_separation(&s_sys));

    let der = derotate(&s_sys, epsilon, b.derotation_iterations, b.enumeration)
        .map_err(|e| fail(Stage::Derotation, e))?;
    let d_sys = &der.system;
    verified.insert(
        "derotation".into(),
        d_sys.maps().iter().all(|m| m.isometry().is_identity()),
    );

    let mut families = scan_directions(
        d_sys,
        epsilon,
        b.scan_grid,
        b.family_generations,
        b.enumeration,
    );
    let scan_successes = families.len();
    if families.is_empty() {
        return Err(fail(
            Stage::Scan,
            format!(
                "no good direction among {} grid directions up to generation {} ({} derotated maps)",
                b.scan_grid,
                b.family_generations,
                d_sys.len()
            ),
        ));
    }
    families.sort_by(|a, b| b.stability.total_cmp(&a.stability));

    let (k0, depth, scanned, x_o, y_o) = find_k0_pair(sys, base_point, &families, b)?;
    let (x_o, y_o) = (k0[x_o].clone(), k0[y_o].clone());
    let e_pair = (x_o.point - y_o.point).normalized();

    let (family, family_source) =
        match find_good_family(d_sys, e_pair, epsilon, b.family_generations, b.enumeration) {
            Ok(f) => (f, FamilySource::Rerun),
            Err(_) => {
                let sep = scanned.min_gap_at(d_sys, e_pair);
                let f = GoodFamily {
                    direction: e_pair,
                    words: scanned.words.clone(),
                    exponent: scanned.exponent,
                    separation: sep,
                    stability: sep / 4.0,
                    generation: scanned.generation,
                };
                (f, FamilySource::Transferred)
            }
        };
    family
        .verify(d_sys, epsilon)
        .map_err(|e| fail(Stage::Family, e))?;
    verified.insert("family".into(), true);
    verified.insert("k0_pair".into(), true);

    let g = homothety_system(&family.balls(d_sys)).map_err(|e| fail(Stage::Cone, e))?;
    let xi = e_pair.perp();
    let mut alpha = None;
    for a in alpha_grid(b.alpha_floor) {
        if verify_cone_separation(&g, xi, a, 1, b.enumeration).map_err(|e| fail(Stage::Cone, e))? {
            alpha = Some(a);
            break;
        }
    }
    let alpha = alpha.ok_or_else(|| {
        fail(
            Stage::Cone,
            format!(
                "cone separation fails for every alpha down to {}",
                b.alpha_floor
            ),
        )
    })?;
    let r_alpha = cone_safe_radius(alpha);
    verified.insert("cone_separation".into(), true);

    let m = sys
        .map(j)
        .isometry()
        .order()
        .map_err(|e| fail(Stage::Pin, e))?;
    let diff = x_o.point - y_o.point;
    let need = r_alpha + base_point.norm();
    let mut n = 1usize;
    let (word, rho_n, x_n) = loop {
        let word = y_o.word.concat(&Word::repeat(j, m as usize * n));
        let map = sys.word_map(&word);
        let rho = map.ratio();
        if !(rho > 0.0) {
            return Err(fail(Stage::Pin, "pin ratio underflowed"));
        }
        let x_n = base_point + (1.0 / rho) * diff;
        if (x_n - base_point).norm() >= need {
            debug_assert!(map.isometry().is_identity());
            break (word, rho, x_n);
        }
        n += 1;
    };
    if x_n.norm() < r_alpha {
        return Err(fail(
            Stage::Pin,
            format!("|x_n| = {} below r_alpha = {r_alpha}", x_n.norm()),
        ));
    }
    verified.insert("pin".into(), true);

    if !verify_cone_condition(x_n, xi, alpha, b.cone_samples, seed) {
        return Err(fail(
            Stage::Cone,
            format!("cone condition fails at x_n for alpha = {alpha}"),
        ));
    }
    verified.insert("cone_condition".into(), true);

    let cantor = CantorSystem::new(&g, x_n, b.cantor_depth).map_err(|e| fail(Stage::Cantor, e))?;
    let report = cantor.validate().map_err(|e| fail(Stage::Cantor, e))?;
    if (cantor.exponent - family.exponent).abs() > 1e-9 {
        return Err(fail(
            Stage::Cantor,
            "Cantor exponent differs from the family exponent",
        ));
    }
    verified.insert("cantor".into(), true);

    let psi_n = sys.word_map(&word);
    let inclusion_max_error = sample_attractor(&g, b.inclusion_samples, seed.wrapping_add(1))
        .into_iter()
        .map(|y| (rho_n * x_n.dist(y) - x_o.point.dist(psi_n.apply(y))).abs())
        .fold(0.0, f64::max);
    if !(inclusion_max_error <= INCLUSION_TOLERANCE) {
        return Err(fail(
            Stage::Inclusion,
            format!("inclusion identity off by {inclusion_max_error}"),
        ));
    }
    verified.insert("inclusion".into(), true);

    Ok(RationalWitness {
        base_map: Word::single(j),
        base_point,
        separated,
        derotation: DerotationRecord {
            words: der.words,
            iterations: der.iterations,
            mass_trace: der.mass_trace,
            c: der.c,
        },
        scan_grid: b.scan_grid,
        scan_successes,
        scanned,
        family,
        family_source,
        k0_pair: K0Pair { depth, x_o, y_o },
        cone: ConeRecord {
            xi,
            alpha,
            r_alpha,
            samples: b.cone_samples,
            seed,
        },
        pin: PinRecord {
            m,
            n,
            word,
            rho_n,
            x_n,
        },
        cantor: CantorRecord {
            exponent: cantor.exponent,
            depth: b.cantor_depth,
            nodes_checked: report.nodes_checked,
            min_relative_gap: report.min_relative_gap,
        },
        inclusion_samples: b.inclusion_samples,
        inclusion_max_error,
    })
}

/// K₀ at increasing depth until some pair direction falls within the
/// stability radius of a good direction, trying families by decreasing
/// radius. Stops once the number of pairs would exceed the budget.
#[allow(clippy::type_complexity)]
fn find_k0_pair(
    sys: &IfsSystem,
    base: Point,
    families: &[GoodFamily],
    b: &Budgets,
) -> Result<(Vec<K0Point>, usize, GoodFamily, usize, usize), CertifyError> {
    let mut tried = (0, 0);
    for depth in 1..=b.k0_depth {
        let k0 = match enumerate_k0_at(sys, base, depth, b.enumeration) {
            Ok(k0) => k0,
            Err(_) if depth > 1 => break,
            Err(e) => return Err(fail(Stage::K0Pair, e)),
        };
        let pairs = (k0.len() as u128) * (k0.len() as u128).saturating_sub(1) / 2;
        if pairs > b.enumeration as u128 && depth > 1 {
            break;
        }
        tried = (depth, k0.len());
        let hit = families
            .iter()
            .find_map(|f| best_pair(&k0, f.direction, f.stability).map(|(x, y)| (f.clone(), x, y)));
        if let Some((f, x, y)) = hit {
            return Ok((k0, depth, f, x, y));
        }
    }
    Err(fail(
        Stage::K0Pair,
        format!(
            "no K0 pair within delta of any good direction at depth {} ({} K0 points, {} directions)",
            tried.0,
            tried.1,
            families.len()
        ),
    ))
}

/// Indices `(x, y)` of the longest K₀ chord whose direction, oriented
/// along `e`, is within chord distance `delta` of `e`. Ties go to the
/// lexicographically least pair of words.
fn best_pair(k0: &[K0Point], e: Point, delta: f64) -> Option<(usize, usize)> {
    let better = |a: (f64, usize, usize), b: (f64, usize, usize)| {
        let ka = (&k0[a.1].word, &k0[a.2].word);
        let kb = (&k0[b.1].word, &k0[b.2].word);
        if a.0 > b.0 || (a.0 == b.0 && ka < kb) {
            a
        } else {
            b
        }
    };
    (0..k0.len())
        .into_par_iter()
        .filter_map(|i| {
            let mut best: Option<(f64, usize, usize)> = None;
            for k in i + 1..k0.len() {
                let v = k0[i].point - k0[k].point;
                let len = v.norm();
                if len == 0.0 {
                    continue;
                }
                let (u, x, y) = if v.dot(e) >= 0.0 {
                    ((1.0 / len) * v, i, k)
                } else {
                    ((-1.0 / len) * v, k, i)
                };
                if (u - e).norm() < delta {
                    let c = (len, x, y);
                    best = Some(best.map_or(c, |b| better(c, b)));
                }
            }
            best
        })
        .reduce_with(better)
        .map(|(_, x, y)| (x, y))
}

fn irrational_witness(
    sys: &IfsSystem,
    j: usize,
    b: &Budgets,
    seed: u64,
) -> Result<IrrationalWitness, CertifyError> {
    let x_o = sys.map(0).fixed_point();
    let mut found = None;
    for n in 1..=b.separation_generations {
        let balls = generation_balls(sys, n, b.enumeration).map_err(|e| fail(Stage::Witness, e))?;
        if let Some(ball) = balls
            .into_iter()
            .find(|ball| x_o.dist(ball.center) > ball.radius())
        {
            found = Some(ball);
            break;
        }
    }
    let ball = found.ok_or_else(|| {
        fail(
            Stage::Witness,
            format!(
                "every ball up to generation {} contains x_o",
                b.separation_generations
            ),
        )
    })?;
    let map = sys.word_map(&ball.word);
    let pin = map.apply_inverse(x_o);
    let dists = sample_pinned_distances(sys, pin, b.pinned_points, seed);
    let estimate = box_dimension(&dists, &default_scales()).map_err(|e| fail(Stage::Witness, e))?;
    Ok(IrrationalWitness {
        irrational_map: Word::single(j),
        x_o,
        ball_word: ball.word,
        ball_ratio: map.ratio(),
        pin,
        pinned_points: b.pinned_points,
        estimate,
    })
}
