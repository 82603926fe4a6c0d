//! Independent re-validation of certificates.
//!
//! Everything here is recomputed from the normalized spec with the `ifs`
//! primitives (maps, word maps, balls, type composition) and local
//! arithmetic. Distances and projections are evaluated in double-double
//! precision.

use std::cmp::Ordering;
use std::collections::{BTreeMap, HashMap, VecDeque};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::certify::{
    Branch, Certificate, FamilySource, IrrationalWitness, RationalWitness, INCLUSION_TOLERANCE,
};
use crate::geometry::Point;
use crate::ifs::{normalize_into_ball, IfsSystem, IsometryType, Word};
use crate::projection::GoodFamily;

/// Refuses Cantor checks with more nodes than this.
pub const MAX_CANTOR_NODES: u128 = 4_000_000_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckOutcome {
    pub ok: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckReport {
    pub ok: bool,
    pub checks: BTreeMap<String, CheckOutcome>,
}

impl CheckReport {
    pub fn failures(&self) -> Vec<(&str, &str)> {
        self.checks
            .iter()
            .filter(|(_, c)| !c.ok)
            .map(|(k, c)| (k.as_str(), c.detail.as_str()))
            .collect()
    }
}

type Outcome = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        if !($cond) {
            return Err(format!($($fmt)+));
        }
    };
}

pub fn check_certificate(cert: &Certificate) -> CheckReport {
    let mut checks: BTreeMap<String, CheckOutcome> = BTreeMap::new();
    let mut record = |name: &str, r: Outcome| {
        let (ok, detail) = match r {
            Ok(d) => (true, d),
            Err(d) => (false, d),
        };
        checks.insert(name.to_string(), CheckOutcome { ok, detail });
    };

    record("spec_hash", check_hash(cert));
    let sys = match check_normalization(cert) {
        Ok(sys) => {
            record("normalization", Ok(format!("lambda = {}", cert.lambda)));
            Some(sys)
        }
        Err(e) => {
            record("normalization", Err(e));
            None
        }
    };
    record(
        "recorded_flags",
        if cert.verified.values().all(|&v| v) {
            Ok(format!("{} flags", cert.verified.len()))
        } else {
            Err("a recorded stage flag is false".into())
        },
    );
    if let Some(sys) = sys {
        match (cert.branch, &cert.rational, &cert.irrational) {
            (Branch::Rational, Some(w), None) => {
                for (name, r) in check_rational(cert, &sys, w) {
                    record(name, r);
                }
            }
            (Branch::Irrational, None, Some(w)) => {
                for (name, r) in check_irrational(cert, &sys, w) {
                    record(name, r);
                }
            }
            _ => record("branch", Err("branch and witnesses disagree".into())),
        }
    }
    let ok = checks.values().all(|c| c.ok);
    CheckReport { ok, checks }
}

fn check_hash(cert: &Certificate) -> Outcome {
    let h = cert.spec.hash();
    ensure!(
        h == cert.spec_hash,
        "hash {h} differs from recorded {}",
        cert.spec_hash
    );
    Ok(h)
}

fn check_normalization(cert: &Certificate) -> Result<IfsSystem, String> {
    ensure!(
        cert.epsilon > 0.0 && cert.epsilon <= 0.5,
        "epsilon {} outside (0, 1/2]",
        cert.epsilon
    );
    let maps = cert.spec.similitudes().map_err(|e| e.to_string())?;
    let redone = normalize_into_ball(maps).map_err(|e| e.to_string())?;
    let sys = cert.normalized.system().map_err(|e| e.to_string())?;
    ensure!(
        redone.system == sys,
        "normalized system differs from the input system"
    );
    ensure!(redone.lambda == cert.lambda, "lambda differs");
    for (i, m) in sys.maps().iter().enumerate() {
        let reach = m.translation().norm() + 0.5 * m.ratio();
        ensure!(reach <= 0.5 + 1e-12, "map {i} leaves the reference ball");
    }
    Ok(sys)
}

fn check_rational(
    cert: &Certificate,
    sys: &IfsSystem,
    w: &RationalWitness,
) -> Vec<(&'static str, Outcome)> {
    let eps = cert.epsilon;
    let mut out = Vec::new();
    let all_rational = (0..sys.len()).all(|j| sys.map(j).isometry().is_rational());
    out.push((
        "branch",
        if all_rational {
            Ok("all rotations rational".into())
        } else {
            Err("rational branch with an irrational map".into())
        },
    ));
    out.push(("separation", check_separation(sys, w, eps)));
    let s_sys = match sys.subsystem(&w.separated.words) {
        Ok(s) => s,
        Err(e) => {
            out.push(("derotation", Err(e.to_string())));
            return out;
        }
    };
    out.push(("derotation", check_derotation(&s_sys, w, eps)));
    let d_words: Vec<Word> = w
        .derotation
        .words
        .iter()
        .map(|u| u.flatten(&w.separated.words))
        .collect();
    let to_base = |u: &Word| u.flatten(&d_words);
    out.push(("scan", check_scan(sys, w, eps, &to_base)));
    out.push(("family", check_family(sys, &w.family, eps, &to_base)));
    out.push(("k0_pair", check_k0_pair(sys, w)));
    let g = family_balls(sys, &w.family, &to_base);
    out.push(("cone", check_cone(w, &g)));
    out.push(("pin", check_pin(sys, w)));
    out.push(("cantor", check_cantor(cert, w, &g)));
    out.push(("inclusion", check_inclusion(cert, sys, w, &g)));
    out
}

fn check_separation(sys: &IfsSystem, w: &RationalWitness, eps: f64) -> Outcome {
    let sep = &w.separated;
    ensure!(sep.words.len() >= 2, "fewer than two separated maps");
    ensure!(
        sep.words.len() == sep.diameters.len(),
        "diameter list length"
    );
    let mut balls = Vec::with_capacity(sep.words.len());
    for (u, &d) in sep.words.iter().zip(&sep.diameters) {
        sys.check_word(u).map_err(|e| e.to_string())?;
        ensure!(
            u.len() == sep.generation,
            "word {u} not of generation {}",
            sep.generation
        );
        let b = sys.ball(u);
        ensure!(
            (b.diameter - d).abs() <= 1e-15 * d,
            "recorded diameter of {u}"
        );
        balls.push(b);
    }
    for i in 0..balls.len() {
        for k in i + 1..balls.len() {
            let gap = dd_dist(balls[i].center, balls[k].center)
                - Dd::from(0.5 * (balls[i].diameter + balls[k].diameter));
            ensure!(
                gap.is_positive(),
                "balls {} and {} meet",
                sep.words[i],
                sep.words[k]
            );
        }
    }
    let s = moran(&sep.diameters);
    ensure!(
        s > 1.0 - eps,
        "separated dimension {s} not above {}",
        1.0 - eps
    );
    Ok(format!("{} balls, dimension {s}", balls.len()))
}

fn check_derotation(s_sys: &IfsSystem, w: &RationalWitness, eps: f64) -> Outcome {
    let rec = &w.derotation;
    ensure!(!rec.words.is_empty(), "no derotated words");
    let mut sorted = rec.words.clone();
    sorted.sort();
    for pair in sorted.windows(2) {
        ensure!(
            !pair[1].0.starts_with(&pair[0].0),
            "{} is a prefix of {}",
            pair[0],
            pair[1]
        );
    }
    let mut ratios = Vec::with_capacity(rec.words.len());
    for u in &rec.words {
        s_sys.check_word(u).map_err(|e| e.to_string())?;
        ensure!(
            s_sys.word_type(u).is_identity(),
            "word {u} has a nontrivial type"
        );
        ratios.push(s_sys.word_map(u).ratio());
    }
    let s = moran(&ratios);
    ensure!(
        s > 1.0 - eps,
        "derotated dimension {s} not above {}",
        1.0 - eps
    );

    let t = moran(&s_sys.ratios());
    let c = type_radius(s_sys)?;
    ensure!(c <= rec.c, "recorded killing length {} below {c}", rec.c);
    let rmin = s_sys.ratios().into_iter().fold(f64::INFINITY, f64::min);
    let factor = 1.0 - rmin.powf(t).powi(c as i32);
    for (i, m) in rec.mass_trace.iter().enumerate() {
        ensure!(
            (m.good + m.bad - 1.0).abs() <= 1e-10,
            "mass not conserved at iteration {i}"
        );
        if i > 0 {
            let prev = rec.mass_trace[i - 1].bad;
            ensure!(
                m.bad <= prev * factor + 1e-12,
                "bad mass decays too slowly at iteration {i}"
            );
        }
    }
    let last = rec.mass_trace.last().ok_or("empty mass trace")?;
    let good: f64 = ratios.iter().map(|r| r.powf(t)).sum();
    ensure!(
        (good - last.good).abs() <= 1e-9,
        "good mass {good} vs recorded {}",
        last.good
    );
    let target: f64 = ratios.iter().map(|r| r.powf(1.0 - eps)).sum();
    ensure!(target > 1.0, "sum of r^(1-eps) is {target}");
    Ok(format!(
        "{} maps, dimension {s}, killing length {c}",
        ratios.len()
    ))
}

/// Largest shortest-word length over the type group generated by `sys`.
fn type_radius(sys: &IfsSystem) -> Result<usize, String> {
    let gens: Vec<IsometryType> = sys.maps().iter().map(|m| m.isometry()).collect();
    let mut dist: HashMap<IsometryType, usize> = HashMap::new();
    dist.insert(IsometryType::IDENTITY, 0);
    let mut queue = VecDeque::from([IsometryType::IDENTITY]);
    while let Some(t) = queue.pop_front() {
        let d = dist[&t];
        for g in &gens {
            let next = t.compose(*g);
            if !dist.contains_key(&next) {
                ensure!(dist.len() < 10_000_000, "type group too large to check");
                dist.insert(next, d + 1);
                queue.push_back(next);
            }
        }
    }
    Ok(dist.values().copied().max().unwrap_or(0))
}

fn check_scan(
    sys: &IfsSystem,
    w: &RationalWitness,
    eps: f64,
    to_base: &impl Fn(&Word) -> Word,
) -> Outcome {
    let f = &w.scanned;
    let n = w.scan_grid as f64;
    let k = (f.direction.angle() * n / std::f64::consts::PI).round();
    ensure!(
        Point::unit(std::f64::consts::PI * k / n) == f.direction,
        "scanned direction is not on the grid"
    );
    check_family(sys, f, eps, to_base)?;
    let e = w.family.direction;
    let chord = (e - f.direction).norm();
    ensure!(
        chord < f.stability,
        "pair direction {chord} away from the scanned one, radius {}",
        f.stability
    );
    if w.family_source == FamilySource::Transferred {
        ensure!(
            w.family.words == f.words,
            "transferred family changed its words"
        );
    }
    Ok(format!(
        "grid index {k}, chord {chord:e} < {:e}",
        f.stability
    ))
}

fn family_balls(
    sys: &IfsSystem,
    f: &GoodFamily,
    to_base: &impl Fn(&Word) -> Word,
) -> Vec<(Point, f64)> {
    f.words
        .iter()
        .map(|u| {
            let b = sys.ball(&to_base(u));
            (b.center, b.diameter)
        })
        .collect()
}

/// Smallest gap between the projected intervals `c·e ± d/2`.
fn projected_gap(balls: &[(Point, f64)], e: Point) -> Dd {
    let mut iv: Vec<(Dd, Dd)> = balls
        .iter()
        .map(|&(c, d)| {
            let m = Dd::prod(c.x, e.x) + Dd::prod(c.y, e.y);
            (m - Dd::from(0.5 * d), m + Dd::from(0.5 * d))
        })
        .collect();
    iv.sort_by(|a, b| a.0.cmp(&b.0));
    let mut gap = Dd::from(f64::INFINITY);
    for pair in iv.windows(2) {
        let g = pair[1].0 - pair[0].1;
        if g.cmp(&gap) == Ordering::Less {
            gap = g;
        }
    }
    gap
}

fn check_family(
    sys: &IfsSystem,
    f: &GoodFamily,
    eps: f64,
    to_base: &impl Fn(&Word) -> Word,
) -> Outcome {
    ensure!(f.words.len() >= 2, "family has fewer than two balls");
    ensure!(
        (f.direction.norm() - 1.0).abs() <= 1e-12,
        "direction not a unit vector"
    );
    let lens: Vec<usize> = f.words.iter().map(|u| u.len()).collect();
    ensure!(lens.iter().all(|&l| l == f.generation), "mixed generations");
    for u in &f.words {
        let base = to_base(u);
        ensure!(
            sys.word_type(&base).is_identity(),
            "family word {u} has a nontrivial type"
        );
    }
    let balls = family_balls(sys, f, to_base);
    let gap = projected_gap(&balls, f.direction).to_f64();
    ensure!(gap > 0.0, "projections meet at the family direction");
    ensure!(
        gap >= f.separation * (1.0 - 1e-9),
        "gap {gap} below recorded {}",
        f.separation
    );
    ensure!(
        f.stability > 0.0 && f.stability <= 0.25 * gap * (1.0 + 1e-9),
        "stability radius"
    );
    for k in 1..=4 {
        for side in [1.0, -1.0] {
            let dist = f.stability * (1.0 - 1e-6) * k as f64 / 4.0;
            let turn = side * 2.0 * (0.5 * dist).asin();
            let tilted = f.direction.cmul(Point::unit(turn));
            ensure!(
                projected_gap(&balls, tilted).is_positive(),
                "projections meet after tilting by {dist}"
            );
        }
    }
    let diams: Vec<f64> = balls.iter().map(|b| b.1).collect();
    let s = moran(&diams);
    ensure!(s > 1.0 - eps, "family exponent {s} not above {}", 1.0 - eps);
    ensure!(
        (s - f.exponent).abs() <= 1e-9,
        "exponent {s} vs recorded {}",
        f.exponent
    );
    Ok(format!("{} balls, gap {gap:e}, exponent {s}", balls.len()))
}

fn check_k0_pair(sys: &IfsSystem, w: &RationalWitness) -> Outcome {
    let j = single_index(&w.base_map)?;
    ensure!(j < sys.len(), "base map out of range");
    let base = sys.map(j);
    ensure!(
        base.isometry().is_rational(),
        "base map has an irrational type"
    );
    ensure!(
        base.apply(w.base_point).dist(w.base_point) <= 1e-12,
        "base point is not fixed"
    );
    let pair = &w.k0_pair;
    for (name, k) in [("x_o", &pair.x_o), ("y_o", &pair.y_o)] {
        sys.check_word(&k.word).map_err(|e| e.to_string())?;
        ensure!(
            k.word.len() <= pair.depth && !k.word.is_empty(),
            "{name} word length"
        );
        ensure!(
            sys.word_type(&k.word).is_identity(),
            "{name} word has a nontrivial type"
        );
        let p = sys.word_map(&k.word).apply(w.base_point);
        ensure!(
            p.dist(k.point) <= 1e-12,
            "{name} point is not its word image"
        );
    }
    let v = pair.x_o.point - pair.y_o.point;
    ensure!(v.norm() > 0.0, "x_o = y_o");
    let u = (1.0 / v.norm()) * v;
    ensure!(
        (u - w.family.direction).norm() <= 1e-12,
        "family direction is not the pair direction"
    );
    Ok(format!("|x_o - y_o| = {}", v.norm()))
}

fn check_cone(w: &RationalWitness, g: &[(Point, f64)]) -> Outcome {
    let c = &w.cone;
    let e = w.family.direction;
    ensure!(
        c.alpha > 0.0 && c.alpha < 1.0,
        "alpha {} outside (0, 1)",
        c.alpha
    );
    ensure!(
        c.r_alpha == 0.5 + 2.0 / c.alpha,
        "r_alpha is not 1/2 + 2/alpha"
    );
    ensure!(
        (c.xi.norm() - 1.0).abs() <= 1e-12 && c.xi.dot(e).abs() <= 1e-12,
        "xi not perpendicular to e"
    );
    for i in 0..g.len() {
        for k in 0..g.len() {
            if i == k {
                continue;
            }
            let (ci, di) = g[i];
            let (ck, dk) = g[k];
            let along = (Dd::prod(ck.x - ci.x, e.x) + Dd::prod(ck.y - ci.y, e.y))
                .to_f64()
                .abs();
            let gap = along - 0.5 * (di + dk);
            let reach = ci.dist(ck) + 0.5 * (di + dk);
            ensure!(
                gap > c.alpha * reach * (1.0 + 1e-12),
                "cone from ball {i} reaches ball {k}"
            );
        }
    }
    let x = w.pin.x_n;
    let d = x.norm();
    ensure!(d >= c.r_alpha, "pin inside r_alpha");
    let toward = (-1.0 / d) * x;
    let mut rng = ChaCha8Rng::seed_from_u64(c.seed ^ 0x5eed_c0de);
    let mut worst: f64 = 0.0;
    for _ in 0..c.samples {
        let rad = 0.5 * rng.gen::<f64>().sqrt();
        let y = rad * Point::unit(rng.gen_range(0.0..std::f64::consts::TAU));
        let r = x.dist(y);
        let cos = ((d * d + r * r - 0.25) / (2.0 * d * r)).clamp(-1.0, 1.0);
        let beta = cos.acos();
        for b in [beta, -beta] {
            let y2 = x + r * Point::unit(b).cmul(toward);
            let chord = y - y2;
            let len = chord.norm();
            if len == 0.0 {
                continue;
            }
            let tilt = chord.dot(e).abs() / len;
            worst = worst.max(tilt);
        }
    }
    ensure!(
        worst <= c.alpha,
        "chord tilt {worst} exceeds alpha {}",
        c.alpha
    );
    Ok(format!("alpha {}, worst sampled tilt {worst:e}", c.alpha))
}

fn single_index(w: &Word) -> Result<usize, String> {
    ensure!(w.len() == 1, "base map must be a single letter");
    Ok(w.0[0] as usize)
}

fn type_order(t: IsometryType) -> Result<u64, String> {
    let mut acc = t;
    for k in 1..=10_000_000u64 {
        if acc.is_identity() {
            return Ok(k);
        }
        acc = acc.compose(t);
    }
    Err("type order too large to check".into())
}

fn check_pin(sys: &IfsSystem, w: &RationalWitness) -> Outcome {
    let j = single_index(&w.base_map)?;
    let pin = &w.pin;
    let m = type_order(sys.map(j).isometry())?;
    ensure!(m == pin.m, "order {m} vs recorded {}", pin.m);
    ensure!(pin.n >= 1, "n must be positive");
    let build = |n: usize| w.k0_pair.y_o.word.concat(&Word::repeat(j, m as usize * n));
    ensure!(
        build(pin.n) == pin.word,
        "pin word is not y_o followed by the base map"
    );
    let map = sys.word_map(&pin.word);
    ensure!(
        map.isometry().is_identity(),
        "pin map has a nontrivial type"
    );
    let rho = map.ratio();
    ensure!(
        (rho - pin.rho_n).abs() <= 1e-12 * rho,
        "rho_n {rho} vs recorded {}",
        pin.rho_n
    );
    let p = w.base_point;
    let v = w.k0_pair.x_o.point - w.k0_pair.y_o.point;
    let x_n = p + (1.0 / rho) * v;
    ensure!(
        x_n.dist(pin.x_n) <= 1e-9 * x_n.norm(),
        "x_n recomputes to {x_n:?}"
    );
    let need = w.cone.r_alpha + p.norm();
    ensure!(
        (pin.x_n - p).norm() >= need,
        "x_n too close to the base point"
    );
    ensure!(pin.x_n.norm() >= w.cone.r_alpha, "|x_n| below r_alpha");
    if pin.n > 1 {
        let smaller = sys.word_map(&build(pin.n - 1)).ratio();
        ensure!(
            v.norm() / smaller < need,
            "n is not the least admissible power"
        );
    }
    Ok(format!("n = {}, |x_n| = {}", pin.n, pin.x_n.norm()))
}

fn check_cantor(cert: &Certificate, w: &RationalWitness, g: &[(Point, f64)]) -> Outcome {
    let depth = w.cantor.depth;
    let p = g.len() as u128;
    let nodes: u128 = (1..=depth as u32).map(|k| p.pow(k)).sum();
    ensure!(
        nodes <= MAX_CANTOR_NODES,
        "{nodes} nodes exceed the check limit"
    );
    ensure!(depth >= 1, "Cantor depth must be positive");
    let ratios: Vec<f64> = g.iter().map(|b| b.1).collect();
    let s = moran(&ratios);
    ensure!(
        (s - w.cantor.exponent).abs() <= 1e-9,
        "exponent {s} vs recorded {}",
        w.cantor.exponent
    );
    ensure!(
        cert.bound == Some(w.cantor.exponent),
        "bound is not the Cantor exponent"
    );
    ensure!(
        s > 1.0 - cert.epsilon,
        "exponent {s} not above {}",
        1.0 - cert.epsilon
    );
    let power: f64 = ratios.iter().map(|r| r.powf(s)).sum();
    ensure!((power - 1.0).abs() <= 1e-10, "power sum {power}");

    let walker = DdCantor::new(w.pin.x_n, g);
    let root = DdNode {
        cx: Dd::from(0.0),
        cy: Dd::from(0.0),
        d: Dd::from(1.0),
    };
    let checked = walker.children(&root).and_then(|kids| {
        if depth == 1 {
            return Ok(p as u64);
        }
        kids.par_iter()
            .map(|k| walker.subtree(k, depth - 1))
            .try_reduce(|| p as u64, |a, b| Ok(a + b))
    })?;
    Ok(format!("{checked} nodes, exponent {s}"))
}

fn check_inclusion(
    cert: &Certificate,
    sys: &IfsSystem,
    w: &RationalWitness,
    g: &[(Point, f64)],
) -> Outcome {
    let psi = sys.word_map(&w.pin.word);
    let rho = w.pin.rho_n;
    let mut rng = ChaCha8Rng::seed_from_u64(cert.seed ^ 0x1c1_05e);
    let mut worst: f64 = 0.0;
    let samples = w.inclusion_samples.max(1000);
    for _ in 0..samples {
        let mut y = Point::ORIGIN;
        let mut scale = 1.0;
        for _ in 0..40 {
            let (c, d) = g[rng.gen_range(0..g.len())];
            y = y + scale * c;
            scale *= d;
        }
        let lhs = rho * w.pin.x_n.dist(y);
        let rhs = w.k0_pair.x_o.point.dist(psi.apply(y));
        worst = worst.max((lhs - rhs).abs());
    }
    ensure!(worst <= INCLUSION_TOLERANCE, "identity off by {worst}");
    Ok(format!("{samples} samples, worst {worst:e}"))
}

fn check_irrational(
    cert: &Certificate,
    sys: &IfsSystem,
    w: &IrrationalWitness,
) -> Vec<(&'static str, Outcome)> {
    let branch = (|| {
        let j = single_index(&w.irrational_map)?;
        ensure!(
            j < sys.len() && !sys.map(j).isometry().is_rational(),
            "map {j} is rational"
        );
        ensure!(cert.bound.is_none(), "irrational branch claims a bound");
        Ok(format!("map {} irrational", j + 1))
    })();
    let witness = (|| {
        ensure!(
            sys.map(0).apply(w.x_o).dist(w.x_o) <= 1e-12,
            "x_o is not the fixed point of map 1"
        );
        let n = w.ball_word.len();
        sys.check_word(&w.ball_word).map_err(|e| e.to_string())?;
        let outside = |u: &Word| {
            let b = sys.ball(u);
            (dd_dist(w.x_o, b.center) - Dd::from(b.radius())).is_positive()
        };
        ensure!(outside(&w.ball_word), "x_o lies in the witness ball");
        let q = sys.len();
        let count = (q as u128).checked_pow(n as u32).unwrap_or(u128::MAX);
        ensure!(
            count <= 10_000_000,
            "generation too large to check minimality"
        );
        for k in 1..=n {
            let mut digits = vec![0u32; k];
            loop {
                let u = Word(digits.clone());
                if k == n && u >= w.ball_word {
                    break;
                }
                ensure!(!outside(&u), "ball {u} precedes the witness");
                let mut i = k;
                loop {
                    if i == 0 {
                        break;
                    }
                    i -= 1;
                    digits[i] += 1;
                    if (digits[i] as usize) < q {
                        break;
                    }
                    digits[i] = 0;
                    if i == 0 {
                        i = usize::MAX;
                        break;
                    }
                }
                if i == usize::MAX {
                    break;
                }
            }
        }
        let map = sys.word_map(&w.ball_word);
        ensure!((map.ratio() - w.ball_ratio).abs() <= 1e-15, "ball ratio");
        ensure!(
            map.apply(w.pin).dist(w.x_o) <= 1e-12,
            "pin is not the preimage of x_o"
        );
        let mut rng = ChaCha8Rng::seed_from_u64(cert.seed);
        for _ in 0..1000 {
            let y = Point::new(rng.gen_range(-0.5..0.5), rng.gen_range(-0.5..0.5));
            let lhs = w.x_o.dist(map.apply(y));
            let rhs = w.ball_ratio * w.pin.dist(y);
            ensure!(
                (lhs - rhs).abs() <= 1e-12,
                "scaling identity fails at {y:?}"
            );
        }
        Ok(format!("ball {} of generation {n}", w.ball_word))
    })();
    vec![("branch", branch), ("witness", witness)]
}

/// Moran root of `Σ rᵢˢ = 1` by bisection.
fn moran(r: &[f64]) -> f64 {
    if r.len() < 2 {
        return 0.0;
    }
    let f = |s: f64| r.iter().map(|x| x.powf(s)).sum::<f64>() - 1.0;
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    while f(hi) > 0.0 && hi < 1024.0 {
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if f(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

struct DdNode {
    cx: Dd,
    cy: Dd,
    d: Dd,
}

/// Brute-force nested intervals `{|x − y| : y ∈ B_w}` in double-double.
struct DdCantor<'a> {
    pin: Point,
    g: &'a [(Point, f64)],
    order: Vec<usize>,
}

impl<'a> DdCantor<'a> {
    fn new(pin: Point, g: &'a [(Point, f64)]) -> Self {
        let mut order: Vec<usize> = (0..g.len()).collect();
        order.sort_by(|&a, &b| pin.dist(g[a].0).total_cmp(&pin.dist(g[b].0)));
        DdCantor { pin, g, order }
    }

    fn distance(&self, cx: Dd, cy: Dd) -> Dd {
        let dx = Dd::from(self.pin.x) - cx;
        let dy = Dd::from(self.pin.y) - cy;
        (dx * dx + dy * dy).sqrt()
    }

    /// Children of `node` after checking nesting and pairwise disjointness.
    fn children(&self, node: &DdNode) -> Result<Vec<DdNode>, String> {
        let dist = self.distance(node.cx, node.cy);
        let half = node.d.scale(0.5);
        let slack = node.d.scale(1e-12);
        let (plo, phi) = (dist - half - slack, dist + half + slack);
        let mut kids: Vec<(Dd, Dd, DdNode)> = Vec::with_capacity(self.g.len());
        let mut sorted = true;
        for &j in &self.order {
            let (t, r) = self.g[j];
            let cx = node.cx + node.d.scale(t.x);
            let cy = node.cy + node.d.scale(t.y);
            let d = node.d.scale(r);
            let m = self.distance(cx, cy);
            let h = d.scale(0.5);
            let (lo, hi) = (m - h, m + h);
            ensure!(
                lo.cmp(&plo) != Ordering::Less && hi.cmp(&phi) != Ordering::Greater,
                "child interval escapes its parent"
            );
            if let Some(last) = kids.last() {
                sorted &= lo.cmp(&last.0) != Ordering::Less;
            }
            kids.push((lo, hi, DdNode { cx, cy, d }));
        }
        if !sorted {
            kids.sort_by(|a, b| a.0.cmp(&b.0));
        }
        for pair in kids.windows(2) {
            ensure!(
                (pair[1].0 - pair[0].1).is_positive(),
                "sibling intervals meet"
            );
        }
        Ok(kids.into_iter().map(|k| k.2).collect())
    }

    fn subtree(&self, node: &DdNode, left: usize) -> Result<u64, String> {
        let kids = self.children(node)?;
        let mut count = kids.len() as u64;
        if left > 1 {
            for k in &kids {
                count += self.subtree(k, left - 1)?;
            }
        }
        Ok(count)
    }
}

fn dd_dist(a: Point, b: Point) -> Dd {
    let dx = Dd::from(a.x) - Dd::from(b.x);
    let dy = Dd::from(a.y) - Dd::from(b.y);
    (dx * dx + dy * dy).sqrt()
}

/// Unevaluated sum `hi + lo` with `|lo| ≤ ulp(hi)/2`.
#[derive(Debug, Clone, Copy)]
struct Dd {
    hi: f64,
    lo: f64,
}

fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    (s, (a - (s - bb)) + (b - bb))
}

fn quick_two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    (s, b - (s - a))
}

fn two_prod(a: f64, b: f64) -> (f64, f64) {
    let p = a * b;
    (p, a.mul_add(b, -p))
}

impl Dd {
    fn from(x: f64) -> Dd {
        Dd { hi: x, lo: 0.0 }
    }

    fn prod(a: f64, b: f64) -> Dd {
        let (hi, lo) = two_prod(a, b);
        Dd { hi, lo }
    }

    fn scale(self, b: f64) -> Dd {
        let (p, e) = two_prod(self.hi, b);
        let (hi, lo) = quick_two_sum(p, e + self.lo * b);
        Dd { hi, lo }
    }

    fn sqrt(self) -> Dd {
        if self.hi <= 0.0 {
            return Dd::from(0.0);
        }
        let x = self.hi.sqrt();
        let (p, e) = two_prod(x, x);
        let r = ((self.hi - p) - e + self.lo) / (2.0 * x);
        let (hi, lo) = quick_two_sum(x, r);
        Dd { hi, lo }
    }

    fn to_f64(self) -> f64 {
        self.hi + self.lo
    }

    fn is_positive(self) -> bool {
        self.hi > 0.0 || (self.hi == 0.0 && self.lo > 0.0)
    }

    fn cmp(&self, other: &Dd) -> Ordering {
        let d = *self - *other;
        if d.is_positive() {
            Ordering::Greater
        } else if d.hi == 0.0 && d.lo == 0.0 {
            Ordering::Equal
        } else {
            Ordering::Less
        }
    }
}

impl std::ops::Add for Dd {
    type Output = Dd;
    fn add(self, o: Dd) -> Dd {
        let (s, e) = two_sum(self.hi, o.hi);
        let (t, f) = two_sum(self.lo, o.lo);
        let (s, e) = quick_two_sum(s, e + t);
        let (hi, lo) = quick_two_sum(s, e + f);
        Dd { hi, lo }
    }
}

impl std::ops::Neg for Dd {
    type Output = Dd;
    fn neg(self) -> Dd {
        Dd {
            hi: -self.hi,
            lo: -self.lo,
        }
    }
}

impl std::ops::Sub for Dd {
    type Output = Dd;
    fn sub(self, o: Dd) -> Dd {
        self + (-o)
    }
}

impl std::ops::Mul for Dd {
    type Output = Dd;
    fn mul(self, o: Dd) -> Dd {
        let (p, e) = two_prod(self.hi, o.hi);
        let (hi, lo) = quick_two_sum(p, e + self.hi * o.lo + self.lo * o.hi);
        Dd { hi, lo }
    }
}
