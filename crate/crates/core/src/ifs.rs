//! Planar similitudes `x ↦ r·R(O(x)) + w`, their isometry types, and the
//! generation-ball hierarchy of an iterated function system.
//!
//! The normal form applies the rotation `O(z) = e^{2πiθ}z` first, then the
//! optional reflection `R(z) = z̄`, then scales and translates. With this
//! order the composed type of `ψ₁ ∘ ψ₂` is
//! `(θ₂ + (−1)^{ρ₂}·θ₁, ρ₁ ⊕ ρ₂)`, which is what [`IsometryType::compose`]
//! implements. Rational angles are exact fractions reduced modulo one, so the
//! rational types form a finite group and identity checks are exact.

use std::cmp::Ordering;
use std::fmt;
use std::hash::{Hash, Hasher};

use rayon::prelude::*;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::dimension;
use crate::geometry::Point;

/// Largest denominator accepted for an input angle.
pub const MAX_INPUT_DENOMINATOR: i64 = 1_000_000;

/// Largest denominator the type group may reach (lcm of the inputs).
pub const MAX_GROUP_DENOMINATOR: i128 = 1_000_000_000_000_000;

/// Default cap on the number of words a single enumeration may produce.
pub const DEFAULT_BUDGET: usize = 1_000_000;

/// Slack allowed in the containment test `|w| + r/2 ≤ 1/2`.
pub const CONTAINMENT_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum IfsError {
    #[error("contraction ratio {0} is not in (0, 1)")]
    RatioOutOfRange(f64),
    #[error("an IFS needs at least one map")]
    EmptySystem,
    #[error("map {index} does not send B(0, 1/2) into itself (|w| + r/2 = {reach})")]
    NotContained { index: usize, reach: f64 },
    #[error("angle denominator {0} is outside 1..=1000000")]
    BadDenominator(i64),
    #[error("the type group of this system is too large (denominator lcm exceeds 1e15)")]
    TypeGroupTooLarge,
    #[error("non-periodic type: the angle is irrational")]
    NonPeriodicType,
    #[error("map {0} has an irrational angle; a rational type is required")]
    IrrationalMap(usize),
    #[error("map index {index} out of range for a system of {len} maps")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("enumeration of {requested} words exceeds the budget of {budget}")]
    BudgetExceeded { requested: u128, budget: usize },
    #[error("translation is not finite")]
    NonFinite,
}

fn gcd(mut a: i128, mut b: i128) -> i128 {
    a = a.abs();
    b = b.abs();
    while b != 0 {
        let t = a % b;
        a = b;
        b = t;
    }
    a
}

/// Rotation angle as a fraction of a full turn, in `[0, 1)`.
#[derive(Debug, Clone, Copy)]
pub enum Angle {
    /// Reduced fraction `num/den` with `0 ≤ num < den`; zero is `0/1`.
    Rational {
        num: i64,
        den: i64,
    },
    Irrational(f64),
}

impl Angle {
    pub const ZERO: Angle = Angle::Rational { num: 0, den: 1 };

    /// Validated input angle `num/den` (any integer numerator, reduced mod 1).
    pub fn rational(num: i64, den: i64) -> Result<Angle, IfsError> {
        if den <= 0 || den > MAX_INPUT_DENOMINATOR {
            return Err(IfsError::BadDenominator(den));
        }
        Ok(Angle::from_fraction(num as i128, den as i128))
    }

    pub fn irrational(turns: f64) -> Angle {
        Angle::Irrational(turns.rem_euclid(1.0))
    }

    pub(crate) fn from_fraction(num: i128, den: i128) -> Angle {
        let num = num.rem_euclid(den);
        let g = gcd(num, den).max(1);
        let (num, den) = (num / g, den / g);
        let den = i64::try_from(den).expect("angle denominator overflow");
        Angle::Rational {
            num: num as i64,
            den,
        }
    }

    pub fn is_rational(&self) -> bool {
        matches!(self, Angle::Rational { .. })
    }

    pub fn denominator(&self) -> Option<i64> {
        match *self {
            Angle::Rational { den, .. } => Some(den),
            Angle::Irrational(_) => None,
        }
    }

    pub fn turns(&self) -> f64 {
        match *self {
            Angle::Rational { num, den } => num as f64 / den as f64,
            Angle::Irrational(v) => v,
        }
    }

    /// `e^{2πiθ}` as a unit vector; exact at multiples of a quarter turn.
    pub fn rotor(&self) -> Point {
        if let Angle::Rational { num, den } = *self {
            if (4 * num as i128) % den as i128 == 0 {
                return match (4 * num as i128) / den as i128 {
                    0 => Point::new(1.0, 0.0),
                    1 => Point::new(0.0, 1.0),
                    2 => Point::new(-1.0, 0.0),
                    _ => Point::new(0.0, -1.0),
                };
            }
        }
        Point::unit(std::f64::consts::TAU * self.turns())
    }

    fn add(self, other: Angle) -> Angle {
        match (self, other) {
            (Angle::Rational { num: a, den: b }, Angle::Rational { num: c, den: d }) => {
                let (a, b, c, d) = (a as i128, b as i128, c as i128, d as i128);
                let g = gcd(b, d);
                Angle::from_fraction(a * (d / g) + c * (b / g), b / g * d)
            }
            _ => Angle::irrational(self.turns() + other.turns()),
        }
    }

    fn neg(self) -> Angle {
        match self {
            Angle::Rational { num, den } => Angle::from_fraction(-(num as i128), den as i128),
            Angle::Irrational(v) => Angle::irrational(-v),
        }
    }
}

impl PartialEq for Angle {
    fn eq(&self, other: &Angle) -> bool {
        match (self, other) {
            (Angle::Rational { num: a, den: b }, Angle::Rational { num: c, den: d }) => {
                a == c && b == d
            }
            (Angle::Irrational(a), Angle::Irrational(b)) => a.to_bits() == b.to_bits(),
            _ => false,
        }
    }
}

impl Eq for Angle {}

impl Hash for Angle {
    fn hash<H: Hasher>(&self, state: &mut H) {
        match *self {
            Angle::Rational { num, den } => (0u8, num, den).hash(state),
            Angle::Irrational(v) => (1u8, v.to_bits()).hash(state),
        }
    }
}

impl fmt::Display for Angle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Angle::Rational { num, den } => write!(f, "{num}/{den}"),
            Angle::Irrational(v) => write!(f, "{v}~"),
        }
    }
}

/// The class `[O, R]` of a similitude: rotation angle and reflection flag.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct IsometryType {
    pub angle: Angle,
    pub reflect: bool,
}

impl IsometryType {
    pub const IDENTITY: IsometryType = IsometryType {
        angle: Angle::ZERO,
        reflect: false,
    };

    pub fn new(angle: Angle, reflect: bool) -> Self {
        IsometryType { angle, reflect }
    }

    pub fn is_identity(&self) -> bool {
        *self == IsometryType::IDENTITY
    }

    pub fn is_rational(&self) -> bool {
        self.angle.is_rational()
    }

    /// Type of `ψ₁ ∘ ψ₂` where `self = [ψ₁]` and `other = [ψ₂]`.
    pub fn compose(self, other: IsometryType) -> IsometryType {
        let outer = if other.reflect {
            self.angle.neg()
        } else {
            self.angle
        };
        IsometryType {
            angle: other.angle.add(outer),
            reflect: self.reflect ^ other.reflect,
        }
    }

    pub fn inverse(self) -> IsometryType {
        if self.reflect {
            // conj ∘ rot(θ) is an involution
            self
        } else {
            IsometryType::new(self.angle.neg(), false)
        }
    }

    /// Least `n ≥ 1` with `τⁿ = identity`.
    pub fn order(self) -> Result<u64, IfsError> {
        match self.angle {
            Angle::Irrational(_) => Err(IfsError::NonPeriodicType),
            _ if self.reflect => Ok(2),
            Angle::Rational { den, .. } => Ok(den as u64),
        }
    }

    /// The linear part `z ↦ R(O(z))`.
    pub fn act(&self, z: Point) -> Point {
        let rotated = self.angle.rotor().cmul(z);
        if self.reflect {
            rotated.conj()
        } else {
            rotated
        }
    }

    /// Inverse of [`IsometryType::act`].
    pub fn act_inverse(&self, z: Point) -> Point {
        let z = if self.reflect { z.conj() } else { z };
        self.angle.rotor().conj().cmul(z)
    }
}

impl fmt::Display for IsometryType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "[{}, {}]",
            self.angle,
            if self.reflect { "R" } else { "Id" }
        )
    }
}

/// A contractive similitude `x ↦ ratio·R(O(x)) + translation`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Similitude {
    ratio: f64,
    iso: IsometryType,
    translation: Point,
}

impl Similitude {
    pub fn new(ratio: f64, iso: IsometryType, translation: Point) -> Result<Self, IfsError> {
        if !(ratio > 0.0 && ratio < 1.0) {
            return Err(IfsError::RatioOutOfRange(ratio));
        }
        if !translation.is_finite() {
            return Err(IfsError::NonFinite);
        }
        Ok(Similitude {
            ratio,
            iso,
            translation,
        })
    }

    /// Pure scaling plus translation.
    pub fn homothety(ratio: f64, translation: Point) -> Result<Self, IfsError> {
        Similitude::new(ratio, IsometryType::IDENTITY, translation)
    }

    pub fn ratio(&self) -> f64 {
        self.ratio
    }

    pub fn isometry(&self) -> IsometryType {
        self.iso
    }

    pub fn translation(&self) -> Point {
        self.translation
    }

    pub fn with_translation(&self, translation: Point) -> Similitude {
        Similitude {
            translation,
            ..*self
        }
    }

    pub fn apply(&self, x: Point) -> Point {
        self.ratio * self.iso.act(x) + self.translation
    }

    pub fn apply_inverse(&self, y: Point) -> Point {
        self.iso
            .act_inverse((1.0 / self.ratio) * (y - self.translation))
    }

    /// `self ∘ inner`.
    pub fn compose(&self, inner: &Similitude) -> Similitude {
        Similitude {
            ratio: self.ratio * inner.ratio,
            iso: self.iso.compose(inner.iso),
            translation: self.apply(inner.translation),
        }
    }

    /// The unique fixed point `(I − rRO)^{-1} w`.
    pub fn fixed_point(&self) -> Point {
        // columns of the linear part r·R·O
        let c0 = self.ratio * self.iso.act(Point::new(1.0, 0.0));
        let c1 = self.ratio * self.iso.act(Point::new(0.0, 1.0));
        let (a, b, c, d) = (1.0 - c0.x, -c1.x, -c0.y, 1.0 - c1.y);
        let det = a * d - b * c;
        let w = self.translation;
        Point::new((d * w.x - b * w.y) / det, (a * w.y - c * w.x) / det)
    }

    /// Closed-ball image `ψ(B₀)`: center and diameter.
    pub fn ball_center(&self) -> Point {
        self.translation
    }
}

/// A finite word over the maps of a system, stored zero-based.
///
/// JSON uses one-based indices, matching the usual `ψ₁, …, ψ_q` labels.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct Word(pub Vec<u32>);

impl Word {
    pub fn empty() -> Self {
        Word(Vec::new())
    }

    pub fn single(j: usize) -> Self {
        Word(vec![j as u32])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn indices(&self) -> impl Iterator<Item = usize> + '_ {
        self.0.iter().map(|&i| i as usize)
    }

    pub fn pushed(&self, j: usize) -> Word {
        let mut v = Vec::with_capacity(self.0.len() + 1);
        v.extend_from_slice(&self.0);
        v.push(j as u32);
        Word(v)
    }

    pub fn concat(&self, other: &Word) -> Word {
        let mut v = Vec::with_capacity(self.0.len() + other.0.len());
        v.extend_from_slice(&self.0);
        v.extend_from_slice(&other.0);
        Word(v)
    }

    pub fn repeat(j: usize, times: usize) -> Word {
        Word(vec![j as u32; times])
    }

    pub fn is_prefix_of(&self, other: &Word) -> bool {
        other.0.starts_with(&self.0)
    }

    /// Rewrites a word over a derived system (whose map `k` is the word
    /// `alphabet[k]` of the base system) into a word of the base system.
    pub fn flatten(&self, alphabet: &[Word]) -> Word {
        let mut v = Vec::new();
        for k in self.indices() {
            v.extend_from_slice(&alphabet[k].0);
        }
        Word(v)
    }

    pub fn one_based(&self) -> Vec<u32> {
        self.0.iter().map(|i| i + 1).collect()
    }
}

impl fmt::Display for Word {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (k, i) in self.0.iter().enumerate() {
            if k > 0 {
                write!(f, ",")?;
            }
            write!(f, "{}", i + 1)?;
        }
        write!(f, ")")
    }
}

impl Serialize for Word {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        self.one_based().serialize(s)
    }
}

impl<'de> Deserialize<'de> for Word {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let v = Vec::<u32>::deserialize(d)?;
        if v.contains(&0) {
            return Err(serde::de::Error::custom("word indices are one-based"));
        }
        Ok(Word(v.into_iter().map(|i| i - 1).collect()))
    }
}

/// Result of composing a word: the empty word is the identity, which is not
/// a contraction and therefore not a [`Similitude`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum WordMap {
    Identity,
    Map(Similitude),
}

impl WordMap {
    pub fn ratio(&self) -> f64 {
        match self {
            WordMap::Identity => 1.0,
            WordMap::Map(s) => s.ratio(),
        }
    }

    pub fn isometry(&self) -> IsometryType {
        match self {
            WordMap::Identity => IsometryType::IDENTITY,
            WordMap::Map(s) => s.isometry(),
        }
    }

    pub fn translation(&self) -> Point {
        match self {
            WordMap::Identity => Point::ORIGIN,
            WordMap::Map(s) => s.translation(),
        }
    }

    pub fn apply(&self, x: Point) -> Point {
        match self {
            WordMap::Identity => x,
            WordMap::Map(s) => s.apply(x),
        }
    }

    pub fn apply_inverse(&self, y: Point) -> Point {
        match self {
            WordMap::Identity => y,
            WordMap::Map(s) => s.apply_inverse(y),
        }
    }

    /// `self ∘ inner`.
    pub fn then(&self, inner: &Similitude) -> Similitude {
        match self {
            WordMap::Identity => *inner,
            WordMap::Map(s) => s.compose(inner),
        }
    }

    pub fn similitude(&self) -> Option<Similitude> {
        match self {
            WordMap::Identity => None,
            WordMap::Map(s) => Some(*s),
        }
    }
}

/// Image of the reference ball `B₀ = B(0, 1/2)` under `ψ_word`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ball {
    pub center: Point,
    pub diameter: f64,
    pub word: Word,
}

impl Ball {
    pub fn reference() -> Self {
        Ball {
            center: Point::ORIGIN,
            diameter: 1.0,
            word: Word::empty(),
        }
    }

    pub fn from_map(word: Word, map: &WordMap) -> Self {
        Ball {
            center: map.translation(),
            diameter: map.ratio(),
            word,
        }
    }

    pub fn radius(&self) -> f64 {
        0.5 * self.diameter
    }

    /// Closed balls are disjoint iff their centers are farther apart than
    /// the sum of the radii.
    pub fn is_disjoint(&self, other: &Ball) -> bool {
        self.center.dist(other.center) > self.radius() + other.radius()
    }
}

/// A nonempty ordered list of similitudes, each mapping `B₀` into itself.
#[derive(Debug, Clone, PartialEq)]
pub struct IfsSystem {
    maps: Vec<Similitude>,
    sim_dimension: f64,
}

impl IfsSystem {
    pub fn new(maps: Vec<Similitude>) -> Result<Self, IfsError> {
        if maps.is_empty() {
            return Err(IfsError::EmptySystem);
        }
        for (index, m) in maps.iter().enumerate() {
            let reach = containment_reach(m);
            if reach > 0.5 + CONTAINMENT_TOLERANCE {
                return Err(IfsError::NotContained { index, reach });
            }
        }
        check_group_size(&maps)?;
        let sim_dimension = if maps.len() == 1 {
            // a single contraction has a one-point attractor
            0.0
        } else {
            let ratios: Vec<f64> = maps.iter().map(Similitude::ratio).collect();
            dimension::moran_root(&ratios, 1.0)
                .map(|r| r.value)
                .expect("q ≥ 2 ratios in (0,1) always have a Moran root")
        };
        Ok(IfsSystem {
            maps,
            sim_dimension,
        })
    }

    pub fn maps(&self) -> &[Similitude] {
        &self.maps
    }

    pub fn map(&self, j: usize) -> &Similitude {
        &self.maps[j]
    }

    pub fn len(&self) -> usize {
        self.maps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.maps.is_empty()
    }

    pub fn sim_dimension(&self) -> f64 {
        self.sim_dimension
    }

    pub fn ratios(&self) -> Vec<f64> {
        self.maps.iter().map(Similitude::ratio).collect()
    }

    pub fn all_rational(&self) -> bool {
        self.maps.iter().all(|m| m.isometry().is_rational())
    }

    pub fn first_irrational(&self) -> Option<usize> {
        self.maps.iter().position(|m| !m.isometry().is_rational())
    }

    pub fn check_word(&self, w: &Word) -> Result<(), IfsError> {
        match w.indices().find(|&i| i >= self.len()) {
            Some(index) => Err(IfsError::IndexOutOfRange {
                index,
                len: self.len(),
            }),
            None => Ok(()),
        }
    }

    /// `ψ_{i₁} ∘ … ∘ ψ_{iₙ}`; panics on out-of-range indices (see
    /// [`IfsSystem::check_word`]).
    pub fn word_map(&self, w: &Word) -> WordMap {
        let mut acc = WordMap::Identity;
        for j in w.indices() {
            acc = WordMap::Map(acc.then(&self.maps[j]));
        }
        acc
    }

    /// Exact type of `ψ_w`.
    pub fn word_type(&self, w: &Word) -> IsometryType {
        w.indices().fold(IsometryType::IDENTITY, |t, j| {
            t.compose(self.maps[j].isometry())
        })
    }

    pub fn ball(&self, w: &Word) -> Ball {
        Ball::from_map(w.clone(), &self.word_map(w))
    }

    /// The system generated by `{ψ_w : w ∈ words}`.
    pub fn subsystem(&self, words: &[Word]) -> Result<IfsSystem, IfsError> {
        let maps = words
            .iter()
            .map(|w| {
                self.check_word(w)?;
                self.word_map(w)
                    .similitude()
                    .ok_or(IfsError::RatioOutOfRange(1.0))
            })
            .collect::<Result<Vec<_>, _>>()?;
        IfsSystem::new(maps)
    }
}

fn containment_reach(m: &Similitude) -> f64 {
    m.translation().norm() + 0.5 * m.ratio()
}

fn check_group_size(maps: &[Similitude]) -> Result<(), IfsError> {
    let mut l: i128 = 1;
    for m in maps {
        if let Some(d) = m.isometry().angle.denominator() {
            let d = d as i128;
            l = l / gcd(l, d) * d;
            if l > MAX_GROUP_DENOMINATOR {
                return Err(IfsError::TypeGroupTooLarge);
            }
        }
    }
    Ok(())
}

/// Output of the normalizations: the system plus what was done to it.
#[derive(Debug, Clone, PartialEq)]
pub struct Normalized {
    pub system: IfsSystem,
    /// Common factor applied to all translations (distances scale by it).
    pub lambda: f64,
    /// Point moved to the origin before scaling (zero when not translated).
    pub shift: Point,
}

/// Scales every translation by the largest `λ ∈ (0, 1]` keeping each
/// `ψ_j(B₀) ⊂ B₀`.
pub fn normalize_into_ball(maps: Vec<Similitude>) -> Result<Normalized, IfsError> {
    if maps.is_empty() {
        return Err(IfsError::EmptySystem);
    }
    let mut lambda: f64 = 1.0;
    for m in &maps {
        let r = m.ratio();
        if !(r > 0.0 && r < 1.0) {
            return Err(IfsError::RatioOutOfRange(r));
        }
        if containment_reach(m) > 0.5 {
            lambda = lambda.min((0.5 - 0.5 * r) / m.translation().norm());
        }
    }
    let maps = if lambda < 1.0 {
        maps.iter()
            .map(|m| m.with_translation(lambda * m.translation()))
            .collect()
    } else {
        maps
    };
    Ok(Normalized {
        system: IfsSystem::new(maps)?,
        lambda,
        shift: Point::ORIGIN,
    })
}

/// Conjugates by the translation taking the fixed point of `ψ_j` to the
/// origin (so `ψ_j` gets translation exactly zero), then re-normalizes into
/// the reference ball.
pub fn normalize_zero_translation(sys: &IfsSystem, j: usize) -> Result<Normalized, IfsError> {
    if j >= sys.len() {
        return Err(IfsError::IndexOutOfRange {
            index: j,
            len: sys.len(),
        });
    }
    if !sys.map(j).isometry().is_rational() {
        return Err(IfsError::IrrationalMap(j));
    }
    let p = sys.map(j).fixed_point();
    let maps = sys
        .maps()
        .iter()
        .enumerate()
        .map(|(i, m)| {
            let w = if i == j {
                Point::ORIGIN
            } else {
                m.apply(p) - p
            };
            m.with_translation(w)
        })
        .collect();
    let mut out = normalize_into_ball(maps)?;
    out.shift = p;
    Ok(out)
}

/// All `qⁿ` generation-`n` balls, in lexicographic word order.
pub fn generation_balls(sys: &IfsSystem, n: usize, budget: usize) -> Result<Vec<Ball>, IfsError> {
    let requested = (sys.len() as u128)
        .checked_pow(n as u32)
        .unwrap_or(u128::MAX);
    if requested > budget as u128 {
        return Err(IfsError::BudgetExceeded { requested, budget });
    }
    if n == 0 {
        return Ok(vec![Ball::reference()]);
    }
    Ok(generation_maps(sys, n)
        .into_par_iter()
        .map(|(w, m)| Ball::from_map(w, &WordMap::Map(m)))
        .collect())
}

/// `(w, ψ_w)` for all words of length `n ≥ 1`, lexicographic. The caller
/// owns the budget check.
pub(crate) fn generation_maps(sys: &IfsSystem, n: usize) -> Vec<(Word, Similitude)> {
    let mut level: Vec<(Word, Similitude)> = sys
        .maps()
        .iter()
        .enumerate()
        .map(|(j, m)| (Word::single(j), *m))
        .collect();
    for _ in 1..n {
        level = level
            .par_iter()
            .flat_map_iter(|(w, m)| {
                sys.maps()
                    .iter()
                    .enumerate()
                    .map(move |(j, g)| (w.pushed(j), m.compose(g)))
            })
            .collect();
    }
    level
}

/// Lexicographic order on words, used for tie-breaks throughout.
pub fn word_cmp(a: &Word, b: &Word) -> Ordering {
    a.cmp(b)
}

/// True when no word of the list is a proper or improper prefix of another.
pub fn is_prefix_free(words: &[Word]) -> bool {
    let mut sorted: Vec<&Word> = words.iter().collect();
    sorted.sort();
    sorted.windows(2).all(|p| !p[0].is_prefix_of(p[1]))
}
