//! Rewriting a rational-rotation system into a rotation- and reflection-free
//! subsystem of almost full dimension.
//!
//! Maps of identity type are kept ("good"); every other map `ψ_b` is
//! replaced by the compositions `ψ_b ∘ ψ_w` over all words `w` of the length
//! of the shortest word killing the type of `ψ_b`. Because the extension
//! happens on the right, the word set stays prefix-free.

use std::collections::{HashMap, VecDeque};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ifs::{IfsError, IfsSystem, IsometryType, Similitude, Word};
use crate::separation::check_very_strong_separation;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DerotationError {
    #[error("derotation requires rational types (map {0} is irrational)")]
    IrrationalType(usize),
    #[error("the input system is not very strongly separated")]
    NotSeparated,
    #[error("epsilon {0} is not in (0, 1)")]
    BadEpsilon(f64),
    #[error("no good family after {iterations} iterations (bad mass trace {mass_trace:?})")]
    MaxIterations {
        iterations: usize,
        mass_trace: Vec<f64>,
    },
    #[error("derotation would hold {requested} words, above the budget of {budget}")]
    BudgetExceeded { requested: usize, budget: usize },
    #[error(transparent)]
    Ifs(#[from] IfsError),
}

/// The finite set of types reachable from the generators, with a shortest
/// killing word for each.
#[derive(Debug, Clone, PartialEq)]
pub struct TypeTable {
    /// In breadth-first discovery order, identity first.
    pub types: Vec<IsometryType>,
    /// `killing_words[τ]` has type `τ⁻¹`.
    pub killing_words: HashMap<IsometryType, Word>,
    /// Longest killing word.
    pub c: usize,
}

impl TypeTable {
    pub fn killing_word(&self, t: &IsometryType) -> &Word {
        &self.killing_words[t]
    }

    pub fn contains(&self, t: &IsometryType) -> bool {
        self.killing_words.contains_key(t)
    }
}

fn require_rational(sys: &IfsSystem) -> Result<(), DerotationError> {
    match sys.first_irrational() {
        Some(j) => Err(DerotationError::IrrationalType(j)),
        None => Ok(()),
    }
}

/// Breadth-first search over types, edges appending one generator. Words
/// reach each type first along a shortest, lexicographically least path.
pub fn type_closure(sys: &IfsSystem) -> Result<TypeTable, DerotationError> {
    require_rational(sys)?;
    let gens: Vec<IsometryType> = sys.maps().iter().map(Similitude::isometry).collect();
    let mut reach: HashMap<IsometryType, Word> = HashMap::new();
    let mut types = vec![IsometryType::IDENTITY];
    reach.insert(IsometryType::IDENTITY, Word::empty());
    let mut queue = VecDeque::from([IsometryType::IDENTITY]);
    while let Some(t) = queue.pop_front() {
        let w = reach[&t].clone();
        for (j, g) in gens.iter().enumerate() {
            let next = t.compose(*g);
            if let std::collections::hash_map::Entry::Vacant(e) = reach.entry(next) {
                e.insert(w.pushed(j));
                types.push(next);
                queue.push_back(next);
            }
        }
    }
    let killing_words: HashMap<IsometryType, Word> = types
        .iter()
        .map(|t| (*t, reach[&t.inverse()].clone()))
        .collect();
    let c = killing_words.values().map(Word::len).max().unwrap_or(0);
    Ok(TypeTable {
        types,
        killing_words,
        c,
    })
}

/// `1 − (r_min^t)^C`, the per-iteration contraction of the bad mass.
pub fn decay_bound(sys: &IfsSystem, table: &TypeTable) -> f64 {
    let t = sys.sim_dimension();
    let rmin = sys.ratios().into_iter().fold(f64::INFINITY, f64::min);
    1.0 - rmin.powf(t).powi(table.c as i32)
}

/// One entry per iteration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MassRecord {
    /// `Σ r^t` over all good maps so far.
    pub good: f64,
    /// `Σ r^t` over the current bad maps.
    pub bad: f64,
    /// `Σ r^{1−ε}` over all good maps so far.
    pub good_target: f64,
}

/// The good and bad families after `iteration` rounds.
#[derive(Debug, Clone)]
pub struct DerotationState<'a> {
    sys: &'a IfsSystem,
    table: TypeTable,
    exponent: f64,
    pub good: Vec<(Word, Similitude)>,
    pub bad: Vec<(Word, Similitude)>,
    pub iteration: usize,
    pub mass_trace: Vec<MassRecord>,
}

impl<'a> DerotationState<'a> {
    /// The first round: generators split by type.
    pub fn new(sys: &'a IfsSystem, epsilon: f64) -> Result<Self, DerotationError> {
        if !(epsilon > 0.0 && epsilon < 1.0) {
            return Err(DerotationError::BadEpsilon(epsilon));
        }
        let table = type_closure(sys)?;
        let mut state = DerotationState {
            sys,
            table,
            exponent: 1.0 - epsilon,
            good: Vec::new(),
            bad: Vec::new(),
            iteration: 0,
            mass_trace: Vec::new(),
        };
        let first: Vec<(Word, Similitude)> = sys
            .maps()
            .iter()
            .enumerate()
            .map(|(j, m)| (Word::single(j), *m))
            .collect();
        state.absorb(first);
        Ok(state)
    }

    pub fn table(&self) -> &TypeTable {
        &self.table
    }

    fn absorb(&mut self, fresh: Vec<(Word, Similitude)>) {
        let (good, bad): (Vec<_>, Vec<_>) = fresh
            .into_iter()
            .partition(|(_, m)| m.isometry().is_identity());
        self.good.extend(good);
        self.bad = bad;
        self.iteration += 1;
        let t = self.sys.sim_dimension();
        let sum = |v: &[(Word, Similitude)], e: f64| v.iter().map(|(_, m)| m.ratio().powf(e)).sum();
        self.mass_trace.push(MassRecord {
            good: sum(&self.good, t),
            bad: sum(&self.bad, t),
            good_target: sum(&self.good, self.exponent),
        });
    }

    /// Whether the good maps already satisfy `Σ r^{1−ε} > 1`.
    pub fn is_done(&self) -> bool {
        self.mass_trace.last().is_some_and(|m| m.good_target > 1.0)
    }

    /// Number of words the next round would hold.
    pub fn next_size(&self) -> usize {
        let q = self.sys.len();
        self.good.len()
            + self
                .bad
                .iter()
                .map(|(_, m)| {
                    let k = self.table.killing_word(&m.isometry()).len();
                    q.saturating_pow(k as u32)
                })
                .fold(0usize, usize::saturating_add)
    }

    /// Replaces each bad map by its right extensions of killing length.
    pub fn step(&mut self) {
        let sys = self.sys;
        let table = &self.table;
        let fresh: Vec<(Word, Similitude)> = self
            .bad
            .par_iter()
            .flat_map_iter(|(w, m)| {
                let k = table.killing_word(&m.isometry()).len();
                let mut level = vec![(w.clone(), *m)];
                for _ in 0..k {
                    level = level
                        .into_iter()
                        .flat_map(|(u, g)| {
                            sys.maps()
                                .iter()
                                .enumerate()
                                .map(move |(j, h)| (u.pushed(j), g.compose(h)))
                        })
                        .collect();
                }
                level
            })
            .collect();
        self.absorb(fresh);
    }

    pub fn all_words(&self) -> Vec<Word> {
        self.good
            .iter()
            .chain(&self.bad)
            .map(|(w, _)| w.clone())
            .collect()
    }
}

/// Derotated subsystem and the bookkeeping that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct Derotation {
    /// Good words in lexicographic order.
    pub words: Vec<Word>,
    pub system: IfsSystem,
    /// The iteration at which the stop criterion first held.
    pub iterations: usize,
    pub mass_trace: Vec<MassRecord>,
    pub c: usize,
}

pub fn derotate(
    sys: &IfsSystem,
    epsilon: f64,
    max_iterations: usize,
    budget: usize,
) -> Result<Derotation, DerotationError> {
    if !check_very_strong_separation(sys) {
        return Err(DerotationError::NotSeparated);
    }
    let mut state = DerotationState::new(sys, epsilon)?;
    while !state.is_done() {
        if state.iteration >= max_iterations {
            return Err(DerotationError::MaxIterations {
                iterations: state.iteration,
                mass_trace: state.mass_trace.iter().map(|m| m.bad).collect(),
            });
        }
        let requested = state.next_size();
        if requested > budget {
            return Err(DerotationError::BudgetExceeded { requested, budget });
        }
        state.step();
    }
    let mut good = state.good;
    good.sort_by(|a, b| a.0.cmp(&b.0));
    let system = IfsSystem::new(good.iter().map(|(_, m)| *m).collect())?;
    Ok(Derotation {
        words: good.into_iter().map(|(w, _)| w).collect(),
        system,
        iterations: state.iteration,
        mass_trace: state.mass_trace,
        c: state.table.c,
    })
}
