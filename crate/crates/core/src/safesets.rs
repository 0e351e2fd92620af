//! Safe-set operators: reachability and returnability closures, the
//! per-state safety confidence table, the pessimistic/optimistic safe sets
//! and the ground-truth safe space.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::env::{Grid, GridWorld, State};
use crate::error::{Error, Result};
use crate::glm::{GlmEstimator, Interval};

/// Fixed-capacity bitset over grid states.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct StateSet {
    n: usize,
    words: Vec<u64>,
}

impl StateSet {
    pub fn empty(n: usize) -> Self {
        Self {
            n,
            words: vec![0; n.div_ceil(64)],
        }
    }

    pub fn full(n: usize) -> Self {
        let mut s = Self::empty(n);
        for i in 0..n {
            s.words[i / 64] |= 1 << (i % 64);
        }
        s
    }

    pub fn from_states(n: usize, states: impl IntoIterator<Item = State>) -> Self {
        let mut s = Self::empty(n);
        for st in states {
            s.insert(st);
        }
        s
    }

    pub fn capacity(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn contains(&self, s: State) -> bool {
        let i = s.index();
        i < self.n && self.words[i / 64] >> (i % 64) & 1 == 1
    }

    /// Returns true when `s` was not already present.
    #[inline]
    pub fn insert(&mut self, s: State) -> bool {
        let i = s.index();
        assert!(i < self.n, "state {i} outside set of capacity {}", self.n);
        let was = self.words[i / 64] >> (i % 64) & 1 == 1;
        self.words[i / 64] |= 1 << (i % 64);
        !was
    }

    pub fn remove(&mut self, s: State) {
        let i = s.index();
        if i < self.n {
            self.words[i / 64] &= !(1 << (i % 64));
        }
    }

    pub fn len(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.words.iter().all(|&w| w == 0)
    }

    /// Members in ascending index order.
    pub fn iter(&self) -> impl Iterator<Item = State> + '_ {
        self.words.iter().enumerate().flat_map(|(wi, &w)| {
            let mut bits = w;
            std::iter::from_fn(move || {
                if bits == 0 {
                    return None;
                }
                let b = bits.trailing_zeros() as usize;
                bits &= bits - 1;
                Some(State::from(wi * 64 + b))
            })
        })
    }

    pub fn intersection(&self, other: &Self) -> Self {
        debug_assert_eq!(self.n, other.n);
        Self {
            n: self.n,
            words: self.words.iter().zip(&other.words).map(|(a, b)| a & b).collect(),
        }
    }

    pub fn union(&self, other: &Self) -> Self {
        debug_assert_eq!(self.n, other.n);
        Self {
            n: self.n,
            words: self.words.iter().zip(&other.words).map(|(a, b)| a | b).collect(),
        }
    }

    pub fn is_subset(&self, other: &Self) -> bool {
        self.words.iter().zip(&other.words).all(|(a, b)| a & !b == 0)
    }
}

/// `X ∪ {s' ∈ domain | s' is a one-step successor of some s ∈ X}`
pub fn y_reach_one(grid: &Grid, x: &StateSet, domain: &StateSet) -> StateSet {
    let mut out = x.clone();
    for s in x.iter() {
        for n in grid.successors(s) {
            if domain.contains(n) {
                out.insert(n);
            }
        }
    }
    out
}

/// Least fixed point of [`y_reach_one`]: everything reachable from `X`
/// along paths whose new states all lie in `domain`.
pub fn y_reach_closure(grid: &Grid, x: &StateSet, domain: &StateSet) -> StateSet {
    let mut out = x.clone();
    let mut queue: VecDeque<State> = x.iter().collect();
    while let Some(s) = queue.pop_front() {
        for n in grid.successors(s) {
            if domain.contains(n) && out.insert(n) {
                queue.push_back(n);
            }
        }
    }
    out
}

/// `X̄ ∪ {s ∈ X | some action from s lands in X̄}`
pub fn y_return_one(grid: &Grid, x: &StateSet, xbar: &StateSet) -> StateSet {
    let mut out = xbar.clone();
    for s in x.iter() {
        if grid.successors(s).iter().any(|&n| xbar.contains(n)) {
            out.insert(s);
        }
    }
    out
}

/// Least fixed point of [`y_return_one`]: `X̄` plus every state of `X` with
/// a path to `X̄` that stays inside `X`.
pub fn y_return_closure(grid: &Grid, x: &StateSet, xbar: &StateSet) -> StateSet {
    let mut out = xbar.clone();
    let mut queue: VecDeque<State> = xbar.iter().collect();
    while let Some(s) = queue.pop_front() {
        // grid moves are symmetric, so successors double as predecessors
        for p in grid.successors(s) {
            if x.contains(p) && out.insert(p) {
                queue.push_back(p);
            }
        }
    }
    out
}

/// `X ∪ {s ∈ ψ(s') for some s' ∈ X | g(s) − ε ≥ h}` with `ψ` the square
/// window of the given radius.
pub fn y_epsilon(world: &GridWorld, x: &StateSet, epsilon: f64, fov_radius: usize) -> StateSet {
    let h = world.threshold();
    let mut out = x.clone();
    for s in x.iter() {
        for w in world.grid().window(s, fov_radius) {
            if world.true_safety(w) - epsilon >= h {
                out.insert(w);
            }
        }
    }
    out
}

/// Ground-truth safe space `Z̄_ε(S0)`: iterate
/// `Z(X) = Y_ε(X) ∩ Ȳ_reach(X) ∩ Ȳ_return(Y_ε(X), X)` from `S0` until it stops
/// growing. Pass `usize::MAX` as the radius for an agent that sees the whole
/// grid.
pub fn true_safe_space(world: &GridWorld, s0: &StateSet, epsilon: f64, fov_radius: usize) -> StateSet {
    let grid = world.grid();
    let all = StateSet::full(grid.n_states());
    let mut x = s0.clone();
    loop {
        let y = y_epsilon(world, &x, epsilon, fov_radius);
        let z = y
            .intersection(&y_reach_closure(grid, &x, &all))
            .intersection(&y_return_closure(grid, &y, &x));
        if z == x {
            return x;
        }
        x = z;
    }
}

/// Per-state safety intervals `C(s) = [l(s), u(s)]` together with the set
/// `Ψ` of states whose features are known.
#[derive(Debug, Clone)]
pub struct ConfidenceTable {
    dim: usize,
    intervals: Vec<Interval>,
    psi: StateSet,
    /// `n × d`, meaningful only for members of `psi`.
    features: Vec<f64>,
    violation_count: u64,
}

impl ConfidenceTable {
    /// Prior `[h, ∞)` on `S0`, unbounded elsewhere.
    pub fn new(n_states: usize, dim: usize, s0: &[State], h: f64) -> Self {
        let mut intervals = vec![Interval::UNBOUNDED; n_states];
        for &s in s0 {
            intervals[s.index()] = Interval::new(h, f64::INFINITY);
        }
        Self {
            dim,
            intervals,
            psi: StateSet::empty(n_states),
            features: vec![0.0; n_states * dim],
            violation_count: 0,
        }
    }

    pub fn n_states(&self) -> usize {
        self.intervals.len()
    }

    pub fn interval(&self, s: State) -> Interval {
        self.intervals[s.index()]
    }

    pub fn psi(&self) -> &StateSet {
        &self.psi
    }

    pub fn feature(&self, s: State) -> Option<&[f64]> {
        let i = s.index();
        self.psi
            .contains(s)
            .then(|| &self.features[i * self.dim..(i + 1) * self.dim])
    }

    pub fn violation_count(&self) -> u64 {
        self.violation_count
    }

    /// Adds `s` to `Ψ`. Returns true if it was new.
    pub fn observe(&mut self, s: State, feature: &[f64]) -> Result<bool> {
        if feature.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: feature.len(),
            });
        }
        if !self.psi.insert(s) {
            return Ok(false);
        }
        let i = s.index();
        self.features[i * self.dim..(i + 1) * self.dim].copy_from_slice(feature);
        Ok(true)
    }

    /// Extends `Ψ` with `newly_observed`, then sets `C(s) ← Q(s) ∩ C(s)` for
    /// every state. An empty intersection is repaired to `Q(s)` and counted.
    /// Returns the number of repairs made by this call.
    pub fn update<'a>(
        &mut self,
        glm_g: &GlmEstimator,
        newly_observed: impl IntoIterator<Item = (State, &'a [f64])>,
    ) -> Result<u64> {
        for (s, phi) in newly_observed {
            self.observe(s, phi)?;
        }
        let outside = glm_g.interval_outside()?;
        let mut repairs = 0;
        for i in 0..self.intervals.len() {
            let s = State::from(i);
            let q = match self.feature(s) {
                Some(phi) => glm_g.interval_inside(phi)?,
                None => outside,
            };
            self.intervals[i] = match q.intersect(&self.intervals[i]) {
                Some(c) => c,
                None => {
                    repairs += 1;
                    q
                }
            };
        }
        self.violation_count += repairs;
        Ok(repairs)
    }

    /// `(S⁻, S⁺) = ({l ≥ h}, {u ≥ h})`
    pub fn threshold_sets(&self, h: f64) -> (StateSet, StateSet) {
        let n = self.intervals.len();
        let mut lower = StateSet::empty(n);
        let mut upper = StateSet::empty(n);
        for (i, c) in self.intervals.iter().enumerate() {
            if c.lo >= h {
                lower.insert(State::from(i));
            }
            if c.hi >= h {
                upper.insert(State::from(i));
            }
        }
        (lower, upper)
    }
}

/// `S ∩ Ȳ_reach(X_prev, Ψ) ∩ Ȳ_return(S, X_prev)`, shared by the pessimistic
/// (`S = S⁻`) and optimistic (`S = S⁺`) recursions.
pub fn safe_set_update(grid: &Grid, prev: &StateSet, threshold_set: &StateSet, psi: &StateSet) -> StateSet {
    threshold_set
        .intersection(&y_reach_closure(grid, prev, psi))
        .intersection(&y_return_closure(grid, threshold_set, prev))
}

/// Threshold sets and the two safe-set iterates.
#[derive(Debug, Clone, PartialEq)]
pub struct SafeSetState {
    pub s_minus: StateSet,
    pub s_plus: StateSet,
    pub x_minus: StateSet,
    pub x_plus: StateSet,
}

impl SafeSetState {
    pub fn new(n_states: usize, s0: &[State]) -> Self {
        let seed = StateSet::from_states(n_states, s0.iter().copied());
        Self {
            s_minus: seed.clone(),
            s_plus: seed.clone(),
            x_minus: seed.clone(),
            x_plus: seed,
        }
    }

    pub fn pessimistic_update(&mut self, grid: &Grid, s_minus: StateSet, psi: &StateSet) -> Result<()> {
        let x = safe_set_update(grid, &self.x_minus, &s_minus, psi);
        if x.is_empty() {
            return Err(Error::EmptySafeSet("pessimistic"));
        }
        self.s_minus = s_minus;
        self.x_minus = x;
        Ok(())
    }

    pub fn optimistic_update(&mut self, grid: &Grid, s_plus: StateSet, psi: &StateSet) -> Result<()> {
        let x = safe_set_update(grid, &self.x_plus, &s_plus, psi);
        if x.is_empty() {
            return Err(Error::EmptySafeSet("optimistic"));
        }
        self.s_plus = s_plus;
        self.x_plus = x;
        Ok(())
    }

    /// Recomputes threshold sets from `table` and advances both iterates.
    pub fn update(&mut self, grid: &Grid, table: &ConfidenceTable, h: f64) -> Result<()> {
        let (lower, upper) = table.threshold_sets(h);
        self.pessimistic_update(grid, lower, table.psi())?;
        self.optimistic_update(grid, upper, table.psi())
    }
}
