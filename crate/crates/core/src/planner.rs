//! Discounted planning on the grid graph.
//!
//! Values satisfy `J(s) = max_{s' ∈ succ(s) ∩ P} [gain(s') + γ·J(s')]` on a
//! planning set `P`: the gain is collected on arrival. [`solve_value`] runs
//! policy iteration with exact evaluation of the deterministic policy graph
//! (every policy is a functional graph, so each component is a tail feeding
//! one cycle whose value has a closed form), then checks the Bellman residual.
//! [`value_iteration`] is the plain sweep-based solver.

use crate::env::{Grid, State};
use crate::error::{Error, Result};
use crate::glm::GlmEstimator;
use crate::safesets::{ConfidenceTable, StateSet};

pub const DEFAULT_GAMMA: f64 = 0.999;
pub const DEFAULT_TOL: f64 = 1e-9;

/// Candidates within this relative distance of the best are ties.
const TIE_REL: f64 = 1e-12;

const UNSET: u32 = u32::MAX;

/// Fixed-point values on a planning set. States outside it are excluded and
/// never contribute to any max.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueTable {
    values: Vec<f64>,
    included: StateSet,
    /// Chosen successor per included state.
    policy: Vec<u32>,
    gamma: f64,
    residual: f64,
    iterations: usize,
}

impl ValueTable {
    pub fn get(&self, s: State) -> Option<f64> {
        self.included.contains(s).then(|| self.values[s.index()])
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn residual(&self) -> f64 {
        self.residual
    }

    /// Policy-improvement rounds or sweeps used by the solve.
    pub fn iterations(&self) -> usize {
        self.iterations
    }

    pub fn planning_set(&self) -> &StateSet {
        &self.included
    }

    pub fn successor(&self, s: State) -> Option<State> {
        self.included.contains(s).then(|| State(self.policy[s.index()]))
    }

    /// `gain(s') + γ·J(s')` for an included `s'`.
    #[inline]
    pub fn arrival_value(&self, gain: &[f64], s: State) -> Option<f64> {
        self.get(s).map(|j| gain[s.index()] + self.gamma * j)
    }
}

/// Candidate successors of `s`: `s` itself first, then the others in
/// ascending index order, deduplicated.
fn ordered_successors(grid: &Grid, s: State) -> impl Iterator<Item = State> {
    let mut succ = grid.successors(s);
    succ.sort_unstable();
    let mut last = None;
    std::iter::once(s).chain(succ.into_iter().filter(move |&n| {
        let fresh = n != s && Some(n) != last;
        last = Some(n);
        fresh
    }))
}

/// Argmax of `score` over candidates, ties going to the first candidate in
/// [`ordered_successors`] order (stay, then lowest index).
fn argmax_successor(
    grid: &Grid,
    s: State,
    allowed: impl Fn(State) -> bool,
    score: impl Fn(State) -> f64,
) -> Option<(State, f64)> {
    let mut best = f64::NEG_INFINITY;
    for n in ordered_successors(grid, s) {
        if allowed(n) {
            best = best.max(score(n));
        }
    }
    if best == f64::NEG_INFINITY {
        return None;
    }
    let slack = TIE_REL * (1.0 + best.abs());
    ordered_successors(grid, s)
        .filter(|&n| allowed(n))
        .map(|n| (n, score(n)))
        .find(|&(_, v)| v >= best - slack)
}

/// Solves the Bellman equation on `planning_set` with the default tolerance
/// scaling.
pub fn solve_value(grid: &Grid, planning_set: &StateSet, gain: &[f64], gamma: f64, tol: f64) -> Result<ValueTable> {
    solve_value_from(grid, planning_set, gain, gamma, tol, None)
}

/// Like [`solve_value`], optionally warm-started from an earlier table's
/// policy. The returned table satisfies `residual ≤ tol / (1 − γ)`.
pub fn solve_value_from(
    grid: &Grid,
    planning_set: &StateSet,
    gain: &[f64],
    gamma: f64,
    tol: f64,
    warm: Option<&ValueTable>,
) -> Result<ValueTable> {
    assert!((0.0..1.0).contains(&gamma), "gamma must lie in [0, 1)");
    assert_eq!(gain.len(), grid.n_states());
    if planning_set.is_empty() {
        return Err(Error::EmptyPlanningSet);
    }
    let n = grid.n_states();
    let members: Vec<State> = planning_set.iter().collect();
    let mut policy = vec![UNSET; n];
    for &s in &members {
        let keep = warm
            .and_then(|w| w.successor(s))
            .filter(|&p| planning_set.contains(p) && grid.successors(s).contains(&p));
        policy[s.index()] = keep.unwrap_or(s).0;
    }

    let mut values = vec![0.0; n];
    let mut rounds = 0;
    // Each round strictly improves some state, and there are finitely many
    // policies, but cap it anyway in case round-off makes us oscillate.
    let max_rounds = 10 * members.len() + 100;
    loop {
        evaluate_policy(&members, &policy, gain, gamma, &mut values);
        rounds += 1;
        let mut changed = false;
        for &s in &members {
            let current = State(policy[s.index()]);
            let q_current = gain[current.index()] + gamma * values[current.index()];
            let (best, q_best) = argmax_successor(
                grid,
                s,
                |x| planning_set.contains(x),
                |x| gain[x.index()] + gamma * values[x.index()],
            )
            .expect("stay is always a candidate");
            if best != current && q_best > q_current + TIE_REL * (1.0 + q_current.abs()) {
                policy[s.index()] = best.0;
                changed = true;
            }
        }
        if !changed || rounds >= max_rounds {
            break;
        }
    }

    let mut table = ValueTable {
        values,
        included: planning_set.clone(),
        policy,
        gamma,
        residual: 0.0,
        iterations: rounds,
    };
    table.residual = bellman_residual(grid, &table, gain);
    let tol_eff = tol / (1.0 - gamma);
    if table.residual > tol_eff {
        // round-off in the evaluation; finish with sweeps
        table = sweep_until(grid, table, gain, tol_eff)?;
    }
    Ok(table)
}

/// Exact value of a deterministic policy: walk each tail into its cycle,
/// close the cycle with its geometric sum, then back-propagate along the
/// tail.
fn evaluate_policy(members: &[State], policy: &[u32], gain: &[f64], gamma: f64, values: &mut [f64]) {
    const UNSEEN: u8 = 0;
    const ON_PATH: u8 = 1;
    const DONE: u8 = 2;
    let n = values.len();
    let mut mark = vec![UNSEEN; n];
    let mut path: Vec<usize> = Vec::new();
    for &start in members {
        if mark[start.index()] == DONE {
            continue;
        }
        path.clear();
        let mut cur = start.index();
        while mark[cur] == UNSEEN {
            mark[cur] = ON_PATH;
            path.push(cur);
            cur = policy[cur] as usize;
        }
        let mut tail_end = path.len();
        if mark[cur] == ON_PATH {
            let pos = path.iter().position(|&p| p == cur).expect("cycle entry on path");
            let cycle = &path[pos..];
            let m = cycle.len();
            // J(c_0) = Σ_{k<m} γ^k gain(c_{k+1}) / (1 − γ^m)
            let mut acc = 0.0;
            let mut disc = 1.0;
            for k in 0..m {
                acc += disc * gain[policy[cycle[k]] as usize];
                disc *= gamma;
            }
            values[cycle[0]] = acc / (1.0 - disc);
            mark[cycle[0]] = DONE;
            for k in (1..m).rev() {
                let next = policy[cycle[k]] as usize;
                values[cycle[k]] = gain[next] + gamma * values[next];
                mark[cycle[k]] = DONE;
            }
            tail_end = pos;
        }
        for &p in path[..tail_end].iter().rev() {
            let next = policy[p] as usize;
            values[p] = gain[next] + gamma * values[next];
            mark[p] = DONE;
        }
    }
}

/// `max_s |max_{s'} [gain(s') + γJ(s')] − J(s)|` over the planning set.
pub fn bellman_residual(grid: &Grid, table: &ValueTable, gain: &[f64]) -> f64 {
    let mut worst: f64 = 0.0;
    for s in table.included.iter() {
        let best = grid
            .successors(s)
            .iter()
            .filter_map(|&n| table.arrival_value(gain, n))
            .fold(f64::NEG_INFINITY, f64::max);
        worst = worst.max((best - table.values[s.index()]).abs());
    }
    worst
}

/// Sweep cap `10·(1−γ)⁻¹·log(1/tol)`.
pub fn sweep_cap(gamma: f64, tol: f64) -> usize {
    (10.0 / (1.0 - gamma) * (1.0 / tol).ln().max(1.0)).ceil() as usize
}

/// Plain synchronous value iteration from `J = 0`.
pub fn value_iteration(grid: &Grid, planning_set: &StateSet, gain: &[f64], gamma: f64, tol: f64) -> Result<ValueTable> {
    assert!((0.0..1.0).contains(&gamma), "gamma must lie in [0, 1)");
    if planning_set.is_empty() {
        return Err(Error::EmptyPlanningSet);
    }
    let n = grid.n_states();
    let policy = (0..n as u32).collect();
    let table = ValueTable {
        values: vec![0.0; n],
        included: planning_set.clone(),
        policy,
        gamma,
        residual: f64::INFINITY,
        iterations: 0,
    };
    sweep_until(grid, table, gain, tol)
}

fn sweep_until(grid: &Grid, mut table: ValueTable, gain: &[f64], tol: f64) -> Result<ValueTable> {
    let cap = sweep_cap(table.gamma, tol);
    let members: Vec<State> = table.included.iter().collect();
    let mut next = table.values.clone();
    for _ in 0..cap {
        let mut residual: f64 = 0.0;
        for &s in &members {
            let (best, q) = argmax_successor(
                grid,
                s,
                |x| table.included.contains(x),
                |x| gain[x.index()] + table.gamma * table.values[x.index()],
            )
            .expect("stay is always a candidate");
            residual = residual.max((q - table.values[s.index()]).abs());
            next[s.index()] = q;
            table.policy[s.index()] = best.0;
        }
        std::mem::swap(&mut table.values, &mut next);
        table.iterations += 1;
        table.residual = residual;
        if residual <= tol {
            return Ok(table);
        }
    }
    Err(Error::ValueIterationStalled {
        sweeps: cap,
        residual: table.residual,
    })
}

/// Successor of `s` inside `allowed` maximizing `gain(s') + γJ(s')`; stay
/// wins ties, then the lowest index. `None` if no successor is allowed and
/// valued.
pub fn greedy_next(grid: &Grid, s: State, table: &ValueTable, allowed: &StateSet, gain: &[f64]) -> Option<State> {
    argmax_successor(
        grid,
        s,
        |x| allowed.contains(x) && table.included.contains(x),
        |x| table.arrival_value(gain, x).unwrap_or(f64::NEG_INFINITY),
    )
    .map(|(x, _)| x)
}

/// The successor the agent would pick with no safety constraint: the
/// argmax over every valued successor.
pub fn eta(grid: &Grid, s: State, table: &ValueTable, gain: &[f64]) -> Option<State> {
    argmax_successor(
        grid,
        s,
        |x| table.included.contains(x),
        |x| table.arrival_value(gain, x).unwrap_or(f64::NEG_INFINITY),
    )
    .map(|(x, _)| x)
}

/// Member of `set` with the highest arrival value, lowest index on ties.
pub fn best_in_set(table: &ValueTable, set: &StateSet, gain: &[f64]) -> Option<State> {
    let mut best: Option<(State, f64)> = None;
    for s in set.iter() {
        if let Some(v) = table.arrival_value(gain, s) {
            match best {
                Some((_, b)) if v <= b + TIE_REL * (1.0 + b.abs()) => {}
                _ => best = Some((s, v)),
            }
        }
    }
    best.map(|(s, _)| s)
}

/// Optimistic reward `R(s)`: upper end of the inside interval for states in
/// `Ψ`, of the outside interval otherwise. Defined on every state.
pub fn ofu_reward(glm_r: &GlmEstimator, table: &ConfidenceTable) -> Result<Vec<f64>> {
    let outside = glm_r.interval_outside()?.hi;
    (0..table.n_states())
        .map(|i| match table.feature(State::from(i)) {
            Some(phi) => Ok(glm_r.interval_inside(phi)?.hi),
            None => Ok(outside),
        })
        .collect()
}

/// Exploration gain `‖φ_s‖_{W⁻¹}` on `X⁻`; zero for states whose feature is
/// unknown and for states outside `X⁻`.
pub fn etse_gain(glm: &GlmEstimator, table: &ConfidenceTable, x_minus: &StateSet) -> Vec<f64> {
    let mut gain = vec![0.0; table.n_states()];
    for s in x_minus.iter() {
        if let Some(phi) = table.feature(s) {
            gain[s.index()] = glm.weighted_norm(phi);
        }
    }
    gain
}
