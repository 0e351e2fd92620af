//! Brute-force reference implementations shared by the integration tests
//! and the acceptance runner. Nothing here calls the library's set or
//! planning code; grids are plain `Vec<bool>` masks and moves are redone
//! from coordinates.

#![allow(dead_code)]

use rand::Rng;
use spolf::{GridSpec, GridWorld, LinkKind, State};

pub type Mask = Vec<bool>;

/// Up, right, down, left and stay, with off-grid moves clamped in place.
pub fn neighbours(w: usize, h: usize, i: usize) -> Vec<usize> {
    let (x, y) = ((i % w) as i64, (i / w) as i64);
    [(0, 0), (0, -1), (1, 0), (0, 1), (-1, 0)]
        .iter()
        .map(|&(dx, dy)| {
            let (nx, ny) = (x + dx, y + dy);
            if nx < 0 || ny < 0 || nx >= w as i64 || ny >= h as i64 {
                i
            } else {
                (ny as usize) * w + nx as usize
            }
        })
        .collect()
}

/// Repeated full sweeps until nothing is added.
pub fn reach(w: usize, h: usize, x: &Mask, domain: &Mask) -> Mask {
    let mut out = x.clone();
    loop {
        let mut changed = false;
        for i in 0..out.len() {
            if out[i] {
                for n in neighbours(w, h, i) {
                    if domain[n] && !out[n] {
                        out[n] = true;
                        changed = true;
                    }
                }
            }
        }
        if !changed {
            return out;
        }
    }
}

pub fn ret(w: usize, h: usize, x: &Mask, xbar: &Mask) -> Mask {
    let mut out = xbar.clone();
    loop {
        let mut changed = false;
        for i in 0..out.len() {
            if x[i] && !out[i] && neighbours(w, h, i).iter().any(|&n| out[n]) {
                out[i] = true;
                changed = true;
            }
        }
        if !changed {
            return out;
        }
    }
}

pub fn and(a: &Mask, b: &Mask) -> Mask {
    a.iter().zip(b).map(|(p, q)| *p && *q).collect()
}

pub fn safe_update(w: usize, h: usize, prev: &Mask, s: &Mask, psi: &Mask) -> Mask {
    and(&and(s, &reach(w, h, prev, psi)), &ret(w, h, s, prev))
}

pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Safety recomputed from the raw world file.
pub fn safety(world: &GridWorld, i: usize) -> f64 {
    let z: f64 = world
        .feature(State::from(i))
        .iter()
        .zip(world.theta_g_star())
        .map(|(a, b)| a * b)
        .sum();
    match world.spec().link_kind_safety {
        LinkKind::Identity => z,
        LinkKind::Sigmoid => sigmoid(z),
    }
}

pub fn true_safe(world: &GridWorld, s0: &Mask, eps: f64, k: usize) -> Mask {
    let (w, h) = (world.spec().width, world.spec().height);
    let thr = world.threshold();
    let all = vec![true; w * h];
    let mut x = s0.clone();
    loop {
        let mut y = x.clone();
        for i in 0..x.len() {
            if !x[i] {
                continue;
            }
            let (cx, cy) = ((i % w) as i64, (i / w) as i64);
            for j in 0..x.len() {
                let (jx, jy) = ((j % w) as i64, (j / w) as i64);
                let near = (jx - cx).unsigned_abs() as usize <= k && (jy - cy).unsigned_abs() as usize <= k;
                if near && safety(world, j) - eps >= thr {
                    y[j] = true;
                }
            }
        }
        let z = and(&and(&y, &reach(w, h, &x, &all)), &ret(w, h, &y, &x));
        if z == x {
            return x;
        }
        x = z;
    }
}

pub fn random_mask<R: Rng>(n: usize, p: f64, rng: &mut R) -> Mask {
    (0..n).map(|_| rng.gen_bool(p)).collect()
}

pub fn mask_of(set: &spolf::StateSet) -> Mask {
    (0..set.capacity()).map(|i| set.contains(State::from(i))).collect()
}

pub fn set_of(m: &Mask) -> spolf::StateSet {
    spolf::StateSet::from_states(m.len(), m.iter().enumerate().filter(|(_, b)| **b).map(|(i, _)| State::from(i)))
}

/// Small sigmoid-safety world; may fail to generate for unlucky seeds.
pub fn small_world(w: usize, h: usize, seed: u64) -> Option<GridWorld> {
    let mut spec = GridSpec::new(w, h, 3, seed);
    spec.min_safe_region = 2;
    spec.require_safe_optimum = false;
    spolf::generate(&spec).ok()
}

/// Optimal discounted value of every state by enumerating all deterministic
/// stationary policies restricted to `allowed`. Values for states outside
/// `allowed` are `None`.
pub fn exhaustive_values(w: usize, h: usize, allowed: &Mask, gain: &[f64], gamma: f64) -> Vec<Option<f64>> {
    let n = w * h;
    let choices: Vec<Vec<usize>> = (0..n)
        .map(|i| {
            if !allowed[i] {
                return vec![];
            }
            let mut c: Vec<usize> = neighbours(w, h, i).into_iter().filter(|&j| allowed[j]).collect();
            c.sort_unstable();
            c.dedup();
            c
        })
        .collect();
    let members: Vec<usize> = (0..n).filter(|&i| allowed[i]).collect();
    let mut best = vec![f64::NEG_INFINITY; n];
    let mut pick = vec![0usize; members.len()];
    loop {
        let policy: Vec<usize> = {
            let mut p = vec![usize::MAX; n];
            for (k, &i) in members.iter().enumerate() {
                p[i] = choices[i][pick[k]];
            }
            p
        };
        for &s in &members {
            let v = policy_value(&policy, gain, gamma, s);
            if v > best[s] {
                best[s] = v;
            }
        }
        // odometer increment
        let mut k = 0;
        loop {
            if k == members.len() {
                return (0..n).map(|i| allowed[i].then_some(best[i])).collect();
            }
            pick[k] += 1;
            if pick[k] < choices[members[k]].len() {
                break;
            }
            pick[k] = 0;
            k += 1;
        }
    }
}

/// `Σ_t γ^t gain(s_{t+1})` following `policy` from `s`, with the eventual
/// cycle summed in closed form.
fn policy_value(policy: &[usize], gain: &[f64], gamma: f64, s: usize) -> f64 {
    let mut path = vec![s];
    let mut seen = vec![usize::MAX; policy.len()];
    seen[s] = 0;
    loop {
        let next = policy[*path.last().unwrap()];
        if seen[next] != usize::MAX {
            let start = seen[next];
            // path[0..] then next == path[start] closes the loop
            let mut prefix = 0.0;
            let mut disc = 1.0;
            for &p in &path[1..=start] {
                prefix += disc * gain[p];
                disc *= gamma;
            }
            let mut cyc = 0.0;
            let mut cd = 1.0;
            for &p in path[start + 1..].iter().chain(std::iter::once(&next)) {
                cyc += cd * gain[p];
                cd *= gamma;
            }
            return prefix + disc * cyc / (1.0 - cd);
        }
        seen[next] = path.len();
        path.push(next);
    }
}
