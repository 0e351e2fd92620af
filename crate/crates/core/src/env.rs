//! Ground-truth grid world: per-cell feature vectors, GLM reward and safety,
//! deterministic 5-action transitions and the two observation channels.

use std::collections::VecDeque;
use std::fmt;
use std::path::Path;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::glm::LinkKind;
use crate::linalg::{dot, norm};

/// Attempts made by [`generate`] before giving up.
pub const GENERATION_ATTEMPTS: u32 = 100;

/// Coefficient norm used for sigmoid links that are not calibrated to a
/// target unsafe fraction (the reward, or safety when `h <= 0`).
const SIGMOID_SCALE: f64 = 4.0;

/// Largest coefficient norm accepted when calibrating a sigmoid safety model.
const MAX_SIGMOID_SCALE: f64 = 10.0;

/// Row-major cell index: `y * width + x`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct State(pub u32);

impl State {
    #[inline]
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl From<usize> for State {
    fn from(i: usize) -> Self {
        State(i as u32)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Action {
    Stay,
    Up,
    Right,
    Down,
    Left,
}

impl Action {
    pub const ALL: [Action; 5] = [
        Action::Stay,
        Action::Up,
        Action::Right,
        Action::Down,
        Action::Left,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Action::Stay => "stay",
            Action::Up => "up",
            Action::Right => "right",
            Action::Down => "down",
            Action::Left => "left",
        }
    }
}

impl std::str::FromStr for Action {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Action::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| Error::Parse(format!("unknown action '{s}'")))
    }
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Grid topology. "Up" decreases the row index; moves that would leave the
/// grid are self-loops.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Grid {
    pub width: usize,
    pub height: usize,
}

impl Grid {
    pub fn new(width: usize, height: usize) -> Self {
        Self { width, height }
    }

    #[inline]
    pub fn n_states(&self) -> usize {
        self.width * self.height
    }

    #[inline]
    pub fn state(&self, x: usize, y: usize) -> State {
        State::from(y * self.width + x)
    }

    #[inline]
    pub fn coords(&self, s: State) -> (usize, usize) {
        (s.index() % self.width, s.index() / self.width)
    }

    pub fn step(&self, s: State, a: Action) -> State {
        let (x, y) = self.coords(s);
        match a {
            Action::Stay => s,
            Action::Up if y > 0 => self.state(x, y - 1),
            Action::Right if x + 1 < self.width => self.state(x + 1, y),
            Action::Down if y + 1 < self.height => self.state(x, y + 1),
            Action::Left if x > 0 => self.state(x - 1, y),
            _ => s,
        }
    }

    /// Successors in action order (stay first). Boundary moves repeat `s`.
    #[inline]
    pub fn successors(&self, s: State) -> [State; 5] {
        Action::ALL.map(|a| self.step(s, a))
    }

    /// The action that moves `from` to `to`, if they are one step apart.
    pub fn action_between(&self, from: State, to: State) -> Option<Action> {
        Action::ALL.into_iter().find(|&a| self.step(from, a) == to)
    }

    /// States in the `(2k+1)×(2k+1)` square centered on `s`, clipped to the
    /// grid, in row-major order.
    pub fn window(&self, s: State, k: usize) -> Vec<State> {
        let (x, y) = self.coords(s);
        let x0 = x.saturating_sub(k);
        let y0 = y.saturating_sub(k);
        let x1 = x.saturating_add(k).min(self.width - 1);
        let y1 = y.saturating_add(k).min(self.height - 1);
        let mut out = Vec::with_capacity((x1 - x0 + 1) * (y1 - y0 + 1));
        for yy in y0..=y1 {
            for xx in x0..=x1 {
                out.push(self.state(xx, yy));
            }
        }
        out
    }
}

fn default_unsafe_fraction() -> f64 {
    0.15
}

fn default_s0_margin() -> f64 {
    0.05
}

fn default_true() -> bool {
    true
}

/// Parameters of a generated world.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub width: usize,
    pub height: usize,
    pub feature_dim: usize,
    pub link_kind_reward: LinkKind,
    pub link_kind_safety: LinkKind,
    pub noise_sigma_r: f64,
    pub noise_sigma_g: f64,
    pub safety_threshold: f64,
    pub fov_radius: usize,
    pub min_safe_region: usize,
    pub seed: u64,
    /// Target share of cells with `g < h` when the safety link is a sigmoid.
    #[serde(default = "default_unsafe_fraction")]
    pub unsafe_fraction: f64,
    /// `s0` is built from cells with `g >= h + s0_margin`.
    #[serde(default = "default_s0_margin")]
    pub s0_margin: f64,
    /// Reject worlds whose highest-reward cell lies outside `s0`.
    #[serde(default = "default_true")]
    pub require_safe_optimum: bool,
}

impl GridSpec {
    /// Spec with the benchmark defaults: identity reward, sigmoid safety,
    /// σ = 0.1 on both channels, h = 0.1, a 7×7 window.
    pub fn new(width: usize, height: usize, feature_dim: usize, seed: u64) -> Self {
        Self {
            width,
            height,
            feature_dim,
            link_kind_reward: LinkKind::Identity,
            link_kind_safety: LinkKind::Sigmoid,
            noise_sigma_r: 0.1,
            noise_sigma_g: 0.1,
            safety_threshold: 0.1,
            fov_radius: 3,
            min_safe_region: ((width * height) / 4).max(1),
            seed,
            unsafe_fraction: default_unsafe_fraction(),
            s0_margin: default_s0_margin(),
            require_safe_optimum: true,
        }
    }

    pub fn grid(&self) -> Grid {
        Grid::new(self.width, self.height)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidSpec(m.to_string()));
        if self.width == 0 || self.height == 0 {
            return bad("width and height must be positive");
        }
        if self.width.checked_mul(self.height).map_or(true, |n| n > u32::MAX as usize) {
            return bad("grid too large");
        }
        if self.feature_dim == 0 {
            return bad("feature_dim must be positive");
        }
        if !(self.noise_sigma_r >= 0.0 && self.noise_sigma_g >= 0.0) {
            return bad("noise sigmas must be nonnegative");
        }
        // h = 0 is accepted as the degenerate "everything safe" world
        if !(0.0..=1.0).contains(&self.safety_threshold) {
            return bad("safety_threshold must lie in [0, 1]");
        }
        if self.min_safe_region == 0 {
            return bad("min_safe_region must be positive");
        }
        if !(0.0..1.0).contains(&self.unsafe_fraction) {
            return bad("unsafe_fraction must lie in [0, 1)");
        }
        if !(self.s0_margin >= 0.0) {
            return bad("s0_margin must be nonnegative");
        }
        Ok(())
    }
}

/// One near-sighted observation.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub state: State,
    pub feature: Vec<f64>,
    pub y_r: f64,
    pub y_g: f64,
}

/// Immutable ground-truth environment.
#[derive(Debug, Clone, PartialEq)]
pub struct GridWorld {
    spec: GridSpec,
    grid: Grid,
    /// `n_states × d`, row-major.
    features: Vec<f64>,
    theta_r: Vec<f64>,
    theta_g: Vec<f64>,
    reward: Vec<f64>,
    safety: Vec<f64>,
    start: State,
    s0: Vec<State>,
}

impl GridWorld {
    /// Assembles a world from explicit parts, checking every invariant
    /// except the range of `r` and `g` (a sigmoid guarantees it, an identity
    /// link relies on the coefficients).
    pub fn from_parts(
        spec: GridSpec,
        features: Vec<Vec<f64>>,
        theta_r: Vec<f64>,
        theta_g: Vec<f64>,
        s0: Vec<State>,
        start: State,
    ) -> Result<Self> {
        spec.validate()?;
        let grid = spec.grid();
        let d = spec.feature_dim;
        let n = grid.n_states();
        if features.len() != n {
            return Err(Error::Parse(format!("expected {n} feature rows, got {}", features.len())));
        }
        if theta_r.len() != d || theta_g.len() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: if theta_r.len() != d { theta_r.len() } else { theta_g.len() },
            });
        }
        let mut flat = Vec::with_capacity(n * d);
        for row in &features {
            if row.len() != d {
                return Err(Error::DimensionMismatch { expected: d, got: row.len() });
            }
            let nrm = norm(row);
            if nrm > 1.0 + 1e-9 {
                return Err(Error::FeatureNormExceeded { norm: nrm });
            }
            flat.extend_from_slice(row);
        }
        let reward: Vec<f64> = flat
            .chunks(d)
            .map(|phi| spec.link_kind_reward.mean(dot(phi, &theta_r)))
            .collect();
        let safety: Vec<f64> = flat
            .chunks(d)
            .map(|phi| spec.link_kind_safety.mean(dot(phi, &theta_g)))
            .collect();

        let world = Self {
            grid,
            features: flat,
            theta_r,
            theta_g,
            reward,
            safety,
            start,
            s0,
            spec,
        };
        world.check_prior()?;
        Ok(world)
    }

    fn check_prior(&self) -> Result<()> {
        let n = self.grid.n_states();
        if self.s0.is_empty() {
            return Err(Error::InvalidSpec("s0 is empty".into()));
        }
        let mut member = vec![false; n];
        for &s in &self.s0 {
            if s.index() >= n {
                return Err(Error::InvalidSpec(format!("s0 state {} out of range", s.0)));
            }
            if self.safety[s.index()] < self.spec.safety_threshold {
                return Err(Error::InvalidSpec(format!("s0 state {} is unsafe", s.0)));
            }
            member[s.index()] = true;
        }
        if self.start.index() >= n || !member[self.start.index()] {
            return Err(Error::InvalidSpec("start state is not in s0".into()));
        }
        let reached = component(&self.grid, self.start, |s| member[s.index()]);
        if reached.len() != self.s0.len() {
            return Err(Error::InvalidSpec("s0 is not connected".into()));
        }
        Ok(())
    }

    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn n_states(&self) -> usize {
        self.grid.n_states()
    }

    pub fn dim(&self) -> usize {
        self.spec.feature_dim
    }

    pub fn threshold(&self) -> f64 {
        self.spec.safety_threshold
    }

    #[inline]
    pub fn feature(&self, s: State) -> &[f64] {
        let d = self.spec.feature_dim;
        &self.features[s.index() * d..(s.index() + 1) * d]
    }

    pub fn theta_r_star(&self) -> &[f64] {
        &self.theta_r
    }

    pub fn theta_g_star(&self) -> &[f64] {
        &self.theta_g
    }

    #[inline]
    pub fn true_reward(&self, s: State) -> f64 {
        self.reward[s.index()]
    }

    #[inline]
    pub fn true_safety(&self, s: State) -> f64 {
        self.safety[s.index()]
    }

    pub fn start(&self) -> State {
        self.start
    }

    pub fn s0(&self) -> &[State] {
        &self.s0
    }

    pub fn states(&self) -> impl Iterator<Item = State> {
        (0..self.n_states()).map(State::from)
    }

    #[inline]
    pub fn step(&self, s: State, a: Action) -> State {
        self.grid.step(s, a)
    }

    /// Feature of `s` with noisy reward and safety readings.
    pub fn near_observe<R: Rng + ?Sized>(&self, s: State, rng: &mut R) -> Observation {
        let n_r: f64 = StandardNormal.sample(rng);
        let n_g: f64 = StandardNormal.sample(rng);
        Observation {
            state: s,
            feature: self.feature(s).to_vec(),
            y_r: self.true_reward(s) + self.spec.noise_sigma_r * n_r,
            y_g: self.true_safety(s) + self.spec.noise_sigma_g * n_g,
        }
    }

    /// Noiseless features of every cell in the sensor window of radius `k`.
    pub fn far_observe(&self, s: State, k: usize) -> Vec<(State, &[f64])> {
        self.grid
            .window(s, k)
            .into_iter()
            .map(|w| (w, self.feature(w)))
            .collect()
    }

    /// Evaluation-only: `g(s) < h`.
    #[inline]
    pub fn is_unsafe(&self, s: State) -> bool {
        self.true_safety(s) < self.spec.safety_threshold
    }

    pub fn to_file(&self) -> EnvFile {
        EnvFile {
            spec: self.spec.clone(),
            theta_r_star: self.theta_r.clone(),
            theta_g_star: self.theta_g.clone(),
            features: self.features.chunks(self.dim()).map(<[f64]>::to_vec).collect(),
            s0: self.s0.clone(),
            start: self.start,
        }
    }

    pub fn from_file(file: EnvFile) -> Result<Self> {
        Self::from_parts(
            file.spec,
            file.features,
            file.theta_r_star,
            file.theta_g_star,
            file.s0,
            file.start,
        )
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.to_file())?)
    }

    pub fn from_json(json: &str) -> Result<Self> {
        Self::from_file(serde_json::from_str(json)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut json = self.to_json()?;
        json.push('\n');
        std::fs::write(path, json)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

/// On-disk environment format.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvFile {
    pub spec: GridSpec,
    pub theta_r_star: Vec<f64>,
    pub theta_g_star: Vec<f64>,
    pub features: Vec<Vec<f64>>,
    pub s0: Vec<State>,
    pub start: State,
}

/// Generates a world from `spec`. Pure function of the spec.
pub fn generate(spec: &GridSpec) -> Result<GridWorld> {
    spec.validate()?;
    let mut last_reason = String::new();
    for attempt in 0..GENERATION_ATTEMPTS {
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        rng.set_stream(u64::from(attempt));
        match try_generate(spec, &mut rng) {
            Ok(world) => return Ok(world),
            Err(reason) => last_reason = reason,
        }
    }
    Err(Error::GenerationFailed {
        attempts: GENERATION_ATTEMPTS,
        reason: last_reason,
    })
}

fn try_generate(spec: &GridSpec, rng: &mut ChaCha8Rng) -> std::result::Result<GridWorld, String> {
    let grid = spec.grid();
    let d = spec.feature_dim;
    let features: Vec<Vec<f64>> = (0..grid.n_states()).map(|_| orthant_ball_sample(d, rng)).collect();

    let theta_r = match spec.link_kind_reward {
        LinkKind::Identity => identity_coefficients(&features, rng)?,
        LinkKind::Sigmoid => scaled(&unit_gaussian(d, rng), SIGMOID_SCALE),
    };
    let theta_g = match spec.link_kind_safety {
        LinkKind::Identity => identity_coefficients(&features, rng)?,
        LinkKind::Sigmoid => calibrated_sigmoid_coefficients(spec, &features, rng)?,
    };

    let h = spec.safety_threshold;
    let safety: Vec<f64> = features
        .iter()
        .map(|phi| spec.link_kind_safety.mean(dot(phi, &theta_g)))
        .collect();
    let cutoff = h + spec.s0_margin;
    let s0 = largest_component(&grid, |s| safety[s.index()] >= cutoff);
    if s0.len() < spec.min_safe_region {
        return Err(format!(
            "largest safe region has {} states, need {}",
            s0.len(),
            spec.min_safe_region
        ));
    }
    if spec.require_safe_optimum {
        let best = features
            .iter()
            .map(|phi| spec.link_kind_reward.mean(dot(phi, &theta_r)))
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |acc, (i, r)| if r > acc.1 { (i, r) } else { acc })
            .0;
        if s0.binary_search(&State::from(best)).is_err() {
            return Err("highest-reward cell is outside the prior safe region".into());
        }
    }
    let start = s0[0];
    GridWorld::from_parts(spec.clone(), features, theta_r, theta_g, s0, start).map_err(|e| e.to_string())
}

/// Uniform sample from `{x ∈ ℝᵈ : x ≥ 0, ‖x‖ ≤ 1}`.
fn orthant_ball_sample<R: Rng + ?Sized>(d: usize, rng: &mut R) -> Vec<f64> {
    let dir: Vec<f64> = loop {
        let v: Vec<f64> = (0..d)
            .map(|_| {
                let z: f64 = StandardNormal.sample(rng);
                z.abs()
            })
            .collect();
        if norm(&v) > 0.0 {
            break v;
        }
    };
    let radius = rng.gen::<f64>().powf(1.0 / d as f64);
    scaled(&dir, radius / norm(&dir))
}

fn unit_gaussian<R: Rng + ?Sized>(d: usize, rng: &mut R) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..d).map(|_| StandardNormal.sample(rng)).collect();
        let n = norm(&v);
        if n > 0.0 {
            return scaled(&v, 1.0 / n);
        }
    }
}

fn scaled(v: &[f64], c: f64) -> Vec<f64> {
    v.iter().map(|x| x * c).collect()
}

/// Nonnegative coefficients scaled so that `max_s φ_sᵀθ = 1`.
fn identity_coefficients<R: Rng + ?Sized>(
    features: &[Vec<f64>],
    rng: &mut R,
) -> std::result::Result<Vec<f64>, String> {
    let d = features[0].len();
    let raw: Vec<f64> = (0..d).map(|_| rng.gen::<f64>()).collect();
    let max = features.iter().map(|phi| dot(phi, &raw)).fold(0.0, f64::max);
    if !(max > 0.0) {
        return Err("degenerate identity coefficients".into());
    }
    let mut theta = scaled(&raw, 1.0 / max);
    // rounding can leave the top value one ulp above 1
    while features.iter().any(|phi| dot(phi, &theta) > 1.0) {
        theta = scaled(&theta, 1.0 - f64::EPSILON);
    }
    Ok(theta)
}

/// Random direction `v` scaled so that the `unsafe_fraction` quantile of
/// `φᵀv` lands exactly on `logit(h)`.
fn calibrated_sigmoid_coefficients<R: Rng + ?Sized>(
    spec: &GridSpec,
    features: &[Vec<f64>],
    rng: &mut R,
) -> std::result::Result<Vec<f64>, String> {
    let d = spec.feature_dim;
    let v = unit_gaussian(d, rng);
    let h = spec.safety_threshold;
    if h <= 0.0 || spec.unsafe_fraction == 0.0 {
        return Ok(scaled(&v, SIGMOID_SCALE));
    }
    if h >= 1.0 {
        return Err("no cell can reach h = 1 under a sigmoid link".into());
    }
    let mut z: Vec<f64> = features.iter().map(|phi| dot(phi, &v)).collect();
    z.sort_by(f64::total_cmp);
    let k = ((spec.unsafe_fraction * z.len() as f64).round() as usize).min(z.len() - 1);
    // midpoint between the k-th and (k+1)-th order statistics so exactly k
    // cells fall below the threshold
    let zq = if k == 0 { z[0] } else { 0.5 * (z[k - 1] + z[k]) };
    let logit_h = (h / (1.0 - h)).ln();
    let c = logit_h / zq;
    if !(c > 0.0 && c.is_finite() && c <= MAX_SIGMOID_SCALE) {
        return Err(format!("sigmoid calibration gave scale {c}"));
    }
    Ok(scaled(&v, c))
}

/// States reachable from `from` through cells satisfying `member`.
pub(crate) fn component(grid: &Grid, from: State, member: impl Fn(State) -> bool) -> Vec<State> {
    let mut seen = vec![false; grid.n_states()];
    let mut out = Vec::new();
    let mut queue = VecDeque::from([from]);
    seen[from.index()] = true;
    while let Some(s) = queue.pop_front() {
        out.push(s);
        for nb in grid.successors(s) {
            if !seen[nb.index()] && member(nb) {
                seen[nb.index()] = true;
                queue.push_back(nb);
            }
        }
    }
    out.sort();
    out
}

/// Largest 4-connected component of `member`, sorted; ties go to the
/// component containing the lowest index.
fn largest_component(grid: &Grid, member: impl Fn(State) -> bool) -> Vec<State> {
    let mut seen = vec![false; grid.n_states()];
    let mut best: Vec<State> = Vec::new();
    for i in 0..grid.n_states() {
        let s = State::from(i);
        if seen[i] || !member(s) {
            continue;
        }
        let comp = component(grid, s, &member);
        for c in &comp {
            seen[c.index()] = true;
        }
        if comp.len() > best.len() {
            best = comp;
        }
    }
    best
}
