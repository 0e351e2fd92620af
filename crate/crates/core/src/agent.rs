//! The SPO-LF control loop and the comparison baselines.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::env::{Action, GridWorld, Observation, State};
use crate::error::{Error, Result};
use crate::glm::{GlmEstimator, RIDGE};
use crate::planner::{
    best_in_set, eta, etse_gain, greedy_next, ofu_reward, solve_value_from, ValueTable, DEFAULT_GAMMA, DEFAULT_TOL,
};
use crate::safesets::{true_safe_space, ConfidenceTable, SafeSetState, StateSet};

/// Penalty used when the plain likelihood has no maximizer.
const FALLBACK_PENALTY: f64 = 1.0;

const STREAM_PRIOR: u64 = 0;
const STREAM_NOISE: u64 = 1;
const STREAM_POLICY: u64 = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    Spolf,
    Oracle,
    UnsafeGlm,
    Random,
    StepSafeGlm,
}

impl Algorithm {
    pub const ALL: [Algorithm; 5] = [
        Algorithm::Spolf,
        Algorithm::Oracle,
        Algorithm::UnsafeGlm,
        Algorithm::Random,
        Algorithm::StepSafeGlm,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Spolf => "spolf",
            Algorithm::Oracle => "oracle",
            Algorithm::UnsafeGlm => "unsafe_glm",
            Algorithm::Random => "random",
            Algorithm::StepSafeGlm => "step_safe_glm",
        }
    }

    fn learns(self) -> bool {
        !matches!(self, Algorithm::Oracle | Algorithm::Random)
    }

    fn uses_safe_sets(self) -> bool {
        matches!(self, Algorithm::Spolf | Algorithm::StepSafeGlm)
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Algorithm::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown algorithm '{s}'")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Ofu,
    Etse,
}

impl Mode {
    pub fn name(self) -> &'static str {
        match self {
            Mode::Ofu => "ofu",
            Mode::Etse => "etse",
        }
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ofu" => Ok(Mode::Ofu),
            "etse" => Ok(Mode::Etse),
            other => Err(Error::Parse(format!("unknown mode '{other}'"))),
        }
    }
}

fn default_gamma() -> f64 {
    DEFAULT_GAMMA
}
fn default_delta() -> f64 {
    0.05
}
fn default_prior() -> usize {
    10
}
fn default_budget() -> usize {
    200
}
fn default_stability() -> usize {
    20
}
fn default_true() -> bool {
    true
}
fn default_tol() -> f64 {
    DEFAULT_TOL
}

/// Per-run settings. `fov_radius` and `h` default to the world's values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub algorithm: Algorithm,
    pub steps: usize,
    #[serde(default)]
    pub fov_radius: Option<usize>,
    #[serde(default = "default_gamma")]
    pub gamma: f64,
    #[serde(default = "default_delta")]
    pub delta_r: f64,
    #[serde(default = "default_delta")]
    pub delta_g: f64,
    #[serde(default)]
    pub h: Option<f64>,
    #[serde(default = "default_prior")]
    pub prior_safety_samples: usize,
    #[serde(default = "default_prior")]
    pub prior_reward_samples: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_budget")]
    pub step_safe_phase1_budget: usize,
    #[serde(default = "default_stability")]
    pub step_safe_stability_k: usize,
    /// Leave ETSE as soon as the constrained and unconstrained choices agree.
    #[serde(default = "default_true")]
    pub etse_early_exit: bool,
    #[serde(default = "default_tol")]
    pub plan_tol: f64,
    /// Record wall-clock nanoseconds per step; zero otherwise so that logs
    /// stay reproducible.
    #[serde(default)]
    pub timing: bool,
}

impl RunConfig {
    pub fn new(algorithm: Algorithm, steps: usize, seed: u64) -> Self {
        Self {
            algorithm,
            steps,
            fov_radius: None,
            gamma: DEFAULT_GAMMA,
            delta_r: 0.05,
            delta_g: 0.05,
            h: None,
            prior_safety_samples: 10,
            prior_reward_samples: 10,
            seed,
            step_safe_phase1_budget: default_budget(),
            step_safe_stability_k: default_stability(),
            etse_early_exit: true,
            plan_tol: DEFAULT_TOL,
            timing: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.to_string()));
        if !(self.delta_r > 0.0 && self.delta_r < 1.0 && self.delta_g > 0.0 && self.delta_g < 1.0) {
            return bad("delta_r and delta_g must lie in (0, 1)");
        }
        if !(self.gamma >= 0.0 && self.gamma < 1.0) {
            return bad("gamma must lie in [0, 1)");
        }
        if !(self.plan_tol > 0.0) {
            return bad("plan_tol must be positive");
        }
        if let Some(h) = self.h {
            if !(0.0..=1.0).contains(&h) {
                return bad("h must lie in [0, 1]");
            }
        }
        Ok(())
    }
}

/// One row of a trajectory log. Position and true values refer to the state
/// reached by the step; the observations are those taken before moving.
#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub t: usize,
    pub x: usize,
    pub y: usize,
    pub action: Action,
    pub reward_true: f64,
    pub reward_obs: f64,
    pub safety_true: f64,
    pub safety_obs: f64,
    pub unsafe_: bool,
    pub mode: Mode,
    pub size_x_minus: usize,
    pub size_x_plus: usize,
    pub size_psi: usize,
    pub cum_reward: f64,
    pub glm_fit_iters: usize,
    pub step_wall_nanos: u64,
}

/// Wall time of one step split by phase.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct StepTimings {
    /// GLM updates, refits and the `W` inverse/eigen refresh.
    pub glm_bound_nanos: u64,
    /// Confidence table, threshold sets and closures.
    pub set_ops_nanos: u64,
    pub planning_nanos: u64,
}

/// Safety-GLM quantities after the step's update.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepDiagnostics {
    /// `‖φ_{s_t}‖_{W_t⁻¹}` for the feature just observed.
    pub weighted_norm: f64,
    /// `λ_max(W_t⁻¹)`
    pub lambda_max_inv: f64,
}

struct Learner {
    glm_r: GlmEstimator,
    glm_g: GlmEstimator,
    table: ConfidenceTable,
    sets: SafeSetState,
    fallback_fits: usize,
}

enum Policy {
    Spolf,
    Oracle { space: StateSet, gain: Vec<f64>, values: ValueTable },
    UnsafeGlm,
    Random,
    StepSafe { stable_steps: usize, frozen: Option<StateSet> },
}

/// A running agent bound to one world.
pub struct Agent<'w> {
    world: &'w GridWorld,
    config: RunConfig,
    fov: usize,
    h: f64,
    current: State,
    t: usize,
    cum_reward: f64,
    mode: Mode,
    etse_target: Option<State>,
    learner: Option<Learner>,
    policy: Policy,
    noise_rng: ChaCha8Rng,
    policy_rng: ChaCha8Rng,
    ofu_cache: Option<ValueTable>,
    etse_cache: Option<ValueTable>,
    last_timings: StepTimings,
    last_diagnostics: Option<StepDiagnostics>,
}

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

/// Fits by maximum likelihood, falling back to a penalized fit when the
/// likelihood has no finite maximizer. Returns Newton iterations used.
fn refit(est: &mut GlmEstimator, fallbacks: &mut usize) -> Result<usize> {
    if est.n_observations() < est.dim() {
        return Ok(0);
    }
    match est.fit_mle() {
        Ok(report) => Ok(report.iterations),
        Err(Error::NewtonDivergence { .. } | Error::SingularDesign) => {
            *fallbacks += 1;
            Ok(est.fit_penalized(FALLBACK_PENALTY)?.iterations)
        }
        Err(e) => Err(e),
    }
}

fn nanos_since(start: Instant) -> u64 {
    start.elapsed().as_nanos() as u64
}

impl<'w> Agent<'w> {
    pub fn new(world: &'w GridWorld, config: RunConfig) -> Result<Self> {
        config.validate()?;
        let fov = config.fov_radius.unwrap_or(world.spec().fov_radius);
        let h = config.h.unwrap_or(world.threshold());
        let n = world.n_states();
        let d = world.dim();
        let mut prior_rng = stream(config.seed, STREAM_PRIOR);

        let learner = if config.algorithm.learns() {
            if config.algorithm.uses_safe_sets() && config.prior_safety_samples < d {
                return Err(Error::InsufficientPrior {
                    which: "safety",
                    have: config.prior_safety_samples,
                    need: d,
                });
            }
            let spec = world.spec();
            let mut glm_g = GlmEstimator::new(spec.link_kind_safety, d, spec.noise_sigma_g, config.delta_g);
            let mut glm_r = GlmEstimator::new(spec.link_kind_reward, d, spec.noise_sigma_r, config.delta_r);
            for _ in 0..config.prior_safety_samples {
                let s = State::from(prior_rng.gen_range(0..n));
                let obs = world.near_observe(s, &mut prior_rng);
                glm_g.update(&obs.feature, obs.y_g)?;
            }
            for _ in 0..config.prior_reward_samples {
                let s = State::from(prior_rng.gen_range(0..n));
                let obs = world.near_observe(s, &mut prior_rng);
                glm_r.update(&obs.feature, obs.y_r)?;
            }
            let mut fallback_fits = 0;
            refit(&mut glm_g, &mut fallback_fits)?;
            refit(&mut glm_r, &mut fallback_fits)?;
            Some(Learner {
                glm_r,
                glm_g,
                table: ConfidenceTable::new(n, d, world.s0(), h),
                sets: SafeSetState::new(n, world.s0()),
                fallback_fits,
            })
        } else {
            None
        };

        let policy = match config.algorithm {
            Algorithm::Spolf => Policy::Spolf,
            Algorithm::UnsafeGlm => Policy::UnsafeGlm,
            Algorithm::Random => Policy::Random,
            Algorithm::StepSafeGlm => Policy::StepSafe {
                stable_steps: 0,
                frozen: None,
            },
            Algorithm::Oracle => {
                let s0 = StateSet::from_states(n, world.s0().iter().copied());
                let space = true_safe_space(world, &s0, 0.0, usize::MAX);
                let gain: Vec<f64> = world.states().map(|s| world.true_reward(s)).collect();
                let values = solve_value_from(world.grid(), &space, &gain, config.gamma, config.plan_tol, None)?;
                Policy::Oracle { space, gain, values }
            }
        };

        Ok(Self {
            world,
            fov,
            h,
            current: world.start(),
            t: 0,
            cum_reward: 0.0,
            mode: Mode::Ofu,
            etse_target: None,
            learner,
            policy,
            noise_rng: stream(config.seed, STREAM_NOISE),
            policy_rng: stream(config.seed, STREAM_POLICY),
            ofu_cache: None,
            etse_cache: None,
            last_timings: StepTimings::default(),
            last_diagnostics: None,
            config,
        })
    }

    pub fn current(&self) -> State {
        self.current
    }

    pub fn step_count(&self) -> usize {
        self.t
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn etse_target(&self) -> Option<State> {
        self.etse_target
    }

    pub fn config(&self) -> &RunConfig {
        &self.config
    }

    pub fn glm_reward(&self) -> Option<&GlmEstimator> {
        self.learner.as_ref().map(|l| &l.glm_r)
    }

    pub fn glm_safety(&self) -> Option<&GlmEstimator> {
        self.learner.as_ref().map(|l| &l.glm_g)
    }

    pub fn confidence(&self) -> Option<&ConfidenceTable> {
        self.learner.as_ref().map(|l| &l.table)
    }

    pub fn safe_sets(&self) -> Option<&SafeSetState> {
        self.learner.as_ref().map(|l| &l.sets)
    }

    pub fn violation_count(&self) -> u64 {
        self.learner.as_ref().map_or(0, |l| l.table.violation_count())
    }

    pub fn fallback_fits(&self) -> usize {
        self.learner.as_ref().map_or(0, |l| l.fallback_fits)
    }

    pub fn last_timings(&self) -> StepTimings {
        self.last_timings
    }

    pub fn last_diagnostics(&self) -> Option<StepDiagnostics> {
        self.last_diagnostics
    }

    /// Executes one environment transition.
    pub fn step(&mut self) -> Result<StepRecord> {
        let started = Instant::now();
        let mut timings = StepTimings::default();
        let obs = self.world.near_observe(self.current, &mut self.noise_rng);
        let fit_iters = if self.learner.is_some() {
            self.learn(&obs, &mut timings)?
        } else {
            0
        };

        let plan_start = Instant::now();
        let next = match self.config.algorithm {
            Algorithm::Spolf => self.spolf_choice()?,
            Algorithm::Oracle => self.oracle_choice(),
            Algorithm::UnsafeGlm => self.unsafe_glm_choice()?,
            Algorithm::Random => self.random_choice(),
            Algorithm::StepSafeGlm => self.step_safe_choice()?,
        };
        timings.planning_nanos = nanos_since(plan_start);

        let grid = self.world.grid();
        let action = grid
            .action_between(self.current, next)
            .expect("chosen state is a successor");
        self.current = next;
        let reward_true = self.world.true_reward(next);
        let safety_true = self.world.true_safety(next);
        self.cum_reward += reward_true;
        let (size_x_minus, size_x_plus, size_psi) = self.set_sizes();
        let (x, y) = grid.coords(next);
        let record = StepRecord {
            t: self.t,
            x,
            y,
            action,
            reward_true,
            reward_obs: obs.y_r,
            safety_true,
            safety_obs: obs.y_g,
            unsafe_: safety_true < self.h,
            mode: self.mode,
            size_x_minus,
            size_x_plus,
            size_psi,
            cum_reward: self.cum_reward,
            glm_fit_iters: fit_iters,
            step_wall_nanos: if self.config.timing { nanos_since(started) } else { 0 },
        };
        self.t += 1;
        self.last_timings = timings;
        Ok(record)
    }

    fn set_sizes(&self) -> (usize, usize, usize) {
        match (&self.policy, &self.learner) {
            (Policy::Oracle { space, .. }, _) => (space.len(), space.len(), 0),
            (Policy::Random, _) | (_, None) => (0, 0, 0),
            (Policy::UnsafeGlm, Some(l)) => (0, 0, l.table.psi().len()),
            (Policy::StepSafe { frozen: Some(f), .. }, Some(l)) => (f.len(), f.len(), l.table.psi().len()),
            (_, Some(l)) => (l.sets.x_minus.len(), l.sets.x_plus.len(), l.table.psi().len()),
        }
    }

    /// Near/far observations into both GLMs, refits, confidence and set
    /// updates.
    fn learn(&mut self, obs: &Observation, timings: &mut StepTimings) -> Result<usize> {
        let world = self.world;
        let l = self.learner.as_mut().expect("learning agent");
        let glm_start = Instant::now();
        l.glm_r.update(&obs.feature, obs.y_r)?;
        l.glm_g.update(&obs.feature, obs.y_g)?;
        let mut iters = refit(&mut l.glm_r, &mut l.fallback_fits)?;
        iters += refit(&mut l.glm_g, &mut l.fallback_fits)?;
        self.last_diagnostics = Some(StepDiagnostics {
            weighted_norm: l.glm_g.weighted_norm(&obs.feature),
            lambda_max_inv: 1.0 / (l.glm_g.lambda_min() + RIDGE),
        });
        timings.glm_bound_nanos = nanos_since(glm_start);

        let set_start = Instant::now();
        let window = world.far_observe(self.current, self.fov);
        if l.glm_g.is_fitted() && self.config.algorithm.uses_safe_sets() {
            l.table.update(&l.glm_g, window)?;
            let frozen = matches!(self.policy, Policy::StepSafe { frozen: Some(_), .. });
            if !frozen {
                let before = l.sets.x_minus.clone();
                l.sets.update(world.grid(), &l.table, self.h)?;
                if let Policy::StepSafe { stable_steps, .. } = &mut self.policy {
                    *stable_steps = if l.sets.x_minus == before { *stable_steps + 1 } else { 0 };
                }
            }
        } else {
            for (s, phi) in window {
                l.table.observe(s, phi)?;
            }
        }
        timings.set_ops_nanos = nanos_since(set_start);
        Ok(iters)
    }

    fn breach(&self, state: State) -> Error {
        Error::SafetyBreach { step: self.t, state }
    }

    fn spolf_choice(&mut self) -> Result<State> {
        let grid = self.world.grid();
        let cur = self.current;
        let (gamma, tol) = (self.config.gamma, self.config.plan_tol);
        let l = self.learner.as_ref().expect("spolf learns");
        let x_minus = &l.sets.x_minus;

        let mut s_star = None;
        let mut unconstrained = None;
        if l.glm_r.is_fitted() {
            let r = ofu_reward(&l.glm_r, &l.table)?;
            let values = solve_value_from(grid, &l.sets.x_plus, &r, gamma, tol, self.ofu_cache.as_ref())?;
            s_star = greedy_next(grid, cur, &values, x_minus, &r);
            unconstrained = eta(grid, cur, &values, &r);
            self.ofu_cache = Some(values);
        }
        let persist = self.mode == Mode::Etse && !self.config.etse_early_exit && self.etse_target.is_some_and(|t| t != cur);
        if let Some(choice) = s_star {
            if Some(choice) == unconstrained && !persist {
                self.mode = Mode::Ofu;
                self.etse_target = None;
                return Ok(choice);
            }
        }

        let gain = etse_gain(&l.glm_g, &l.table, x_minus);
        let values = solve_value_from(grid, x_minus, &gain, gamma, tol, self.etse_cache.as_ref())?;
        let target = best_in_set(&values, x_minus, &gain).expect("X⁻ is nonempty");
        let next = if target == cur {
            self.mode = Mode::Ofu;
            self.etse_target = None;
            s_star.or_else(|| greedy_next(grid, cur, &values, x_minus, &gain))
        } else {
            self.mode = Mode::Etse;
            self.etse_target = Some(target);
            greedy_next(grid, cur, &values, x_minus, &gain)
        };
        self.etse_cache = Some(values);
        match next {
            Some(s) if x_minus.contains(s) => Ok(s),
            Some(s) => Err(self.breach(s)),
            None => Err(self.breach(cur)),
        }
    }

    fn oracle_choice(&mut self) -> State {
        let Policy::Oracle { space, gain, values } = &self.policy else {
            unreachable!()
        };
        greedy_next(self.world.grid(), self.current, values, space, gain).unwrap_or(self.current)
    }

    fn random_choice(&mut self) -> State {
        let a = Action::ALL[self.policy_rng.gen_range(0..Action::ALL.len())];
        self.world.step(self.current, a)
    }

    fn unsafe_glm_choice(&mut self) -> Result<State> {
        let l = self.learner.as_ref().expect("unsafe_glm learns");
        if !l.glm_r.is_fitted() {
            return Ok(self.random_choice());
        }
        let grid = self.world.grid();
        let everything = StateSet::full(grid.n_states());
        let r = ofu_reward(&l.glm_r, &l.table)?;
        let values = solve_value_from(grid, &everything, &r, self.config.gamma, self.config.plan_tol, self.ofu_cache.as_ref())?;
        let next = greedy_next(grid, self.current, &values, &everything, &r).expect("stay is always allowed");
        self.ofu_cache = Some(values);
        Ok(next)
    }

    fn step_safe_choice(&mut self) -> Result<State> {
        let grid = self.world.grid();
        let cur = self.current;
        let (gamma, tol) = (self.config.gamma, self.config.plan_tol);
        let l = self.learner.as_ref().expect("step_safe_glm learns");
        let Policy::StepSafe { stable_steps, frozen } = &mut self.policy else {
            unreachable!()
        };
        if frozen.is_none()
            && (*stable_steps >= self.config.step_safe_stability_k || self.t >= self.config.step_safe_phase1_budget)
        {
            *frozen = Some(l.sets.x_minus.clone());
        }
        let next = match frozen {
            Some(region) if l.glm_r.is_fitted() => {
                self.mode = Mode::Ofu;
                let r = ofu_reward(&l.glm_r, &l.table)?;
                let values = solve_value_from(grid, region, &r, gamma, tol, self.ofu_cache.as_ref())?;
                let next = greedy_next(grid, cur, &values, region, &r);
                self.ofu_cache = Some(values);
                next
            }
            _ => {
                self.mode = Mode::Etse;
                let region = frozen.as_ref().unwrap_or(&l.sets.x_minus);
                let gain = etse_gain(&l.glm_g, &l.table, region);
                let values = solve_value_from(grid, region, &gain, gamma, tol, self.etse_cache.as_ref())?;
                self.etse_target = best_in_set(&values, region, &gain);
                let next = greedy_next(grid, cur, &values, region, &gain);
                self.etse_cache = Some(values);
                next
            }
        };
        next.ok_or_else(|| self.breach(cur))
    }
}

/// Everything a run produces.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub records: Vec<StepRecord>,
    pub timings: Vec<StepTimings>,
    pub diagnostics: Vec<Option<StepDiagnostics>>,
    pub violation_count: u64,
    pub fallback_fits: usize,
}

impl Trajectory {
    pub fn unsafe_count(&self) -> usize {
        self.records.iter().filter(|r| r.unsafe_).count()
    }

    pub fn cum_reward(&self) -> f64 {
        self.records.last().map_or(0.0, |r| r.cum_reward)
    }
}

/// Runs `config.steps` transitions from the world's start state.
pub fn run(world: &GridWorld, config: &RunConfig) -> Result<Trajectory> {
    let mut agent = Agent::new(world, config.clone())?;
    let mut out = Trajectory {
        records: Vec::with_capacity(config.steps),
        timings: Vec::with_capacity(config.steps),
        diagnostics: Vec::with_capacity(config.steps),
        violation_count: 0,
        fallback_fits: 0,
    };
    for _ in 0..config.steps {
        out.records.push(agent.step()?);
        out.timings.push(agent.last_timings());
        out.diagnostics.push(agent.last_diagnostics());
    }
    out.violation_count = agent.violation_count();
    out.fallback_fits = agent.fallback_fits();
    Ok(out)
}
