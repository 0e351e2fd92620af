use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::agent::{Algorithm, RunConfig};
use crate::env::GridSpec;
use crate::error::{Error, Result};
use crate::planner::{DEFAULT_GAMMA, DEFAULT_TOL};

/// Agent settings shared by every run of a benchmark.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunKnobs {
    pub gamma: f64,
    pub delta_r: f64,
    pub delta_g: f64,
    pub prior_safety_samples: usize,
    pub prior_reward_samples: usize,
    pub step_safe_phase1_budget: usize,
    pub step_safe_stability_k: usize,
    pub etse_early_exit: bool,
    pub plan_tol: f64,
}

impl Default for RunKnobs {
    fn default() -> Self {
        let base = RunConfig::new(Algorithm::Spolf, 0, 0);
        Self {
            gamma: DEFAULT_GAMMA,
            delta_r: base.delta_r,
            delta_g: base.delta_g,
            prior_safety_samples: base.prior_safety_samples,
            prior_reward_samples: base.prior_reward_samples,
            step_safe_phase1_budget: base.step_safe_phase1_budget,
            step_safe_stability_k: base.step_safe_stability_k,
            etse_early_exit: base.etse_early_exit,
            plan_tol: DEFAULT_TOL,
        }
    }
}

impl RunKnobs {
    pub fn run_config(&self, algorithm: Algorithm, steps: usize, fov: usize, seed: u64) -> RunConfig {
        RunConfig {
            algorithm,
            steps,
            fov_radius: Some(fov),
            gamma: self.gamma,
            delta_r: self.delta_r,
            delta_g: self.delta_g,
            h: None,
            prior_safety_samples: self.prior_safety_samples,
            prior_reward_samples: self.prior_reward_samples,
            seed,
            step_safe_phase1_budget: self.step_safe_phase1_budget,
            step_safe_stability_k: self.step_safe_stability_k,
            etse_early_exit: self.etse_early_exit,
            plan_tol: self.plan_tol,
            timing: false,
        }
    }
}

fn default_scaling_steps() -> usize {
    100
}

/// Benchmark description, read from JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchConfig {
    /// World template; its seed is the base for per-seed sub-seeds.
    pub grid_spec: GridSpec,
    pub algorithms: Vec<Algorithm>,
    pub steps_per_run: usize,
    pub n_seeds: usize,
    /// Sensor radii to sweep; empty means the spec's own radius.
    #[serde(default)]
    pub fov_sweep: Vec<usize>,
    pub output_dir: PathBuf,
    /// `(width, height)` pairs for the timing study.
    #[serde(default)]
    pub scaling_sizes: Vec<(usize, usize)>,
    #[serde(default = "default_scaling_steps")]
    pub scaling_steps: usize,
    #[serde(default)]
    pub run: RunKnobs,
    /// Worker count; falls back to `SPOLF_THREADS`, then to the core count.
    #[serde(default)]
    pub threads: Option<usize>,
}

impl BenchConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let cfg: Self = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.to_string()));
        if self.n_seeds == 0 {
            return bad("n_seeds must be at least 1");
        }
        if self.algorithms.is_empty() {
            return bad("no algorithms listed");
        }
        if self.scaling_sizes.iter().any(|&(w, h)| w == 0 || h == 0) {
            return bad("scaling sizes must be positive");
        }
        self.grid_spec.validate()?;
        self.run.run_config(Algorithm::Spolf, 0, 0, 0).validate()
    }

    pub fn fovs(&self) -> Vec<usize> {
        if self.fov_sweep.is_empty() {
            vec![self.grid_spec.fov_radius]
        } else {
            self.fov_sweep.clone()
        }
    }

    /// Seed of the world shared by every run with this seed index.
    pub fn world_seed(&self, index: usize) -> u64 {
        derive_seed(self.grid_spec.seed, index as u64, 0x5745_4c44)
    }

    /// Seed of the agent's random streams for this seed index.
    pub fn run_seed(&self, index: usize) -> u64 {
        derive_seed(self.grid_spec.seed, index as u64, 0x5255_4e53)
    }
}

/// SplitMix64 finalizer over `(base, index, salt)`.
pub fn derive_seed(base: u64, index: u64, salt: u64) -> u64 {
    let mut z = base ^ salt.rotate_left(32) ^ index.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Explicit count, else `SPOLF_THREADS`, else rayon's default.
pub fn resolve_threads(explicit: Option<usize>) -> Option<usize> {
    explicit.filter(|&n| n > 0).or_else(|| {
        std::env::var("SPOLF_THREADS")
            .ok()
            .and_then(|v| v.trim().parse().ok())
            .filter(|&n: &usize| n > 0)
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_json_uses_defaults() {
        let json = r#"{
            "grid_spec": {"width": 5, "height": 5, "feature_dim": 3,
                "link_kind_reward": "identity", "link_kind_safety": "sigmoid",
                "noise_sigma_r": 0.1, "noise_sigma_g": 0.1, "safety_threshold": 0.1,
                "fov_radius": 2, "min_safe_region": 3, "seed": 7},
            "algorithms": ["spolf", "oracle"],
            "steps_per_run": 10,
            "n_seeds": 2,
            "output_dir": "out"
        }"#;
        let cfg: BenchConfig = serde_json::from_str(json).unwrap();
        cfg.validate().unwrap();
        assert_eq!(cfg.fovs(), vec![2]);
        assert_eq!(cfg.run, RunKnobs::default());
        assert_eq!(cfg.grid_spec.unsafe_fraction, 0.15);
    }

    #[test]
    fn seeds_differ_per_index_and_purpose() {
        let cfg = BenchConfig {
            grid_spec: GridSpec::new(5, 5, 3, 1),
            algorithms: vec![Algorithm::Spolf],
            steps_per_run: 1,
            n_seeds: 1,
            fov_sweep: vec![],
            output_dir: "x".into(),
            scaling_sizes: vec![],
            scaling_steps: 1,
            run: RunKnobs::default(),
            threads: None,
        };
        assert_ne!(cfg.world_seed(0), cfg.world_seed(1));
        assert_ne!(cfg.world_seed(0), cfg.run_seed(0));
        assert_eq!(cfg.world_seed(3), cfg.world_seed(3));
    }

    #[test]
    fn zero_seeds_rejected() {
        let json = r#"{"grid_spec": {"width": 5, "height": 5, "feature_dim": 3,
            "link_kind_reward": "identity", "link_kind_safety": "sigmoid",
            "noise_sigma_r": 0.1, "noise_sigma_g": 0.1, "safety_threshold": 0.1,
            "fov_radius": 2, "min_safe_region": 3, "seed": 7},
            "algorithms": ["spolf"], "steps_per_run": 10, "n_seeds": 0, "output_dir": "o"}"#;
        let cfg: BenchConfig = serde_json::from_str(json).unwrap();
        assert!(cfg.validate().is_err());
    }
}
