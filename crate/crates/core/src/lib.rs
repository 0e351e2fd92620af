//! Safe exploration on grid worlds whose reward and safety are generalized
//! linear functions of per-cell features.
//!
//! The crate is organised bottom-up:
//!
//! * [`env`] generates worlds and serves observations;
//! * [`glm`] fits the reward and safety models and produces confidence
//!   intervals;
//! * [`safesets`] turns those intervals into pessimistic and optimistic safe
//!   sets;
//! * [`planner`] solves the discounted planning problems;
//! * [`agent`] runs the control loop and the baselines;
//! * [`harness`] runs seeded benchmarks and writes CSV/Markdown/SVG output.

pub mod agent;
pub mod env;
pub mod error;
pub mod glm;
pub mod harness;
pub mod linalg;
pub mod planner;
pub mod safesets;

pub use agent::{run, Agent, Algorithm, Mode, RunConfig, StepRecord, Trajectory};
pub use env::{generate, Action, Grid, GridSpec, GridWorld, State};
pub use error::{Error, Result};
pub use glm::{GlmEstimator, Interval, LinkFunction, LinkKind};
pub use safesets::StateSet;
