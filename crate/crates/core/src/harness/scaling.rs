//! Per-step wall time as the grid grows.

use std::path::Path;

use crate::agent::{run, Algorithm};
use crate::env::{generate, GridSpec};
use crate::error::{Error, Result};
use crate::harness::config::RunKnobs;
use crate::harness::trajectory::fmt_real;

pub const SCALING_FILE: &str = "scaling.csv";

/// Mean nanoseconds per step for one grid size.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalingRow {
    pub width: usize,
    pub height: usize,
    pub steps: usize,
    pub glm_bound_nanos: f64,
    pub set_ops_nanos: f64,
    pub planning_nanos: f64,
    pub step_nanos: f64,
}

impl ScalingRow {
    pub fn n_states(&self) -> usize {
        self.width * self.height
    }
}

/// Runs SPO-LF for `steps` steps on one world per size, sequentially.
pub fn scaling_study(template: &GridSpec, sizes: &[(usize, usize)], steps: usize, knobs: &RunKnobs) -> Result<Vec<ScalingRow>> {
    let mut rows = Vec::with_capacity(sizes.len());
    for &(width, height) in sizes {
        let mut spec = template.clone();
        spec.width = width;
        spec.height = height;
        spec.min_safe_region = ((width * height) / 4).max(1);
        let world = generate(&spec)?;
        let mut cfg = knobs.run_config(Algorithm::Spolf, steps, spec.fov_radius, spec.seed);
        cfg.timing = true;
        let traj = run(&world, &cfg)?;
        let n = traj.timings.len().max(1) as f64;
        let mean = |f: &dyn Fn(usize) -> u64| (0..traj.timings.len()).map(|i| f(i) as f64).sum::<f64>() / n;
        rows.push(ScalingRow {
            width,
            height,
            steps,
            glm_bound_nanos: mean(&|i| traj.timings[i].glm_bound_nanos),
            set_ops_nanos: mean(&|i| traj.timings[i].set_ops_nanos),
            planning_nanos: mean(&|i| traj.timings[i].planning_nanos),
            step_nanos: mean(&|i| traj.records[i].step_wall_nanos),
        });
    }
    Ok(rows)
}

const HEADER: [&str; 8] = [
    "width",
    "height",
    "n_states",
    "steps",
    "glm_bound_nanos",
    "set_ops_nanos",
    "planning_nanos",
    "step_nanos",
];

pub fn write_scaling(path: &Path, rows: &[ScalingRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(HEADER)?;
    for r in rows {
        w.write_record([
            r.width.to_string(),
            r.height.to_string(),
            r.n_states().to_string(),
            r.steps.to_string(),
            fmt_real(r.glm_bound_nanos),
            fmt_real(r.set_ops_nanos),
            fmt_real(r.planning_nanos),
            fmt_real(r.step_nanos),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_scaling(path: &Path) -> Result<Vec<ScalingRow>> {
    let mut rdr = csv::Reader::from_path(path)?;
    if rdr.headers()?.iter().ne(HEADER) {
        return Err(Error::Parse(format!("unexpected header in {}", path.display())));
    }
    let mut out = Vec::new();
    for row in rdr.records() {
        let row = row?;
        let get = |i: usize| -> Result<f64> {
            row.get(i)
                .and_then(|v| v.parse().ok())
                .ok_or_else(|| Error::Parse(format!("bad value in column {}", HEADER[i])))
        };
        out.push(ScalingRow {
            width: get(0)? as usize,
            height: get(1)? as usize,
            steps: get(3)? as usize,
            glm_bound_nanos: get(4)?,
            set_ops_nanos: get(5)?,
            planning_nanos: get(6)?,
            step_nanos: get(7)?,
        });
    }
    Ok(out)
}
