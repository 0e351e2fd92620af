//! Field-of-view sweep through the benchmark harness, then the summary
//! table it writes.

use spolf::harness::{run_bench, BenchConfig, RunKnobs};
use spolf::{Algorithm, GridSpec};

fn main() -> spolf::Result<()> {
    let out = std::env::temp_dir().join("spolf_fov_sweep");
    let cfg = BenchConfig {
        grid_spec: GridSpec::new(25, 25, 5, 42),
        algorithms: vec![Algorithm::Spolf, Algorithm::Oracle],
        steps_per_run: 400,
        n_seeds: 10,
        fov_sweep: vec![0, 1, 3, 5],
        output_dir: out.clone(),
        scaling_sizes: vec![],
        scaling_steps: 0,
        run: RunKnobs::default(),
        threads: None,
    };
    let outcome = run_bench(&cfg)?;
    println!("{} runs, all ok: {}", outcome.runs.len(), outcome.all_ok());
    let summary = spolf::harness::report::write_summary(&out, false)?;
    println!("{}", std::fs::read_to_string(summary)?);
    Ok(())
}
