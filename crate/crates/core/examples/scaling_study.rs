//! Per-phase step time as the grid grows.

use spolf::harness::scaling::scaling_study;
use spolf::harness::RunKnobs;
use spolf::GridSpec;

fn main() -> spolf::Result<()> {
    let template = GridSpec::new(25, 25, 5, 9);
    let sizes = [(25, 25), (50, 50), (100, 100), (150, 150)];
    let rows = scaling_study(&template, &sizes, 100, &RunKnobs::default())?;
    println!("{:>9} {:>10} {:>10} {:>10} {:>10}", "grid", "glm µs", "sets µs", "plan µs", "step µs");
    for r in rows {
        println!(
            "{:>9} {:>10.1} {:>10.1} {:>10.1} {:>10.1}",
            format!("{}x{}", r.width, r.height),
            r.glm_bound_nanos / 1e3,
            r.set_ops_nanos / 1e3,
            r.planning_nanos / 1e3,
            r.step_nanos / 1e3
        );
    }
    Ok(())
}
