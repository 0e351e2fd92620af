//! Compare SPO-LF with the oracle and the unconstrained baselines on a
//! handful of paired worlds.

use spolf::{generate, run, Algorithm, GridSpec, RunConfig};

fn main() -> spolf::Result<()> {
    let algos = [Algorithm::Spolf, Algorithm::Oracle, Algorithm::UnsafeGlm, Algorithm::StepSafeGlm, Algorithm::Random];
    let seeds = 8;
    println!("{:<14} {:>12} {:>10}", "algorithm", "reward/step", "unsafe");
    for algo in algos {
        let (mut reward, mut bad) = (0.0, 0);
        for seed in 0..seeds {
            let world = generate(&GridSpec::new(25, 25, 5, 100 + seed))?;
            let mut cfg = RunConfig::new(algo, 400, seed);
            cfg.fov_radius = Some(3);
            let traj = run(&world, &cfg)?;
            reward += traj.records.iter().map(|r| r.reward_true).sum::<f64>() / traj.records.len() as f64;
            bad += traj.unsafe_count();
        }
        println!("{:<14} {:>12.4} {:>10.1}", algo.name(), reward / seeds as f64, bad as f64 / seeds as f64);
    }
    Ok(())
}
