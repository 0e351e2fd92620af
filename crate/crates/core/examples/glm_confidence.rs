//! Fit the reward (identity link) and safety (sigmoid link) models from
//! noisy observations and watch the confidence interval at one state.
//!
//! The sigmoid radius stays wide: β scales with 1/μ′(‖θ̃‖+1), which is
//! tiny once the safety parameter is large.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use spolf::{generate, GlmEstimator, GridSpec, LinkKind, State};

fn main() -> spolf::Result<()> {
    let world = generate(&GridSpec::new(25, 25, 5, 3))?;
    let sigma = world.spec().noise_sigma_g;
    let probe = world.start();
    for (kind, truth) in [(LinkKind::Identity, world.true_reward(probe)), (LinkKind::Sigmoid, world.true_safety(probe))] {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut est = GlmEstimator::new(kind, world.dim(), sigma, 0.05);
        println!("\n{kind:?} link, true value at probe {truth:.4}");
        println!("{:>6} {:>11} {:>11} {:>11} {:>7}", "n", "lower", "upper", "width", "covers");
        for n in 1..=4096usize {
            let s = State::from(rng.gen_range(0..world.n_states()));
            let obs = world.near_observe(s, &mut rng);
            let y = if kind == LinkKind::Identity { obs.y_r } else { obs.y_g };
            est.update(world.feature(s), y)?;
            if n.is_power_of_two() && n >= 16 {
                if est.fit_mle().is_err() {
                    est.fit_penalized(1.0)?;
                }
                let iv = est.interval_inside(world.feature(probe))?;
                println!("{n:>6} {:>11.4} {:>11.4} {:>11.4} {:>7}", iv.lo, iv.hi, iv.width(), iv.contains(truth));
            }
        }
        println!("β = {:.3}, λmin(W) = {:.1}", est.beta(), est.lambda_min());
    }
    Ok(())
}
