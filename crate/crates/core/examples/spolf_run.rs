//! One SPO-LF episode, stepping the agent by hand to show how the
//! pessimistic and optimistic safe sets evolve.

use spolf::{generate, Agent, Algorithm, GridSpec, Mode, RunConfig};

fn main() -> spolf::Result<()> {
    let world = generate(&GridSpec::new(25, 25, 5, 11))?;
    let mut cfg = RunConfig::new(Algorithm::Spolf, 400, 0);
    cfg.fov_radius = Some(3);
    let mut agent = Agent::new(&world, cfg)?;

    let (mut etse, mut unsafe_steps, mut total) = (0, 0, 0.0);
    println!("{:>4} {:>8} {:>5} {:>5} {:>5} {:>8}", "t", "pos", "X-", "X+", "Ψ", "reward");
    for t in 0..400 {
        let rec = agent.step()?;
        etse += usize::from(rec.mode == Mode::Etse);
        unsafe_steps += usize::from(rec.unsafe_);
        total += rec.reward_true;
        if t % 40 == 0 {
            println!(
                "{t:>4} {:>8} {:>5} {:>5} {:>5} {:>8.3}",
                format!("({},{})", rec.x, rec.y),
                rec.size_x_minus,
                rec.size_x_plus,
                rec.size_psi,
                rec.reward_true
            );
        }
    }
    println!("cumulative reward {total:.1}, {etse} exploration steps, {unsafe_steps} unsafe");
    let sets = agent.safe_sets().expect("learning agent");
    println!("final |X-| = {}, |X+| = {}", sets.x_minus.len(), sets.x_plus.len());
    Ok(())
}
