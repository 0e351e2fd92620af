//! Generate a grid world, print its safety map and save it as JSON.
//!
//! `cargo run --example generate_world -- [seed] [out.json]`

use spolf::{generate, GridSpec};

fn main() -> spolf::Result<()> {
    let mut args = std::env::args().skip(1);
    let seed = args.next().and_then(|s| s.parse().ok()).unwrap_or(7);
    let spec = GridSpec::new(25, 25, 5, seed);
    let world = generate(&spec)?;
    let g = world.grid();

    // '#' unsafe, 'o' prior safe region, 'S' start
    for y in 0..spec.height {
        let row: String = (0..spec.width)
            .map(|x| {
                let s = g.state(x, y);
                if s == world.start() {
                    'S'
                } else if world.s0().contains(&s) {
                    'o'
                } else if world.is_unsafe(s) {
                    '#'
                } else {
                    '.'
                }
            })
            .collect();
        println!("{row}");
    }
    let n_unsafe = world.states().filter(|&s| world.is_unsafe(s)).count();
    println!("\n{} states, {n_unsafe} unsafe, |S0| = {}", world.n_states(), world.s0().len());
    println!("θ_g* = {:.3?}", world.theta_g_star());

    if let Some(out) = args.next() {
        world.save(&out)?;
        println!("saved to {out}");
    }
    Ok(())
}
