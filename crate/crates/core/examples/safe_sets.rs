//! Reachability and returnability closures on a small hand-drawn map,
//! followed by the true ε-safe space of a generated world.

use spolf::safesets::{true_safe_space, y_reach_closure, y_return_closure};
use spolf::{generate, Grid, GridSpec, StateSet};

const MAP: [&str; 5] = [
    "..#..", //
    ".##..",
    "...#.",
    "#.#..",
    "...#.",
];

fn show(g: &Grid, set: &StateSet, w: usize, h: usize) {
    for y in 0..h {
        let row: String = (0..w).map(|x| if set.contains(g.state(x, y)) { 'x' } else { '.' }).collect();
        println!("  {row}");
    }
}

fn main() -> spolf::Result<()> {
    let (w, h) = (5, 5);
    let g = Grid::new(w, h);
    let free = StateSet::from_states(
        w * h,
        (0..h).flat_map(|y| (0..w).map(move |x| (x, y))).filter(|&(x, y)| MAP[y].as_bytes()[x] == b'.').map(|(x, y)| g.state(x, y)),
    );
    let seed = StateSet::from_states(w * h, [g.state(0, 0)]);

    let reach = y_reach_closure(&g, &seed, &free);
    println!("reachable from the corner through free cells:");
    show(&g, &reach, w, h);
    let ret = y_return_closure(&g, &reach, &seed);
    println!("reachable cells that can also get back:");
    show(&g, &ret, w, h);

    let world = generate(&GridSpec { min_safe_region: 20, ..GridSpec::new(12, 12, 4, 4) })?;
    let s0 = StateSet::from_states(world.n_states(), world.s0().iter().copied());
    for (eps, k) in [(0.0, usize::MAX), (0.05, 3), (0.05, 0)] {
        let safe = true_safe_space(&world, &s0, eps, k);
        let k_txt = if k == usize::MAX { "full".to_string() } else { k.to_string() };
        println!("ε = {eps}, view {k_txt}: {} of {} states", safe.len(), world.n_states());
    }
    Ok(())
}
