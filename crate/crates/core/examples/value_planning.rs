//! Plan on a restricted state set and follow the greedy policy.

use spolf::planner::{bellman_residual, greedy_next, solve_value};
use spolf::{Grid, StateSet};

fn main() -> spolf::Result<()> {
    let (w, h) = (8, 6);
    let g = Grid::new(w, h);
    // a wall down column 4 with a gap in the bottom row
    let allowed = StateSet::from_states(w * h, (0..w * h).map(spolf::State::from).filter(|&s| {
        let (x, y) = g.coords(s);
        x != 4 || y == h - 1
    }));
    let mut gain = vec![0.0; w * h];
    gain[g.state(7, 0).index()] = 1.0;
    gain[g.state(1, 1).index()] = 0.3;

    let table = solve_value(&g, &allowed, &gain, 0.95, 1e-10)?;
    println!("{} iterations, residual {:.2e}", table.iterations(), bellman_residual(&g, &table, &gain));
    for y in 0..h {
        let row: Vec<String> = (0..w)
            .map(|x| table.get(g.state(x, y)).map_or("   --".into(), |v| format!("{v:5.1}")))
            .collect();
        println!("{}", row.join(" "));
    }

    let mut s = g.state(0, 0);
    let mut path = vec![g.coords(s)];
    for _ in 0..20 {
        match greedy_next(&g, s, &table, &allowed, &gain) {
            Some(n) if n != s => s = n,
            _ => break,
        }
        path.push(g.coords(s));
    }
    println!("greedy path: {path:?}");
    Ok(())
}
