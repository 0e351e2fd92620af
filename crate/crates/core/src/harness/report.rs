//! Markdown summary and SVG charts rendered from the aggregate files.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::agent::Algorithm;
use crate::error::{Error, Result};
use crate::harness::aggregate::{read_aggregate, read_totals, AggregateRow, TotalsRow, AGGREGATE_FILE, TOTALS_FILE, WINDOW};
use crate::harness::scaling::{read_scaling, ScalingRow, SCALING_FILE};

pub const SUMMARY_FILE: &str = "summary.md";

fn pm(mean: f64, se: f64) -> String {
    format!("{mean:.3} ± {se:.3}")
}

pub fn summary_markdown(totals: &[TotalsRow], scaling: &[ScalingRow]) -> String {
    let mut md = String::from("# Benchmark summary\n\n");
    md.push_str(
        "| algorithm | fov | runs | unsafe actions | cumulative reward | steps to 90% oracle | reached 90% |\n\
         |---|---|---|---|---|---|---|\n",
    );
    for t in totals {
        let steps = match (t.steps_to_90_mean, t.steps_to_90_se) {
            (Some(m), Some(s)) => pm(m, s),
            _ => "n/a".into(),
        };
        let _ = writeln!(
            md,
            "| {} | {} | {} | {} | {} | {} | {}/{} |",
            t.algorithm,
            t.fov,
            t.n,
            pm(t.unsafe_mean, t.unsafe_se),
            pm(t.cum_reward_mean, t.cum_reward_se),
            steps,
            t.reached,
            t.n
        );
    }
    if !scaling.is_empty() {
        md.push_str("\n## Step time by grid size\n\n");
        md.push_str("| grid | states | GLM bounds (µs) | set ops (µs) | planning (µs) | step (ms) |\n|---|---|---|---|---|---|\n");
        for r in scaling {
            let _ = writeln!(
                md,
                "| {}×{} | {} | {:.1} | {:.1} | {:.1} | {:.2} |",
                r.width,
                r.height,
                r.n_states(),
                r.glm_bound_nanos / 1e3,
                r.set_ops_nanos / 1e3,
                r.planning_nanos / 1e3,
                r.step_nanos / 1e6
            );
        }
    }
    md
}

/// Writes `summary.md` (and charts when `svg` is set) from the files in
/// `dir`. Fails if the aggregates are missing.
pub fn write_summary(dir: &Path, svg: bool) -> Result<PathBuf> {
    let totals_path = dir.join(TOTALS_FILE);
    let aggregate_path = dir.join(AGGREGATE_FILE);
    for p in [&totals_path, &aggregate_path] {
        if !p.is_file() {
            return Err(Error::Io(std::io::Error::new(
                std::io::ErrorKind::NotFound,
                format!("{} not found", p.display()),
            )));
        }
    }
    let totals = read_totals(&totals_path)?;
    let scaling_path = dir.join(SCALING_FILE);
    let scaling = if scaling_path.is_file() {
        read_scaling(&scaling_path)?
    } else {
        Vec::new()
    };
    let out = dir.join(SUMMARY_FILE);
    std::fs::write(&out, summary_markdown(&totals, &scaling))?;

    if svg {
        let rows = read_aggregate(&aggregate_path)?;
        for (fov, chart) in reward_charts(&rows) {
            std::fs::write(dir.join(format!("reward_fov{fov}.svg")), chart)?;
        }
        if !scaling.is_empty() {
            std::fs::write(dir.join("scaling.svg"), scaling_chart(&scaling))?;
        }
    }
    Ok(out)
}

/// One chart per fov: trailing-window reward against step, one line per
/// algorithm with a ±1 SE band.
pub fn reward_charts(rows: &[AggregateRow]) -> Vec<(usize, String)> {
    let mut by_fov: BTreeMap<usize, BTreeMap<Algorithm, Vec<&AggregateRow>>> = BTreeMap::new();
    for r in rows {
        by_fov.entry(r.fov).or_default().entry(r.algorithm).or_default().push(r);
    }
    by_fov
        .into_iter()
        .map(|(fov, algos)| {
            let series: Vec<Series> = algos
                .into_iter()
                .map(|(algo, pts)| Series {
                    label: algo.name().to_string(),
                    points: pts.iter().map(|r| (r.step as f64, r.window_reward_mean)).collect(),
                    band: pts.iter().map(|r| r.window_reward_se).collect(),
                })
                .collect();
            let title = format!("Trailing-{WINDOW} reward, fov {fov}");
            (fov, line_chart(&title, "step", "reward", &series))
        })
        .collect()
}

pub fn scaling_chart(rows: &[ScalingRow]) -> String {
    let xs: Vec<f64> = rows.iter().map(|r| r.n_states() as f64).collect();
    let mk = |label: &str, f: &dyn Fn(&ScalingRow) -> f64| Series {
        label: label.to_string(),
        points: xs.iter().zip(rows).map(|(&x, r)| (x, f(r) / 1e3)).collect(),
        band: vec![],
    };
    let series = [
        mk("GLM bounds", &|r| r.glm_bound_nanos),
        mk("set ops", &|r| r.set_ops_nanos),
        mk("planning", &|r| r.planning_nanos),
    ];
    line_chart("Mean step time by grid size", "states", "µs per step", &series)
}

pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
    /// Half-width of the shaded band at each point; empty for none.
    pub band: Vec<f64>,
}

const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"];

/// Minimal SVG line chart.
pub fn line_chart(title: &str, x_label: &str, y_label: &str, series: &[Series]) -> String {
    const W: f64 = 720.0;
    const H: f64 = 440.0;
    const L: f64 = 70.0;
    const R: f64 = 150.0;
    const T: f64 = 40.0;
    const B: f64 = 50.0;
    let finite = |v: f64| v.is_finite();
    let mut xmin = f64::INFINITY;
    let mut xmax = f64::NEG_INFINITY;
    let mut ymin = f64::INFINITY;
    let mut ymax = f64::NEG_INFINITY;
    for s in series {
        for (i, &(x, y)) in s.points.iter().enumerate() {
            if !(finite(x) && finite(y)) {
                continue;
            }
            let half = s.band.get(i).copied().filter(|b| b.is_finite()).unwrap_or(0.0);
            xmin = xmin.min(x);
            xmax = xmax.max(x);
            ymin = ymin.min(y - half);
            ymax = ymax.max(y + half);
        }
    }
    if !xmin.is_finite() {
        (xmin, xmax, ymin, ymax) = (0.0, 1.0, 0.0, 1.0);
    }
    if xmax <= xmin {
        xmax = xmin + 1.0;
    }
    if ymax <= ymin {
        ymax = ymin + 1.0;
    }
    let px = |x: f64| L + (x - xmin) / (xmax - xmin) * (W - L - R);
    let py = |y: f64| H - B - (y - ymin) / (ymax - ymin) * (H - T - B);

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(svg, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(svg, r#"<text x="{}" y="22" text-anchor="middle" font-size="15">{}</text>"#, W / 2.0, escape(title));
    let (x0, y0, x1, y1) = (L, H - B, W - R, T);
    let _ = writeln!(svg, r#"<path d="M{x0},{y1} L{x0},{y0} L{x1},{y0}" fill="none" stroke="black"/>"#);
    for k in 0..=5 {
        let f = k as f64 / 5.0;
        let xv = xmin + f * (xmax - xmin);
        let yv = ymin + f * (ymax - ymin);
        let _ = writeln!(
            svg,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
            px(xv),
            y0 + 18.0,
            tick(xv)
        );
        let _ = writeln!(
            svg,
            r##"<text x="{:.1}" y="{:.1}" text-anchor="end">{}</text><line x1="{x0}" x2="{x1}" y1="{:.1}" y2="{:.1}" stroke="#ddd"/>"##,
            x0 - 6.0,
            py(yv) + 4.0,
            tick(yv),
            py(yv),
            py(yv)
        );
    }
    let _ = writeln!(svg, r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#, (x0 + x1) / 2.0, H - 12.0, escape(x_label));
    let _ = writeln!(
        svg,
        r#"<text x="18" y="{:.1}" text-anchor="middle" transform="rotate(-90 18 {:.1})">{}</text>"#,
        (y0 + y1) / 2.0,
        (y0 + y1) / 2.0,
        escape(y_label)
    );

    for (i, s) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let pts: Vec<(usize, f64, f64)> = s
            .points
            .iter()
            .enumerate()
            .filter(|(_, (x, y))| finite(*x) && finite(*y))
            .map(|(j, &(x, y))| (j, x, y))
            .collect();
        if !s.band.is_empty() && pts.len() > 1 {
            let upper: Vec<String> = pts
                .iter()
                .map(|&(j, x, y)| format!("{:.1},{:.1}", px(x), py(y + s.band[j])))
                .collect();
            let lower: Vec<String> = pts
                .iter()
                .rev()
                .map(|&(j, x, y)| format!("{:.1},{:.1}", px(x), py(y - s.band[j])))
                .collect();
            let _ = writeln!(
                svg,
                r#"<polygon points="{} {}" fill="{color}" fill-opacity="0.15" stroke="none"/>"#,
                upper.join(" "),
                lower.join(" ")
            );
        }
        let line: Vec<String> = pts.iter().map(|&(_, x, y)| format!("{:.1},{:.1}", px(x), py(y))).collect();
        let _ = writeln!(
            svg,
            r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="1.8"/>"#,
            line.join(" ")
        );
        let ly = T + 10.0 + 20.0 * i as f64;
        let _ = writeln!(
            svg,
            r#"<line x1="{:.1}" x2="{:.1}" y1="{ly:.1}" y2="{ly:.1}" stroke="{color}" stroke-width="3"/><text x="{:.1}" y="{:.1}">{}</text>"#,
            W - R + 15.0,
            W - R + 40.0,
            W - R + 46.0,
            ly + 4.0,
            escape(&s.label)
        );
    }
    svg.push_str("</svg>\n");
    svg
}

fn tick(v: f64) -> String {
    if v.abs() >= 1e4 || (v != 0.0 && v.abs() < 1e-2) {
        format!("{v:.1e}")
    } else if v.fract() == 0.0 {
        format!("{v:.0}")
    } else {
        format!("{v:.2}")
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn totals(algo: Algorithm) -> TotalsRow {
        TotalsRow {
            algorithm: algo,
            fov: 3,
            n: 4,
            unsafe_mean: 0.0,
            unsafe_se: 0.0,
            cum_reward_mean: 100.0,
            cum_reward_se: 2.0,
            steps_to_90_mean: None,
            steps_to_90_se: None,
            reached: 0,
        }
    }

    #[test]
    fn one_table_row_per_group() {
        let md = summary_markdown(&[totals(Algorithm::Spolf), totals(Algorithm::Oracle)], &[]);
        let rows = md.lines().filter(|l| l.starts_with("| spolf") || l.starts_with("| oracle")).count();
        assert_eq!(rows, 2);
        assert!(!md.contains("grid size"));
    }

    #[test]
    fn chart_is_wellformed() {
        let s = Series {
            label: "a<b".into(),
            points: vec![(0.0, 1.0), (1.0, 2.0), (2.0, f64::NAN)],
            band: vec![0.1, 0.1, 0.1],
        };
        let svg = line_chart("t", "x", "y", &[s]);
        assert!(svg.starts_with("<svg") && svg.trim_end().ends_with("</svg>"));
        assert!(svg.contains("a&lt;b"));
        assert!(!svg.contains("NaN"));
    }

    #[test]
    fn missing_inputs_error() {
        let dir = tempfile::tempdir().unwrap();
        assert!(write_summary(dir.path(), true).is_err());
    }
}
