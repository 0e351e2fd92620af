//! Cross-seed statistics, computed only from the trajectory files on disk.

use std::collections::BTreeMap;
use std::path::Path;

use crate::agent::{Algorithm, StepRecord};
use crate::error::{Error, Result};
use crate::harness::trajectory::{self, fmt_real};

/// Length of the trailing reward window.
pub const WINDOW: usize = 50;
/// Fraction of the oracle's windowed reward that counts as converged.
pub const ORACLE_FRACTION: f64 = 0.9;

pub const RUNS_DIR: &str = "runs";
pub const AGGREGATE_FILE: &str = "aggregate.csv";
pub const TOTALS_FILE: &str = "totals.csv";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct RunKey {
    pub algorithm: Algorithm,
    pub fov: usize,
    pub seed: usize,
}

impl RunKey {
    pub fn file_name(&self) -> String {
        format!("{}__fov{}__seed{:03}.csv", self.algorithm, self.fov, self.seed)
    }

    pub fn parse_file_name(name: &str) -> Option<Self> {
        let stem = name.strip_suffix(".csv")?;
        let mut parts = stem.split("__");
        let algorithm = parts.next()?.parse().ok()?;
        let fov = parts.next()?.strip_prefix("fov")?.parse().ok()?;
        let seed = parts.next()?.strip_prefix("seed")?.parse().ok()?;
        parts.next().is_none().then_some(Self { algorithm, fov, seed })
    }
}

/// Per `(algorithm, fov, step)` cross-seed statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct AggregateRow {
    pub algorithm: Algorithm,
    pub fov: usize,
    pub step: usize,
    pub n: usize,
    pub reward_mean: f64,
    pub reward_se: f64,
    pub cum_reward_mean: f64,
    pub cum_reward_se: f64,
    pub window_reward_mean: f64,
    pub window_reward_se: f64,
}

/// Per `(algorithm, fov)` run-level statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct TotalsRow {
    pub algorithm: Algorithm,
    pub fov: usize,
    pub n: usize,
    pub unsafe_mean: f64,
    pub unsafe_se: f64,
    pub cum_reward_mean: f64,
    pub cum_reward_se: f64,
    /// Absent when no paired oracle runs exist.
    pub steps_to_90_mean: Option<f64>,
    pub steps_to_90_se: Option<f64>,
    /// Runs whose windowed reward ends at or above the oracle fraction.
    pub reached: usize,
}

/// Sample mean and standard error (`s/√n`, zero for a single value).
pub fn mean_se(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}

/// Mean of `values[t+1-w ..= t]` (shorter at the start) for every `t`.
pub fn trailing_mean(values: &[f64], window: usize) -> Vec<f64> {
    assert!(window > 0);
    let mut out = Vec::with_capacity(values.len());
    let mut acc = 0.0;
    for t in 0..values.len() {
        acc += values[t];
        if t >= window {
            acc -= values[t - window];
        }
        out.push(acc / (t + 1).min(window) as f64);
    }
    out
}

/// Number of steps after which `agent[t] ≥ fraction·reference[t]` holds for
/// every remaining `t`; `None` if it fails at the last step.
pub fn steps_to_fraction(agent: &[f64], reference: &[f64], fraction: f64) -> Option<usize> {
    let len = agent.len().min(reference.len());
    let mut first = None;
    for t in (0..len).rev() {
        if agent[t] >= fraction * reference[t] {
            first = Some(t);
        } else {
            break;
        }
    }
    first.map(|t| t + 1)
}

fn windowed_rewards(records: &[StepRecord]) -> Vec<f64> {
    let rewards: Vec<f64> = records.iter().map(|r| r.reward_true).collect();
    trailing_mean(&rewards, WINDOW)
}

/// Loads every trajectory under `dir/runs`, keyed and ordered by run.
pub fn load_runs(dir: &Path) -> Result<BTreeMap<RunKey, Vec<StepRecord>>> {
    let runs_dir = dir.join(RUNS_DIR);
    let mut out = BTreeMap::new();
    for entry in std::fs::read_dir(&runs_dir)? {
        let entry = entry?;
        let name = entry.file_name();
        let Some(key) = name.to_str().and_then(RunKey::parse_file_name) else {
            continue;
        };
        out.insert(key, trajectory::read_csv(entry.path())?);
    }
    if out.is_empty() {
        return Err(Error::Parse(format!("no trajectories found in {}", runs_dir.display())));
    }
    Ok(out)
}

pub fn aggregate(runs: &BTreeMap<RunKey, Vec<StepRecord>>) -> (Vec<AggregateRow>, Vec<TotalsRow>) {
    let mut groups: BTreeMap<(Algorithm, usize), Vec<(usize, &Vec<StepRecord>)>> = BTreeMap::new();
    for (key, recs) in runs {
        groups.entry((key.algorithm, key.fov)).or_default().push((key.seed, recs));
    }
    let oracle_windows: BTreeMap<(usize, usize), Vec<f64>> = runs
        .iter()
        .filter(|(k, _)| k.algorithm == Algorithm::Oracle)
        .map(|(k, recs)| ((k.fov, k.seed), windowed_rewards(recs)))
        .collect();

    let mut per_step = Vec::new();
    let mut totals = Vec::new();
    for (&(algorithm, fov), members) in &groups {
        let windows: Vec<Vec<f64>> = members.iter().map(|(_, r)| windowed_rewards(r)).collect();
        let max_len = members.iter().map(|(_, r)| r.len()).max().unwrap_or(0);
        for step in 0..max_len {
            let mut reward = Vec::new();
            let mut cum = Vec::new();
            let mut win = Vec::new();
            for ((_, recs), w) in members.iter().zip(&windows) {
                if let Some(r) = recs.get(step) {
                    reward.push(r.reward_true);
                    cum.push(r.cum_reward);
                    win.push(w[step]);
                }
            }
            let (reward_mean, reward_se) = mean_se(&reward);
            let (cum_reward_mean, cum_reward_se) = mean_se(&cum);
            let (window_reward_mean, window_reward_se) = mean_se(&win);
            per_step.push(AggregateRow {
                algorithm,
                fov,
                step,
                n: reward.len(),
                reward_mean,
                reward_se,
                cum_reward_mean,
                cum_reward_se,
                window_reward_mean,
                window_reward_se,
            });
        }

        let unsafe_counts: Vec<f64> = members
            .iter()
            .map(|(_, r)| r.iter().filter(|x| x.unsafe_).count() as f64)
            .collect();
        let cum_totals: Vec<f64> = members.iter().map(|(_, r)| r.last().map_or(0.0, |x| x.cum_reward)).collect();
        let mut steps_to = Vec::new();
        let mut reached = 0;
        for ((seed, recs), w) in members.iter().zip(&windows) {
            if let Some(reference) = oracle_windows.get(&(fov, *seed)) {
                match steps_to_fraction(w, reference, ORACLE_FRACTION) {
                    Some(s) => {
                        reached += 1;
                        steps_to.push(s as f64);
                    }
                    None => steps_to.push(recs.len() as f64),
                }
            }
        }
        let (unsafe_mean, unsafe_se) = mean_se(&unsafe_counts);
        let (cum_reward_mean, cum_reward_se) = mean_se(&cum_totals);
        let (s_mean, s_se) = if steps_to.is_empty() {
            (None, None)
        } else {
            let (m, s) = mean_se(&steps_to);
            (Some(m), Some(s))
        };
        totals.push(TotalsRow {
            algorithm,
            fov,
            n: members.len(),
            unsafe_mean,
            unsafe_se,
            cum_reward_mean,
            cum_reward_se,
            steps_to_90_mean: s_mean,
            steps_to_90_se: s_se,
            reached,
        });
    }
    (per_step, totals)
}

const AGGREGATE_HEADER: [&str; 10] = [
    "algorithm",
    "fov",
    "step",
    "n",
    "reward_mean",
    "reward_se",
    "cum_reward_mean",
    "cum_reward_se",
    "window_reward_mean",
    "window_reward_se",
];

const TOTALS_HEADER: [&str; 10] = [
    "algorithm",
    "fov",
    "n",
    "unsafe_mean",
    "unsafe_se",
    "cum_reward_mean",
    "cum_reward_se",
    "steps_to_90_mean",
    "steps_to_90_se",
    "reached",
];

fn opt_real(v: Option<f64>) -> String {
    v.map(fmt_real).unwrap_or_default()
}

pub fn write_aggregate(path: &Path, rows: &[AggregateRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(AGGREGATE_HEADER)?;
    for r in rows {
        w.write_record([
            r.algorithm.name().to_string(),
            r.fov.to_string(),
            r.step.to_string(),
            r.n.to_string(),
            fmt_real(r.reward_mean),
            fmt_real(r.reward_se),
            fmt_real(r.cum_reward_mean),
            fmt_real(r.cum_reward_se),
            fmt_real(r.window_reward_mean),
            fmt_real(r.window_reward_se),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_totals(path: &Path, rows: &[TotalsRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(TOTALS_HEADER)?;
    for r in rows {
        w.write_record([
            r.algorithm.name().to_string(),
            r.fov.to_string(),
            r.n.to_string(),
            fmt_real(r.unsafe_mean),
            fmt_real(r.unsafe_se),
            fmt_real(r.cum_reward_mean),
            fmt_real(r.cum_reward_se),
            opt_real(r.steps_to_90_mean),
            opt_real(r.steps_to_90_se),
            r.reached.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

fn parse<T: std::str::FromStr>(row: &csv::StringRecord, i: usize, header: &[&str]) -> Result<T> {
    let raw = row.get(i).unwrap_or("");
    raw.parse()
        .map_err(|_| Error::Parse(format!("bad value '{raw}' in column {}", header[i])))
}

fn parse_opt(row: &csv::StringRecord, i: usize, header: &[&str]) -> Result<Option<f64>> {
    if row.get(i).unwrap_or("").is_empty() {
        Ok(None)
    } else {
        parse(row, i, header).map(Some)
    }
}

fn checked_reader(path: &Path, header: &[&str]) -> Result<csv::Reader<std::fs::File>> {
    let mut rdr = csv::Reader::from_path(path)?;
    if rdr.headers()?.iter().ne(header.iter().copied()) {
        return Err(Error::Parse(format!("unexpected header in {}", path.display())));
    }
    Ok(rdr)
}

pub fn read_aggregate(path: &Path) -> Result<Vec<AggregateRow>> {
    let h = &AGGREGATE_HEADER;
    let mut out = Vec::new();
    for row in checked_reader(path, h)?.records() {
        let row = row?;
        out.push(AggregateRow {
            algorithm: parse(&row, 0, h)?,
            fov: parse(&row, 1, h)?,
            step: parse(&row, 2, h)?,
            n: parse(&row, 3, h)?,
            reward_mean: parse(&row, 4, h)?,
            reward_se: parse(&row, 5, h)?,
            cum_reward_mean: parse(&row, 6, h)?,
            cum_reward_se: parse(&row, 7, h)?,
            window_reward_mean: parse(&row, 8, h)?,
            window_reward_se: parse(&row, 9, h)?,
        });
    }
    Ok(out)
}

pub fn read_totals(path: &Path) -> Result<Vec<TotalsRow>> {
    let h = &TOTALS_HEADER;
    let mut out = Vec::new();
    for row in checked_reader(path, h)?.records() {
        let row = row?;
        out.push(TotalsRow {
            algorithm: parse(&row, 0, h)?,
            fov: parse(&row, 1, h)?,
            n: parse(&row, 2, h)?,
            unsafe_mean: parse(&row, 3, h)?,
            unsafe_se: parse(&row, 4, h)?,
            cum_reward_mean: parse(&row, 5, h)?,
            cum_reward_se: parse(&row, 6, h)?,
            steps_to_90_mean: parse_opt(&row, 7, h)?,
            steps_to_90_se: parse_opt(&row, 8, h)?,
            reached: parse(&row, 9, h)?,
        });
    }
    Ok(out)
}

/// Recomputes and writes `aggregate.csv` and `totals.csv` from `dir/runs`.
pub fn aggregate_dir(dir: &Path) -> Result<(Vec<AggregateRow>, Vec<TotalsRow>)> {
    let runs = load_runs(dir)?;
    let (rows, totals) = aggregate(&runs);
    write_aggregate(&dir.join(AGGREGATE_FILE), &rows)?;
    write_totals(&dir.join(TOTALS_FILE), &totals)?;
    Ok((rows, totals))
}
