//! Trajectory CSV: one header row, one row per step.

use std::io::{Read, Write};
use std::path::Path;

use crate::agent::StepRecord;
use crate::error::{Error, Result};

pub const HEADER: [&str; 16] = [
    "t",
    "x",
    "y",
    "action",
    "reward_true",
    "reward_obs",
    "safety_true",
    "safety_obs",
    "unsafe",
    "mode",
    "size_x_minus",
    "size_x_plus",
    "size_psi",
    "cum_reward",
    "glm_fit_iters",
    "step_wall_nanos",
];

/// Scientific notation with 17 significant digits.
pub fn fmt_real(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn write_records<W: Write>(out: W, records: &[StepRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(HEADER)?;
    for r in records {
        w.write_record([
            r.t.to_string(),
            r.x.to_string(),
            r.y.to_string(),
            r.action.name().to_string(),
            fmt_real(r.reward_true),
            fmt_real(r.reward_obs),
            fmt_real(r.safety_true),
            fmt_real(r.safety_obs),
            u8::from(r.unsafe_).to_string(),
            r.mode.name().to_string(),
            r.size_x_minus.to_string(),
            r.size_x_plus.to_string(),
            r.size_psi.to_string(),
            fmt_real(r.cum_reward),
            r.glm_fit_iters.to_string(),
            r.step_wall_nanos.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_csv(path: impl AsRef<Path>, records: &[StepRecord]) -> Result<()> {
    let file = std::fs::File::create(path)?;
    write_records(std::io::BufWriter::new(file), records)
}

fn field<T: std::str::FromStr>(row: &csv::StringRecord, i: usize) -> Result<T> {
    let raw = row.get(i).ok_or_else(|| Error::Parse(format!("missing column {}", HEADER[i])))?;
    raw.parse()
        .map_err(|_| Error::Parse(format!("bad value '{raw}' in column {}", HEADER[i])))
}

pub fn read_records<R: Read>(input: R) -> Result<Vec<StepRecord>> {
    let mut rdr = csv::Reader::from_reader(input);
    let header = rdr.headers()?.clone();
    if header.iter().ne(HEADER) {
        return Err(Error::Parse("unexpected trajectory header".into()));
    }
    let mut out = Vec::new();
    for row in rdr.records() {
        let row = row?;
        let unsafe_: u8 = field(&row, 8)?;
        out.push(StepRecord {
            t: field(&row, 0)?,
            x: field(&row, 1)?,
            y: field(&row, 2)?,
            action: field(&row, 3)?,
            reward_true: field(&row, 4)?,
            reward_obs: field(&row, 5)?,
            safety_true: field(&row, 6)?,
            safety_obs: field(&row, 7)?,
            unsafe_: unsafe_ != 0,
            mode: field(&row, 9)?,
            size_x_minus: field(&row, 10)?,
            size_x_plus: field(&row, 11)?,
            size_psi: field(&row, 12)?,
            cum_reward: field(&row, 13)?,
            glm_fit_iters: field(&row, 14)?,
            step_wall_nanos: field(&row, 15)?,
        });
    }
    Ok(out)
}

pub fn read_csv(path: impl AsRef<Path>) -> Result<Vec<StepRecord>> {
    read_records(std::io::BufReader::new(std::fs::File::open(path)?))
}
