//! Trajectory CSV: header `t,X,S,V,S_in`, one row per state, `t` in physical
//! time units. The last row has no feed value, so its `S_in` field is empty.

use std::io::{BufRead, Write};

use super::{State, Trajectory};
use crate::error::{Error, Result};
use crate::fmt::f64_text;

pub const TRAJECTORY_CSV_HEADER: &str = "t,X,S,V,S_in";

pub fn write_trajectory_csv<W: Write>(mut w: W, traj: &Trajectory, dt: f64) -> Result<()> {
    writeln!(w, "{TRAJECTORY_CSV_HEADER}")?;
    for (i, st) in traj.states().iter().enumerate() {
        let feed = traj.s_in().get(i).map(|&v| f64_text(v)).unwrap_or_default();
        writeln!(
            w,
            "{},{},{},{},{}",
            f64_text(dt * i as f64),
            f64_text(st.x),
            f64_text(st.s),
            f64_text(st.v),
            feed
        )?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_trajectory_csv<R: BufRead>(r: R) -> Result<Trajectory> {
    let mut lines = r.lines();
    match lines.next() {
        Some(Ok(h)) if h.trim() == TRAJECTORY_CSV_HEADER => {}
        _ => return Err(Error::Format("missing trajectory CSV header".into())),
    }
    let mut states = Vec::new();
    let mut s_in = Vec::new();
    for line in lines {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 5 {
            return Err(Error::Format(format!("bad trajectory row `{line}`")));
        }
        let num = |s: &str| {
            s.trim()
                .parse::<f64>()
                .map_err(|_| Error::Format(format!("bad number `{s}`")))
        };
        states.push(State::new(
            num(fields[1])?,
            num(fields[2])?,
            num(fields[3])?,
        ));
        if !fields[4].trim().is_empty() {
            s_in.push(num(fields[4])?);
        }
    }
    Trajectory::new(states, s_in)
}
