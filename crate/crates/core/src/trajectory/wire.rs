//! Line-oriented text format for setpoints and trajectories.
//!
//! ```text
//! SP t=0.50 q=0.1,0.2 [qd=0,0]
//! TRAJ t=1.0 n=2 [interp=linear|cubic]
//! PT t=0.0 q=0.1,0.2 [qd=...]
//! PT t=1.5 q=0.3,0.2
//! END
//! ```
//!
//! `t` on `SP` and `TRAJ` is when the command is issued (seconds since the
//! stream started); on `PT` it is the time from trajectory start. Blank
//! lines and `#` comments are skipped.

use std::fmt::Write as _;
use std::path::Path;

use thiserror::Error;

use super::{Interpolation, SourceCommand, Trajectory, TrajectoryPoint};
use crate::scalar::Real;

#[derive(Debug, Error)]
pub enum WireError {
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("{0}")]
    Io(#[from] std::io::Error),
}

/// A command together with the stream time at which it is issued.
#[derive(Debug, Clone, PartialEq)]
pub struct TimedCommand<T: Real> {
    pub t: T,
    pub command: SourceCommand<T>,
}

struct Pending<T: Real> {
    t: T,
    expected: usize,
    interp: Interpolation,
    points: Vec<TrajectoryPoint<T>>,
}

/// Incremental decoder, fed one line at a time.
pub struct WireDecoder<T: Real> {
    line: usize,
    pending: Option<Pending<T>>,
}

impl<T: Real> Default for WireDecoder<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Real> WireDecoder<T> {
    pub fn new() -> Self {
        Self { line: 0, pending: None }
    }

    /// True while a `TRAJ` block is open.
    pub fn in_block(&self) -> bool {
        self.pending.is_some()
    }

    /// Consumes one line. Returns a command once one is complete.
    ///
    /// After an error the decoder discards any open block and is ready for
    /// the next record.
    pub fn push_line(&mut self, raw: &str) -> Result<Option<TimedCommand<T>>, WireError> {
        self.line += 1;
        let r = self.decode(raw);
        if r.is_err() {
            self.pending = None;
        }
        r
    }

    fn err(&self, message: impl Into<String>) -> WireError {
        WireError::Syntax { line: self.line, message: message.into() }
    }

    fn decode(&mut self, raw: &str) -> Result<Option<TimedCommand<T>>, WireError> {
        let text = raw.split('#').next().unwrap_or("").trim();
        let mut words = text.split_whitespace();
        let Some(tag) = words.next() else {
            return Ok(None);
        };
        let mut t = None;
        let mut q = None;
        let mut qd = None;
        let mut n = None;
        let mut interp = Interpolation::Cubic;
        for w in words {
            let (k, v) = w.split_once('=').ok_or_else(|| self.err(format!("expected key=value, got `{w}`")))?;
            match k {
                "t" => t = Some(self.scalar(v)?),
                "q" => q = Some(self.list(v)?),
                "qd" => qd = Some(self.list(v)?),
                "n" => n = Some(v.parse::<usize>().map_err(|_| self.err(format!("bad count `{v}`")))?),
                "interp" => {
                    interp = match v {
                        "cubic" => Interpolation::Cubic,
                        "linear" => Interpolation::Linear,
                        _ => return Err(self.err(format!("unknown interpolation `{v}`"))),
                    }
                }
                _ => return Err(self.err(format!("unknown key `{k}`"))),
            }
        }

        match tag {
            "SP" => {
                if self.pending.is_some() {
                    return Err(self.err("SP inside a TRAJ block"));
                }
                let t = t.ok_or_else(|| self.err("SP needs t="))?;
                let q = q.ok_or_else(|| self.err("SP needs q="))?;
                let p = TrajectoryPoint::new(T::zero(), q, qd);
                Trajectory::new(vec![p.clone()], Interpolation::Cubic).map_err(|e| self.err(e.to_string()))?;
                Ok(Some(TimedCommand { t, command: SourceCommand::Setpoint(p) }))
            }
            "TRAJ" => {
                if self.pending.is_some() {
                    return Err(self.err("nested TRAJ"));
                }
                let expected = n.ok_or_else(|| self.err("TRAJ needs n="))?;
                if expected == 0 {
                    return Err(self.err("TRAJ with no points"));
                }
                let t = t.unwrap_or_else(T::zero);
                self.pending = Some(Pending { t, expected, interp, points: Vec::with_capacity(expected) });
                Ok(None)
            }
            "PT" => {
                let t = t.ok_or_else(|| self.err("PT needs t="))?;
                let q = q.ok_or_else(|| self.err("PT needs q="))?;
                let line = self.line;
                let p = self.pending.as_mut().ok_or(WireError::Syntax { line, message: "PT outside a TRAJ block".into() })?;
                if p.points.len() == p.expected {
                    return Err(self.err("more PT lines than TRAJ n="));
                }
                p.points.push(TrajectoryPoint::new(t, q, qd));
                Ok(None)
            }
            "END" => {
                let p = self.pending.take().ok_or_else(|| self.err("END without TRAJ"))?;
                if p.points.len() != p.expected {
                    return Err(self.err(format!("TRAJ n={} but {} points", p.expected, p.points.len())));
                }
                let traj = Trajectory::new(p.points, p.interp).map_err(|e| self.err(e.to_string()))?;
                Ok(Some(TimedCommand { t: p.t, command: SourceCommand::Trajectory(traj) }))
            }
            _ => Err(self.err(format!("unknown record `{tag}`"))),
        }
    }

    fn scalar(&self, v: &str) -> Result<T, WireError> {
        let x: f64 = v.parse().map_err(|_| self.err(format!("bad number `{v}`")))?;
        T::from_f64(x).ok_or_else(|| self.err(format!("bad number `{v}`")))
    }

    fn list(&self, v: &str) -> Result<Vec<T>, WireError> {
        v.split(',').map(|x| self.scalar(x)).collect()
    }

    /// Errors if the input ended inside a block.
    pub fn finish(&mut self) -> Result<(), WireError> {
        if self.pending.take().is_some() {
            return Err(self.err("unterminated TRAJ block"));
        }
        Ok(())
    }
}

/// Parses a whole stream. Commands must be in non-decreasing time order.
pub fn parse_stream<T: Real>(src: &str) -> Result<Vec<TimedCommand<T>>, WireError> {
    let mut dec = WireDecoder::new();
    let mut out: Vec<TimedCommand<T>> = Vec::new();
    for line in src.lines() {
        if let Some(c) = dec.push_line(line)? {
            if out.last().is_some_and(|p| c.t < p.t) {
                return Err(dec.err("commands out of time order"));
            }
            out.push(c);
        }
    }
    dec.finish()?;
    Ok(out)
}

pub fn read_stream_file<T: Real>(path: impl AsRef<Path>) -> Result<Vec<TimedCommand<T>>, WireError> {
    parse_stream(&std::fs::read_to_string(path)?)
}

/// Reads a file holding exactly one `TRAJ` block.
pub fn read_trajectory_file<T: Real>(path: impl AsRef<Path>) -> Result<Trajectory<T>, WireError> {
    let cmds = read_stream_file::<T>(path)?;
    match <[_; 1]>::try_from(cmds) {
        Ok([TimedCommand { command: SourceCommand::Trajectory(t), .. }]) => Ok(t),
        _ => Err(WireError::Syntax { line: 0, message: "expected exactly one TRAJ block".into() }),
    }
}

fn join<T: Real>(out: &mut String, v: &[T]) {
    for (i, x) in v.iter().enumerate() {
        if i > 0 {
            out.push(',');
        }
        let _ = write!(out, "{}", x.as_f64());
    }
}

fn point_fields<T: Real>(out: &mut String, p: &TrajectoryPoint<T>) {
    out.push_str(" q=");
    join(out, &p.q_star);
    if let Some(qd) = &p.qd_star {
        out.push_str(" qd=");
        join(out, qd);
    }
}

pub fn format_setpoint<T: Real>(t: T, p: &TrajectoryPoint<T>) -> String {
    let mut s = format!("SP t={}", t.as_f64());
    point_fields(&mut s, p);
    s.push('\n');
    s
}

pub fn format_trajectory<T: Real>(t: T, traj: &Trajectory<T>) -> String {
    let interp = match traj.interpolation() {
        Interpolation::Cubic => "cubic",
        Interpolation::Linear => "linear",
    };
    let mut s = format!("TRAJ t={} n={} interp={}\n", t.as_f64(), traj.points().len(), interp);
    for p in traj.points() {
        let _ = write!(s, "PT t={}", p.t_from_start.as_f64());
        point_fields(&mut s, p);
        s.push('\n');
    }
    s.push_str("END\n");
    s
}
