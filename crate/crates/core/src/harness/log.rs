//! Per-tick log rows and the CSV form of a run.

use std::io::Write;
use std::path::Path;

use super::HarnessError;

/// Which error the RMSE is computed on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Frame {
    /// End-effector position, base frame, centimetres.
    #[default]
    TaskXyz,
    /// Joint positions, radians.
    Joint,
}

/// Column-major view of a run: preallocated, filled one row per tick.
///
/// Rows are `t, q, q*, qn, qd, tau_m, tau_q, tau_x, tau_f_hat, x, x*, clamp_flags, alpha`
/// where `x` is `px py pz qw qx qy qz`.
#[derive(Debug, Clone, PartialEq)]
pub struct RunLog {
    n: usize,
    /// Floating-point columns per row (everything except `clamp_flags`).
    width: usize,
    values: Vec<f64>,
    flags: Vec<u64>,
}

const POSE: [&str; 7] = ["px", "py", "pz", "qw", "qx", "qy", "qz"];
const GROUPS: [&str; 8] = ["q", "q_star", "qn", "qd", "tau_m", "tau_q", "tau_x", "tau_f_hat"];

impl RunLog {
    pub fn with_capacity(n: usize, rows: usize) -> Self {
        let width = 1 + GROUPS.len() * n + 2 * POSE.len() + 1;
        Self { n, width, values: Vec::with_capacity(rows * width), flags: Vec::with_capacity(rows) }
    }

    pub fn n_joints(&self) -> usize {
        self.n
    }

    pub fn len(&self) -> usize {
        self.flags.len()
    }

    pub fn is_empty(&self) -> bool {
        self.flags.is_empty()
    }

    /// Column names in file order.
    pub fn header(n: usize) -> Vec<String> {
        let mut h = vec!["t".to_string()];
        for g in GROUPS {
            h.extend((1..=n).map(|i| format!("{g}_{i}")));
        }
        h.extend(POSE.iter().map(|p| p.to_string()));
        h.extend(POSE.iter().map(|p| format!("{p}_star")));
        h.push("clamp_flags".into());
        h.push("alpha".into());
        h
    }

    /// Appends one row. `groups` are the eight per-joint blocks in order.
    /// Does not allocate while within the reserved capacity.
    pub fn push(&mut self, t: f64, groups: [&[f64]; 8], x: [f64; 7], x_star: [f64; 7], clamp_flags: u64, alpha: f64) {
        self.values.push(t);
        for g in groups {
            debug_assert_eq!(g.len(), self.n);
            self.values.extend_from_slice(g);
        }
        self.values.extend_from_slice(&x);
        self.values.extend_from_slice(&x_star);
        self.values.push(alpha);
        self.flags.push(clamp_flags);
    }

    fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.width..(i + 1) * self.width]
    }

    pub fn t(&self, i: usize) -> f64 {
        self.row(i)[0]
    }

    /// Block `group` (0 = q, 1 = q*, …, 7 = tau_f_hat) of row `i`.
    pub fn joints(&self, i: usize, group: usize) -> &[f64] {
        let s = 1 + group * self.n;
        &self.row(i)[s..s + self.n]
    }

    pub fn q(&self, i: usize) -> &[f64] {
        self.joints(i, 0)
    }

    pub fn q_star(&self, i: usize) -> &[f64] {
        self.joints(i, 1)
    }

    pub fn tau_m(&self, i: usize) -> &[f64] {
        self.joints(i, 4)
    }

    pub fn tau_q(&self, i: usize) -> &[f64] {
        self.joints(i, 5)
    }

    pub fn tau_x(&self, i: usize) -> &[f64] {
        self.joints(i, 6)
    }

    pub fn tau_f_hat(&self, i: usize) -> &[f64] {
        self.joints(i, 7)
    }

    /// Actual end-effector pose `px py pz qw qx qy qz`.
    pub fn x(&self, i: usize) -> &[f64] {
        let s = 1 + GROUPS.len() * self.n;
        &self.row(i)[s..s + 7]
    }

    pub fn x_star(&self, i: usize) -> &[f64] {
        let s = 8 + GROUPS.len() * self.n;
        &self.row(i)[s..s + 7]
    }

    pub fn clamp_flags(&self, i: usize) -> u64 {
        self.flags[i]
    }

    pub fn alpha(&self, i: usize) -> f64 {
        self.row(i)[self.width - 1]
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), HarnessError> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(Self::header(self.n))?;
        let mut buf = String::new();
        let mut field = |w: &mut csv::Writer<W>, v: &dyn std::fmt::Display| -> Result<(), csv::Error> {
            use std::fmt::Write as _;
            buf.clear();
            let _ = write!(buf, "{v}");
            w.write_field(buf.as_bytes())
        };
        for i in 0..self.len() {
            let row = self.row(i);
            for v in &row[..self.width - 1] {
                field(&mut w, v)?;
            }
            field(&mut w, &self.flags[i])?;
            field(&mut w, &row[self.width - 1])?;
            w.write_record(None::<&[u8]>)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: std::io::Read>(input: R) -> Result<Self, HarnessError> {
        let mut r = csv::Reader::from_reader(input);
        let header: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
        let cols = header.len();
        let fixed = 1 + 2 * POSE.len() + 2;
        let n = cols.saturating_sub(fixed) / GROUPS.len();
        if cols < fixed || header != Self::header(n) {
            return Err(HarnessError::Log("unrecognised log header".into()));
        }
        let mut log = Self::with_capacity(n, 0);
        for (k, rec) in r.records().enumerate() {
            let rec = rec?;
            let bad = |c: usize| HarnessError::Log(format!("row {}: bad value in column `{}`", k + 1, header[c]));
            let flag_col = cols - 2;
            for (c, s) in rec.iter().enumerate() {
                if c == flag_col {
                    continue;
                }
                log.values.push(s.parse().map_err(|_| bad(c))?);
            }
            log.flags.push(rec.get(flag_col).and_then(|s| s.parse().ok()).ok_or_else(|| bad(flag_col))?);
        }
        Ok(log)
    }
}

pub fn write_log(log: &RunLog, path: impl AsRef<Path>) -> Result<(), HarnessError> {
    let file = std::fs::File::create(path)?;
    log.write_csv(std::io::BufWriter::new(file))
}

pub fn read_log(path: impl AsRef<Path>) -> Result<RunLog, HarnessError> {
    RunLog::read_csv(std::fs::File::open(path)?)
}

/// Per-axis RMSE of actual minus reference over rows with `t0 ≤ t ≤ t1`.
///
/// Task frame: x, y, z in cm. Joint frame: one value per joint in rad.
pub fn compute_rmse(log: &RunLog, window: (f64, f64), frame: Frame) -> Result<Vec<f64>, HarnessError> {
    let (t0, t1) = window;
    if !(t0 <= t1) {
        return Err(HarnessError::Window(format!("empty window {t0}:{t1}")));
    }
    if log.is_empty() {
        return Err(HarnessError::Window("log has no rows".into()));
    }
    let slack = 1e-9;
    let (first, last) = (log.t(0), log.t(log.len() - 1));
    if t0 < first - slack || t1 > last + slack {
        return Err(HarnessError::Window(format!("window {t0}:{t1} outside the log's {first}:{last}")));
    }
    let dims = match frame {
        Frame::TaskXyz => 3,
        Frame::Joint => log.n_joints(),
    };
    let mut sum = vec![0.0; dims];
    let mut count = 0usize;
    for i in (0..log.len()).filter(|&i| log.t(i) >= t0 - slack && log.t(i) <= t1 + slack) {
        let (a, r) = match frame {
            Frame::TaskXyz => (&log.x(i)[..3], &log.x_star(i)[..3]),
            Frame::Joint => (log.q(i), log.q_star(i)),
        };
        for k in 0..dims {
            sum[k] += (a[k] - r[k]).powi(2);
        }
        count += 1;
    }
    if count == 0 {
        return Err(HarnessError::Window(format!("no samples in {t0}:{t1}")));
    }
    let scale = if frame == Frame::TaskXyz { 100.0 } else { 1.0 };
    Ok(sum.into_iter().map(|s| scale * (s / count as f64).sqrt()).collect())
}
