//! Scenario files: one `key values...` record per line, `#` comments,
//! paths relative to the file.
//!
//! ```text
//! model ../models/planar2.model
//! duration 5
//! dt 0.001
//! start 0.2 -0.4
//! reference trajectory move.traj
//! kp 60            # one value broadcasts to every joint
//! kpx 800 800 800 40 40 40
//! alpha 0.5
//! observer on
//! push 2.0 4.0 30 0 0
//! event 6.0 alpha 0.8
//! log hold.csv
//! ```

use std::path::{Path, PathBuf};

use nalgebra::{Vector3, Vector6};

use super::HarnessError;
use crate::controller::GainSet;
use crate::kv::records;
use crate::model::{load_model, ChainModel};
use crate::scalar::{lit, Real};
use crate::simulator::{ExternalDisturbance, LinkForce, SensorNoise, DEFAULT_FRICTION_EPS};
use crate::trajectory::{read_stream_file, TimedCommand};

/// Where the reference comes from.
#[derive(Debug, Clone, PartialEq)]
pub enum ReferenceProgram<T: Real> {
    /// Hold the start configuration.
    Hold,
    /// Replay timed commands from a wire-format file.
    Replay { path: PathBuf, commands: Vec<TimedCommand<T>> },
    /// Commands arrive over TCP (`serve` only).
    Socket,
}

/// A single gain record, applied on top of the current set.
#[derive(Debug, Clone, PartialEq)]
pub struct GainChange<T: Real> {
    pub key: String,
    pub values: Vec<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReconfigEvent<T: Real> {
    pub t: T,
    pub change: GainChange<T>,
}

#[derive(Debug, Clone)]
pub struct Scenario<T: Real> {
    pub path: PathBuf,
    pub model: ChainModel<T>,
    pub gains: GainSet<T>,
    pub observer: bool,
    pub friction: bool,
    pub friction_eps: T,
    pub dt: T,
    pub substeps: usize,
    pub duration: T,
    pub start: Vec<T>,
    /// Half-width of the seeded uniform perturbation of the start configuration, rad.
    pub start_offset: T,
    pub reference: ReferenceProgram<T>,
    pub rate_limit: bool,
    pub passivity: bool,
    pub disturbances: Vec<ExternalDisturbance<T>>,
    pub events: Vec<ReconfigEvent<T>>,
    pub noise: SensorNoise<T>,
    pub log: Option<PathBuf>,
    pub window: Option<(T, T)>,
    pub seed: u64,
}

/// Numeric gain keys, accepted both as top-level records and in events.
const GAIN_KEYS: &[&str] =
    &["kp", "kd", "kpx", "kdx", "tau_d_max", "wrench_d_max", "tau_max", "kl", "klp", "kli", "t_int", "alpha"];

fn cfg_err(path: &Path, line: usize, message: impl Into<String>) -> HarnessError {
    HarnessError::Config { path: path.to_path_buf(), line, message: message.into() }
}

fn num<T: Real>(s: &str) -> Option<T> {
    s.parse::<f64>().ok().filter(|v| v.is_finite()).and_then(T::from_f64)
}

fn flag(s: &str) -> Option<bool> {
    match s {
        "on" | "true" | "yes" => Some(true),
        "off" | "false" | "no" => Some(false),
        _ => None,
    }
}

/// Applies one gain record. Values are checked for count, not for sign;
/// [`GainSet::validate`] decides whether the result is admissible.
pub fn apply_gain_change<T: Real>(gains: &mut GainSet<T>, key: &str, values: &[T]) -> Result<(), String> {
    let n = gains.n_joints();
    let joint = |dst: &mut Vec<T>| -> Result<(), String> {
        match values.len() {
            1 => dst.fill(values[0]),
            k if k == n => dst.copy_from_slice(values),
            k => return Err(format!("{key}: expected 1 or {n} values, got {k}")),
        }
        Ok(())
    };
    let task = |dst: &mut Vector6<T>| -> Result<(), String> {
        match values.len() {
            1 => dst.fill(values[0]),
            6 => dst.copy_from_slice(values),
            k => return Err(format!("{key}: expected 1 or 6 values, got {k}")),
        }
        Ok(())
    };
    let single = || -> Result<T, String> {
        match values {
            [v] => Ok(*v),
            _ => Err(format!("{key}: expected one value")),
        }
    };
    match key {
        "kp" => joint(&mut gains.kp),
        "kd" => joint(&mut gains.kd),
        "tau_d_max" => joint(&mut gains.tau_d_max),
        "tau_max" => joint(&mut gains.tau_max),
        "kl" => joint(&mut gains.kl),
        "klp" => joint(&mut gains.klp),
        "kli" => joint(&mut gains.kli),
        "kpx" => task(&mut gains.kpx),
        "kdx" => task(&mut gains.kdx),
        "wrench_d_max" => task(&mut gains.wrench_d_max),
        "t_int" => {
            gains.t_int = single()?;
            Ok(())
        }
        "alpha" => gains.apply_blend(single()?).map_err(|e| e.to_string()),
        _ => Err(format!("unknown gain `{key}`")),
    }
}

impl<T: Real> Scenario<T> {
    pub fn load(path: impl AsRef<Path>) -> Result<Self, HarnessError> {
        let path = path.as_ref();
        let src = std::fs::read_to_string(path).map_err(|e| cfg_err(path, 0, format!("cannot read: {e}")))?;
        Self::parse(&src, path)
    }

    /// Parses scenario text; `path` locates relative file references.
    pub fn parse(src: &str, path: &Path) -> Result<Self, HarnessError> {
        let base = path.parent().unwrap_or(Path::new("."));
        let recs: Vec<_> = records(src).collect();

        let model_rec = recs.iter().filter(|r| r.1 == "model").collect::<Vec<_>>();
        let (line, _, vals) = match model_rec.as_slice() {
            [one] => *one,
            [] => return Err(cfg_err(path, 0, "missing `model`")),
            [_, second, ..] => return Err(cfg_err(path, second.0, "duplicate `model`")),
        };
        let [model_file] = vals.as_slice() else {
            return Err(cfg_err(path, *line, "model: expected one path"));
        };
        let model_path = base.join(model_file);
        let model: ChainModel<T> =
            load_model(&model_path).map_err(|e| cfg_err(path, *line, format!("{}: {e}", model_path.display())))?;
        let n = model.n_joints();

        let mut sc = Scenario {
            path: path.to_path_buf(),
            gains: GainSet::for_model(&model),
            observer: false,
            friction: true,
            friction_eps: lit(DEFAULT_FRICTION_EPS),
            dt: lit(1e-3),
            substeps: 1,
            duration: T::one(),
            start: vec![T::zero(); n],
            start_offset: T::zero(),
            reference: ReferenceProgram::Hold,
            rate_limit: true,
            passivity: false,
            disturbances: Vec::new(),
            events: Vec::new(),
            noise: SensorNoise::default(),
            log: None,
            window: None,
            seed: 1,
            model,
        };

        for (line, key, vals) in recs {
            let err = |m: String| cfg_err(path, line, m);
            let nums = |vals: &[&str]| -> Result<Vec<T>, HarnessError> {
                vals.iter().map(|v| num(v).ok_or_else(|| err(format!("{key}: bad number `{v}`")))).collect()
            };
            let one_flag = |vals: &[&str]| -> Result<bool, HarnessError> {
                match vals {
                    [v] => flag(v).ok_or_else(|| err(format!("{key}: expected on/off, got `{v}`"))),
                    _ => Err(err(format!("{key}: expected on/off"))),
                }
            };
            let one_num = |vals: &[&str]| -> Result<T, HarnessError> {
                match nums(vals)?.as_slice() {
                    [v] => Ok(*v),
                    _ => Err(err(format!("{key}: expected one value"))),
                }
            };
            match key {
                "model" => {}
                "duration" => sc.duration = one_num(&vals)?,
                "dt" => sc.dt = one_num(&vals)?,
                "substeps" => {
                    sc.substeps = match vals.as_slice() {
                        [v] => v.parse().ok().filter(|s| *s > 0),
                        _ => None,
                    }
                    .ok_or_else(|| err("substeps: expected a positive integer".into()))?
                }
                "seed" => {
                    sc.seed = match vals.as_slice() {
                        [v] => v.parse().ok(),
                        _ => None,
                    }
                    .ok_or_else(|| err("seed: expected an unsigned integer".into()))?
                }
                "start" => {
                    let q = nums(&vals)?;
                    if q.len() != n {
                        return Err(err(format!("start: expected {n} values, got {}", q.len())));
                    }
                    sc.start = q;
                }
                "start_offset" => sc.start_offset = one_num(&vals)?,
                "observer" => sc.observer = one_flag(&vals)?,
                "friction" => sc.friction = one_flag(&vals)?,
                "friction_eps" => sc.friction_eps = one_num(&vals)?,
                "rate_limit" => sc.rate_limit = one_flag(&vals)?,
                "passivity" => sc.passivity = one_flag(&vals)?,
                "noise" => {
                    let v = nums(&vals)?;
                    let [q, qd, tau] = v.as_slice() else {
                        return Err(err("noise: expected sigma_q sigma_qd sigma_tau".into()));
                    };
                    sc.noise = SensorNoise { sigma_q: *q, sigma_qd: *qd, sigma_tau: *tau };
                }
                "log" => match vals.as_slice() {
                    [p] => sc.log = Some(base.join(p)),
                    _ => return Err(err("log: expected one path".into())),
                },
                "window" => {
                    let v = nums(&vals)?;
                    let [a, b] = v.as_slice() else {
                        return Err(err("window: expected t0 t1".into()));
                    };
                    sc.window = Some((*a, *b));
                }
                "reference" => {
                    sc.reference = match vals.as_slice() {
                        ["hold"] => ReferenceProgram::Hold,
                        ["socket"] => ReferenceProgram::Socket,
                        ["trajectory", p] => {
                            let file = base.join(p);
                            let commands = read_stream_file(&file).map_err(|e| err(format!("{}: {e}", file.display())))?;
                            ReferenceProgram::Replay { path: file, commands }
                        }
                        _ => return Err(err("reference: expected hold, socket or trajectory <path>".into())),
                    }
                }
                "gravity_at" => {
                    sc.gravity_at(&vals).map_err(err)?;
                }
                "task_state" => {
                    sc.task_state(&vals).map_err(err)?;
                }
                "push" => {
                    let v = nums(&vals)?;
                    let (t0, t1, w) = match v.as_slice() {
                        [t0, t1, f @ ..] if f.len() == 3 || f.len() == 6 => {
                            let mut w = Vector6::zeros();
                            w.rows_mut(0, f.len()).copy_from_slice(f);
                            (*t0, *t1, w)
                        }
                        _ => return Err(err("push: expected t0 t1 fx fy fz [mx my mz]".into())),
                    };
                    let d = ExternalDisturbance::wrench(w, t0, t1).map_err(|e| err(e.to_string()))?;
                    sc.disturbances.push(d);
                }
                "joint_torque" => {
                    let v = nums(&vals)?;
                    let [t0, t1, j, tau] = v.as_slice() else {
                        return Err(err("joint_torque: expected t0 t1 joint torque".into()));
                    };
                    let j = joint_index(*j, n).ok_or_else(|| err(format!("joint_torque: joint must be 1..={n}")))?;
                    let mut v = vec![T::zero(); n];
                    v[j] = *tau;
                    let d = ExternalDisturbance::joint_torques(v, *t0, *t1).map_err(|e| err(e.to_string()))?;
                    sc.disturbances.push(d);
                }
                "link_force" => {
                    let v = nums(&vals)?;
                    let [t0, t1, l, px, py, pz, fx, fy, fz] = v.as_slice() else {
                        return Err(err("link_force: expected t0 t1 link px py pz fx fy fz".into()));
                    };
                    let link = joint_index(*l, n).ok_or_else(|| err(format!("link_force: link must be 1..={n}")))?;
                    let f = LinkForce {
                        link,
                        point: Vector3::new(*px, *py, *pz),
                        force: Vector3::new(*fx, *fy, *fz),
                    };
                    let d = ExternalDisturbance::link_force(f, *t0, *t1).map_err(|e| err(e.to_string()))?;
                    sc.disturbances.push(d);
                }
                "event" => {
                    let [t, gain, rest @ ..] = vals.as_slice() else {
                        return Err(err("event: expected t key values...".into()));
                    };
                    let t = num::<T>(t).ok_or_else(|| err(format!("event: bad time `{t}`")))?;
                    if !GAIN_KEYS.contains(gain) {
                        return Err(err(format!("event: unknown gain `{gain}`")));
                    }
                    if sc.events.last().is_some_and(|e| e.t > t) {
                        return Err(err("event: times must be non-decreasing".into()));
                    }
                    // Count check only; sign errors are rejected when the event fires.
                    let values = nums(rest)?;
                    if *gain == "alpha" {
                        if values.len() != 1 {
                            return Err(err("alpha: expected one value".into()));
                        }
                    } else {
                        apply_gain_change(&mut sc.gains.clone(), gain, &values).map_err(err)?;
                    }
                    sc.events.push(ReconfigEvent { t, change: GainChange { key: (*gain).to_string(), values } });
                }
                k if GAIN_KEYS.contains(&k) => {
                    let v = nums(&vals)?;
                    apply_gain_change(&mut sc.gains, k, &v).map_err(err)?;
                }
                _ => return Err(err(format!("unknown key `{key}`"))),
            }
        }

        sc.check().map_err(|m| cfg_err(path, 0, m))?;
        Ok(sc)
    }

    fn gravity_at(&mut self, vals: &[&str]) -> Result<(), String> {
        self.gains.gravity_at_target = match vals {
            ["target"] => true,
            ["measured"] => false,
            _ => return Err("gravity_at: expected target or measured".into()),
        };
        Ok(())
    }

    fn task_state(&mut self, vals: &[&str]) -> Result<(), String> {
        self.gains.task_uses_nominal = match vals {
            ["measured"] => false,
            ["nominal"] => true,
            _ => return Err("task_state: expected measured or nominal".into()),
        };
        Ok(())
    }

    fn check(&self) -> Result<(), String> {
        if !(self.dt > T::zero()) {
            return Err("dt must be positive".into());
        }
        if self.duration < T::zero() {
            return Err("duration must be non-negative".into());
        }
        if !(self.friction_eps > T::zero()) {
            return Err("friction_eps must be positive".into());
        }
        if self.start_offset < T::zero() {
            return Err("start_offset must be non-negative".into());
        }
        let n = self.model.n_joints();
        if let ReferenceProgram::Replay { commands, .. } = &self.reference {
            for c in commands {
                let m = match &c.command {
                    crate::trajectory::SourceCommand::Setpoint(p) => p.q_star.len(),
                    crate::trajectory::SourceCommand::Trajectory(t) => t.n_joints(),
                };
                if m != n {
                    return Err(format!("reference command at t = {} has {m} joints, model has {n}", c.t.as_f64()));
                }
            }
        }
        if let Some((a, b)) = self.window {
            if !(a >= T::zero() && a < b && b <= self.duration) {
                return Err("window must satisfy 0 <= t0 < t1 <= duration".into());
            }
        }
        if let Some((i, d)) = self.disturbances.iter().enumerate().find(|(_, d)| d.t_start < T::zero()) {
            return Err(format!("disturbance {} starts before t = 0 ({})", i + 1, d.t_start.as_f64()));
        }
        self.gains.validate(&self.model).map_err(|e| format!("gains: {e}"))
    }

    /// Number of control ticks, `round(duration / dt)`.
    pub fn steps(&self) -> usize {
        (self.duration / self.dt).round().to_usize().unwrap_or(0)
    }
}

fn joint_index<T: Real>(v: T, n: usize) -> Option<usize> {
    let j = v.to_f64()?;
    (j.fract() == 0.0 && j >= 1.0 && j <= n as f64).then(|| j as usize - 1)
}

