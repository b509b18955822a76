use std::sync::Arc;
use std::time::Instant;

use nalgebra::Matrix6xX;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::log::{compute_rmse, Frame, RunLog};
use super::scenario::{apply_gain_change, ReferenceProgram, Scenario};
use super::HarnessError;
use crate::controller::{ControlInput, GainSet, ImpedanceController};
use crate::model::{ChainModel, DynamicsWorkspace, JointState, Pose};
use crate::observer::FrictionObserver;
use crate::scalar::{lit, Real};
use crate::simulator::{estimate_ee_wrench, Plant, SensorReader, SimError};
use crate::snapshot::{snapshot_channel, SnapshotReader, SnapshotWriter};
use crate::trajectory::{CommandMailbox, ReferenceSource, TimedCommand};

const MAILBOX_SLOTS: usize = 16;

#[derive(Debug, Clone, Copy, Default)]
pub struct RunOptions {
    /// Overrides the scenario seed.
    pub seed: Option<u64>,
    /// Reads a global allocation counter. Sampled after the first tick and at the end.
    pub alloc_probe: Option<fn() -> u64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EventRecord {
    pub t: f64,
    pub key: String,
    pub accepted: bool,
    pub reason: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Metrics {
    pub ticks: usize,
    pub window: (f64, f64),
    pub rmse_xyz_cm: [f64; 3],
    pub rmse_joint: Vec<f64>,
    pub max_abs_tau_m: Vec<f64>,
    /// Ticks on which each joint hit its torque clamp.
    pub clamp_counts: Vec<u64>,
    pub tau_f_hat_mean_abs: Vec<f64>,
    pub tau_f_hat_max_abs: Vec<f64>,
    /// Sensor read to torque command, per tick.
    pub latency_p50_us: f64,
    pub latency_p99_us: f64,
    pub latency_max_us: f64,
    pub allocations_after_first_tick: Option<u64>,
    /// Largest quasi-static end-effector force estimate from the torque sensors, N.
    pub peak_ee_force: f64,
    pub mailbox_dropped: u64,
    pub events: Vec<EventRecord>,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub log: RunLog,
    pub metrics: Metrics,
    /// Simulated time at which the state became non-finite or ran away.
    pub diverged: Option<f64>,
}

struct PendingEvent<T: Real> {
    t: T,
    snapshot: Option<Arc<GainSet<T>>>,
}

/// Every piece of the closed loop, allocated up front.
pub(crate) struct Session<'a, T: Real> {
    sc: &'a Scenario<T>,
    plant_model: ChainModel<T>,
    plant: Plant<T>,
    sensors: SensorReader<T>,
    meas: JointState<T>,
    observer: FrictionObserver<T>,
    controller: ImpedanceController<T>,
    source: ReferenceSource<T>,
    pub(crate) mailbox: Arc<CommandMailbox<T>>,
    gains_tx: SnapshotWriter<GainSet<T>>,
    gains_rx: SnapshotReader<GainSet<T>>,
    events: Vec<PendingEvent<T>>,
    next_event: usize,
    /// Replay commands, last first so that `pop` yields the next one.
    replay: Vec<TimedCommand<T>>,
    drive: Vec<T>,
    scratch: [Vec<f64>; 8],
    pub(crate) log: RunLog,
    latencies: Vec<u64>,
    ws: DynamicsWorkspace<T>,
    jac: Matrix6xX<T>,
    ext: Vec<T>,
    peak_force: f64,
    event_records: Vec<EventRecord>,
}

impl<'a, T: Real> Session<'a, T> {
    pub(crate) fn new(sc: &'a Scenario<T>, seed: u64, ticks: usize) -> Result<Self, HarnessError> {
        let model = &sc.model;
        let n = model.n_joints();
        let runtime = |e: &dyn std::fmt::Display| HarnessError::Runtime(e.to_string());

        let mut q0 = sc.start.clone();
        if sc.start_offset > T::zero() {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(1);
            let a = sc.start_offset.as_f64();
            for q in &mut q0 {
                *q += lit::<T>(rng.random_range(-a..=a));
            }
        }
        let qd0 = vec![T::zero(); n];
        let plant_model = if sc.friction { model.clone() } else { model.without_friction() };
        let plant = Plant::new(&plant_model, &q0, &qd0).map_err(|e| runtime(&e))?.with_friction_eps(sc.friction_eps);
        let mut sensors = SensorReader::new(sc.noise, seed);
        let mut meas = JointState::zeros(n);
        sensors.read(plant.state(), &mut meas).map_err(|e| runtime(&e))?;

        let mut observer = FrictionObserver::new(n, sc.gains.t_int, sc.dt);
        observer.reset(&meas.q, &meas.qd).map_err(|e| runtime(&e))?;
        observer.set_enabled(sc.observer, &meas.q, &meas.qd).map_err(|e| runtime(&e))?;

        let mut source = ReferenceSource::new(model, &sc.start).map_err(|e| runtime(&e))?.with_rate_limit(sc.rate_limit);
        source.set_passivity_mode(sc.passivity);

        let (gains_tx, gains_rx) = snapshot_channel(sc.gains.clone());
        let mut current = sc.gains.clone();
        let mut events = Vec::with_capacity(sc.events.len());
        let mut event_records = Vec::with_capacity(sc.events.len());
        for ev in &sc.events {
            let mut next = current.clone();
            let outcome = apply_gain_change(&mut next, &ev.change.key, &ev.change.values)
                .and_then(|_| next.validate(model).map_err(|e| e.to_string()));
            let snapshot = match &outcome {
                Ok(()) => {
                    current = next;
                    Some(Arc::new(current.clone()))
                }
                Err(_) => None,
            };
            event_records.push(EventRecord {
                t: ev.t.as_f64(),
                key: ev.change.key.clone(),
                accepted: outcome.is_ok(),
                reason: outcome.err(),
            });
            events.push(PendingEvent { t: ev.t, snapshot });
        }

        let replay = match &sc.reference {
            ReferenceProgram::Replay { commands, .. } => commands.iter().rev().cloned().collect(),
            _ => Vec::new(),
        };

        Ok(Self {
            sc,
            plant_model,
            plant,
            sensors,
            meas,
            observer,
            controller: ImpedanceController::new(model),
            source,
            mailbox: Arc::new(CommandMailbox::new(MAILBOX_SLOTS)),
            gains_tx,
            gains_rx,
            events,
            next_event: 0,
            replay,
            drive: vec![T::zero(); n],
            scratch: std::array::from_fn(|_| vec![0.0; n]),
            log: RunLog::with_capacity(n, ticks),
            latencies: Vec::with_capacity(ticks),
            ws: DynamicsWorkspace::new(n),
            jac: Matrix6xX::zeros(n),
            ext: vec![T::zero(); n],
            peak_force: 0.0,
            event_records,
        })
    }

    /// One control period: sense, estimate, reference, command, log, then
    /// advance the plant unless this is the final tick.
    pub(crate) fn tick(&mut self, k: usize, advance: bool) -> Result<(), SimError> {
        let sc = self.sc;
        let model = &sc.model;
        let dt = sc.dt;
        let now = T::from_usize(k).expect("tick count representable") * dt;
        let due = now + dt * lit(0.5);

        while self.next_event < self.events.len() && self.events[self.next_event].t <= due {
            if let Some(s) = &self.events[self.next_event].snapshot {
                self.gains_tx.publish_arc(Arc::clone(s));
            }
            self.next_event += 1;
        }
        while self.replay.last().is_some_and(|c| c.t <= due) {
            if let Some(c) = self.replay.pop() {
                self.mailbox.send(c.command);
            }
        }

        let started = Instant::now();
        self.gains_rx.refresh();
        let gains = self.gains_rx.current();
        self.sensors.read(self.plant.state(), &mut self.meas)?;
        if k > 0 {
            self.observer
                .step(gains, model, &self.drive, &self.meas.tau, &self.meas.q, &self.meas.qd, dt)
                .map_err(|_| SimError::Step)?;
        }
        self.source.drain(&self.mailbox, now);
        let reference = self.source.sample(now, model)?;
        let input = ControlInput {
            q: &self.meas.q,
            qd: &self.meas.qd,
            q_n: self.observer.q_n(),
            qd_n: self.observer.qd_n(),
            tau_f_hat: self.observer.estimate(),
        };
        let cmd = self.controller.compute(model, gains, &input, reference)?;
        for (i, d) in self.drive.iter_mut().enumerate() {
            *d = cmd.drive_torque(i);
        }
        self.latencies.push(started.elapsed().as_nanos() as u64);

        // Quasi-static external load seen by the sensors, for the force metric.
        model.gravity_torques_into(&mut self.ws, &self.meas.q, &mut self.ext)?;
        for (e, s) in self.ext.iter_mut().zip(&self.meas.tau) {
            *e -= *s;
        }
        model.jacobian_into(&self.meas.q, &mut self.jac)?;
        let w = estimate_ee_wrench(&self.jac, &self.ext, lit(1e-6))?;
        self.peak_force = self.peak_force.max(w.fixed_rows::<3>(0).norm().as_f64());

        let state = self.plant.state();
        let x = model.forward_kinematics(&state.q)?;
        let groups: [&[T]; 8] = [
            &state.q,
            &reference.q_star,
            self.observer.q_n(),
            &state.qd,
            &cmd.tau_m,
            &cmd.tau_q,
            &cmd.tau_x,
            &cmd.tau_f_hat,
        ];
        for (dst, src) in self.scratch.iter_mut().zip(groups) {
            for (d, s) in dst.iter_mut().zip(src) {
                *d = s.as_f64();
            }
        }
        let [a, b, c, d, e, f, g, h] = &self.scratch;
        self.log.push(
            now.as_f64(),
            [a, b, c, d, e, f, g, h],
            pose_row(&x),
            pose_row(&reference.x_star),
            cmd.clamped,
            gains.task_scale.as_f64(),
        );

        if advance {
            self.plant.step(&self.plant_model, &cmd.tau_m, &sc.disturbances, dt, sc.substeps)?;
        }
        Ok(())
    }

    pub(crate) fn finish(self, diverged: Option<f64>, allocations: Option<u64>) -> Result<RunOutput, HarnessError> {
        let log = self.log;
        let n = log.n_joints();
        let mut metrics = Metrics {
            ticks: log.len(),
            window: (0.0, 0.0),
            rmse_xyz_cm: [0.0; 3],
            rmse_joint: vec![0.0; n],
            max_abs_tau_m: vec![0.0; n],
            clamp_counts: vec![0; n],
            tau_f_hat_mean_abs: vec![0.0; n],
            tau_f_hat_max_abs: vec![0.0; n],
            latency_p50_us: 0.0,
            latency_p99_us: 0.0,
            latency_max_us: 0.0,
            allocations_after_first_tick: allocations,
            peak_ee_force: self.peak_force,
            mailbox_dropped: self.mailbox.dropped(),
            events: self.event_records,
        };
        if !log.is_empty() {
            let last = log.t(log.len() - 1);
            let (t0, t1) = match self.sc.window {
                Some((a, b)) => (a.as_f64(), b.as_f64().min(last)),
                None => (0.0, last),
            };
            if t0 <= t1 {
                metrics.window = (t0, t1);
                let xyz = compute_rmse(&log, (t0, t1), Frame::TaskXyz)?;
                metrics.rmse_xyz_cm.copy_from_slice(&xyz);
                metrics.rmse_joint = compute_rmse(&log, (t0, t1), Frame::Joint)?;
            }
            for i in 0..log.len() {
                for j in 0..n {
                    metrics.max_abs_tau_m[j] = metrics.max_abs_tau_m[j].max(log.tau_m(i)[j].abs());
                    let f = log.tau_f_hat(i)[j].abs();
                    metrics.tau_f_hat_mean_abs[j] += f / log.len() as f64;
                    metrics.tau_f_hat_max_abs[j] = metrics.tau_f_hat_max_abs[j].max(f);
                    metrics.clamp_counts[j] += (log.clamp_flags(i) >> j) & 1;
                }
            }
        }
        let mut lat = self.latencies;
        lat.sort_unstable();
        let pct = |p: f64| -> f64 {
            if lat.is_empty() {
                return 0.0;
            }
            let idx = ((p * lat.len() as f64).ceil() as usize).clamp(1, lat.len()) - 1;
            lat[idx] as f64 / 1e3
        };
        metrics.latency_p50_us = pct(0.50);
        metrics.latency_p99_us = pct(0.99);
        metrics.latency_max_us = pct(1.0);
        Ok(RunOutput { log, metrics, diverged })
    }
}

fn pose_row<T: Real>(p: &Pose<T>) -> [f64; 7] {
    let [w, x, y, z] = p.wxyz();
    [p.position.x.as_f64(), p.position.y.as_f64(), p.position.z.as_f64(), w.as_f64(), x.as_f64(), y.as_f64(), z.as_f64()]
}

/// Runs a scenario offline, as fast as possible, and returns the log and metrics.
///
/// Divergence is not an error: the partial log is returned with
/// [`RunOutput::diverged`] set.
pub fn run_scenario<T: Real>(sc: &Scenario<T>, opts: &RunOptions) -> Result<RunOutput, HarnessError> {
    if sc.reference == ReferenceProgram::Socket {
        return Err(HarnessError::Config {
            path: sc.path.clone(),
            line: 0,
            message: "reference socket needs `serve`".into(),
        });
    }
    let (steps, ticks) = tick_counts(sc);
    let mut session = Session::new(sc, opts.seed.unwrap_or(sc.seed), ticks)?;
    let mut diverged = None;
    let mut after_first = None;
    for k in 0..ticks {
        if let Err(e) = session.tick(k, k < steps) {
            diverged = Some(match e {
                SimError::Divergence { t } => t,
                _ => return Err(HarnessError::Runtime(e.to_string())),
            });
            break;
        }
        if k == 0 {
            after_first = opts.alloc_probe.map(|p| p());
        }
    }
    let allocations = opts.alloc_probe.zip(after_first).map(|(p, a)| p() - a);
    session.finish(diverged, allocations)
}

/// Plant steps and logged ticks. A zero-length run logs nothing; otherwise
/// both endpoints are logged.
pub(crate) fn tick_counts<T: Real>(sc: &Scenario<T>) -> (usize, usize) {
    let steps = sc.steps();
    (steps, if steps == 0 { 0 } else { steps + 1 })
}
