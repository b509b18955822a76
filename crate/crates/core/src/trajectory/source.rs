use nalgebra::{Matrix6xX, Vector6};

use super::{CommandMailbox, Interpolation, SourceCommand, Trajectory, TrajectoryError, TrajectoryPoint};
use crate::controller::Reference;
use crate::error::{check_len, DimensionMismatch};
use crate::model::ChainModel;
use crate::scalar::{lit, Real};

/// Shortest bridge from the current reference to a trajectory's first point.
const MIN_BRIDGE: f64 = 0.5;
/// A cubic blend peaks at 1.5× its mean speed.
const CUBIC_PEAK: f64 = 1.5;
/// Positions closer than this count as already at the first point.
const AT_POINT: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Hold,
    Streaming,
    Executing,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExecutionStatus<T: Real> {
    pub done: bool,
    pub time_remaining: T,
}

/// Per-tick reference generator and the state machine behind it.
#[derive(Debug, Clone)]
pub struct ReferenceSource<T: Real> {
    n: usize,
    mode: Mode,
    vmax: Vec<T>,
    rate_limit: bool,
    last_time: Option<T>,
    desired: Vec<T>,
    desired_qd: Vec<T>,
    target: Vec<T>,
    target_qd: Vec<T>,
    traj: Option<Trajectory<T>>,
    start: T,
    shift: T,
    bridged: bool,
    bridge_from: Vec<T>,
    bridge_from_qd: Vec<T>,
    segment: usize,
    reference: Reference<T>,
    jac: Matrix6xX<T>,
    status: ExecutionStatus<T>,
}

impl<T: Real> ReferenceSource<T> {
    /// Starts in hold mode at `q`. Velocity limits come from the model.
    pub fn new(model: &ChainModel<T>, q: &[T]) -> Result<Self, DimensionMismatch> {
        let n = model.n_joints();
        let reference = Reference::hold(model, q)?;
        let z = vec![T::zero(); n];
        Ok(Self {
            n,
            mode: Mode::Hold,
            vmax: model.joints().iter().map(|j| j.velocity_limit).collect(),
            rate_limit: true,
            last_time: None,
            desired: q.to_vec(),
            desired_qd: z.clone(),
            target: q.to_vec(),
            target_qd: z.clone(),
            traj: None,
            start: T::zero(),
            shift: T::zero(),
            bridged: false,
            bridge_from: q.to_vec(),
            bridge_from_qd: z,
            segment: 0,
            reference,
            jac: Matrix6xX::zeros(n),
            status: ExecutionStatus { done: true, time_remaining: T::zero() },
        })
    }

    /// Disables slew limiting so streamed setpoints pass through verbatim.
    pub fn with_rate_limit(mut self, on: bool) -> Self {
        self.rate_limit = on;
        self
    }

    pub fn set_passivity_mode(&mut self, on: bool) {
        self.reference.passivity_mode = on;
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn status(&self) -> ExecutionStatus<T> {
        self.status
    }

    pub fn reference(&self) -> &Reference<T> {
        &self.reference
    }

    /// Switches to streaming toward `point`. Invalid points leave everything unchanged.
    pub fn push_setpoint(&mut self, point: &TrajectoryPoint<T>, _now: T) -> Result<(), TrajectoryError> {
        point.check(0, self.n)?;
        self.target.copy_from_slice(&point.q_star);
        match &point.qd_star {
            Some(qd) => self.target_qd.copy_from_slice(qd),
            None => self.target_qd.fill(T::zero()),
        }
        self.mode = Mode::Streaming;
        self.status = ExecutionStatus { done: false, time_remaining: T::zero() };
        Ok(())
    }

    /// Begins executing `traj` at `now`, preempting whatever was active.
    ///
    /// If the first point is away from the current reference a cubic bridge
    /// of at least half a second is inserted and the trajectory is delayed
    /// as needed to respect the velocity limits. Returns the preempted
    /// trajectory, if any.
    pub fn start_trajectory(&mut self, traj: Trajectory<T>, now: T) -> Result<Option<Trajectory<T>>, TrajectoryError> {
        if traj.n_joints() != self.n {
            return Err(TrajectoryError::Dimension { index: 0, expected: self.n, got: traj.n_joints() });
        }
        let first = &traj.points()[0];
        self.bridge_from.copy_from_slice(&self.reference.q_star);
        self.bridge_from_qd.copy_from_slice(&self.reference.qd_star);
        let mut gap = T::zero();
        let mut slowest = T::zero();
        for i in 0..self.n {
            let d = (first.q_star[i] - self.bridge_from[i]).abs();
            gap = gap.max(d);
            slowest = slowest.max(d / self.vmax[i]);
        }
        let t0 = first.t_from_start;
        if gap > lit(AT_POINT) {
            let needed = lit::<T>(MIN_BRIDGE).max(slowest * lit(CUBIC_PEAK));
            self.shift = (needed - t0).max(T::zero());
            self.bridged = true;
        } else {
            self.shift = T::zero();
            self.bridged = false;
        }
        self.start = now;
        self.segment = 0;
        self.mode = Mode::Executing;
        self.status = ExecutionStatus { done: false, time_remaining: self.shift + traj.duration() };
        Ok(self.traj.replace(traj))
    }

    /// Applies every queued command, last one winning.
    pub fn drain(&mut self, mailbox: &CommandMailbox<T>, now: T) -> usize {
        let mut applied = 0;
        while let Some(cmd) = mailbox.receive() {
            match cmd {
                SourceCommand::Setpoint(ref p) => {
                    if self.push_setpoint(p, now).is_ok() {
                        applied += 1;
                    }
                    mailbox.retire(cmd);
                }
                SourceCommand::Trajectory(traj) => {
                    if traj.n_joints() != self.n {
                        mailbox.retire(SourceCommand::Trajectory(traj));
                        continue;
                    }
                    if let Ok(Some(old)) = self.start_trajectory(traj, now) {
                        mailbox.retire(SourceCommand::Trajectory(old));
                    }
                    applied += 1;
                }
            }
        }
        applied
    }

    /// Produces the reference for time `now`.
    pub fn sample(&mut self, now: T, model: &ChainModel<T>) -> Result<&Reference<T>, DimensionMismatch> {
        check_len("model", self.n, model.n_joints())?;
        let elapsed = self.last_time.map(|t| now - t);
        match self.mode {
            Mode::Hold => {
                self.desired.copy_from_slice(&self.reference.q_star);
                self.desired_qd.fill(T::zero());
            }
            Mode::Streaming => {
                self.desired.copy_from_slice(&self.target);
                self.desired_qd.copy_from_slice(&self.target_qd);
                let reached = self.target.iter().zip(&self.reference.q_star).all(|(a, b)| a == b);
                self.status = ExecutionStatus { done: reached, time_remaining: T::zero() };
            }
            Mode::Executing => self.sample_trajectory(now),
        }

        for i in 0..self.n {
            let mut q = self.desired[i];
            if self.rate_limit {
                // The very first sample may not move away from the initial q*.
                let dt = elapsed.unwrap_or(T::zero()).max(T::zero());
                let bound = self.vmax[i] * dt * lit(1.0 + 1e-12);
                let prev = self.reference.q_star[i];
                q = prev + (q - prev).max(-bound).min(bound);
            }
            self.reference.q_star[i] = q;
            self.reference.qd_star[i] = self.desired_qd[i];
        }
        self.last_time = Some(now);

        self.reference.x_star = model.forward_kinematics(&self.reference.q_star)?;
        model.jacobian_into(&self.reference.q_star, &mut self.jac)?;
        let mut twist = Vector6::zeros();
        for (i, v) in self.reference.qd_star.iter().enumerate() {
            twist += self.jac.column(i) * *v;
        }
        self.reference.xd_star = twist;
        Ok(&self.reference)
    }

    fn sample_trajectory(&mut self, now: T) {
        let Some(traj) = &self.traj else {
            return;
        };
        let n = self.n;
        let pts = traj.points();
        let tau = now - self.start;
        let first_time = pts[0].t_from_start + self.shift;
        let local = tau - self.shift;
        let last = pts.len() - 1;
        self.status.time_remaining = (self.shift + traj.duration() - tau).max(T::zero());

        if tau < first_time {
            if self.bridged {
                hermite(
                    &self.bridge_from,
                    &self.bridge_from_qd,
                    &pts[0].q_star,
                    traj.velocity(0),
                    first_time,
                    tau.max(T::zero()),
                    &mut self.desired,
                    &mut self.desired_qd,
                );
            } else {
                self.desired.copy_from_slice(&self.bridge_from);
                self.desired_qd.fill(T::zero());
            }
            self.status.done = false;
            return;
        }
        if local >= pts[last].t_from_start {
            self.desired.copy_from_slice(&pts[last].q_star);
            self.desired_qd.fill(T::zero());
            self.status = ExecutionStatus { done: true, time_remaining: T::zero() };
            return;
        }

        if self.segment >= last || local < pts[self.segment].t_from_start {
            self.segment = 0;
        }
        while self.segment + 1 < last && local >= pts[self.segment + 1].t_from_start {
            self.segment += 1;
        }
        let k = self.segment;
        let (a, b) = (&pts[k], &pts[k + 1]);
        let h = b.t_from_start - a.t_from_start;
        let s = local - a.t_from_start;
        match traj.interpolation() {
            Interpolation::Cubic => hermite(
                &a.q_star,
                traj.velocity(k),
                &b.q_star,
                traj.velocity(k + 1),
                h,
                s,
                &mut self.desired,
                &mut self.desired_qd,
            ),
            Interpolation::Linear => {
                let u = s / h;
                for j in 0..n {
                    let d = b.q_star[j] - a.q_star[j];
                    self.desired[j] = a.q_star[j] + d * u;
                    self.desired_qd[j] = d / h;
                }
            }
        }
        self.status.done = false;
    }
}

/// Cubic Hermite segment of length `h` evaluated `s` seconds in.
#[allow(clippy::too_many_arguments)]
fn hermite<T: Real>(p0: &[T], v0: &[T], p1: &[T], v1: &[T], h: T, s: T, q: &mut [T], qd: &mut [T]) {
    let u = s / h;
    let (u2, u3) = (u * u, u * u * u);
    let two: T = lit(2.0);
    let three: T = lit(3.0);
    let h00 = two * u3 - three * u2 + T::one();
    let h10 = u3 - two * u2 + u;
    let h01 = three * u2 - two * u3;
    let h11 = u3 - u2;
    let six: T = lit(6.0);
    let d00 = six * u2 - six * u;
    let d10 = three * u2 - lit::<T>(4.0) * u + T::one();
    let d01 = six * u - six * u2;
    let d11 = three * u2 - two * u;
    for j in 0..q.len() {
        q[j] = h00 * p0[j] + h10 * h * v0[j] + h01 * p1[j] + h11 * h * v1[j];
        qd[j] = (d00 * p0[j] + d10 * h * v0[j] + d01 * p1[j] + d11 * h * v1[j]) / h;
    }
}
