//! Reference generation for the two command paths: streamed setpoints and
//! whole-trajectory execution.
//!
//! Commands are built (and validated) on the sender's side and handed to the
//! control loop through a bounded [`CommandMailbox`]. The loop drains the
//! mailbox and calls [`ReferenceSource::sample`] once per tick; neither call
//! blocks or allocates.

mod source;
mod wire;

use std::sync::atomic::{AtomicU64, Ordering};

use crossbeam_queue::ArrayQueue;
use thiserror::Error;

pub use source::{ExecutionStatus, Mode, ReferenceSource};
pub use wire::{
    format_setpoint, format_trajectory, parse_stream, read_stream_file, read_trajectory_file, TimedCommand,
    WireDecoder, WireError,
};

use crate::scalar::Real;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TrajectoryError {
    #[error("trajectory has no points")]
    Empty,
    #[error("point {index}: expected {expected} joints, got {got}")]
    Dimension { index: usize, expected: usize, got: usize },
    #[error("point {index}: time must be non-negative and strictly increasing")]
    Time { index: usize },
    #[error("point {index}: non-finite value")]
    NonFinite { index: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryPoint<T: Real> {
    pub t_from_start: T,
    pub q_star: Vec<T>,
    pub qd_star: Option<Vec<T>>,
}

impl<T: Real> TrajectoryPoint<T> {
    pub fn new(t_from_start: T, q_star: Vec<T>, qd_star: Option<Vec<T>>) -> Self {
        Self { t_from_start, q_star, qd_star }
    }

    fn check(&self, index: usize, n: usize) -> Result<(), TrajectoryError> {
        if self.q_star.len() != n {
            return Err(TrajectoryError::Dimension { index, expected: n, got: self.q_star.len() });
        }
        if let Some(qd) = &self.qd_star {
            if qd.len() != n {
                return Err(TrajectoryError::Dimension { index, expected: n, got: qd.len() });
            }
        }
        let finite = self.t_from_start.is_finite()
            && self.q_star.iter().chain(self.qd_star.iter().flatten()).all(|v| v.is_finite());
        if !finite {
            return Err(TrajectoryError::NonFinite { index });
        }
        if self.t_from_start < T::zero() {
            return Err(TrajectoryError::Time { index });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Interpolation {
    #[default]
    Cubic,
    Linear,
}

/// A validated, time-ordered list of points with knot velocities resolved.
///
/// Knots without an explicit velocity get a central finite difference;
/// the first and last knots default to rest.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory<T: Real> {
    points: Vec<TrajectoryPoint<T>>,
    interpolation: Interpolation,
    /// Resolved knot velocities, `points.len()` rows of `n`.
    velocities: Vec<T>,
    n: usize,
}

impl<T: Real> Trajectory<T> {
    pub fn new(points: Vec<TrajectoryPoint<T>>, interpolation: Interpolation) -> Result<Self, TrajectoryError> {
        let first = points.first().ok_or(TrajectoryError::Empty)?;
        let n = first.q_star.len();
        for (i, p) in points.iter().enumerate() {
            p.check(i, n)?;
            if i > 0 && !(p.t_from_start > points[i - 1].t_from_start) {
                return Err(TrajectoryError::Time { index: i });
            }
        }
        let k = points.len();
        let mut velocities = vec![T::zero(); k * n];
        for i in 0..k {
            let row = &mut velocities[i * n..(i + 1) * n];
            if let Some(qd) = &points[i].qd_star {
                row.copy_from_slice(qd);
            } else if interpolation == Interpolation::Cubic && i > 0 && i + 1 < k {
                let (a, b) = (&points[i - 1], &points[i + 1]);
                let span = b.t_from_start - a.t_from_start;
                for j in 0..n {
                    row[j] = (b.q_star[j] - a.q_star[j]) / span;
                }
            }
        }
        Ok(Self { points, interpolation, velocities, n })
    }

    pub fn points(&self) -> &[TrajectoryPoint<T>] {
        &self.points
    }

    pub fn interpolation(&self) -> Interpolation {
        self.interpolation
    }

    pub fn n_joints(&self) -> usize {
        self.n
    }

    pub fn duration(&self) -> T {
        self.points.last().map_or(T::zero(), |p| p.t_from_start)
    }

    fn velocity(&self, knot: usize) -> &[T] {
        &self.velocities[knot * self.n..(knot + 1) * self.n]
    }
}

/// A message for the reference source.
#[derive(Debug, Clone, PartialEq)]
pub enum SourceCommand<T: Real> {
    Setpoint(TrajectoryPoint<T>),
    Trajectory(Trajectory<T>),
}

/// Bounded drop-oldest hand-off from command producers to the control loop.
///
/// Replaced or consumed commands are returned to producers through a retire
/// queue so that the control loop never frees memory.
pub struct CommandMailbox<T: Real> {
    inbox: ArrayQueue<SourceCommand<T>>,
    retired: ArrayQueue<SourceCommand<T>>,
    dropped: AtomicU64,
}

impl<T: Real> CommandMailbox<T> {
    pub fn new(capacity: usize) -> Self {
        Self {
            inbox: ArrayQueue::new(capacity.max(1)),
            retired: ArrayQueue::new(capacity.max(1) + 2),
            dropped: AtomicU64::new(0),
        }
    }

    /// Enqueues a command, evicting the oldest one when full.
    pub fn send(&self, cmd: SourceCommand<T>) {
        self.collect();
        if self.inbox.force_push(cmd).is_some() {
            self.dropped.fetch_add(1, Ordering::Relaxed);
        }
    }

    /// Commands lost to overflow so far.
    pub fn dropped(&self) -> u64 {
        self.dropped.load(Ordering::Relaxed)
    }

    /// Frees retired commands; called by producers.
    pub fn collect(&self) {
        while self.retired.pop().is_some() {}
    }

    pub(crate) fn receive(&self) -> Option<SourceCommand<T>> {
        self.inbox.pop()
    }

    pub(crate) fn retire(&self, cmd: SourceCommand<T>) {
        let _ = self.retired.push(cmd);
    }
}
