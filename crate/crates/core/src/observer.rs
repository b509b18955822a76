//! Model-free friction observer.
//!
//! A friction-free nominal plant `K_r q̈_n = τ_drive − τ` is integrated at the
//! control rate, where `τ_drive` is the command without its friction
//! compensation and `τ` the link-side torque sensor. Friction slows the real
//! joint relative to the nominal one, and a PID law on the lag recovers the
//! friction torque:
//!
//! `τ̂_f = K_r K_l ((q̇ − q̇_n) + K_lp (q − q_n) + K_li ∫_{t−T}^{t} (q − q_n) dt)`
//!
//! With `K_li = 0` this is the PD observer. The controller subtracts `τ̂_f`
//! from the motor command, so `τ̂_f` converges to the torque friction exerts
//! on the joint (opposite in sign to the joint velocity).

use thiserror::Error;

use crate::controller::GainSet;
use crate::error::{check_len, DimensionMismatch};
use crate::model::ChainModel;
use crate::scalar::{clamp_sym, lit, Real};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ObserverError {
    #[error(transparent)]
    Dimension(#[from] DimensionMismatch),
    #[error("time step must be positive")]
    TimeStep,
}

/// Nominal state, sliding integral window and latest estimate.
#[derive(Debug, Clone)]
pub struct FrictionObserver<T: Real> {
    n: usize,
    q_n: Vec<T>,
    qd_n: Vec<T>,
    prev_error: Vec<T>,
    /// Ring of per-tick trapezoid increments, `capacity` rows of `n`.
    window: Vec<T>,
    capacity: usize,
    head: usize,
    filled: usize,
    pushes_since_resum: usize,
    running_sum: Vec<T>,
    integral: Vec<T>,
    tau_f_hat: Vec<T>,
    enabled: bool,
}

impl<T: Real> FrictionObserver<T> {
    /// Sizes the integral window for `t_int` seconds at step `dt`. Later
    /// reconfigurations may shorten the window but not grow it past this.
    pub fn new(n: usize, t_int: T, dt: T) -> Self {
        let capacity = window_ticks(t_int, dt).max(1);
        Self {
            n,
            q_n: vec![T::zero(); n],
            qd_n: vec![T::zero(); n],
            prev_error: vec![T::zero(); n],
            window: vec![T::zero(); capacity * n],
            capacity,
            head: 0,
            filled: 0,
            pushes_since_resum: 0,
            running_sum: vec![T::zero(); n],
            integral: vec![T::zero(); n],
            tau_f_hat: vec![T::zero(); n],
            enabled: true,
        }
    }

    pub fn q_n(&self) -> &[T] {
        &self.q_n
    }

    pub fn qd_n(&self) -> &[T] {
        &self.qd_n
    }

    /// Windowed integral of `q − q_n` after anti-windup clamping.
    pub fn integral(&self) -> &[T] {
        &self.integral
    }

    pub fn estimate(&self) -> &[T] {
        &self.tau_f_hat
    }

    pub fn is_enabled(&self) -> bool {
        self.enabled
    }

    pub fn window_capacity(&self) -> usize {
        self.capacity
    }

    /// Aligns the nominal state with the measurement and empties the window.
    pub fn reset(&mut self, q: &[T], qd: &[T]) -> Result<(), ObserverError> {
        check_len("q", self.n, q.len())?;
        check_len("qd", self.n, qd.len())?;
        self.q_n.copy_from_slice(q);
        self.qd_n.copy_from_slice(qd);
        self.prev_error.fill(T::zero());
        self.window.fill(T::zero());
        self.head = 0;
        self.filled = 0;
        self.pushes_since_resum = 0;
        self.running_sum.fill(T::zero());
        self.integral.fill(T::zero());
        self.tau_f_hat.fill(T::zero());
        Ok(())
    }

    /// Switching on performs an implicit reset so the estimate starts from zero.
    pub fn set_enabled(&mut self, enabled: bool, q: &[T], qd: &[T]) -> Result<(), ObserverError> {
        if enabled && !self.enabled {
            self.reset(q, qd)?;
        }
        if !enabled {
            check_len("q", self.n, q.len())?;
            check_len("qd", self.n, qd.len())?;
            self.q_n.copy_from_slice(q);
            self.qd_n.copy_from_slice(qd);
            self.tau_f_hat.fill(T::zero());
        }
        self.enabled = enabled;
        Ok(())
    }

    /// Advances the nominal plant by one tick and returns the new estimate.
    ///
    /// `tau_drive` is the command that was applied during the elapsed tick,
    /// minus its friction compensation. `tau_meas` is the link-side torque
    /// sensor and `q`, `qd` the measured joint state.
    #[allow(clippy::too_many_arguments)]
    pub fn step(
        &mut self,
        gains: &GainSet<T>,
        model: &ChainModel<T>,
        tau_drive: &[T],
        tau_meas: &[T],
        q: &[T],
        qd: &[T],
        dt: T,
    ) -> Result<&[T], ObserverError> {
        let n = self.n;
        check_len("model", n, model.n_joints())?;
        check_len("gains", n, gains.n_joints())?;
        check_len("tau_drive", n, tau_drive.len())?;
        check_len("tau_meas", n, tau_meas.len())?;
        check_len("q", n, q.len())?;
        check_len("qd", n, qd.len())?;
        if !(dt > T::zero()) {
            return Err(ObserverError::TimeStep);
        }
        if !self.enabled {
            self.q_n.copy_from_slice(q);
            self.qd_n.copy_from_slice(qd);
            self.tau_f_hat.fill(T::zero());
            return Ok(&self.tau_f_hat);
        }

        for i in 0..n {
            let qdd_n = (tau_drive[i] - tau_meas[i]) / model.rotor_inertia(i);
            self.qd_n[i] += qdd_n * dt;
            self.q_n[i] += self.qd_n[i] * dt;
        }

        let half_dt = dt * lit(0.5);
        let len = window_ticks(gains.t_int, dt).clamp(1, self.capacity);
        while self.filled >= len {
            self.evict_oldest();
        }
        let slot = (self.head + self.filled) % self.capacity;
        for i in 0..n {
            let err = q[i] - self.q_n[i];
            let inc = (err + self.prev_error[i]) * half_dt;
            self.prev_error[i] = err;
            self.window[slot * n + i] = inc;
            self.running_sum[i] += inc;
        }
        self.filled += 1;
        self.pushes_since_resum += 1;
        if self.pushes_since_resum >= self.capacity {
            self.resum();
        }

        for i in 0..n {
            let kr = model.rotor_inertia(i);
            let gain = kr * gains.kl[i];
            let integral = if gains.kli[i] > T::zero() && gain > T::zero() {
                let bound = gains.tau_max[i] * lit(0.5) / (gain * gains.kli[i]);
                clamp_sym(self.running_sum[i], bound)
            } else {
                self.running_sum[i]
            };
            self.integral[i] = integral;
            let err = self.prev_error[i];
            self.tau_f_hat[i] = gain * ((qd[i] - self.qd_n[i]) + gains.klp[i] * err + gains.kli[i] * integral);
        }
        Ok(&self.tau_f_hat)
    }

    fn evict_oldest(&mut self) {
        let n = self.n;
        let base = self.head * n;
        for i in 0..n {
            self.running_sum[i] -= self.window[base + i];
            self.window[base + i] = T::zero();
        }
        self.head = (self.head + 1) % self.capacity;
        self.filled -= 1;
    }

    /// Recomputes the running sum from the ring to stop rounding drift.
    fn resum(&mut self) {
        let n = self.n;
        self.running_sum.fill(T::zero());
        for k in 0..self.filled {
            let base = ((self.head + k) % self.capacity) * n;
            for i in 0..n {
                self.running_sum[i] += self.window[base + i];
            }
        }
        self.pushes_since_resum = 0;
    }
}

fn window_ticks<T: Real>(t_int: T, dt: T) -> usize {
    let ticks = (t_int / dt).round().as_f64();
    if ticks.is_finite() && ticks > 0.0 {
        ticks as usize
    } else {
        1
    }
}
