//! Compliant control of torque-driven serial arms.
//!
//! A joint-space and a task-space impedance law are blended by a single
//! parameter, friction is cancelled by a model-free observer, and a
//! rigid-body plant closes the loop in simulation. Everything is generic
//! over the scalar ([`Real`], implemented for `f32` and `f64`); the
//! `…64`/`…32` aliases below fix it.
//!
//! The per-tick path ([`ImpedanceController::compute`],
//! [`FrictionObserver::step`], [`Plant::step`], [`ReferenceSource::sample`])
//! works in preallocated buffers and does not touch the heap.

pub mod controller;
pub mod error;
pub mod harness;
pub mod kv;
pub mod model;
pub mod observer;
pub mod scalar;
pub mod simulator;
pub mod snapshot;
pub mod trajectory;

pub use controller::{GainSet, ImpedanceController, Reference, TorqueCommand};
pub use error::DimensionMismatch;
pub use model::{load_model, ChainModel, DynamicsWorkspace, Joint, JointState, ModelError, Pose};
pub use observer::FrictionObserver;
pub use scalar::Real;
pub use simulator::{ExternalDisturbance, LinkForce, Plant, PlantState, SensorNoise, SensorReader};
pub use trajectory::{ReferenceSource, Trajectory, TrajectoryPoint};

pub type ChainModel64 = ChainModel<f64>;
pub type GainSet64 = GainSet<f64>;
pub type ImpedanceController64 = ImpedanceController<f64>;
pub type FrictionObserver64 = FrictionObserver<f64>;
pub type Plant64 = Plant<f64>;
pub type ReferenceSource64 = ReferenceSource<f64>;
pub type Trajectory64 = Trajectory<f64>;

pub type ChainModel32 = ChainModel<f32>;
pub type GainSet32 = GainSet<f32>;
pub type ImpedanceController32 = ImpedanceController<f32>;
pub type FrictionObserver32 = FrictionObserver<f32>;
pub type Plant32 = Plant<f32>;
pub type ReferenceSource32 = ReferenceSource<f32>;
pub type Trajectory32 = Trajectory<f32>;
