//! The WRain rule: particles on the triangular grid gathering into one row.
//!
//! Particles live on the infinite triangular grid, see two hops around
//! them, share a common orientation, and move by expanding along an edge
//! and later contracting into the target node. The crate provides the
//! lattice geometry, the configuration model, the decision rule, an
//! adversarial round engine with schedulers and replayable traces, trace
//! checkers for the correctness properties, an exhaustive explorer, and
//! instance files and generators.

pub mod checkers;
pub mod engine;
mod error;
pub mod explorer;
pub mod gen;
pub mod grid;
pub mod instance;
pub mod model;
pub mod scheduler;
pub mod trace;
pub mod wrain;

pub use engine::{replay, run, Adversary, Conflict, RunOptions, RunState};
pub use error::{Error, Result};
pub use grid::{BoundingBox, Direction, Node};
pub use model::{Configuration, KeyMode, ParticleState};
pub use scheduler::{AdversaryPolicy, Scheduler, SchedulerKind};
pub use trace::{ParticleId, StepRecord, Termination, Trace};
pub use wrain::Action;
