//! Deterministic multi-BS cooperative edge-caching environment.
//!
//! * [`model`]: caches, requests, actions, the cooperative hit rate and the
//!   feasibility and transition checks.
//! * [`traffic`]: frozen instances (topology, grouped-Zipf trace) and the
//!   warm start.
//! * [`interface`]: the prompt encoder and the strict decision-line parser.
//! * [`policies`]: LRU/LFU/FIFO, the look-ahead oracle, an external-process
//!   adapter.
//! * [`reward`]: look-ahead value, shaped reward, group advantage and their
//!   property checks.
//! * [`dataset`]: demonstration and state export along the expert
//!   trajectory.
//! * [`harness`]: rollouts, multi-seed evaluation, sweeps and reports.

pub mod dataset;
pub mod error;
pub mod harness;
pub mod interface;
pub mod model;
pub mod policies;
pub mod reward;
pub mod traffic;

pub use error::{Error, FeasibilityError, Result, Rule};
