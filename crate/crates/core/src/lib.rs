//! Beamforming optimization for SWIPT-enabled multicell NOMA downlinks.
//!
//! The crate is organized in layers:
//!
//! * [`netmodel`] generates multicell topologies, user pairing and fading
//!   channels from a scenario configuration.
//! * [`perf`] evaluates exact per-user rates, harvested energy, transmit
//!   power and energy efficiency for any candidate beamforming solution.
//!   It is the ground truth against which everything else is audited.
//! * [`surrogate`] builds the concave lower bounds / convex upper bounds
//!   used by the path-following iterations, together with sampling-based
//!   self-verification of the underlying inequalities.
//! * [`conic`] is a small second-order-cone modeling layer plus the solver
//!   contract (backed by an interior-point conic solver).
//! * [`sca`] owns the path-following algorithms themselves: feasibility
//!   initializers, per-iteration subproblem construction, iteration control
//!   and traces.
//!
//! Internal unit conventions: powers are watts, rates are nats/s/Hz.
//! Decibel and bit quantities appear only at I/O boundaries (see [`units`]).

pub mod conic;
pub mod cvec;
pub mod error;
pub mod netmodel;
pub mod perf;
pub mod sca;
pub mod surrogate;
pub mod units;

pub use error::{Error, Result};
