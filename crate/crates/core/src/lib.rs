//! Distributed model-predictive energy management for a single-bus DC shipboard
//! power system.
//!
//! The crate is layered bottom-up:
//!
//! * [`model`]: generator, battery, load and bus relations plus the
//!   Arrhenius capacity-loss model.
//! * [`qp`]: a dense active-set solver for the horizon QPs solved at every node.
//! * [`nodes`]: the generator (PGM) and battery (PCM) node problems.
//! * [`coordinator`]: dual gradient ascent over the node problems and a
//!   monolithic penalty-continuation solve used as its oracle.
//! * [`sim`]: closed-loop plant co-simulation with device-level current
//!   tracking and delayed setpoint application.
//! * [`config`] and [`harness`]: scenario files, sweeps, verification and CSV
//!   artifacts.

// `!(x > 0.0)` also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod coordinator;
pub mod harness;
pub mod model;
pub mod nodes;
pub mod profile;
pub mod qp;
pub mod sim;

pub use profile::HorizonProfile;
