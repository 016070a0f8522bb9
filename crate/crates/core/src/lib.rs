//! Low-voltage feeder simulation and half-hour-ahead voltage prediction from
//! partial smart-meter coverage.
//!
//! The crate is `no_std` (it needs `alloc`); file formats, the CLI and
//! parallel orchestration live in the `lvvc` crate.
//!
//! Pipeline: [`circuit`] topology → [`demand`] synthetic household load and
//! phase lumping → [`powerflow`] ground-truth voltages → [`features`] meter
//! selection and lagged inputs → [`dlnn`] network training →
//! [`experiments`] coverage and placement studies summarised with [`stats`].

#![no_std]

extern crate alloc;

pub mod circuit;
pub mod demand;
pub mod dlnn;
pub mod experiments;
pub mod features;
pub mod impedance;
pub mod powerflow;
pub mod stats;

/// Length of one time step in minutes.
pub const STEP_MINUTES: u32 = 30;
pub const STEPS_PER_DAY: usize = 48;
pub const STEPS_PER_WEEK: usize = 7 * STEPS_PER_DAY;

pub use circuit::{Circuit, CircuitDoc, CircuitError, NodeId};
pub use demand::Phase;
