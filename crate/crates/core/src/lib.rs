//! Jump processes guided by quantum states on a finite configuration space.
//!
//! * [`hilbert`]: states, decompositions, operators, exact propagation,
//!   principal logarithm and seeded random instances.
//! * [`bell`]: Bell's continuous-time jump process and its master equation.
//! * [`discrete`]: discrete-time processes (restriction of Bell's process to a
//!   time lattice, the minimal two-state process, the iid process).
//! * [`current_lab`]: candidate discrete currents and their admissibility.
//! * [`circuits`]: the pairwise process driven by a quantum circuit.
//! * [`harness`]: experiment configuration, ensemble statistics, reports.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bell;
pub mod circuits;
pub mod current_lab;
pub mod discrete;
pub mod error;
pub mod harness;
pub mod hilbert;
pub mod ode;
pub mod quad;
pub mod rng;

pub use error::{Error, Result};
