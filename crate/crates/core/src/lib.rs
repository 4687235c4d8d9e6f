//! Random dynamical systems driven by Markovian or stationary noise.
//!
//! The crate simulates `u_k = S(u_{k-1}, η_k)`, lifts it to a Markov chain on
//! the extended space of (state, noise) pairs, and measures how fast laws
//! converge in total variation. Hypotheses behind exponential mixing
//! (dissipativity, controllability, minorisation, recurrence) are checked as
//! probe-based numerical certificates.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod dynamics;
pub mod error;
pub mod linalg;
pub mod measures;
pub mod mixing;
pub mod noise;
pub mod pushforward;
pub mod quadrature;
pub mod reduction;
pub mod rng;
pub mod stats;

pub use dynamics::{InvariantSet, KickedOde, RdsMap, RdsSystem};
pub use error::{Error, Result};
pub use measures::{Bounds, EmpiricalMeasure, Grid, GridDensity};
