//! Simulation toolkit for the continuously monitored Lipkin–Meshkov–Glick model.
//!
//! The collective spin of `N` spin-1/2 particles evolves under
//! `H = -S_x^2 / S - 2 h S_z` while `S_z` is weakly and continuously measured
//! at rate `gamma`. The crate covers
//!
//! * exact finite-`N` dynamics ([`monitored_quantum`]): quantum trajectories,
//!   the averaged master equation and a discrete ancilla model;
//! * the `N -> infinity` stochastic dynamics on the sphere ([`semiclassical`])
//!   and its unmonitored Hamiltonian backbone ([`classical_flow`]);
//! * ensemble statistics, the absorption probability `p_plus` and the phase
//!   diagram ([`analysis`]);
//! * a reproducible command-line driver ([`cli`]).
//!
//! All randomness is addressed by `(base_seed, trajectory_index)` so ensembles
//! are bit-identical across worker counts.

// `!(x > 0.0)` is used on purpose so NaN fails validation; time-indexed
// loops read several parallel columns at once.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod analysis;
pub mod classical_flow;
pub mod cli;
pub mod error;
pub mod linalg;
pub mod monitored_quantum;
pub mod noise;
pub mod semiclassical;
pub mod spin_algebra;

pub use error::{Error, Result};
