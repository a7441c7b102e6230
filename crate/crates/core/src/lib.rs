//! Exact constrained-Hamiltonian analysis of quadratic field theories
//! compactified on an `S¹/ℤ₂` orbifold.
//!
//! Pipeline: [`model`] declares the 5D theory, [`kaluza`] reduces it to one
//! finite-dimensional quadratic model per KK level, [`dirac`] runs the
//! consistency algorithm and degree-of-freedom count, [`dynamics`] checks the
//! resulting flow, and [`cli`] drives scenarios and reports.

pub mod cli;
pub mod dirac;
pub mod dynamics;
pub mod exactla;
pub mod kaluza;
pub mod model;

pub use exactla::{int, Mat, Rat};
