//! Random-interlacement soups on the square lattice: potential theory,
//! samplers and verification experiments.

// Negated comparisons are deliberate: they also reject NaN inputs.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod dirichlet;
pub mod error;
pub mod gaussian;
pub mod lab;
pub mod lattice;
pub mod massive;
pub mod potential;
pub mod quadrature;
pub mod registry;
pub mod rng;
pub mod solver;
pub mod soup;
pub mod stats;
pub mod trajectory;
pub mod walk;

pub use error::{Error, Result};
pub use lattice::{Domain, DomainFunction, LatticePoint, PointSet, ORIGIN};
