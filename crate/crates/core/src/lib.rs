//! Monotone discretizations of the two-dimensional Monge-Ampère operator on
//! Cartesian grids, with a damped Newton solver and a test harness.

pub mod grid;
pub mod harness;
pub mod lattice;
pub mod schemes;
pub mod solver;
pub mod sparse;

pub use grid::{discretize, BoundaryTrace, ConvexDomain, Field, Grid, StencilConfig, StencilFamily};
pub use lattice::{lv, LatticeError, LatticeVector, Stencil, Superbase, SymMatrix2};
pub use schemes::{Scheme, SchemeError, SchemeKind};
pub use solver::{damped_newton, NewtonOptions, NewtonReport, SolverError};
