//! Symbolic variational calculus on jet bundles: Euler–Lagrange operators,
//! Skinner–Rusk equation systems, constraint prolongation and regularity
//! analysis, computed exactly over the rationals.

pub mod cli;
pub mod fixtures;
pub mod jetspace;
pub mod linalg;
pub mod multiindex;
pub mod problem;
pub mod prolong;
pub mod skinnerrusk;
pub mod symexpr;
pub mod variational;
