//! Numerical toolkit for effective Navier wall laws of rough or layered
//! boundaries: staggered-grid Stokes and Navier-Stokes solvers, thin-layer
//! problems, periodic cell problems, effective limit problems, convergence
//! sweeps and an optimal-control fixed point.

pub mod cell;
pub mod cli;
pub mod control;
pub mod error;
pub mod expr;
pub mod fields;
pub mod gammaconv;
pub mod grid;
pub mod linalg;
pub mod stokes;
pub mod thinlayer;
pub mod walllaw;

pub use error::{Error, Result};
