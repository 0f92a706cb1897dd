//! Radial finite-volume laboratory for blow-up in the parabolic-parabolic
//! Keller-Segel system on a ball.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod functionals;
pub mod grid;
pub mod initial_data;
pub mod io;
pub mod quadrature;
pub mod solver;
pub mod verifier;

pub use error::{Error, Result};
pub use functionals::{
    dissipation, energy, energy_report, norm, param_window, residual_f, residual_g, theta_exponent,
    EnergyReport, NormKind, ParamWindow, StatePair,
};
pub use grid::{
    build_grid, integrate, laplacian_radial, radial_derivative, Bc, GridSpec, RadialField,
    RadialGrid,
};
