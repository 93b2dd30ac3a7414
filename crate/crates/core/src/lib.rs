//! 2D incompressible two-phase (water displacing oil) porous-media flow
//! simulator on Cartesian grids.
//!
//! Pressure is solved implicitly with a five-point or nine-point finite-volume
//! stencil, saturation is advanced explicitly by first-order upwinding, and an
//! adaptive artificial viscosity driven by the weak local residual suppresses
//! the grid orientation effect near displacement fronts.

pub mod diagnostics;
pub mod error;
pub mod flux;
pub mod grid;
mod mgrid;
pub mod pressure;
pub mod runner;
pub mod scenario;
pub mod transport;

pub use error::{ErrorCategory, Result, SimError};
