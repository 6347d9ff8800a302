//! Numerical bifurcation analysis of the classical Lorenz system.
//!
//! ```text
//! x' = sigma (y - x),   y' = x (r - z) - y,   z' = x y - b z
//! ```

pub mod dynamics;
pub mod equilibria;
pub mod chaos;
pub mod config;
pub mod cycles;
pub mod error;
pub mod separatrix;

pub use dynamics::{LorenzParams, State, ToleranceSpec};
pub use error::{Error, Result};
