pub mod error;
pub mod field;
pub mod minimizer;
pub mod ode;
pub mod closedform;
pub mod collapse;
pub mod potential;
pub mod quadrature;
pub mod radial;
pub mod spectral;

pub use error::{Error, Result};
