//! Full counting statistics of a driven qubit strongly coupled to a bosonic
//! bath, treated through a reaction-coordinate mapping.

pub mod correlations;
pub mod error;
pub mod fcs;
pub mod hilbert;
pub mod liouville;
pub mod model;
pub mod nonclassical;
mod numerics;
pub mod spectral;
pub mod sweep;
pub mod trajectories;

pub use error::{Error, Result};
