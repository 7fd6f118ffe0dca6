//! Simulation and analysis tools for the negatively charged boron-vacancy spin defect
//! in isotopically engineered hexagonal boron nitride.

pub mod config;
pub mod error;
pub mod fit;
pub mod io;
pub mod lindblad;
pub mod model;
pub mod ratemodel;
pub mod spectra;
pub mod spin;

pub use error::{Error, Result};
