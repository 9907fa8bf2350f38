//! Symmetry-adapted state-averaged CASSCF on simulated quantum hardware.

pub mod ansatz;
pub mod casscf;
pub mod chem_io;
pub mod error;
pub mod fermion;
pub mod measure;
pub mod optimize;
pub mod pauli;
pub mod rdm;
pub mod scan;
pub mod sim;
pub mod vqe;

pub use error::{Error, Result};
pub use nalgebra;
