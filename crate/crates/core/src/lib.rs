pub mod coloring;
pub mod error;
pub mod evolution;
pub mod fock;
pub mod hamiltonian;
pub mod harness;
pub mod operator;
pub mod protocol;
pub mod reshape;
pub mod rpe;
pub mod seed;
pub mod verify;

pub use error::{Error, Result};
