//! Variational search for quantum error-correcting codes adapted to a noise
//! model: dense density-matrix simulation, noise channels, parameterized
//! circuits, distinguishability and fidelity losses, L-BFGS training with
//! adjoint gradients, and a Pauli-error probe for the distance of a code.

pub mod ansatz;
pub mod channels;
pub mod codes;
pub mod designs;
pub mod error;
pub mod loss;
pub mod qmat;
pub mod train;

pub use error::{Error, Result};
