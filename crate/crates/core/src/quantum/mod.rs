//! Minimal dense statevector engine.
//!
//! Conventions: qubit 0 is the most significant bit of a basis index, the
//! initial register is `|0...0>`, and single-qubit rotations are
//! `R_P(a) = exp(-i a P / 2)`.

mod eigen;
mod gate;
mod hermitian;
mod state;

pub use gate::Gate;
pub use hermitian::{ground_energy, DenseHermitian, MAX_DENSE_QUBITS};
pub use state::{h_matrix, rx_matrix, ry_matrix, rz_matrix, Matrix2, StateVector};
