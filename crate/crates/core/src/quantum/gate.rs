use serde::{Deserialize, Serialize};

use crate::error::{input_err, Result};

/// The gate alphabet of the simulator. Angles are in radians.
///
/// Rotation conventions: `Rx(a) = exp(-i a X / 2)` and likewise for `Ry`, `Rz`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "gate", rename_all = "lowercase")]
pub enum Gate {
    Rx { qubit: usize, angle: f64 },
    Ry { qubit: usize, angle: f64 },
    Rz { qubit: usize, angle: f64 },
    H { qubit: usize },
    Cz { a: usize, b: usize },
    Cnot { control: usize, target: usize },
}

impl Gate {
    pub fn targets(&self) -> Vec<usize> {
        match *self {
            Gate::Rx { qubit, .. } | Gate::Ry { qubit, .. } | Gate::Rz { qubit, .. } | Gate::H { qubit } => {
                vec![qubit]
            }
            Gate::Cz { a, b } => vec![a, b],
            Gate::Cnot { control, target } => vec![control, target],
        }
    }

    pub fn angle(&self) -> Option<f64> {
        match *self {
            Gate::Rx { angle, .. } | Gate::Ry { angle, .. } | Gate::Rz { angle, .. } => Some(angle),
            _ => None,
        }
    }

    /// Check targets are in range and distinct for a register of `num_qubits`.
    pub fn validate(&self, num_qubits: usize) -> Result<()> {
        let targets = self.targets();
        if let Some(&q) = targets.iter().find(|&&q| q >= num_qubits) {
            return Err(input_err!("gate target {q} out of range for {num_qubits} qubits"));
        }
        if targets.len() == 2 && targets[0] == targets[1] {
            return Err(input_err!("two-qubit gate with repeated target {}", targets[0]));
        }
        Ok(())
    }
}
