//! Measurement-based execution layer: open graphs, circuit compilation,
//! graph-state simulation and the blind round protocol.

mod graph;
mod pattern;
mod round;
mod sim;

pub use graph::{greedy_coloring, Coloring, OpenGraph};
pub use pattern::{adjusted_angle, circuit_to_pattern, MeasurementPattern, ReadoutPattern, MAX_PATTERN_WIRES};
pub use sim::{simulate_pattern, GraphSim, Prep, MAX_LIVE_QUBITS};
pub use round::{
    alphabet_angle, client_verify_test, computation_round_with, make_computation_round, make_test_round,
    server_execute, vertex_roles, wrap_angle, ClientRound, RoundKind, RoundOutcome, RoundPlan, ALPHABET_SIZE,
};
