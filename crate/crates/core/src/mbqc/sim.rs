//! Lazy graph-state simulation.
//!
//! Only the qubits that are currently needed live in the register. A vertex
//! joins when it or one of its neighbours is about to be measured, and its
//! `CZ` edges are applied as soon as both endpoints are live. Measured qubits
//! are projected out immediately, so the register stays as small as the
//! pattern's measurement front allows.

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::graph::OpenGraph;
use super::pattern::{adjusted_angle, MeasurementPattern};
use crate::error::{input_err, Error, Result};
use crate::quantum::{Matrix2, StateVector};

/// Register size above which the simulator refuses to grow.
pub const MAX_LIVE_QUBITS: usize = 22;

/// Single-qubit state sent by the client.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Prep {
    /// `(|0> + e^{i angle}|1>) / sqrt 2`.
    Plus { angle: f64 },
    /// Computational basis state `|bit>`.
    Basis { bit: u8 },
}

impl Prep {
    pub fn amplitudes(self) -> (Complex64, Complex64) {
        let r = std::f64::consts::FRAC_1_SQRT_2;
        match self {
            Prep::Plus { angle } => (Complex64::new(r, 0.0), Complex64::from_polar(r, angle)),
            Prep::Basis { bit: 0 } => (Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.0)),
            Prep::Basis { .. } => (Complex64::new(0.0, 0.0), Complex64::new(1.0, 0.0)),
        }
    }
}

/// Graph state built on demand from per-vertex single-qubit inputs.
#[derive(Debug, Clone)]
pub struct GraphSim {
    adjacency: Vec<Vec<usize>>,
    inputs: Vec<(Complex64, Complex64)>,
    /// Register holds a fixed `|0>` anchor at position 0 so it never empties.
    state: StateVector,
    /// Vertex at register position `i + 1`.
    live: Vec<usize>,
    active: Vec<bool>,
    measured: Vec<bool>,
    peak: usize,
}

impl GraphSim {
    /// `inputs[v]` is the (unnormalized allowed) single-qubit state of vertex `v`.
    pub fn new(graph: &OpenGraph, inputs: Vec<(Complex64, Complex64)>) -> Result<Self> {
        if inputs.len() != graph.num_vertices {
            return Err(input_err!("expected {} qubit states, got {}", graph.num_vertices, inputs.len()));
        }
        let inputs = inputs
            .into_iter()
            .map(|(a, b)| {
                let n = (a.norm_sqr() + b.norm_sqr()).sqrt();
                if n == 0.0 || !n.is_finite() {
                    Err(input_err!("qubit state must be a non-zero finite vector"))
                } else {
                    Ok((a / n, b / n))
                }
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(GraphSim {
            adjacency: graph.adjacency(),
            inputs,
            state: StateVector::zero(1)?,
            live: Vec::new(),
            active: vec![false; graph.num_vertices],
            measured: vec![false; graph.num_vertices],
            peak: 0,
        })
    }

    pub fn from_preps(graph: &OpenGraph, preps: &[Prep]) -> Result<Self> {
        Self::new(graph, preps.iter().map(|p| p.amplitudes()).collect())
    }

    fn position(&self, v: usize) -> usize {
        1 + self.live.iter().position(|&u| u == v).expect("vertex is live")
    }

    fn activate(&mut self, v: usize) -> Result<()> {
        if self.active[v] {
            return Ok(());
        }
        if self.live.len() + 1 > MAX_LIVE_QUBITS {
            return Err(Error::TooLarge(format!("pattern needs more than {MAX_LIVE_QUBITS} simultaneous qubits")));
        }
        let (a, b) = self.inputs[v];
        self.state.push_qubit(a, b);
        self.live.push(v);
        self.active[v] = true;
        self.peak = self.peak.max(self.live.len());
        let pos = self.live.len();
        for i in 0..self.adjacency[v].len() {
            let u = self.adjacency[v][i];
            if self.active[u] && !self.measured[u] {
                let pu = self.position(u);
                self.state.apply_cz(pu, pos)?;
            }
        }
        Ok(())
    }

    fn ready(&mut self, v: usize) -> Result<()> {
        if self.measured[v] {
            return Err(input_err!("vertex {v} was already measured"));
        }
        self.activate(v)?;
        for i in 0..self.adjacency[v].len() {
            let u = self.adjacency[v][i];
            if self.measured[u] {
                continue;
            }
            self.activate(u)?;
        }
        Ok(())
    }

    /// Measure `v` in the XY plane at `angle` and return the bit (0 for `+`).
    pub fn measure<R: Rng + ?Sized>(&mut self, v: usize, angle: f64, rng: &mut R) -> Result<u8> {
        self.ready(v)?;
        let pos = self.position(v);
        let bit = self.state.measure_xy_and_remove(pos, angle, rng)?;
        self.retire(v);
        Ok(bit)
    }

    /// Probability of outcome 0 if `v` were measured now at `angle`.
    pub fn outcome_probability(&mut self, v: usize, angle: f64) -> Result<f64> {
        self.ready(v)?;
        self.state.xy_outcome_probability(self.position(v), angle)
    }

    fn retire(&mut self, v: usize) {
        let idx = self.live.iter().position(|&u| u == v).expect("vertex is live");
        self.live.remove(idx);
        self.measured[v] = true;
    }

    /// Largest number of simultaneously live vertex qubits so far.
    pub fn peak_live(&self) -> usize {
        self.peak
    }

    /// Joint state of `vertices` (in that order) once every other vertex has
    /// been measured.
    pub fn remaining_state(&mut self, vertices: &[usize]) -> Result<StateVector> {
        for &v in vertices {
            self.ready(v)?;
        }
        if self.live.len() != vertices.len() {
            return Err(input_err!("{} vertices still live, {} requested", self.live.len(), vertices.len()));
        }
        let n = vertices.len();
        let shifts: Vec<usize> = vertices.iter().map(|&v| self.live.len() - self.position(v)).collect();
        let amps = self.state.amplitudes();
        let out = (0..1usize << n)
            .map(|i| {
                let reg = (0..n)
                    .filter(|&k| i & (1 << (n - 1 - k)) != 0)
                    .fold(0usize, |acc, k| acc | (1 << shifts[k]));
                amps[reg]
            })
            .collect();
        StateVector::from_amplitudes(out)
    }
}

fn pauli_x() -> Matrix2 {
    let (o, l) = (Complex64::new(0.0, 0.0), Complex64::new(1.0, 0.0));
    [[o, l], [l, o]]
}

fn pauli_z() -> Matrix2 {
    let (o, l) = (Complex64::new(0.0, 0.0), Complex64::new(1.0, 0.0));
    [[l, o], [o, -l]]
}

/// Run `pattern` non-blindly on product inputs (one per input vertex, in
/// order; non-input vertices start in `|+>`), apply the output corrections,
/// and return the output state in output order.
pub fn simulate_pattern<R: Rng + ?Sized>(
    pattern: &MeasurementPattern,
    inputs: &[(Complex64, Complex64)],
    rng: &mut R,
) -> Result<StateVector> {
    let g = &pattern.graph;
    if inputs.len() != g.inputs.len() {
        return Err(input_err!("expected {} input states, got {}", g.inputs.len(), inputs.len()));
    }
    let mut states = vec![Prep::Plus { angle: 0.0 }.amplitudes(); g.num_vertices];
    for (&v, &s) in g.inputs.iter().zip(inputs) {
        states[v] = s;
    }
    let mut sim = GraphSim::new(g, states)?;
    let mut outcomes = vec![0u8; g.num_vertices];
    for &v in &g.measurement_order {
        let angle = adjusted_angle(pattern, v, &outcomes);
        outcomes[v] = sim.measure(v, angle, rng)?;
    }
    let mut out = sim.remaining_state(&g.outputs)?;
    let parity = |deps: &[usize]| deps.iter().fold(0u8, |acc, &u| acc ^ outcomes[u]);
    for (w, &o) in g.outputs.iter().enumerate() {
        if parity(&pattern.x_deps[o]) == 1 {
            out.apply_single(w, &pauli_x())?;
        }
        if parity(&pattern.z_deps[o]) == 1 {
            out.apply_single(w, &pauli_z())?;
        }
    }
    Ok(out)
}
