//! Circuit to measurement-pattern compilation.
//!
//! Every gate is rewritten into the `{J(a), CZ}` basis with
//! `J(a) = H diag(1, e^{ia})`:
//!
//! - `H = J(0)`, `RZ(a) ~ J(0) J(a)`, `RX(a) ~ J(a) J(0)`,
//! - `RY(a) = RZ(pi/2) RX(a) RZ(-pi/2)`,
//! - `CNOT(c, t) = H_t CZ(c, t) H_t`.
//!
//! A `J(a)` on a wire whose current vertex is `v` adds a fresh vertex `u`, the
//! edge `(v, u)` and measures `v` in the XY plane at angle `-a`; the outcome
//! leaves an `X` byproduct on `u`. Byproducts are tracked as parity sets
//! of earlier outcomes and become each vertex's `x_deps`/`z_deps`. A vertex
//! with byproduct `X^a Z^b` is measured at `(-1)^a phi + b pi`.

use std::collections::BTreeSet;
use std::f64::consts::{FRAC_PI_2, PI};

use serde::{Deserialize, Serialize};

use super::graph::OpenGraph;
use crate::error::{input_err, Error, Result};
use crate::hamiltonian::{Pauli, PauliString};
use crate::quantum::Gate;

/// Widest circuit the compiler accepts.
pub const MAX_PATTERN_WIRES: usize = 6;

/// Graph, per-vertex XY-plane angles and correction dependencies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "PatternJson", try_from = "PatternJson")]
pub struct MeasurementPattern {
    pub graph: OpenGraph,
    /// Angle per vertex. Output vertices carry their readout angle when the
    /// pattern measures its outputs, and `0` otherwise.
    pub angles: Vec<f64>,
    /// For measured vertices: outcomes whose parity flips the angle sign.
    /// For outputs: the pending `X` byproduct.
    pub x_deps: Vec<Vec<usize>>,
    /// For measured vertices: outcomes whose parity adds `pi`.
    /// For outputs: the pending `Z` byproduct.
    pub z_deps: Vec<Vec<usize>>,
}

#[derive(Serialize, Deserialize)]
struct PatternJson {
    vertices: Vec<usize>,
    edges: Vec<(usize, usize)>,
    inputs: Vec<usize>,
    outputs: Vec<usize>,
    order: Vec<usize>,
    angles: Vec<f64>,
    x_deps: Vec<Vec<usize>>,
    z_deps: Vec<Vec<usize>>,
}

impl From<MeasurementPattern> for PatternJson {
    fn from(p: MeasurementPattern) -> Self {
        PatternJson {
            vertices: (0..p.graph.num_vertices).collect(),
            edges: p.graph.edges,
            inputs: p.graph.inputs,
            outputs: p.graph.outputs,
            order: p.graph.measurement_order,
            angles: p.angles,
            x_deps: p.x_deps,
            z_deps: p.z_deps,
        }
    }
}

impl TryFrom<PatternJson> for MeasurementPattern {
    type Error = Error;

    fn try_from(j: PatternJson) -> Result<Self> {
        if j.vertices != (0..j.vertices.len()).collect::<Vec<_>>() {
            return Err(input_err!("vertices must be 0..n"));
        }
        let graph = OpenGraph::new(j.vertices.len(), j.edges, j.inputs, j.outputs, j.order)?;
        let p = MeasurementPattern { graph, angles: j.angles, x_deps: j.x_deps, z_deps: j.z_deps };
        p.validate()?;
        Ok(p)
    }
}

impl MeasurementPattern {
    pub fn num_vertices(&self) -> usize {
        self.graph.num_vertices
    }

    /// Dependencies may only point at vertices measured earlier.
    pub fn validate(&self) -> Result<()> {
        let n = self.graph.num_vertices;
        if self.angles.len() != n || self.x_deps.len() != n || self.z_deps.len() != n {
            return Err(input_err!("per-vertex arrays must have {n} entries"));
        }
        let mut position = vec![usize::MAX; n];
        for (i, &v) in self.graph.measurement_order.iter().enumerate() {
            position[v] = i;
        }
        for v in 0..n {
            let limit = if position[v] == usize::MAX { self.graph.measurement_order.len() } else { position[v] };
            for &u in self.x_deps[v].iter().chain(&self.z_deps[v]) {
                if u >= n || position[u] >= limit {
                    return Err(input_err!("vertex {v} depends on {u}, which is not measured before it"));
                }
            }
        }
        Ok(())
    }
}

/// Elementary operation after rewriting gates.
#[derive(Debug, Clone, Copy, PartialEq)]
enum Op {
    /// `structural` marks `J(0)` factors that come from the rewrite rules
    /// themselves; only these may cancel, so the graph shape never depends on
    /// parameter values.
    J { wire: usize, angle: f64, structural: bool },
    Cz(usize, usize),
}

fn j(wire: usize, angle: f64) -> Op {
    Op::J { wire, angle, structural: false }
}

fn j0(wire: usize) -> Op {
    Op::J { wire, angle: 0.0, structural: true }
}

fn rewrite(gate: &Gate) -> Vec<Op> {
    match *gate {
        Gate::H { qubit } => vec![j0(qubit)],
        Gate::Rz { qubit, angle } => vec![j(qubit, angle), j0(qubit)],
        Gate::Rx { qubit, angle } => vec![j0(qubit), j(qubit, angle)],
        Gate::Ry { qubit, angle } => {
            let mut ops = rewrite(&Gate::Rz { qubit, angle: -FRAC_PI_2 });
            ops.extend(rewrite(&Gate::Rx { qubit, angle }));
            ops.extend(rewrite(&Gate::Rz { qubit, angle: FRAC_PI_2 }));
            ops
        }
        Gate::Cz { a, b } => vec![Op::Cz(a, b)],
        Gate::Cnot { control, target } => vec![j0(target), Op::Cz(control, target), j0(target)],
    }
}

fn touches(op: &Op, wire: usize) -> bool {
    match *op {
        Op::J { wire: w, .. } => w == wire,
        Op::Cz(a, b) => a == wire || b == wire,
    }
}

/// Remove pairs of structural `J(0)` that are adjacent on their wire.
fn cancel_structural_pairs(mut ops: Vec<Op>) -> Vec<Op> {
    loop {
        let mut removed = false;
        let mut i = 0;
        while i < ops.len() {
            if let Op::J { wire, structural: true, .. } = ops[i] {
                if let Some(k) = (i + 1..ops.len()).find(|&k| touches(&ops[k], wire)) {
                    if matches!(ops[k], Op::J { structural: true, .. }) {
                        ops.remove(k);
                        ops.remove(i);
                        removed = true;
                        continue;
                    }
                }
            }
            i += 1;
        }
        if !removed {
            return ops;
        }
    }
}

fn toggle(set: &mut BTreeSet<usize>, other: &BTreeSet<usize>) {
    for &v in other {
        if !set.remove(&v) {
            set.insert(v);
        }
    }
}

struct Builder {
    num_vertices: usize,
    edges: BTreeSet<(usize, usize)>,
    order: Vec<usize>,
    angles: Vec<f64>,
    x_deps: Vec<Vec<usize>>,
    z_deps: Vec<Vec<usize>>,
    current: Vec<usize>,
    byproduct_x: Vec<BTreeSet<usize>>,
    byproduct_z: Vec<BTreeSet<usize>>,
}

impl Builder {
    fn new(wires: usize) -> Self {
        Builder {
            num_vertices: wires,
            edges: BTreeSet::new(),
            order: Vec::new(),
            angles: vec![0.0; wires],
            x_deps: vec![Vec::new(); wires],
            z_deps: vec![Vec::new(); wires],
            current: (0..wires).collect(),
            byproduct_x: vec![BTreeSet::new(); wires],
            byproduct_z: vec![BTreeSet::new(); wires],
        }
    }

    fn toggle_edge(&mut self, a: usize, b: usize) {
        let e = (a.min(b), a.max(b));
        if !self.edges.remove(&e) {
            self.edges.insert(e);
        }
    }

    fn apply(&mut self, op: Op) {
        match op {
            Op::J { wire, angle, .. } => {
                let v = self.current[wire];
                let u = self.num_vertices;
                self.num_vertices += 1;
                self.angles.push(0.0);
                self.x_deps.push(Vec::new());
                self.z_deps.push(Vec::new());
                self.toggle_edge(v, u);

                self.angles[v] = -angle;
                self.x_deps[v] = self.byproduct_x[wire].iter().copied().collect();
                self.z_deps[v] = self.byproduct_z[wire].iter().copied().collect();
                self.order.push(v);

                let old_x = std::mem::take(&mut self.byproduct_x[wire]);
                self.byproduct_x[wire] = BTreeSet::from([v]);
                self.byproduct_z[wire] = old_x;
                self.current[wire] = u;
            }
            Op::Cz(a, b) => {
                self.toggle_edge(self.current[a], self.current[b]);
                let (xa, xb) = (self.byproduct_x[a].clone(), self.byproduct_x[b].clone());
                toggle(&mut self.byproduct_z[a], &xb);
                toggle(&mut self.byproduct_z[b], &xa);
            }
        }
    }

    fn finish(mut self) -> Result<MeasurementPattern> {
        let outputs = self.current.clone();
        for (w, &o) in outputs.iter().enumerate() {
            self.x_deps[o] = self.byproduct_x[w].iter().copied().collect();
            self.z_deps[o] = self.byproduct_z[w].iter().copied().collect();
        }
        let graph = OpenGraph::new(
            self.num_vertices,
            self.edges,
            (0..outputs.len()).collect(),
            outputs,
            self.order,
        )?;
        let p = MeasurementPattern { graph, angles: self.angles, x_deps: self.x_deps, z_deps: self.z_deps };
        p.validate()?;
        Ok(p)
    }
}

fn compile_ops(circuit: &[Gate], num_qubits: usize) -> Result<Vec<Op>> {
    if num_qubits == 0 {
        return Err(input_err!("circuit needs at least one wire"));
    }
    if num_qubits > MAX_PATTERN_WIRES {
        return Err(Error::TooLarge(format!("{num_qubits} wires exceeds the limit of {MAX_PATTERN_WIRES}")));
    }
    let mut ops = Vec::new();
    for g in circuit {
        g.validate(num_qubits)?;
        ops.extend(rewrite(g));
    }
    Ok(ops)
}

/// Compile a circuit acting on the input vertices `0..num_qubits`. Outputs are
/// left unmeasured; output `w` carries wire `w`.
pub fn circuit_to_pattern(circuit: &[Gate], num_qubits: usize) -> Result<MeasurementPattern> {
    let ops = cancel_structural_pairs(compile_ops(circuit, num_qubits)?);
    let mut b = Builder::new(num_qubits);
    ops.into_iter().for_each(|op| b.apply(op));
    b.finish()
}

/// Basis-change `J` angle and XY measurement angle that read out `letter`.
fn readout_setting(letter: Pauli) -> (f64, f64) {
    match letter {
        Pauli::X => (-FRAC_PI_2, FRAC_PI_2),
        Pauli::Y => (PI, FRAC_PI_2),
        Pauli::Z | Pauli::I => (0.0, 0.0),
    }
}

/// Pattern that prepares `circuit |0...0>` from `|+>` inputs and measures
/// every vertex, outputs included, so that the outcome parity over the
/// non-identity wires of `readout` is a sample of that Pauli string.
///
/// The graph depends only on the gate sequence shape, never on angles or on
/// `readout`.
#[derive(Debug, Clone, PartialEq)]
pub struct ReadoutPattern {
    pub pattern: MeasurementPattern,
    pub readout: PauliString,
}

impl ReadoutPattern {
    pub fn compile(circuit: &[Gate], readout: &PauliString) -> Result<Self> {
        let n = readout.len();
        let mut ops: Vec<Op> = (0..n).map(j0).collect();
        ops.extend(compile_ops(circuit, n)?);
        let mut ops = cancel_structural_pairs(ops);
        let settings: Vec<(f64, f64)> = readout.letters().iter().map(|&p| readout_setting(p)).collect();
        ops.extend(settings.iter().enumerate().map(|(w, &(a, _))| j(w, a)));

        let mut b = Builder::new(n);
        ops.into_iter().for_each(|op| b.apply(op));
        let mut pattern = b.finish()?;
        for (w, &(_, phi)) in settings.iter().enumerate() {
            pattern.angles[pattern.graph.outputs[w]] = phi;
        }
        Ok(ReadoutPattern { pattern, readout: readout.clone() })
    }

    /// `+1`/`-1` eigenvalue from decoded outcomes (indexed by vertex).
    pub fn eigenvalue(&self, decoded: &[u8]) -> i8 {
        let parity = self
            .readout
            .support()
            .map(|w| decoded[self.pattern.graph.outputs[w]])
            .fold(0u8, |acc, s| acc ^ s);
        if parity == 0 {
            1
        } else {
            -1
        }
    }
}

/// Angle actually used for a measured vertex given decoded earlier outcomes.
pub fn adjusted_angle(pattern: &MeasurementPattern, vertex: usize, decoded: &[u8]) -> f64 {
    let parity = |deps: &[usize]| deps.iter().fold(0u8, |acc, &u| acc ^ decoded[u]);
    let base = pattern.angles[vertex];
    let signed = if parity(&pattern.x_deps[vertex]) == 1 { -base } else { base };
    if parity(&pattern.z_deps[vertex]) == 1 {
        signed + PI
    } else {
        signed
    }
}
