//! Blind computation rounds and trap test rounds.
//!
//! A computation round hides each measurement angle behind a one-time pad:
//! the client prepares `|+_{theta_v}>` and announces
//! `delta_v = phi'_v + theta_v + r_v pi`, then decodes `s_v = b_v xor r_v`.
//! A test round prepares one colour class as traps `|+_{theta_v}>` and every
//! other vertex as a dummy `|d_v>`; a trap measured at `theta_v + r_v pi`
//! returns `r_v xor (parity of its dummy neighbours)` with certainty.

use std::f64::consts::{FRAC_PI_4, PI, TAU};

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::graph::{Coloring, OpenGraph};
use super::pattern::{adjusted_angle, ReadoutPattern};
use super::sim::{GraphSim, Prep};
use crate::attacks::{deviate_measurement, AttackSpec, VertexRole};
use crate::error::{input_err, Result};

/// Size of the blinding alphabet `{k pi/4}`.
pub const ALPHABET_SIZE: u8 = 8;

pub fn alphabet_angle(k: u8) -> f64 {
    f64::from(k % ALPHABET_SIZE) * FRAC_PI_4
}

/// Reduce to `[0, 2 pi)`.
pub fn wrap_angle(a: f64) -> f64 {
    let w = a.rem_euclid(TAU);
    if w >= TAU {
        0.0
    } else {
        w
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RoundKind {
    Computation,
    Test,
}

/// Client-side secrets for one round. Angles are stored as alphabet indices.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RoundPlan {
    Computation {
        theta: Vec<u8>,
        r: Vec<u8>,
    },
    Test {
        trap_color: usize,
        is_trap: Vec<bool>,
        /// Trap angles (zero on dummies).
        theta: Vec<u8>,
        /// Trap pads (zero on dummies).
        r: Vec<u8>,
        /// Dummy states (zero on traps).
        dummy: Vec<u8>,
        /// Angles announced for dummies (zero on traps).
        dummy_angle: Vec<u8>,
    },
}

impl RoundPlan {
    pub fn kind(&self) -> RoundKind {
        match self {
            RoundPlan::Computation { .. } => RoundKind::Computation,
            RoundPlan::Test { .. } => RoundKind::Test,
        }
    }

    pub fn num_vertices(&self) -> usize {
        match self {
            RoundPlan::Computation { theta, .. } | RoundPlan::Test { theta, .. } => theta.len(),
        }
    }

    /// The qubit the client sends for each vertex.
    pub fn preps(&self) -> Vec<Prep> {
        match self {
            RoundPlan::Computation { theta, .. } => {
                theta.iter().map(|&k| Prep::Plus { angle: alphabet_angle(k) }).collect()
            }
            RoundPlan::Test { is_trap, theta, dummy, .. } => is_trap
                .iter()
                .enumerate()
                .map(|(v, &trap)| if trap { Prep::Plus { angle: alphabet_angle(theta[v]) } } else { Prep::Basis { bit: dummy[v] } })
                .collect(),
        }
    }
}

/// Fresh pads: `theta_v` uniform over the alphabet, `r_v` uniform bits.
pub fn make_computation_round<R: Rng + ?Sized>(num_vertices: usize, rng: &mut R) -> RoundPlan {
    let theta = (0..num_vertices).map(|_| rng.random_range(0..ALPHABET_SIZE)).collect();
    let r = (0..num_vertices).map(|_| rng.random_range(0..2u8)).collect();
    RoundPlan::Computation { theta, r }
}

/// Computation round with caller-chosen pads.
pub fn computation_round_with(theta: Vec<u8>, r: Vec<u8>) -> Result<RoundPlan> {
    if theta.len() != r.len() {
        return Err(input_err!("pad lengths differ"));
    }
    if theta.iter().any(|&k| k >= ALPHABET_SIZE) || r.iter().any(|&b| b > 1) {
        return Err(input_err!("pad entries out of range"));
    }
    Ok(RoundPlan::Computation { theta, r })
}

/// Traps on one uniformly chosen colour class, dummies everywhere else.
pub fn make_test_round<R: Rng + ?Sized>(graph: &OpenGraph, coloring: &Coloring, rng: &mut R) -> Result<RoundPlan> {
    if !coloring.is_proper(graph) {
        return Err(input_err!("coloring is not proper for this graph"));
    }
    let n = graph.num_vertices;
    let trap_color = rng.random_range(0..coloring.num_colors);
    let is_trap: Vec<bool> = coloring.color_of.iter().map(|&c| c == trap_color).collect();
    let mut theta = vec![0; n];
    let mut r = vec![0; n];
    let mut dummy = vec![0; n];
    let mut dummy_angle = vec![0; n];
    for v in 0..n {
        if is_trap[v] {
            theta[v] = rng.random_range(0..ALPHABET_SIZE);
            r[v] = rng.random_range(0..2);
        } else {
            dummy[v] = rng.random_range(0..2);
            dummy_angle[v] = rng.random_range(0..ALPHABET_SIZE);
        }
    }
    Ok(RoundPlan::Test { trap_color, is_trap, theta, r, dummy, dummy_angle })
}

/// Per-trap verdicts `(vertex, passed)`, ascending by vertex.
pub fn client_verify_test(graph: &OpenGraph, plan: &RoundPlan, bits: &[u8]) -> Result<Vec<(usize, bool)>> {
    let RoundPlan::Test { is_trap, r, dummy, .. } = plan else {
        return Err(input_err!("trap verification needs a test round"));
    };
    if bits.len() != graph.num_vertices || is_trap.len() != graph.num_vertices {
        return Err(input_err!("round does not match the graph"));
    }
    let adj = graph.adjacency();
    Ok((0..graph.num_vertices)
        .filter(|&v| is_trap[v])
        .map(|v| {
            let flip = adj[v].iter().fold(0u8, |acc, &u| acc ^ dummy[u]);
            (v, bits[v] == r[v] ^ flip)
        })
        .collect())
}

/// What the client learns from one round.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoundOutcome {
    pub kind: RoundKind,
    /// Raw bits reported by the server, by vertex.
    pub bits: Vec<u8>,
    /// Test rounds only.
    pub trap_verdicts: Vec<(usize, bool)>,
    /// Computation rounds only: decoded eigenvalue of the readout string.
    pub sample: Option<i8>,
}

impl RoundOutcome {
    pub fn trap_failures(&self) -> usize {
        self.trap_verdicts.iter().filter(|(_, ok)| !ok).count()
    }
}

/// Client state while a round is in flight. Angles are released one vertex
/// at a time because each may depend on earlier decoded outcomes.
#[derive(Debug, Clone)]
pub struct ClientRound<'a> {
    pattern: &'a ReadoutPattern,
    plan: RoundPlan,
    sequence: Vec<usize>,
    cursor: usize,
    pending: Option<usize>,
    bits: Vec<u8>,
    decoded: Vec<u8>,
}

impl<'a> ClientRound<'a> {
    pub fn new(pattern: &'a ReadoutPattern, plan: RoundPlan) -> Result<Self> {
        let n = pattern.pattern.num_vertices();
        if plan.num_vertices() != n {
            return Err(input_err!("plan covers {} vertices, pattern has {n}", plan.num_vertices()));
        }
        Ok(ClientRound {
            pattern,
            sequence: pattern.pattern.graph.full_sequence(),
            plan,
            cursor: 0,
            pending: None,
            bits: vec![0; n],
            decoded: vec![0; n],
        })
    }

    pub fn plan(&self) -> &RoundPlan {
        &self.plan
    }

    pub fn kind(&self) -> RoundKind {
        self.plan.kind()
    }

    /// Next vertex and the angle to announce for it, or `None` when done.
    pub fn next_angle(&mut self) -> Result<Option<(usize, f64)>> {
        if self.pending.is_some() {
            return Err(input_err!("previous measurement has not been reported"));
        }
        let Some(&v) = self.sequence.get(self.cursor) else {
            return Ok(None);
        };
        let delta = match &self.plan {
            RoundPlan::Computation { theta, r } => {
                let phi = adjusted_angle(&self.pattern.pattern, v, &self.decoded);
                phi + alphabet_angle(theta[v]) + f64::from(r[v]) * PI
            }
            RoundPlan::Test { is_trap, theta, r, dummy_angle, .. } => {
                if is_trap[v] {
                    alphabet_angle(theta[v]) + f64::from(r[v]) * PI
                } else {
                    alphabet_angle(dummy_angle[v])
                }
            }
        };
        self.pending = Some(v);
        Ok(Some((v, wrap_angle(delta))))
    }

    pub fn record(&mut self, vertex: usize, bit: u8) -> Result<()> {
        if self.pending != Some(vertex) {
            return Err(input_err!("unexpected report for vertex {vertex}"));
        }
        if bit > 1 {
            return Err(input_err!("measurement bit must be 0 or 1, got {bit}"));
        }
        self.bits[vertex] = bit;
        self.decoded[vertex] = match &self.plan {
            RoundPlan::Computation { r, .. } => bit ^ r[vertex],
            RoundPlan::Test { .. } => bit,
        };
        self.pending = None;
        self.cursor += 1;
        Ok(())
    }

    pub fn is_done(&self) -> bool {
        self.cursor == self.sequence.len()
    }

    pub fn finish(self) -> Result<RoundOutcome> {
        if !self.is_done() {
            return Err(input_err!("round finished early at step {}", self.cursor));
        }
        let kind = self.plan.kind();
        let (trap_verdicts, sample) = match kind {
            RoundKind::Test => (client_verify_test(&self.pattern.pattern.graph, &self.plan, &self.bits)?, None),
            RoundKind::Computation => (Vec::new(), Some(self.pattern.eigenvalue(&self.decoded))),
        };
        Ok(RoundOutcome { kind, bits: self.bits, trap_verdicts, sample })
    }
}

/// Per-vertex role as the server sees it.
pub fn vertex_roles(graph: &OpenGraph) -> Vec<VertexRole> {
    let mut roles = vec![VertexRole::Internal; graph.num_vertices];
    for &o in &graph.outputs {
        roles[o] = VertexRole::Output;
    }
    roles
}

/// Run one round end to end in process: the client announces angles, the
/// server measures at the announced angle or its deviation, and the quantum
/// state evolves in a [`GraphSim`] driven by `rng`.
pub fn server_execute<R: Rng + ?Sized>(
    pattern: &ReadoutPattern,
    plan: RoundPlan,
    attack: &AttackSpec,
    attacked: bool,
    rng: &mut R,
) -> Result<RoundOutcome> {
    let graph = &pattern.pattern.graph;
    let roles = vertex_roles(graph);
    let mut sim = GraphSim::from_preps(graph, &plan.preps())?;
    let mut client = ClientRound::new(pattern, plan)?;
    while let Some((v, delta)) = client.next_angle()? {
        let angle = deviate_measurement(delta, attack, roles[v], attacked);
        let bit = sim.measure(v, angle, rng)?;
        client.record(v, bit)?;
    }
    client.finish()
}
