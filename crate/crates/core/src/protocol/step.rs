use serde::{Deserialize, Serialize};

use super::parties::ClientTransport;
use super::schedule::{RoundSchedule, Slot};
use super::wire::WireMessage;
use crate::ansatz::{build_circuit, AnsatzConfig, GradientEstimate, ParamVector};
use crate::error::{input_err, Error, Result};
use crate::hamiltonian::{allocate_shots, combine_samples, shot_terms, CostEstimate, PauliObservable};
use crate::mbqc::{
    greedy_coloring, make_computation_round, make_test_round, ClientRound, OpenGraph, ReadoutPattern, RoundOutcome,
    RoundPlan, ALPHABET_SIZE, MAX_PATTERN_WIRES,
};
use crate::rng::{stream, Domain};
use crate::verification::StepBudget;

/// The variational problem being delegated.
#[derive(Debug, Clone, PartialEq)]
pub struct Problem {
    pub ansatz: AnsatzConfig,
    pub obs: PauliObservable,
}

impl Problem {
    pub fn new(ansatz: AnsatzConfig, obs: PauliObservable) -> Result<Self> {
        if ansatz.num_qubits != obs.num_qubits() {
            return Err(input_err!("ansatz has {} qubits, observable {}", ansatz.num_qubits, obs.num_qubits()));
        }
        Ok(Problem { ansatz, obs })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepMode {
    /// Stop at the first test round with a failed trap.
    #[default]
    AbortOnFirstFailure,
    /// Run every round and count detections.
    RunAll,
}

/// What the client learned from delegating a batch of evaluations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DelegationReport {
    pub rounds_run: usize,
    pub test_rounds_run: usize,
    /// Test rounds with at least one failed trap.
    pub failed_test_rounds: usize,
    /// Failed traps over all test rounds.
    pub trap_failures: usize,
    /// Schedule slot of the first failed test round.
    pub first_failure: Option<usize>,
    pub colors: usize,
    /// Per-evaluation estimates, present once every computation round ran.
    pub estimates: Option<Vec<CostEstimate>>,
    /// FNV-1a digest of every `(round id, bits)` pair, in order.
    pub digest: u64,
}

impl DelegationReport {
    pub fn accepted(&self) -> bool {
        self.failed_test_rounds == 0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "verdict", rename_all = "snake_case")]
pub enum StepOutcome {
    Accept { gradient: GradientEstimate },
    Abort { first_failure: Option<usize>, trap_failures: usize },
}

impl StepOutcome {
    pub fn is_accept(&self) -> bool {
        matches!(self, StepOutcome::Accept { .. })
    }
}

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

fn fnv(mut h: u64, bytes: &[u8]) -> u64 {
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(FNV_PRIME);
    }
    h
}

/// Compile one readout pattern per `(evaluation, term)`; all share one graph.
pub fn compile_patterns(problem: &Problem, thetas: &[ParamVector]) -> Result<Vec<Vec<ReadoutPattern>>> {
    if problem.ansatz.num_qubits > MAX_PATTERN_WIRES {
        return Err(Error::TooLarge(format!(
            "{} qubits exceed the delegated-pattern limit of {MAX_PATTERN_WIRES}",
            problem.ansatz.num_qubits
        )));
    }
    let patterns = thetas
        .iter()
        .map(|theta| {
            let circuit = build_circuit(&problem.ansatz, theta)?;
            problem.obs.terms().iter().map(|t| ReadoutPattern::compile(&circuit, &t.pauli)).collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    let first = &patterns.first().and_then(|p| p.first()).ok_or_else(|| input_err!("nothing to evaluate"))?.pattern.graph;
    if patterns.iter().flatten().any(|p| &p.pattern.graph != first) {
        return Err(input_err!("evaluation patterns do not share one graph"));
    }
    Ok(patterns)
}

/// Client end of a session. Round ids increase monotonically over the
/// session's lifetime and key every party's random stream.
pub struct ClientSession<T> {
    transport: T,
    seed: u64,
    next_round: u64,
    graph: Option<OpenGraph>,
}

impl<T: ClientTransport> ClientSession<T> {
    pub fn new(transport: T, seed: u64) -> Self {
        ClientSession { transport, seed, next_round: 0, graph: None }
    }

    pub fn transport(&self) -> &T {
        &self.transport
    }

    pub fn transport_mut(&mut self) -> &mut T {
        &mut self.transport
    }

    pub fn into_transport(self) -> T {
        self.transport
    }

    fn expect_ack(reply: WireMessage) -> Result<()> {
        match reply.into_result()? {
            WireMessage::Ack => Ok(()),
            other => Err(Error::Session(format!("expected ack, got {}", other.name()))),
        }
    }

    fn ensure_session(&mut self, graph: &OpenGraph) -> Result<()> {
        if self.graph.as_ref() == Some(graph) {
            return Ok(());
        }
        let init = WireMessage::SessionInit { graph: graph.clone(), alphabet: ALPHABET_SIZE };
        Self::expect_ack(self.transport.to_referee(&init)?)?;
        Self::expect_ack(self.transport.to_server(&init)?)?;
        self.graph = Some(graph.clone());
        Ok(())
    }

    fn run_round(&mut self, pattern: &ReadoutPattern, plan: RoundPlan, round_id: u64) -> Result<RoundOutcome> {
        let n = pattern.pattern.num_vertices();
        let batch = WireMessage::PrepareBatch { round_id, vertex_count: n, preps: plan.preps() };
        Self::expect_ack(self.transport.to_referee(&batch)?)?;
        let mut client = ClientRound::new(pattern, plan)?;
        while let Some((vertex, angle)) = client.next_angle()? {
            let reply = self.transport.to_server(&WireMessage::MeasureAngle { round_id, vertex, angle })?.into_result()?;
            match reply {
                WireMessage::MeasureResult { round_id: r, vertex: v, bit } if r == round_id && v == vertex => {
                    client.record(vertex, bit)?
                }
                other => return Err(Error::Session(format!("unexpected reply {}", other.name()))),
            }
        }
        let outcome = client.finish()?;
        match self.transport.to_server(&WireMessage::RoundEnd { round_id })?.into_result()? {
            WireMessage::RoundReport { round_id: r, bits } if r == round_id && bits == outcome.bits => Ok(outcome),
            WireMessage::RoundReport { .. } => Err(Error::Session("round report disagrees with reported bits".into())),
            other => Err(Error::Session(format!("unexpected reply {}", other.name()))),
        }
    }

    /// Delegate `shots` samples of each parameter vector in `thetas`,
    /// interleaved with `t` test rounds.
    pub fn delegate(
        &mut self,
        problem: &Problem,
        thetas: &[ParamVector],
        shots: usize,
        t: usize,
        mode: StepMode,
    ) -> Result<DelegationReport> {
        let patterns = compile_patterns(problem, thetas)?;
        let graph = patterns[0][0].pattern.graph.clone();
        let coloring = greedy_coloring(&graph);
        self.ensure_session(&graph)?;

        let base = self.next_round;
        let schedule = RoundSchedule::new(thetas.len(), shots, t, &mut stream(self.seed, Domain::Schedule, base))?;
        self.next_round += schedule.len() as u64;
        let alloc = allocate_shots(&problem.obs, shots)?;
        let terms = shot_terms(&alloc);

        let mut samples: Vec<Vec<Vec<i8>>> =
            (0..thetas.len()).map(|_| alloc.iter().map(|&k| Vec::with_capacity(k)).collect()).collect();
        let mut report = DelegationReport {
            rounds_run: 0,
            test_rounds_run: 0,
            failed_test_rounds: 0,
            trap_failures: 0,
            first_failure: None,
            colors: coloring.num_colors,
            estimates: None,
            digest: FNV_OFFSET,
        };
        for (slot_index, slot) in schedule.slots.iter().enumerate() {
            let round_id = base + slot_index as u64;
            let mut rng = stream(self.seed, Domain::Client, round_id);
            let (pattern, plan) = match *slot {
                Slot::Computation { evaluation, shot } => {
                    let p = &patterns[evaluation][terms[shot]];
                    (p, make_computation_round(graph.num_vertices, &mut rng))
                }
                Slot::Test => (&patterns[0][0], make_test_round(&graph, &coloring, &mut rng)?),
            };
            let outcome = self.run_round(pattern, plan, round_id)?;
            report.rounds_run += 1;
            report.digest = fnv(fnv(report.digest, &round_id.to_le_bytes()), &outcome.bits);
            match *slot {
                Slot::Computation { evaluation, shot } => {
                    let sample = outcome.sample.ok_or_else(|| Error::Session("computation round without sample".into()))?;
                    samples[evaluation][terms[shot]].push(sample);
                }
                Slot::Test => {
                    report.test_rounds_run += 1;
                    let failed = outcome.trap_failures();
                    if failed > 0 {
                        report.failed_test_rounds += 1;
                        report.trap_failures += failed;
                        report.first_failure.get_or_insert(slot_index);
                        if mode == StepMode::AbortOnFirstFailure {
                            break;
                        }
                    }
                }
            }
        }
        if report.rounds_run == schedule.len() {
            report.estimates =
                Some(samples.iter().map(|s| combine_samples(&problem.obs, s)).collect::<Result<Vec<_>>>()?);
        }
        Self::expect_ack(self.transport.to_server(&WireMessage::StepVerdict { accept: report.accepted() })?)?;
        Ok(report)
    }
}

/// The `2 N_P` shifted parameter vectors, `+` before `-` per component.
pub fn shifted_parameters(theta: &ParamVector) -> Vec<ParamVector> {
    (0..theta.len())
        .flat_map(|i| [theta.shifted(i, std::f64::consts::FRAC_PI_2), theta.shifted(i, -std::f64::consts::FRAC_PI_2)])
        .collect()
}

/// One verified gradient step over a delegated session.
pub fn run_step<T: ClientTransport>(
    session: &mut ClientSession<T>,
    problem: &Problem,
    theta: &ParamVector,
    budget: &StepBudget,
    mode: StepMode,
) -> Result<(StepOutcome, DelegationReport)> {
    let n_p = problem.ansatz.num_params();
    if theta.len() != n_p || budget.num_params != n_p || budget.d != 2 * n_p * budget.shots {
        return Err(input_err!("step budget does not match the problem"));
    }
    let report = session.delegate(problem, &shifted_parameters(theta), budget.shots, budget.t, mode)?;
    let outcome = match (&report.estimates, report.accepted()) {
        (Some(est), true) => {
            let costs: Vec<f64> = est.iter().map(|e| e.value).collect();
            StepOutcome::Accept { gradient: GradientEstimate::from_evaluations(&costs, budget.shots)? }
        }
        _ => StepOutcome::Abort { first_failure: report.first_failure, trap_failures: report.trap_failures },
    };
    Ok((outcome, report))
}

/// Gradient implied by a completed report, whatever the verdict.
pub fn report_gradient(report: &DelegationReport, shots: usize) -> Option<GradientEstimate> {
    let est = report.estimates.as_ref()?;
    let costs: Vec<f64> = est.iter().map(|e| e.value).collect();
    GradientEstimate::from_evaluations(&costs, shots).ok()
}
