//! Experiment runners shared by the command-line tool and the acceptance
//! suite: three-arm descent on a TFIM lattice and the per-step
//! error-versus-detection grid.

use std::f64::consts::PI;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::ansatz::{exact_gradient, relative_error, AnsatzConfig, ParamVector};
use crate::attacks::{AttackSpec, ShiftScope};
use crate::error::{input_err, Result};
use crate::exec::{map_indexed, Execution};
use crate::hamiltonian::{build_tfim, LatticeSpec};
use crate::mbqc::greedy_coloring;
use crate::protocol::{
    compile_patterns, report_gradient, run_vqa, shifted_parameters, AbstractExecutor, ClientSession, ClientTransport,
    FinalVerdict, InProcess, Problem, RunConfig, RunTranscript, StepMode,
};
use crate::rng::{stream, Domain};
use crate::verification::StepBudget;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Arm {
    AttackFree,
    NoTraps,
    Traps,
}

impl Arm {
    pub const ALL: [Arm; 3] = [Arm::AttackFree, Arm::NoTraps, Arm::Traps];

    pub fn name(self) -> &'static str {
        match self {
            Arm::AttackFree => "attack_free",
            Arm::NoTraps => "no_traps",
            Arm::Traps => "traps",
        }
    }
}

/// Settings of the three-arm descent experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VqeExperiment {
    pub lattice: LatticeSpec,
    pub h: f64,
    pub layers: usize,
    pub run: RunConfig,
    pub attack: AttackSpec,
    pub seeds: Vec<u64>,
}

impl Default for VqeExperiment {
    /// 2x2 lattice at `h = 0.2`, two layers, 1000 shots, `alpha = 0.2`,
    /// perturbation with `p = 0.7` and `delta = 1`, five seeds. The
    /// convergence tolerance sits above the shot-noise floor of `||g_hat||_1`
    /// (about 0.5 at 1000 shots) and below the perturbed one.
    fn default() -> Self {
        VqeExperiment {
            lattice: LatticeSpec { rows: 2, cols: 2 },
            h: 0.2,
            layers: 2,
            run: RunConfig { n_iter: 150, alpha: 0.2, shots: 1000, e_th: 0.2, tol_g: Some(0.8), ..RunConfig::default() },
            attack: AttackSpec::GradientPerturb { p: 0.7, delta: 1.0 },
            seeds: (0..5).collect(),
        }
    }
}

impl VqeExperiment {
    pub fn problem(&self) -> Result<Problem> {
        let obs = build_tfim(self.lattice, self.h);
        Problem::new(AnsatzConfig::new(self.lattice.num_sites(), self.layers)?, obs)
    }

    pub fn validate(&self) -> Result<()> {
        LatticeSpec::new(self.lattice.rows, self.lattice.cols)?;
        self.run.validate()?;
        self.attack.validate()?;
        if matches!(self.attack, AttackSpec::AngleShift { .. }) {
            return Err(input_err!("the descent experiment takes gradient or sample attacks"));
        }
        if self.seeds.is_empty() {
            return Err(input_err!("at least one seed is required"));
        }
        Ok(())
    }
}

/// One step of one arm.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VqeRow {
    pub seed: u64,
    pub arm: Arm,
    pub step: usize,
    pub f_hat: f64,
    pub f_exact: f64,
    pub reruns: usize,
    pub grad_norm1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmSummary {
    pub seed: u64,
    pub arm: Arm,
    pub final_f_exact: f64,
    pub total_reruns: usize,
    pub verdict: FinalVerdict,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VqeResults {
    pub e0: f64,
    pub rows: Vec<VqeRow>,
    pub summaries: Vec<ArmSummary>,
    /// Full transcripts, aligned with `summaries`.
    #[serde(skip)]
    pub transcripts: Vec<RunTranscript>,
}

impl VqeResults {
    /// Mean over seeds of `|final f_exact - E0|` for one arm.
    pub fn mean_final_gap(&self, arm: Arm) -> f64 {
        let gaps: Vec<f64> =
            self.summaries.iter().filter(|s| s.arm == arm).map(|s| (s.final_f_exact - self.e0).abs()).collect();
        gaps.iter().sum::<f64>() / gaps.len() as f64
    }

    /// Mean `f_exact` per step over seeds, for one arm.
    pub fn mean_curve(&self, arm: Arm) -> Vec<(usize, f64)> {
        let mut acc: std::collections::BTreeMap<usize, (f64, usize)> = Default::default();
        for r in self.rows.iter().filter(|r| r.arm == arm) {
            let e = acc.entry(r.step).or_default();
            e.0 += r.f_exact;
            e.1 += 1;
        }
        acc.into_iter().map(|(k, (s, n))| (k, s / n as f64)).collect()
    }
}

/// Run one arm for one seed.
pub fn run_arm(exp: &VqeExperiment, problem: &Problem, arm: Arm, seed: u64) -> Result<RunTranscript> {
    let mut executor = AbstractExecutor {
        problem,
        shots: exp.run.shots,
        e_th: exp.run.e_th,
        verify: arm == Arm::Traps,
        attack: if arm == Arm::AttackFree { AttackSpec::None } else { exp.attack },
        seed,
    };
    // The initial point depends only on the seed, so all arms start together.
    run_vqa(&exp.run, problem, &mut executor, seed)
}

/// Every arm for every seed. Rows come out ordered by seed, then arm, then
/// step, whatever the execution mode.
pub fn run_tfim_vqe(exp: &VqeExperiment, mode: Execution) -> Result<VqeResults> {
    exp.validate()?;
    let problem = exp.problem()?;
    let e0 = problem.obs.to_dense()?.ground_energy()?;
    let jobs: Vec<(u64, Arm)> = exp.seeds.iter().flat_map(|&s| Arm::ALL.map(|a| (s, a))).collect();
    let transcripts = map_indexed(jobs.len(), mode, |i| run_arm(exp, &problem, jobs[i].1, jobs[i].0));
    let mut rows = Vec::new();
    let mut summaries = Vec::with_capacity(jobs.len());
    let mut kept = Vec::with_capacity(jobs.len());
    for (&(seed, arm), t) in jobs.iter().zip(transcripts) {
        let t = t?;
        rows.extend(t.steps.iter().filter(|s| s.accepted).map(|s| VqeRow {
            seed,
            arm,
            step: s.step,
            f_hat: s.f_hat,
            f_exact: s.f_exact,
            reruns: s.reruns,
            grad_norm1: s.grad_norm1,
        }));
        summaries.push(ArmSummary {
            seed,
            arm,
            final_f_exact: t.f_exact_final,
            total_reruns: t.total_reruns(),
            verdict: t.verdict.clone(),
        });
        kept.push(t);
    }
    Ok(VqeResults { e0, rows, summaries, transcripts: kept })
}

/// Settings of the per-step detection grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionExperiment {
    pub lattice: LatticeSpec,
    pub h: f64,
    pub layers: usize,
    /// Computation rounds per step; must be a multiple of `2 N_P`.
    pub d: usize,
    pub t: usize,
    pub e_th: f64,
    /// Parameters are redrawn until the exact `||g||_1` reaches this value.
    pub eps0: f64,
    pub p_attack: Vec<f64>,
    pub angle_shift: Vec<f64>,
    pub runs: usize,
    pub seed: u64,
}

impl Default for DetectionExperiment {
    /// Two-site chain, two layers, `d = 4000`, `t = 50`. Parameters must have
    /// `||g||_1 >= 0.7` (half the one-norm) so that shot noise alone stays
    /// below `e_th = 0.3`.
    fn default() -> Self {
        DetectionExperiment {
            lattice: LatticeSpec { rows: 1, cols: 2 },
            h: 0.2,
            layers: 2,
            d: 4000,
            t: 50,
            e_th: 0.3,
            eps0: 0.7,
            p_attack: vec![0.0, 0.01, 0.05, 0.2, 0.5],
            angle_shift: vec![PI / 4.0, PI / 2.0, PI],
            runs: 10,
            seed: 7,
        }
    }
}

impl DetectionExperiment {
    pub fn problem(&self) -> Result<Problem> {
        let obs = build_tfim(self.lattice, self.h);
        Problem::new(AnsatzConfig::new(self.lattice.num_sites(), self.layers)?, obs)
    }

    pub fn shots(&self, num_params: usize) -> Result<usize> {
        if self.d == 0 || !self.d.is_multiple_of(2 * num_params) {
            return Err(input_err!("d = {} is not a positive multiple of 2 N_P = {}", self.d, 2 * num_params));
        }
        Ok(self.d / (2 * num_params))
    }

    pub fn settings(&self) -> Vec<(f64, f64)> {
        self.p_attack.iter().flat_map(|&p| self.angle_shift.iter().map(move |&a| (p, a))).collect()
    }

    pub fn validate(&self) -> Result<()> {
        LatticeSpec::new(self.lattice.rows, self.lattice.cols)?;
        if self.runs == 0 || self.p_attack.is_empty() || self.angle_shift.is_empty() {
            return Err(input_err!("the grid and the run count must be non-empty"));
        }
        for (p, a) in self.settings() {
            AttackSpec::AngleShift { p_attack: p, shift: a, scope: ShiftScope::Output }.validate()?;
        }
        if !(self.e_th >= 0.0 && self.eps0 >= 0.0) {
            return Err(input_err!("e_th and eps0 must be non-negative"));
        }
        Ok(())
    }
}

/// One delegated step under one attack setting.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectionRow {
    pub p_attack: f64,
    pub angle_shift: f64,
    /// Relative `||.||_1` error of the delegated gradient against the exact one.
    pub e: f64,
    /// Test rounds with at least one failed trap.
    pub n_td: usize,
}

impl DetectionRow {
    /// Detection is expected whenever the error exceeds the threshold.
    pub fn agrees(&self, e_th: f64) -> bool {
        self.e <= e_th || self.n_td >= 1
    }
}

fn draw_theta(problem: &Problem, eps0: f64, seed: u64, index: u64) -> Result<ParamVector> {
    let mut rng = stream(seed, Domain::Init, index);
    for _ in 0..10_000 {
        let theta =
            ParamVector((0..problem.ansatz.num_params()).map(|_| rng.random_range(-PI..PI)).collect());
        if exact_gradient(&problem.ansatz, &theta, &problem.obs)?.norm1() >= eps0 {
            return Ok(theta);
        }
    }
    Err(input_err!("no parameters with ||g||_1 >= {eps0} found"))
}

/// Everything one detection run needs that does not depend on the attack.
#[derive(Debug, Clone)]
pub struct DetectionSetup {
    pub problem: Problem,
    pub budget: StepBudget,
}

impl DetectionSetup {
    pub fn new(exp: &DetectionExperiment) -> Result<Self> {
        exp.validate()?;
        let problem = exp.problem()?;
        let n_p = problem.ansatz.num_params();
        let shots = exp.shots(n_p)?;
        let probe = compile_patterns(&problem, &[ParamVector::zeros(n_p)])?;
        let colors = greedy_coloring(&probe[0][0].pattern.graph).num_colors;
        let budget = StepBudget::new(n_p, shots, exp.t, colors)?;
        Ok(DetectionSetup { problem, budget })
    }

    /// Seed of the parties for run `run`.
    pub fn session_seed(exp: &DetectionExperiment, run: u64) -> u64 {
        exp.seed.wrapping_add(run)
    }

    /// Delegate the step of run `run` over `session`, running every test
    /// round. Runs with the same index share their parameters across settings.
    pub fn run<T: ClientTransport>(
        &self,
        exp: &DetectionExperiment,
        session: &mut ClientSession<T>,
        run: u64,
        p_attack: f64,
        angle_shift: f64,
    ) -> Result<DetectionRow> {
        let theta = draw_theta(&self.problem, exp.eps0, exp.seed, run)?;
        let exact = exact_gradient(&self.problem.ansatz, &theta, &self.problem.obs)?;
        let thetas = shifted_parameters(&theta);
        let report = session.delegate(&self.problem, &thetas, self.budget.shots, self.budget.t, StepMode::RunAll)?;
        let g = report_gradient(&report, self.budget.shots)
            .ok_or_else(|| crate::Error::Session("step did not complete".into()))?;
        Ok(DetectionRow { p_attack, angle_shift, e: relative_error(&g.values, &exact.values), n_td: report.failed_test_rounds })
    }
}

/// Run `runs` delegated steps, each over every test round, per grid setting,
/// with all three parties in process.
pub fn run_detection_grid(exp: &DetectionExperiment, mode: Execution) -> Result<Vec<DetectionRow>> {
    let setup = DetectionSetup::new(exp)?;
    let settings = exp.settings();
    let rows = map_indexed(settings.len() * exp.runs, mode, |i| {
        let (p_attack, shift) = settings[i / exp.runs];
        let run = (i % exp.runs) as u64;
        let seed = DetectionSetup::session_seed(exp, run);
        let attack = AttackSpec::AngleShift { p_attack, shift, scope: ShiftScope::Output };
        let mut session = ClientSession::new(InProcess::new(seed, attack), seed);
        setup.run(exp, &mut session, run, p_attack, shift)
    });
    rows.into_iter().collect()
}
