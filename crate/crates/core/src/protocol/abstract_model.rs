//! Step executors that skip the measurement-based layer: shot sampling
//! happens on a local statevector and attacks act on samples or gradients.

use rand::Rng;

use super::step::{Problem, StepOutcome};
use super::vqa::{StepAttempt, StepExecutor};
use crate::ansatz::{cost_sampled, prepare_state, relative_error, GradientEstimate, ParamVector};
use crate::attacks::{corrupt_sample, perturb_gradient, select_attacked_rounds, AttackSpec, CorruptionMode};
use crate::error::{input_err, Result};
use crate::hamiltonian::{allocate_shots, combine_samples, shot_terms, CostEstimate};
use crate::rng::{stream, Domain};

use super::step::shifted_parameters;

/// Honest and corrupted gradients built from the same samples.
#[derive(Debug, Clone, PartialEq)]
pub struct CorruptionTrial {
    pub honest: GradientEstimate,
    pub corrupted: GradientEstimate,
    pub honest_estimates: Vec<CostEstimate>,
    pub corrupted_rounds: usize,
}

impl CorruptionTrial {
    pub fn relative_error(&self) -> f64 {
        relative_error(&self.corrupted.values, &self.honest.values)
    }
}

/// Computation round indices (`evaluation * shots + shot`) that carry samples
/// of the heaviest term.
pub fn heaviest_term_rounds(problem: &Problem, shots: usize) -> Result<Vec<usize>> {
    let Some(heavy) = problem.obs.heaviest_term() else {
        return Ok(Vec::new());
    };
    let terms = shot_terms(&allocate_shots(&problem.obs, shots)?);
    let evaluations = 2 * problem.ansatz.num_params();
    Ok((0..evaluations)
        .flat_map(|e| terms.iter().enumerate().filter(|(_, &t)| t == heavy).map(move |(s, _)| e * shots + s))
        .collect())
}

/// Sample the `2 N_P` shifted evaluations and corrupt the samples of the
/// listed computation rounds.
pub fn sample_gradient_with_corruption<R: Rng + ?Sized>(
    problem: &Problem,
    theta: &ParamVector,
    shots: usize,
    corrupted_rounds: &[usize],
    mode: CorruptionMode,
    rng: &mut R,
) -> Result<CorruptionTrial> {
    let alloc = allocate_shots(&problem.obs, shots)?;
    let terms = shot_terms(&alloc);
    let offsets: Vec<usize> = alloc.iter().scan(0, |acc, &k| {
        let start = *acc;
        *acc += k;
        Some(start)
    }).collect();
    let thetas = shifted_parameters(theta);
    let mut honest = Vec::with_capacity(thetas.len());
    for th in &thetas {
        let state = prepare_state(&problem.ansatz, th)?;
        let samples = problem
            .obs
            .terms()
            .iter()
            .zip(&alloc)
            .map(|(t, &k)| state.sample_pauli(&t.pauli, k, rng))
            .collect::<Result<Vec<_>>>()?;
        honest.push(samples);
    }
    let mut corrupted = honest.clone();
    let d = thetas.len() * shots;
    for &r in corrupted_rounds {
        if r >= d {
            return Err(input_err!("round {r} outside the {d} computation rounds"));
        }
        let (e, s) = (r / shots, r % shots);
        let term = terms[s];
        let slot = &mut corrupted[e][term][s - offsets[term]];
        *slot = corrupt_sample(*slot, mode, rng);
    }
    let combine = |all: &[Vec<Vec<i8>>]| -> Result<Vec<CostEstimate>> {
        all.iter().map(|s| combine_samples(&problem.obs, s)).collect()
    };
    let honest_estimates = combine(&honest)?;
    let corrupted_estimates = combine(&corrupted)?;
    let grad = |est: &[CostEstimate]| GradientEstimate::from_evaluations(&est.iter().map(|e| e.value).collect::<Vec<_>>(), shots);
    Ok(CorruptionTrial {
        honest: grad(&honest_estimates)?,
        corrupted: grad(&corrupted_estimates)?,
        honest_estimates,
        corrupted_rounds: corrupted_rounds.len(),
    })
}

/// Step executor in the abstract round model.
///
/// Detection compares the attacked gradient with the honest shot-noise
/// gradient and aborts when their relative error exceeds `e_th`; this stands
/// in for trap rounds with negligible failure probability.
pub struct AbstractExecutor<'a> {
    pub problem: &'a Problem,
    pub shots: usize,
    pub e_th: f64,
    /// `false` accepts every step.
    pub verify: bool,
    pub attack: AttackSpec,
    pub seed: u64,
}

impl StepExecutor for AbstractExecutor<'_> {
    fn execute(&mut self, theta: &ParamVector, attempt: u64) -> Result<StepAttempt> {
        let mut shot_rng = stream(self.seed, Domain::Shots, attempt);
        let mut attack_rng = stream(self.seed, Domain::Attack, attempt);
        let d = 2 * self.problem.ansatz.num_params() * self.shots;
        let (honest, attacked) = match self.attack {
            AttackSpec::AngleShift { .. } => {
                return Err(input_err!("angle-shift attacks need the measurement-based executor"));
            }
            AttackSpec::RoundCorruption { mode, .. } => {
                let heavy = heaviest_term_rounds(self.problem, self.shots)?;
                let rounds = select_attacked_rounds(d, &self.attack, &heavy, &mut attack_rng);
                let trial =
                    sample_gradient_with_corruption(self.problem, theta, self.shots, &rounds, mode, &mut shot_rng)?;
                (trial.honest, trial.corrupted)
            }
            AttackSpec::GradientPerturb { p, delta } => {
                let g = sample_gradient(self.problem, theta, self.shots, &mut shot_rng)?;
                let attacked = perturb_gradient(&g, p, delta, &mut attack_rng);
                (g, attacked)
            }
            AttackSpec::None => {
                let g = sample_gradient(self.problem, theta, self.shots, &mut shot_rng)?;
                (g.clone(), g)
            }
        };
        let mut monitor_rng = stream(self.seed, Domain::Calibration, attempt);
        let f = cost_sampled(&self.problem.ansatz, theta, &self.problem.obs, self.shots, &mut monitor_rng)?;
        let detected = self.verify && relative_error(&attacked.values, &honest.values) > self.e_th;
        let outcome = if detected {
            StepOutcome::Abort { first_failure: None, trap_failures: 1 }
        } else {
            StepOutcome::Accept { gradient: attacked }
        };
        Ok(StepAttempt {
            outcome,
            f_hat: f.value,
            f_hat_variance: f.variance,
            rounds_used: (d + self.shots) as u64,
            failed_test_rounds: usize::from(detected),
        })
    }
}

/// Parameter-shift gradient from `shots` samples per evaluation.
pub fn sample_gradient<R: Rng + ?Sized>(
    problem: &Problem,
    theta: &ParamVector,
    shots: usize,
    rng: &mut R,
) -> Result<GradientEstimate> {
    let costs = shifted_parameters(theta)
        .iter()
        .map(|th| cost_sampled(&problem.ansatz, th, &problem.obs, shots, rng).map(|e| e.value))
        .collect::<Result<Vec<_>>>()?;
    GradientEstimate::from_evaluations(&costs, shots)
}
