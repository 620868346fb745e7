//! Gradient descent that reruns rejected steps, and its final convergence
//! verdict.

use std::io::Write;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::parties::ClientTransport;
use super::step::{run_step, ClientSession, Problem, StepMode, StepOutcome};
use crate::ansatz::{cost_exact, exact_gradient, ParamVector};
use crate::error::{input_err, Error, Result};
use crate::rng::{stream, Domain};
use crate::verification::StepBudget;

/// Optimizer settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    /// Initial parameters; drawn uniformly from `[-pi, pi)` when absent.
    pub theta0: Option<ParamVector>,
    pub n_iter: usize,
    pub alpha: f64,
    pub e_th: f64,
    pub shots: usize,
    pub max_reruns: usize,
    /// Accepted steps inspected by the convergence check.
    pub window: usize,
    /// Gradient-norm tolerance; `2 eps0` when absent.
    pub tol_g: Option<f64>,
    /// Lower bound on `||g||_1`; `0.05 * one_norm` when absent.
    pub eps0: Option<f64>,
    /// Optional cap on delegated rounds over the whole run.
    pub round_budget: Option<u64>,
    pub t_rounds: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            theta0: None,
            n_iter: 100,
            alpha: 0.2,
            e_th: 0.2,
            shots: 1000,
            max_reruns: 25,
            window: 10,
            tol_g: None,
            eps0: None,
            round_budget: None,
            t_rounds: 50,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return Err(input_err!("learning rate must be positive"));
        }
        if self.shots == 0 || self.max_reruns == 0 || self.window == 0 {
            return Err(input_err!("shots, max_reruns and window must be positive"));
        }
        if !(self.e_th >= 0.0 && self.e_th.is_finite()) {
            return Err(input_err!("e_th must be finite and non-negative"));
        }
        for (name, v) in [("tol_g", self.tol_g), ("eps0", self.eps0)] {
            if let Some(v) = v {
                if !(v >= 0.0 && v.is_finite()) {
                    return Err(input_err!("{name} must be finite and non-negative"));
                }
            }
        }
        Ok(())
    }

    pub fn eps0_for(&self, one_norm: f64) -> f64 {
        self.eps0.unwrap_or(0.05 * one_norm)
    }

    pub fn tol_g_for(&self, one_norm: f64) -> f64 {
        self.tol_g.unwrap_or(2.0 * self.eps0_for(one_norm))
    }

    /// `theta0`, or a uniform draw keyed by `seed`.
    pub fn initial_theta(&self, num_params: usize, seed: u64) -> Result<ParamVector> {
        match &self.theta0 {
            Some(t) if t.len() == num_params => Ok(t.clone()),
            Some(t) => Err(input_err!("theta0 has {} entries, expected {num_params}", t.len())),
            None => {
                let mut rng = stream(seed, Domain::Init, 0);
                let pi = std::f64::consts::PI;
                Ok(ParamVector((0..num_params).map(|_| rng.random_range(-pi..pi)).collect()))
            }
        }
    }
}

/// Result of one attempt at a step.
#[derive(Debug, Clone, PartialEq)]
pub struct StepAttempt {
    pub outcome: StepOutcome,
    /// Cost estimate at the current parameters.
    pub f_hat: f64,
    pub f_hat_variance: f64,
    pub rounds_used: u64,
    pub failed_test_rounds: usize,
}

/// Produces one verified (or rejected) gradient per call.
pub trait StepExecutor {
    /// `attempt` counts every attempt of the run, reruns included.
    fn execute(&mut self, theta: &ParamVector, attempt: u64) -> Result<StepAttempt>;
}

/// Delegated executor: each attempt runs a verified gradient step and a
/// separately verified cost evaluation at the current parameters.
pub struct DelegatedExecutor<'a, T> {
    pub session: ClientSession<T>,
    pub problem: &'a Problem,
    pub budget: StepBudget,
    pub mode: StepMode,
}

impl<T: ClientTransport> StepExecutor for DelegatedExecutor<'_, T> {
    fn execute(&mut self, theta: &ParamVector, _attempt: u64) -> Result<StepAttempt> {
        let (outcome, report) = run_step(&mut self.session, self.problem, theta, &self.budget, self.mode)?;
        let monitor = self.session.delegate(
            self.problem,
            std::slice::from_ref(theta),
            self.budget.shots,
            self.budget.t,
            self.mode,
        )?;
        let rounds_used = (report.rounds_run + monitor.rounds_run) as u64;
        let failed_test_rounds = report.failed_test_rounds + monitor.failed_test_rounds;
        let (f_hat, f_hat_variance) = monitor
            .estimates
            .as_ref()
            .and_then(|e| e.first())
            .map_or((f64::NAN, f64::NAN), |e| (e.value, e.variance));
        let outcome = match outcome {
            StepOutcome::Accept { .. } if !monitor.accepted() => StepOutcome::Abort {
                first_failure: monitor.first_failure,
                trap_failures: monitor.trap_failures,
            },
            other => other,
        };
        Ok(StepAttempt { outcome, f_hat, f_hat_variance, rounds_used, failed_test_rounds })
    }
}

/// One line of the run transcript.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: usize,
    pub reruns: usize,
    pub accepted: bool,
    pub f_hat: f64,
    pub f_hat_variance: f64,
    pub f_exact: f64,
    /// `||g_hat||_1` of the accepted gradient (`NaN` if none).
    pub grad_norm1: f64,
    /// Exact `||g||_1`, for the simulation-side warning below `eps0`.
    pub exact_grad_norm1: f64,
    pub failed_test_rounds: usize,
    pub rounds_used: u64,
    pub theta: ParamVector,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "verdict", rename_all = "snake_case")]
pub enum FinalVerdict {
    Accept { f_hat: f64 },
    Abort { reason: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunTranscript {
    pub steps: Vec<StepRecord>,
    pub verdict: FinalVerdict,
    pub theta_final: ParamVector,
    pub f_exact_final: f64,
    /// Steps at which the exact gradient norm was below `eps0`.
    pub below_eps0_steps: Vec<usize>,
}

impl RunTranscript {
    pub fn is_accept(&self) -> bool {
        matches!(self.verdict, FinalVerdict::Accept { .. })
    }

    pub fn total_reruns(&self) -> usize {
        self.steps.iter().map(|s| s.reruns).sum()
    }

    /// One JSON object per step, then one line for the verdict.
    pub fn write_jsonl<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        for s in &self.steps {
            serde_json::to_writer(&mut w, s)?;
            w.write_all(b"\n")?;
        }
        serde_json::to_writer(&mut w, &self.verdict)?;
        w.write_all(b"\n")
    }
}

/// Convergence verdict over the last `window` accepted steps: the mean
/// accepted `||g_hat||_1` must not exceed `tol_g`, and the least-squares
/// trend of `f_hat` across the window must not rise by more than twice its
/// shot-noise standard error.
pub fn convergence_check(records: &[StepRecord], window: usize, tol_g: f64) -> bool {
    let accepted: Vec<&StepRecord> = records.iter().filter(|r| r.accepted).collect();
    if window == 0 || accepted.len() < window {
        return false;
    }
    let w = &accepted[accepted.len() - window..];
    let mean_norm = w.iter().map(|r| r.grad_norm1).sum::<f64>() / window as f64;
    if !(mean_norm <= tol_g) {
        return false;
    }
    if window < 2 {
        return true;
    }
    let xs: Vec<f64> = (0..window).map(|i| i as f64).collect();
    let x_mean = xs.iter().sum::<f64>() / window as f64;
    let y_mean = w.iter().map(|r| r.f_hat).sum::<f64>() / window as f64;
    let sxx: f64 = xs.iter().map(|x| (x - x_mean).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(w).map(|(x, r)| (x - x_mean) * (r.f_hat - y_mean)).sum();
    let slope = sxy / sxx;
    let sigma_f = (w.iter().map(|r| r.f_hat_variance.max(0.0)).sum::<f64>() / window as f64).sqrt();
    let rise = slope * (window - 1) as f64;
    let rise_se = sigma_f * (window - 1) as f64 / sxx.sqrt();
    rise <= 2.0 * rise_se
}

/// Run gradient descent for `n_iter` steps, rerunning rejected steps.
pub fn run_vqa<E: StepExecutor>(config: &RunConfig, problem: &Problem, executor: &mut E, seed: u64) -> Result<RunTranscript> {
    config.validate()?;
    let one_norm = problem.obs.one_norm();
    let eps0 = config.eps0_for(one_norm);
    let mut theta = config.initial_theta(problem.ansatz.num_params(), seed)?;
    let mut steps = Vec::with_capacity(config.n_iter);
    let mut below = Vec::new();
    let mut attempt: u64 = 0;
    let mut rounds_total: u64 = 0;

    let finish = |steps: Vec<StepRecord>, verdict: FinalVerdict, theta: ParamVector, below: Vec<usize>| -> Result<RunTranscript> {
        if !below.is_empty() {
            log::info!(
                "{} of {} steps ran with an exact gradient norm below eps0 = {eps0:.4}; the relative-error budget is vacuous there",
                below.len(),
                steps.len()
            );
        }
        let f_exact_final = cost_exact(&problem.ansatz, &theta, &problem.obs)?;
        Ok(RunTranscript { steps, verdict, theta_final: theta, f_exact_final, below_eps0_steps: below })
    };

    for k in 1..=config.n_iter {
        let f_exact = cost_exact(&problem.ansatz, &theta, &problem.obs)?;
        let exact_norm = exact_gradient(&problem.ansatz, &theta, &problem.obs)?.norm1();
        if exact_norm < eps0 {
            log::debug!("step {k}: exact gradient norm {exact_norm:.4} is below eps0 = {eps0:.4}");
            below.push(k);
        }
        let mut reruns = 0;
        let mut failed = 0;
        let mut rounds_step = 0;
        loop {
            let a = executor.execute(&theta, attempt)?;
            attempt += 1;
            failed += a.failed_test_rounds;
            rounds_step += a.rounds_used;
            rounds_total += a.rounds_used;
            let record = |accepted: bool, grad_norm1: f64| StepRecord {
                step: k,
                reruns,
                accepted,
                f_hat: a.f_hat,
                f_hat_variance: a.f_hat_variance,
                f_exact,
                grad_norm1,
                exact_grad_norm1: exact_norm,
                failed_test_rounds: failed,
                rounds_used: rounds_step,
                theta: theta.clone(),
            };
            match &a.outcome {
                StepOutcome::Accept { gradient } => {
                    if gradient.len() != theta.len() {
                        return Err(Error::Session("gradient length does not match parameters".into()));
                    }
                    steps.push(record(true, gradient.norm1()));
                    theta = theta.descend(config.alpha, &gradient.values);
                    break;
                }
                StepOutcome::Abort { .. } => {
                    if config.round_budget.is_some_and(|b| rounds_total >= b) {
                        steps.push(record(false, f64::NAN));
                        let reason = format!("round budget exhausted at step {k}");
                        return finish(steps, FinalVerdict::Abort { reason }, theta, below);
                    }
                    if reruns >= config.max_reruns {
                        steps.push(record(false, f64::NAN));
                        let reason = format!("step {k} rejected {} times", reruns + 1);
                        return finish(steps, FinalVerdict::Abort { reason }, theta, below);
                    }
                    reruns += 1;
                }
            }
        }
        if config.round_budget.is_some_and(|b| rounds_total >= b) && k < config.n_iter {
            let reason = format!("round budget exhausted after step {k}");
            return finish(steps, FinalVerdict::Abort { reason }, theta, below);
        }
    }
    let verdict = if convergence_check(&steps, config.window, config.tol_g_for(one_norm)) {
        FinalVerdict::Accept { f_hat: steps.last().map_or(f64::NAN, |s| s.f_hat) }
    } else if config.n_iter == 0 {
        FinalVerdict::Abort { reason: "no steps were run".into() }
    } else {
        FinalVerdict::Abort { reason: "optimization did not converge".into() }
    };
    finish(steps, verdict, theta, below)
}
