//! Closed-form analysis of a verified gradient step and of the gradient
//! descent that consumes it, plus a Monte Carlo check of the failure bound.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{input_err, Error, Result};
use crate::exec::{map_indexed, Execution};
use crate::rng::{stream, Domain};

/// Largest number of test rounds [`choose_test_rounds`] will consider.
pub const MAX_TEST_ROUNDS: usize = 10_000_000;

/// Two-sided 95% standard normal quantile.
const Z95: f64 = 1.959_963_984_540_054;

/// Round budget of one step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepBudget {
    /// Computation rounds, `2 N_P N_s`.
    pub d: usize,
    /// Test rounds.
    pub t: usize,
    /// `d + t`.
    pub n: usize,
    pub shots: usize,
    pub num_params: usize,
    pub colors: usize,
}

impl StepBudget {
    pub fn new(num_params: usize, shots: usize, t: usize, colors: usize) -> Result<Self> {
        if num_params == 0 || shots == 0 || colors == 0 {
            return Err(input_err!("parameter count, shots and colors must be positive"));
        }
        let d = 2 * num_params * shots;
        Ok(StepBudget { d, t, n: d + t, shots, num_params, colors })
    }
}

/// Error model of a step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorModel {
    pub e_th: f64,
    /// Assumed lower bound on `||g||_1`.
    pub eps0: f64,
    pub one_norm: f64,
    /// Slack in the test-round analysis. `None` means `w / 2`.
    pub eps1: Option<f64>,
}

impl ErrorModel {
    /// `eps0 = 0.05 * one_norm`, `eps1 = w / 2`.
    pub fn with_defaults(e_th: f64, one_norm: f64) -> Self {
        ErrorModel { e_th, eps0: 0.05 * one_norm, one_norm, eps1: None }
    }

    pub fn validate(&self) -> Result<()> {
        let all = [self.e_th, self.eps0, self.one_norm, self.eps1.unwrap_or(0.0)];
        if all.iter().any(|x| !x.is_finite() || *x < 0.0) {
            return Err(input_err!("error-model quantities must be finite and non-negative"));
        }
        Ok(())
    }

    /// Resolved `eps1` for a given `w`. Logs a warning when the case-A decay
    /// condition `eps1 < w` fails.
    pub fn eps1_for(&self, w: f64) -> f64 {
        let eps1 = self.eps1.unwrap_or(w / 2.0);
        if eps1 >= w {
            log::warn!("eps1 = {eps1} is not below w = {w}; the attacked-regime bound does not decay");
        }
        eps1
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VerificationBounds {
    pub delta_max: f64,
    pub w: f64,
    /// Worst case of [`failure_probability_bound`] over the attacked-round count.
    pub p_fail_bound: f64,
}

/// Relative gradient error reachable with `delta` corrupted rounds:
/// `one_norm * delta / (eps0 * N_s)`.
pub fn lemma1_error_bound(delta: f64, model: &ErrorModel, shots: usize) -> Result<f64> {
    if model.eps0 <= 0.0 {
        return Err(input_err!("eps0 must be positive"));
    }
    if shots == 0 {
        return Err(input_err!("shots must be positive"));
    }
    Ok(model.one_norm * delta / (model.eps0 * shots as f64))
}

/// Corruption budget `delta_max = e_th eps0 N_s / one_norm = w d`.
pub fn delta_max(model: &ErrorModel, budget: &StepBudget) -> Result<VerificationBounds> {
    model.validate()?;
    if model.one_norm <= 0.0 {
        return Err(input_err!("observable one-norm must be positive"));
    }
    let dm = model.e_th * model.eps0 * budget.shots as f64 / model.one_norm;
    let w = model.e_th * model.eps0 / (2.0 * budget.num_params as f64 * model.one_norm);
    let wd = w * budget.d as f64;
    debug_assert!((dm - wd).abs() <= 1e-9 * dm.abs().max(1.0));
    let eps1 = model.eps1_for(w);
    Ok(VerificationBounds { delta_max: dm, w, p_fail_bound: worst_case_bound(budget, w, eps1) })
}

fn worst_case_bound(budget: &StepBudget, w: f64, eps1: f64) -> f64 {
    let n = budget.n;
    let step = (n / 20_000).max(1);
    (1..=n)
        .step_by(step)
        .chain(std::iter::once(n))
        .map(|m| failure_probability_bound(m as f64, budget, w, eps1))
        .fold(0.0, f64::max)
}

/// Unclamped failure bound for `m` attacked rounds out of `n = d + t`.
pub fn failure_probability_bound_raw(m: f64, d: usize, t: usize, colors: usize, w: f64, eps1: f64) -> f64 {
    if m <= 0.0 {
        return 0.0;
    }
    let n = (d + t) as f64;
    let tau = t as f64 / n;
    let frac = m / n;
    let undetected = (-2.0 * eps1 * eps1 * tau * tau * n * n / m).exp() + (-(frac - eps1) * tau * n / colors as f64).exp();
    if m >= n * w {
        undetected
    } else {
        let d = d as f64;
        (-(2.0 * d * d / m) * (frac - w).powi(2)).exp() * undetected
    }
}

/// Failure bound clamped to `[0, 1]`.
pub fn failure_probability_bound(m: f64, budget: &StepBudget, w: f64, eps1: f64) -> f64 {
    failure_probability_bound_raw(m, budget.d, budget.t, budget.colors, w, eps1).clamp(0.0, 1.0)
}

/// Smallest `t` whose bound at attack fraction `m/n = attack_fraction` is at
/// most `target_p`.
pub fn choose_test_rounds(
    target_p: f64,
    d: usize,
    colors: usize,
    w: f64,
    eps1: f64,
    attack_fraction: f64,
) -> Result<usize> {
    if !(target_p > 0.0 && target_p <= 1.0) {
        return Err(input_err!("target probability {target_p} must lie in (0, 1]"));
    }
    if colors == 0 {
        return Err(input_err!("colors must be positive"));
    }
    let bound = |t: usize| {
        let n = (d + t) as f64;
        failure_probability_bound_raw(attack_fraction * n, d, t, colors, w, eps1).clamp(0.0, 1.0)
    };
    if bound(0) <= target_p {
        return Ok(0);
    }
    let mut hi = 1;
    while bound(hi) > target_p {
        if hi >= MAX_TEST_ROUNDS {
            return Err(Error::Infeasible(format!("no t <= {MAX_TEST_ROUNDS} reaches failure bound {target_p}")));
        }
        hi = (hi * 2).min(MAX_TEST_ROUNDS);
    }
    let mut lo = hi / 2;
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        if bound(mid) <= target_p {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    while hi > 0 && bound(hi - 1) <= target_p {
        hi -= 1;
    }
    Ok(hi)
}

/// How the abstract adversary picks its rounds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttackedRounds {
    /// Exactly `m` rounds, chosen uniformly.
    Fixed(usize),
    /// Each round independently with this probability.
    Bernoulli(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateEstimate {
    pub failures: usize,
    pub trials: usize,
    pub rate: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

impl RateEstimate {
    /// Wilson score interval at 95%.
    pub fn from_counts(failures: usize, trials: usize) -> Self {
        let n = trials as f64;
        let p = if trials == 0 { 0.0 } else { failures as f64 / n };
        let z2 = Z95 * Z95;
        let denom = 1.0 + z2 / n;
        let centre = (p + z2 / (2.0 * n)) / denom;
        let half = Z95 * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / denom;
        let ci_low = if failures == 0 { 0.0 } else { (centre - half).max(0.0) };
        let ci_high = if failures == trials { 1.0 } else { (centre + half).min(1.0) };
        RateEstimate { failures, trials, rate: p, ci_low, ci_high }
    }

    pub fn ci_width(&self) -> f64 {
        self.ci_high - self.ci_low
    }
}

/// One trial of the abstract round model. Returns `(corrupted computation
/// rounds, detections)`.
fn abstract_trial<R: Rng + ?Sized>(budget: &StepBudget, attacked: AttackedRounds, rng: &mut R) -> (usize, usize) {
    let n = budget.n;
    let m = match attacked {
        AttackedRounds::Fixed(m) => m.min(n),
        AttackedRounds::Bernoulli(p) => (0..n).filter(|_| rng.random::<f64>() < p).count(),
    };
    // The attacked set is uniform and the test slots are a uniform subset,
    // so each attacked round is a test round by sequential hypergeometric draws.
    let (mut tests_left, mut left) = (budget.t, n);
    let (mut corrupted, mut detected) = (0, 0);
    for _ in 0..m {
        if rng.random_range(0..left) < tests_left {
            tests_left -= 1;
            if rng.random_range(0..budget.colors) == 0 {
                detected += 1;
            }
        } else {
            corrupted += 1;
        }
        left -= 1;
    }
    (corrupted, detected)
}

/// Monte Carlo estimate of `Pr[corrupted > delta_max and no detection]`
/// under the abstract model: attacked test rounds are caught with
/// probability `1/c`, attacked computation rounds each corrupt one sample.
pub fn empirical_failure_rate(
    budget: &StepBudget,
    delta_max: f64,
    attacked: AttackedRounds,
    trials: usize,
    seed: u64,
    mode: Execution,
) -> Result<RateEstimate> {
    if trials < 100 {
        return Err(input_err!("at least 100 trials are required, got {trials}"));
    }
    if let AttackedRounds::Bernoulli(p) = attacked {
        if !(0.0..=1.0).contains(&p) {
            return Err(input_err!("attack probability {p} out of range"));
        }
    }
    let fails = map_indexed(trials, mode, |i| {
        let mut rng = stream(seed, Domain::Trial, i as u64);
        let (corrupted, detected) = abstract_trial(budget, attacked, &mut rng);
        corrupted as f64 > delta_max && detected == 0
    });
    Ok(RateEstimate::from_counts(fails.iter().filter(|&&f| f).count(), trials))
}

/// Regularity constants and step parameters for the descent analysis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceInputs {
    pub mu: f64,
    pub lipschitz: f64,
    pub alpha: f64,
    /// Relative gradient error bound.
    pub e: f64,
    pub sigma2: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub gamma: f64,
    pub rho: f64,
    pub conditions_met: bool,
    /// `None` when the iteration diverges.
    pub z_inf: Option<f64>,
}

impl ConvergenceReport {
    pub fn iterations(&self, initial_gap: f64, eps: f64) -> Result<u64> {
        iterations_needed(self.rho, initial_gap, eps)
    }
}

pub fn check_convergence_conditions(inp: &ConvergenceInputs) -> ConvergenceReport {
    let s = inp.alpha * inp.lipschitz * (1.0 + inp.e);
    let gamma = 1.0 - inp.mu * inp.alpha * (1.0 + inp.e) * (2.0 - s);
    let conditions_met = gamma > 0.0 && gamma < 1.0 && s < 2.0;
    ConvergenceReport { gamma, rho: 1.0 - gamma, conditions_met, z_inf: error_neighborhood(inp).ok() }
}

/// Asymptotic optimality gap `alpha L (1+e) sigma^2 / (2 mu [2 - alpha L (1+e)])`.
pub fn error_neighborhood(inp: &ConvergenceInputs) -> Result<f64> {
    let s = inp.alpha * inp.lipschitz * (1.0 + inp.e);
    let gamma = 1.0 - inp.mu * inp.alpha * (1.0 + inp.e) * (2.0 - s);
    if gamma >= 1.0 || inp.mu <= 0.0 {
        return Err(input_err!("contraction factor {gamma} >= 1: the iteration diverges"));
    }
    Ok(s * inp.sigma2 / (2.0 * inp.mu * (2.0 - s)))
}

/// `ceil(ln(initial_gap / eps) / rho)`, and 0 once `eps >= initial_gap`.
pub fn iterations_needed(rho: f64, initial_gap: f64, eps: f64) -> Result<u64> {
    if !(rho > 0.0 && rho < 1.0) {
        return Err(input_err!("rho = {rho} must lie in (0, 1)"));
    }
    if !(initial_gap > 0.0 && eps > 0.0) {
        return Err(input_err!("gap and eps must be positive"));
    }
    if eps >= initial_gap {
        return Ok(0);
    }
    Ok(((initial_gap / eps).ln() / rho).ceil().max(0.0) as u64)
}

/// Shot-noise variance of a parameter-shift gradient given the estimator
/// variances of its `2 N_P` evaluations, in schedule order.
pub fn gradient_variance(evaluation_variances: &[f64]) -> f64 {
    evaluation_variances.iter().sum::<f64>() / 4.0
}
