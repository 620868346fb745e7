//! Adversary models: gradient perturbations, corrupted eigenvalue samples and
//! measurement-angle deviations. Every model is non-adaptive: rounds are
//! attacked independently of what the server has seen so far.

use std::f64::consts::{FRAC_PI_2, PI};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::ansatz::GradientEstimate;
use crate::error::{input_err, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CorruptionMode {
    /// Report the opposite eigenvalue.
    WorstCase,
    /// Report the opposite eigenvalue with probability one half.
    RandomFlip,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Targeting {
    /// Any round may be hit.
    Uniform,
    /// Hits go to the rounds attributed to the heaviest term first.
    Concentrated,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShiftScope {
    Output,
    All,
}

/// Role of the vertex being measured, as far as the server can tell from the
/// graph alone.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VertexRole {
    Output,
    Internal,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AttackSpec {
    #[default]
    None,
    /// With probability `p` per step, add `U(-delta, delta)` to every
    /// gradient component.
    GradientPerturb { p: f64, delta: f64 },
    RoundCorruption { p_attack: f64, mode: CorruptionMode, targeting: Targeting },
    /// Shift the measurement angle by `shift` in attacked rounds.
    AngleShift { p_attack: f64, shift: f64, scope: ShiftScope },
}

fn check_probability(name: &str, p: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&p) {
        return Err(input_err!("{name} = {p} is not a probability"));
    }
    Ok(())
}

impl AttackSpec {
    pub fn validate(&self) -> Result<()> {
        match *self {
            AttackSpec::None => Ok(()),
            AttackSpec::GradientPerturb { p, delta } => {
                check_probability("p", p)?;
                if !(delta >= 0.0 && delta.is_finite()) {
                    return Err(input_err!("perturbation magnitude {delta} must be finite and >= 0"));
                }
                Ok(())
            }
            AttackSpec::RoundCorruption { p_attack, .. } => check_probability("p_attack", p_attack),
            AttackSpec::AngleShift { p_attack, shift, .. } => {
                check_probability("p_attack", p_attack)?;
                if !shift.is_finite() {
                    return Err(input_err!("angle shift must be finite"));
                }
                Ok(())
            }
        }
    }

    /// Per-round attack probability (zero for models that do not act on rounds).
    pub fn round_probability(&self) -> f64 {
        match *self {
            AttackSpec::RoundCorruption { p_attack, .. } | AttackSpec::AngleShift { p_attack, .. } => p_attack,
            AttackSpec::None | AttackSpec::GradientPerturb { .. } => 0.0,
        }
    }

    pub fn is_none(&self) -> bool {
        matches!(self, AttackSpec::None)
    }

    /// The physical deviation a server applies in an attacked delegated
    /// round. Sample corruption becomes an output-angle shift: `pi` flips a
    /// single-qubit readout outright, `pi/2` randomizes it.
    pub fn as_angle_shift(&self) -> Option<(f64, ShiftScope)> {
        match *self {
            AttackSpec::AngleShift { shift, scope, .. } => Some((shift, scope)),
            AttackSpec::RoundCorruption { mode: CorruptionMode::WorstCase, .. } => Some((PI, ShiftScope::Output)),
            AttackSpec::RoundCorruption { mode: CorruptionMode::RandomFlip, .. } => {
                Some((FRAC_PI_2, ShiftScope::Output))
            }
            AttackSpec::None | AttackSpec::GradientPerturb { .. } => None,
        }
    }
}

/// With probability `p` add i.i.d. `U(-delta, delta)` noise to every component.
pub fn perturb_gradient<R: Rng + ?Sized>(g: &GradientEstimate, p: f64, delta: f64, rng: &mut R) -> GradientEstimate {
    let mut out = g.clone();
    if delta > 0.0 && rng.random::<f64>() < p {
        for v in &mut out.values {
            *v += rng.random_range(-delta..=delta);
        }
    }
    out
}

pub fn corrupt_sample<R: Rng + ?Sized>(lambda: i8, mode: CorruptionMode, rng: &mut R) -> i8 {
    match mode {
        CorruptionMode::WorstCase => -lambda,
        CorruptionMode::RandomFlip => {
            if rng.random::<bool>() {
                -lambda
            } else {
                lambda
            }
        }
    }
}

/// Attacked round indices, ascending.
///
/// The number of attacked rounds is `Binomial(n, p_attack)`. Uniform
/// targeting attacks each round independently; concentrated targeting spends
/// the same count on `heavy_rounds` (the rounds the adversary attributes to
/// the heaviest term) in order, and drops what does not fit.
pub fn select_attacked_rounds<R: Rng + ?Sized>(
    n: usize,
    spec: &AttackSpec,
    heavy_rounds: &[usize],
    rng: &mut R,
) -> Vec<usize> {
    let p = spec.round_probability();
    if p <= 0.0 {
        return Vec::new();
    }
    let hits: Vec<bool> = (0..n).map(|_| rng.random::<f64>() < p).collect();
    match spec {
        AttackSpec::RoundCorruption { targeting: Targeting::Concentrated, .. } => {
            let m = hits.iter().filter(|&&h| h).count();
            let mut chosen: Vec<usize> = heavy_rounds.iter().copied().filter(|&r| r < n).take(m).collect();
            chosen.sort_unstable();
            chosen
        }
        _ => (0..n).filter(|&i| hits[i]).collect(),
    }
}

/// Exactly `count` distinct rounds out of `n`, ascending.
pub fn select_exact_rounds<R: Rng + ?Sized>(
    n: usize,
    count: usize,
    targeting: Targeting,
    heavy_rounds: &[usize],
    rng: &mut R,
) -> Result<Vec<usize>> {
    if count > n {
        return Err(input_err!("cannot attack {count} of {n} rounds"));
    }
    let mut chosen = match targeting {
        Targeting::Uniform => rand::seq::index::sample(rng, n, count).into_vec(),
        Targeting::Concentrated => {
            let mut out: Vec<usize> = heavy_rounds.iter().copied().filter(|&r| r < n).take(count).collect();
            if out.len() < count {
                let rest: Vec<usize> = (0..n).filter(|r| !out.contains(r)).collect();
                let extra = rand::seq::index::sample(rng, rest.len(), count - out.len());
                out.extend(extra.iter().map(|i| rest[i]));
            }
            out
        }
    };
    chosen.sort_unstable();
    Ok(chosen)
}

/// Angle the server actually measures at. The decision sees only the
/// announced angle, the vertex role and whether this round is under attack.
pub fn deviate_measurement(delta: f64, spec: &AttackSpec, role: VertexRole, round_attacked: bool) -> f64 {
    match spec.as_angle_shift() {
        Some((shift, scope)) if round_attacked && (scope == ShiftScope::All || role == VertexRole::Output) => {
            delta + shift
        }
        _ => delta,
    }
}
