//! Layered RY + CNOT-chain ansatz and the parameter-shift gradient.

use std::f64::consts::FRAC_PI_2;
use std::ops::{Index, IndexMut};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{input_err, Error, Result};
use crate::hamiltonian::{estimate_cost_detailed, CostEstimate, PauliObservable};
use crate::quantum::{Gate, StateVector};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnsatzConfig {
    pub num_qubits: usize,
    pub num_layers: usize,
}

impl AnsatzConfig {
    pub fn new(num_qubits: usize, num_layers: usize) -> Result<Self> {
        if num_qubits == 0 || num_layers == 0 {
            return Err(input_err!("ansatz needs at least one qubit and one layer"));
        }
        Ok(AnsatzConfig { num_qubits, num_layers })
    }

    /// `N_P = n * N_L`. Parameter `l * n + i` drives the RY on qubit `i` in layer `l`.
    pub fn num_params(&self) -> usize {
        self.num_qubits * self.num_layers
    }
}

/// Rotation angles in radians.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ParamVector(pub Vec<f64>);

impl ParamVector {
    pub fn zeros(len: usize) -> Self {
        ParamVector(vec![0.0; len])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    /// Copy with `offset` added to component `index`.
    pub fn shifted(&self, index: usize, offset: f64) -> Self {
        let mut out = self.clone();
        out.0[index] += offset;
        out
    }

    /// `self - step * direction`.
    pub fn descend(&self, step: f64, direction: &[f64]) -> Self {
        ParamVector(self.0.iter().zip(direction).map(|(t, g)| t - step * g).collect())
    }
}

impl Index<usize> for ParamVector {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

impl IndexMut<usize> for ParamVector {
    fn index_mut(&mut self, i: usize) -> &mut f64 {
        &mut self.0[i]
    }
}

fn check_len(config: &AnsatzConfig, theta: &ParamVector) -> Result<()> {
    if theta.len() != config.num_params() {
        return Err(input_err!("expected {} parameters, got {}", config.num_params(), theta.len()));
    }
    Ok(())
}

/// Per layer: RY on every qubit, then CNOT(0,1), CNOT(1,2), ..., CNOT(n-2,n-1).
pub fn build_circuit(config: &AnsatzConfig, theta: &ParamVector) -> Result<Vec<Gate>> {
    check_len(config, theta)?;
    let n = config.num_qubits;
    let mut gates = Vec::with_capacity(config.num_layers * (2 * n - 1));
    for l in 0..config.num_layers {
        gates.extend((0..n).map(|i| Gate::Ry { qubit: i, angle: theta[l * n + i] }));
        gates.extend((0..n.saturating_sub(1)).map(|i| Gate::Cnot { control: i, target: i + 1 }));
    }
    Ok(gates)
}

/// `U(theta)|0...0>`.
pub fn prepare_state(config: &AnsatzConfig, theta: &ParamVector) -> Result<StateVector> {
    let mut s = StateVector::zero(config.num_qubits)?;
    s.apply_circuit(&build_circuit(config, theta)?)?;
    Ok(s)
}

fn check_obs(config: &AnsatzConfig, obs: &PauliObservable) -> Result<()> {
    if obs.num_qubits() != config.num_qubits {
        return Err(input_err!("observable on {} qubits, ansatz on {}", obs.num_qubits(), config.num_qubits));
    }
    Ok(())
}

/// Noise-free `f(theta) = <0|U^dag O U|0>`.
pub fn cost_exact(config: &AnsatzConfig, theta: &ParamVector, obs: &PauliObservable) -> Result<f64> {
    check_obs(config, obs)?;
    obs.expectation(&prepare_state(config, theta)?)
}

/// Shot-sampled cost at `theta` with `shots` shots split over the terms.
pub fn cost_sampled<R: Rng + ?Sized>(
    config: &AnsatzConfig,
    theta: &ParamVector,
    obs: &PauliObservable,
    shots: usize,
    rng: &mut R,
) -> Result<CostEstimate> {
    check_obs(config, obs)?;
    estimate_cost_detailed(&prepare_state(config, theta)?, obs, shots, rng)
}

/// Something that can evaluate the cost at shifted parameter points.
///
/// `index` is the position of the call in the fixed evaluation schedule:
/// call `2i` is `theta + pi/2 e_i` and call `2i + 1` is `theta - pi/2 e_i`.
pub trait CostEvaluator {
    type Error;

    fn evaluate(&mut self, index: usize, theta: &ParamVector) -> std::result::Result<f64, Self::Error>;

    /// Shots consumed by one evaluation, for bookkeeping.
    fn shots_per_evaluation(&self) -> usize {
        0
    }
}

impl<E, F> CostEvaluator for F
where
    F: FnMut(usize, &ParamVector) -> std::result::Result<f64, E>,
{
    type Error = E;

    fn evaluate(&mut self, index: usize, theta: &ParamVector) -> std::result::Result<f64, E> {
        self(index, theta)
    }
}

/// Exact (statevector) evaluator.
pub struct ExactEvaluator<'a> {
    pub config: AnsatzConfig,
    pub obs: &'a PauliObservable,
}

impl CostEvaluator for ExactEvaluator<'_> {
    type Error = Error;

    fn evaluate(&mut self, _index: usize, theta: &ParamVector) -> Result<f64> {
        cost_exact(&self.config, theta, self.obs)
    }
}

/// Shot-noise evaluator drawing from a local statevector.
pub struct SampledEvaluator<'a, R> {
    pub config: AnsatzConfig,
    pub obs: &'a PauliObservable,
    pub shots: usize,
    pub rng: R,
    /// Variance estimates of the evaluations made so far, in call order.
    pub variances: Vec<f64>,
}

impl<'a, R: Rng> SampledEvaluator<'a, R> {
    pub fn new(config: AnsatzConfig, obs: &'a PauliObservable, shots: usize, rng: R) -> Self {
        SampledEvaluator { config, obs, shots, rng, variances: Vec::new() }
    }
}

impl<R: Rng> CostEvaluator for SampledEvaluator<'_, R> {
    type Error = Error;

    fn evaluate(&mut self, _index: usize, theta: &ParamVector) -> Result<f64> {
        let est = cost_sampled(&self.config, theta, self.obs, self.shots, &mut self.rng)?;
        self.variances.push(est.variance);
        Ok(est.value)
    }

    fn shots_per_evaluation(&self) -> usize {
        self.shots
    }
}

/// Gradient assembled from `2 N_P` shifted evaluations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradientEstimate {
    pub values: Vec<f64>,
    pub shots_used: usize,
    pub evaluations: usize,
}

impl GradientEstimate {
    /// Build from the `2 N_P` evaluation results in schedule order.
    pub fn from_evaluations(costs: &[f64], shots_per_evaluation: usize) -> Result<Self> {
        if !costs.len().is_multiple_of(2) {
            return Err(input_err!("odd number of shifted evaluations ({})", costs.len()));
        }
        Ok(GradientEstimate {
            values: costs.chunks_exact(2).map(|pm| 0.5 * (pm[0] - pm[1])).collect(),
            shots_used: costs.len() * shots_per_evaluation,
            evaluations: costs.len(),
        })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn norm1(&self) -> f64 {
        self.values.iter().map(|g| g.abs()).sum()
    }
}

/// `||a - b||_1 / ||reference||_1`; infinite when the reference vanishes and
/// the difference does not.
pub fn relative_error(estimate: &[f64], reference: &[f64]) -> f64 {
    let diff: f64 = estimate.iter().zip(reference).map(|(a, b)| (a - b).abs()).sum();
    let norm: f64 = reference.iter().map(|g| g.abs()).sum();
    if diff == 0.0 {
        0.0
    } else {
        diff / norm
    }
}

/// Parameter-shift gradient `g_i = (f(theta + pi/2 e_i) - f(theta - pi/2 e_i)) / 2`.
///
/// Exactly `2 N_P` calls, `i` ascending and `+` before `-`. The first
/// evaluator failure is returned unchanged.
pub fn param_shift_gradient<E: CostEvaluator>(
    config: &AnsatzConfig,
    theta: &ParamVector,
    evaluator: &mut E,
) -> std::result::Result<GradientEstimate, E::Error>
where
    E::Error: From<Error>,
{
    check_len(config, theta)?;
    let mut costs = Vec::with_capacity(2 * theta.len());
    for i in 0..theta.len() {
        costs.push(evaluator.evaluate(2 * i, &theta.shifted(i, FRAC_PI_2))?);
        costs.push(evaluator.evaluate(2 * i + 1, &theta.shifted(i, -FRAC_PI_2))?);
    }
    Ok(GradientEstimate::from_evaluations(&costs, evaluator.shots_per_evaluation())?)
}

/// Exact gradient through the statevector.
pub fn exact_gradient(config: &AnsatzConfig, theta: &ParamVector, obs: &PauliObservable) -> Result<GradientEstimate> {
    param_shift_gradient(config, theta, &mut ExactEvaluator { config: *config, obs })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hamiltonian::{build_tfim, LatticeSpec, PauliString};
    use std::f64::consts::PI;

    fn z_obs(n: usize) -> PauliObservable {
        let s: String = "Z".repeat(n);
        PauliObservable::new(n, vec![(1.0, s.parse::<PauliString>().unwrap())]).unwrap()
    }

    #[test]
    fn circuit_shapes() {
        let c = AnsatzConfig::new(1, 1).unwrap();
        assert_eq!(build_circuit(&c, &ParamVector(vec![0.4])).unwrap(), vec![Gate::Ry { qubit: 0, angle: 0.4 }]);

        let c = AnsatzConfig::new(2, 1).unwrap();
        assert_eq!(
            build_circuit(&c, &ParamVector(vec![0.1, 0.2])).unwrap(),
            vec![Gate::Ry { qubit: 0, angle: 0.1 }, Gate::Ry { qubit: 1, angle: 0.2 }, Gate::Cnot { control: 0, target: 1 }]
        );

        let c = AnsatzConfig::new(3, 2).unwrap();
        let gates = build_circuit(&c, &ParamVector::zeros(6)).unwrap();
        assert_eq!(gates.len(), 10);
        assert_eq!(gates.iter().filter(|g| matches!(g, Gate::Cnot { .. })).count(), 4);
        assert!(build_circuit(&c, &ParamVector::zeros(5)).is_err());
    }

    #[test]
    fn single_qubit_cost_is_cosine() {
        let c = AnsatzConfig::new(1, 1).unwrap();
        for t in [0.0, 0.3, 1.7, -2.2] {
            assert!((cost_exact(&c, &ParamVector(vec![t]), &z_obs(1)).unwrap() - f64::cos(t)).abs() < 1e-14);
        }
    }

    #[test]
    fn zero_angles_on_tfim() {
        let c = AnsatzConfig::new(4, 2).unwrap();
        let o = build_tfim(LatticeSpec::new(2, 2).unwrap(), 0.2);
        assert!((cost_exact(&c, &ParamVector::zeros(8), &o).unwrap() - 4.0).abs() < 1e-14);
    }

    #[test]
    fn gradient_of_cosine() {
        let c = AnsatzConfig::new(1, 1).unwrap();
        let g = exact_gradient(&c, &ParamVector(vec![PI / 2.0]), &z_obs(1)).unwrap();
        assert!((g.values[0] + 1.0).abs() < 1e-14);
    }

    #[test]
    fn evaluation_count_and_order() {
        let c = AnsatzConfig::new(2, 2).unwrap();
        let o = z_obs(2);
        let theta = ParamVector(vec![0.1, 0.2, 0.3, 0.4]);
        let mut seen = Vec::new();
        let mut eval = |i: usize, t: &ParamVector| -> Result<f64> {
            seen.push((i, t.clone()));
            cost_exact(&c, t, &o)
        };
        let g = param_shift_gradient(&c, &theta, &mut eval).unwrap();
        assert_eq!(g.evaluations, 8);
        assert_eq!(seen.len(), 8);
        for (k, (i, t)) in seen.iter().enumerate() {
            assert_eq!(*i, k);
            let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
            assert!((t[k / 2] - theta[k / 2] - sign * FRAC_PI_2).abs() < 1e-15);
        }
    }

    #[test]
    fn evaluator_failure_propagates() {
        let c = AnsatzConfig::new(2, 1).unwrap();
        let mut calls = 0;
        let mut eval = |i: usize, _: &ParamVector| -> Result<f64> {
            calls += 1;
            if i == 2 {
                Err(Error::Communication("boom".into()))
            } else {
                Ok(0.0)
            }
        };
        let err = param_shift_gradient(&c, &ParamVector::zeros(2), &mut eval).unwrap_err();
        assert_eq!(err, Error::Communication("boom".into()));
        assert_eq!(calls, 3);
    }

    #[test]
    fn empty_observable_has_zero_gradient() {
        let c = AnsatzConfig::new(2, 1).unwrap();
        let o = PauliObservable::new(2, vec![]).unwrap();
        let g = exact_gradient(&c, &ParamVector(vec![0.3, -1.0]), &o).unwrap();
        assert_eq!(g.values, vec![0.0, 0.0]);
    }

    #[test]
    fn relative_error_cases() {
        assert_eq!(relative_error(&[1.0, 2.0], &[1.0, 2.0]), 0.0);
        assert!((relative_error(&[1.5, 2.0], &[1.0, -1.0]) - 3.5 / 2.0).abs() < 1e-15);
        assert!(relative_error(&[1.0], &[0.0]).is_infinite());
    }
}
