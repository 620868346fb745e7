//! Pauli observables, TFIM lattices and shot-based cost estimation.

mod pauli;

use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

pub use pauli::{Pauli, PauliString};

use crate::error::{input_err, Error, Result};
use crate::quantum::{DenseHermitian, StateVector};

/// One weighted Pauli term in the JSON wire format.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Term {
    pub coeff: f64,
    pub pauli: PauliString,
}

/// `O = sum_i c_i P_i` with duplicate strings merged and the one-norm cached.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(into = "Vec<Term>")]
pub struct PauliObservable {
    num_qubits: usize,
    terms: Vec<Term>,
    one_norm: f64,
}

impl PauliObservable {
    pub fn new(num_qubits: usize, terms: impl IntoIterator<Item = (f64, PauliString)>) -> Result<Self> {
        if num_qubits == 0 {
            return Err(input_err!("observable needs at least one qubit"));
        }
        let mut merged: Vec<Term> = Vec::new();
        for (coeff, pauli) in terms {
            if pauli.len() != num_qubits {
                return Err(input_err!("term {pauli} has length {} but the system has {num_qubits} qubits", pauli.len()));
            }
            if pauli.is_identity() {
                return Err(input_err!("identity terms are constant offsets and are not accepted"));
            }
            if !coeff.is_finite() {
                return Err(input_err!("non-finite coefficient on {pauli}"));
            }
            match merged.iter_mut().find(|t| t.pauli == pauli) {
                Some(t) => t.coeff += coeff,
                None => merged.push(Term { coeff, pauli }),
            }
        }
        let one_norm = merged.iter().map(|t| t.coeff.abs()).sum();
        Ok(PauliObservable { num_qubits, terms: merged, one_norm })
    }

    /// Parse the JSON list form; the qubit count is taken from the strings.
    pub fn from_terms(terms: Vec<Term>) -> Result<Self> {
        let n = terms.first().map(|t| t.pauli.len()).ok_or_else(|| input_err!("empty term list"))?;
        Self::new(n, terms.into_iter().map(|t| (t.coeff, t.pauli)))
    }

    pub fn num_qubits(&self) -> usize {
        self.num_qubits
    }

    pub fn terms(&self) -> &[Term] {
        &self.terms
    }

    /// `N_o`.
    pub fn num_terms(&self) -> usize {
        self.terms.len()
    }

    /// `sum_i |c_i|`.
    pub fn one_norm(&self) -> f64 {
        self.one_norm
    }

    /// Index of the term with the largest `|c_i|` (first on ties).
    pub fn heaviest_term(&self) -> Option<usize> {
        (0..self.terms.len()).reduce(|best, i| if self.terms[i].coeff.abs() > self.terms[best].coeff.abs() { i } else { best })
    }

    /// Exact `<psi|O|psi>`, term by term.
    pub fn expectation(&self, state: &StateVector) -> Result<f64> {
        self.terms.iter().try_fold(0.0, |acc, t| Ok(acc + t.coeff * state.pauli_expectation(&t.pauli)?))
    }

    /// Dense matrix of the observable.
    pub fn to_dense(&self) -> Result<DenseHermitian> {
        let dim = 1usize << self.num_qubits;
        let mut m = vec![Complex64::new(0.0, 0.0); dim * dim];
        for t in &self.terms {
            let mut flip = 0usize;
            let mut zmask = 0usize;
            let mut num_y = 0u32;
            for (q, &p) in t.pauli.letters().iter().enumerate() {
                let bit = 1 << (self.num_qubits - 1 - q);
                match p {
                    Pauli::I => {}
                    Pauli::X => flip |= bit,
                    Pauli::Y => {
                        flip |= bit;
                        zmask |= bit;
                        num_y += 1;
                    }
                    Pauli::Z => zmask |= bit,
                }
            }
            let y_phase = Complex64::i().powu(num_y);
            for col in 0..dim {
                let sign = if (col & zmask).count_ones().is_multiple_of(2) { 1.0 } else { -1.0 };
                m[(col ^ flip) * dim + col] += y_phase * sign * t.coeff;
            }
        }
        DenseHermitian::new(m, dim)
    }
}

impl From<PauliObservable> for Vec<Term> {
    fn from(o: PauliObservable) -> Self {
        o.terms
    }
}

impl<'de> Deserialize<'de> for PauliObservable {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let terms = Vec::<Term>::deserialize(deserializer)?;
        PauliObservable::from_terms(terms).map_err(serde::de::Error::custom)
    }
}

/// `sum_i |c_i|` of an observable.
pub fn one_norm(obs: &PauliObservable) -> f64 {
    obs.one_norm()
}

/// Open-boundary rectangular lattice. Site `(r, c)` is qubit `r * cols + c`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LatticeSpec {
    pub rows: usize,
    pub cols: usize,
}

impl LatticeSpec {
    pub fn new(rows: usize, cols: usize) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(input_err!("lattice dimensions must be positive, got {rows}x{cols}"));
        }
        Ok(LatticeSpec { rows, cols })
    }

    pub fn num_sites(&self) -> usize {
        self.rows * self.cols
    }

    /// Grid-adjacency edges, each listed once as `(lower, higher)`.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut edges = Vec::new();
        for r in 0..self.rows {
            for c in 0..self.cols {
                let s = r * self.cols + c;
                if c + 1 < self.cols {
                    edges.push((s, s + 1));
                }
                if r + 1 < self.rows {
                    edges.push((s, s + self.cols));
                }
            }
        }
        edges
    }
}

impl fmt::Display for LatticeSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}", self.rows, self.cols)
    }
}

impl FromStr for LatticeSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (r, c) = s.split_once(['x', 'X']).ok_or_else(|| input_err!("lattice must look like RxC, got {s:?}"))?;
        let parse = |v: &str| v.trim().parse::<usize>().map_err(|_| input_err!("bad lattice dimension {v:?}"));
        LatticeSpec::new(parse(r)?, parse(c)?)
    }
}

/// `H = h sum_i X_i + sum_<i,j> Z_i Z_j`. X terms are omitted when `h == 0`.
pub fn build_tfim(lattice: LatticeSpec, h: f64) -> PauliObservable {
    let n = lattice.num_sites();
    let fields = (0..n).filter(|_| h != 0.0).map(|q| (h, PauliString::with_letters(n, &[(q, Pauli::X)])));
    let couplings = lattice
        .edges()
        .into_iter()
        .map(|(a, b)| (1.0, PauliString::with_letters(n, &[(a, Pauli::Z), (b, Pauli::Z)])));
    PauliObservable::new(n, fields.chain(couplings).collect::<Vec<_>>()).expect("lattice terms are well formed")
}

/// Shots per term for a budget of `total_shots`.
///
/// Every term gets `floor(N_s / N_o)`; the remainder goes one extra shot per
/// term in descending `|c_i|` order (index order on ties).
pub fn allocate_shots(obs: &PauliObservable, total_shots: usize) -> Result<Vec<usize>> {
    let n_terms = obs.num_terms();
    if n_terms == 0 {
        return Ok(Vec::new());
    }
    if total_shots < n_terms {
        return Err(input_err!("{total_shots} shots cannot cover {n_terms} terms"));
    }
    let mut alloc = vec![total_shots / n_terms; n_terms];
    let mut order: Vec<usize> = (0..n_terms).collect();
    order.sort_by(|&a, &b| obs.terms()[b].coeff.abs().total_cmp(&obs.terms()[a].coeff.abs()).then(a.cmp(&b)));
    for &i in order.iter().take(total_shots % n_terms) {
        alloc[i] += 1;
    }
    Ok(alloc)
}

/// Map each shot index `0..N_s` of one evaluation to its term index.
pub fn shot_terms(allocation: &[usize]) -> Vec<usize> {
    allocation.iter().enumerate().flat_map(|(term, &n)| std::iter::repeat_n(term, n)).collect()
}

/// Result of a sampled cost evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostEstimate {
    pub value: f64,
    pub term_means: Vec<f64>,
    pub shots_per_term: Vec<usize>,
    /// Plug-in estimate of the estimator variance, `sum_i c_i^2 (1 - m_i^2) / n_i`.
    pub variance: f64,
}

/// Combine per-term eigenvalue samples into `sum_i c_i * mean_i`.
pub fn combine_samples(obs: &PauliObservable, samples: &[Vec<i8>]) -> Result<CostEstimate> {
    if samples.len() != obs.num_terms() {
        return Err(input_err!("{} sample groups for {} terms", samples.len(), obs.num_terms()));
    }
    let mut value = 0.0;
    let mut variance = 0.0;
    let mut term_means = Vec::with_capacity(samples.len());
    for (t, s) in obs.terms().iter().zip(samples) {
        if s.is_empty() {
            return Err(input_err!("term {} has no samples", t.pauli));
        }
        let mean = s.iter().map(|&v| v as f64).sum::<f64>() / s.len() as f64;
        value += t.coeff * mean;
        variance += t.coeff * t.coeff * (1.0 - mean * mean) / s.len() as f64;
        term_means.push(mean);
    }
    Ok(CostEstimate { value, term_means, shots_per_term: samples.iter().map(Vec::len).collect(), variance })
}

/// Estimate `<O>` on `state` from `total_shots` shots, one rotated-basis run
/// per term.
pub fn estimate_cost_detailed<R: Rng + ?Sized>(
    state: &StateVector,
    obs: &PauliObservable,
    total_shots: usize,
    rng: &mut R,
) -> Result<CostEstimate> {
    let alloc = allocate_shots(obs, total_shots)?;
    let samples = obs
        .terms()
        .iter()
        .zip(&alloc)
        .map(|(t, &n)| state.sample_pauli(&t.pauli, n, rng))
        .collect::<Result<Vec<_>>>()?;
    combine_samples(obs, &samples)
}

pub fn estimate_cost<R: Rng + ?Sized>(
    state: &StateVector,
    obs: &PauliObservable,
    total_shots: usize,
    rng: &mut R,
) -> Result<f64> {
    if obs.num_terms() == 0 {
        return Ok(0.0);
    }
    estimate_cost_detailed(state, obs, total_shots, rng).map(|e| e.value)
}
