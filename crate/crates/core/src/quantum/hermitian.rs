use num_complex::Complex64;

use super::eigen::symmetric_eigen;
use super::state::StateVector;
use crate::error::{input_err, Result};

/// Largest register the dense eigensolver accepts.
pub const MAX_DENSE_QUBITS: usize = 10;

/// Dense Hermitian matrix of dimension `2^n`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseHermitian {
    entries: Vec<Complex64>,
    dim: usize,
}

impl DenseHermitian {
    /// Validates squareness, power-of-two dimension and Hermiticity (1e-12).
    pub fn new(entries: Vec<Complex64>, dim: usize) -> Result<Self> {
        if dim < 2 || entries.len() != dim * dim {
            return Err(input_err!("expected {dim}x{dim} entries, got {}", entries.len()));
        }
        if !dim.is_power_of_two() {
            return Err(input_err!("dimension {dim} is not a power of two"));
        }
        for i in 0..dim {
            for j in 0..=i {
                let (a, b) = (entries[i * dim + j], entries[j * dim + i]);
                if (a - b.conj()).norm() > 1e-12 {
                    return Err(input_err!("matrix is not Hermitian at ({i}, {j})"));
                }
            }
        }
        Ok(DenseHermitian { entries, dim })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn entry(&self, row: usize, col: usize) -> Complex64 {
        self.entries[row * self.dim + col]
    }

    pub fn entries(&self) -> &[Complex64] {
        &self.entries
    }

    /// `<psi|H|psi>`.
    pub fn expectation(&self, state: &StateVector) -> Result<f64> {
        let amps = state.amplitudes();
        if amps.len() != self.dim {
            return Err(input_err!("state dimension {} vs matrix dimension {}", amps.len(), self.dim));
        }
        let mut acc = Complex64::new(0.0, 0.0);
        for i in 0..self.dim {
            let row: Complex64 = (0..self.dim).map(|j| self.entries[i * self.dim + j] * amps[j]).sum();
            acc += amps[i].conj() * row;
        }
        Ok(acc.re)
    }

    fn is_real(&self) -> bool {
        self.entries.iter().all(|z| z.im == 0.0)
    }

    fn check_size(&self) -> Result<()> {
        if self.dim > 1 << MAX_DENSE_QUBITS {
            return Err(input_err!("dimension {} exceeds 2^{MAX_DENSE_QUBITS}", self.dim));
        }
        Ok(())
    }

    /// Smallest eigenvalue and a normalized eigenvector for it.
    ///
    /// Complex matrices `A + iB` go through the real symmetric embedding
    /// `[[A, -B], [B, A]]`, whose spectrum is that of the original with every
    /// eigenvalue doubled.
    pub fn ground(&self) -> Result<(f64, StateVector)> {
        self.check_size()?;
        let n = self.dim;
        if self.is_real() {
            let a: Vec<f64> = self.entries.iter().map(|z| z.re).collect();
            let (vals, vecs) = symmetric_eigen(&a, n);
            let col = (0..n).map(|i| Complex64::new(vecs[i * n], 0.0)).collect();
            return normalized(vals[0], col);
        }
        let m = 2 * n;
        let mut a = vec![0.0; m * m];
        for i in 0..n {
            for j in 0..n {
                let z = self.entries[i * n + j];
                a[i * m + j] = z.re;
                a[(i + n) * m + (j + n)] = z.re;
                a[i * m + (j + n)] = -z.im;
                a[(i + n) * m + j] = z.im;
            }
        }
        let (vals, vecs) = symmetric_eigen(&a, m);
        let col = (0..n).map(|i| Complex64::new(vecs[i * m], vecs[(i + n) * m])).collect();
        normalized(vals[0], col)
    }

    /// Smallest eigenvalue.
    pub fn ground_energy(&self) -> Result<f64> {
        self.ground().map(|(e, _)| e)
    }
}

fn normalized(energy: f64, mut col: Vec<Complex64>) -> Result<(f64, StateVector)> {
    let norm: f64 = col.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    col.iter_mut().for_each(|z| *z /= norm);
    Ok((energy, StateVector::from_amplitudes(col)?))
}

/// Free-function form used by the oracle tests and the CLI.
pub fn ground_energy(h: &DenseHermitian) -> Result<f64> {
    h.ground_energy()
}
