use num_complex::Complex64;
use rand::Rng;

use super::gate::Gate;
use crate::error::{input_err, Result};
use crate::hamiltonian::{Pauli, PauliString};

const FRAC_1_SQRT_2: f64 = std::f64::consts::FRAC_1_SQRT_2;

pub type Matrix2 = [[Complex64; 2]; 2];

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

/// Dense pure state on `n` qubits. Qubit 0 is the most significant bit of
/// the basis index.
#[derive(Debug, Clone, PartialEq)]
pub struct StateVector {
    amplitudes: Vec<Complex64>,
    num_qubits: usize,
}

impl StateVector {
    /// `|0...0>` on `num_qubits` qubits.
    pub fn zero(num_qubits: usize) -> Result<Self> {
        if num_qubits == 0 {
            return Err(input_err!("a state needs at least one qubit"));
        }
        let mut amplitudes = vec![Complex64::new(0.0, 0.0); 1 << num_qubits];
        amplitudes[0] = Complex64::new(1.0, 0.0);
        Ok(StateVector { amplitudes, num_qubits })
    }

    /// Computational basis state `|index>`.
    pub fn basis(num_qubits: usize, index: usize) -> Result<Self> {
        let mut s = Self::zero(num_qubits)?;
        if index >= s.amplitudes.len() {
            return Err(input_err!("basis index {index} out of range"));
        }
        s.amplitudes[0] = c(0.0, 0.0);
        s.amplitudes[index] = c(1.0, 0.0);
        Ok(s)
    }

    /// Wrap raw amplitudes; the length must be a power of two and the vector
    /// normalized within 1e-10.
    pub fn from_amplitudes(amplitudes: Vec<Complex64>) -> Result<Self> {
        let len = amplitudes.len();
        if len < 2 || !len.is_power_of_two() {
            return Err(input_err!("amplitude count {len} is not a power of two >= 2"));
        }
        let s = StateVector { num_qubits: len.trailing_zeros() as usize, amplitudes };
        if (s.norm_sqr() - 1.0).abs() > 1e-10 {
            return Err(input_err!("state is not normalized (norm^2 = {})", s.norm_sqr()));
        }
        Ok(s)
    }

    /// Single-qubit state `a|0> + b|1>`, normalized on construction.
    pub fn single(a: Complex64, b: Complex64) -> Result<Self> {
        let n = (a.norm_sqr() + b.norm_sqr()).sqrt();
        if n == 0.0 {
            return Err(input_err!("zero vector"));
        }
        Ok(StateVector { amplitudes: vec![a / n, b / n], num_qubits: 1 })
    }

    pub fn num_qubits(&self) -> usize {
        self.num_qubits
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amplitudes
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amplitudes.iter().map(|a| a.norm_sqr()).sum()
    }

    fn mask(&self, qubit: usize) -> usize {
        1 << (self.num_qubits - 1 - qubit)
    }

    fn check_qubit(&self, qubit: usize) -> Result<()> {
        if qubit >= self.num_qubits {
            return Err(input_err!("qubit {qubit} out of range for {} qubits", self.num_qubits));
        }
        Ok(())
    }

    /// `|<self|other>|^2`.
    pub fn fidelity(&self, other: &StateVector) -> Result<f64> {
        if self.num_qubits != other.num_qubits {
            return Err(input_err!("fidelity between {} and {} qubit states", self.num_qubits, other.num_qubits));
        }
        let overlap: Complex64 = self.amplitudes.iter().zip(&other.amplitudes).map(|(a, b)| a.conj() * b).sum();
        Ok(overlap.norm_sqr())
    }

    /// Apply an arbitrary 2x2 matrix to `qubit`.
    pub fn apply_single(&mut self, qubit: usize, m: &Matrix2) -> Result<()> {
        self.check_qubit(qubit)?;
        let mask = self.mask(qubit);
        for i in 0..self.amplitudes.len() {
            if i & mask == 0 {
                let a0 = self.amplitudes[i];
                let a1 = self.amplitudes[i | mask];
                self.amplitudes[i] = m[0][0] * a0 + m[0][1] * a1;
                self.amplitudes[i | mask] = m[1][0] * a0 + m[1][1] * a1;
            }
        }
        Ok(())
    }

    pub fn apply_cz(&mut self, a: usize, b: usize) -> Result<()> {
        self.check_qubit(a)?;
        self.check_qubit(b)?;
        if a == b {
            return Err(input_err!("CZ on a single qubit {a}"));
        }
        let both = self.mask(a) | self.mask(b);
        for (i, amp) in self.amplitudes.iter_mut().enumerate() {
            if i & both == both {
                *amp = -*amp;
            }
        }
        Ok(())
    }

    pub fn apply_cnot(&mut self, control: usize, target: usize) -> Result<()> {
        self.check_qubit(control)?;
        self.check_qubit(target)?;
        if control == target {
            return Err(input_err!("CNOT with control == target ({control})"));
        }
        let (cm, tm) = (self.mask(control), self.mask(target));
        for i in 0..self.amplitudes.len() {
            if i & cm != 0 && i & tm == 0 {
                self.amplitudes.swap(i, i | tm);
            }
        }
        Ok(())
    }

    pub fn apply_gate(&mut self, gate: &Gate) -> Result<()> {
        gate.validate(self.num_qubits)?;
        match *gate {
            Gate::Rx { qubit, angle } => self.apply_single(qubit, &rx_matrix(angle)),
            Gate::Ry { qubit, angle } => self.apply_single(qubit, &ry_matrix(angle)),
            Gate::Rz { qubit, angle } => self.apply_single(qubit, &rz_matrix(angle)),
            Gate::H { qubit } => self.apply_single(qubit, &h_matrix()),
            Gate::Cz { a, b } => self.apply_cz(a, b),
            Gate::Cnot { control, target } => self.apply_cnot(control, target),
        }
    }

    pub fn apply_circuit<'a>(&mut self, gates: impl IntoIterator<Item = &'a Gate>) -> Result<()> {
        gates.into_iter().try_for_each(|g| self.apply_gate(g))
    }

    /// Exact `<psi|P|psi>`.
    pub fn pauli_expectation(&self, pauli: &PauliString) -> Result<f64> {
        if pauli.len() != self.num_qubits {
            return Err(input_err!("Pauli string of length {} on {} qubits", pauli.len(), self.num_qubits));
        }
        let mut flip = 0usize;
        let mut zmask = 0usize;
        let mut num_y = 0u32;
        for (q, &p) in pauli.letters().iter().enumerate() {
            let m = self.mask(q);
            match p {
                Pauli::I => {}
                Pauli::X => flip |= m,
                Pauli::Y => {
                    flip |= m;
                    zmask |= m;
                    num_y += 1;
                }
                Pauli::Z => zmask |= m,
            }
        }
        // P|i> = i^{#Y} (-1)^{|i & zmask|} |i ^ flip>
        let y_phase = match num_y % 4 {
            0 => c(1.0, 0.0),
            1 => c(0.0, 1.0),
            2 => c(-1.0, 0.0),
            _ => c(0.0, -1.0),
        };
        let mut acc = c(0.0, 0.0);
        for (i, &amp) in self.amplitudes.iter().enumerate() {
            let sign = if (i & zmask).count_ones().is_multiple_of(2) { 1.0 } else { -1.0 };
            acc += self.amplitudes[i ^ flip].conj() * amp * sign;
        }
        Ok((acc * y_phase).re.clamp(-1.0, 1.0))
    }

    /// Draw `shots` eigenvalues of `pauli` from the Born distribution.
    ///
    /// A Pauli string has eigenvalues `+1` and `-1` only, so the outcome of
    /// one shot is `+1` with probability `(1 + <P>) / 2`.
    pub fn sample_pauli<R: Rng + ?Sized>(&self, pauli: &PauliString, shots: usize, rng: &mut R) -> Result<Vec<i8>> {
        if shots == 0 {
            return Err(input_err!("at least one shot is required"));
        }
        let p_plus = (1.0 + self.pauli_expectation(pauli)?) / 2.0;
        Ok((0..shots).map(|_| if rng.random::<f64>() < p_plus { 1 } else { -1 }).collect())
    }

    /// Tensor a fresh single-qubit state onto the end of the register; it
    /// becomes the highest-numbered (least significant) qubit.
    pub fn push_qubit(&mut self, a: Complex64, b: Complex64) {
        let mut out = Vec::with_capacity(self.amplitudes.len() * 2);
        for &amp in &self.amplitudes {
            out.push(amp * a);
            out.push(amp * b);
        }
        self.amplitudes = out;
        self.num_qubits += 1;
    }

    /// Probability of outcome 0 (the `|+_angle>` projector) for a
    /// measurement of `qubit` in the XY-plane basis at `angle`.
    pub fn xy_outcome_probability(&self, qubit: usize, angle: f64) -> Result<f64> {
        self.check_qubit(qubit)?;
        let mask = self.mask(qubit);
        let phase = Complex64::from_polar(1.0, -angle);
        let mut p0 = 0.0;
        for i in 0..self.amplitudes.len() {
            if i & mask == 0 {
                let v = (self.amplitudes[i] + phase * self.amplitudes[i | mask]) * FRAC_1_SQRT_2;
                p0 += v.norm_sqr();
            }
        }
        Ok(p0.clamp(0.0, 1.0))
    }

    /// Measure `qubit` in the basis `|+-_angle> = (|0> +- e^{i angle}|1>)/sqrt 2`,
    /// project, and drop the qubit from the register. Returns the outcome bit
    /// (0 for `+`). A one-qubit register cannot be reduced further.
    pub fn measure_xy_and_remove<R: Rng + ?Sized>(&mut self, qubit: usize, angle: f64, rng: &mut R) -> Result<u8> {
        if self.num_qubits < 2 {
            return Err(input_err!("cannot remove the last qubit of a register"));
        }
        let p0 = self.xy_outcome_probability(qubit, angle)?;
        let bit = if rng.random::<f64>() < p0 { 0 } else { 1 };
        self.project_xy_and_remove(qubit, angle, bit)?;
        Ok(bit)
    }

    /// Post-select `qubit` on the given XY outcome and drop it. Returns the
    /// probability of that outcome before renormalizing.
    pub fn project_xy_and_remove(&mut self, qubit: usize, angle: f64, bit: u8) -> Result<f64> {
        self.check_qubit(qubit)?;
        if self.num_qubits < 2 {
            return Err(input_err!("cannot remove the last qubit of a register"));
        }
        let mask = self.mask(qubit);
        let sign = if bit == 0 { 1.0 } else { -1.0 };
        let phase = Complex64::from_polar(sign, -angle);
        let low = mask - 1;
        let mut out = Vec::with_capacity(self.amplitudes.len() / 2);
        for j in 0..self.amplitudes.len() / 2 {
            let i = ((j & !low) << 1) | (j & low);
            out.push((self.amplitudes[i] + phase * self.amplitudes[i | mask]) * FRAC_1_SQRT_2);
        }
        let p: f64 = out.iter().map(|a| a.norm_sqr()).sum();
        if p <= 1e-300 {
            return Err(input_err!("post-selected outcome has zero probability"));
        }
        let scale = 1.0 / p.sqrt();
        out.iter_mut().for_each(|a| *a *= scale);
        self.amplitudes = out;
        self.num_qubits -= 1;
        Ok(p)
    }
}

pub fn h_matrix() -> Matrix2 {
    let s = c(FRAC_1_SQRT_2, 0.0);
    [[s, s], [s, -s]]
}

pub fn rx_matrix(angle: f64) -> Matrix2 {
    let (s, co) = (angle / 2.0).sin_cos();
    [[c(co, 0.0), c(0.0, -s)], [c(0.0, -s), c(co, 0.0)]]
}

pub fn ry_matrix(angle: f64) -> Matrix2 {
    let (s, co) = (angle / 2.0).sin_cos();
    [[c(co, 0.0), c(-s, 0.0)], [c(s, 0.0), c(co, 0.0)]]
}

pub fn rz_matrix(angle: f64) -> Matrix2 {
    [[Complex64::from_polar(1.0, -angle / 2.0), c(0.0, 0.0)], [c(0.0, 0.0), Complex64::from_polar(1.0, angle / 2.0)]]
}
