//! Noiseless statevector simulation for small registers.
//!
//! Only the operations the kernel circuit needs are provided: amplitude
//! encoding, the quantum Fourier transform and its inverse, and single-qubit
//! `RX`/`RY` rotations. Basis label `|i>` is amplitude index `i`, and qubit 0
//! is the most significant bit of that label.

use std::f64::consts::PI;

use num_complex::Complex64;
use thiserror::Error;

/// Tolerance on the input norm accepted by [`amplitude_encode`].
pub const ENCODE_NORM_TOL: f64 = 1e-8;

/// Largest register the simulator accepts.
pub const MAX_QUBITS: usize = 32;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("expected {expected} amplitudes for {n_qubits} qubits, got {got}")]
    LengthMismatch {
        n_qubits: usize,
        expected: usize,
        got: usize,
    },
    #[error("input vector has norm {0}, expected 1")]
    NotNormalized(f64),
    #[error("target qubit {target} out of range for {n_qubits}-qubit register")]
    TargetOutOfRange { target: usize, n_qubits: usize },
    #[error("register size must be in 1..={MAX_QUBITS}, got {0}")]
    BadRegisterSize(usize),
}

/// Complex amplitudes of an `n`-qubit register.
#[derive(Debug, Clone, PartialEq)]
pub struct Statevector {
    n_qubits: usize,
    amplitudes: Vec<Complex64>,
}

impl Statevector {
    /// `|0...0>` on `n_qubits` wires.
    pub fn zero(n_qubits: usize) -> Result<Self, SimError> {
        check_register(n_qubits)?;
        let mut amplitudes = vec![Complex64::new(0.0, 0.0); 1 << n_qubits];
        amplitudes[0] = Complex64::new(1.0, 0.0);
        Ok(Self {
            n_qubits,
            amplitudes,
        })
    }

    /// Computational basis state `|index>`.
    pub fn basis(n_qubits: usize, index: usize) -> Result<Self, SimError> {
        check_register(n_qubits)?;
        let dim = 1usize << n_qubits;
        if index >= dim {
            return Err(SimError::LengthMismatch {
                n_qubits,
                expected: dim,
                got: index + 1,
            });
        }
        let mut amplitudes = vec![Complex64::new(0.0, 0.0); dim];
        amplitudes[index] = Complex64::new(1.0, 0.0);
        Ok(Self {
            n_qubits,
            amplitudes,
        })
    }

    /// Wraps raw amplitudes. Only the length is checked.
    pub fn from_amplitudes(amplitudes: Vec<Complex64>) -> Result<Self, SimError> {
        let n_qubits = register_for_len(amplitudes.len())?;
        Ok(Self {
            n_qubits,
            amplitudes,
        })
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn dim(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amplitudes
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amplitudes.iter().map(|a| a.norm_sqr()).sum()
    }

    /// `<self|other>`.
    pub fn inner(&self, other: &Statevector) -> Complex64 {
        self.amplitudes
            .iter()
            .zip(&other.amplitudes)
            .map(|(a, b)| a.conj() * b)
            .sum()
    }

    pub fn qft_in_place(&mut self) {
        fft_unitary(&mut self.amplitudes, 1.0);
    }

    pub fn inverse_qft_in_place(&mut self) {
        fft_unitary(&mut self.amplitudes, -1.0);
    }

    pub fn apply_gate_in_place(&mut self, gate: &SingleQubitGate) -> Result<(), SimError> {
        self.apply_matrix_in_place(gate.target, &gate.matrix())
    }

    /// Applies an arbitrary 2x2 matrix (row-major) to one wire.
    pub fn apply_matrix_in_place(
        &mut self,
        target: usize,
        m: &[[Complex64; 2]; 2],
    ) -> Result<(), SimError> {
        if target >= self.n_qubits {
            return Err(SimError::TargetOutOfRange {
                target,
                n_qubits: self.n_qubits,
            });
        }
        let mask = 1usize << (self.n_qubits - 1 - target);
        for i in 0..self.amplitudes.len() {
            if i & mask != 0 {
                continue;
            }
            let j = i | mask;
            let a0 = self.amplitudes[i];
            let a1 = self.amplitudes[j];
            self.amplitudes[i] = m[0][0] * a0 + m[0][1] * a1;
            self.amplitudes[j] = m[1][0] * a0 + m[1][1] * a1;
        }
        Ok(())
    }
}

fn check_register(n_qubits: usize) -> Result<(), SimError> {
    if n_qubits == 0 || n_qubits > MAX_QUBITS {
        return Err(SimError::BadRegisterSize(n_qubits));
    }
    Ok(())
}

fn register_for_len(len: usize) -> Result<usize, SimError> {
    if len < 2 || !len.is_power_of_two() {
        return Err(SimError::LengthMismatch {
            n_qubits: 0,
            expected: len.next_power_of_two().max(2),
            got: len,
        });
    }
    let n = len.trailing_zeros() as usize;
    check_register(n)?;
    Ok(n)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub enum Rotation {
    #[serde(rename = "RX")]
    Rx,
    #[serde(rename = "RY")]
    Ry,
}

impl Rotation {
    /// Half-angle rotation matrix, row-major.
    pub fn matrix(self, angle: f64) -> [[Complex64; 2]; 2] {
        let c = (angle / 2.0).cos();
        let s = (angle / 2.0).sin();
        match self {
            Rotation::Rx => [
                [Complex64::new(c, 0.0), Complex64::new(0.0, -s)],
                [Complex64::new(0.0, -s), Complex64::new(c, 0.0)],
            ],
            Rotation::Ry => [
                [Complex64::new(c, 0.0), Complex64::new(-s, 0.0)],
                [Complex64::new(s, 0.0), Complex64::new(c, 0.0)],
            ],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SingleQubitGate {
    pub kind: Rotation,
    pub angle: f64,
    pub target: usize,
}

impl SingleQubitGate {
    pub fn rx(angle: f64, target: usize) -> Self {
        Self {
            kind: Rotation::Rx,
            angle,
            target,
        }
    }

    pub fn ry(angle: f64, target: usize) -> Self {
        Self {
            kind: Rotation::Ry,
            angle,
            target,
        }
    }

    pub fn matrix(&self) -> [[Complex64; 2]; 2] {
        self.kind.matrix(self.angle)
    }
}

/// Loads a real unit vector of length `2^n` into the amplitudes of `n` qubits.
pub fn amplitude_encode(x: &[f64], n_qubits: usize) -> Result<Statevector, SimError> {
    check_register(n_qubits)?;
    let dim = 1usize << n_qubits;
    if x.len() != dim {
        return Err(SimError::LengthMismatch {
            n_qubits,
            expected: dim,
            got: x.len(),
        });
    }
    let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
    if !norm.is_finite() || (norm - 1.0).abs() > ENCODE_NORM_TOL {
        return Err(SimError::NotNormalized(norm));
    }
    Ok(Statevector {
        n_qubits,
        amplitudes: x.iter().map(|&v| Complex64::new(v, 0.0)).collect(),
    })
}

/// `y_k = N^{-1/2} sum_j x_j exp(2 pi i j k / N)`.
pub fn apply_qft(state: &Statevector) -> Statevector {
    let mut out = state.clone();
    out.qft_in_place();
    out
}

pub fn apply_inverse_qft(state: &Statevector) -> Statevector {
    let mut out = state.clone();
    out.inverse_qft_in_place();
    out
}

pub fn apply_gate(state: &Statevector, gate: &SingleQubitGate) -> Result<Statevector, SimError> {
    let mut out = state.clone();
    out.apply_gate_in_place(gate)?;
    Ok(out)
}

/// Probability of reading `|0...0>`.
pub fn fidelity_with_zero(state: &Statevector) -> f64 {
    state.amplitudes[0].norm_sqr()
}

/// In-place radix-2 transform with `exp(sign * 2 pi i jk / N)` twiddles and
/// `1/sqrt(N)` scaling.
fn fft_unitary(buf: &mut [Complex64], sign: f64) {
    let n = buf.len();
    debug_assert!(n.is_power_of_two());
    if n < 2 {
        return;
    }
    let bits = n.trailing_zeros();
    for i in 0..n {
        let j = i.reverse_bits() >> (usize::BITS - bits);
        if j > i {
            buf.swap(i, j);
        }
    }
    let mut len = 2;
    while len <= n {
        let half = len / 2;
        let step = sign * 2.0 * PI / len as f64;
        for start in (0..n).step_by(len) {
            for k in 0..half {
                let w = Complex64::from_polar(1.0, step * k as f64);
                let u = buf[start + k];
                let v = buf[start + k + half] * w;
                buf[start + k] = u + v;
                buf[start + k + half] = u - v;
            }
        }
        len <<= 1;
    }
    let scale = 1.0 / (n as f64).sqrt();
    for a in buf.iter_mut() {
        *a *= scale;
    }
}
