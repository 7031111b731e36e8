//! QFT-based fidelity kernel.
//!
//! The embedding of a window `w` is `U(w) = V(w) · QFT · A(w)`, where `A`
//! loads `w` into the amplitudes, `QFT` moves it to the frequency basis and
//! `V` is a data-dependent layer of alternating `RX`/`RY` rotations that keeps
//! `QFT` and `QFT†` from cancelling in `U†(x) U(y)`. The kernel value is the
//! probability of reading `|0...0>` after `U(y)` followed by `U†(x)`.
//!
//! Besides the circuit, this module carries two closed forms of the same
//! quantity used as correctness oracles: the trace form `Σ σ_pk R_pk` with
//! `σ = ỹ yᵀ` and `R = V†(x)V(y)`, and the Ω-matrix expansion of `σ`.

use std::f64::consts::PI;
use std::ops::Range;

use nalgebra::DMatrix;
use num_complex::Complex64;
use thiserror::Error;

use crate::qsim::{self, Rotation, SimError, Statevector};

pub type CMatrix = DMatrix<Complex64>;

/// Accepted deviation of a window's L2 norm from 1.
pub const WINDOW_NORM_TOL: f64 = 1e-8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum KernelError {
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error("window length {got} does not match layout dimension {expected}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("window length {0} is not a power of two")]
    NotPowerOfTwo(usize),
    #[error("window has norm {0}, expected 1")]
    NotNormalized(f64),
    #[error("index ({l}, {v}) out of range for dimension {dim}")]
    IndexOutOfRange { l: usize, v: usize, dim: usize },
}

/// Gate placement of the protective layer on `n` qubits.
///
/// With `2^n = a·n + b`, wires `0..n-1` carry `a` alternating rotations
/// starting with `RX` and the last wire carries `a + b`. Window entries are
/// consumed in order: wire `m` reads `param_slices[m]`.
#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize)]
pub struct ProtectiveLayout {
    pub n_qubits: usize,
    pub a: usize,
    pub b: usize,
    pub per_qubit_gates: Vec<Vec<Rotation>>,
    /// Zero-based, half-open ranges into the window.
    pub param_slices: Vec<Range<usize>>,
}

impl ProtectiveLayout {
    pub fn new(n_qubits: usize) -> Result<Self, KernelError> {
        if n_qubits == 0 || n_qubits > qsim::MAX_QUBITS {
            return Err(SimError::BadRegisterSize(n_qubits).into());
        }
        let dim = 1usize << n_qubits;
        let a = dim / n_qubits;
        let b = dim % n_qubits;
        let alternating = |count: usize| -> Vec<Rotation> {
            (0..count)
                .map(|i| if i % 2 == 0 { Rotation::Rx } else { Rotation::Ry })
                .collect()
        };
        let mut per_qubit_gates = Vec::with_capacity(n_qubits);
        let mut param_slices = Vec::with_capacity(n_qubits);
        for m in 0..n_qubits {
            let count = if m + 1 == n_qubits { a + b } else { a };
            per_qubit_gates.push(alternating(count));
            param_slices.push(m * a..m * a + count);
        }
        Ok(Self {
            n_qubits,
            a,
            b,
            per_qubit_gates,
            param_slices,
        })
    }

    pub fn dim(&self) -> usize {
        1 << self.n_qubits
    }

    pub fn gate_counts(&self) -> Vec<usize> {
        self.per_qubit_gates.iter().map(Vec::len).collect()
    }

    /// `(wire, rotation, window index)` in application order.
    pub fn gates(&self) -> impl Iterator<Item = (usize, Rotation, usize)> + '_ {
        self.per_qubit_gates
            .iter()
            .zip(&self.param_slices)
            .enumerate()
            .flat_map(|(wire, (gates, slice))| {
                gates
                    .iter()
                    .zip(slice.clone())
                    .map(move |(&rot, idx)| (wire, rot, idx))
            })
    }
}

/// Builds the Euclidean-division layout for `n` qubits.
pub fn build_protective_layout(n_qubits: usize) -> Result<ProtectiveLayout, KernelError> {
    ProtectiveLayout::new(n_qubits)
}

/// A unit-norm window of one feature.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowVector {
    pub feature_id: String,
    values: Vec<f64>,
    pub start_index: usize,
}

impl WindowVector {
    pub fn new(
        feature_id: impl Into<String>,
        values: Vec<f64>,
        start_index: usize,
    ) -> Result<Self, KernelError> {
        check_window(&values)?;
        Ok(Self {
            feature_id: feature_id.into(),
            values,
            start_index,
        })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn n_qubits(&self) -> usize {
        self.values.len().trailing_zeros() as usize
    }
}

fn check_window(values: &[f64]) -> Result<(), KernelError> {
    if values.len() < 2 || !values.len().is_power_of_two() {
        return Err(KernelError::NotPowerOfTwo(values.len()));
    }
    let norm = values.iter().map(|v| v * v).sum::<f64>().sqrt();
    if !norm.is_finite() || (norm - 1.0).abs() > WINDOW_NORM_TOL {
        return Err(KernelError::NotNormalized(norm));
    }
    Ok(())
}

/// Rotation convention used by the circuit path.
///
/// `FlippedRx` negates every `RX` angle. It exists only so the verification
/// suite can prove that it detects a wrong gate convention.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum GateConvention {
    #[default]
    Standard,
    FlippedRx,
}

impl GateConvention {
    fn matrix(self, rot: Rotation, angle: f64) -> [[Complex64; 2]; 2] {
        match (self, rot) {
            (GateConvention::FlippedRx, Rotation::Rx) => rot.matrix(-angle),
            _ => rot.matrix(angle),
        }
    }
}

/// Applies `V(angles)`, or `V†(angles)` when `adjoint` is set.
///
/// Angles are not required to be normalized.
pub fn apply_protective_layer(
    state: &Statevector,
    layout: &ProtectiveLayout,
    angles: &[f64],
    adjoint: bool,
) -> Result<Statevector, KernelError> {
    let mut out = state.clone();
    protective_layer_in_place(&mut out, layout, angles, adjoint, GateConvention::Standard)?;
    Ok(out)
}

fn protective_layer_in_place(
    state: &mut Statevector,
    layout: &ProtectiveLayout,
    angles: &[f64],
    adjoint: bool,
    convention: GateConvention,
) -> Result<(), KernelError> {
    if angles.len() != layout.dim() {
        return Err(KernelError::LengthMismatch {
            expected: layout.dim(),
            got: angles.len(),
        });
    }
    if state.n_qubits() != layout.n_qubits {
        return Err(KernelError::LengthMismatch {
            expected: layout.dim(),
            got: state.dim(),
        });
    }
    if adjoint {
        let gates: Vec<_> = layout.gates().collect();
        for &(wire, rot, idx) in gates.iter().rev() {
            state.apply_matrix_in_place(wire, &convention.matrix(rot, -angles[idx]))?;
        }
    } else {
        for (wire, rot, idx) in layout.gates() {
            state.apply_matrix_in_place(wire, &convention.matrix(rot, angles[idx]))?;
        }
    }
    Ok(())
}

/// Householder reflection `A(x) = I − 2uuᵀ` with `u ∝ x − e₀`.
///
/// It is real, symmetric and orthogonal, maps `|0>` to `|x>`, and is its own
/// adjoint, so the same routine realizes both `A(x)` and `A†(x)`.
fn apply_encoding_reflection(state: &mut Statevector, x: &[f64]) {
    let mut u = x.to_vec();
    u[0] -= 1.0;
    let norm = u.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm < 1e-14 {
        return;
    }
    u.iter_mut().for_each(|v| *v /= norm);
    let proj: Complex64 = state
        .amplitudes()
        .iter()
        .zip(&u)
        .map(|(a, &w)| a * w)
        .sum();
    let amps: Vec<Complex64> = state
        .amplitudes()
        .iter()
        .zip(&u)
        .map(|(a, &w)| a - proj * (2.0 * w))
        .collect();
    *state = Statevector::from_amplitudes(amps).expect("length preserved");
}

/// Simulated kernel circuit.
#[derive(Debug, Clone)]
pub struct KernelCircuit {
    pub layout: ProtectiveLayout,
    /// When false, `V` is the identity and `QFT†·QFT` cancels.
    pub protective: bool,
    pub convention: GateConvention,
}

impl KernelCircuit {
    pub fn new(layout: ProtectiveLayout) -> Self {
        Self {
            layout,
            protective: true,
            convention: GateConvention::Standard,
        }
    }

    pub fn without_protective_layer(layout: ProtectiveLayout) -> Self {
        Self {
            protective: false,
            ..Self::new(layout)
        }
    }

    pub fn with_convention(mut self, convention: GateConvention) -> Self {
        self.convention = convention;
        self
    }

    /// `U(w)|0>`.
    pub fn embed(&self, window: &[f64]) -> Result<Statevector, KernelError> {
        let mut state = qsim::amplitude_encode(window, self.layout.n_qubits)?;
        state.qft_in_place();
        if self.protective {
            protective_layer_in_place(&mut state, &self.layout, window, false, self.convention)?;
        }
        Ok(state)
    }

    /// Runs `U(y)` then `U†(x)` from `|0...0>` and reads the zero-state
    /// probability, clamped to `[0, 1]`.
    pub fn value(&self, x: &[f64], y: &[f64]) -> Result<f64, KernelError> {
        check_window(x)?;
        check_window(y)?;
        if x.len() != self.layout.dim() || y.len() != self.layout.dim() {
            return Err(KernelError::LengthMismatch {
                expected: self.layout.dim(),
                got: if x.len() != self.layout.dim() { x.len() } else { y.len() },
            });
        }
        let mut state = Statevector::zero(self.layout.n_qubits)?;
        apply_encoding_reflection(&mut state, y);
        state.qft_in_place();
        if self.protective {
            protective_layer_in_place(&mut state, &self.layout, y, false, self.convention)?;
            protective_layer_in_place(&mut state, &self.layout, x, true, self.convention)?;
        }
        state.inverse_qft_in_place();
        apply_encoding_reflection(&mut state, x);
        Ok(qsim::fidelity_with_zero(&state).clamp(0.0, 1.0))
    }
}

/// Kernel value from the simulated circuit.
pub fn qft_kernel_value(
    x: &WindowVector,
    y: &WindowVector,
    layout: &ProtectiveLayout,
) -> Result<f64, KernelError> {
    KernelCircuit::new(layout.clone()).value(x.values(), y.values())
}

/// Fidelity between two already-embedded states, clamped to `[0, 1]`.
pub fn fidelity(a: &Statevector, b: &Statevector) -> f64 {
    a.inner(b).norm_sqr().clamp(0.0, 1.0)
}

fn check_pair(
    x: &[f64],
    y: &[f64],
    layout: &ProtectiveLayout,
) -> Result<(), KernelError> {
    check_window(x)?;
    check_window(y)?;
    for len in [x.len(), y.len()] {
        if len != layout.dim() {
            return Err(KernelError::LengthMismatch {
                expected: layout.dim(),
                got: len,
            });
        }
    }
    Ok(())
}

/// Direct DFT with `exp(sign · 2πi vk/N)` and `1/√N` scaling, O(N²).
fn dft_direct(w: &[f64], sign: f64) -> Vec<Complex64> {
    let n = w.len();
    let scale = 1.0 / (n as f64).sqrt();
    (0..n)
        .map(|k| {
            w.iter()
                .enumerate()
                .map(|(v, &wv)| {
                    let phase = sign * 2.0 * PI * ((v * k) % n) as f64 / n as f64;
                    Complex64::from_polar(wv, phase)
                })
                .sum::<Complex64>()
                * scale
        })
        .collect()
}

/// `σ_pk = ỹ_p(x) · y_k(y)`.
pub fn sigma_matrix(x: &[f64], y: &[f64]) -> CMatrix {
    let conj_coeffs = dft_direct(x, -1.0);
    let coeffs = dft_direct(y, 1.0);
    CMatrix::from_fn(x.len(), y.len(), |p, k| conj_coeffs[p] * coeffs[k])
}

fn mat2(m: [[Complex64; 2]; 2]) -> CMatrix {
    CMatrix::from_row_slice(2, 2, &[m[0][0], m[0][1], m[1][0], m[1][1]])
}

fn wire_block(layout: &ProtectiveLayout, wire: usize, w: &[f64]) -> CMatrix {
    let mut block = CMatrix::identity(2, 2);
    for (&rot, idx) in layout.per_qubit_gates[wire]
        .iter()
        .zip(layout.param_slices[wire].clone())
    {
        block = mat2(rot.matrix(w[idx])) * block;
    }
    block
}

/// `R = V†(x)·V(y)`, assembled wire by wire as
/// `(ordered x-gates)† · (ordered y-gates)` and Kronecker-multiplied with
/// wire 0 as the leftmost factor.
pub fn rotation_product_matrix(layout: &ProtectiveLayout, x: &[f64], y: &[f64]) -> CMatrix {
    let mut r = CMatrix::identity(1, 1);
    for wire in 0..layout.n_qubits {
        let local = wire_block(layout, wire, x).adjoint() * wire_block(layout, wire, y);
        r = r.kronecker(&local);
    }
    r
}

/// Elementwise contraction `Σ_pk σ_pk R_pk`.
fn contract(sigma: &CMatrix, r: &CMatrix) -> Complex64 {
    sigma.zip_map(r, |s, q| s * q).sum()
}

/// Closed-form kernel `|Σ_pk σ_pk R_pk|²` from DFT coefficients and the
/// rotation product, without simulating the circuit.
pub fn trace_formula_kernel(
    x: &WindowVector,
    y: &WindowVector,
    layout: &ProtectiveLayout,
) -> Result<f64, KernelError> {
    trace_formula_value(x.values(), y.values(), layout)
}

pub fn trace_formula_value(
    x: &[f64],
    y: &[f64],
    layout: &ProtectiveLayout,
) -> Result<f64, KernelError> {
    check_pair(x, y, layout)?;
    let sigma = sigma_matrix(x, y);
    let r = rotation_product_matrix(layout, x, y);
    Ok(contract(&sigma, &r).norm_sqr().clamp(0.0, 1.0))
}

/// `Ω^{(l,v)}_{pk} = ω^{vk − lp}` with `ω = exp(2πi/N)`.
pub fn omega_matrix(l: usize, v: usize, dim: usize) -> Result<CMatrix, KernelError> {
    if l >= dim || v >= dim {
        return Err(KernelError::IndexOutOfRange { l, v, dim });
    }
    Ok(CMatrix::from_fn(dim, dim, |p, k| {
        let exponent = ((v * k) % dim) as f64 - ((l * p) % dim) as f64;
        Complex64::from_polar(1.0, 2.0 * PI * exponent / dim as f64)
    }))
}

/// `σ = (1/N) Σ_{l,v} x_l y_v Ω^{(l,v)}`.
pub fn sigma_from_omega(x: &[f64], y: &[f64]) -> Result<CMatrix, KernelError> {
    let dim = x.len();
    let mut sigma = CMatrix::zeros(dim, dim);
    for l in 0..dim {
        for v in 0..dim {
            let beta = x[l] * y[v];
            if beta != 0.0 {
                sigma += omega_matrix(l, v, dim)? * Complex64::new(beta, 0.0);
            }
        }
    }
    Ok(sigma / Complex64::new(dim as f64, 0.0))
}

/// Kernel as `|(1/N) Σ_{l,v} β_lv ⟨Ω^{(l,v)}, R⟩|²`, summing the
/// contraction of every Ω term individually.
pub fn omega_expansion_kernel(
    x: &WindowVector,
    y: &WindowVector,
    layout: &ProtectiveLayout,
) -> Result<f64, KernelError> {
    let (xv, yv) = (x.values(), y.values());
    check_pair(xv, yv, layout)?;
    let dim = layout.dim();
    let r = rotation_product_matrix(layout, xv, yv);
    let mut total = Complex64::new(0.0, 0.0);
    for l in 0..dim {
        for v in 0..dim {
            total += contract(&omega_matrix(l, v, dim)?, &r) * (xv[l] * yv[v]);
        }
    }
    Ok((total / dim as f64).norm_sqr().clamp(0.0, 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qsim::SingleQubitGate;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn unit(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
        let v: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
        let n = v.iter().map(|a| a * a).sum::<f64>().sqrt();
        v.into_iter().map(|a| a / n).collect()
    }

    fn window(values: Vec<f64>) -> WindowVector {
        WindowVector::new("f", values, 0).unwrap()
    }

    #[test]
    fn layout_three_qubits() {
        let l = build_protective_layout(3).unwrap();
        assert_eq!((l.a, l.b), (2, 2));
        assert_eq!(l.gate_counts(), vec![2, 2, 4]);
        use Rotation::*;
        assert_eq!(
            l.per_qubit_gates,
            vec![vec![Rx, Ry], vec![Rx, Ry], vec![Rx, Ry, Rx, Ry]]
        );
        assert_eq!(l.param_slices, vec![0..2, 2..4, 4..8]);
    }

    #[test]
    fn layout_one_qubit() {
        let l = build_protective_layout(1).unwrap();
        assert_eq!((l.a, l.b), (2, 0));
        assert_eq!(l.per_qubit_gates, vec![vec![Rotation::Rx, Rotation::Ry]]);
    }

    #[test]
    fn layout_five_qubits() {
        let l = build_protective_layout(5).unwrap();
        assert_eq!((l.a, l.b), (6, 2));
        assert_eq!(l.gate_counts(), vec![6, 6, 6, 6, 8]);
        for seq in &l.per_qubit_gates {
            assert_eq!(*seq.last().unwrap(), Rotation::Ry);
        }
    }

    #[test]
    fn layout_invariants_hold_for_all_sizes() {
        for n in 1..=12 {
            let l = build_protective_layout(n).unwrap();
            assert_eq!(l.a * n + l.b, 1 << n);
            assert!(l.b < n);
            let last_is_rx = |seq: &Vec<Rotation>| *seq.last().unwrap() == Rotation::Rx;
            for (m, seq) in l.per_qubit_gates.iter().enumerate() {
                assert_eq!(seq[0], Rotation::Rx);
                for pair in seq.windows(2) {
                    assert_ne!(pair[0], pair[1]);
                }
                if m + 1 < n {
                    assert_eq!(seq.len(), l.a);
                    assert_eq!(last_is_rx(seq), l.a % 2 == 1);
                } else {
                    assert_eq!(seq.len(), l.a + l.b);
                    assert_eq!(last_is_rx(seq), (l.a + l.b) % 2 == 1);
                }
            }
            let covered: Vec<usize> = l.param_slices.iter().flat_map(|r| r.clone()).collect();
            assert_eq!(covered, (0..1 << n).collect::<Vec<_>>());
        }
    }

    #[test]
    fn zero_angles_leave_state_unchanged() {
        let layout = build_protective_layout(3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let s = qsim::amplitude_encode(&unit(&mut rng, 8), 3).unwrap();
        let out = apply_protective_layer(&s, &layout, &[0.0; 8], false).unwrap();
        assert_eq!(out, s);
    }

    #[test]
    fn layer_then_adjoint_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for n in 1..=5 {
            let layout = build_protective_layout(n).unwrap();
            let s = qsim::amplitude_encode(&unit(&mut rng, 1 << n), n).unwrap();
            let w = unit(&mut rng, 1 << n);
            let fwd = apply_protective_layer(&s, &layout, &w, false).unwrap();
            let back = apply_protective_layer(&fwd, &layout, &w, true).unwrap();
            for (a, b) in back.amplitudes().iter().zip(s.amplitudes()) {
                assert!((a - b).norm() < 1e-10);
            }
        }
    }

    #[test]
    fn single_nonzero_angle_matches_dense_kronecker() {
        let layout = build_protective_layout(3).unwrap();
        let mut w = vec![0.0; 8];
        w[0] = 1.0;
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let s = qsim::amplitude_encode(&unit(&mut rng, 8), 3).unwrap();
        let out = apply_protective_layer(&s, &layout, &w, false).unwrap();

        let rx = mat2(Rotation::Rx.matrix(1.0));
        let dense = rx
            .kronecker(&CMatrix::identity(2, 2))
            .kronecker(&CMatrix::identity(2, 2));
        let v = nalgebra::DVector::from_column_slice(s.amplitudes());
        let expect = dense * v;
        for (a, b) in out.amplitudes().iter().zip(expect.iter()) {
            assert!((a - b).norm() < 1e-12);
        }
        let via_gate = qsim::apply_gate(&s, &SingleQubitGate::rx(1.0, 0)).unwrap();
        assert_eq!(via_gate, out);
    }

    #[test]
    fn layer_length_mismatch() {
        let layout = build_protective_layout(2).unwrap();
        let s = Statevector::zero(2).unwrap();
        assert!(matches!(
            apply_protective_layer(&s, &layout, &[0.0; 3], false),
            Err(KernelError::LengthMismatch { .. })
        ));
    }

    #[test]
    fn encoding_reflection_maps_zero_to_window() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for n in 1..=5 {
            let x = unit(&mut rng, 1 << n);
            let mut s = Statevector::zero(n).unwrap();
            apply_encoding_reflection(&mut s, &x);
            for (a, &b) in s.amplitudes().iter().zip(&x) {
                assert!((a - Complex64::new(b, 0.0)).norm() < 1e-12);
            }
            apply_encoding_reflection(&mut s, &x);
            assert!((qsim::fidelity_with_zero(&s) - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn self_similarity_and_symmetry() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for n in 1..=5 {
            let layout = build_protective_layout(n).unwrap();
            let x = window(unit(&mut rng, 1 << n));
            let y = window(unit(&mut rng, 1 << n));
            assert!((qft_kernel_value(&x, &x, &layout).unwrap() - 1.0).abs() < 1e-10);
            let kxy = qft_kernel_value(&x, &y, &layout).unwrap();
            let kyx = qft_kernel_value(&y, &x, &layout).unwrap();
            assert!((kxy - kyx).abs() < 1e-12);
            assert!((0.0..=1.0).contains(&kxy));
        }
    }

    #[test]
    fn basis_pair_matches_trace_formula() {
        let layout = build_protective_layout(2).unwrap();
        let x = window(vec![1.0, 0.0, 0.0, 0.0]);
        let y = window(vec![0.0, 1.0, 0.0, 0.0]);
        let circuit = qft_kernel_value(&x, &y, &layout).unwrap();
        let formula = trace_formula_kernel(&x, &y, &layout).unwrap();
        assert!((circuit - formula).abs() < 1e-10);
    }

    #[test]
    fn circuit_matches_trace_formula_random() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for n in 1..=5 {
            let layout = build_protective_layout(n).unwrap();
            for _ in 0..40 {
                let x = window(unit(&mut rng, 1 << n));
                let y = window(unit(&mut rng, 1 << n));
                let circuit = qft_kernel_value(&x, &y, &layout).unwrap();
                let formula = trace_formula_kernel(&x, &y, &layout).unwrap();
                assert!((circuit - formula).abs() < 1e-9, "n={n}");
            }
        }
    }

    #[test]
    fn trace_formula_self_is_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let layout = build_protective_layout(4).unwrap();
        let x = window(unit(&mut rng, 16));
        assert!((trace_formula_kernel(&x, &x, &layout).unwrap() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn embedded_fidelity_matches_circuit() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let layout = build_protective_layout(5).unwrap();
        let circuit = KernelCircuit::new(layout);
        for _ in 0..20 {
            let x = unit(&mut rng, 32);
            let y = unit(&mut rng, 32);
            let via_states = fidelity(&circuit.embed(&x).unwrap(), &circuit.embed(&y).unwrap());
            assert!((via_states - circuit.value(&x, &y).unwrap()).abs() < 1e-12);
        }
    }

    #[test]
    fn omega_examples() {
        let o = omega_matrix(0, 0, 4).unwrap();
        assert!(o.iter().all(|z| (z - Complex64::new(1.0, 0.0)).norm() < 1e-15));
        let o = omega_matrix(0, 1, 2).unwrap();
        let want = [[1.0, -1.0], [1.0, -1.0]];
        for p in 0..2 {
            for k in 0..2 {
                assert!((o[(p, k)] - Complex64::new(want[p][k], 0.0)).norm() < 1e-15);
            }
        }
        assert!(matches!(
            omega_matrix(4, 0, 4),
            Err(KernelError::IndexOutOfRange { .. })
        ));
    }

    #[test]
    fn sigma_from_omega_matches_direct() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        for n in 1..=3 {
            for _ in 0..10 {
                let x = unit(&mut rng, 1 << n);
                let y = unit(&mut rng, 1 << n);
                let direct = sigma_matrix(&x, &y);
                let expanded = sigma_from_omega(&x, &y).unwrap();
                assert!((direct - expanded).norm() < 1e-10);
            }
        }
    }

    #[test]
    fn omega_expansion_matches_trace_form() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for n in 1..=3 {
            let layout = build_protective_layout(n).unwrap();
            for _ in 0..10 {
                let x = window(unit(&mut rng, 1 << n));
                let y = window(unit(&mut rng, 1 << n));
                let a = omega_expansion_kernel(&x, &y, &layout).unwrap();
                let b = trace_formula_kernel(&x, &y, &layout).unwrap();
                assert!((a - b).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn identity_layer_reduces_to_overlap() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for n in 1..=5 {
            let circuit = KernelCircuit::without_protective_layer(build_protective_layout(n).unwrap());
            let x = unit(&mut rng, 1 << n);
            let y = unit(&mut rng, 1 << n);
            let overlap: f64 = x.iter().zip(&y).map(|(a, b)| a * b).sum();
            assert!((circuit.value(&x, &y).unwrap() - overlap * overlap).abs() < 1e-10);
        }
    }

    #[test]
    fn flipped_convention_is_detectable() {
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        let layout = build_protective_layout(3).unwrap();
        let bad = KernelCircuit::new(layout.clone()).with_convention(GateConvention::FlippedRx);
        let worst = (0..20)
            .map(|_| {
                let x = unit(&mut rng, 8);
                let y = unit(&mut rng, 8);
                (bad.value(&x, &y).unwrap() - trace_formula_value(&x, &y, &layout).unwrap()).abs()
            })
            .fold(0.0, f64::max);
        assert!(worst > 1e-6);
    }

    #[test]
    fn window_validation() {
        assert!(matches!(
            WindowVector::new("f", vec![1.0, 0.0, 0.0], 0),
            Err(KernelError::NotPowerOfTwo(3))
        ));
        assert!(matches!(
            WindowVector::new("f", vec![1.0, 1.0], 0),
            Err(KernelError::NotNormalized(_))
        ));
    }
}
