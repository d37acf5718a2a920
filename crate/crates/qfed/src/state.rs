//! Dense statevector representation, gate application, Pauli expectations,
//! and state geometry primitives.
//!
//! Index convention is little-endian: qubit 0 is the least-significant bit
//! of the amplitude index, so a single-qubit gate on qubit `q` acts with
//! stride `1 << q`. Rotations follow `R_P(theta) = exp(-i * theta * P / 2)`
//! for `P` in {X, Y, Z}.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Desk-scale cap on register size (2^20 amplitudes).
pub const MAX_QUBITS: usize = 20;

/// Pauli axis of an observable or rotation generator.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PauliAxis {
    X,
    Y,
    Z,
}

/// A single-qubit Pauli measurement.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PauliObservable {
    pub axis: PauliAxis,
    pub qubit: usize,
}

impl PauliObservable {
    pub fn x(qubit: usize) -> Self {
        Self { axis: PauliAxis::X, qubit }
    }
    pub fn y(qubit: usize) -> Self {
        Self { axis: PauliAxis::Y, qubit }
    }
    pub fn z(qubit: usize) -> Self {
        Self { axis: PauliAxis::Z, qubit }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GateLabel {
    Rx,
    Ry,
    Rz,
    Fixed,
}

/// A 2x2 unitary with a label identifying its origin.
#[derive(Clone, Copy, Debug)]
pub struct SingleQubitGate {
    matrix: [[Complex64; 2]; 2],
    label: GateLabel,
}

impl SingleQubitGate {
    /// `R_X(theta) = exp(-i theta X / 2)`.
    pub fn rx(theta: f64) -> Self {
        let (c, s) = ((theta / 2.0).cos(), (theta / 2.0).sin());
        Self {
            matrix: [
                [Complex64::new(c, 0.0), Complex64::new(0.0, -s)],
                [Complex64::new(0.0, -s), Complex64::new(c, 0.0)],
            ],
            label: GateLabel::Rx,
        }
    }

    /// `R_Y(theta) = exp(-i theta Y / 2)`.
    pub fn ry(theta: f64) -> Self {
        let (c, s) = ((theta / 2.0).cos(), (theta / 2.0).sin());
        Self {
            matrix: [
                [Complex64::new(c, 0.0), Complex64::new(-s, 0.0)],
                [Complex64::new(s, 0.0), Complex64::new(c, 0.0)],
            ],
            label: GateLabel::Ry,
        }
    }

    /// `R_Z(theta) = exp(-i theta Z / 2)`.
    pub fn rz(theta: f64) -> Self {
        let half = theta / 2.0;
        Self {
            matrix: [
                [Complex64::new(half.cos(), -half.sin()), Complex64::new(0.0, 0.0)],
                [Complex64::new(0.0, 0.0), Complex64::new(half.cos(), half.sin())],
            ],
            label: GateLabel::Rz,
        }
    }

    pub fn rotation(axis: PauliAxis, theta: f64) -> Self {
        match axis {
            PauliAxis::X => Self::rx(theta),
            PauliAxis::Y => Self::ry(theta),
            PauliAxis::Z => Self::rz(theta),
        }
    }

    /// An arbitrary fixed gate; rejects matrices that are not unitary
    /// within 1e-12.
    pub fn fixed(matrix: [[Complex64; 2]; 2]) -> Result<Self> {
        // U^dagger U == I elementwise
        for i in 0..2 {
            for j in 0..2 {
                let mut acc = Complex64::new(0.0, 0.0);
                for k in 0..2 {
                    acc += matrix[k][i].conj() * matrix[k][j];
                }
                let expect = if i == j { 1.0 } else { 0.0 };
                if (acc - expect).norm() > 1e-12 {
                    return Err(Error::Argument(format!(
                        "matrix is not unitary: (U^H U)[{i}][{j}] = {acc}"
                    )));
                }
            }
        }
        Ok(Self { matrix, label: GateLabel::Fixed })
    }

    pub fn matrix(&self) -> &[[Complex64; 2]; 2] {
        &self.matrix
    }

    pub fn label(&self) -> GateLabel {
        self.label
    }
}

/// Pure state of `num_qubits` qubits as 2^n complex amplitudes.
#[derive(Clone, Debug, PartialEq)]
pub struct StateVector {
    num_qubits: usize,
    amps: Vec<Complex64>,
}

impl StateVector {
    /// `|0...0>`: amplitude 1 at index 0.
    pub fn zero_state(num_qubits: usize) -> Result<Self> {
        if num_qubits == 0 || num_qubits > MAX_QUBITS {
            return Err(Error::Config(format!(
                "qubit count must be in 1..={MAX_QUBITS}, got {num_qubits}"
            )));
        }
        let mut amps = vec![Complex64::new(0.0, 0.0); 1 << num_qubits];
        amps[0] = Complex64::new(1.0, 0.0);
        Ok(Self { num_qubits, amps })
    }

    pub fn from_amplitudes(amps: Vec<Complex64>) -> Result<Self> {
        let dim = amps.len();
        if dim < 2 || !dim.is_power_of_two() {
            return Err(Error::Argument(format!(
                "amplitude count must be a power of two >= 2, got {dim}"
            )));
        }
        let num_qubits = dim.trailing_zeros() as usize;
        if num_qubits > MAX_QUBITS {
            return Err(Error::Config(format!(
                "qubit count must be in 1..={MAX_QUBITS}, got {num_qubits}"
            )));
        }
        Ok(Self { num_qubits, amps })
    }

    pub fn num_qubits(&self) -> usize {
        self.num_qubits
    }

    pub fn dim(&self) -> usize {
        self.amps.len()
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amps
    }

    pub fn norm(&self) -> f64 {
        self.amps.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt()
    }

    /// `<self|other>`.
    pub fn inner(&self, other: &Self) -> Complex64 {
        self.amps
            .iter()
            .zip(&other.amps)
            .map(|(a, b)| a.conj() * b)
            .sum()
    }

    /// Overwrite this state's amplitudes from `src` without reallocating.
    pub(crate) fn copy_from(&mut self, src: &Self) {
        self.num_qubits = src.num_qubits;
        self.amps.resize(src.amps.len(), Complex64::new(0.0, 0.0));
        self.amps.copy_from_slice(&src.amps);
    }

    fn check_qubit(&self, qubit: usize) -> Result<()> {
        if qubit >= self.num_qubits {
            Err(Error::QubitIndex { qubit, num_qubits: self.num_qubits })
        } else {
            Ok(())
        }
    }

    /// Apply `gate` to `qubit`, returning the transformed state.
    pub fn apply_single(&self, gate: &SingleQubitGate, qubit: usize) -> Result<Self> {
        let mut out = self.clone();
        out.apply_single_mut(gate, qubit)?;
        Ok(out)
    }

    pub fn apply_single_mut(&mut self, gate: &SingleQubitGate, qubit: usize) -> Result<()> {
        self.check_qubit(qubit)?;
        let [[m00, m01], [m10, m11]] = *gate.matrix();
        let stride = 1usize << qubit;
        let mut base = 0;
        while base < self.amps.len() {
            for i in base..base + stride {
                let a = self.amps[i];
                let b = self.amps[i + stride];
                self.amps[i] = m00 * a + m01 * b;
                self.amps[i + stride] = m10 * a + m11 * b;
            }
            base += 2 * stride;
        }
        Ok(())
    }

    /// CNOT: flips `target` on basis states where `control` is set.
    pub fn apply_cnot(&self, control: usize, target: usize) -> Result<Self> {
        let mut out = self.clone();
        out.apply_cnot_mut(control, target)?;
        Ok(out)
    }

    pub fn apply_cnot_mut(&mut self, control: usize, target: usize) -> Result<()> {
        if control == target {
            return Err(Error::Argument(format!(
                "CNOT control and target must differ, both are {control}"
            )));
        }
        self.check_qubit(control)?;
        self.check_qubit(target)?;
        let cbit = 1usize << control;
        let tbit = 1usize << target;
        for i in 0..self.amps.len() {
            if i & cbit != 0 && i & tbit == 0 {
                self.amps.swap(i, i | tbit);
            }
        }
        Ok(())
    }

    /// `<psi|P|psi>` for a single-qubit Pauli. The pairwise evaluation is
    /// exactly real, so no imaginary residue survives.
    pub fn expectation(&self, obs: PauliObservable) -> Result<f64> {
        self.check_qubit(obs.qubit)?;
        let mask = 1usize << obs.qubit;
        let val = match obs.axis {
            PauliAxis::Z => self
                .amps
                .iter()
                .enumerate()
                .map(|(i, a)| if i & mask == 0 { a.norm_sqr() } else { -a.norm_sqr() })
                .sum(),
            PauliAxis::X => {
                let mut s = 0.0;
                for i in 0..self.amps.len() {
                    if i & mask == 0 {
                        s += 2.0 * (self.amps[i].conj() * self.amps[i | mask]).re;
                    }
                }
                s
            }
            PauliAxis::Y => {
                let mut s = 0.0;
                for i in 0..self.amps.len() {
                    if i & mask == 0 {
                        s += 2.0 * (self.amps[i].conj() * self.amps[i | mask]).im;
                    }
                }
                s
            }
        };
        Ok(val)
    }

    /// Multiply by a single-qubit Pauli operator in place.
    pub(crate) fn apply_pauli_mut(&mut self, obs: PauliObservable) -> Result<()> {
        self.check_qubit(obs.qubit)?;
        let mask = 1usize << obs.qubit;
        match obs.axis {
            PauliAxis::X => {
                for i in 0..self.amps.len() {
                    if i & mask == 0 {
                        self.amps.swap(i, i | mask);
                    }
                }
            }
            PauliAxis::Y => {
                // Y|0> = i|1>, Y|1> = -i|0>
                for i in 0..self.amps.len() {
                    if i & mask == 0 {
                        let lo = self.amps[i];
                        let hi = self.amps[i | mask];
                        self.amps[i] = Complex64::new(hi.im, -hi.re); // -i * hi
                        self.amps[i | mask] = Complex64::new(-lo.im, lo.re); // i * lo
                    }
                }
            }
            PauliAxis::Z => {
                for i in 0..self.amps.len() {
                    if i & mask != 0 {
                        self.amps[i] = -self.amps[i];
                    }
                }
            }
        }
        Ok(())
    }

    /// `Re<ab> - <a><b>` for commuting Paulis. Observables on the same
    /// qubit must share an axis; mixed-axis same-qubit pairs are rejected.
    pub fn pauli_covariance(&self, a: PauliObservable, b: PauliObservable) -> Result<f64> {
        self.check_qubit(a.qubit)?;
        self.check_qubit(b.qubit)?;
        if a.qubit == b.qubit && a.axis != b.axis {
            return Err(Error::UnsupportedPairing(format!(
                "observables {:?} and {:?} on qubit {} do not commute",
                a.axis, b.axis, a.qubit
            )));
        }
        let product = self.pauli_product_expectation(a, b)?;
        Ok(product - self.expectation(a)? * self.expectation(b)?)
    }

    /// `Re<psi|P_a P_b|psi>` for a commuting pair.
    pub(crate) fn pauli_product_expectation(
        &self,
        a: PauliObservable,
        b: PauliObservable,
    ) -> Result<f64> {
        if a.qubit == b.qubit {
            // P^2 = I for a shared axis.
            return Ok(1.0);
        }
        let mut phi = self.clone();
        phi.apply_pauli_mut(b)?;
        phi.apply_pauli_mut(a)?;
        let val = self.inner(&phi);
        debug_assert!(
            val.im.abs() <= 1e-12,
            "commuting Pauli product expectation should be real, got {val}"
        );
        Ok(val.re)
    }

    /// Fubini-Study distance `arccos sqrt(|<a|b>|^2 / (<a|a><b|b>))`,
    /// in `[0, pi/2]` and invariant under global phases.
    ///
    /// Evaluated as `atan2(sin, cos)` with the sine taken from the residual
    /// after projecting out the overlap: the arccos form loses half the
    /// significant digits near zero distance and cannot hold the 1e-9
    /// phase-invariance bound.
    pub fn fubini_study_distance(&self, other: &Self) -> Result<f64> {
        if self.num_qubits != other.num_qubits {
            return Err(Error::Argument(format!(
                "qubit counts differ: {} vs {}",
                self.num_qubits, other.num_qubits
            )));
        }
        let na = self.norm();
        let nb = other.norm();
        if na == 0.0 || nb == 0.0 {
            return Err(Error::Argument("zero-norm state has no ray".into()));
        }
        let overlap = self.inner(other) / Complex64::new(na * nb, 0.0);
        let sin_sqr: f64 = self
            .amps
            .iter()
            .zip(&other.amps)
            .map(|(a, b)| (b / nb - overlap * (a / na)).norm_sqr())
            .sum();
        Ok(sin_sqr.sqrt().atan2(overlap.norm()))
    }
}
