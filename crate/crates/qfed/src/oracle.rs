//! Independent reference computations used to cross-check the fast paths:
//! explicit Kronecker-product matrix chains, finite-difference gradients,
//! brute-force metric blocks, and an SVD pseudo-inverse solve.
//!
//! Everything here works on dense 2^n x 2^n matrices and never touches the
//! stride-based statevector kernels it is meant to verify.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;

use crate::ansatz::{AnsatzLayer, EntanglerWall, LayeredAnsatz, ParameterVector, RotationSpec};
use crate::state::{PauliAxis, SingleQubitGate, StateVector};

type CMat = DMatrix<Complex64>;

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

/// 2x2 Pauli matrix.
pub fn pauli_matrix(axis: PauliAxis) -> CMat {
    match axis {
        PauliAxis::X => CMat::from_row_slice(2, 2, &[c(0., 0.), c(1., 0.), c(1., 0.), c(0., 0.)]),
        PauliAxis::Y => CMat::from_row_slice(2, 2, &[c(0., 0.), c(0., -1.), c(0., 1.), c(0., 0.)]),
        PauliAxis::Z => CMat::from_row_slice(2, 2, &[c(1., 0.), c(0., 0.), c(0., 0.), c(-1., 0.)]),
    }
}

fn gate_matrix(gate: &SingleQubitGate) -> CMat {
    let m = gate.matrix();
    CMat::from_row_slice(2, 2, &[m[0][0], m[0][1], m[1][0], m[1][1]])
}

/// Embed a 2x2 operator on `qubit` into the full register:
/// `I_(2^(n-1-q)) (x) U (x) I_(2^q)` under the little-endian convention.
pub fn embed_single(u: &CMat, qubit: usize, num_qubits: usize) -> CMat {
    let upper = CMat::identity(1 << (num_qubits - 1 - qubit), 1 << (num_qubits - 1 - qubit));
    let lower = CMat::identity(1 << qubit, 1 << qubit);
    upper.kronecker(u).kronecker(&lower)
}

/// Full CNOT permutation matrix from its truth table.
pub fn cnot_unitary(control: usize, target: usize, num_qubits: usize) -> CMat {
    let dim = 1 << num_qubits;
    let mut m = CMat::zeros(dim, dim);
    for col in 0..dim {
        let row = if col & (1 << control) != 0 { col ^ (1 << target) } else { col };
        m[(row, col)] = c(1.0, 0.0);
    }
    m
}

fn wall_unitary(wall: &EntanglerWall, num_qubits: usize) -> CMat {
    let dim = 1 << num_qubits;
    let mut m = CMat::identity(dim, dim);
    for &(control, target) in &wall.pairs {
        m = cnot_unitary(control, target, num_qubits) * m;
    }
    m
}

fn layer_unitary(layer: &AnsatzLayer, params: &ParameterVector, num_qubits: usize) -> CMat {
    let dim = 1 << num_qubits;
    let mut m = wall_unitary(&layer.wall, num_qubits);
    for rot in &layer.rotations {
        let gate = SingleQubitGate::rotation(rot.axis, params.values()[rot.param_index]);
        m = embed_single(&gate_matrix(&gate), rot.qubit, num_qubits) * m;
    }
    debug_assert_eq!(m.nrows(), dim);
    m
}

/// Matrix-chain product for the whole circuit: `V_L W_L ... V_1 W_1`.
pub fn circuit_unitary(ansatz: &LayeredAnsatz, params: &ParameterVector) -> CMat {
    let n = ansatz.num_qubits();
    let mut m = CMat::identity(1 << n, 1 << n);
    for layer in ansatz.layers() {
        m = layer_unitary(layer, params, n) * m;
    }
    m
}

/// Matrix chain truncated just before layer `l`'s rotations (1-based):
/// layers `1..l-1` in full, then `W_l`.
pub fn prefix_unitary(ansatz: &LayeredAnsatz, params: &ParameterVector, l: usize) -> CMat {
    let n = ansatz.num_qubits();
    let mut m = CMat::identity(1 << n, 1 << n);
    for layer in &ansatz.layers()[..l - 1] {
        m = layer_unitary(layer, params, n) * m;
    }
    m = wall_unitary(&ansatz.layers()[l - 1].wall, n) * m;
    m
}

/// Apply a dense unitary to a state, yielding the expected amplitudes.
pub fn apply_unitary(u: &CMat, state: &StateVector) -> Vec<Complex64> {
    let v = nalgebra::DVector::from_column_slice(state.amplitudes());
    (u * v).as_slice().to_vec()
}

/// Largest elementwise amplitude deviation between a fast evaluation and the
/// matrix-chain product.
pub fn evaluate_deviation(
    ansatz: &LayeredAnsatz,
    params: &ParameterVector,
    input: &StateVector,
) -> f64 {
    let fast = ansatz.evaluate(params, input).expect("valid circuit");
    let expect = apply_unitary(&circuit_unitary(ansatz, params), input);
    fast.amplitudes()
        .iter()
        .zip(&expect)
        .map(|(a, b)| (a - b).norm())
        .fold(0.0, f64::max)
}

fn vector_expectation(state: &nalgebra::DVector<Complex64>, op: &CMat) -> Complex64 {
    (state.adjoint() * op * state)[(0, 0)]
}

/// Metric block `l` (1-based) evaluated from explicit generator matrices
/// `H = P/2` on the explicitly computed pre-layer state.
pub fn metric_block_bruteforce(
    ansatz: &LayeredAnsatz,
    params: &ParameterVector,
    input: &StateVector,
    l: usize,
) -> DMatrix<f64> {
    let n = ansatz.num_qubits();
    let prefix = prefix_unitary(ansatz, params, l);
    let psi = nalgebra::DVector::from_column_slice(&apply_unitary(&prefix, input));
    let rotations = &ansatz.layers()[l - 1].rotations;
    let generators: Vec<CMat> = rotations
        .iter()
        .map(|rot| embed_single(&pauli_matrix(rot.axis), rot.qubit, n) * c(0.5, 0.0))
        .collect();
    let singles: Vec<Complex64> =
        generators.iter().map(|h| vector_expectation(&psi, h)).collect();
    let mut block = DMatrix::zeros(rotations.len(), rotations.len());
    for i in 0..rotations.len() {
        for j in i..rotations.len() {
            let pair = vector_expectation(&psi, &(&generators[i] * &generators[j]));
            let value = pair.re - singles[i].re * singles[j].re;
            block[(i, j)] = value;
            block[(j, i)] = value;
        }
    }
    block
}

/// Central finite differences of `f` at `params`.
pub fn finite_difference_gradient<F: Fn(&ParameterVector) -> f64>(
    f: F,
    params: &ParameterVector,
    h: f64,
) -> Vec<f64> {
    (0..params.len())
        .map(|i| (f(&params.shifted(i, h)) - f(&params.shifted(i, -h))) / (2.0 * h))
        .collect()
}

/// Reference solve of `(block + damping I) d = rhs` by SVD pseudo-inverse
/// with relative singular-value cutoff `1e-10 * sigma_max`.
pub fn pinv_solve(block: &DMatrix<f64>, rhs: &[f64], damping: f64) -> Vec<f64> {
    let n = block.nrows();
    let damped = block + DMatrix::identity(n, n) * damping;
    let svd = damped.svd(true, true);
    let smax = svd.singular_values.iter().cloned().fold(0.0, f64::max);
    let cutoff = 1e-10 * smax;
    let b = nalgebra::DVector::from_column_slice(rhs);
    let ut_b = svd.u.as_ref().expect("svd with u").transpose() * b;
    let mut scaled = ut_b;
    for (i, s) in svd.singular_values.iter().enumerate() {
        scaled[i] = if *s > cutoff { scaled[i] / s } else { 0.0 };
    }
    (svd.v_t.expect("svd with v_t").transpose() * scaled)
        .as_slice()
        .to_vec()
}

/// Random layered circuit for cross-checks: arbitrary walls, one rotation per
/// chosen qubit per layer so every in-layer pair commutes.
pub fn random_layered_circuit<R: Rng>(
    rng: &mut R,
    num_qubits: usize,
    num_layers: usize,
) -> (LayeredAnsatz, ParameterVector) {
    let axes = [PauliAxis::X, PauliAxis::Y, PauliAxis::Z];
    let mut layers = Vec::with_capacity(num_layers);
    let mut param = 0;
    for _ in 0..num_layers {
        let mut pairs = Vec::new();
        if num_qubits >= 2 {
            for _ in 0..rng.gen_range(0..=num_qubits) {
                let control = rng.gen_range(0..num_qubits);
                let target = (control + rng.gen_range(1..num_qubits)) % num_qubits;
                pairs.push((control, target));
            }
        }
        let picked = rng.gen_range(1..=num_qubits);
        let mut qubits: Vec<usize> = (0..num_qubits).collect();
        for i in (1..qubits.len()).rev() {
            qubits.swap(i, rng.gen_range(0..=i));
        }
        let rotations = qubits[..picked]
            .iter()
            .map(|&qubit| {
                let spec = RotationSpec {
                    axis: axes[rng.gen_range(0..3)],
                    qubit,
                    param_index: param,
                };
                param += 1;
                spec
            })
            .collect();
        layers.push(AnsatzLayer { wall: EntanglerWall { pairs }, rotations });
    }
    let ansatz = LayeredAnsatz::new(num_qubits, num_layers, layers).expect("generated circuit");
    let params = ParameterVector::new(
        (0..ansatz.num_parameters())
            .map(|_| rng.gen_range(-std::f64::consts::PI..std::f64::consts::PI))
            .collect(),
    )
    .expect("finite draws");
    (ansatz, params)
}

/// Random product-state input with features in `[0, 1]`.
pub fn random_input<R: Rng>(rng: &mut R, num_qubits: usize) -> StateVector {
    let features: Vec<f64> = (0..num_qubits).map(|_| rng.gen_range(0.0..=1.0)).collect();
    crate::ansatz::tpe_encode(&features).expect("features in range")
}
