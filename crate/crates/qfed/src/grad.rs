//! Gradients of circuit losses and the block-diagonal Fubini-Study metric
//! with a regularized pseudo-inverse solve.
//!
//! Rotations are generated by `H = P/2`, so metric entries carry a global
//! factor 1/4 relative to raw Pauli covariances. The parameter-shift rule
//! `dL/dt = [L(t + pi/2) - L(t - pi/2)] / 2` is exact for losses that are
//! single Pauli expectations of such rotations.

use nalgebra::{Cholesky, DMatrix, DVector};
use std::f64::consts::FRAC_PI_2;

use crate::ansatz::{LayeredAnsatz, ParameterVector};
use crate::error::{Error, Result};
use crate::state::StateVector;

/// Threshold on the Cholesky-based condition estimate beyond which the solve
/// falls back to an SVD pseudo-inverse.
pub const CONDITION_LIMIT: f64 = 1e12;

/// Relative singular-value cutoff for the pseudo-inverse fallback.
pub const SINGULAR_CUTOFF: f64 = 1e-10;

/// Loss gradient with respect to circuit parameters, one entry per parameter.
#[derive(Clone, Debug, PartialEq)]
pub struct GradientVector(Vec<f64>);

impl GradientVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Divergence("gradient contains non-finite values".into()));
        }
        Ok(Self(values))
    }

    pub fn zeros(len: usize) -> Self {
        Self(vec![0.0; len])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|g| g * g).sum::<f64>().sqrt()
    }
}

/// Per-layer symmetric PSD blocks of the approximate Fubini-Study metric.
/// Off-block entries are implicitly zero and never materialized.
#[derive(Clone, Debug, PartialEq)]
pub struct BlockDiagMetric {
    blocks: Vec<DMatrix<f64>>,
}

impl BlockDiagMetric {
    pub fn new(blocks: Vec<DMatrix<f64>>) -> Result<Self> {
        for (i, b) in blocks.iter().enumerate() {
            if b.nrows() != b.ncols() {
                return Err(Error::Argument(format!(
                    "metric block {i} is {}x{}, expected square",
                    b.nrows(),
                    b.ncols()
                )));
            }
        }
        Ok(Self { blocks })
    }

    /// Identity metric with the given block sizes.
    pub fn identity(block_sizes: &[usize]) -> Self {
        Self {
            blocks: block_sizes.iter().map(|&n| DMatrix::identity(n, n)).collect(),
        }
    }

    pub fn blocks(&self) -> &[DMatrix<f64>] {
        &self.blocks
    }

    pub fn total_dim(&self) -> usize {
        self.blocks.iter().map(|b| b.nrows()).sum()
    }
}

/// Parameter-shift gradient of a scalar loss. Exact when the loss is a single
/// expectation; composite losses should chain-rule over shifted expectations
/// instead (see the classifier module).
pub fn parameter_shift_gradient<F: Fn(&ParameterVector) -> f64>(
    loss_fn: F,
    params: &ParameterVector,
) -> Result<GradientVector> {
    let values = (0..params.len())
        .map(|i| {
            (loss_fn(&params.shifted(i, FRAC_PI_2)) - loss_fn(&params.shifted(i, -FRAC_PI_2)))
                / 2.0
        })
        .collect();
    GradientVector::new(values)
}

/// Metric block entries from a pre-layer state: `(1/4) * cov(P_i, P_j)` over
/// the layer's rotation generators.
pub(crate) fn block_from_state(
    state: &StateVector,
    rotations: &[crate::ansatz::RotationSpec],
) -> Result<DMatrix<f64>> {
    let m = rotations.len();
    let singles: Vec<f64> = rotations
        .iter()
        .map(|rot| state.expectation(crate::state::PauliObservable { axis: rot.axis, qubit: rot.qubit }))
        .collect::<Result<_>>()?;
    let mut block = DMatrix::zeros(m, m);
    for i in 0..m {
        for j in i..m {
            let a = crate::state::PauliObservable {
                axis: rotations[i].axis,
                qubit: rotations[i].qubit,
            };
            let b = crate::state::PauliObservable {
                axis: rotations[j].axis,
                qubit: rotations[j].qubit,
            };
            if a.qubit == b.qubit && a.axis != b.axis {
                return Err(Error::UnsupportedPairing(format!(
                    "rotations {i} and {j} mix axes {:?} and {:?} on qubit {}",
                    a.axis, b.axis, a.qubit
                )));
            }
            let pair = state.pauli_product_expectation(a, b)?;
            let value = 0.25 * (pair - singles[i] * singles[j]);
            block[(i, j)] = value;
            block[(j, i)] = value;
        }
    }
    Ok(block)
}

/// Metric block for 1-based rotation layer `l` at the given input.
pub fn metric_block(
    ansatz: &LayeredAnsatz,
    params: &ParameterVector,
    input: &StateVector,
    l: usize,
) -> Result<DMatrix<f64>> {
    let state = ansatz.state_at_layer(params, input, l)?;
    block_from_state(&state, &ansatz.layers()[l - 1].rotations)
}

/// All blocks in layer order.
pub fn assemble_metric(
    ansatz: &LayeredAnsatz,
    params: &ParameterVector,
    input: &StateVector,
) -> Result<BlockDiagMetric> {
    let (prefixes, _) = ansatz.prefix_states(params, input)?;
    let blocks = prefixes
        .iter()
        .zip(ansatz.layers())
        .map(|(state, layer)| block_from_state(state, &layer.rotations))
        .collect::<Result<Vec<_>>>()?;
    BlockDiagMetric::new(blocks)
}

/// Blocks averaged over a batch of encoded inputs, accumulated in input
/// order.
pub fn assemble_metric_batch(
    ansatz: &LayeredAnsatz,
    params: &ParameterVector,
    inputs: &[StateVector],
) -> Result<BlockDiagMetric> {
    if inputs.is_empty() {
        return Err(Error::Argument("metric batch must be non-empty".into()));
    }
    let mut acc: Option<Vec<DMatrix<f64>>> = None;
    for input in inputs {
        let metric = assemble_metric(ansatz, params, input)?;
        match &mut acc {
            None => acc = Some(metric.blocks.clone()),
            Some(blocks) => {
                for (a, b) in blocks.iter_mut().zip(&metric.blocks) {
                    *a += b;
                }
            }
        }
    }
    let scale = 1.0 / inputs.len() as f64;
    let blocks = acc.unwrap().into_iter().map(|b| b * scale).collect();
    BlockDiagMetric::new(blocks)
}

fn cholesky_condition_estimate(chol: &Cholesky<f64, nalgebra::Dyn>) -> f64 {
    let l = chol.l_dirty();
    let mut dmin = f64::MAX;
    let mut dmax = 0.0f64;
    for i in 0..l.nrows() {
        let d = l[(i, i)];
        dmin = dmin.min(d);
        dmax = dmax.max(d);
    }
    if dmin <= 0.0 {
        f64::MAX
    } else {
        (dmax / dmin).powi(2)
    }
}

/// Solve `(g_l + damping I) d_l = grad_l` per block with a symmetric PSD
/// solve, falling back to an SVD pseudo-inverse (cutoff
/// `SINGULAR_CUTOFF * sigma_max`) when the damped block is numerically
/// singular.
pub fn natural_direction(
    metric: &BlockDiagMetric,
    grad: &GradientVector,
    damping: f64,
) -> Result<GradientVector> {
    if damping < 0.0 {
        return Err(Error::Argument(format!("damping must be non-negative, got {damping}")));
    }
    if metric.total_dim() != grad.len() {
        return Err(Error::Argument(format!(
            "metric dimension {} does not match gradient length {}",
            metric.total_dim(),
            grad.len()
        )));
    }
    let mut out = Vec::with_capacity(grad.len());
    let mut offset = 0;
    for block in metric.blocks() {
        let n = block.nrows();
        let rhs = &grad.values()[offset..offset + n];
        let damped = block + DMatrix::identity(n, n) * damping;
        let solved = match Cholesky::new(damped.clone()) {
            Some(chol) if cholesky_condition_estimate(&chol) <= CONDITION_LIMIT => {
                chol.solve(&DVector::from_column_slice(rhs)).as_slice().to_vec()
            }
            _ => pinv_fallback(&damped, rhs),
        };
        out.extend_from_slice(&solved);
        offset += n;
    }
    GradientVector::new(out)
}

fn pinv_fallback(damped: &DMatrix<f64>, rhs: &[f64]) -> Vec<f64> {
    let svd = damped.clone().svd(true, true);
    let smax = svd.singular_values.iter().cloned().fold(0.0, f64::max);
    let cutoff = SINGULAR_CUTOFF * smax;
    let mut scaled = svd.u.as_ref().expect("svd u").transpose() * DVector::from_column_slice(rhs);
    for (i, s) in svd.singular_values.iter().enumerate() {
        scaled[i] = if *s > cutoff { scaled[i] / s } else { 0.0 };
    }
    (svd.v_t.expect("svd v_t").transpose() * scaled).as_slice().to_vec()
}
