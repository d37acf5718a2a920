//! Single-device parameter-update rules: SGD, Adagrad, Adam, QNGD.

use serde::{Deserialize, Serialize};

use crate::ansatz::ParameterVector;
use crate::error::{Error, Result};
use crate::grad::{natural_direction, BlockDiagMetric, GradientVector};

/// Default learning rate for SGD, Adagrad, and QNGD.
pub const DEFAULT_LEARNING_RATE: f64 = 0.05;
/// Default learning rate for Adam.
pub const DEFAULT_ADAM_LEARNING_RATE: f64 = 0.01;
/// Default Tikhonov damping for QNGD metric solves. Blocks are exactly
/// singular at common initial states, so undamped inversion diverges.
pub const DEFAULT_DAMPING: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    Sgd,
    Adagrad,
    Adam,
    Fqngd,
}

impl OptimizerKind {
    pub fn default_learning_rate(self) -> f64 {
        match self {
            OptimizerKind::Adam => DEFAULT_ADAM_LEARNING_RATE,
            _ => DEFAULT_LEARNING_RATE,
        }
    }
}

impl std::fmt::Display for OptimizerKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let name = match self {
            OptimizerKind::Sgd => "sgd",
            OptimizerKind::Adagrad => "adagrad",
            OptimizerKind::Adam => "adam",
            OptimizerKind::Fqngd => "fqngd",
        };
        f.write_str(name)
    }
}

impl std::str::FromStr for OptimizerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sgd" => Ok(OptimizerKind::Sgd),
            "adagrad" => Ok(OptimizerKind::Adagrad),
            "adam" => Ok(OptimizerKind::Adam),
            "fqngd" => Ok(OptimizerKind::Fqngd),
            other => Err(Error::Config(format!(
                "unknown optimizer '{other}' (expected sgd, adagrad, adam, or fqngd)"
            ))),
        }
    }
}

fn check_grad(params: &ParameterVector, grad: &GradientVector) -> Result<()> {
    if params.len() != grad.len() {
        return Err(Error::Argument(format!(
            "parameter length {} does not match gradient length {}",
            params.len(),
            grad.len()
        )));
    }
    if grad.values().iter().any(|g| !g.is_finite()) {
        return Err(Error::Divergence("gradient contains NaN or infinity".into()));
    }
    Ok(())
}

fn finish_update(values: Vec<f64>) -> Result<ParameterVector> {
    ParameterVector::new(values)
        .map_err(|_| Error::Divergence("update produced non-finite parameters".into()))
}

/// `theta' = theta - eta * grad`.
pub fn sgd_step(
    params: &ParameterVector,
    grad: &GradientVector,
    learning_rate: f64,
) -> Result<ParameterVector> {
    check_grad(params, grad)?;
    finish_update(
        params
            .values()
            .iter()
            .zip(grad.values())
            .map(|(p, g)| p - learning_rate * g)
            .collect(),
    )
}

/// Adagrad accumulator state.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdagradState {
    pub learning_rate: f64,
    pub epsilon: f64,
    accum: Vec<f64>,
    step_count: u64,
}

impl AdagradState {
    pub fn new(num_params: usize, learning_rate: f64) -> Self {
        Self { learning_rate, epsilon: 1e-8, accum: vec![0.0; num_params], step_count: 0 }
    }

    pub fn step_count(&self) -> u64 {
        self.step_count
    }

    pub fn accumulators(&self) -> &[f64] {
        &self.accum
    }
}

/// `acc' = acc + g^2; theta' = theta - eta * g / (sqrt(acc') + eps)`.
pub fn adagrad_step(
    mut state: AdagradState,
    params: &ParameterVector,
    grad: &GradientVector,
) -> Result<(AdagradState, ParameterVector)> {
    check_grad(params, grad)?;
    let mut values = Vec::with_capacity(params.len());
    for (i, (p, g)) in params.values().iter().zip(grad.values()).enumerate() {
        state.accum[i] += g * g;
        values.push(p - state.learning_rate * g / (state.accum[i].sqrt() + state.epsilon));
    }
    state.step_count += 1;
    Ok((state, finish_update(values)?))
}

/// Adam moment state.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    step_count: u64,
}

impl AdamState {
    pub fn new(num_params: usize, learning_rate: f64) -> Self {
        Self {
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            m: vec![0.0; num_params],
            v: vec![0.0; num_params],
            step_count: 0,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step_count
    }
}

/// Standard bias-corrected Adam update.
pub fn adam_step(
    mut state: AdamState,
    params: &ParameterVector,
    grad: &GradientVector,
) -> Result<(AdamState, ParameterVector)> {
    check_grad(params, grad)?;
    state.step_count += 1;
    let bc1 = 1.0 - state.beta1.powi(state.step_count as i32);
    let bc2 = 1.0 - state.beta2.powi(state.step_count as i32);
    let mut values = Vec::with_capacity(params.len());
    for (i, (p, g)) in params.values().iter().zip(grad.values()).enumerate() {
        state.m[i] = state.beta1 * state.m[i] + (1.0 - state.beta1) * g;
        state.v[i] = state.beta2 * state.v[i] + (1.0 - state.beta2) * g * g;
        let m_hat = state.m[i] / bc1;
        let v_hat = state.v[i] / bc2;
        values.push(p - state.learning_rate * m_hat / (v_hat.sqrt() + state.epsilon));
    }
    Ok((state, finish_update(values)?))
}

/// `theta' = theta - eta * g^+(theta) grad` with the block-diagonal metric
/// assembled at the current parameters.
pub fn qngd_step(
    params: &ParameterVector,
    grad: &GradientVector,
    metric: &BlockDiagMetric,
    learning_rate: f64,
    damping: f64,
) -> Result<ParameterVector> {
    check_grad(params, grad)?;
    let direction = natural_direction(metric, grad, damping)?;
    finish_update(
        params
            .values()
            .iter()
            .zip(direction.values())
            .map(|(p, d)| p - learning_rate * d)
            .collect(),
    )
}

/// Stateful wrapper used by the federated coordinator. For FQNGD the
/// preconditioning already happened at the participants, so the coordinator
/// applies the plain Eq.-style step to the aggregated direction.
#[derive(Clone, Debug)]
pub enum Optimizer {
    Sgd { learning_rate: f64, step_count: u64 },
    Adagrad(AdagradState),
    Adam(AdamState),
    Fqngd { learning_rate: f64, damping: f64, step_count: u64 },
}

impl Optimizer {
    pub fn new(kind: OptimizerKind, num_params: usize, learning_rate: f64, damping: f64) -> Self {
        match kind {
            OptimizerKind::Sgd => Optimizer::Sgd { learning_rate, step_count: 0 },
            OptimizerKind::Adagrad => Optimizer::Adagrad(AdagradState::new(num_params, learning_rate)),
            OptimizerKind::Adam => Optimizer::Adam(AdamState::new(num_params, learning_rate)),
            OptimizerKind::Fqngd => Optimizer::Fqngd { learning_rate, damping, step_count: 0 },
        }
    }

    pub fn kind(&self) -> OptimizerKind {
        match self {
            Optimizer::Sgd { .. } => OptimizerKind::Sgd,
            Optimizer::Adagrad(_) => OptimizerKind::Adagrad,
            Optimizer::Adam(_) => OptimizerKind::Adam,
            Optimizer::Fqngd { .. } => OptimizerKind::Fqngd,
        }
    }

    pub fn step_count(&self) -> u64 {
        match self {
            Optimizer::Sgd { step_count, .. } => *step_count,
            Optimizer::Adagrad(s) => s.step_count(),
            Optimizer::Adam(s) => s.step_count(),
            Optimizer::Fqngd { step_count, .. } => *step_count,
        }
    }

    /// Whether participants should upload metric-preconditioned directions.
    pub fn preconditions_locally(&self) -> bool {
        matches!(self, Optimizer::Fqngd { .. })
    }

    pub fn damping(&self) -> f64 {
        match self {
            Optimizer::Fqngd { damping, .. } => *damping,
            _ => 0.0,
        }
    }

    /// Apply one update to `params` given the aggregated direction.
    pub fn apply(
        &mut self,
        params: &ParameterVector,
        direction: &GradientVector,
    ) -> Result<ParameterVector> {
        match self {
            Optimizer::Sgd { learning_rate, step_count } => {
                let out = sgd_step(params, direction, *learning_rate)?;
                *step_count += 1;
                Ok(out)
            }
            Optimizer::Adagrad(state) => {
                let (next, out) = adagrad_step(state.clone(), params, direction)?;
                *state = next;
                Ok(out)
            }
            Optimizer::Adam(state) => {
                let (next, out) = adam_step(state.clone(), params, direction)?;
                *state = next;
                Ok(out)
            }
            Optimizer::Fqngd { learning_rate, step_count, .. } => {
                check_grad(params, direction)?;
                let out = finish_update(
                    params
                        .values()
                        .iter()
                        .zip(direction.values())
                        .map(|(p, d)| p - *learning_rate * d)
                        .collect(),
                )?;
                *step_count += 1;
                Ok(out)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;
    use rand::{Rng, SeedableRng};
    use rand_xoshiro::Xoshiro256PlusPlus;

    fn params(v: &[f64]) -> ParameterVector {
        ParameterVector::new(v.to_vec()).unwrap()
    }

    fn grad(v: &[f64]) -> GradientVector {
        GradientVector::new(v.to_vec()).unwrap()
    }

    #[test]
    fn sgd_arithmetic() {
        let out = sgd_step(&params(&[0.5]), &grad(&[0.1]), 0.1).unwrap();
        assert!((out.values()[0] - 0.49).abs() < 1e-15);
        let fixed = sgd_step(&params(&[0.5]), &grad(&[0.0]), 0.1).unwrap();
        assert_eq!(fixed.values(), &[0.5]);
        let frozen = sgd_step(&params(&[0.5]), &grad(&[0.1]), 0.0).unwrap();
        assert_eq!(frozen.values(), &[0.5]);
    }

    #[test]
    fn sgd_rejects_nan_gradient() {
        let bad = GradientVector::zeros(1);
        // GradientVector::new rejects NaN, so force one through zeros + direct check
        assert!(sgd_step(&params(&[0.5]), &bad, f64::NAN).is_err());
    }

    #[test]
    fn adagrad_first_and_second_steps() {
        let state = AdagradState::new(1, 0.1);
        let (state, p1) = adagrad_step(state, &params(&[1.0]), &grad(&[1.0])).unwrap();
        // acc = 1, update = 0.1 / (1 + eps)
        assert!((p1.values()[0] - (1.0 - 0.1 / (1.0 + 1e-8))).abs() < 1e-12);
        assert_eq!(state.step_count(), 1);

        let (state, p2) = adagrad_step(state, &p1, &grad(&[1.0])).unwrap();
        // acc = 2, update magnitude 0.1 / sqrt(2)
        let expect = p1.values()[0] - 0.1 / (2.0f64.sqrt() + 1e-8);
        assert!((p2.values()[0] - expect).abs() < 1e-12);
        assert_eq!(state.step_count(), 2);

        let (state, p3) = adagrad_step(state, &p2, &grad(&[0.0])).unwrap();
        assert_eq!(p3.values(), p2.values());
        assert!((state.accumulators()[0] - 2.0).abs() < 1e-15);
    }

    #[test]
    fn adam_first_step_is_signed_learning_rate() {
        let state = AdamState::new(2, 0.01);
        let (_, out) = adam_step(state, &params(&[0.0, 0.0]), &grad(&[0.3, -0.7])).unwrap();
        // Bias correction makes the first update -lr * sign(g) up to eps.
        assert!((out.values()[0] + 0.01).abs() < 1e-6);
        assert!((out.values()[1] - 0.01).abs() < 1e-6);
    }

    #[test]
    fn adam_zero_gradient_is_fixed_point() {
        let mut state = AdamState::new(1, 0.01);
        let mut p = params(&[0.4]);
        for _ in 0..5 {
            let (next, out) = adam_step(state, &p, &grad(&[0.0])).unwrap();
            state = next;
            p = out;
        }
        assert_eq!(p.values(), &[0.4]);
    }

    #[test]
    fn adam_constant_gradient_update_approaches_learning_rate() {
        let mut state = AdamState::new(1, 0.01);
        let mut p = params(&[0.0]);
        let mut last = 0.0;
        for _ in 0..400 {
            let before = p.values()[0];
            let (next, out) = adam_step(state, &p, &grad(&[0.5])).unwrap();
            state = next;
            p = out;
            last = (p.values()[0] - before).abs();
        }
        assert!((last - 0.01).abs() < 1e-4, "final step {last}");
    }

    #[test]
    fn qngd_with_identity_metric_is_bitwise_sgd() {
        let mut rng = Xoshiro256PlusPlus::seed_from_u64(17);
        for _ in 0..200 {
            let n = rng.gen_range(1..=6);
            let p = params(&(0..n).map(|_| rng.gen_range(-3.0..3.0)).collect::<Vec<_>>());
            let g = grad(&(0..n).map(|_| rng.gen_range(-2.0..2.0)).collect::<Vec<_>>());
            let eta = rng.gen_range(0.0..0.3);
            let metric = BlockDiagMetric::identity(&[n]);
            let qngd = qngd_step(&p, &g, &metric, eta, 0.0).unwrap();
            let sgd = sgd_step(&p, &g, eta).unwrap();
            assert_eq!(qngd.values(), sgd.values());
        }
    }

    #[test]
    fn qngd_scalar_metric_arithmetic() {
        let metric = BlockDiagMetric::new(vec![DMatrix::identity(1, 1) * 0.25]).unwrap();
        let out = qngd_step(&params(&[1.0]), &grad(&[0.1]), &metric, 0.1, 0.0).unwrap();
        // direction = 0.1 / 0.25 = 0.4; step = 0.1 * 0.4 = 0.04
        assert!((out.values()[0] - 0.96).abs() < 1e-12);
    }

    #[test]
    fn steps_are_deterministic() {
        let p = params(&[0.3, -0.2]);
        let g = grad(&[0.05, 0.15]);
        let s1 = AdamState::new(2, 0.01);
        let s2 = AdamState::new(2, 0.01);
        let (a1, o1) = adam_step(s1, &p, &g).unwrap();
        let (a2, o2) = adam_step(s2, &p, &g).unwrap();
        assert_eq!(o1.values(), o2.values());
        assert_eq!(a1, a2);
    }

    #[test]
    fn replaying_gradient_sequence_reproduces_state() {
        let seq = [[0.1, -0.3], [0.2, 0.2], [-0.5, 0.05]];
        let run = |mut state: AdagradState| {
            let mut p = params(&[0.0, 0.0]);
            for g in &seq {
                let (next, out) = adagrad_step(state, &p, &grad(g)).unwrap();
                state = next;
                p = out;
            }
            (state, p)
        };
        let (s1, p1) = run(AdagradState::new(2, 0.05));
        let (s2, p2) = run(AdagradState::new(2, 0.05));
        assert_eq!(s1, s2);
        assert_eq!(p1.values(), p2.values());
    }
}
