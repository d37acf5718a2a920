//! Measurement readout head: per-class Pauli-Z expectations feeding a
//! softmax cross-entropy loss. Gradients chain-rule the softmax over
//! parameter-shifted logit evaluations, which keeps them exact.

use std::f64::consts::FRAC_PI_2;

use crate::ansatz::{LayeredAnsatz, ParameterVector};
use crate::data::EncodedDataset;
use crate::error::{Error, Result};
use crate::grad::{BlockDiagMetric, GradientVector};
use crate::state::{PauliObservable, StateVector};

/// Readout: logit `c` is the Z expectation on `readout_qubits[c]`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ClassifierHead {
    num_classes: usize,
    readout_qubits: Vec<usize>,
}

impl ClassifierHead {
    pub fn new(readout_qubits: Vec<usize>) -> Result<Self> {
        let num_classes = readout_qubits.len();
        if !(2..=3).contains(&num_classes) {
            return Err(Error::Config(format!(
                "classifier supports 2 or 3 classes, got {num_classes}"
            )));
        }
        for (i, &q) in readout_qubits.iter().enumerate() {
            if readout_qubits[..i].contains(&q) {
                return Err(Error::Config(format!("readout qubit {q} repeats")));
            }
        }
        Ok(Self { num_classes, readout_qubits })
    }

    /// Readouts on the first `num_classes` qubits.
    pub fn first_qubits(num_classes: usize) -> Result<Self> {
        Self::new((0..num_classes).collect())
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn readout_qubits(&self) -> &[usize] {
        &self.readout_qubits
    }

    pub fn logits(&self, state: &StateVector) -> Result<Vec<f64>> {
        self.readout_qubits
            .iter()
            .map(|&q| state.expectation(PauliObservable::z(q)))
            .collect()
    }
}

/// Loss and correctness for one sample.
#[derive(Clone, Debug)]
pub struct LossReport {
    pub loss: f64,
    pub correct: bool,
    pub logits: Vec<f64>,
}

/// Numerically stable softmax; sums to one within 1e-12.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&l| (l - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

/// Argmax with ties broken toward the lowest class index.
pub fn argmax(logits: &[f64]) -> usize {
    let mut best = 0;
    for (i, &l) in logits.iter().enumerate().skip(1) {
        if l > logits[best] {
            best = i;
        }
    }
    best
}

/// `-log softmax(logits)[label]` at unit temperature.
pub fn cross_entropy_loss(logits: &[f64], label: usize) -> Result<LossReport> {
    if label >= logits.len() {
        return Err(Error::Argument(format!(
            "label {label} out of range for {} classes",
            logits.len()
        )));
    }
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let log_sum: f64 = logits.iter().map(|&l| (l - max).exp()).sum::<f64>().ln() + max;
    Ok(LossReport {
        loss: log_sum - logits[label],
        correct: argmax(logits) == label,
        logits: logits.to_vec(),
    })
}

/// Logits of one feature row: encode, evaluate, measure.
pub fn forward(
    head: &ClassifierHead,
    ansatz: &LayeredAnsatz,
    params: &ParameterVector,
    features: &[f64],
) -> Result<Vec<f64>> {
    let input = crate::ansatz::tpe_encode(features)?;
    let state = ansatz.evaluate(params, &input)?;
    head.logits(&state)
}

/// Fraction of samples whose argmax logit matches the label.
pub fn evaluate_accuracy(
    head: &ClassifierHead,
    ansatz: &LayeredAnsatz,
    params: &ParameterVector,
    data: &EncodedDataset,
) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::Argument("cannot evaluate accuracy on an empty dataset".into()));
    }
    let mut correct = 0usize;
    for i in 0..data.len() {
        let logits = forward(head, ansatz, params, data.feature_row(i))?;
        if argmax(&logits) == data.label(i) as usize {
            correct += 1;
        }
    }
    Ok(correct as f64 / data.len() as f64)
}

/// Mean loss and accuracy without gradients.
pub fn evaluate_loss(
    head: &ClassifierHead,
    ansatz: &LayeredAnsatz,
    params: &ParameterVector,
    data: &EncodedDataset,
) -> Result<(f64, f64)> {
    if data.is_empty() {
        return Err(Error::Argument("cannot evaluate loss on an empty dataset".into()));
    }
    let mut loss = 0.0;
    let mut correct = 0usize;
    for i in 0..data.len() {
        let logits = forward(head, ansatz, params, data.feature_row(i))?;
        let report = cross_entropy_loss(&logits, data.label(i) as usize)?;
        loss += report.loss;
        correct += report.correct as usize;
    }
    Ok((loss / data.len() as f64, correct as f64 / data.len() as f64))
}

/// Everything one training step needs from a batch, accumulated in row
/// order so results are independent of scheduling.
#[derive(Clone, Debug)]
pub struct BatchQuantities {
    pub mean_loss: f64,
    pub accuracy: f64,
    pub gradient: GradientVector,
    pub metric: Option<BlockDiagMetric>,
}

/// Mean cross-entropy gradient over `rows` via the parameter-shift chain
/// rule, optionally with the batch-averaged metric from the same prefix
/// sweep. Each parameter costs two suffix evaluations per sample.
pub fn batch_quantities(
    head: &ClassifierHead,
    ansatz: &LayeredAnsatz,
    params: &ParameterVector,
    data: &EncodedDataset,
    rows: &[usize],
    with_metric: bool,
) -> Result<BatchQuantities> {
    if rows.is_empty() {
        return Err(Error::Argument("batch must be non-empty".into()));
    }
    let p = ansatz.num_parameters();
    let num_layers = ansatz.num_layers();
    let mut grad_acc = vec![0.0; p];
    let mut loss_acc = 0.0;
    let mut correct = 0usize;
    let mut metric_acc: Option<Vec<nalgebra::DMatrix<f64>>> = if with_metric {
        Some(
            ansatz
                .layers()
                .iter()
                .map(|l| nalgebra::DMatrix::zeros(l.rotations.len(), l.rotations.len()))
                .collect(),
        )
    } else {
        None
    };
    let mut scratch = StateVector::zero_state(ansatz.num_qubits())?;

    for &row in rows {
        let input = crate::ansatz::tpe_encode(data.feature_row(row))?;
        let label = data.label(row) as usize;
        let (prefixes, final_state) = ansatz.prefix_states(params, &input)?;
        let logits = head.logits(&final_state)?;
        let report = cross_entropy_loss(&logits, label)?;
        loss_acc += report.loss;
        correct += report.correct as usize;

        // dL/dlogit = softmax - onehot
        let mut dl_dlogit = softmax(&logits);
        dl_dlogit[label] -= 1.0;

        for i in 0..p {
            ansatz.evaluate_shifted(params, &prefixes, i, FRAC_PI_2, &mut scratch);
            let plus = head.logits(&scratch)?;
            ansatz.evaluate_shifted(params, &prefixes, i, -FRAC_PI_2, &mut scratch);
            let minus = head.logits(&scratch)?;
            let mut g = 0.0;
            for c in 0..head.num_classes {
                g += dl_dlogit[c] * (plus[c] - minus[c]) / 2.0;
            }
            grad_acc[i] += g;
        }

        if let Some(blocks) = &mut metric_acc {
            for l in 0..num_layers {
                let block =
                    crate::grad::block_from_state(&prefixes[l], &ansatz.layers()[l].rotations)?;
                blocks[l] += block;
            }
        }
    }

    let n = rows.len() as f64;
    let gradient = GradientVector::new(grad_acc.into_iter().map(|g| g / n).collect())?;
    let metric = match metric_acc {
        Some(blocks) => Some(BlockDiagMetric::new(
            blocks.into_iter().map(|b| b / n).collect(),
        )?),
        None => None,
    };
    Ok(BatchQuantities {
        mean_loss: loss_acc / n,
        accuracy: correct as f64 / rows.len() as f64,
        gradient,
        metric,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ansatz::{build_ring_ansatz, tpe_encode};
    use crate::data::{reduce_features, select_digits, synthetic_raw, FeatureMethod};
    use crate::oracle;
    use rand::{Rng, SeedableRng};
    use rand_xoshiro::Xoshiro256PlusPlus;

    fn toy_dataset() -> EncodedDataset {
        let raw = synthetic_raw(&[2, 5, 2, 5, 2, 5, 2, 5]);
        reduce_features(&select_digits(&raw, &[2, 5]).unwrap(), 4, FeatureMethod::Avgpool).unwrap()
    }

    #[test]
    fn head_validation() {
        assert!(ClassifierHead::new(vec![0]).is_err());
        assert!(ClassifierHead::new(vec![0, 0]).is_err());
        assert!(ClassifierHead::new(vec![0, 1, 2, 3]).is_err());
        let head = ClassifierHead::first_qubits(3).unwrap();
        assert_eq!(head.readout_qubits(), &[0, 1, 2]);
    }

    #[test]
    fn symmetric_construction_gives_uniform_softmax() {
        let ansatz = build_ring_ansatz(4, 1).unwrap();
        let head = ClassifierHead::first_qubits(2).unwrap();
        let params = ParameterVector::zeros(ansatz.num_parameters());
        let logits = forward(&head, &ansatz, &params, &[0.0; 4]).unwrap();
        assert!((logits[0] - logits[1]).abs() < 1e-12);
        let probs = softmax(&logits);
        assert!((probs[0] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn half_turn_readout_hits_minus_one() {
        use crate::ansatz::{AnsatzLayer, EntanglerWall, LayeredAnsatz, RotationSpec};
        use crate::state::PauliAxis;
        // RY(pi) on qubit 0 of |00>: logit 0 = -1, qubit 1 untouched.
        let layer = AnsatzLayer {
            wall: EntanglerWall::default(),
            rotations: vec![
                RotationSpec { axis: PauliAxis::Y, qubit: 0, param_index: 0 },
                RotationSpec { axis: PauliAxis::Y, qubit: 1, param_index: 1 },
            ],
        };
        let ansatz = LayeredAnsatz::new(2, 1, vec![layer]).unwrap();
        let head = ClassifierHead::first_qubits(2).unwrap();
        let params = ParameterVector::new(vec![std::f64::consts::PI, 0.0]).unwrap();
        let logits = forward(&head, &ansatz, &params, &[0.0, 0.0]).unwrap();
        assert!((logits[0] + 1.0).abs() < 1e-12);
        assert!((logits[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn forward_matches_full_statevector_oracle() {
        let mut rng = Xoshiro256PlusPlus::seed_from_u64(3);
        let ansatz = build_ring_ansatz(3, 1).unwrap();
        let params = ParameterVector::new(
            (0..ansatz.num_parameters()).map(|_| rng.gen_range(-1.5..1.5)).collect(),
        )
        .unwrap();
        let features = [0.25, 0.5, 0.75];
        let head = ClassifierHead::first_qubits(3).unwrap();
        let logits = forward(&head, &ansatz, &params, &features).unwrap();

        let input = tpe_encode(&features).unwrap();
        let u = oracle::circuit_unitary(&ansatz, &params);
        let amps = oracle::apply_unitary(&u, &input);
        let expect = StateVector::from_amplitudes(amps).unwrap();
        for (c, &q) in head.readout_qubits().iter().enumerate() {
            let e = expect.expectation(PauliObservable::z(q)).unwrap();
            assert!((logits[c] - e).abs() < 1e-12);
        }
    }

    #[test]
    fn cross_entropy_closed_forms() {
        let r = cross_entropy_loss(&[1.0, -1.0], 0).unwrap();
        assert!((r.loss - 0.126928011).abs() < 1e-8);
        assert!(r.correct);

        let r = cross_entropy_loss(&[1.0, -1.0], 1).unwrap();
        assert!((r.loss - 2.126928011).abs() < 1e-8);
        assert!(!r.correct);

        let uniform = cross_entropy_loss(&[0.3, 0.3, 0.3], 2).unwrap();
        assert!((uniform.loss - 3.0f64.ln()).abs() < 1e-12);

        assert!(cross_entropy_loss(&[0.1, 0.2], 2).is_err());
    }

    #[test]
    fn softmax_is_shift_invariant() {
        let logits = [0.2, -0.7, 1.1];
        let shifted: Vec<f64> = logits.iter().map(|l| l + 123.456).collect();
        let a = cross_entropy_loss(&logits, 1).unwrap();
        let b = cross_entropy_loss(&shifted, 1).unwrap();
        assert!((a.loss - b.loss).abs() < 1e-12);
        assert_eq!(argmax(&logits), argmax(&shifted));
        let p = softmax(&logits);
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn argmax_breaks_ties_low() {
        assert_eq!(argmax(&[0.5, 0.5]), 0);
        assert_eq!(argmax(&[0.1, 0.7, 0.7]), 1);
    }

    #[test]
    fn accuracy_counts_and_reordering() {
        let ansatz = build_ring_ansatz(4, 1).unwrap();
        let head = ClassifierHead::first_qubits(2).unwrap();
        let mut rng = Xoshiro256PlusPlus::seed_from_u64(8);
        let params = ParameterVector::new(
            (0..ansatz.num_parameters()).map(|_| rng.gen_range(-1.0..1.0)).collect(),
        )
        .unwrap();
        let data = toy_dataset();
        let acc = evaluate_accuracy(&head, &ansatz, &params, &data).unwrap();

        // Binary complement: flipping all labels complements the accuracy.
        let flipped = EncodedDataset::new(
            data.num_features(),
            2,
            (0..data.len()).flat_map(|i| data.feature_row(i).to_vec()).collect(),
            data.labels().iter().map(|&l| 1 - l).collect(),
        )
        .unwrap();
        let acc_flipped = evaluate_accuracy(&head, &ansatz, &params, &flipped).unwrap();
        assert!((acc + acc_flipped - 1.0).abs() < 1e-12);

        let empty = EncodedDataset::new(4, 2, vec![], vec![]).unwrap();
        assert!(evaluate_accuracy(&head, &ansatz, &params, &empty).is_err());
    }

    #[test]
    fn accuracy_ignores_sample_order() {
        let ansatz = build_ring_ansatz(4, 1).unwrap();
        let head = ClassifierHead::first_qubits(2).unwrap();
        let mut rng = Xoshiro256PlusPlus::seed_from_u64(19);
        let params = ParameterVector::new(
            (0..ansatz.num_parameters()).map(|_| rng.gen_range(-1.0..1.0)).collect(),
        )
        .unwrap();
        let data = toy_dataset();
        let reversed = EncodedDataset::new(
            data.num_features(),
            2,
            (0..data.len()).rev().flat_map(|i| data.feature_row(i).to_vec()).collect(),
            data.labels().iter().rev().cloned().collect(),
        )
        .unwrap();
        let a = evaluate_accuracy(&head, &ansatz, &params, &data).unwrap();
        let b = evaluate_accuracy(&head, &ansatz, &params, &reversed).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn chain_rule_gradient_matches_finite_differences() {
        let ansatz = build_ring_ansatz(2, 1).unwrap();
        let head = ClassifierHead::first_qubits(2).unwrap();
        let data = {
            let raw = synthetic_raw(&[2, 5, 5, 2]);
            reduce_features(&select_digits(&raw, &[2, 5]).unwrap(), 4, FeatureMethod::Avgpool)
                .unwrap()
        };
        // Two features drive the two-qubit circuit: project rows.
        let small = EncodedDataset::new(
            2,
            2,
            (0..data.len()).flat_map(|i| data.feature_row(i)[..2].to_vec()).collect(),
            data.labels().to_vec(),
        )
        .unwrap();
        let mut rng = Xoshiro256PlusPlus::seed_from_u64(12);
        let params = ParameterVector::new(
            (0..ansatz.num_parameters()).map(|_| rng.gen_range(-1.2..1.2)).collect(),
        )
        .unwrap();
        let rows: Vec<usize> = (0..small.len()).collect();
        let bq = batch_quantities(&head, &ansatz, &params, &small, &rows, false).unwrap();

        let loss_fn = |p: &ParameterVector| {
            let mut total = 0.0;
            for i in 0..small.len() {
                let logits = forward(&head, &ansatz, p, small.feature_row(i)).unwrap();
                total += cross_entropy_loss(&logits, small.label(i) as usize).unwrap().loss;
            }
            total / small.len() as f64
        };
        let fd = oracle::finite_difference_gradient(loss_fn, &params, 1e-5);
        for (a, b) in bq.gradient.values().iter().zip(&fd) {
            assert!((a - b).abs() < 1e-5, "{a} vs {b}");
        }
        assert!((bq.mean_loss - loss_fn(&params)).abs() < 1e-12);
    }

    #[test]
    fn batch_metric_averages_per_sample_metrics() {
        let ansatz = build_ring_ansatz(2, 1).unwrap();
        let head = ClassifierHead::first_qubits(2).unwrap();
        let data = {
            let raw = synthetic_raw(&[2, 5, 2]);
            let enc = reduce_features(
                &select_digits(&raw, &[2, 5]).unwrap(),
                4,
                FeatureMethod::Avgpool,
            )
            .unwrap();
            EncodedDataset::new(
                2,
                2,
                (0..enc.len()).flat_map(|i| enc.feature_row(i)[..2].to_vec()).collect(),
                enc.labels().to_vec(),
            )
            .unwrap()
        };
        let params = ParameterVector::zeros(ansatz.num_parameters());
        let rows: Vec<usize> = (0..data.len()).collect();
        let bq = batch_quantities(&head, &ansatz, &params, &data, &rows, true).unwrap();
        let inputs: Vec<StateVector> = (0..data.len())
            .map(|i| tpe_encode(data.feature_row(i)).unwrap())
            .collect();
        let expect = crate::grad::assemble_metric_batch(&ansatz, &params, &inputs).unwrap();
        for (a, b) in bq.metric.as_ref().unwrap().blocks().iter().zip(expect.blocks()) {
            assert!((a - b).iter().all(|d| d.abs() < 1e-12));
        }
    }
}
