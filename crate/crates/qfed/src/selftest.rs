//! Embedded oracle suite behind `qfed selftest`: cross-checks the fast
//! evaluation paths against the dense reference implementations and the
//! degenerate-federation equivalence, plus dataset-count checks when MNIST
//! is reachable.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_xoshiro::Xoshiro256PlusPlus;

use crate::ansatz::{build_ring_ansatz, ParameterVector};
use crate::classifier::{cross_entropy_loss, forward, ClassifierHead};
use crate::data::{load_idx, select_digits, EncodedDataset, MnistPaths};
use crate::error::Result;
use crate::federated::{run_federated_training, train_single_device, TrainingSetup};
use crate::grad::{metric_block, parameter_shift_gradient};
use crate::optim::{Optimizer, OptimizerKind};
use crate::oracle;
use crate::state::PauliObservable;

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum CheckStatus {
    Pass,
    Fail(String),
    Skip(String),
}

#[derive(Clone, Debug)]
pub struct CheckResult {
    pub name: &'static str,
    pub status: CheckStatus,
}

impl CheckResult {
    pub fn line(&self) -> String {
        match &self.status {
            CheckStatus::Pass => format!("PASS {}", self.name),
            CheckStatus::Fail(msg) => format!("FAIL {}: {msg}", self.name),
            CheckStatus::Skip(msg) => format!("SKIP {}: {msg}", self.name),
        }
    }
}

/// Test hook: perturbations applied to computed quantities before they are
/// compared against the oracles, to prove the checks can fail.
#[derive(Clone, Copy, Debug, Default)]
pub struct FaultInjection {
    pub flip_metric_sign: bool,
}

fn to_status(result: Result<std::result::Result<(), String>>) -> CheckStatus {
    match result {
        Ok(Ok(())) => CheckStatus::Pass,
        Ok(Err(msg)) => CheckStatus::Fail(msg),
        Err(e) => CheckStatus::Fail(e.to_string()),
    }
}

fn kronecker_equivalence() -> Result<std::result::Result<(), String>> {
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(0x6b72_6f6e);
    for case in 0..50 {
        let n = rng.gen_range(1..=4);
        let layers = rng.gen_range(1..=3);
        let (ansatz, params) = oracle::random_layered_circuit(&mut rng, n, layers);
        let input = oracle::random_input(&mut rng, n);
        let deviation = oracle::evaluate_deviation(&ansatz, &params, &input);
        if deviation > 1e-12 {
            return Ok(Err(format!(
                "case {case}: deviation {deviation:.3e} exceeds 1e-12"
            )));
        }
    }
    Ok(Ok(()))
}

fn gradient_parity() -> Result<std::result::Result<(), String>> {
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(0x6772_6164);
    for case in 0..30 {
        let n = rng.gen_range(1..=3);
        let (ansatz, params) = oracle::random_layered_circuit(&mut rng, n, 2);
        let input = oracle::random_input(&mut rng, n);
        let loss = |p: &ParameterVector| {
            ansatz
                .evaluate(p, &input)
                .unwrap()
                .expectation(PauliObservable::z(0))
                .unwrap()
        };
        let shift = parameter_shift_gradient(loss, &params)?;
        let fd = oracle::finite_difference_gradient(loss, &params, 1e-5);
        for (i, (a, b)) in shift.values().iter().zip(&fd).enumerate() {
            if (a - b).abs() > 1e-5 {
                return Ok(Err(format!(
                    "case {case} parameter {i}: shift {a:.8} vs finite difference {b:.8}"
                )));
            }
        }
    }
    // Through the cross-entropy head.
    let ansatz = build_ring_ansatz(2, 1)?;
    let head = ClassifierHead::first_qubits(2)?;
    let features = [0.35, 0.8];
    let params = ParameterVector::new(
        (0..ansatz.num_parameters()).map(|i| 0.3 * (i as f64 + 1.0).sin()).collect(),
    )?;
    let loss = |p: &ParameterVector| {
        let logits = forward(&head, &ansatz, p, &features).unwrap();
        cross_entropy_loss(&logits, 1).unwrap().loss
    };
    let data = EncodedDataset::new(2, 2, features.to_vec(), vec![1])?;
    let bq = crate::classifier::batch_quantities(&head, &ansatz, &params, &data, &[0], false)?;
    let fd = oracle::finite_difference_gradient(loss, &params, 1e-5);
    for (i, (a, b)) in bq.gradient.values().iter().zip(&fd).enumerate() {
        if (a - b).abs() > 1e-5 {
            return Ok(Err(format!(
                "cross-entropy parameter {i}: chain rule {a:.8} vs finite difference {b:.8}"
            )));
        }
    }
    Ok(Ok(()))
}

fn metric_oracle(faults: &FaultInjection) -> Result<std::result::Result<(), String>> {
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(0x6d65_7472);
    for case in 0..30 {
        let n = rng.gen_range(1..=3);
        let (ansatz, params) = oracle::random_layered_circuit(&mut rng, n, 2);
        let input = oracle::random_input(&mut rng, n);
        for l in 1..=ansatz.num_layers() {
            let mut block = metric_block(&ansatz, &params, &input, l)?;
            if faults.flip_metric_sign {
                block = -block;
            }
            let brute = oracle::metric_block_bruteforce(&ansatz, &params, &input, l);
            let deviation = (&block - &brute).iter().map(|d| d.abs()).fold(0.0, f64::max);
            if deviation > 1e-10 {
                return Ok(Err(format!(
                    "case {case} layer {l}: deviation {deviation:.3e} exceeds 1e-10"
                )));
            }
            let asym = (&block - block.transpose())
                .iter()
                .map(|d| d.abs())
                .fold(0.0, f64::max);
            if asym > 1e-10 {
                return Ok(Err(format!("case {case} layer {l}: asymmetry {asym:.3e}")));
            }
            if block.clone().symmetric_eigen().eigenvalues.iter().any(|&ev| ev < -1e-9) {
                return Ok(Err(format!("case {case} layer {l}: negative eigenvalue")));
            }
        }
    }
    Ok(Ok(()))
}

fn degenerate_federation() -> Result<std::result::Result<(), String>> {
    let ansatz = build_ring_ansatz(2, 1)?;
    let head = ClassifierHead::first_qubits(2)?;
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(0x6b31_6571);
    let features: Vec<f64> = (0..16).map(|_| rng.gen_range(0.0..=1.0)).collect();
    let labels: Vec<u8> = (0..8).map(|i| (i % 2) as u8).collect();
    let data = EncodedDataset::new(2, 2, features, labels)?;
    let initial = ParameterVector::new(
        (0..ansatz.num_parameters()).map(|_| rng.gen_range(-1.5..1.5)).collect(),
    )?;
    let rounds = 10;
    let (state, _) = run_federated_training(TrainingSetup {
        ansatz: &ansatz,
        head: &head,
        shards: vec![data.clone()],
        test_set: None,
        initial_params: initial.clone(),
        optimizer: Optimizer::new(OptimizerKind::Fqngd, initial.len(), 0.05, 1e-6),
        rounds,
        batch_size: None,
        stop_at_train_acc: None,
    })?;
    let (trajectory, _) = train_single_device(
        &ansatz,
        &head,
        &data,
        OptimizerKind::Fqngd,
        0.05,
        1e-6,
        initial,
        rounds,
        None,
    )?;
    let distance = state.global_params.distance(trajectory.last().unwrap());
    if distance > 1e-12 {
        return Ok(Err(format!(
            "single-participant trajectory drifted {distance:.3e} from single-device QNGD"
        )));
    }
    Ok(Ok(()))
}

fn dataset_counts(data_dir: &Path) -> CheckStatus {
    let paths = match MnistPaths::locate(data_dir) {
        Ok(p) => p,
        Err(e) => return CheckStatus::Skip(e.to_string()),
    };
    let run = || -> Result<std::result::Result<(), String>> {
        let train = load_idx(&paths.train_images, &paths.train_labels)?;
        let test = load_idx(&paths.test_images, &paths.test_labels)?;
        let counts = [
            (select_digits(&train, &[2, 5])?.len(), 11379, "binary train"),
            (select_digits(&test, &[2, 5])?.len(), 1924, "binary test"),
            (select_digits(&train, &[1, 3, 7])?.len(), 19138, "ternary train"),
            (select_digits(&test, &[1, 3, 7])?.len(), 3173, "ternary test"),
        ];
        for (got, expect, what) in counts {
            if got != expect {
                return Ok(Err(format!("{what}: {got} samples, expected {expect}")));
            }
        }
        Ok(Ok(()))
    };
    to_status(run())
}

/// Run every property. Data-dependent checks are skipped with an explicit
/// status if MNIST is not found under `data_dir`.
pub fn run_selftest(data_dir: &Path, faults: &FaultInjection) -> Vec<CheckResult> {
    vec![
        CheckResult { name: "kronecker-equivalence", status: to_status(kronecker_equivalence()) },
        CheckResult { name: "gradient-parity", status: to_status(gradient_parity()) },
        CheckResult { name: "metric-oracle", status: to_status(metric_oracle(faults)) },
        CheckResult { name: "degenerate-federation", status: to_status(degenerate_federation()) },
        CheckResult { name: "dataset-counts", status: dataset_counts(data_dir) },
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fresh_build_passes_all_properties() {
        let dir = tempfile::tempdir().unwrap();
        let results = run_selftest(dir.path(), &FaultInjection::default());
        for r in &results {
            match (&r.status, r.name) {
                (CheckStatus::Skip(_), "dataset-counts") => {} // no MNIST in the temp dir
                (CheckStatus::Pass, _) => {}
                (status, name) => panic!("{name} unexpectedly {status:?}"),
            }
        }
    }

    #[test]
    fn injected_metric_sign_flip_fails_the_metric_property() {
        let dir = tempfile::tempdir().unwrap();
        let faults = FaultInjection { flip_metric_sign: true };
        let results = run_selftest(dir.path(), &faults);
        let metric = results.iter().find(|r| r.name == "metric-oracle").unwrap();
        assert!(
            matches!(metric.status, CheckStatus::Fail(_)),
            "sign flip should fail the metric oracle, got {:?}",
            metric.status
        );
        // The other oracle properties are untouched by the injected fault.
        let kron = results.iter().find(|r| r.name == "kronecker-equivalence").unwrap();
        assert_eq!(kron.status, CheckStatus::Pass);
    }

    #[test]
    fn missing_data_reports_skip() {
        let dir = tempfile::tempdir().unwrap();
        let results = run_selftest(dir.path(), &FaultInjection::default());
        let counts = results.iter().find(|r| r.name == "dataset-counts").unwrap();
        assert!(matches!(counts.status, CheckStatus::Skip(_)));
        assert!(counts.line().starts_with("SKIP dataset-counts"));
    }
}
