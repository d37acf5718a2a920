//! Six participants learn a synthetic two-cluster task with federated
//! natural gradient descent; watch the round table and byte counters.

use rand::{Rng, SeedableRng};
use rand_xoshiro::Xoshiro256PlusPlus;

use qfed::classifier::ClassifierHead;
use qfed::data::{shard, EncodedDataset};
use qfed::federated::{run_federated_training, TrainingSetup};
use qfed::optim::{Optimizer, OptimizerKind};
use qfed::{build_ring_ansatz, ParameterVector};

fn synthetic_clusters(n: usize, seed: u64) -> qfed::Result<EncodedDataset> {
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(seed);
    let mut features = Vec::with_capacity(n * 2);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let label = (i % 2) as u8;
        let center: [f64; 2] = if label == 0 { [0.2, 0.25] } else { [0.8, 0.7] };
        for c in center {
            features.push((c + rng.gen_range(-0.15..0.15)).clamp(0.0, 1.0));
        }
        labels.push(label);
    }
    EncodedDataset::new(2, 2, features, labels)
}

fn main() -> qfed::Result<()> {
    let ansatz = build_ring_ansatz(2, 1)?;
    let head = ClassifierHead::first_qubits(2)?;
    let train = synthetic_clusters(120, 5)?;
    let test = synthetic_clusters(60, 6)?;
    let shards = shard(&train, 6, 7)?;

    let mut rng = Xoshiro256PlusPlus::seed_from_u64(3);
    let initial = ParameterVector::new(
        (0..ansatz.num_parameters()).map(|_| rng.gen_range(-0.3..0.3)).collect(),
    )?;

    let (state, reports) = run_federated_training(TrainingSetup {
        ansatz: &ansatz,
        head: &head,
        shards,
        test_set: Some(&test),
        initial_params: initial,
        optimizer: Optimizer::new(OptimizerKind::Fqngd, ansatz.num_parameters(), 0.5, 1e-6),
        rounds: 15,
        batch_size: None,
        stop_at_train_acc: None,
    })?;

    println!("round  train_loss  train_acc  test_acc  bytes(up/down)");
    for r in &reports {
        println!(
            "{:>5}  {:>10.4}  {:>9.3}  {:>8.3}  {}/{}",
            r.round,
            r.train_loss,
            r.train_acc,
            r.test_acc.unwrap_or(f64::NAN),
            r.bytes_up,
            r.bytes_down
        );
    }
    println!(
        "finished round {} with {} uploaded and {} broadcast bytes",
        state.round, state.bytes_up, state.bytes_down
    );
    Ok(())
}
