//! Short federated run on the MNIST {2, 5} task. Looks for the IDX files
//! under ./data/mnist (or $QFED_DATA_DIR) and exits gracefully otherwise.

use qfed::experiment::{execute, ExperimentConfig, TaskKind};
use qfed::optim::OptimizerKind;

fn main() -> qfed::Result<()> {
    let config = ExperimentConfig {
        task: TaskKind::Binary,
        digits: vec![2, 5],
        num_features: 8,
        depth: 2,
        participants: 6,
        rounds: 10,
        optimizer: OptimizerKind::Fqngd,
        learning_rate: 1.5,
        damping: 1e-3,
        seed: 7,
        data_dir: "data/mnist".into(),
        output_dir: std::env::temp_dir().join("qfed-mnist-example"),
        feature_method: Default::default(),
        train_limit: Some(600),
        test_limit: Some(400),
        batch_size: None,
    };
    if let Err(e) = config.validate() {
        eprintln!("{e}");
        eprintln!("place the MNIST IDX files (plain or .gz) under data/mnist and re-run");
        return Ok(());
    }
    println!("training {} for {} rounds on digits {:?}...", config.optimizer, config.rounds, config.digits);
    let result = execute(&config)?;
    for r in &result.reports {
        println!(
            "round {:>2}: train_loss {:.4}, train_acc {:.3}, test_acc {:.3}",
            r.round,
            r.train_loss,
            r.train_acc,
            r.test_acc.unwrap_or(f64::NAN)
        );
    }
    println!(
        "final test accuracy {:.4} after {} bytes of communication",
        result.summary.final_test_acc, result.summary.total_bytes
    );
    Ok(())
}
