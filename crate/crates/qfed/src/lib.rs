//! Desk-scale simulation of federated training for variational quantum
//! circuits.
//!
//! The crate provides a dense statevector simulator, layered circuit
//! construction with tensor-product input encoding, exact parameter-shift
//! gradients, the block-diagonal Fubini-Study metric with a damped
//! pseudo-inverse solve, four optimizers (SGD, Adagrad, Adam, QNGD), and a
//! federated coordinator that aggregates shard-weighted natural gradients.
//! An MNIST ingestion pipeline and an experiment runner reproduce
//! optimizer-comparison studies on downsampled digit subsets.
//!
//! Start with the runnable examples:
//!
//! ```bash
//! cargo run --release -p qfed --example encode_and_measure
//! cargo run --release -p qfed --example natural_gradient_toy
//! cargo run --release -p qfed --example federated_toy
//! ```
//!
//! or the CLI: `qfed train --config <json>`, `qfed compare --config <json>
//! --optimizers sgd,adagrad,adam,fqngd`, `qfed selftest`.

pub mod ansatz;
pub mod classifier;
pub mod data;
pub mod error;
pub mod experiment;
pub mod federated;
pub mod grad;
pub mod optim;
pub mod oracle;
pub mod selftest;
pub mod state;

pub use ansatz::{build_ring_ansatz, tpe_encode, LayeredAnsatz, ParameterVector};
pub use classifier::ClassifierHead;
pub use data::{EncodedDataset, FeatureMethod, RawDataset};
pub use error::{Error, Result};
pub use grad::{BlockDiagMetric, GradientVector};
pub use optim::{Optimizer, OptimizerKind};
pub use state::{PauliAxis, PauliObservable, SingleQubitGate, StateVector};
