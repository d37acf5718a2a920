//! Federated training loop: broadcast global parameters, run one local
//! QNGD step per participant per round, aggregate shard-weighted directions,
//! and track communication bytes.
//!
//! Participants upload gradients (natural directions for FQNGD, raw
//! gradients for the baseline optimizers); parameters never leave the
//! coordinator except through broadcasts. The wire is modeled with byte
//! counters only, 8 bytes per real.

use std::io::Write;
use std::path::Path;
use std::time::Instant;

use crate::ansatz::{LayeredAnsatz, ParameterVector};
use crate::classifier::{batch_quantities, evaluate_accuracy, evaluate_loss, ClassifierHead};
use crate::data::EncodedDataset;
use crate::error::{Error, Result};
use crate::grad::{natural_direction, GradientVector};
use crate::optim::{adagrad_step, adam_step, qngd_step, sgd_step, Optimizer, OptimizerKind};

const BYTES_PER_REAL: u64 = 8;

/// One shard owner. After a broadcast its parameters equal the global ones.
#[derive(Clone, Debug)]
pub struct Participant {
    pub id: usize,
    pub shard: EncodedDataset,
    pub local_params: ParameterVector,
}

impl Participant {
    pub fn shard_size(&self) -> usize {
        self.shard.len()
    }
}

/// Coordinator view: global parameters, participants, round counter, and
/// cumulative communication accounting.
#[derive(Clone, Debug)]
pub struct FederationState {
    pub global_params: ParameterVector,
    pub participants: Vec<Participant>,
    pub round: usize,
    pub learning_rate: f64,
    pub bytes_up: u64,
    pub bytes_down: u64,
}

impl FederationState {
    pub fn new(
        global_params: ParameterVector,
        shards: Vec<EncodedDataset>,
        learning_rate: f64,
    ) -> Result<Self> {
        if shards.is_empty() {
            return Err(Error::Config("at least one participant is required".into()));
        }
        if shards.iter().any(|s| s.is_empty()) {
            return Err(Error::Config("every shard must hold at least one sample".into()));
        }
        let participants = shards
            .into_iter()
            .enumerate()
            .map(|(id, shard)| Participant {
                id,
                shard,
                local_params: global_params.clone(),
            })
            .collect();
        Ok(Self {
            global_params,
            participants,
            round: 0,
            learning_rate,
            bytes_up: 0,
            bytes_down: 0,
        })
    }

    pub fn num_participants(&self) -> usize {
        self.participants.len()
    }

    pub fn total_samples(&self) -> usize {
        self.participants.iter().map(|p| p.shard_size()).sum()
    }

    fn payload_bytes(&self) -> u64 {
        self.num_participants() as u64 * self.global_params.len() as u64 * BYTES_PER_REAL
    }

    /// Copy the global parameters to every participant.
    pub fn broadcast(&mut self) {
        for p in &mut self.participants {
            p.local_params = self.global_params.clone();
        }
        self.bytes_down += self.payload_bytes();
    }

    /// Shard-weighted sum of uploaded directions, accumulated in ascending
    /// participant-id order regardless of storage order.
    pub fn weighted_sum(&self, directions: &[GradientVector]) -> Result<GradientVector> {
        if directions.len() != self.num_participants() {
            return Err(Error::Protocol(format!(
                "expected {} directions, received {}",
                self.num_participants(),
                directions.len()
            )));
        }
        let total = self.total_samples() as f64;
        let mut order: Vec<usize> = (0..self.participants.len()).collect();
        order.sort_by_key(|&i| self.participants[i].id);
        let mut acc = vec![0.0; self.global_params.len()];
        for idx in order {
            let weight = self.participants[idx].shard_size() as f64 / total;
            let d = &directions[idx];
            if d.len() != acc.len() {
                return Err(Error::Protocol(format!(
                    "participant {} uploaded {} values, expected {}",
                    self.participants[idx].id,
                    d.len(),
                    acc.len()
                )));
            }
            for (a, v) in acc.iter_mut().zip(d.values()) {
                *a += weight * v;
            }
        }
        GradientVector::new(acc)
    }

    /// Coordinator update for preconditioned uploads:
    /// `theta_bar' = theta_bar - eta * sum_k (N_k/N) d_k`.
    pub fn aggregate_and_update(&mut self, directions: &[GradientVector]) -> Result<()> {
        let aggregated = self.weighted_sum(directions)?;
        self.global_params = sgd_step(&self.global_params, &aggregated, self.learning_rate)?;
        self.round += 1;
        self.bytes_up += self.payload_bytes();
        Ok(())
    }

    /// Coordinator update for raw-gradient uploads: the shared optimizer
    /// state is applied to the weighted-mean gradient.
    pub fn aggregate_with_optimizer(
        &mut self,
        directions: &[GradientVector],
        optimizer: &mut Optimizer,
    ) -> Result<()> {
        let aggregated = self.weighted_sum(directions)?;
        self.global_params = optimizer.apply(&self.global_params, &aggregated)?;
        self.round += 1;
        self.bytes_up += self.payload_bytes();
        Ok(())
    }
}

/// What a participant uploads for one round.
#[derive(Clone, Debug)]
pub struct LocalUpdate {
    pub direction: GradientVector,
    pub loss: f64,
    pub direction_norm: f64,
}

/// The batch for a round: the whole shard, or a rotating window when a
/// smaller batch size is configured.
fn batch_rows(shard_len: usize, batch_size: Option<usize>, round: usize) -> Vec<usize> {
    match batch_size {
        None => (0..shard_len).collect(),
        Some(bs) if bs >= shard_len => (0..shard_len).collect(),
        Some(bs) => {
            let start = ((round - 1) * bs) % shard_len;
            (0..bs).map(|i| (start + i) % shard_len).collect()
        }
    }
}

/// One local step: the loss gradient on the local batch, preconditioned by
/// the batch-averaged metric when `damping` is given. Local parameters are
/// not updated; the direction is uploaded instead.
pub fn local_step(
    participant: &Participant,
    ansatz: &LayeredAnsatz,
    head: &ClassifierHead,
    batch_size: Option<usize>,
    round: usize,
    precondition: Option<f64>,
) -> Result<LocalUpdate> {
    if participant.shard.is_empty() {
        return Err(Error::Config(format!(
            "participant {} has an empty shard",
            participant.id
        )));
    }
    let rows = batch_rows(participant.shard_size(), batch_size, round);
    let bq = batch_quantities(
        head,
        ansatz,
        &participant.local_params,
        &participant.shard,
        &rows,
        precondition.is_some(),
    )?;
    let direction = match precondition {
        Some(damping) => natural_direction(bq.metric.as_ref().unwrap(), &bq.gradient, damping)?,
        None => bq.gradient,
    };
    let direction_norm = direction.norm();
    Ok(LocalUpdate { direction, loss: bq.mean_loss, direction_norm })
}

/// Per-round record. `wall_ms` is measured wall-clock time and is the one
/// entry that is not reproducible across runs.
#[derive(Clone, Debug)]
pub struct RoundReport {
    pub round: usize,
    pub train_loss: f64,
    pub train_acc: f64,
    pub test_acc: Option<f64>,
    pub direction_norms: Vec<f64>,
    pub round_bytes: u64,
    pub bytes_up: u64,
    pub bytes_down: u64,
    pub wall_ms: u64,
}

pub const ROUND_CSV_HEADER: &str = "round,train_loss,train_acc,test_acc,bytes_up,bytes_down,wall_ms";

impl RoundReport {
    pub fn csv_line(&self) -> String {
        format!(
            "{},{:.6},{:.6},{},{},{},{}",
            self.round,
            self.train_loss,
            self.train_acc,
            self.test_acc.map_or(String::new(), |a| format!("{a:.6}")),
            self.bytes_up,
            self.bytes_down,
            self.wall_ms
        )
    }
}

/// Append reports to a CSV file, writing the header first when the file is
/// created.
pub fn write_round_csv(path: &Path, reports: &[RoundReport]) -> Result<()> {
    let exists = path.exists();
    let mut file = std::fs::OpenOptions::new().create(true).append(true).open(path)?;
    if !exists {
        writeln!(file, "{ROUND_CSV_HEADER}")?;
    }
    for report in reports {
        writeln!(file, "{}", report.csv_line())?;
    }
    Ok(())
}

/// Everything a federated run needs.
pub struct TrainingSetup<'a> {
    pub ansatz: &'a LayeredAnsatz,
    pub head: &'a ClassifierHead,
    pub shards: Vec<EncodedDataset>,
    pub test_set: Option<&'a EncodedDataset>,
    pub initial_params: ParameterVector,
    pub optimizer: Optimizer,
    pub rounds: usize,
    pub batch_size: Option<usize>,
    /// Stop once train accuracy reaches this threshold (the closing round is
    /// still reported). Used to measure rounds-to-threshold cheaply.
    pub stop_at_train_acc: Option<f64>,
}

/// Execute the federated protocol: initial broadcast, then `rounds` cycles
/// of parallel-semantics local steps, ascending-id aggregation, and
/// re-broadcast. Deterministic for a fixed setup.
pub fn run_federated_training(setup: TrainingSetup) -> Result<(FederationState, Vec<RoundReport>)> {
    let mut optimizer = setup.optimizer;
    let mut state = FederationState::new(
        setup.initial_params,
        setup.shards,
        match &optimizer {
            Optimizer::Sgd { learning_rate, .. }
            | Optimizer::Fqngd { learning_rate, .. } => *learning_rate,
            Optimizer::Adagrad(s) => s.learning_rate,
            Optimizer::Adam(s) => s.learning_rate,
        },
    )?;
    state.broadcast();

    let mut reports = Vec::with_capacity(setup.rounds);
    for t in 1..=setup.rounds {
        let start = Instant::now();
        let bytes_before = state.bytes_up + state.bytes_down;
        let name_round = |e: Error| match e {
            Error::Divergence(msg) => Error::Divergence(format!("round {t}: {msg}")),
            other => other,
        };

        let precondition = optimizer
            .preconditions_locally()
            .then(|| optimizer.damping());
        let updates: Vec<LocalUpdate> = state
            .participants
            .iter()
            .map(|p| local_step(p, setup.ansatz, setup.head, setup.batch_size, t, precondition))
            .collect::<Result<_>>()
            .map_err(name_round)?;
        let directions: Vec<GradientVector> =
            updates.iter().map(|u| u.direction.clone()).collect();

        if optimizer.preconditions_locally() {
            state.aggregate_and_update(&directions).map_err(name_round)?;
        } else {
            state
                .aggregate_with_optimizer(&directions, &mut optimizer)
                .map_err(name_round)?;
        }
        state.broadcast();

        let (train_loss, train_acc) = global_train_metrics(&state, setup.ansatz, setup.head)?;
        let test_acc = match setup.test_set {
            Some(test) => Some(evaluate_accuracy(setup.head, setup.ansatz, &state.global_params, test)?),
            None => None,
        };
        reports.push(RoundReport {
            round: t,
            train_loss,
            train_acc,
            test_acc,
            direction_norms: updates.iter().map(|u| u.direction_norm).collect(),
            round_bytes: state.bytes_up + state.bytes_down - bytes_before,
            bytes_up: state.bytes_up,
            bytes_down: state.bytes_down,
            wall_ms: start.elapsed().as_millis() as u64,
        });

        if let Some(threshold) = setup.stop_at_train_acc {
            if train_acc >= threshold {
                break;
            }
        }
    }
    Ok((state, reports))
}

/// Shard-weighted global mean loss and accuracy at the current parameters.
fn global_train_metrics(
    state: &FederationState,
    ansatz: &LayeredAnsatz,
    head: &ClassifierHead,
) -> Result<(f64, f64)> {
    let total = state.total_samples() as f64;
    let mut order: Vec<usize> = (0..state.participants.len()).collect();
    order.sort_by_key(|&i| state.participants[i].id);
    let mut loss = 0.0;
    let mut acc = 0.0;
    for idx in order {
        let p = &state.participants[idx];
        let (l, a) = evaluate_loss(head, ansatz, &state.global_params, &p.shard)?;
        let w = p.shard_size() as f64 / total;
        loss += w * l;
        acc += w * a;
    }
    Ok((loss, acc))
}

/// Standalone single-device trainer used as the degenerate-federation
/// reference: straight-line loop over the spec-level step rules, sharing no
/// orchestration code with the federated path.
pub fn train_single_device(
    ansatz: &LayeredAnsatz,
    head: &ClassifierHead,
    train: &EncodedDataset,
    kind: OptimizerKind,
    learning_rate: f64,
    damping: f64,
    initial: ParameterVector,
    rounds: usize,
    batch_size: Option<usize>,
) -> Result<(Vec<ParameterVector>, Vec<f64>)> {
    let mut params = initial;
    let mut trajectory = Vec::with_capacity(rounds);
    let mut losses = Vec::with_capacity(rounds);
    let mut adagrad = crate::optim::AdagradState::new(params.len(), learning_rate);
    let mut adam = crate::optim::AdamState::new(params.len(), learning_rate);
    for t in 1..=rounds {
        let rows = batch_rows(train.len(), batch_size, t);
        let with_metric = kind == OptimizerKind::Fqngd;
        let bq = batch_quantities(head, ansatz, &params, train, &rows, with_metric)?;
        params = match kind {
            OptimizerKind::Sgd => sgd_step(&params, &bq.gradient, learning_rate)?,
            OptimizerKind::Adagrad => {
                let (next, out) = adagrad_step(adagrad, &params, &bq.gradient)?;
                adagrad = next;
                out
            }
            OptimizerKind::Adam => {
                let (next, out) = adam_step(adam, &params, &bq.gradient)?;
                adam = next;
                out
            }
            OptimizerKind::Fqngd => qngd_step(
                &params,
                &bq.gradient,
                bq.metric.as_ref().unwrap(),
                learning_rate,
                damping,
            )?,
        };
        trajectory.push(params.clone());
        losses.push(bq.mean_loss);
    }
    Ok((trajectory, losses))
}
