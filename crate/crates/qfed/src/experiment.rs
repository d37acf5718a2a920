//! Experiment configuration and runners: train one optimizer under the
//! federated schedule, or compare several under identical seeds and shards.

use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_xoshiro::Xoshiro256PlusPlus;
use serde::{Deserialize, Serialize};

use crate::ansatz::{build_ring_ansatz, ParameterVector};
use crate::classifier::{evaluate_accuracy, ClassifierHead};
use crate::data::{
    load_idx, reduce_features, select_digits, shard, EncodedDataset, FeatureMethod, MnistPaths,
    PcaReducer,
};
use crate::error::{Error, Result};
use crate::federated::{
    run_federated_training, write_round_csv, FederationState, RoundReport, TrainingSetup,
    ROUND_CSV_HEADER,
};
use crate::optim::{Optimizer, OptimizerKind};

/// Train accuracy defining "rounds to threshold" in summaries; this
/// operationalizes convergence-rate comparisons as a measurable count.
pub const TRAIN_ACC_THRESHOLD: f64 = 0.90;

/// Environment variable overriding the configured data directory.
pub const DATA_DIR_ENV: &str = "QFED_DATA_DIR";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TaskKind {
    Binary,
    Ternary,
}

impl TaskKind {
    pub fn num_classes(self) -> usize {
        match self {
            TaskKind::Binary => 2,
            TaskKind::Ternary => 3,
        }
    }
}

/// One experiment, loaded from a JSON document. Unknown keys are rejected so
/// hyperparameter typos cannot silently invalidate a comparison.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub task: TaskKind,
    pub digits: Vec<u8>,
    pub num_features: usize,
    pub depth: usize,
    pub participants: usize,
    pub rounds: usize,
    pub optimizer: OptimizerKind,
    pub learning_rate: f64,
    pub damping: f64,
    pub seed: u64,
    pub data_dir: PathBuf,
    pub output_dir: PathBuf,
    #[serde(default)]
    pub feature_method: FeatureMethod,
    #[serde(default)]
    pub train_limit: Option<usize>,
    #[serde(default)]
    pub test_limit: Option<usize>,
    #[serde(default)]
    pub batch_size: Option<usize>,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&fs::read_to_string(path)?)
    }

    /// Data directory after applying the environment override.
    pub fn resolved_data_dir(&self) -> PathBuf {
        std::env::var_os(DATA_DIR_ENV)
            .map(PathBuf::from)
            .unwrap_or_else(|| self.data_dir.clone())
    }

    /// Check every downstream constraint up front, reporting all failures
    /// at once.
    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        let expected = self.task.num_classes();
        if self.digits.len() != expected {
            problems.push(format!(
                "task {:?} needs {expected} digits, got {}",
                self.task,
                self.digits.len()
            ));
        }
        let mut sorted = self.digits.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != self.digits.len() {
            problems.push("digits must be distinct".into());
        }
        if self.digits.iter().any(|&d| d > 9) {
            problems.push("digits must be in 0..=9".into());
        }
        match self.feature_method {
            FeatureMethod::Avgpool => {
                if ![4, 8, 16].contains(&self.num_features) {
                    problems.push(format!(
                        "avgpool supports 4, 8, or 16 features, got {}",
                        self.num_features
                    ));
                }
            }
            FeatureMethod::Pca => {
                if self.num_features == 0 || self.num_features > crate::state::MAX_QUBITS {
                    problems.push(format!(
                        "pca features must be in 1..={}, got {}",
                        crate::state::MAX_QUBITS,
                        self.num_features
                    ));
                }
            }
        }
        if self.num_features < expected {
            problems.push(format!(
                "{expected} readout qubits do not fit in {} features",
                self.num_features
            ));
        }
        if self.depth == 0 {
            problems.push("depth must be at least 1".into());
        }
        if self.participants == 0 {
            problems.push("participants must be at least 1".into());
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            problems.push(format!("learning_rate must be positive, got {}", self.learning_rate));
        }
        if !(self.damping.is_finite() && self.damping >= 0.0) {
            problems.push(format!("damping must be non-negative, got {}", self.damping));
        }
        if self.batch_size == Some(0) {
            problems.push("batch_size must be at least 1 when given".into());
        }
        if let Err(e) = MnistPaths::locate(&self.resolved_data_dir()) {
            problems.push(e.to_string());
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Validation(problems))
        }
    }
}

/// Spread of the uniform parameter initialization. Full-range starts reach
/// better basins on the digit tasks than near-identity ones.
pub const INIT_SCALE: f64 = std::f64::consts::PI;

/// Initial parameters drawn uniformly from [-INIT_SCALE, INIT_SCALE),
/// decorrelated from the shard shuffle by a long jump on the same seeded
/// generator.
pub fn initial_parameters(num_params: usize, seed: u64) -> ParameterVector {
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(seed);
    rng.long_jump();
    ParameterVector::new(
        (0..num_params).map(|_| rng.gen_range(-INIT_SCALE..INIT_SCALE)).collect(),
    )
    .expect("uniform draws are finite")
}

/// Train and test splits after selection, truncation, and encoding.
pub struct PreparedData {
    pub train: EncodedDataset,
    pub test: EncodedDataset,
}

/// Load MNIST and run the configured reduction. PCA fits on the (possibly
/// truncated) training split only.
pub fn prepare_data(config: &ExperimentConfig) -> Result<PreparedData> {
    let paths = MnistPaths::locate(&config.resolved_data_dir())?;
    let train_raw = load_idx(&paths.train_images, &paths.train_labels)?;
    let test_raw = load_idx(&paths.test_images, &paths.test_labels)?;
    let mut train_raw = select_digits(&train_raw, &config.digits)?;
    let mut test_raw = select_digits(&test_raw, &config.digits)?;
    if let Some(n) = config.train_limit {
        train_raw = train_raw.take(n);
    }
    if let Some(n) = config.test_limit {
        test_raw = test_raw.take(n);
    }
    let (train, test) = match config.feature_method {
        FeatureMethod::Avgpool => (
            reduce_features(&train_raw, config.num_features, FeatureMethod::Avgpool)?,
            reduce_features(&test_raw, config.num_features, FeatureMethod::Avgpool)?,
        ),
        FeatureMethod::Pca => {
            let reducer = PcaReducer::fit(&train_raw, config.num_features)?;
            (reducer.transform(&train_raw)?, reducer.transform(&test_raw)?)
        }
    };
    Ok(PreparedData { train, test })
}

/// Outcome of one run, before any files are written.
pub struct RunResult {
    pub config: ExperimentConfig,
    pub state: FederationState,
    pub reports: Vec<RoundReport>,
    pub summary: SummaryRow,
}

/// One summary-table row.
#[derive(Clone, Debug, PartialEq)]
pub struct SummaryRow {
    pub optimizer: OptimizerKind,
    pub final_test_acc: f64,
    pub rounds_to_threshold: Option<usize>,
    pub total_bytes: u64,
}

pub const SUMMARY_CSV_HEADER: &str =
    "optimizer,final_test_acc,rounds_to_90pct_train_acc,total_bytes";

impl SummaryRow {
    pub fn csv_line(&self) -> String {
        format!(
            "{},{:.6},{},{}",
            self.optimizer,
            self.final_test_acc,
            self.rounds_to_threshold.map_or(String::new(), |r| r.to_string()),
            self.total_bytes
        )
    }
}

/// First round whose train accuracy reaches the threshold.
pub fn rounds_to_threshold(reports: &[RoundReport], threshold: f64) -> Option<usize> {
    reports.iter().find(|r| r.train_acc >= threshold).map(|r| r.round)
}

/// Run one configured experiment in memory.
pub fn execute(config: &ExperimentConfig) -> Result<RunResult> {
    config.validate()?;
    execute_with_data(config, &prepare_data(config)?)
}

/// Run with already-prepared data (shared across a comparison).
pub fn execute_with_data(config: &ExperimentConfig, data: &PreparedData) -> Result<RunResult> {
    let num_classes = config.task.num_classes();
    let ansatz = build_ring_ansatz(config.num_features, config.depth)?;
    let head = ClassifierHead::first_qubits(num_classes)?;
    let shards = shard(&data.train, config.participants, config.seed)?;
    let initial = initial_parameters(ansatz.num_parameters(), config.seed);
    let optimizer = Optimizer::new(
        config.optimizer,
        ansatz.num_parameters(),
        config.learning_rate,
        config.damping,
    );
    let (state, reports) = run_federated_training(TrainingSetup {
        ansatz: &ansatz,
        head: &head,
        shards,
        test_set: Some(&data.test),
        initial_params: initial,
        optimizer,
        rounds: config.rounds,
        batch_size: config.batch_size,
        stop_at_train_acc: None,
    })?;
    let final_test_acc = match reports.last().and_then(|r| r.test_acc) {
        Some(acc) => acc,
        None => evaluate_accuracy(&head, &ansatz, &state.global_params, &data.test)?,
    };
    let summary = SummaryRow {
        optimizer: config.optimizer,
        final_test_acc,
        rounds_to_threshold: rounds_to_threshold(&reports, TRAIN_ACC_THRESHOLD),
        total_bytes: state.bytes_up + state.bytes_down,
    };
    Ok(RunResult { config: config.clone(), state, reports, summary })
}

/// Artifacts written by a training run.
pub struct TrainArtifacts {
    pub summary: SummaryRow,
    pub curve_path: PathBuf,
    pub params_path: PathBuf,
    pub sidecar_path: PathBuf,
}

/// Run one experiment and write its artifacts: the learning curve CSV, the
/// final parameters as flat little-endian doubles with the config as a JSON
/// sidecar, and an appended summary row.
pub fn cmd_train(config: &ExperimentConfig) -> Result<TrainArtifacts> {
    let result = execute(config)?;
    fs::create_dir_all(&config.output_dir)?;

    let curve_path = config.output_dir.join("curve.csv");
    if curve_path.exists() {
        fs::remove_file(&curve_path)?;
    }
    write_round_csv(&curve_path, &result.reports)?;

    let params_path = config.output_dir.join("params.bin");
    let mut bytes = Vec::with_capacity(result.state.global_params.len() * 8);
    for v in result.state.global_params.values() {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    fs::write(&params_path, bytes)?;

    let sidecar_path = config.output_dir.join("params.json");
    fs::write(&sidecar_path, config.to_json()?)?;

    let summary_path = config.output_dir.join("summary.csv");
    append_summary(&summary_path, std::slice::from_ref(&result.summary))?;

    Ok(TrainArtifacts {
        summary: result.summary,
        curve_path,
        params_path,
        sidecar_path,
    })
}

fn append_summary(path: &Path, rows: &[SummaryRow]) -> Result<()> {
    use std::io::Write;
    let exists = path.exists();
    let mut file = fs::OpenOptions::new().create(true).append(true).open(path)?;
    if !exists {
        writeln!(file, "{SUMMARY_CSV_HEADER}")?;
    }
    for row in rows {
        writeln!(file, "{}", row.csv_line())?;
    }
    Ok(())
}

/// Comparison outcome, sorted by rounds-to-threshold (unreached counts as
/// slowest; ties break on the optimizer name).
pub struct SummaryTable {
    pub rows: Vec<SummaryRow>,
}

impl SummaryTable {
    pub fn render(&self) -> String {
        let mut out = String::from(
            "optimizer   final_test_acc   rounds_to_90pct_train   total_bytes\n",
        );
        for row in &self.rows {
            out.push_str(&format!(
                "{:<11} {:<16.6} {:<23} {}\n",
                row.optimizer.to_string(),
                row.final_test_acc,
                row.rounds_to_threshold.map_or("-".to_string(), |r| r.to_string()),
                row.total_bytes
            ));
        }
        out
    }
}

/// Build the per-optimizer configs for a comparison from one base config.
pub fn comparison_configs(
    base: &ExperimentConfig,
    optimizers: &[OptimizerKind],
) -> Vec<ExperimentConfig> {
    optimizers
        .iter()
        .map(|&optimizer| ExperimentConfig { optimizer, ..base.clone() })
        .collect()
}

/// Run several configs that differ only in their optimizer, sharing the seed
/// and shards, and write a merged curve CSV plus the summary table.
pub fn cmd_compare(configs: &[ExperimentConfig]) -> Result<SummaryTable> {
    if configs.len() < 2 {
        return Err(Error::Validation(vec![
            "a comparison needs at least two optimizers".into(),
        ]));
    }
    let mut problems = Vec::new();
    for (i, c) in configs.iter().enumerate() {
        if let Err(Error::Validation(list)) = c.validate() {
            problems.extend(list.into_iter().map(|p| format!("config {i}: {p}")));
        }
        if configs[..i].iter().any(|prev| prev.optimizer == c.optimizer) {
            problems.push(format!("optimizer {} listed twice", c.optimizer));
        }
        // Optimizer choice carries its own hyperparameters; everything else
        // must match so runs share seeds, shards, and schedules.
        let mut normalized = c.clone();
        normalized.optimizer = configs[0].optimizer;
        normalized.learning_rate = configs[0].learning_rate;
        normalized.damping = configs[0].damping;
        if normalized != configs[0] {
            problems.push(format!(
                "config {i} differs from config 0 beyond the optimizer"
            ));
        }
    }
    if !problems.is_empty() {
        return Err(Error::Validation(problems));
    }

    let data = prepare_data(&configs[0])?;
    let mut results = Vec::with_capacity(configs.len());
    for config in configs {
        results.push(execute_with_data(config, &data)?);
    }

    fs::create_dir_all(&configs[0].output_dir)?;
    let merged_path = configs[0].output_dir.join("compare.csv");
    {
        use std::io::Write;
        let mut file = fs::File::create(&merged_path)?;
        writeln!(file, "optimizer,{ROUND_CSV_HEADER}")?;
        for result in &results {
            for report in &result.reports {
                writeln!(file, "{},{}", result.config.optimizer, report.csv_line())?;
            }
        }
    }

    let mut rows: Vec<SummaryRow> = results.into_iter().map(|r| r.summary).collect();
    rows.sort_by_key(|r| {
        (r.rounds_to_threshold.unwrap_or(usize::MAX), r.optimizer.to_string())
    });
    let summary_path = configs[0].output_dir.join("summary.csv");
    if summary_path.exists() {
        fs::remove_file(&summary_path)?;
    }
    append_summary(&summary_path, &rows)?;
    Ok(SummaryTable { rows })
}
