use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use qfed::experiment::{
    cmd_compare, cmd_train, comparison_configs, ExperimentConfig, DATA_DIR_ENV,
};
use qfed::optim::OptimizerKind;
use qfed::selftest::{run_selftest, CheckStatus, FaultInjection};

/// Federated training of variational quantum circuits, simulated on one
/// machine.
#[derive(Parser)]
#[command(name = "qfed", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment from a JSON config and write its artifacts.
    Train {
        #[arg(long)]
        config: PathBuf,
    },
    /// Run several optimizers under one config and print the summary table.
    Compare {
        #[arg(long)]
        config: PathBuf,
        /// Comma-separated list, e.g. sgd,adagrad,adam,fqngd
        #[arg(long)]
        optimizers: String,
    },
    /// Run the embedded oracle suite and print one status line per property.
    Selftest {
        /// Directory holding the MNIST IDX files; defaults to $QFED_DATA_DIR
        /// or ./data/mnist. Data-dependent checks are skipped when absent.
        #[arg(long)]
        data_dir: Option<PathBuf>,
    },
}

fn run() -> qfed::Result<ExitCode> {
    match Cli::parse().command {
        Command::Train { config } => {
            let config = ExperimentConfig::load(&config)?;
            let artifacts = cmd_train(&config)?;
            println!(
                "trained {} for {} round(s): test_acc={:.4}, curve={}",
                config.optimizer,
                config.rounds,
                artifacts.summary.final_test_acc,
                artifacts.curve_path.display()
            );
            Ok(ExitCode::SUCCESS)
        }
        Command::Compare { config, optimizers } => {
            let base = ExperimentConfig::load(&config)?;
            let kinds: Vec<OptimizerKind> = optimizers
                .split(',')
                .map(|s| s.trim().parse())
                .collect::<qfed::Result<_>>()?;
            let configs = comparison_configs(&base, &kinds);
            let table = cmd_compare(&configs)?;
            print!("{}", table.render());
            Ok(ExitCode::SUCCESS)
        }
        Command::Selftest { data_dir } => {
            let dir = data_dir
                .or_else(|| std::env::var_os(DATA_DIR_ENV).map(PathBuf::from))
                .unwrap_or_else(|| PathBuf::from("data/mnist"));
            let results = run_selftest(&dir, &FaultInjection::default());
            let mut failed = Vec::new();
            for r in &results {
                println!("{}", r.line());
                if matches!(r.status, CheckStatus::Fail(_)) {
                    failed.push(r.name);
                }
            }
            if failed.is_empty() {
                Ok(ExitCode::SUCCESS)
            } else {
                eprintln!("failed properties: {}", failed.join(", "));
                Ok(ExitCode::FAILURE)
            }
        }
    }
}

fn main() -> ExitCode {
    match run() {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
