use std::io::{self, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use cardio_lm::config::{parse_config_text, RunConfig};
use cardio_lm::pipeline::{self, CliError};
use cardio_lm::SavedModel;

#[derive(Parser)]
#[command(
    name = "cardio-lm",
    version,
    about = "Levenberg-Marquardt MLP training and scoring for clinical records"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Split, normalize, train and write model, history and reports
    Train(Opts),
    /// Score a labelled CSV with a saved model and write a report
    Evaluate(Opts),
    /// Write per-row scores for a CSV
    Predict(Opts),
    /// Score headerless CSV rows from stdin as they arrive
    Monitor(Opts),
}

#[derive(Args, Debug, Default)]
struct Opts {
    /// `key = value` config file; flags take precedence
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    data: Option<String>,
    #[arg(long)]
    model: Option<String>,
    #[arg(long)]
    out_dir: Option<String>,
    /// Output file for `predict`
    #[arg(long)]
    out: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    #[arg(long)]
    threshold: Option<String>,
    /// Comma-separated hidden layer sizes
    #[arg(long)]
    hidden: Option<String>,
    /// identity | diagonal
    #[arg(long)]
    mode: Option<String>,
    #[arg(long)]
    lambda0: Option<String>,
    #[arg(long)]
    max_iters: Option<String>,
    /// Three comma-separated fractions: train,val,test
    #[arg(long)]
    split: Option<String>,
    #[arg(long)]
    no_stratify: bool,
    /// Comma-separated feature column names
    #[arg(long)]
    features: Option<String>,
    #[arg(long)]
    label: Option<String>,
}

impl Opts {
    fn run_config(&self) -> Result<RunConfig, CliError> {
        let mut pairs = match &self.config {
            Some(path) => {
                let text = std::fs::read_to_string(path)
                    .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
                parse_config_text(&text)?
            }
            None => Vec::new(),
        };
        let flags = [
            ("data", &self.data),
            ("model", &self.model),
            ("out-dir", &self.out_dir),
            ("out", &self.out),
            ("seed", &self.seed),
            ("threshold", &self.threshold),
            ("hidden", &self.hidden),
            ("mode", &self.mode),
            ("lambda0", &self.lambda0),
            ("max-iters", &self.max_iters),
            ("split", &self.split),
            ("features", &self.features),
            ("label", &self.label),
        ];
        for (k, v) in flags {
            if let Some(v) = v {
                pairs.push((k.to_string(), v.clone()));
            }
        }
        if self.no_stratify {
            pairs.push(("no-stratify".into(), "true".into()));
        }
        Ok(RunConfig::from_pairs(&pairs)?)
    }
}

fn run(command: Command) -> Result<(), CliError> {
    match command {
        Command::Train(opts) => {
            let cfg = opts.run_config()?;
            let outcome = pipeline::train(&cfg)?;
            let h = &outcome.history;
            println!(
                "termination = {}",
                h.termination
                    .map_or_else(|| "none".to_string(), |t| t.to_string())
            );
            println!("proposals = {}", h.records.len());
            println!("accepted = {}", h.accepted().count());
            println!("sse_initial = {}", h.initial_sse);
            println!("sse_final = {}", h.final_sse());
            for (name, r) in &outcome.reports {
                println!("{name}_accuracy = {}", r.accuracy);
            }
            println!("model = {}", outcome.model_path.display());
            Ok(())
        }
        Command::Evaluate(opts) => {
            let report = pipeline::evaluate(&opts.run_config()?)?;
            print!("{report}");
            Ok(())
        }
        Command::Predict(opts) => {
            let n = pipeline::predict(&opts.run_config()?)?;
            eprintln!("scored {n} rows");
            Ok(())
        }
        Command::Monitor(opts) => {
            let cfg = opts.run_config()?;
            let path = cfg
                .model
                .as_ref()
                .ok_or_else(|| CliError::Io("missing required --model".into()))?;
            let saved = SavedModel::load(path).map_err(|e| CliError::Io(e.to_string()))?;
            let stdin = io::stdin();
            let stdout = io::stdout();
            pipeline::monitor(
                &saved,
                cfg.threshold,
                stdin.lock(),
                stdout.lock(),
                io::stderr(),
            )
            .map_err(|e| CliError::Io(e.to_string()))?;
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let _ = io::stdout().flush();
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
