use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use fedskip::experiment::{compare, parse_config, run, ExperimentConfig, RunOptions};
use fedskip::par::Execution;
use fedskip::Error;

#[derive(Parser)]
#[command(
    name = "fedskip",
    version,
    about = "Federated learning simulator with twin-driven client skipping"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the configured strategy and write rounds.csv, curves.csv, summary.json.
    Run(RunArgs),
    /// Run FedAvg and FedSkipTwin on identical seeds and print a comparison table.
    Compare(RunArgs),
    /// Parse and validate a config file, then print the resolved config.
    ValidateConfig {
        #[arg(long)]
        config: PathBuf,
    },
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    /// Overrides the config seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the config output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads for client training and evaluation. Results do not depend on it.
    #[arg(long)]
    threads: Option<usize>,
    /// Disable data parallelism entirely.
    #[arg(long)]
    sequential: bool,
    #[arg(long, short)]
    quiet: bool,
}

impl RunArgs {
    fn load(&self) -> Result<ExperimentConfig, Error> {
        let mut cfg = parse_config(&self.config)?;
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        if let Some(out) = &self.out {
            cfg.output_dir = out.clone();
        }
        if self.threads == Some(0) {
            return Err(Error::Validation {
                field: "--threads".into(),
                reason: "must be >= 1".into(),
            });
        }
        Ok(cfg)
    }

    fn options(&self) -> RunOptions {
        RunOptions {
            threads: self.threads,
            execution: if self.sequential {
                Execution::Sequential
            } else {
                Execution::default()
            },
            verbose: !self.quiet,
        }
    }
}

fn fail(code: u8, err: Error) -> ExitCode {
    eprintln!("error: {err}");
    ExitCode::from(code)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::ValidateConfig { config } => match parse_config(&config) {
            Ok(cfg) => {
                println!("{}", serde_json::to_string_pretty(&cfg).expect("config serializes"));
                ExitCode::SUCCESS
            }
            Err(e) => fail(1, e),
        },
        Command::Run(args) => {
            let cfg = match args.load() {
                Ok(c) => c,
                Err(e) => return fail(1, e),
            };
            match run(&cfg, args.options()) {
                Ok(a) => {
                    let s = &a.summary;
                    println!(
                        "{}: final accuracy {:.4}, {:.2} MB, mean skip rate {:.4}; outputs in {}",
                        s.strategy,
                        s.final_accuracy,
                        s.total_mb,
                        s.mean_skip_rate,
                        a.output_dir.display()
                    );
                    ExitCode::SUCCESS
                }
                Err(e) => fail(2, e),
            }
        }
        Command::Compare(args) => {
            let cfg = match args.load() {
                Ok(c) => c,
                Err(e) => return fail(1, e),
            };
            match compare(&cfg, args.options()) {
                Ok(c) => {
                    print!("{}", c.table());
                    println!("accuracy delta: {:+.2} pp", c.accuracy_delta_pp);
                    println!("fedavg      config {}", c.fedavg.config_hash);
                    println!("fedskiptwin config {}", c.fedskiptwin.config_hash);
                    println!(
                        "pairing hash {} ({})",
                        c.fedavg.pairing_hash,
                        if c.paired { "match" } else { "MISMATCH" }
                    );
                    ExitCode::SUCCESS
                }
                Err(e) => fail(2, e),
            }
        }
    }
}
