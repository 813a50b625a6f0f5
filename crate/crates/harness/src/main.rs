use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use nonzero_harness::verify::verify_file;
use nonzero_harness::{run_experiment, run_matrix, run_oracle, ExperimentConfig, HarnessError, Overrides};

#[derive(Parser)]
#[command(name = "nonzero-bench", version, about = "Run seeded planner experiments on matrix games")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every planner on every seed and write traces plus summaries.
    Run(Common),
    /// Like `run`, plus a cross-planner comparison table.
    Matrix(Common),
    /// Dump local-maximizer sets for each environment seed.
    Oracle(Common),
    /// Check a written trace against the trace invariants.
    Verify {
        #[arg(long)]
        trace: PathBuf,
        /// Also assume the environment is a deterministic bandit.
        #[arg(long)]
        deterministic: bool,
    },
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Comma-separated seeds, replacing every env's seed list.
    #[arg(long, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
    /// Worker threads (0 = all cores).
    #[arg(long)]
    parallel: Option<usize>,
    #[arg(long)]
    budget: Option<usize>,
}

impl Common {
    fn load(&self) -> Result<ExperimentConfig, HarnessError> {
        let mut cfg = ExperimentConfig::load(&self.config)?;
        cfg.apply(&Overrides {
            out: self.out.clone(),
            seeds: self.seeds.clone(),
            parallel: self.parallel,
            budget: self.budget,
        });
        Ok(cfg)
    }
}

fn run(cli: Cli) -> Result<(), HarnessError> {
    match cli.command {
        Command::Run(c) => {
            let out = run_experiment(&c.load()?)?;
            println!("wrote {} traces to {}", out.results.len(), out.exp_dir.display());
        }
        Command::Matrix(c) => {
            let out = run_matrix(&c.load()?)?;
            print!("{}", std::fs::read_to_string(out.exp_dir.join("comparison.txt"))?);
        }
        Command::Oracle(c) => {
            for d in run_oracle(&c.load()?)? {
                println!(
                    "{} seed {}: {} local maximizers, global {} = {}",
                    d.env,
                    d.seed,
                    d.members.len(),
                    d.argmax,
                    d.global_value
                );
            }
        }
        Command::Verify { trace, deterministic } => {
            let violations = verify_file(&trace, deterministic)?;
            for v in &violations {
                println!("line {}: {}", v.line, v.message);
            }
            if !violations.is_empty() {
                return Err(HarnessError::Verify(violations.len()));
            }
            println!("ok");
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
