use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use dfsim::cli::{has_errors, run, ExperimentConfig};

#[derive(Parser)]
#[command(name = "dfsim", version, about = "Decoherence-free-subsystem control and dephasing experiments")]
struct Args {
    #[command(subcommand)]
    command: Command,
    /// Override the config's master seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory (overrides `output` in the config).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads; results do not depend on this.
    #[arg(long, global = true)]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment and write its CSV and summary.
    Run { config: PathBuf },
    /// Check a config and list violations without running it.
    Validate { config: PathBuf },
}

fn load(path: &Path, seed: Option<u64>) -> Result<ExperimentConfig, ExitCode> {
    match ExperimentConfig::load(path) {
        Ok(mut cfg) => {
            if seed.is_some() {
                cfg.seed = seed;
            }
            Ok(cfg)
        }
        Err(e) => {
            eprintln!("error: {}: {e}", path.display());
            Err(ExitCode::from(1))
        }
    }
}

fn main() -> ExitCode {
    let args = Args::parse();
    if let Some(n) = args.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: --threads: {e}");
            return ExitCode::from(1);
        }
    }
    match args.command {
        Command::Validate { config } => {
            let cfg = match load(&config, args.seed) {
                Ok(c) => c,
                Err(code) => return code,
            };
            let violations = cfg.validate();
            for v in &violations {
                println!("{v}");
            }
            if has_errors(&violations) {
                return ExitCode::from(1);
            }
            println!("ok");
            ExitCode::SUCCESS
        }
        Command::Run { config } => {
            let cfg = match load(&config, args.seed) {
                Ok(c) => c,
                Err(code) => return code,
            };
            let violations = cfg.validate();
            for v in &violations {
                eprintln!("{v}");
            }
            if has_errors(&violations) {
                return ExitCode::from(1);
            }
            let out = args.out.or_else(|| cfg.output.clone()).unwrap_or_else(|| PathBuf::from("."));
            match run(&cfg, &out) {
                Ok(s) => {
                    println!("{}: {} rows -> {}", s.mode.name(), s.rows, s.csv.display());
                    for (k, v) in &s.metrics {
                        println!("  {k} = {v}");
                    }
                    ExitCode::SUCCESS
                }
                Err(e) => {
                    eprintln!("error: {e}");
                    ExitCode::from(2)
                }
            }
        }
    }
}
