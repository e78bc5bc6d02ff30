use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use kle_core::cli::{self, RunConfig, StudyKind, EXIT_CHECK_FAILED, EXIT_OK};
use kle_core::KleError;

#[derive(Parser, Debug)]
#[command(
    name = "kle",
    version,
    about = "Truncated Karhunen-Loeve expansions of random fields"
)]
struct Args {
    /// JSON run configuration; defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Output directory (overrides `output` in the config).
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Sampling seed (overrides `sampling.seed` in the config).
    #[arg(long, global = true)]
    seed: Option<u64>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Eigenvalues, normalized eigenvalues and cumulative variance ratios.
    Spectrum,
    /// Seeded realizations on the quadrature nodes.
    Sample,
    /// One realization at several truncation levels.
    Truncation {
        /// Ascending ranks, e.g. `5,15,30,100`.
        #[arg(long, value_delimiter = ',')]
        ranks: Option<Vec<usize>>,
    },
    /// Run the diagnostic suite; exit status 1 if any check fails.
    Verify,
    /// Parameter studies: `grid-refinement` or `correlation`.
    Study { name: String },
}

fn run(args: Args) -> Result<i32, KleError> {
    let mut config = match &args.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = args.seed {
        config.sampling.seed = seed;
    }
    let out = args
        .out
        .clone()
        .or_else(|| config.output.clone())
        .unwrap_or_else(|| PathBuf::from("."));

    let outcome = match args.command {
        Command::Spectrum => cli::cmd_spectrum(&config, &out)?,
        Command::Sample => cli::cmd_sample(&config, &out)?,
        Command::Truncation { ranks } => {
            let ranks = ranks.unwrap_or_else(|| config.truncation.ranks.clone());
            cli::cmd_truncation(&config, &ranks, &out)?
        }
        Command::Verify => {
            let (outcome, report) = cli::cmd_verify(&config, &out)?;
            for check in &report.checks {
                let status = if check.passed { "pass" } else { "FAIL" };
                println!(
                    "{status:4}  {:24} value {:e}  tolerance {:e}  {}",
                    check.name, check.value, check.tolerance, check.detail
                );
            }
            outcome
        }
        Command::Study { name } => {
            let kind: StudyKind = name.parse()?;
            cli::cmd_study(&config, kind, &out)?.0
        }
    };
    for file in &outcome.files {
        eprintln!("wrote {}", file.display());
    }
    Ok(if outcome.passed {
        EXIT_OK
    } else {
        EXIT_CHECK_FAILED
    })
}

fn main() -> ExitCode {
    let args = Args::parse();
    if let Err(e) = kle_core::configure_threads_from_env() {
        eprintln!("error: {e}");
        return ExitCode::from(cli::EXIT_USAGE as u8);
    }
    match run(args) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(cli::exit_code(&e) as u8)
        }
    }
}
