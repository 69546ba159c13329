use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use beable_lab::current_lab::UnitarySource;
use beable_lab::harness::config::InitialSpec;
use beable_lab::harness::{run_experiment, ExperimentConfig, ExperimentKind};
use beable_lab::Error;

const EXIT_IO: u8 = 1;
const EXIT_INPUT: u8 = 2;
const EXIT_NUMERIC: u8 = 3;
const EXIT_CHECK: u8 = 4;

#[derive(Parser)]
#[command(
    name = "beable-lab",
    version,
    about = "Quantum-guided jump processes on finite configuration spaces"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Exit with status 4 if any acceptance threshold is breached.
    #[arg(long)]
    check: bool,
    /// Master seed; overrides the config seed.
    #[arg(long, env = "BEABLE_LAB_SEED")]
    seed: Option<u64>,
    /// Output directory for summary.json and tables.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a TOML config file.
    Run {
        config: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Count admissibility failures of a candidate current over random systems.
    Scan {
        #[arg(long, default_value_t = 3)]
        dim: usize,
        #[arg(long, default_value_t = 1000)]
        samples: usize,
        /// `base:part[:scale]` with base guess1|guess2 and part real|imag.
        #[arg(long, default_value = "guess1:real:2")]
        candidate: String,
        /// Use the identity instead of Haar unitaries.
        #[arg(long)]
        identity: bool,
        #[command(flatten)]
        common: Common,
    },
    /// Run the pairwise process along a circuit file.
    Circuit {
        circuit: PathBuf,
        #[arg(long, default_value_t = 10_000)]
        runs: usize,
        /// Start from a seeded uniform random state instead of |0...0>.
        #[arg(long)]
        random_state: bool,
        #[command(flatten)]
        common: Common,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (config, common) = match build_config(cli.command) {
        Ok(c) => c,
        Err(e) => return fail(&e),
    };
    let out = common
        .out
        .clone()
        .or_else(|| config.output.clone())
        .unwrap_or_else(|| PathBuf::from("beable-out"));
    match execute(&config, &out) {
        Ok(passed) if common.check && !passed => ExitCode::from(EXIT_CHECK),
        Ok(_) => ExitCode::SUCCESS,
        Err(e) => fail(&e),
    }
}

fn build_config(command: Command) -> Result<(ExperimentConfig, Common), Error> {
    let (mut config, common) = match command {
        Command::Run { config, common } => (ExperimentConfig::load(&config)?, common),
        Command::Scan {
            dim,
            samples,
            candidate,
            identity,
            common,
        } => {
            let mut c = ExperimentConfig::new(ExperimentKind::ViolationScan);
            c.system.dim = Some(dim);
            c.n_runs = Some(samples);
            c.scan.candidate = Some(candidate);
            c.scan.source = Some(if identity {
                UnitarySource::Identity
            } else {
                UnitarySource::Haar
            });
            c.seed = Some(0);
            (c, common)
        }
        Command::Circuit {
            circuit,
            runs,
            random_state,
            common,
        } => {
            let mut c = ExperimentConfig::new(ExperimentKind::Circuit);
            c.system.circuit = Some(circuit);
            c.n_runs = Some(runs);
            if random_state {
                c.system.initial = Some(InitialSpec {
                    random: true,
                    ..InitialSpec::default()
                });
            }
            c.seed = Some(0);
            (c, common)
        }
    };
    if let Some(seed) = common.seed {
        config.seed = Some(seed);
    }
    Ok((config, common))
}

fn execute(config: &ExperimentConfig, out: &Path) -> Result<bool, Error> {
    let report = run_experiment(config)?;
    report.write_to(out)?;
    for c in &report.checks {
        println!(
            "{} {} = {:.6e} ({})",
            if c.passed { "PASS" } else { "FAIL" },
            c.name,
            c.value,
            c.bound
        );
    }
    println!("wrote {}", out.join("summary.json").display());
    Ok(report.passed())
}

fn fail(e: &Error) -> ExitCode {
    eprintln!("error: {e}");
    ExitCode::from(match e {
        Error::Io(_) => EXIT_IO,
        Error::Numerical(_) => EXIT_NUMERIC,
        _ => EXIT_INPUT,
    })
}
