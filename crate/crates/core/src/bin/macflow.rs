use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use macflow::identities::{run_selftest, IDENTITY_TOLERANCE};
use macflow::{run_experiment, Error, RunConfig};

#[derive(Parser)]
#[command(
    name = "macflow",
    version,
    about = "Implicit MAC scheme for compressible isentropic flow on the torus"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the configured experiment and write tables, logs and dumps.
    Run {
        config: PathBuf,
        /// Override the output directory of the config.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Validate a config without running it.
    Check { config: PathBuf },
    /// Evaluate the exact discrete operator identities on random fields.
    OperatorsSelftest {
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn load(path: &Path) -> Result<RunConfig, Error> {
    match RunConfig::load(path) {
        Err(Error::Io(e)) => Err(Error::Config(format!("cannot read {}: {e}", path.display()))),
        other => other,
    }
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Run { config, out } => {
            let mut cfg = load(&config)?;
            if let Some(out) = out {
                cfg.output_dir = out;
            }
            let summary = run_experiment(&cfg)?;
            for w in &summary.warnings {
                eprintln!("warning: {w}");
            }
            if let Some(r) = &summary.reference {
                println!(
                    "reference n={} dt={:.4e} steps={} newton={} min_rho={:.6}",
                    r.n, r.dt, r.steps, r.total_newton_iterations, r.min_density
                );
            }
            for r in &summary.resolutions {
                println!(
                    "n={} dt={:.4e} steps={} newton(max/total)={}/{} mass_drift={:.2e} min_rho={:.6} min_slack={:.3e}",
                    r.n,
                    r.dt,
                    r.steps,
                    r.max_newton_iterations,
                    r.total_newton_iterations,
                    r.max_mass_drift,
                    r.min_density,
                    r.min_energy_slack
                );
            }
            if let Some(t) = &summary.table {
                print!("{t}");
            }
            println!("output: {}", cfg.output_dir.display());
            Ok(())
        }
        Command::Check { config } => {
            let cfg = load(&config)?;
            let warnings = cfg.validate()?;
            for w in &warnings {
                eprintln!("warning: {w}");
            }
            for &n in &cfg.n {
                println!("n={n}: {} steps of dt={:.6e}", cfg.time_steps(n), cfg.dt(n));
            }
            println!("config ok (hash {})", cfg.hash());
            Ok(())
        }
        Command::OperatorsSelftest { seed } => {
            let checks = run_selftest(seed)?;
            println!("{:<40} {:>2} {:>3} {:>12}  result", "identity", "d", "n", "rel. error");
            for c in &checks {
                println!(
                    "{:<40} {:>2} {:>3} {:>12.3e}  {}",
                    c.name,
                    c.dim,
                    c.n,
                    c.relative_error,
                    if c.passed { "PASS" } else { "FAIL" }
                );
            }
            let failed = checks.iter().filter(|c| !c.passed).count();
            if failed > 0 {
                return Err(Error::Invariant(format!(
                    "{failed} identities exceed tolerance {IDENTITY_TOLERANCE:e}"
                )));
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if let Error::StepFailure(f) = &e {
                if let Ok(json) = serde_json::to_string(f) {
                    eprintln!("{json}");
                }
            }
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
