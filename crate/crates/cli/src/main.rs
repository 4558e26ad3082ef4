use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use otfs_core::harness::{run_scenario, run_selftest, write_outputs, ComplexityConfig, SimConfig};

/// OTFS link-level simulator.
#[derive(Parser)]
#[command(name = "otfs-sim", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a BER sweep and write ber.csv, ber.meta.json and iterations.csv.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print the complexity table for a parameter file.
    Complexity {
        #[arg(long)]
        config: PathBuf,
    },
    /// Compare the fast kernels against dense references.
    Selftest,
}

fn run(config: PathBuf, out: PathBuf) -> Result<()> {
    let (cfg, base) = SimConfig::load(&config).with_context(|| format!("loading {}", config.display()))?;
    let scenario = cfg.resolve(&base).context("invalid configuration")?;
    eprintln!(
        "M={} N={} cp={} f_Dmax={:.1} Hz, auto B={}, {} method(s), {} SNR point(s)",
        scenario.geometry.m,
        scenario.geometry.n,
        scenario.geometry.m_cp,
        scenario.f_dmax_hz,
        scenario.auto_bandwidth,
        scenario.methods.len(),
        cfg.sweep.snr_db.len()
    );
    let result = run_scenario(&cfg, &scenario).context("simulation failed")?;
    for r in &result.records {
        println!(
            "{:<16} {:>6.2} dB  ber {:.3e}  ({} / {} bits, {} frames)",
            r.method, r.snr_db, r.ber, r.bit_errors, r.bits, r.frames
        );
    }
    for path in write_outputs(&out, &result, &cfg, &scenario)? {
        eprintln!("wrote {}", path.display());
    }
    Ok(())
}

fn complexity(config: PathBuf) -> Result<()> {
    let text = fs::read_to_string(&config).with_context(|| format!("reading {}", config.display()))?;
    print!("{}", ComplexityConfig::from_toml(&text)?.table()?);
    Ok(())
}

fn selftest() -> Result<()> {
    let checks = run_selftest()?;
    let mut failed = 0;
    for c in &checks {
        let status = if c.passed() { "PASS" } else { "FAIL" };
        println!("{status} {:<48} error {:.3e} (tol {:.0e})", c.name, c.error, c.tolerance);
        failed += usize::from(!c.passed());
    }
    if failed > 0 {
        bail!("{failed} of {} checks failed", checks.len());
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Run { config, out } => run(config, out),
        Command::Complexity { config } => complexity(config),
        Command::Selftest => selftest(),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
