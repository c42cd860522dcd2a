// SPDX-License-Identifier: Apache-2.0

//! Command-line front end for flux sweeps, tables and plot data.
//!
//! Exit codes: 0 success, 1 invalid configuration or arguments, 2 I/O
//! failure, 3 some fits did not converge.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use mzm_readout::harness::{self, NoiseLevel, SweepConfig};
use mzm_readout::{Error, ParityMode, TopologyKind};

#[derive(Parser)]
#[command(
    name = "mzm-readout",
    version,
    about = "Flux-swept quantum capacitance readout of Majorana parity"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the full grid and write signals, spectra, fits and the table.
    Sweep(GridArgs),
    /// Run one grid point (the first value of each list).
    Single(GridArgs),
    /// Rebuild the table from the fit files in the output directory.
    Table(TableArgs),
    /// Write figure data and SVG plots for each grid point.
    Plot(GridArgs),
}

#[derive(Args)]
struct GridArgs {
    /// TOML sweep configuration; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Dot detunings in ueV, comma separated.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    e0: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    topology: Option<Vec<TopologyKind>>,
    /// +1, -1, total or delta, comma separated.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    parity: Option<Vec<ParityMode>>,
    #[arg(long)]
    samples: Option<usize>,
    #[arg(long)]
    span: Option<f64>,
    /// Flux-domain noise standard deviation, or `auto`.
    #[arg(long)]
    noise: Option<NoiseLevel>,
    #[arg(long)]
    workers: Option<usize>,
}

#[derive(Args)]
struct TableArgs {
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

impl GridArgs {
    fn resolve(&self) -> Result<SweepConfig, Error> {
        let mut cfg = match &self.config {
            Some(path) => SweepConfig::load(path)?,
            None => SweepConfig::default(),
        };
        if let Some(v) = self.seed {
            cfg.rng_seed = v;
        }
        if let Some(v) = &self.out {
            cfg.output_dir = v.clone();
        }
        if let Some(v) = &self.e0 {
            cfg.detunings = v.clone();
        }
        if let Some(v) = &self.topology {
            cfg.topologies = v.clone();
        }
        if let Some(v) = &self.parity {
            cfg.parities = v.clone();
        }
        if let Some(v) = self.samples {
            cfg.n_samples = v;
        }
        if let Some(v) = self.span {
            cfg.flux_span = v;
        }
        if let Some(v) = self.noise {
            cfg.noise_sigma = v;
        }
        if let Some(v) = self.workers {
            cfg.workers = v;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn exit_code(err: &Error) -> u8 {
    match err {
        Error::Io { .. } => 2,
        _ => 1,
    }
}

fn print_rows(rows: &[harness::ResultRow]) {
    println!("{}", harness::TABLE_COLUMNS.join("\t"));
    for r in rows {
        println!(
            "{}\t{}\t{}\t{:.6e}\t{:.6}\t{:.6}\t{:.3e}\t{:.3}\t{:.4}\t{}",
            r.e0, r.topology, r.parity, r.a, r.gamma, r.f0, r.baseline, r.snr, r.tau, r.converged
        );
    }
}

fn run(cli: Cli) -> Result<u8, Error> {
    match cli.command {
        Command::Sweep(args) => {
            let cfg = args.resolve()?;
            let report = harness::run_sweep(&cfg)?;
            print_rows(&report.rows);
            Ok(if report.nonconverged() > 0 { 3 } else { 0 })
        }
        Command::Single(args) => {
            let mut cfg = args.resolve()?;
            cfg.detunings.truncate(1);
            cfg.topologies.truncate(1);
            cfg.parities.truncate(1);
            let report = harness::run_sweep(&cfg)?;
            print_rows(&report.rows);
            Ok(if report.nonconverged() > 0 { 3 } else { 0 })
        }
        Command::Table(args) => {
            let rows = harness::reaggregate(&args.out)?;
            print_rows(&rows);
            Ok(if rows.iter().any(|r| !r.converged) {
                3
            } else {
                0
            })
        }
        Command::Plot(args) => {
            let cfg = args.resolve()?;
            for path in harness::emit_plots(&cfg)? {
                println!("{}", path.display());
            }
            Ok(0)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            let _ = err.print();
            return ExitCode::from(if err.use_stderr() { 1 } else { 0 });
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(exit_code(&err))
        }
    }
}
