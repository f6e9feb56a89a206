//! `qvco`: extraction, design, simulation, sweeps and reports for
//! TSV-transformer quadrature VCOs.

// `!(x > 0.0)` is used on purpose so NaN inputs are rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

mod design;
mod error;
mod extract;
mod io;
mod report;
mod simulate;
mod sweep;
mod units;

use error::CliResult;

#[derive(Parser)]
#[command(name = "qvco", version, about = "TSV-transformer QVCO design toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Extract a lumped transformer model from a geometry file.
    Extract {
        #[arg(long)]
        geometry: PathBuf,
        /// Evaluation frequency for the AC resistances (Hz). Default 2.5 GHz.
        #[arg(long)]
        freq: Option<f64>,
        /// Also write extract.json, extract.txt and transformer.json here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Derive the tank, minimum transconductance and tuning range.
    Design {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        transformer: PathBuf,
        /// Also write design.json here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run one transient simulation.
    Simulate {
        /// lc-vco, tf-vco, cr-vco, tc-qvco or linear-qvco.
        #[arg(long)]
        topology: String,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Sweep one parameter over a range of simulations.
    Sweep {
        /// v_c, array_code or gm_margin.
        #[arg(long)]
        param: String,
        #[arg(long, allow_negative_numbers = true)]
        from: f64,
        #[arg(long, allow_negative_numbers = true)]
        to: f64,
        #[arg(long)]
        steps: usize,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Array codes to repeat a v_c sweep over, e.g. 00,01,11.
        #[arg(long, value_delimiter = ',')]
        codes: Vec<String>,
        /// Worker threads. Rows are written in parameter order regardless.
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
    /// Merge the outputs found in a results directory.
    Report {
        #[arg(long)]
        dir: PathBuf,
    },
}

fn run(cli: Cli) -> CliResult<serde_json::Value> {
    match cli.command {
        Command::Extract { geometry, freq, out } => extract::run(&geometry, freq, out.as_deref()),
        Command::Design { spec, transformer, out } => design::run(&spec, &transformer, out.as_deref()),
        Command::Simulate { topology, config, out } => simulate::run(&topology, config.as_deref(), &out),
        Command::Sweep { param, from, to, steps, config, out, codes, jobs } => sweep::run(
            &sweep::SweepArgs { param, from, to, steps, codes, jobs },
            config.as_deref(),
            &out,
        ),
        Command::Report { dir } => report::run(&dir),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(report) => {
            print!("{}", units::to_pretty(&report));
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("qvco: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
