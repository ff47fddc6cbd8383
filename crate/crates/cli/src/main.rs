//! Command-line front end: `cellfree run` and `cellfree sweep`.

use std::path::PathBuf;
use std::process::ExitCode;

use cellfree::harness::{
    emit_outputs, run_experiment, sweep, ExperimentConfig, SweepAxis, SweepPoint,
};
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(
    name = "cellfree",
    version,
    about = "Uplink cell-free massive MIMO experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one configuration.
    Run(Common),
    /// Run one configuration per value of an axis.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// U, tau, L or kappa.
        #[arg(long)]
        axis: String,
        /// Comma-separated values.
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<f64>,
    },
}

#[derive(Args)]
struct Common {
    /// Flat `key = value` configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Worker threads, 0 for all cores.
    #[arg(long)]
    workers: Option<usize>,
    /// Comma-separated `association:pilot:data` schemes.
    #[arg(long)]
    scheme: Option<String>,
    #[arg(long)]
    batches: Option<usize>,
    /// Extra `key=value` overrides, applied last.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

impl Common {
    fn resolve(&self) -> cellfree::Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(path) => ExperimentConfig::from_file(path)?,
            None => ExperimentConfig::default(),
        };
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(w) = self.workers {
            cfg.workers = w;
        }
        if let Some(s) = &self.scheme {
            cfg.set("schemes", s)?;
        }
        if let Some(b) = self.batches {
            cfg.batches = b;
        }
        for kv in &self.overrides {
            let (k, v) = kv.split_once('=').ok_or_else(|| {
                cellfree::Error::InvalidConfig(format!("override '{kv}' is not key=value"))
            })?;
            cfg.set(k.trim(), v.trim())?;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn execute(cli: Cli) -> cellfree::Result<()> {
    let (common, points, cfg) = match &cli.command {
        Command::Run(common) => {
            let cfg = common.resolve()?;
            let result = run_experiment(&cfg)?;
            (common, vec![SweepPoint::single(result)], cfg)
        }
        Command::Sweep {
            common,
            axis,
            values,
        } => {
            let cfg = common.resolve()?;
            let axis: SweepAxis = axis.parse()?;
            (common, sweep(&cfg, axis, values)?, cfg)
        }
    };
    for point in &points {
        match &point.outcome {
            Ok(r) => {
                for row in &r.rows {
                    let label = point.value.map(|v| format!(" @ {v}")).unwrap_or_default();
                    match &row.summary {
                        Some(s) => println!(
                            "{}{label}: mean SE {:.4} bit/s/Hz, 95%-likely {:.4}, {} samples, {} failed batches",
                            row.scheme,
                            s.mean,
                            s.likely_95(),
                            s.count(),
                            row.failures.len()
                        ),
                        None => println!("{}{label}: no samples, {} failed batches", row.scheme, row.failures.len()),
                    }
                }
            }
            Err(e) => eprintln!("point {:?} failed: {e}", point.value),
        }
    }
    let report = emit_outputs(&cfg, &points, &common.out)?;
    for w in &report.warnings {
        eprintln!("warning: {w}");
    }
    println!(
        "wrote {} files to {}",
        report.files.len(),
        common.out.display()
    );
    Ok(())
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
