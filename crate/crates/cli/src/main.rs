use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use oamswipt::experiments::{run_convergence, run_distance_sweep, run_power_sweep, ExperimentConfig, ExperimentOutput};
use oamswipt::{build_channels, element_layout, optimize, Error, Termination};
use serde_json::json;

const EXIT_FAILURE: u8 = 1;
const EXIT_CONFIG: u8 = 2;
const EXIT_INFEASIBLE: u8 = 3;

/// Joint RIS phase and power-splitting optimization for OAM-SWIPT links.
#[derive(Debug, Parser)]
#[command(name = "oamswipt", version)]
struct Cli {
    /// TOML configuration file; defaults apply to anything left out.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Base seed, replacing `optimization.seed`.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Output directory, replacing `output.dir`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Override a config entry, e.g. `--set budget.transmit_power_dbm=20`.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    overrides: Vec<String>,

    /// Worker threads; 0 uses every available core.
    #[arg(long, global = true, default_value_t = 0)]
    jobs: usize,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Capacity trace for every (K, RIS size) combination.
    Convergence,
    /// Capacity and harvested power against transmit power.
    PowerSweep,
    /// Capacity against the transmitter to RIS distance.
    DistanceSweep,
    /// A single optimization run, written as a JSON report.
    Optimize,
    /// The incident, reflected and direct channel matrices as CSV.
    DumpChannel,
}

#[derive(Debug)]
enum Failure {
    Config(String),
    Run(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Config(_)
            | Error::InvalidGeometry(_)
            | Error::DegenerateOrientation { .. }
            | Error::InvalidParams(_)
            | Error::InvalidBudget(_)
            | Error::InvalidOptions(_) => Failure::Config(e.to_string()),
            other => Failure::Run(other.to_string()),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Run(e.to_string())
    }
}

impl From<csv::Error> for Failure {
    fn from(e: csv::Error) -> Self {
        Failure::Run(e.to_string())
    }
}

fn load_config(cli: &Cli) -> Result<ExperimentConfig, Failure> {
    let mut overrides = cli.overrides.clone();
    if let Some(seed) = cli.seed {
        overrides.push(format!("optimization.seed={seed}"));
    }
    if let Some(out) = &cli.out {
        overrides.push(format!("output.dir={}", toml_string(&out.to_string_lossy())));
    }
    let config = match &cli.config {
        Some(path) => ExperimentConfig::from_file(path, &overrides)?,
        None => ExperimentConfig::parse("", &overrides)?,
    };
    Ok(config)
}

fn toml_string(s: &str) -> String {
    serde_json::to_string(s).expect("string serializes")
}

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>, Failure> {
    let path = dir.join(name);
    let file = File::create(&path).map_err(|e| Failure::Run(format!("{}: {e}", path.display())))?;
    eprintln!("writing {}", path.display());
    Ok(BufWriter::new(file))
}

fn write_experiment(dir: &Path, name: &str, output: &ExperimentOutput) -> Result<bool, Failure> {
    output.table.write_csv(create(dir, &format!("{name}.csv"))?)?;
    output.trace.write_csv(create(dir, &format!("{name}_trace.csv"))?)?;
    let reports: Vec<_> = output
        .runs
        .iter()
        .map(|run| {
            json!({
                "sweep_value": run.row.sweep_value,
                "scheme": run.row.scheme,
                "seed": run.row.seed,
                "report": run.report,
            })
        })
        .collect();
    serde_json::to_writer_pretty(create(dir, &format!("{name}_reports.json"))?, &reports)
        .map_err(|e| Failure::Run(e.to_string()))?;
    for row in &output.table.rows {
        eprintln!(
            "{:>8} {:<12} C = {:.6} bit/s/Hz  Q = {:.3} dBm  {} ({} iterations)",
            row.sweep_value,
            row.scheme,
            row.capacity_bps_hz,
            row.harvested_dbm,
            row.termination.as_str(),
            row.iterations
        );
    }
    Ok(output.table.any_infeasible())
}

/// Returns whether any run ended infeasible.
fn execute(cli: &Cli, config: &ExperimentConfig) -> Result<bool, Failure> {
    let dir = PathBuf::from(&config.output.dir);
    fs::create_dir_all(&dir).map_err(|e| Failure::Run(format!("{}: {e}", dir.display())))?;
    match cli.command {
        Command::Convergence => write_experiment(&dir, "convergence", &run_convergence(config)?),
        Command::PowerSweep => write_experiment(&dir, "power_sweep", &run_power_sweep(config)?),
        Command::DistanceSweep => write_experiment(&dir, "distance_sweep", &run_distance_sweep(config)?),
        Command::Optimize => {
            let report = optimize(&config.geometry, &config.propagation, &config.budget(), &config.optimization)?;
            serde_json::to_writer_pretty(create(&dir, "report.json")?, &report)
                .map_err(|e| Failure::Run(e.to_string()))?;
            eprintln!(
                "C = {:.6} bit/s/Hz, Q = {:.3e} W, {} after {} iterations",
                report.capacity(),
                report.harvested(),
                report.termination.as_str(),
                report.iterations.len()
            );
            Ok(report.termination == Termination::Infeasible)
        }
        Command::DumpChannel => {
            let channels = build_channels(&element_layout(&config.geometry)?, &config.propagation)?;
            oamswipt::channel::write_channel_csv(&channels, create(&dir, "channels.csv")?)?;
            Ok(false)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = load_config(&cli).and_then(|config| {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(cli.jobs)
            .build()
            .map_err(|e| Failure::Run(e.to_string()))?;
        pool.install(|| execute(&cli, &config))
    });
    match result {
        Ok(false) => ExitCode::SUCCESS,
        Ok(true) => {
            eprintln!("error: the harvest requirement is unreachable for at least one run");
            ExitCode::from(EXIT_INFEASIBLE)
        }
        Err(Failure::Config(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_CONFIG)
        }
        Err(Failure::Run(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_FAILURE)
        }
    }
}
