//! The convergence, power and distance experiments, and their CSV tables.
//!
//! Every run in an experiment gets the seed `derive_seed(base, index)` where
//! `index` is its position in the (sweep point, scheme) job list. Jobs run on
//! the current rayon pool and are gathered in job order, so the output does
//! not depend on the pool size.

mod config;

use std::io::Write;

use rayon::prelude::*;
use serde::Serialize;

pub use config::{
    default_distance_axis, BaselineConfig, BudgetConfig, ConvergenceConfig, ExperimentConfig, OutputConfig,
    PowerSweepConfig, SweepAxis, SweepVariable,
};

use crate::alternating::{derive_seed, optimize, OptimizationReport, Termination};
use crate::baselines::{evaluate_baseline, BaselineKind};
use crate::channel::PropagationParams;
use crate::error::{Error, Result};
use crate::geometry::SystemGeometry;
use crate::metrics::{watts_to_dbm, LinkBudget};

pub const RESULT_HEADER: [&str; 7] = [
    "sweep_value",
    "scheme",
    "capacity_bps_hz",
    "harvested_dbm",
    "iterations",
    "termination",
    "seed",
];

pub const TRACE_HEADER: [&str; 6] = [
    "sweep_value",
    "scheme",
    "iteration",
    "capacity_bps_hz",
    "harvested_dbm",
    "accepted",
];

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResultRow {
    pub sweep_value: f64,
    pub scheme: String,
    pub capacity_bps_hz: f64,
    pub harvested_dbm: f64,
    pub iterations: usize,
    pub termination: Termination,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceRow {
    pub sweep_value: f64,
    pub scheme: String,
    pub iteration: usize,
    pub capacity_bps_hz: f64,
    pub harvested_dbm: f64,
    pub accepted: bool,
}

fn write_rows<W: Write, R: Serialize>(header: &[&str], rows: &[R], out: W) -> csv::Result<()> {
    let mut writer = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    writer.write_record(header)?;
    for row in rows {
        writer.serialize(row)?;
    }
    writer.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ResultTable {
    pub rows: Vec<ResultRow>,
}

impl ResultTable {
    pub fn write_csv<W: Write>(&self, out: W) -> csv::Result<()> {
        write_rows(&RESULT_HEADER, &self.rows, out)
    }

    pub fn to_csv(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("CSV is UTF-8")
    }

    pub fn any_infeasible(&self) -> bool {
        self.rows.iter().any(|r| r.termination == Termination::Infeasible)
    }

    pub fn scheme(&self, name: &str) -> Vec<&ResultRow> {
        self.rows.iter().filter(|r| r.scheme == name).collect()
    }

    pub fn get(&self, sweep_value: f64, scheme: &str) -> Option<&ResultRow> {
        self.rows
            .iter()
            .find(|r| r.scheme == scheme && r.sweep_value == sweep_value)
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TraceTable {
    pub rows: Vec<TraceRow>,
}

impl TraceTable {
    pub fn write_csv<W: Write>(&self, out: W) -> csv::Result<()> {
        write_rows(&TRACE_HEADER, &self.rows, out)
    }

    pub fn to_csv(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("CSV is UTF-8")
    }
}

/// One finished run together with its table row.
#[derive(Debug, Clone, PartialEq)]
pub struct RunOutcome {
    pub row: ResultRow,
    pub report: OptimizationReport,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentOutput {
    pub table: ResultTable,
    pub trace: TraceTable,
    pub runs: Vec<RunOutcome>,
}

impl ExperimentOutput {
    fn from_runs(runs: Vec<RunOutcome>) -> Self {
        let table = ResultTable {
            rows: runs.iter().map(|r| r.row.clone()).collect(),
        };
        let trace = TraceTable {
            rows: runs
                .iter()
                .flat_map(|run| {
                    run.report.iterations.iter().map(|it| TraceRow {
                        sweep_value: run.row.sweep_value,
                        scheme: run.row.scheme.clone(),
                        iteration: it.iteration,
                        capacity_bps_hz: it.capacity,
                        harvested_dbm: watts_to_dbm(it.harvested),
                        accepted: it.accepted,
                    })
                })
                .collect(),
        };
        Self { table, trace, runs }
    }
}

#[derive(Debug, Clone)]
enum Scheme {
    Optimized,
    Baseline(BaselineKind),
}

#[derive(Debug, Clone)]
struct Job {
    sweep_value: f64,
    label: String,
    scheme: Scheme,
    geometry: SystemGeometry,
    params: PropagationParams,
    budget: LinkBudget,
}

fn ris_label(prefix: &str, [rows, cols]: [usize; 2]) -> String {
    format!("{prefix}-{rows}x{cols}")
}

fn run_jobs(jobs: Vec<Job>, config: &ExperimentConfig) -> Result<ExperimentOutput> {
    let base_seed = config.optimization.seed;
    let runs = jobs
        .into_par_iter()
        .enumerate()
        .map(|(index, job)| {
            let seed = derive_seed(base_seed, index as u64);
            let options = config.optimization.with_seed(seed);
            let report = match job.scheme {
                Scheme::Optimized => optimize(&job.geometry, &job.params, &job.budget, &options)?,
                Scheme::Baseline(kind) => evaluate_baseline(kind, &job.geometry, &job.params, &job.budget, &options)?,
            };
            let row = ResultRow {
                sweep_value: job.sweep_value,
                scheme: job.label,
                capacity_bps_hz: report.capacity(),
                harvested_dbm: watts_to_dbm(report.harvested()),
                iterations: report.iterations.len(),
                termination: report.termination,
                seed,
            };
            Ok(RunOutcome { row, report })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ExperimentOutput::from_runs(runs))
}

/// Every (LOS attenuation, RIS size) combination; the sweep value column
/// holds the attenuation `K`.
pub fn run_convergence(config: &ExperimentConfig) -> Result<ExperimentOutput> {
    config.validate()?;
    let mut jobs = Vec::new();
    for &k in &config.convergence.attenuations {
        for &size in &config.convergence.ris_sizes {
            jobs.push(Job {
                sweep_value: k,
                label: ris_label("ris", size),
                scheme: Scheme::Optimized,
                geometry: config.geometry.clone().with_ris(size[0], size[1]),
                params: config.propagation.with_attenuation(k),
                budget: config.budget(),
            });
        }
    }
    run_jobs(jobs, config)
}

/// Optimized RIS of each configured size, the enabled baselines and the MIMO
/// comparison at every transmit power.
pub fn run_power_sweep(config: &ExperimentConfig) -> Result<ExperimentOutput> {
    config.validate()?;
    let sweep = &config.power_sweep;
    let mut jobs = Vec::new();
    for power in sweep.axis().points() {
        let budget = BudgetConfig {
            transmit_power_dbm: power,
            ..config.budget
        }
        .to_budget();
        let job = |label: String, scheme: Scheme, geometry: SystemGeometry| Job {
            sweep_value: power,
            label,
            scheme,
            geometry,
            params: config.propagation,
            budget,
        };
        for &size in &sweep.ris_sizes {
            let geometry = config.geometry.clone().with_ris(size[0], size[1]);
            jobs.push(job(ris_label("ris", size), Scheme::Optimized, geometry.clone()));
            if config.baselines.mimo {
                jobs.push(job(
                    ris_label("mimo", size),
                    Scheme::Baseline(BaselineKind::MimoSwipt),
                    geometry.clone(),
                ));
            }
            if config.baselines.random_phase {
                jobs.push(job(
                    ris_label("random-ris", size),
                    Scheme::Baseline(BaselineKind::RandomPhaseRis),
                    geometry,
                ));
            }
        }
        if config.baselines.los_oam {
            jobs.push(job(
                BaselineKind::LosOamNoRis.label().into(),
                Scheme::Baseline(BaselineKind::LosOamNoRis),
                config.geometry.clone(),
            ));
        }
        if config.baselines.nlos_oam {
            let kind = BaselineKind::NlosOamNoRis {
                attenuation: config.baselines.nlos_attenuation,
            };
            jobs.push(job(kind.label().into(), Scheme::Baseline(kind), config.geometry.clone()));
        }
    }
    run_jobs(jobs, config)
}

/// Moves the RIS centre along its direction from the origin so that its
/// distance to the transmit UCA takes every value of the sweep axis.
pub fn run_distance_sweep(config: &ExperimentConfig) -> Result<ExperimentOutput> {
    config.validate()?;
    let geometry = &config.geometry;
    if geometry.ris_elements() == 0 {
        return Err(Error::Config("distance sweep needs a RIS in [geometry]".into()));
    }
    let label = ris_label("ris", [geometry.ris_rows, geometry.ris_cols]);
    let jobs = config
        .distance_sweep
        .points()
        .into_iter()
        .map(|distance| Job {
            sweep_value: distance,
            label: label.clone(),
            scheme: Scheme::Optimized,
            geometry: ris_at_distance(geometry, distance),
            params: config.propagation,
            budget: config.budget(),
        })
        .collect();
    run_jobs(jobs, config)
}

/// `geometry` with the RIS centre rescaled to norm `distance`.
pub fn ris_at_distance(geometry: &SystemGeometry, distance: f64) -> SystemGeometry {
    let c = geometry.ris_center;
    let norm = c.iter().map(|v| v * v).sum::<f64>().sqrt();
    let mut moved = geometry.clone();
    moved.ris_center = c.map(|v| v * distance / norm);
    moved
}

/// Signs of the first differences of the `window`-point moving average,
/// with runs of equal sign collapsed. Differences within `1e-12` of the
/// curve's scale are ignored.
pub fn trend_signs(values: &[f64], window: usize) -> Vec<i8> {
    let window = window.max(1);
    if values.len() < window + 1 {
        return Vec::new();
    }
    let smooth: Vec<f64> = values
        .windows(window)
        .map(|w| w.iter().sum::<f64>() / window as f64)
        .collect();
    let scale = smooth.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let mut signs: Vec<i8> = Vec::new();
    for pair in smooth.windows(2) {
        let d = pair[1] - pair[0];
        if d.abs() <= 1e-12 * scale {
            continue;
        }
        let s = if d > 0.0 { 1 } else { -1 };
        if signs.last() != Some(&s) {
            signs.push(s);
        }
    }
    signs
}
