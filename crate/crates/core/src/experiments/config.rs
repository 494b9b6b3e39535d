//! TOML experiment configuration with `--set path=value` overrides.

use serde::{Deserialize, Serialize};
use toml::{Table, Value};

use crate::alternating::OptimizationOptions;
use crate::baselines::DEFAULT_NLOS_ATTENUATION;
use crate::channel::PropagationParams;
use crate::error::{Error, Result};
use crate::geometry::SystemGeometry;
use crate::metrics::LinkBudget;

/// Link budget as written in a config file, powers in dBm.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BudgetConfig {
    pub transmit_power_dbm: f64,
    pub min_harvest_dbm: f64,
    pub efficiency: f64,
    pub antenna_noise_dbm: f64,
    pub conversion_noise_dbm: f64,
}

impl Default for BudgetConfig {
    fn default() -> Self {
        Self {
            transmit_power_dbm: 30.0,
            min_harvest_dbm: -15.0,
            efficiency: 0.8,
            antenna_noise_dbm: -20.0,
            conversion_noise_dbm: -33.0,
        }
    }
}

impl BudgetConfig {
    pub fn to_budget(&self) -> LinkBudget {
        LinkBudget::from_dbm(
            self.transmit_power_dbm,
            self.min_harvest_dbm,
            self.efficiency,
            self.antenna_noise_dbm,
            self.conversion_noise_dbm,
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepVariable {
    TransmitPowerDbm,
    /// Distance from the transmit UCA centre to the RIS centre, in meters.
    RisDistance,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepAxis {
    pub variable: SweepVariable,
    pub start: f64,
    pub stop: f64,
    pub step: f64,
}

impl SweepAxis {
    pub fn validate(&self, name: &str) -> Result<()> {
        if !(self.start.is_finite() && self.stop.is_finite()) {
            return Err(Error::Config(format!("{name}: sweep bounds must be finite")));
        }
        if self.start > self.stop {
            return Err(Error::Config(format!(
                "{name}: start {} is above stop {}",
                self.start, self.stop
            )));
        }
        if !(self.step > 0.0) {
            return Err(Error::Config(format!("{name}: step must be positive, got {}", self.step)));
        }
        Ok(())
    }

    /// `start, start + step, ...` up to `stop`, computed from the index so
    /// rounding does not accumulate.
    pub fn points(&self) -> Vec<f64> {
        let count = ((self.stop - self.start) / self.step + 1e-9).floor() as usize + 1;
        (0..count).map(|i| self.start + i as f64 * self.step).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConvergenceConfig {
    pub attenuations: Vec<f64>,
    /// `[rows, cols]` of every RIS size to run.
    pub ris_sizes: Vec<[usize; 2]>,
}

impl Default for ConvergenceConfig {
    fn default() -> Self {
        Self {
            attenuations: vec![1.0, 0.5],
            ris_sizes: vec![[4, 4], [8, 8]],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PowerSweepConfig {
    pub variable: SweepVariable,
    pub start: f64,
    pub stop: f64,
    pub step: f64,
    pub ris_sizes: Vec<[usize; 2]>,
}

impl Default for PowerSweepConfig {
    fn default() -> Self {
        Self {
            variable: SweepVariable::TransmitPowerDbm,
            start: 10.0,
            stop: 40.0,
            step: 5.0,
            ris_sizes: vec![[4, 4], [8, 8]],
        }
    }
}

impl PowerSweepConfig {
    pub fn axis(&self) -> SweepAxis {
        SweepAxis {
            variable: self.variable,
            start: self.start,
            stop: self.stop,
            step: self.step,
        }
    }
}

pub fn default_distance_axis() -> SweepAxis {
    SweepAxis {
        variable: SweepVariable::RisDistance,
        start: 0.4,
        stop: 2.0,
        step: 0.05,
    }
}

impl Default for SweepAxis {
    fn default() -> Self {
        default_distance_axis()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BaselineConfig {
    pub los_oam: bool,
    pub nlos_oam: bool,
    pub nlos_attenuation: f64,
    pub mimo: bool,
    pub random_phase: bool,
}

impl Default for BaselineConfig {
    fn default() -> Self {
        Self {
            los_oam: true,
            nlos_oam: true,
            nlos_attenuation: DEFAULT_NLOS_ATTENUATION,
            mimo: true,
            random_phase: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: String,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            dir: "results".into(),
        }
    }
}

/// Everything an experiment run needs. `optimization.seed` is the base seed
/// every run seed is derived from.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub geometry: SystemGeometry,
    pub propagation: PropagationParams,
    pub budget: BudgetConfig,
    pub optimization: OptimizationOptions,
    pub baselines: BaselineConfig,
    pub convergence: ConvergenceConfig,
    pub power_sweep: PowerSweepConfig,
    /// Runs the RIS size given in `geometry`.
    pub distance_sweep: SweepAxis,
    pub output: OutputConfig,
}

impl ExperimentConfig {
    /// Parses a config document, applies `path=value` overrides and validates.
    pub fn parse(text: &str, overrides: &[String]) -> Result<Self> {
        let to_config = |e: toml::de::Error| Error::Config(e.to_string());
        // the document alone first, so its errors point at a line
        let mut config: Self = toml::from_str(text).map_err(to_config)?;
        if !overrides.is_empty() {
            let mut table: Table = text.parse().map_err(to_config)?;
            for item in overrides {
                apply_override(&mut table, item)?;
            }
            config = Value::Table(table).try_into().map_err(to_config)?;
        }
        config.validate()?;
        Ok(config)
    }

    pub fn from_file(path: &std::path::Path, overrides: &[String]) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::parse(&text, overrides).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config is always serializable")
    }

    pub fn budget(&self) -> LinkBudget {
        self.budget.to_budget()
    }

    pub fn validate(&self) -> Result<()> {
        self.geometry.validate()?;
        self.propagation.validate()?;
        self.budget().validate()?;
        self.optimization.validate()?;
        self.power_sweep.axis().validate("power_sweep")?;
        self.distance_sweep.validate("distance_sweep")?;
        if self.power_sweep.variable != SweepVariable::TransmitPowerDbm {
            return Err(Error::Config("power_sweep.variable must be transmit_power_dbm".into()));
        }
        if self.distance_sweep.variable != SweepVariable::RisDistance {
            return Err(Error::Config("distance_sweep.variable must be ris_distance".into()));
        }
        if !(self.distance_sweep.start > 0.0) {
            return Err(Error::Config("distance_sweep.start must be positive".into()));
        }
        if self.geometry.ris_center.iter().all(|&c| c == 0.0) {
            return Err(Error::Config("geometry.ris_center must be non-zero to define a sweep direction".into()));
        }
        if self.convergence.attenuations.iter().any(|k| !(0.0..=1.0).contains(k)) {
            return Err(Error::Config("convergence.attenuations must lie in [0, 1]".into()));
        }
        if !(0.0..1.0).contains(&self.baselines.nlos_attenuation) {
            return Err(Error::Config("baselines.nlos_attenuation must lie in [0, 1)".into()));
        }
        Ok(())
    }
}

/// Sets `a.b.c = value` in `table`. The value is read as a TOML literal and
/// falls back to a plain string, so `--set output.dir=out` works unquoted.
fn apply_override(table: &mut Table, item: &str) -> Result<()> {
    let (path, raw) = item
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override `{item}` is not of the form key=value")))?;
    let keys: Vec<&str> = path.trim().split('.').collect();
    if keys.iter().any(|k| k.is_empty()) {
        return Err(Error::Config(format!("override `{item}` has an empty key")));
    }
    let raw = raw.trim();
    let value = format!("v = {raw}")
        .parse::<Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| Value::String(raw.to_string()));

    let (last, parents) = keys.split_last().expect("keys is non-empty");
    let mut node = table;
    for key in parents {
        let entry = node
            .entry(key.to_string())
            .or_insert_with(|| Value::Table(Table::new()));
        node = match entry {
            Value::Table(t) => t,
            _ => return Err(Error::Config(format!("override `{item}`: `{key}` is not a section"))),
        };
    }
    node.insert(last.to_string(), value);
    Ok(())
}
