//! Closed-form SINR, sum rate and harvested power.

use std::ops::Index;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::CMatrix;
use crate::transform::{NoiseModel, PowerAllocation};

pub fn dbm_to_watts(dbm: f64) -> f64 {
    10f64.powf((dbm - 30.0) / 10.0)
}

pub fn watts_to_dbm(watts: f64) -> f64 {
    10.0 * watts.log10() + 30.0
}

/// Fraction of each mode's received power routed to energy harvesting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct PowerSplit(Vec<f64>);

impl PowerSplit {
    pub fn new(rho: Vec<f64>) -> Result<Self> {
        for (index, &value) in rho.iter().enumerate() {
            if !(0.0..=1.0).contains(&value) {
                return Err(Error::InvalidSplit { index, value });
            }
        }
        Ok(Self(rho))
    }

    pub fn zeros(n: usize) -> Self {
        Self(vec![0.0; n])
    }

    pub fn uniform(n: usize, value: f64) -> Result<Self> {
        Self::new(vec![value; n])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

impl Index<usize> for PowerSplit {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

impl TryFrom<Vec<f64>> for PowerSplit {
    type Error = Error;
    fn try_from(v: Vec<f64>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<PowerSplit> for Vec<f64> {
    fn from(s: PowerSplit) -> Self {
        s.0
    }
}

/// Transmit budget, harvest requirement and receiver noise, all in watts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinkBudget {
    /// Total transmit power `P̄_t`, split evenly over the modes.
    pub max_power: f64,
    /// Minimum harvested power `Q̄`.
    pub min_harvest: f64,
    /// Harvester conversion efficiency `η`.
    pub efficiency: f64,
    pub noise: NoiseModel,
}

impl Default for LinkBudget {
    /// 30 dBm transmit power, -20 dBm antenna noise, -33 dBm conversion
    /// noise, η = 0.8 and a -15 dBm harvest requirement.
    fn default() -> Self {
        Self::from_dbm(30.0, -15.0, 0.8, -20.0, -33.0)
    }
}

impl LinkBudget {
    pub fn from_dbm(
        max_power_dbm: f64,
        min_harvest_dbm: f64,
        efficiency: f64,
        antenna_noise_dbm: f64,
        conversion_noise_dbm: f64,
    ) -> Self {
        Self {
            max_power: dbm_to_watts(max_power_dbm),
            min_harvest: dbm_to_watts(min_harvest_dbm),
            efficiency,
            noise: NoiseModel {
                antenna: dbm_to_watts(antenna_noise_dbm),
                conversion: dbm_to_watts(conversion_noise_dbm),
            },
        }
    }

    pub fn with_min_harvest(mut self, watts: f64) -> Self {
        self.min_harvest = watts;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.max_power.is_finite() && self.max_power > 0.0) {
            return Err(Error::InvalidBudget(format!(
                "transmit power must be positive, got {}",
                self.max_power
            )));
        }
        if !(self.min_harvest >= 0.0) {
            return Err(Error::InvalidBudget(format!(
                "harvest requirement must be non-negative, got {}",
                self.min_harvest
            )));
        }
        if !(0.0..=1.0).contains(&self.efficiency) {
            return Err(Error::InvalidBudget(format!(
                "efficiency must lie in [0, 1], got {}",
                self.efficiency
            )));
        }
        self.noise.validate()
    }

    pub fn uniform_allocation(&self, modes: usize) -> PowerAllocation {
        PowerAllocation::uniform(self.max_power, modes)
    }
}

/// Logarithm used for rates.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LogBase {
    /// bit/s/Hz
    #[default]
    Two,
    /// nat/s/Hz
    E,
}

impl LogBase {
    pub fn rate(self, sinr: f64) -> f64 {
        match self {
            LogBase::Two => sinr.ln_1p() / std::f64::consts::LN_2,
            LogBase::E => sinr.ln_1p(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinkMetrics {
    pub sinr: Vec<f64>,
    pub capacity: f64,
    /// Harvested power in watts.
    pub harvested: f64,
}

fn check_modes(h_oam: &CMatrix, split: &PowerSplit, alloc: &PowerAllocation) -> Result<usize> {
    let n_t = h_oam.ncols();
    if h_oam.nrows() < n_t {
        return Err(Error::DimensionMismatch {
            what: "OAM channel rows",
            expected: n_t,
            found: h_oam.nrows(),
        });
    }
    for (what, len) in [("power split", split.len()), ("power allocation", alloc.len())] {
        if len != n_t {
            return Err(Error::DimensionMismatch {
                what,
                expected: n_t,
                found: len,
            });
        }
    }
    PowerSplit::new(split.0.clone())?;
    Ok(n_t)
}

/// Per-mode SINR
/// `(1-ρ)|H_ll|²P_l / ((1-ρ)(σ_n² + Σ_{l'≠l}|H_ll'|²P_l') + σ_cov²)`.
///
/// A zero denominator (ρ_l = 1 with no conversion noise) yields 0.
pub fn mode_sinr(
    h_oam: &CMatrix,
    split: &PowerSplit,
    alloc: &PowerAllocation,
    noise: &NoiseModel,
) -> Result<Vec<f64>> {
    let n_t = check_modes(h_oam, split, alloc)?;
    let p = alloc.per_mode();
    Ok((0..n_t)
        .map(|l| {
            let keep = 1.0 - split[l];
            let signal = keep * h_oam[(l, l)].norm_sqr() * p[l];
            let interference: f64 = (0..n_t)
                .filter(|&k| k != l)
                .map(|k| h_oam[(l, k)].norm_sqr() * p[k])
                .sum();
            let denom = keep * (noise.antenna + interference) + noise.conversion;
            if denom > 0.0 {
                signal / denom
            } else {
                0.0
            }
        })
        .collect())
}

pub fn sum_capacity(sinr: &[f64], base: LogBase) -> f64 {
    sinr.iter().map(|&g| base.rate(g)).sum()
}

/// `η Σ_l ρ_l (σ_n² + Σ_l' |H_ll'|² P_l')`.
pub fn harvested_power(
    h_oam: &CMatrix,
    split: &PowerSplit,
    alloc: &PowerAllocation,
    budget: &LinkBudget,
) -> Result<f64> {
    let n_t = check_modes(h_oam, split, alloc)?;
    let p = alloc.per_mode();
    let total: f64 = (0..n_t)
        .map(|l| {
            let received: f64 = (0..n_t).map(|k| h_oam[(l, k)].norm_sqr() * p[k]).sum();
            split[l] * (budget.noise.antenna + received)
        })
        .sum();
    Ok(budget.efficiency * total)
}

/// SINR, capacity and harvested power under even power allocation.
pub fn evaluate(
    h_oam: &CMatrix,
    split: &PowerSplit,
    budget: &LinkBudget,
    base: LogBase,
) -> Result<LinkMetrics> {
    let alloc = budget.uniform_allocation(h_oam.ncols());
    let sinr = mode_sinr(h_oam, split, &alloc, &budget.noise)?;
    Ok(LinkMetrics {
        capacity: sum_capacity(&sinr, base),
        harvested: harvested_power(h_oam, split, &alloc, budget)?,
        sinr,
    })
}
