//! Alternating optimization of the RIS phases and the power-splitting ratios.
//!
//! Each outer iteration rebuilds the MSE weight from the current `(φ, ρ)`,
//! updates `φ` through the SDP relaxation and then re-solves `ρ` for the
//! new channel. With the monotone guard on, a candidate that lowers the sum
//! capacity (or breaks feasibility) is rejected and the previous pair kept.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::channel::{build_channels, compose, direct_channel, oam_channel, ChannelSet, PropagationParams, ReflectionState};
use crate::error::{Error, Result};
use crate::geometry::{element_layout, SystemGeometry};
use crate::linalg::CMatrix;
use crate::metrics::{evaluate, LinkBudget, LinkMetrics, LogBase, PowerSplit};
use crate::reflect::{optimize_reflection, SdpOptions, WeightState};
use crate::split::SplitProblem;
use crate::transform::TransformPair;

/// Largest splitting ratio fed into the MSE weight, which divides by `1 - ρ`.
const SPLIT_CEILING: f64 = 1.0 - 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizationOptions {
    pub max_iterations: usize,
    /// Relative sum-capacity change below which the loop stops.
    pub tolerance: f64,
    pub randomization_draws: usize,
    pub seed: u64,
    pub monotone_guard: bool,
    pub log_base: LogBase,
    pub sdp: SdpOptions,
}

impl Default for OptimizationOptions {
    fn default() -> Self {
        Self {
            max_iterations: 20,
            tolerance: 1e-3,
            randomization_draws: 10_000,
            seed: 0,
            monotone_guard: true,
            log_base: LogBase::Two,
            sdp: SdpOptions::default(),
        }
    }
}

impl OptimizationOptions {
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_iterations == 0 {
            return Err(Error::InvalidOptions("max_iterations must be at least 1".into()));
        }
        if !(self.tolerance > 0.0) {
            return Err(Error::InvalidOptions("tolerance must be positive".into()));
        }
        if self.randomization_draws == 0 {
            return Err(Error::InvalidOptions("randomization_draws must be at least 1".into()));
        }
        if self.sdp.max_sweeps == 0 || !(self.sdp.tolerance > 0.0) || !(self.sdp.gap_tolerance > 0.0) {
            return Err(Error::InvalidOptions("SDP sweeps and tolerances must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    Converged,
    MaxIterations,
    Infeasible,
}

impl Termination {
    pub fn as_str(self) -> &'static str {
        match self {
            Termination::Converged => "converged",
            Termination::MaxIterations => "max_iterations",
            Termination::Infeasible => "infeasible",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    /// Sum capacity of the pair kept after this iteration.
    pub capacity: f64,
    /// Harvested power in watts.
    pub harvested: f64,
    /// Quadratic surrogate `φᴴRφ + Re(vᵀφ) + c` at the kept phases.
    pub quadratic_objective: Option<f64>,
    pub sdp_objective: Option<f64>,
    pub feasible: bool,
    /// Whether this iteration's phase candidate was kept.
    pub accepted: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizationReport {
    pub iterations: Vec<IterationRecord>,
    #[serde(with = "complex_pairs")]
    pub reflection: ReflectionState,
    pub split: PowerSplit,
    pub metrics: LinkMetrics,
    pub termination: Termination,
    pub min_harvest: f64,
}

impl OptimizationReport {
    pub fn capacity(&self) -> f64 {
        self.metrics.capacity
    }

    pub fn harvested(&self) -> f64 {
        self.metrics.harvested
    }

    pub fn capacity_trace(&self) -> Vec<f64> {
        self.iterations.iter().map(|r| r.capacity).collect()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report is always serializable")
    }
}

/// Reflection coefficients as `[re, im]` pairs.
mod complex_pairs {
    use num_complex::Complex64;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    use crate::channel::ReflectionState;
    use crate::linalg::CVector;

    pub fn serialize<S: Serializer>(state: &ReflectionState, s: S) -> Result<S::Ok, S::Error> {
        let pairs: Vec<[f64; 2]> = state.as_vector().iter().map(|v| [v.re, v.im]).collect();
        pairs.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<ReflectionState, D::Error> {
        let pairs = Vec::<[f64; 2]>::deserialize(d)?;
        let v = CVector::from_iterator(pairs.len(), pairs.iter().map(|p| Complex64::new(p[0], p[1])));
        ReflectionState::new(v).map_err(serde::de::Error::custom)
    }
}

/// Seed for run or iteration `index` derived from `base`: the first word of
/// ChaCha8 stream `index` keyed by `base`.
pub fn derive_seed(base: u64, index: u64) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(base);
    rng.set_stream(index);
    rng.next_u64()
}

/// Builds the channels from the geometry and runs [`optimize_channels`] with
/// the OAM transforms.
pub fn optimize(
    geometry: &SystemGeometry,
    params: &PropagationParams,
    budget: &LinkBudget,
    options: &OptimizationOptions,
) -> Result<OptimizationReport> {
    let layout = element_layout(geometry)?;
    let channels = build_channels(&layout, params)?;
    let transforms = TransformPair::oam(geometry.tx_elements, geometry.rx_elements);
    optimize_channels(&channels, &transforms, budget, options)
}

fn channel_for(channels: &ChannelSet, phi: Option<&ReflectionState>) -> Result<CMatrix> {
    match phi {
        Some(phi) => compose(channels, phi),
        None => Ok(direct_channel(channels)),
    }
}

struct Kept {
    phi: Option<ReflectionState>,
    split: PowerSplit,
    metrics: LinkMetrics,
    quadratic: Option<f64>,
}

pub fn optimize_channels(
    channels: &ChannelSet,
    transforms: &TransformPair,
    budget: &LinkBudget,
    options: &OptimizationOptions,
) -> Result<OptimizationReport> {
    options.validate()?;
    budget.validate()?;
    let (n_t, n_r) = (channels.tx_len(), channels.rx_len());
    if n_t != n_r || transforms.tx_len() != n_t || transforms.rx_len() != n_r {
        return Err(Error::ShapeMismatch { tx: n_t, rx: n_r });
    }
    let n_i = channels.ris_len();
    let base = options.log_base;
    let metrics_of = |phi: Option<&ReflectionState>, split: &PowerSplit| -> Result<LinkMetrics> {
        let h = oam_channel(&channel_for(channels, phi)?, transforms);
        evaluate(&h, split, budget, base)
    };

    // Without a direct path there is nothing to weight the first MSE with,
    // so start from the all-ones reflection instead.
    let start_without_direct = n_i > 0 && direct_channel(channels).iter().all(|v| v.norm() == 0.0);
    let mut phi: Option<ReflectionState> = start_without_direct.then(|| ReflectionState::ones(n_i));
    let mut split = PowerSplit::zeros(n_t);
    let mut kept: Option<Kept> = None;
    let mut records = Vec::new();
    let mut termination = Termination::MaxIterations;

    for t in 1..=options.max_iterations {
        let iter_seed = derive_seed(options.seed, t as u64);
        let mut candidate_accepted = n_i == 0;
        let mut quadratic = None;
        let mut sdp_objective = None;

        if n_i > 0 {
            let h_oam = oam_channel(&channel_for(channels, phi.as_ref())?, transforms);
            let capped = PowerSplit::new(split.as_slice().iter().map(|r| r.min(SPLIT_CEILING)).collect())?;
            let weight = WeightState::new(&h_oam, &capped, budget)?;
            let sdp = SdpOptions {
                seed: iter_seed,
                ..options.sdp
            };
            let step = optimize_reflection(channels, transforms, &weight.weight, &sdp, options.randomization_draws, iter_seed)?;
            sdp_objective = Some(step.sdp.objective);
            candidate_accepted = match (&phi, options.monotone_guard) {
                (Some(current), true) => {
                    metrics_of(Some(&step.state), &split)?.capacity >= metrics_of(Some(current), &split)?.capacity
                }
                _ => true,
            };
            if candidate_accepted {
                phi = Some(step.state);
            }
            quadratic = phi.as_ref().map(|p| step.form.evaluate(p.as_vector()));
        }

        let h_oam = oam_channel(&channel_for(channels, phi.as_ref())?, transforms);
        let problem = SplitProblem::from_channel(&h_oam, budget)?;
        let feasible = problem.feasibility().feasible;
        let next = if feasible {
            let new_split = problem.solve()?;
            let metrics = evaluate(&h_oam, &new_split, budget, base)?;
            Some((new_split, metrics))
        } else {
            None
        };

        let regressed = match (&kept, &next) {
            (Some(prev), Some((_, m))) => m.capacity < prev.metrics.capacity,
            (Some(_), None) => true,
            (None, _) => false,
        };
        if options.monotone_guard && regressed {
            let prev = kept.as_ref().expect("regression implies a kept pair");
            phi = prev.phi.clone();
            split = prev.split.clone();
            records.push(IterationRecord {
                iteration: t,
                capacity: prev.metrics.capacity,
                harvested: prev.metrics.harvested,
                quadratic_objective: prev.quadratic,
                sdp_objective,
                feasible: true,
                accepted: false,
            });
        } else {
            match next {
                Some((new_split, metrics)) => {
                    split = new_split;
                    records.push(IterationRecord {
                        iteration: t,
                        capacity: metrics.capacity,
                        harvested: metrics.harvested,
                        quadratic_objective: quadratic,
                        sdp_objective,
                        feasible: true,
                        accepted: candidate_accepted,
                    });
                    kept = Some(Kept {
                        phi: phi.clone(),
                        split: split.clone(),
                        metrics,
                        quadratic,
                    });
                }
                None => {
                    let metrics = metrics_of(phi.as_ref(), &split)?;
                    records.push(IterationRecord {
                        iteration: t,
                        capacity: metrics.capacity,
                        harvested: metrics.harvested,
                        quadratic_objective: quadratic,
                        sdp_objective,
                        feasible: false,
                        accepted: candidate_accepted,
                    });
                    termination = Termination::Infeasible;
                    break;
                }
            }
        }

        if n_i == 0 {
            termination = Termination::Converged;
            break;
        }
        if let [.., before, last] = records.as_slice() {
            if (last.capacity - before.capacity).abs() < options.tolerance * before.capacity.abs() {
                termination = Termination::Converged;
                break;
            }
        }
    }

    let metrics = match (&kept, termination) {
        (Some(k), t) if t != Termination::Infeasible => k.metrics.clone(),
        _ => metrics_of(phi.as_ref(), &split)?,
    };
    Ok(OptimizationReport {
        iterations: records,
        reflection: phi.unwrap_or_else(|| ReflectionState::ones(n_i)),
        split,
        metrics,
        termination,
        min_harvest: budget.min_harvest,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::dbm_to_watts;

    fn fast() -> OptimizationOptions {
        OptimizationOptions {
            randomization_draws: 500,
            ..OptimizationOptions::default()
        }
    }

    #[test]
    fn no_ris_single_iteration() {
        let geom = SystemGeometry::default().without_ris();
        let budget = LinkBudget::default().with_min_harvest(0.0);
        let report = optimize(&geom, &PropagationParams::default(), &budget, &fast()).unwrap();
        assert_eq!(report.iterations.len(), 1);
        assert_eq!(report.termination, Termination::Converged);
        assert!(report.split.as_slice().iter().all(|&r| r == 0.0));

        let ch = build_channels(&element_layout(&geom).unwrap(), &PropagationParams::default()).unwrap();
        let h = oam_channel(&direct_channel(&ch), &TransformPair::oam(8, 8));
        let direct = evaluate(&h, &PowerSplit::zeros(8), &budget, LogBase::Two).unwrap();
        assert_eq!(report.capacity(), direct.capacity);
        assert!(report.reflection.is_empty());
    }

    #[test]
    fn small_ris_run_is_monotone_and_feasible() {
        let geom = SystemGeometry::default().with_ris(2, 2);
        let budget = LinkBudget::default();
        let report = optimize(&geom, &PropagationParams::default(), &budget, &fast()).unwrap();
        assert_ne!(report.termination, Termination::Infeasible);
        let trace = report.capacity_trace();
        assert!(trace.windows(2).all(|w| w[1] >= w[0]), "{trace:?}");
        assert!(report.harvested() >= budget.min_harvest - 1e-9);
        assert_eq!(report.reflection.len(), 4);
        for v in report.reflection.as_vector().iter() {
            assert!((v.norm() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn unreachable_harvest_is_infeasible() {
        let geom = SystemGeometry::default().with_ris(2, 2);
        let budget = LinkBudget::default().with_min_harvest(dbm_to_watts(40.0));
        let report = optimize(&geom, &PropagationParams::default(), &budget, &fast()).unwrap();
        assert_eq!(report.termination, Termination::Infeasible);
        assert!(!report.iterations.last().unwrap().feasible);
    }

    #[test]
    fn reruns_are_identical() {
        let geom = SystemGeometry::default().with_ris(2, 2);
        let run = || optimize(&geom, &PropagationParams::default(), &LinkBudget::default(), &fast()).unwrap();
        assert_eq!(run().to_json(), run().to_json());
    }

    #[test]
    fn json_round_trip() {
        let geom = SystemGeometry::default().with_ris(2, 2);
        let report = optimize(&geom, &PropagationParams::default(), &LinkBudget::default(), &fast()).unwrap();
        let json = report.to_json();
        let value: serde_json::Value = serde_json::from_str(&json).unwrap();
        assert_eq!(value["reflection"].as_array().unwrap().len(), 4);
        assert_eq!(value["reflection"][0].as_array().unwrap().len(), 2);
        let back: OptimizationReport = serde_json::from_str(&json).unwrap();
        assert_eq!(back, report);
    }

    #[test]
    fn zero_direct_path_starts_from_ones() {
        let params = PropagationParams::default().with_attenuation(0.0);
        let geom = SystemGeometry::default().with_ris(2, 2);
        let budget = LinkBudget::default().with_min_harvest(0.0);
        let report = optimize(&geom, &params, &budget, &fast()).unwrap();
        assert!(report.capacity() > 0.0);
    }

    #[test]
    fn invalid_options_rejected() {
        let geom = SystemGeometry::default();
        let bad = OptimizationOptions {
            max_iterations: 0,
            ..fast()
        };
        assert!(matches!(
            optimize(&geom, &PropagationParams::default(), &LinkBudget::default(), &bad),
            Err(Error::InvalidOptions(_))
        ));
    }

    #[test]
    fn derived_seeds_differ() {
        assert_ne!(derive_seed(1, 0), derive_seed(1, 1));
        assert_ne!(derive_seed(1, 0), derive_seed(2, 0));
        assert_eq!(derive_seed(5, 3), derive_seed(5, 3));
    }
}
