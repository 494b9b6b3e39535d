//! Reference schemes compared against the optimized RIS link.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::alternating::{
    derive_seed, optimize_channels, IterationRecord, OptimizationOptions, OptimizationReport, Termination,
};
use crate::channel::{build_channels, compose, oam_channel, PropagationParams, ReflectionState};
use crate::error::{Error, Result};
use crate::geometry::{element_layout, SystemGeometry};
use crate::metrics::{evaluate, LinkBudget, PowerSplit};
use crate::split::SplitProblem;
use crate::transform::TransformPair;

pub const DEFAULT_NLOS_ATTENUATION: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BaselineKind {
    /// OAM over the direct path only, `K = 1`.
    LosOamNoRis,
    /// OAM over an attenuated direct path only.
    NlosOamNoRis { attenuation: f64 },
    /// Uniformly random RIS phases with optimized splitting.
    RandomPhaseRis,
    /// The full pipeline with identity transforms in place of the DFT pair.
    MimoSwipt,
}

impl BaselineKind {
    pub fn nlos() -> Self {
        BaselineKind::NlosOamNoRis {
            attenuation: DEFAULT_NLOS_ATTENUATION,
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            BaselineKind::LosOamNoRis => "los-oam",
            BaselineKind::NlosOamNoRis { .. } => "nlos-oam",
            BaselineKind::RandomPhaseRis => "random-ris",
            BaselineKind::MimoSwipt => "mimo",
        }
    }
}

pub fn evaluate_baseline(
    kind: BaselineKind,
    geometry: &SystemGeometry,
    params: &PropagationParams,
    budget: &LinkBudget,
    options: &OptimizationOptions,
) -> Result<OptimizationReport> {
    let oam = TransformPair::oam(geometry.tx_elements, geometry.rx_elements);
    match kind {
        BaselineKind::LosOamNoRis => {
            let params = params.with_attenuation(1.0);
            let channels = build_channels(&element_layout(&geometry.clone().without_ris())?, &params)?;
            optimize_channels(&channels, &oam, budget, options)
        }
        BaselineKind::NlosOamNoRis { attenuation } => {
            if !(0.0..1.0).contains(&attenuation) {
                return Err(Error::InvalidParams(format!(
                    "NLOS attenuation must lie in [0, 1), got {attenuation}"
                )));
            }
            let params = params.with_attenuation(attenuation);
            let channels = build_channels(&element_layout(&geometry.clone().without_ris())?, &params)?;
            optimize_channels(&channels, &oam, budget, options)
        }
        BaselineKind::RandomPhaseRis => random_phase(geometry, params, budget, options, &oam),
        BaselineKind::MimoSwipt => {
            let channels = build_channels(&element_layout(geometry)?, params)?;
            let identity = TransformPair::identity(geometry.tx_elements, geometry.rx_elements);
            optimize_channels(&channels, &identity, budget, options)
        }
    }
}

fn random_phase(
    geometry: &SystemGeometry,
    params: &PropagationParams,
    budget: &LinkBudget,
    options: &OptimizationOptions,
    transforms: &TransformPair,
) -> Result<OptimizationReport> {
    options.validate()?;
    budget.validate()?;
    let channels = build_channels(&element_layout(geometry)?, params)?;
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(options.seed, 0));
    let phases: Vec<f64> = (0..channels.ris_len())
        .map(|_| rng.random_range(-std::f64::consts::PI..std::f64::consts::PI))
        .collect();
    let reflection = ReflectionState::from_phases(&phases);
    let h_oam = oam_channel(&compose(&channels, &reflection)?, transforms);
    let problem = SplitProblem::from_channel(&h_oam, budget)?;
    let feasible = problem.feasibility().feasible;
    let split = if feasible {
        problem.solve()?
    } else {
        PowerSplit::zeros(h_oam.ncols())
    };
    let metrics = evaluate(&h_oam, &split, budget, options.log_base)?;
    Ok(OptimizationReport {
        iterations: vec![IterationRecord {
            iteration: 1,
            capacity: metrics.capacity,
            harvested: metrics.harvested,
            quadratic_objective: None,
            sdp_objective: None,
            feasible,
            accepted: true,
        }],
        reflection,
        split,
        metrics,
        termination: if feasible {
            Termination::Converged
        } else {
            Termination::Infeasible
        },
        min_harvest: budget.min_harvest,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::alternating::optimize;

    fn fast() -> OptimizationOptions {
        OptimizationOptions {
            randomization_draws: 500,
            ..OptimizationOptions::default()
        }
    }

    #[test]
    fn los_baseline_matches_no_ris_optimize() {
        let geom = SystemGeometry::default();
        let (params, budget) = (PropagationParams::default(), LinkBudget::default());
        let base = evaluate_baseline(BaselineKind::LosOamNoRis, &geom, &params, &budget, &fast()).unwrap();
        let direct = optimize(&geom.clone().without_ris(), &params, &budget, &fast()).unwrap();
        assert_eq!(base.capacity(), direct.capacity());
        assert_eq!(base.harvested(), direct.harvested());
    }

    #[test]
    fn nlos_never_beats_los() {
        let geom = SystemGeometry::default();
        let params = PropagationParams::default();
        for dbm in [-25.0, -20.0, -15.0] {
            let budget = LinkBudget::default().with_min_harvest(crate::metrics::dbm_to_watts(dbm));
            let los = evaluate_baseline(BaselineKind::LosOamNoRis, &geom, &params, &budget, &fast()).unwrap();
            let nlos = evaluate_baseline(BaselineKind::nlos(), &geom, &params, &budget, &fast()).unwrap();
            assert!(nlos.capacity() <= los.capacity());
        }
    }

    #[test]
    fn random_phase_is_seeded() {
        let geom = SystemGeometry::default();
        let (params, budget) = (PropagationParams::default(), LinkBudget::default());
        let a = evaluate_baseline(BaselineKind::RandomPhaseRis, &geom, &params, &budget, &fast().with_seed(3)).unwrap();
        let b = evaluate_baseline(BaselineKind::RandomPhaseRis, &geom, &params, &budget, &fast().with_seed(3)).unwrap();
        let c = evaluate_baseline(BaselineKind::RandomPhaseRis, &geom, &params, &budget, &fast().with_seed(4)).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.reflection, c.reflection);
        assert_eq!(a.reflection.len(), 16);
    }

    #[test]
    fn nlos_attenuation_must_be_below_one() {
        let err = evaluate_baseline(
            BaselineKind::NlosOamNoRis { attenuation: 1.0 },
            &SystemGeometry::default(),
            &PropagationParams::default(),
            &LinkBudget::default(),
            &fast(),
        );
        assert!(matches!(err, Err(Error::InvalidParams(_))));
    }
}
