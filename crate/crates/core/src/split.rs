//! Power-splitting optimization for a fixed channel.
//!
//! With even power allocation the per-mode rate is
//! `log(1 + A(1-ρ) / (B(1-ρ) + C))`, with `A` the desired power, `B` the
//! antenna noise plus inter-mode interference and `C` the conversion noise.
//! The problem is separable apart from the single harvest constraint
//! `Σ a_l ρ_l ≥ Q̄`, so it is solved by bisection on that constraint's
//! multiplier; each mode's response is the positive root of a quadratic.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::CMatrix;
use crate::metrics::{LinkBudget, LogBase, PowerSplit};

/// Per-mode coefficients of the power-splitting subproblem.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitProblem {
    /// `(P̄/N_t) |H_ll|²`
    pub desired: Vec<f64>,
    /// `σ_n² + (P̄/N_t) Σ_{l'≠l} |H_ll'|²`
    pub interference: Vec<f64>,
    /// `σ_cov²`
    pub conversion_noise: f64,
    /// `a_l = η (σ_n² + (P̄/N_t) Σ_l' |H_ll'|²)`
    pub harvest: Vec<f64>,
    /// `Q̄`
    pub min_harvest: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Feasibility {
    pub feasible: bool,
    /// Harvest with every mode fully routed to the harvester.
    pub max_harvest: f64,
}

impl SplitProblem {
    pub fn from_channel(h_oam: &CMatrix, budget: &LinkBudget) -> Result<Self> {
        budget.validate()?;
        let n_t = h_oam.ncols();
        if h_oam.nrows() < n_t {
            return Err(Error::DimensionMismatch {
                what: "OAM channel rows",
                expected: n_t,
                found: h_oam.nrows(),
            });
        }
        let p = budget.max_power / n_t as f64;
        let mut desired = Vec::with_capacity(n_t);
        let mut interference = Vec::with_capacity(n_t);
        let mut harvest = Vec::with_capacity(n_t);
        for l in 0..n_t {
            let row: f64 = (0..n_t).map(|k| h_oam[(l, k)].norm_sqr()).sum();
            let diag = h_oam[(l, l)].norm_sqr();
            desired.push(p * diag);
            interference.push(budget.noise.antenna + p * (row - diag).max(0.0));
            harvest.push(budget.efficiency * (budget.noise.antenna + p * row));
        }
        Ok(Self {
            desired,
            interference,
            conversion_noise: budget.noise.conversion,
            harvest,
            min_harvest: budget.min_harvest,
        })
    }

    pub fn modes(&self) -> usize {
        self.desired.len()
    }

    /// SINR of mode `l` at split `rho`.
    pub fn mode_sinr(&self, l: usize, rho: f64) -> f64 {
        let keep = 1.0 - rho;
        let denom = keep * self.interference[l] + self.conversion_noise;
        if denom > 0.0 {
            self.desired[l] * keep / denom
        } else {
            0.0
        }
    }

    pub fn objective(&self, rho: &[f64], base: LogBase) -> f64 {
        rho.iter()
            .enumerate()
            .map(|(l, &r)| base.rate(self.mode_sinr(l, r)))
            .sum()
    }

    pub fn harvested(&self, rho: &[f64]) -> f64 {
        self.harvest.iter().zip(rho).map(|(a, r)| a * r).sum()
    }

    pub fn feasibility(&self) -> Feasibility {
        let max_harvest: f64 = self.harvest.iter().sum();
        Feasibility {
            feasible: max_harvest >= self.min_harvest,
            max_harvest,
        }
    }

    /// Maximizes the sum rate subject to the harvest constraint.
    pub fn solve(&self) -> Result<PowerSplit> {
        let f = self.feasibility();
        if !f.feasible {
            return Err(Error::Infeasible {
                required: self.min_harvest,
                max: f.max_harvest,
            });
        }
        let n = self.modes();
        let mut rho = vec![0.0; n];
        if self.min_harvest <= 0.0 {
            return PowerSplit::new(rho);
        }
        if self.min_harvest >= f.max_harvest {
            return PowerSplit::new(vec![1.0; n]);
        }

        // modes that cannot carry information harvest for free
        let mut target = self.min_harvest;
        let mut active = Vec::new();
        for l in 0..n {
            if self.harvest[l] <= 0.0 {
                continue;
            }
            if self.desired[l] <= 0.0 {
                rho[l] = 1.0;
                target -= self.harvest[l];
            } else {
                active.push(l);
            }
        }
        if target <= 0.0 || active.is_empty() {
            return PowerSplit::new(rho);
        }

        if self.conversion_noise <= 0.0 {
            // rates do not depend on ρ < 1: spread the requirement evenly
            let share: f64 = active.iter().map(|&l| self.harvest[l]).sum();
            let level = (target / share).min(1.0);
            for &l in &active {
                rho[l] = level;
            }
            return PowerSplit::new(rho);
        }

        let harvest_at = |lambda: f64| -> f64 {
            active
                .iter()
                .map(|&l| self.harvest[l] * (1.0 - self.keep_fraction(l, lambda)))
                .sum()
        };

        // bracket the multiplier
        let mut hi = self.multiplier_scale(&active);
        let mut lo = hi;
        let mut guard = 0;
        while harvest_at(hi) < target && guard < 4000 {
            lo = hi;
            hi *= 2.0;
            guard += 1;
        }
        if lo == hi {
            while harvest_at(lo) >= target && guard < 4000 {
                hi = lo;
                lo *= 0.5;
                guard += 1;
            }
        }

        for _ in 0..300 {
            let mid = (lo * hi).sqrt();
            if !(mid > lo && mid < hi) {
                break;
            }
            let h = harvest_at(mid);
            if h >= target {
                hi = mid;
            } else {
                lo = mid;
            }
            if (h - target).abs() <= 1e-14 * target && h >= target {
                break;
            }
        }
        for &l in &active {
            rho[l] = 1.0 - self.keep_fraction(l, hi);
        }
        PowerSplit::new(rho)
    }

    /// Stationary `1-ρ_l` for multiplier `λ` (natural-log rates), clipped to `[0, 1]`.
    ///
    /// `d/du log(1 + Au/(Bu+C)) = AC / (((A+B)u + C)(Bu + C)) = λ a`
    /// is a quadratic in `u`.
    fn keep_fraction(&self, l: usize, lambda: f64) -> f64 {
        let a_coef = self.desired[l];
        let b_coef = self.interference[l];
        let c_coef = self.conversion_noise;
        let quad = (a_coef + b_coef) * b_coef;
        let lin = c_coef * (a_coef + 2.0 * b_coef);
        let constant = c_coef * c_coef - a_coef * c_coef / (lambda * self.harvest[l]);
        if constant >= 0.0 {
            return 0.0;
        }
        let root = if quad > 0.0 {
            -2.0 * constant / (lin + (lin * lin - 4.0 * quad * constant).sqrt())
        } else {
            -constant / lin
        };
        root.clamp(0.0, 1.0)
    }

    /// Rough multiplier magnitude: the marginal rate per harvested watt at ρ = 0.
    fn multiplier_scale(&self, active: &[usize]) -> f64 {
        let c = self.conversion_noise;
        let scale = active
            .iter()
            .map(|&l| {
                let (a, b) = (self.desired[l], self.interference[l]);
                a * c / ((a + b + c) * (b + c)) / self.harvest[l]
            })
            .fold(0.0f64, f64::max);
        if scale.is_finite() && scale > 0.0 {
            scale
        } else {
            1.0
        }
    }

    /// Largest violation of the KKT conditions (natural-log objective),
    /// relative to the largest marginal rate.
    pub fn kkt_residual(&self, rho: &[f64]) -> f64 {
        let n = self.modes();
        let grads: Vec<f64> = (0..n).map(|l| self.rate_slope(l, rho[l])).collect();
        let scale = grads.iter().fold(0.0f64, |m, g| m.max(g.abs())).max(f64::MIN_POSITIVE);
        let slack = self.harvested(rho) - self.min_harvest;
        // multiplier estimate from interior modes
        let interior: Vec<f64> = (0..n)
            .filter(|&l| rho[l] > 1e-9 && rho[l] < 1.0 - 1e-9 && self.harvest[l] > 0.0)
            .map(|l| -grads[l] / self.harvest[l])
            .collect();
        let mu = if interior.is_empty() {
            0.0
        } else {
            interior.iter().sum::<f64>() / interior.len() as f64
        };
        let mut worst = 0.0f64;
        if slack < 0.0 {
            worst = worst.max(-slack / self.min_harvest.max(f64::MIN_POSITIVE));
        }
        if mu > 0.0 {
            worst = worst.max(slack.abs() / self.min_harvest.max(f64::MIN_POSITIVE));
        }
        for l in 0..n {
            // gradient of the Lagrangian w.r.t. ρ_l
            let g = grads[l] + mu * self.harvest[l];
            let violation = if rho[l] <= 1e-12 {
                g.max(0.0)
            } else if rho[l] >= 1.0 - 1e-12 {
                (-g).max(0.0)
            } else {
                g.abs()
            };
            worst = worst.max(violation / scale);
        }
        worst
    }

    /// `d/dρ log(1 + γ_l(ρ))`.
    fn rate_slope(&self, l: usize, rho: f64) -> f64 {
        let (a, b, c) = (self.desired[l], self.interference[l], self.conversion_noise);
        let u = 1.0 - rho;
        let denom = ((a + b) * u + c) * (b * u + c);
        if denom > 0.0 {
            -a * c / denom
        } else {
            0.0
        }
    }
}

/// Same as [`SplitProblem::feasibility`].
pub fn feasibility(problem: &SplitProblem) -> Feasibility {
    problem.feasibility()
}

/// Same as [`SplitProblem::solve`].
pub fn solve_split(problem: &SplitProblem) -> Result<PowerSplit> {
    problem.solve()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_problem(n: usize, seed: u64, fraction: f64) -> SplitProblem {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let desired: Vec<f64> = (0..n).map(|_| rng.random_range(0.01..2.0)).collect();
        let interference: Vec<f64> = (0..n).map(|_| rng.random_range(0.1..1.0)).collect();
        let harvest: Vec<f64> = (0..n).map(|_| rng.random_range(0.5..1.5)).collect();
        let total: f64 = harvest.iter().sum();
        SplitProblem {
            desired,
            interference,
            conversion_noise: rng.random_range(0.05..0.5),
            harvest,
            min_harvest: fraction * total,
        }
    }

    #[test]
    fn zero_requirement_means_no_split() {
        let p = random_problem(4, 1, 0.0);
        assert_eq!(p.solve().unwrap().as_slice(), &[0.0; 4]);
        assert!(p.feasibility().feasible);
    }

    #[test]
    fn full_requirement_means_full_split() {
        let p = random_problem(4, 2, 1.0);
        assert_eq!(p.solve().unwrap().as_slice(), &[1.0; 4]);
    }

    #[test]
    fn infeasible_boundary() {
        let mut p = random_problem(3, 3, 1.0);
        p.min_harvest *= 1.0 + 1e-9;
        assert!(!p.feasibility().feasible);
        assert!(matches!(p.solve(), Err(Error::Infeasible { .. })));
    }

    #[test]
    fn single_mode_is_tight() {
        let p = random_problem(1, 4, 0.37);
        let rho = p.solve().unwrap();
        assert!((rho[0] - p.min_harvest / p.harvest[0]).abs() < 1e-10);
    }

    #[test]
    fn zero_harvest_mode_stays_unsplit() {
        let mut p = random_problem(3, 5, 0.3);
        p.harvest[1] = 0.0;
        p.min_harvest = 0.3 * (p.harvest[0] + p.harvest[2]);
        let rho = p.solve().unwrap();
        assert_eq!(rho[1], 0.0);
        assert!(p.harvested(rho.as_slice()) >= p.min_harvest * (1.0 - 1e-9));
    }

    #[test]
    fn silent_mode_harvests_first() {
        let mut p = random_problem(3, 6, 0.2);
        p.desired[2] = 0.0;
        let rho = p.solve().unwrap();
        assert_eq!(rho[2], 1.0);
    }

    #[test]
    fn no_conversion_noise_spreads_evenly() {
        let mut p = random_problem(3, 7, 0.4);
        p.conversion_noise = 0.0;
        let rho = p.solve().unwrap();
        assert!(rho.as_slice().iter().all(|&r| (r - 0.4).abs() < 1e-12));
    }

    #[test]
    fn kkt_and_tightness() {
        for seed in 0..50 {
            let p = random_problem(6, 100 + seed, 0.1 + 0.8 * (seed as f64 / 50.0));
            let rho = p.solve().unwrap();
            let q = p.harvested(rho.as_slice());
            assert!(((q - p.min_harvest) / p.min_harvest).abs() < 1e-8, "seed {seed}");
            assert!(p.kkt_residual(rho.as_slice()) < 1e-8, "seed {seed}");
        }
    }

    #[test]
    fn rate_is_concave_in_split() {
        let p = random_problem(4, 8, 0.5);
        let h = 1e-3;
        for l in 0..4 {
            for k in 1..999 {
                let r = k as f64 * 1e-3;
                let f = |x: f64| LogBase::E.rate(p.mode_sinr(l, x));
                let second = f(r + h) - 2.0 * f(r) + f(r - h);
                assert!(second <= 1e-9);
            }
        }
    }

    proptest! {
        #[test]
        fn permutation_invariant(seed in 0u64..1000, fraction in 0.05..0.95f64, shift in 1usize..5) {
            let p = random_problem(5, seed, fraction);
            let rho = p.solve().unwrap();
            let perm: Vec<usize> = (0..5).map(|i| (i + shift) % 5).collect();
            let q = SplitProblem {
                desired: perm.iter().map(|&i| p.desired[i]).collect(),
                interference: perm.iter().map(|&i| p.interference[i]).collect(),
                harvest: perm.iter().map(|&i| p.harvest[i]).collect(),
                ..p.clone()
            };
            let rho_q = q.solve().unwrap();
            for (k, &i) in perm.iter().enumerate() {
                prop_assert!((rho_q[k] - rho[i]).abs() < 1e-9);
            }
            prop_assert!(rho.as_slice().iter().all(|r| (0.0..=1.0).contains(r)));
            prop_assert!(p.harvested(rho.as_slice()) >= p.min_harvest - 1e-9 * p.min_harvest.max(1.0));
        }
    }
}
