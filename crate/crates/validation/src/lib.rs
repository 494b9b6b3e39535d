//! Exhaustive-search oracles used to check the optimizers, and the verdict
//! type the acceptance suite prints.

use std::f64::consts::TAU;
use std::fmt;

use num_complex::Complex64;
use oamswipt::linalg::CVector;
use oamswipt::reflect::QuadraticForm;
use oamswipt::split::SplitProblem;
use oamswipt::LogBase;

/// Minimum of `form` over phases restricted to `levels` equally spaced values
/// per element. Returns the minimum and its phases.
pub fn phase_grid_minimum(form: &QuadraticForm, levels: usize) -> (f64, Vec<f64>) {
    let n = form.dim();
    let total = levels.pow(n as u32);
    let mut best = (f64::INFINITY, vec![0.0; n]);
    let mut digits = vec![0usize; n];
    for _ in 0..total {
        let phases: Vec<f64> = digits.iter().map(|&d| TAU * d as f64 / levels as f64).collect();
        let phi = CVector::from_iterator(n, phases.iter().map(|&p| Complex64::cis(p)));
        let value = form.evaluate(&phi);
        if value < best.0 {
            best = (value, phases);
        }
        for d in digits.iter_mut() {
            *d += 1;
            if *d < levels {
                break;
            }
            *d = 0;
        }
    }
    best
}

/// Best feasible splitting ratios on a uniform lattice of the given step.
/// `None` when no lattice point meets the harvest requirement.
pub fn split_grid_search(problem: &SplitProblem, step: f64, base: LogBase) -> Option<(Vec<f64>, f64)> {
    let n = problem.modes();
    let ticks = (1.0 / step).round() as usize;
    let total = (ticks + 1).pow(n as u32);
    let mut best: Option<(Vec<f64>, f64)> = None;
    let mut digits = vec![0usize; n];
    let mut rho = vec![0.0; n];
    for _ in 0..total {
        for (r, &d) in rho.iter_mut().zip(&digits) {
            *r = d as f64 / ticks as f64;
        }
        if problem.harvested(&rho) >= problem.min_harvest {
            keep_better(&mut best, problem, &rho, base);
        }
        for d in digits.iter_mut() {
            *d += 1;
            if *d <= ticks {
                break;
            }
            *d = 0;
        }
    }
    best
}

/// Two-mode grid search that also samples the line where the harvest
/// requirement holds with equality.
///
/// The lattice alone misses a tilted active constraint by up to several
/// steps along it. Here the mode with the smaller harvest coefficient runs
/// over the grid and the other is solved from the equality, so consecutive
/// boundary samples are at most one step apart in each coordinate.
pub fn split_grid_search_2(problem: &SplitProblem, step: f64, base: LogBase) -> Option<(Vec<f64>, f64)> {
    assert_eq!(problem.modes(), 2, "two-mode oracle");
    let mut best = split_grid_search(problem, step, base);
    let a = &problem.harvest;
    let (lead, other) = if a[0] >= a[1] { (0, 1) } else { (1, 0) };
    if a[lead] <= 0.0 {
        return best;
    }
    // harvested is η Σ ρ_l (...) = Σ ρ_l a_l
    let ticks = (1.0 / step).round() as usize;
    for k in 0..=ticks {
        let mut rho = [0.0; 2];
        rho[other] = k as f64 / ticks as f64;
        rho[lead] = (problem.min_harvest - a[other] * rho[other]) / a[lead];
        if (0.0..=1.0).contains(&rho[lead]) {
            keep_better(&mut best, problem, &rho, base);
        }
    }
    best
}

fn keep_better(best: &mut Option<(Vec<f64>, f64)>, problem: &SplitProblem, rho: &[f64], base: LogBase) {
    let value = problem.objective(rho, base);
    if best.as_ref().is_none_or(|b| value > b.1) {
        *best = Some((rho.to_vec(), value));
    }
}

/// Outcome of one acceptance criterion.
#[derive(Debug, Clone)]
pub struct Verdict {
    pub id: usize,
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

impl Verdict {
    pub fn new(id: usize, name: &'static str, passed: bool, detail: impl Into<String>) -> Self {
        Self {
            id,
            name,
            passed,
            detail: detail.into(),
        }
    }
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let status = if self.passed { "PASS" } else { "FAIL" };
        write!(f, "criterion {} {status} {}: {}", self.id, self.name, self.detail)
    }
}
