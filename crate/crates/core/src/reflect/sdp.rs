//! Unit-diagonal SDP `min tr(R X)  s.t.  X ⪰ 0, diag(X) = 1`.
//!
//! Solved in factored form `X = Vᴴ V` with unit-norm columns `v_i` of a
//! `k × n` matrix. With every other column fixed, the objective is
//! `2 Re(v_iᴴ g_i) + const` where `g_i = Σ_{j≠i} R_ji v_j`, minimized over the
//! unit sphere by `v_i = -g_i / ‖g_i‖`. Sweeping over the columns until the
//! objective settles gives the SDP optimum for `k(k+1)/2 > n`.
//!
//! A dual certificate is reported alongside: with `y_i = R_ii - ‖g_i‖`,
//! `Σ y_i + n·min(λ_min(R - diag y), 0)` lower-bounds the optimum.

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{hermitian_part, min_eigenvalue, CMatrix, CVector, ZERO};
use crate::transform::cgauss;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SdpOptions {
    pub max_sweeps: usize,
    /// Stop when the relative objective change between sweeps drops below this
    /// and the duality gap is within `gap_tolerance`.
    pub tolerance: f64,
    pub gap_tolerance: f64,
    /// Factor rank; `None` picks `ceil(√(2n)) + 1`.
    pub rank: Option<usize>,
    pub seed: u64,
}

impl Default for SdpOptions {
    fn default() -> Self {
        Self {
            max_sweeps: 2000,
            tolerance: 1e-8,
            gap_tolerance: 1e-6,
            rank: None,
            seed: 0x5eed,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SdpSolution {
    pub x: CMatrix,
    /// `k × n` factor with `x = factorᴴ factor`.
    pub factor: CMatrix,
    /// `tr(R X)`.
    pub objective: f64,
    /// Certified lower bound on the SDP optimum.
    pub dual_bound: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Objective after every sweep.
    pub trace: Vec<f64>,
}

impl SdpSolution {
    /// Wraps a given PSD matrix, factored through its eigendecomposition
    /// `X = U Σ Uᴴ` as `(U Σ^{1/2})ᴴ`.
    pub fn from_matrix(x: CMatrix, r_hat: &CMatrix) -> Self {
        let n = x.nrows();
        let eig = nalgebra::SymmetricEigen::new(hermitian_part(&x));
        let mut factor = CMatrix::zeros(n, n);
        let top = eig.eigenvalues.iter().fold(0.0f64, |a, &b| a.max(b));
        for (k, &lambda) in eig.eigenvalues.iter().enumerate() {
            // rounding noise in the null space would otherwise leak into draws
            let s = if lambda > 1e-12 * top { lambda.sqrt() } else { 0.0 };
            for i in 0..n {
                factor[(k, i)] = eig.eigenvectors[(i, k)].conj() * s;
            }
        }
        let objective = trace_product(r_hat, &x);
        Self {
            x,
            factor,
            objective,
            dual_bound: f64::NEG_INFINITY,
            iterations: 0,
            converged: true,
            trace: Vec::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.x.nrows()
    }

    /// `(objective - dual_bound) / |objective|`.
    pub fn relative_gap(&self) -> f64 {
        (self.objective - self.dual_bound) / self.objective.abs().max(f64::MIN_POSITIVE)
    }
}

/// `Re tr(A B)`.
pub fn trace_product(a: &CMatrix, b: &CMatrix) -> f64 {
    a.iter()
        .zip(b.transpose().iter())
        .map(|(x, y)| (x * y).re)
        .sum()
}

pub fn solve_sdp(r_hat: &CMatrix, options: &SdpOptions) -> Result<SdpSolution> {
    let n = r_hat.nrows();
    if r_hat.ncols() != n {
        return Err(Error::DimensionMismatch {
            what: "SDP cost matrix columns",
            expected: n,
            found: r_hat.ncols(),
        });
    }
    if n == 0 {
        return Ok(SdpSolution {
            x: CMatrix::zeros(0, 0),
            factor: CMatrix::zeros(0, 0),
            objective: 0.0,
            dual_bound: 0.0,
            iterations: 0,
            converged: true,
            trace: Vec::new(),
        });
    }
    let r = hermitian_part(r_hat);
    let max_entry = r.iter().fold(0.0f64, |m, v| m.max(v.norm()));
    let scale = if max_entry > 0.0 { max_entry } else { 1.0 };
    let unit_cost = r.unscale(scale);

    let rank = options
        .rank
        .unwrap_or_else(|| ((2.0 * n as f64).sqrt().ceil() as usize) + 1)
        .max(1);
    let mut rng = ChaCha8Rng::seed_from_u64(options.seed);
    let mut v = CMatrix::from_fn(rank, n, |_, _| cgauss(&mut rng, 1.0));
    for mut col in v.column_iter_mut() {
        let norm = col.norm();
        col.unscale_mut(norm);
    }

    let mut objective = factored_objective(&unit_cost, &v);
    let mut dual = f64::NEG_INFINITY;
    let mut trace = Vec::new();
    let mut converged = false;
    let mut iterations = 0;
    let mut g = CVector::zeros(rank);
    while iterations < options.max_sweeps {
        iterations += 1;
        for i in 0..n {
            g.fill(ZERO);
            for j in 0..n {
                if j != i {
                    g.axpy(unit_cost[(j, i)], &v.column(j), ONE_C);
                }
            }
            let norm = g.norm();
            if norm > 0.0 {
                v.set_column(i, &(-g.unscale(norm)));
            }
        }
        let next = factored_objective(&unit_cost, &v);
        trace.push(next * scale);
        let change = (objective - next).abs();
        objective = next;
        if change <= options.tolerance * objective.abs().max(1.0) {
            dual = dual_bound(&unit_cost, &v);
            if objective - dual <= options.gap_tolerance * objective.abs().max(1.0) {
                converged = true;
                break;
            }
        }
    }
    if !converged {
        dual = dual_bound(&unit_cost, &v);
    }
    let x = v.adjoint() * &v;
    Ok(SdpSolution {
        x,
        factor: v,
        objective: objective * scale,
        dual_bound: dual * scale,
        iterations,
        converged,
        trace,
    })
}

const ONE_C: Complex64 = Complex64 { re: 1.0, im: 0.0 };

/// `Re tr(V R Vᴴ)` = `tr(R X)`.
fn factored_objective(r: &CMatrix, v: &CMatrix) -> f64 {
    let vr = v * r;
    vr.iter().zip(v.iter()).map(|(a, b)| (a * b.conj()).re).sum()
}

fn dual_bound(r: &CMatrix, v: &CMatrix) -> f64 {
    let n = r.nrows();
    let vr = v * r;
    // y_i = Re(v_iᴴ (V R)_{:,i})
    let y: Vec<f64> = (0..n).map(|i| v.column(i).dotc(&vr.column(i)).re).collect();
    let mut slack = r.clone();
    for (i, yi) in y.iter().enumerate() {
        slack[(i, i)] -= Complex64::new(*yi, 0.0);
    }
    let lambda = min_eigenvalue(&slack);
    y.iter().sum::<f64>() + n as f64 * lambda.min(0.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::hermitian_eigenvalues;

    fn real(n: usize, data: &[f64]) -> CMatrix {
        CMatrix::from_fn(n, n, |r, c| Complex64::new(data[r * n + c], 0.0))
    }

    #[test]
    fn identity_cost() {
        let sol = solve_sdp(&CMatrix::identity(5, 5), &SdpOptions::default()).unwrap();
        assert!((sol.objective - 5.0).abs() < 1e-12);
    }

    #[test]
    fn two_by_two_antidiagonal() {
        // brute force over X = [[1, t], [t̄, 1]], |t| ≤ 1: tr(RX) = 2 Re t, minimum -2 at t = -1
        let brute = (0..=2000)
            .map(|k| -1.0 + k as f64 * 1e-3)
            .map(|t| 2.0 * t)
            .fold(f64::INFINITY, f64::min);
        let r = real(2, &[0.0, 1.0, 1.0, 0.0]);
        let sol = solve_sdp(&r, &SdpOptions::default()).unwrap();
        assert!((sol.objective - brute).abs() < 1e-9);
        assert!((sol.x[(0, 1)] - Complex64::new(-1.0, 0.0)).norm() < 1e-9);
        assert!((sol.x[(0, 0)].re - 1.0).abs() < 1e-12);
    }

    #[test]
    fn structural_properties_on_random_instances() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for n in [3, 8, 17, 65] {
            let a = CMatrix::from_fn(n, n, |_, _| cgauss(&mut rng, 1.0));
            let r = hermitian_part(&a);
            let sol = solve_sdp(&r, &SdpOptions::default()).unwrap();
            for i in 0..n {
                assert!((sol.x[(i, i)].re - 1.0).abs() < 1e-6);
            }
            assert!(hermitian_eigenvalues(&sol.x)[0] >= -1e-6);
            assert!((trace_product(&r, &sol.x) - sol.objective).abs() < 1e-8 * sol.objective.abs());
            assert!(sol.dual_bound <= sol.objective + 1e-9);
            let gap = (sol.objective - sol.dual_bound) / sol.objective.abs();
            assert!(gap < 1e-6, "n = {n}: gap {gap:e}");
        }
    }

    #[test]
    fn from_matrix_recovers_factor() {
        let phi = CVector::from_fn(4, |i, _| Complex64::cis(0.4 * i as f64));
        let x = &phi * phi.adjoint();
        let sol = SdpSolution::from_matrix(x.clone(), &CMatrix::identity(4, 4));
        assert!((sol.factor.adjoint() * &sol.factor - x).norm() < 1e-12);
        assert!((sol.objective - 4.0).abs() < 1e-12);
    }
}
