//! RIS phase optimization for a fixed power split.
//!
//! The sum-rate problem is replaced by its weighted-MSE surrogate
//! `tr[F H Hᴴ] - tr(F H) - tr(F Hᴴ)` with `H` the OAM channel and `F` the
//! inverse MSE matrix. Expanding the composite channel turns the surrogate
//! into `φᴴ R φ + Re(vᵀ φ) + c`, which is homogenized with one extra
//! unit-modulus entry, relaxed to a unit-diagonal SDP and rounded back to
//! phases by Gaussian randomization.

mod sdp;

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::channel::{direct_channel, ChannelSet, ReflectionState};
use crate::error::{Error, Result};
use crate::linalg::{bilinear, hermitian_eigenvalues, hermitian_part, quadratic, CMatrix, CVector, ONE};
use crate::metrics::{LinkBudget, PowerSplit};
use crate::transform::{cgauss, TransformPair};

pub use sdp::{solve_sdp, trace_product, SdpOptions, SdpSolution};

/// Condition number above which the MSE matrix counts as singular.
pub const MAX_CONDITION: f64 = 1e14;

/// MSE matrix and its optimal weight.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightState {
    pub mse: CMatrix,
    pub weight: CMatrix,
}

impl WeightState {
    pub fn new(h_oam: &CMatrix, split: &PowerSplit, budget: &LinkBudget) -> Result<Self> {
        let mse = mse_matrix(h_oam, split, budget)?;
        let weight = optimal_weight(&mse)?;
        Ok(Self { mse, weight })
    }
}

/// MSE matrix of the per-mode diagonal receiver:
///
/// `E = (D⁻¹H - I)(D⁻¹H - I)ᴴ + D⁻¹D⁻ᴴ (N_t/P̄) diag(σ_n² + σ_cov²/(1-ρ_l))`
///
/// with `D = diag(H_ll)`.
pub fn mse_matrix(h_oam: &CMatrix, split: &PowerSplit, budget: &LinkBudget) -> Result<CMatrix> {
    let n = h_oam.ncols();
    if h_oam.nrows() != n {
        return Err(Error::ShapeMismatch {
            tx: n,
            rx: h_oam.nrows(),
        });
    }
    if split.len() != n {
        return Err(Error::DimensionMismatch {
            what: "power split",
            expected: n,
            found: split.len(),
        });
    }
    for l in 0..n {
        if split[l] >= 1.0 {
            return Err(Error::SplitSaturated { index: l });
        }
        if h_oam[(l, l)].norm() < 1e-15 {
            return Err(Error::ZeroDiagonal { index: l });
        }
    }
    let mut normalized = h_oam.clone();
    for (l, mut row) in normalized.row_iter_mut().enumerate() {
        let h = h_oam[(l, l)];
        row /= h;
    }
    let residual = normalized - CMatrix::identity(n, n);
    let mut e = &residual * residual.adjoint();
    let noise = budget.noise;
    for l in 0..n {
        let effective = noise.antenna + noise.conversion / (1.0 - split[l]);
        let term = n as f64 / budget.max_power * effective / h_oam[(l, l)].norm_sqr();
        e[(l, l)] += Complex64::new(term, 0.0);
    }
    Ok(hermitian_part(&e))
}

/// `F = E⁻¹`, with a small ridge added when `E` is near singular.
pub fn optimal_weight(mse: &CMatrix) -> Result<CMatrix> {
    let n = mse.nrows();
    let e = hermitian_part(mse);
    // Weak modes put entries many orders of magnitude apart on the diagonal, so
    // invert the equilibrated matrix S⁻¹ E S⁻¹ with S = diag(√E_ll).
    let mut scale = Vec::with_capacity(n);
    for l in 0..n {
        let d = e[(l, l)].re;
        if !(d > 0.0) {
            return Err(Error::SingularMse {
                condition: f64::INFINITY,
            });
        }
        scale.push(d.sqrt());
    }
    let balanced = CMatrix::from_fn(n, n, |r, c| e[(r, c)] / (scale[r] * scale[c]));
    let invert = |m: &CMatrix| -> Option<CMatrix> {
        let eig = nalgebra::SymmetricEigen::new(m.clone());
        let max = eig.eigenvalues.iter().fold(0.0f64, |a, &b| a.max(b.abs()));
        let min = eig.eigenvalues.iter().fold(f64::INFINITY, |a, &b| a.min(b));
        if !(min > 0.0) || max / min > MAX_CONDITION {
            return None;
        }
        let inv = CVector::from_iterator(
            n,
            eig.eigenvalues.iter().map(|&l| Complex64::new(1.0 / l, 0.0)),
        );
        let u = &eig.eigenvectors;
        Some(u * CMatrix::from_diagonal(&inv) * u.adjoint())
    };
    let unscale = |f: CMatrix| {
        hermitian_part(&CMatrix::from_fn(n, n, |r, c| {
            f[(r, c)] / (scale[r] * scale[c])
        }))
    };
    if let Some(f) = invert(&balanced) {
        return Ok(unscale(f));
    }
    let ridge = 1e-12 * balanced.trace().re / n as f64;
    let regularized = &balanced + CMatrix::identity(n, n).scale(ridge);
    invert(&regularized).map(unscale).ok_or_else(|| {
        let values = hermitian_eigenvalues(&regularized);
        let condition = values.last().copied().unwrap_or(0.0).abs()
            / values.first().copied().unwrap_or(0.0).max(f64::MIN_POSITIVE);
        Error::SingularMse { condition }
    })
}

/// `log|F| - tr(F E) + N_t`, the surrogate objective maximized by `F = E⁻¹`.
pub fn weighted_mse_objective(weight: &CMatrix, mse: &CMatrix) -> f64 {
    let log_det: f64 = hermitian_eigenvalues(weight).iter().map(|l| l.ln()).sum();
    log_det - trace_product(weight, mse) + weight.nrows() as f64
}

/// `tr[F H Hᴴ] - tr(F H) - tr(F Hᴴ)`.
pub fn surrogate_objective(h_oam: &CMatrix, weight: &CMatrix) -> f64 {
    let gram = h_oam * h_oam.adjoint();
    trace_product(weight, &gram) - 2.0 * trace_product(weight, h_oam)
}

/// `φᴴ R φ + Re(vᵀ φ) + constant`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticForm {
    pub r: CMatrix,
    pub v: CVector,
    pub constant: f64,
}

impl QuadraticForm {
    pub fn evaluate(&self, phi: &CVector) -> f64 {
        quadratic(&self.r, phi) + bilinear(&self.v, phi).re + self.constant
    }

    pub fn dim(&self) -> usize {
        self.v.len()
    }
}

/// Surrogate objective as a quadratic form in the RIS coefficients.
///
/// With `G = W'ᴴ F W'`:
/// `R = (H_refᴴ G H_ref) ⊙ (H_in H_inᴴ)ᵀ`,
/// `v = 2√K Diag(H_in H_losᴴ G H_ref) - 2 Diag(H_in W F W' H_ref)`.
pub fn quadratic_form(
    channels: &ChannelSet,
    transforms: &TransformPair,
    weight: &CMatrix,
) -> Result<QuadraticForm> {
    let (n_t, n_r) = (channels.tx_len(), channels.rx_len());
    if n_t != n_r {
        return Err(Error::ShapeMismatch { tx: n_t, rx: n_r });
    }
    if weight.nrows() != n_t || weight.ncols() != n_t {
        return Err(Error::DimensionMismatch {
            what: "weight matrix",
            expected: n_t,
            found: weight.nrows(),
        });
    }
    let sqrt_k = channels.params.los_attenuation.sqrt();
    let h_in = &channels.incident;
    let h_ref = &channels.reflected;
    let g = transforms.w_prime.adjoint() * weight * &transforms.w_prime;

    let g_ref = &g * h_ref;
    let m = h_ref.adjoint() * &g_ref;
    let d = h_in * h_in.adjoint();
    let r = hermitian_part(&m.component_mul(&d.transpose()));

    let cross = h_in * channels.los.adjoint();
    let linear = h_in * &transforms.w * weight * &transforms.w_prime;
    let h_ref_cols = h_ref.ncols();
    let v = CVector::from_fn(h_ref_cols, |i, _| {
        let c: Complex64 = cross.row(i).transpose().dot(&g_ref.column(i));
        let j: Complex64 = linear.row(i).transpose().dot(&h_ref.column(i));
        c * (2.0 * sqrt_k) - j * 2.0
    });

    let a0 = &transforms.w_prime * direct_channel(channels) * &transforms.w;
    let constant = surrogate_objective(&a0, weight);
    Ok(QuadraticForm { r, v, constant })
}

/// `[[R, v*/2], [vᵀ/2, 0]]`.
#[derive(Debug, Clone, PartialEq)]
pub struct HomogenizedForm {
    pub r_hat: CMatrix,
}

impl HomogenizedForm {
    pub fn objective(&self, phi_hat: &CVector) -> f64 {
        quadratic(&self.r_hat, phi_hat)
    }

    pub fn dim(&self) -> usize {
        self.r_hat.nrows()
    }
}

pub fn homogenize(q: &QuadraticForm) -> HomogenizedForm {
    let n = q.dim();
    let mut r_hat = CMatrix::zeros(n + 1, n + 1);
    r_hat.view_mut((0, 0), (n, n)).copy_from(&q.r);
    for i in 0..n {
        r_hat[(i, n)] = q.v[i].conj() * 0.5;
        r_hat[(n, i)] = q.v[i] * 0.5;
    }
    HomogenizedForm { r_hat }
}

/// Projects entrywise onto the unit circle; zeros map to 1.
pub fn project_unit_modulus(x: &CVector) -> CVector {
    x.map(|v| {
        let m = v.norm();
        if m > 0.0 {
            v / m
        } else {
            ONE
        }
    })
}

/// Seed of the `k`-th randomization draw: stream `k` of a ChaCha8 generator
/// keyed by `seed`.
fn draw_rng(seed: u64, k: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(k);
    rng
}

fn draw_candidate(factor: &CMatrix, seed: u64, k: u64) -> CVector {
    let mut rng = draw_rng(seed, k);
    let zeta = CVector::from_fn(factor.nrows(), |_, _| cgauss(&mut rng, 1.0));
    project_unit_modulus(&(factor.adjoint() * zeta))
}

/// Best of `draws` Gaussian samples with covariance `X`, projected to unit
/// modulus and scored by the homogenized objective (lower is better).
///
/// Draws are independent streams, so the result does not depend on thread
/// scheduling; ties go to the lowest draw index.
pub fn randomize(solution: &SdpSolution, form: &HomogenizedForm, draws: usize, seed: u64) -> CVector {
    let n = solution.dim();
    if n == 0 {
        return CVector::zeros(0);
    }
    let draws = draws.max(1) as u64;
    let (best_k, _) = (0..draws)
        .into_par_iter()
        .map(|k| (k, form.objective(&draw_candidate(&solution.factor, seed, k))))
        .reduce(
            || (u64::MAX, f64::INFINITY),
            |a, b| match a.1.total_cmp(&b.1) {
                std::cmp::Ordering::Less => a,
                std::cmp::Ordering::Greater => b,
                std::cmp::Ordering::Equal => {
                    if a.0 <= b.0 {
                        a
                    } else {
                        b
                    }
                }
            },
        );
    draw_candidate(&solution.factor, seed, best_k)
}

/// `exp(j arg(φ̂_n / φ̂_{N+1}))` for the first `N` entries.
pub fn extract_phases(phi_hat: &CVector) -> Result<ReflectionState> {
    let n = phi_hat.len();
    if n == 0 {
        return Err(Error::ZeroHomogenizer);
    }
    let t = phi_hat[n - 1];
    if t.norm() < 1e-12 {
        return Err(Error::ZeroHomogenizer);
    }
    let phases: Vec<f64> = phi_hat.iter().take(n - 1).map(|v| (v / t).arg()).collect();
    Ok(ReflectionState::from_phases(&phases))
}

/// Outcome of one reflection update.
#[derive(Debug, Clone, PartialEq)]
pub struct ReflectionStep {
    pub state: ReflectionState,
    pub form: QuadraticForm,
    pub sdp: SdpSolution,
    /// Homogenized objective of the chosen draw.
    pub rounded_objective: f64,
}

/// Runs the whole chain: quadratic form, homogenization, SDP, randomization
/// and phase extraction.
pub fn optimize_reflection(
    channels: &ChannelSet,
    transforms: &TransformPair,
    weight: &CMatrix,
    sdp_options: &SdpOptions,
    draws: usize,
    seed: u64,
) -> Result<ReflectionStep> {
    let form = quadratic_form(channels, transforms, weight)?;
    let hom = homogenize(&form);
    let sdp = solve_sdp(&hom.r_hat, sdp_options)?;
    let phi_hat = randomize(&sdp, &hom, draws, seed);
    let rounded_objective = hom.objective(&phi_hat);
    let state = extract_phases(&phi_hat)?;
    Ok(ReflectionStep {
        state,
        form,
        sdp,
        rounded_objective,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{build_channels, compose, oam_channel, PropagationParams};
    use crate::geometry::{element_layout, SystemGeometry};
    use rand::Rng;

    fn setup() -> (ChannelSet, TransformPair, LinkBudget) {
        let layout = element_layout(&SystemGeometry::default()).unwrap();
        let ch = build_channels(&layout, &PropagationParams::default()).unwrap();
        (ch, TransformPair::oam(8, 8), LinkBudget::default())
    }

    fn random_phases(rng: &mut ChaCha8Rng, n: usize) -> ReflectionState {
        let p: Vec<f64> = (0..n).map(|_| rng.random_range(-3.2..3.2)).collect();
        ReflectionState::from_phases(&p)
    }

    #[test]
    fn mse_trivial_cases() {
        let b = LinkBudget {
            noise: crate::transform::NoiseModel {
                antenna: 0.0,
                conversion: 0.0,
            },
            ..LinkBudget::default()
        };
        let eye = CMatrix::identity(3, 3);
        assert!(mse_matrix(&eye, &PowerSplit::zeros(3), &b).unwrap().norm() < 1e-15);

        let b = LinkBudget {
            noise: crate::transform::NoiseModel {
                antenna: 0.2,
                conversion: 0.0,
            },
            max_power: 2.0,
            ..LinkBudget::default()
        };
        let e = mse_matrix(&eye, &PowerSplit::uniform(3, 0.4).unwrap(), &b).unwrap();
        assert!((e - CMatrix::identity(3, 3).scale(3.0 / 2.0 * 0.2)).norm() < 1e-15);
    }

    #[test]
    fn mse_errors() {
        let b = LinkBudget::default();
        let eye = CMatrix::identity(2, 2);
        assert_eq!(
            mse_matrix(&eye, &PowerSplit::new(vec![0.0, 1.0]).unwrap(), &b),
            Err(Error::SplitSaturated { index: 1 })
        );
        let mut h = eye.clone();
        h[(0, 0)] = Complex64::new(0.0, 0.0);
        assert_eq!(
            mse_matrix(&h, &PowerSplit::zeros(2), &b),
            Err(Error::ZeroDiagonal { index: 0 })
        );
    }

    #[test]
    fn weight_inverts() {
        let f = optimal_weight(&CMatrix::identity(3, 3).scale(2.0)).unwrap();
        assert!((f - CMatrix::identity(3, 3).scale(0.5)).norm() < 1e-15);

        let (ch, t, b) = setup();
        let h = oam_channel(&compose(&ch, &ReflectionState::ones(16)).unwrap(), &t);
        let ws = WeightState::new(&h, &PowerSplit::uniform(8, 0.5).unwrap(), &b).unwrap();
        let prod = &ws.weight * &ws.mse;
        assert!((prod - CMatrix::identity(8, 8)).norm() < 1e-8);
        assert!(hermitian_eigenvalues(&ws.weight)[0] > 0.0);
    }

    #[test]
    fn weight_is_surrogate_maximizer() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let a = CMatrix::from_fn(4, 4, |_, _| cgauss(&mut rng, 1.0));
        let e = &a * a.adjoint() + CMatrix::identity(4, 4).scale(0.1);
        let f = optimal_weight(&e).unwrap();
        let best = weighted_mse_objective(&f, &e);
        for _ in 0..20 {
            let p = CMatrix::from_fn(4, 4, |_, _| cgauss(&mut rng, 1e-2));
            let perturbed = &f + &p * p.adjoint();
            assert!(weighted_mse_objective(&perturbed, &e) < best);
        }
    }

    fn real_matrix(n: usize, data: &[f64]) -> CMatrix {
        CMatrix::from_fn(n, n, |r, c| Complex64::new(data[r * n + c], 0.0))
    }

    #[test]
    fn singular_mse_rejected() {
        let mut e = CMatrix::identity(2, 2);
        e[(1, 1)] = Complex64::new(0.0, 0.0);
        assert!(matches!(optimal_weight(&e), Err(Error::SingularMse { .. })));
        let indefinite = real_matrix(2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(matches!(
            optimal_weight(&indefinite),
            Err(Error::SingularMse { .. })
        ));
        // rank deficient but PSD: the ridge rescues it
        let ones = real_matrix(2, &[1.0, 1.0, 1.0, 1.0]);
        assert!(optimal_weight(&ones).is_ok());
    }

    #[test]
    fn quadratic_form_degenerate_inputs() {
        let (ch, t, _) = setup();
        let q = quadratic_form(&ch, &t, &CMatrix::zeros(8, 8)).unwrap();
        assert_eq!(q.r.norm(), 0.0);
        assert_eq!(q.v.norm(), 0.0);

        let mut dark = ch.clone();
        dark.incident.fill(Complex64::new(0.0, 0.0));
        let q = quadratic_form(&dark, &t, &CMatrix::identity(8, 8)).unwrap();
        assert_eq!(q.r.norm(), 0.0);
        assert_eq!(q.v.norm(), 0.0);

        let mut wide = ch.clone();
        wide.los = CMatrix::zeros(6, 8);
        wide.reflected = CMatrix::zeros(6, 16);
        assert!(matches!(
            quadratic_form(&wide, &t, &CMatrix::identity(8, 8)),
            Err(Error::ShapeMismatch { tx: 8, rx: 6 })
        ));
    }

    #[test]
    fn quadratic_form_matches_surrogate() {
        let (ch, t, b) = setup();
        let h = oam_channel(&compose(&ch, &ReflectionState::ones(16)).unwrap(), &t);
        let ws = WeightState::new(&h, &PowerSplit::uniform(8, 0.3).unwrap(), &b).unwrap();
        let q = quadratic_form(&ch, &t, &ws.weight).unwrap();
        assert!((&q.r - q.r.adjoint()).norm() <= 1e-10 * q.r.norm());
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..20 {
            let phi = random_phases(&mut rng, 16);
            let direct = surrogate_objective(&oam_channel(&compose(&ch, &phi).unwrap(), &t), &ws.weight);
            let form = q.evaluate(phi.as_vector());
            assert!((direct - form).abs() <= 1e-9 * direct.abs());
        }
    }

    #[test]
    fn homogenization_identities() {
        let (ch, t, b) = setup();
        let h = oam_channel(&compose(&ch, &ReflectionState::ones(16)).unwrap(), &t);
        let ws = WeightState::new(&h, &PowerSplit::uniform(8, 0.3).unwrap(), &b).unwrap();
        let q = quadratic_form(&ch, &t, &ws.weight).unwrap();
        let hom = homogenize(&q);
        assert_eq!(hom.r_hat[(16, 16)], Complex64::new(0.0, 0.0));
        assert_eq!(hom.r_hat[(16, 3)], q.v[3] * 0.5);

        let ones = CVector::from_element(17, ONE);
        let expected = q.r.sum().re + q.v.sum().re;
        assert!((hom.objective(&ones) - expected).abs() <= 1e-12 * expected.abs());

        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..50 {
            let phi = random_phases(&mut rng, 16);
            let tau = Complex64::cis(rng.random_range(-3.0..3.0));
            let mut hat = CVector::zeros(17);
            for i in 0..16 {
                hat[i] = phi.as_vector()[i] * tau;
            }
            hat[16] = tau;
            let lhs = hom.objective(&hat);
            let rhs = q.evaluate(phi.as_vector()) - q.constant;
            assert!((lhs - rhs).abs() <= 1e-9 * rhs.abs().max(q.r.norm()));
        }

        let zero_v = QuadraticForm {
            v: CVector::zeros(16),
            ..q.clone()
        };
        let hz = homogenize(&zero_v);
        assert_eq!(hz.r_hat.column(16).norm(), 0.0);
        assert_eq!(hz.r_hat.row(16).norm(), 0.0);
    }

    #[test]
    fn rank_one_randomization_reproduces_vector() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let phi = random_phases(&mut rng, 5);
        let x = phi.as_vector() * phi.as_vector().adjoint();
        let a = CMatrix::from_fn(5, 5, |_, _| cgauss(&mut rng, 1.0));
        let form = HomogenizedForm {
            r_hat: hermitian_part(&a),
        };
        let sol = SdpSolution::from_matrix(x, &form.r_hat);
        for k in 0..20 {
            let cand = draw_candidate(&sol.factor, 99, k);
            let ratio = cand[0] / phi.as_vector()[0];
            assert!((cand - phi.as_vector() * ratio).norm() < 1e-9);
        }
        let best = randomize(&sol, &form, 100, 4);
        assert!((form.objective(&best) - form.objective(phi.as_vector())).abs() < 1e-9);
    }

    #[test]
    fn more_draws_never_hurt() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let a = CMatrix::from_fn(9, 9, |_, _| cgauss(&mut rng, 1.0));
        let form = HomogenizedForm {
            r_hat: hermitian_part(&a),
        };
        let sol = solve_sdp(&form.r_hat, &SdpOptions::default()).unwrap();
        let one = form.objective(&randomize(&sol, &form, 1, 3));
        let many = form.objective(&randomize(&sol, &form, 10_000, 3));
        assert!(many <= one);
        assert_eq!(randomize(&sol, &form, 500, 3), randomize(&sol, &form, 500, 3));
    }

    #[test]
    fn phase_extraction() {
        let ones = CVector::from_element(4, ONE);
        let s = extract_phases(&ones).unwrap();
        assert!((s.as_vector() - CVector::from_element(3, ONE)).norm() < 1e-15);

        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let phi_hat = CVector::from_fn(6, |_, _| cgauss(&mut rng, 1.0));
        let rotated = &phi_hat * Complex64::cis(0.77);
        let a = extract_phases(&phi_hat).unwrap();
        let b = extract_phases(&rotated).unwrap();
        assert!((a.as_vector() - b.as_vector()).norm() < 1e-12);
        assert!(a.as_vector().iter().all(|v| (v.norm() - 1.0).abs() < 1e-15));

        let mut z = ones.clone();
        z[3] = Complex64::new(0.0, 0.0);
        assert_eq!(extract_phases(&z), Err(Error::ZeroHomogenizer));
    }

    #[test]
    fn extracted_phases_keep_objective() {
        let (ch, t, b) = setup();
        let h = oam_channel(&compose(&ch, &ReflectionState::ones(16)).unwrap(), &t);
        let ws = WeightState::new(&h, &PowerSplit::uniform(8, 0.3).unwrap(), &b).unwrap();
        let q = quadratic_form(&ch, &t, &ws.weight).unwrap();
        let hom = homogenize(&q);
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        for _ in 0..50 {
            let raw = CVector::from_fn(17, |_, _| cgauss(&mut rng, 1.0));
            let hat = project_unit_modulus(&raw);
            let phi = extract_phases(&hat).unwrap();
            let p6 = q.evaluate(phi.as_vector()) - q.constant;
            let p7 = hom.objective(&hat);
            assert!((p6 - p7).abs() <= 1e-9 * p7.abs().max(q.r.norm()));
        }
    }
}
