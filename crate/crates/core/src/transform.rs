//! OAM modulation (unit IDFT), demodulation (unit DFT), per-mode recovery
//! and a Monte Carlo link simulator used to check the closed-form SINR.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::channel::{compose, oam_channel, ChannelSet, ReflectionState};
use crate::error::{Error, Result};
use crate::linalg::{CMatrix, CVector, ZERO};
use crate::metrics::PowerSplit;

/// Empirical SINR values above this are reported as this value.
pub const SINR_CAP: f64 = 1e15;

/// Modulation matrix `W` (N_t×N_t) and demodulation matrix `W'` (N_r×N_r).
#[derive(Debug, Clone, PartialEq)]
pub struct TransformPair {
    pub w: CMatrix,
    pub w_prime: CMatrix,
}

impl TransformPair {
    /// Unit IDFT at the transmitter, unit DFT at the receiver.
    pub fn oam(n_t: usize, n_r: usize) -> Self {
        Self {
            w: dft_matrix(n_t, 1.0),
            w_prime: dft_matrix(n_r, -1.0),
        }
    }

    /// No transform at either end: plain per-antenna MIMO streams.
    pub fn identity(n_t: usize, n_r: usize) -> Self {
        Self {
            w: CMatrix::identity(n_t, n_t),
            w_prime: CMatrix::identity(n_r, n_r),
        }
    }

    pub fn tx_len(&self) -> usize {
        self.w.nrows()
    }

    pub fn rx_len(&self) -> usize {
        self.w_prime.nrows()
    }
}

/// Same as [`TransformPair::oam`].
pub fn make_transforms(n_t: usize, n_r: usize) -> TransformPair {
    TransformPair::oam(n_t, n_r)
}

/// `exp(sign · j2π·r·c / n) / √n` for zero-based row `r` and column `c`.
fn dft_matrix(n: usize, sign: f64) -> CMatrix {
    let scale = 1.0 / (n as f64).sqrt();
    CMatrix::from_fn(n, n, |r, c| {
        // reduce the exponent mod n first so large products keep full precision
        let k = (r * c) % n;
        Complex64::from_polar(scale, sign * 2.0 * PI * k as f64 / n as f64)
    })
}

/// Receiver noise powers in watts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseModel {
    /// Per-antenna AWGN power `σ_n²`.
    pub antenna: f64,
    /// RF-to-baseband conversion noise power `σ_cov²`.
    pub conversion: f64,
}

impl NoiseModel {
    pub fn validate(&self) -> Result<()> {
        if self.antenna >= 0.0 && self.conversion >= 0.0 {
            Ok(())
        } else {
            Err(Error::InvalidBudget(format!(
                "noise powers must be non-negative, got {} and {}",
                self.antenna, self.conversion
            )))
        }
    }
}

/// Transmit power per OAM mode, in watts.
#[derive(Debug, Clone, PartialEq)]
pub struct PowerAllocation {
    per_mode: Vec<f64>,
    uniform: bool,
}

impl PowerAllocation {
    pub fn uniform(total: f64, modes: usize) -> Self {
        Self {
            per_mode: vec![total / modes as f64; modes],
            uniform: true,
        }
    }

    pub fn custom(per_mode: Vec<f64>) -> Result<Self> {
        if let Some(p) = per_mode.iter().find(|p| !(p.is_finite() && **p >= 0.0)) {
            return Err(Error::InvalidBudget(format!("mode power {p} is invalid")));
        }
        Ok(Self {
            per_mode,
            uniform: false,
        })
    }

    pub fn per_mode(&self) -> &[f64] {
        &self.per_mode
    }

    pub fn is_uniform(&self) -> bool {
        self.uniform
    }

    pub fn total(&self) -> f64 {
        self.per_mode.iter().sum()
    }

    pub fn len(&self) -> usize {
        self.per_mode.len()
    }

    pub fn is_empty(&self) -> bool {
        self.per_mode.is_empty()
    }
}

/// `s = W diag(√P) x`.
pub fn modulate(x: &CVector, alloc: &PowerAllocation, transforms: &TransformPair) -> Result<CVector> {
    let n_t = transforms.tx_len();
    check_len("symbol vector", n_t, x.len())?;
    check_len("power allocation", n_t, alloc.len())?;
    let scaled = CVector::from_fn(n_t, |l, _| x[l] * alloc.per_mode[l].sqrt());
    Ok(&transforms.w * scaled)
}

/// `y = W' r`.
pub fn demodulate(r: &CVector, transforms: &TransformPair) -> Result<CVector> {
    check_len("received vector", transforms.rx_len(), r.len())?;
    Ok(&transforms.w_prime * r)
}

/// Closed-form per-mode recovery: `x̃_l = (h_l)^† (√(1-ρ_l) y_l + n_l) / √P_l`.
///
/// `h_diag` is the diagonal of the OAM channel. Modes with a zero diagonal
/// entry or zero power recover to 0.
pub fn recover(
    y: &CVector,
    conversion_noise: &CVector,
    h_diag: &[Complex64],
    split: &PowerSplit,
    alloc: &PowerAllocation,
) -> Result<CVector> {
    let n = h_diag.len();
    check_len("power split", n, split.len())?;
    check_len("power allocation", n, alloc.len())?;
    if y.len() < n || conversion_noise.len() < n {
        return Err(Error::DimensionMismatch {
            what: "demodulated vector",
            expected: n,
            found: y.len().min(conversion_noise.len()),
        });
    }
    Ok(CVector::from_fn(n, |l, _| {
        let h = h_diag[l];
        let p = alloc.per_mode[l];
        if h.norm_sqr() == 0.0 || p == 0.0 {
            return ZERO;
        }
        let branch = y[l] * (1.0 - split[l]).sqrt() + conversion_noise[l];
        branch / (h * p.sqrt())
    }))
}

/// Per-mode empirical SINR with batch-means standard errors.
#[derive(Debug, Clone, PartialEq)]
pub struct LinkSimulation {
    pub sinr: Vec<f64>,
    pub std_error: Vec<f64>,
    pub symbols: usize,
}

const SIM_BATCHES: usize = 50;

/// Monte Carlo run of the full chain `x → s → r = Hs + n → y → x̃`.
///
/// SINR for mode `l` is estimated as `S / (E|x̃|² - S)` with
/// `S = |E[x̃ x*]|² / E|x|²`, the power of `x̃` along the sent symbols; the
/// signal power estimate is corrected for its finite-sample bias.
#[allow(clippy::too_many_arguments)]
pub fn simulate_link(
    channels: &ChannelSet,
    refl: &ReflectionState,
    transforms: &TransformPair,
    alloc: &PowerAllocation,
    split: &PowerSplit,
    noise: &NoiseModel,
    n_symbols: usize,
    seed: u64,
) -> Result<LinkSimulation> {
    if n_symbols == 0 {
        return Err(Error::InvalidOptions("n_symbols must be at least 1".into()));
    }
    noise.validate()?;
    let h = compose(channels, refl)?;
    let n_t = transforms.tx_len();
    let n_r = transforms.rx_len();
    check_len("channel columns", n_t, h.ncols())?;
    check_len("channel rows", n_r, h.nrows())?;
    if n_r < n_t {
        return Err(Error::DimensionMismatch {
            what: "receive modes",
            expected: n_t,
            found: n_r,
        });
    }
    check_len("power split", n_t, split.len())?;
    let h_oam = oam_channel(&h, transforms);
    let h_diag: Vec<Complex64> = (0..n_t).map(|l| h_oam[(l, l)]).collect();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let batches = if n_symbols >= 2 * SIM_BATCHES { SIM_BATCHES } else { 1 };
    let batch_len = n_symbols / batches;

    let mut acc = vec![ModeAccumulator::default(); n_t];
    let mut batch_acc = vec![ModeAccumulator::default(); n_t];
    let mut batch_sinr = vec![Vec::with_capacity(batches); n_t];

    for k in 0..n_symbols {
        let x = CVector::from_fn(n_t, |_, _| cgauss(&mut rng, 1.0));
        let n = CVector::from_fn(n_r, |_, _| cgauss(&mut rng, noise.antenna));
        let n_cov = CVector::from_fn(n_t, |_, _| cgauss(&mut rng, noise.conversion));
        let s = modulate(&x, alloc, transforms)?;
        let r = &h * s + n;
        let y = demodulate(&r, transforms)?;
        let x_hat = recover(&y, &n_cov, &h_diag, split, alloc)?;
        for l in 0..n_t {
            acc[l].push(x_hat[l], x[l]);
            batch_acc[l].push(x_hat[l], x[l]);
        }
        let batch_idx = k / batch_len;
        if (k + 1) % batch_len == 0 && batch_idx < batches {
            for l in 0..n_t {
                batch_sinr[l].push(batch_acc[l].sinr());
                batch_acc[l] = ModeAccumulator::default();
            }
        }
    }

    let sinr = acc.iter().map(ModeAccumulator::sinr).collect();
    let std_error = batch_sinr
        .iter()
        .map(|values| {
            if values.len() < 2 {
                return f64::INFINITY;
            }
            let m = values.len() as f64;
            let mean = values.iter().sum::<f64>() / m;
            let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (m - 1.0);
            (var / m).sqrt()
        })
        .collect();
    Ok(LinkSimulation {
        sinr,
        std_error,
        symbols: n_symbols,
    })
}

#[derive(Debug, Clone, Copy, Default)]
struct ModeAccumulator {
    cross: Complex64,
    power: f64,
    symbol_power: f64,
    count: usize,
}

impl ModeAccumulator {
    fn push(&mut self, estimate: Complex64, symbol: Complex64) {
        self.cross += estimate * symbol.conj();
        self.power += estimate.norm_sqr();
        self.symbol_power += symbol.norm_sqr();
        self.count += 1;
    }

    fn sinr(&self) -> f64 {
        let n = self.count as f64;
        let s = self.symbol_power / n;
        if s <= 0.0 {
            return 0.0;
        }
        // project the estimate onto the transmitted symbols
        let c = self.cross / n;
        let total = self.power / n;
        let captured = c.norm_sqr() / s;
        let residual = (total - captured).max(0.0);
        let signal = (captured - residual / n).max(0.0);
        if residual <= total * 1e-24 {
            return if signal > 0.0 { SINR_CAP } else { 0.0 };
        }
        (signal / residual).min(SINR_CAP)
    }
}

/// Circularly-symmetric complex Gaussian with variance `power`.
pub(crate) fn cgauss<R: Rng + ?Sized>(rng: &mut R, power: f64) -> Complex64 {
    let scale = (power / 2.0).sqrt();
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(re * scale, im * scale)
}

fn check_len(what: &'static str, expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::DimensionMismatch {
            what,
            expected,
            found,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::unitarity_error;
    use std::f64::consts::FRAC_1_SQRT_2;

    #[test]
    fn two_point_idft() {
        let t = TransformPair::oam(2, 2);
        let expected = CMatrix::from_row_slice(
            2,
            2,
            &[
                Complex64::new(FRAC_1_SQRT_2, 0.0),
                Complex64::new(FRAC_1_SQRT_2, 0.0),
                Complex64::new(FRAC_1_SQRT_2, 0.0),
                Complex64::new(-FRAC_1_SQRT_2, 0.0),
            ],
        );
        assert!((&t.w - expected).norm() < 1e-15);
    }

    #[test]
    fn unitary_and_conjugate() {
        for n in 1..=16 {
            let t = TransformPair::oam(n, n);
            assert!(unitarity_error(&t.w) < 1e-12);
            assert!(unitarity_error(&t.w_prime) < 1e-12);
            assert!((t.w[(0, 0)].re - 1.0 / (n as f64).sqrt()).abs() < 1e-15);
            assert!((&t.w_prime - t.w.adjoint()).norm() < 1e-12);
            // W' W = I
            let prod = &t.w_prime * &t.w;
            assert!((prod - CMatrix::identity(n, n)).norm() < 1e-12);
        }
        let t = TransformPair::oam(4, 6);
        assert_eq!(t.w.shape(), (4, 4));
        assert_eq!(t.w_prime.shape(), (6, 6));
    }

    #[test]
    fn modulate_first_mode_has_flat_magnitude() {
        let t = TransformPair::oam(8, 8);
        let alloc = PowerAllocation::uniform(2.0, 8);
        let mut x = CVector::zeros(8);
        x[0] = Complex64::new(1.0, 0.0);
        let s = modulate(&x, &alloc, &t).unwrap();
        let expected = (2.0f64 / 8.0).sqrt() / 8f64.sqrt();
        assert!(s.iter().all(|v| (v.norm() - expected).abs() < 1e-14));
        let zero = modulate(&CVector::zeros(8), &alloc, &t).unwrap();
        assert_eq!(zero.norm(), 0.0);
    }

    #[test]
    fn modulate_preserves_energy() {
        let t = TransformPair::oam(5, 5);
        let alloc = PowerAllocation::custom(vec![0.5, 1.0, 0.0, 2.0, 0.25]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = CVector::from_fn(5, |_, _| cgauss(&mut rng, 1.0));
        let s = modulate(&x, &alloc, &t).unwrap();
        let expected: f64 = (0..5).map(|l| alloc.per_mode()[l] * x[l].norm_sqr()).sum();
        assert!((s.norm_squared() - expected).abs() < 1e-12);
        assert!(matches!(
            modulate(&CVector::zeros(4), &alloc, &t),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn identity_chain_roundtrip() {
        let t = TransformPair::oam(6, 6);
        let alloc = PowerAllocation::uniform(6.0, 6);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let x = CVector::from_fn(6, |_, _| cgauss(&mut rng, 1.0));
        let y = demodulate(&modulate(&x, &alloc, &t).unwrap(), &t).unwrap();
        assert!((y - &x).norm() < 1e-12);
    }

    #[test]
    fn recover_zero_diagonal_gives_zero() {
        let split = PowerSplit::zeros(2);
        let alloc = PowerAllocation::uniform(2.0, 2);
        let y = CVector::from_element(2, Complex64::new(1.0, 1.0));
        let n = CVector::zeros(2);
        let h = [Complex64::new(2.0, 0.0), ZERO];
        let x = recover(&y, &n, &h, &split, &alloc).unwrap();
        assert!((x[0] - Complex64::new(0.5, 0.5)).norm() < 1e-15);
        assert_eq!(x[1], ZERO);
    }
}
