//! Free-space channel synthesis and composition.

use std::f64::consts::PI;
use std::io::Write;

use nalgebra::Vector3;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::ElementLayout;
use crate::linalg::{CMatrix, CVector, ONE};
use crate::transform::TransformPair;

/// Propagation constants shared by every link.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PropagationParams {
    /// Antenna-pattern constant `β`.
    pub beta: f64,
    /// Carrier wavelength in meters.
    pub wavelength: f64,
    /// LOS power attenuation `K` in `[0, 1]`; the LOS amplitude is scaled by `√K`.
    pub los_attenuation: f64,
}

impl Default for PropagationParams {
    fn default() -> Self {
        Self {
            beta: 1.0,
            wavelength: 0.05,
            los_attenuation: 1.0,
        }
    }
}

impl PropagationParams {
    pub fn with_attenuation(mut self, k: f64) -> Self {
        self.los_attenuation = k;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.wavelength.is_finite() && self.wavelength > 0.0) {
            return Err(Error::InvalidParams(format!(
                "wavelength must be positive, got {}",
                self.wavelength
            )));
        }
        if !(self.beta.is_finite() && self.beta > 0.0) {
            return Err(Error::InvalidParams(format!(
                "beta must be positive, got {}",
                self.beta
            )));
        }
        if !(0.0..=1.0).contains(&self.los_attenuation) {
            return Err(Error::InvalidParams(format!(
                "LOS attenuation must lie in [0, 1], got {}",
                self.los_attenuation
            )));
        }
        Ok(())
    }

    /// `β λ / (4π d) · exp(-j 2π d / λ)`.
    pub fn free_space(&self, distance: f64) -> Complex64 {
        let magnitude = self.beta * self.wavelength / (4.0 * PI * distance);
        let phase = -2.0 * PI * (distance / self.wavelength).fract();
        Complex64::from_polar(magnitude, phase)
    }
}

/// Incident (Tx→RIS), reflected (RIS→Rx) and direct (Tx→Rx) channels.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelSet {
    /// `H^In`, N_I×N_t.
    pub incident: CMatrix,
    /// `H^Ref`, N_r×N_I.
    pub reflected: CMatrix,
    /// `H^LOS`, N_r×N_t.
    pub los: CMatrix,
    pub params: PropagationParams,
}

impl ChannelSet {
    pub fn tx_len(&self) -> usize {
        self.los.ncols()
    }

    pub fn rx_len(&self) -> usize {
        self.los.nrows()
    }

    pub fn ris_len(&self) -> usize {
        self.incident.nrows()
    }

    /// Same channels with a different LOS attenuation.
    pub fn with_attenuation(&self, k: f64) -> Result<Self> {
        let params = self.params.with_attenuation(k);
        params.validate()?;
        Ok(Self {
            params,
            ..self.clone()
        })
    }

    /// Same LOS channel with the RIS removed.
    pub fn without_ris(&self) -> Self {
        Self {
            incident: CMatrix::zeros(0, self.tx_len()),
            reflected: CMatrix::zeros(self.rx_len(), 0),
            los: self.los.clone(),
            params: self.params,
        }
    }
}

fn link_matrix(
    name: &'static str,
    to: &[Vector3<f64>],
    from: &[Vector3<f64>],
    params: &PropagationParams,
) -> Result<CMatrix> {
    let mut m = CMatrix::zeros(to.len(), from.len());
    for (row, p) in to.iter().enumerate() {
        for (col, q) in from.iter().enumerate() {
            let distance = (p - q).norm();
            if distance <= 0.0 {
                return Err(Error::CoincidentElements {
                    matrix: name,
                    row,
                    col,
                });
            }
            m[(row, col)] = params.free_space(distance);
        }
    }
    Ok(m)
}

pub fn build_channels(layout: &ElementLayout, params: &PropagationParams) -> Result<ChannelSet> {
    params.validate()?;
    Ok(ChannelSet {
        incident: link_matrix("H_in", &layout.ris, &layout.tx, params)?,
        reflected: link_matrix("H_ref", &layout.rx, &layout.ris, params)?,
        los: link_matrix("H_los", &layout.rx, &layout.tx, params)?,
        params: *params,
    })
}

/// Unit-modulus RIS reflection coefficients.
#[derive(Debug, Clone, PartialEq)]
pub struct ReflectionState {
    phi: CVector,
}

impl ReflectionState {
    pub const UNIT_TOL: f64 = 1e-9;

    pub fn new(phi: CVector) -> Result<Self> {
        for (index, v) in phi.iter().enumerate() {
            let modulus = v.norm();
            if !((modulus - 1.0).abs() <= Self::UNIT_TOL) {
                return Err(Error::NotUnitModulus { index, modulus });
            }
        }
        Ok(Self { phi })
    }

    pub fn from_phases(phases: &[f64]) -> Self {
        Self {
            phi: CVector::from_iterator(phases.len(), phases.iter().map(|&p| Complex64::cis(p))),
        }
    }

    pub fn ones(n: usize) -> Self {
        Self {
            phi: CVector::from_element(n, ONE),
        }
    }

    pub fn len(&self) -> usize {
        self.phi.len()
    }

    pub fn is_empty(&self) -> bool {
        self.phi.is_empty()
    }

    pub fn as_vector(&self) -> &CVector {
        &self.phi
    }

    pub fn phases(&self) -> Vec<f64> {
        self.phi.iter().map(|v| v.arg()).collect()
    }
}

/// `√K H^LOS`, the channel with no reflected contribution.
pub fn direct_channel(channels: &ChannelSet) -> CMatrix {
    channels.los.scale(channels.params.los_attenuation.sqrt())
}

/// `√K H^LOS + H^Ref diag(φ) H^In`.
pub fn compose(channels: &ChannelSet, refl: &ReflectionState) -> Result<CMatrix> {
    if refl.len() != channels.ris_len() {
        return Err(Error::DimensionMismatch {
            what: "reflection vector",
            expected: channels.ris_len(),
            found: refl.len(),
        });
    }
    let mut scaled = channels.incident.clone();
    for (mut row, phi) in scaled.row_iter_mut().zip(refl.phi.iter()) {
        row *= *phi;
    }
    Ok(direct_channel(channels) + &channels.reflected * scaled)
}

/// `W' H W`.
pub fn oam_channel(h: &CMatrix, transforms: &TransformPair) -> CMatrix {
    &transforms.w_prime * h * &transforms.w
}

/// Writes every channel entry as `matrix,row,col,re,im` CSV rows.
pub fn write_channel_csv<W: Write>(channels: &ChannelSet, out: W) -> csv::Result<()> {
    let mut writer = csv::Writer::from_writer(out);
    writer.write_record(["matrix", "row", "col", "re", "im"])?;
    for (name, m) in [
        ("H_in", &channels.incident),
        ("H_ref", &channels.reflected),
        ("H_los", &channels.los),
    ] {
        for r in 0..m.nrows() {
            for c in 0..m.ncols() {
                let v = m[(r, c)];
                writer.write_record([
                    name.to_string(),
                    r.to_string(),
                    c.to_string(),
                    v.re.to_string(),
                    v.im.to_string(),
                ])?;
            }
        }
    }
    writer.flush()?;
    Ok(())
}
