//! Element placement for the transmit UCA, the receive UCA and the RIS.
//!
//! The transmit UCA sits in the `z = 0` plane centred on the origin, with its
//! first element on the positive `x` axis. The receive UCA is centred at
//! `(d_x, d_y, D)` and the RIS at `(p_x, p_y, p_z)`; both may be tilted
//! about the `x` and `y` axes. Each tilted array is described by an
//! [`OrientationFrame`] whose `a`/`b` vectors span the array plane.
//!
//! Lengths are in meters and angles in radians.

use std::f64::consts::{FRAC_PI_2, PI};

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tilt angles closer than this to `π/2` are treated as exactly `π/2`.
const RIGHT_ANGLE_TOL: f64 = 1e-12;

/// Layout parameters of the whole link.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SystemGeometry {
    /// Transmit UCA element count `N_t`.
    pub tx_elements: usize,
    /// Receive UCA element count `N_r`.
    pub rx_elements: usize,
    pub tx_radius: f64,
    pub rx_radius: f64,
    /// Receive UCA centre `(d_x, d_y, D)`.
    pub rx_offset_x: f64,
    pub rx_offset_y: f64,
    pub rx_distance: f64,
    pub rx_tilt_x: f64,
    pub rx_tilt_y: f64,
    /// RIS centre `(p_x, p_y, p_z)`.
    pub ris_center: [f64; 3],
    pub ris_tilt_x: f64,
    pub ris_tilt_y: f64,
    /// RIS rows `N_I^r`. Zero rows or columns means no RIS is deployed.
    pub ris_rows: usize,
    pub ris_cols: usize,
    pub ris_spacing: f64,
}

impl Default for SystemGeometry {
    /// 8-element UCAs of radius 0.1 m facing each other at 20 m, with a 4×4
    /// RIS of 0.025 m pitch at `(0, -0.2, 0.4)` whose normal points along `y`.
    fn default() -> Self {
        Self {
            tx_elements: 8,
            rx_elements: 8,
            tx_radius: 0.1,
            rx_radius: 0.1,
            rx_offset_x: 0.0,
            rx_offset_y: 0.0,
            rx_distance: 20.0,
            rx_tilt_x: 0.0,
            rx_tilt_y: 0.0,
            ris_center: [0.0, -0.2, 0.4],
            ris_tilt_x: 0.0,
            ris_tilt_y: FRAC_PI_2,
            ris_rows: 4,
            ris_cols: 4,
            ris_spacing: 0.025,
        }
    }
}

impl SystemGeometry {
    pub fn with_ris(mut self, rows: usize, cols: usize) -> Self {
        self.ris_rows = rows;
        self.ris_cols = cols;
        self
    }

    pub fn without_ris(self) -> Self {
        self.with_ris(0, 0)
    }

    pub fn ris_elements(&self) -> usize {
        self.ris_rows * self.ris_cols
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidGeometry(msg));
        if self.tx_elements == 0 || self.rx_elements == 0 {
            return bad("UCA element counts must be at least 1".into());
        }
        for (name, value) in [
            ("tx_radius", self.tx_radius),
            ("rx_radius", self.rx_radius),
            ("rx_distance", self.rx_distance),
            ("ris_spacing", self.ris_spacing),
        ] {
            if !(value.is_finite() && value > 0.0) {
                return bad(format!("{name} must be positive and finite, got {value}"));
            }
        }
        let finite = [self.rx_offset_x, self.rx_offset_y]
            .iter()
            .chain(self.ris_center.iter())
            .all(|v| v.is_finite());
        if !finite {
            return bad("offsets and RIS centre must be finite".into());
        }
        for (name, angle) in [
            ("rx_tilt_x", self.rx_tilt_x),
            ("rx_tilt_y", self.rx_tilt_y),
            ("ris_tilt_x", self.ris_tilt_x),
            ("ris_tilt_y", self.ris_tilt_y),
        ] {
            check_tilt(name, angle)?;
        }
        if is_right_angle(self.rx_tilt_x) && is_right_angle(self.rx_tilt_y) {
            return Err(Error::DegenerateOrientation {
                theta_x: self.rx_tilt_x,
                theta_y: self.rx_tilt_y,
            });
        }
        if is_right_angle(self.ris_tilt_x) && is_right_angle(self.ris_tilt_y) {
            return Err(Error::DegenerateOrientation {
                theta_x: self.ris_tilt_x,
                theta_y: self.ris_tilt_y,
            });
        }
        Ok(())
    }
}

fn check_tilt(name: &str, angle: f64) -> Result<()> {
    if angle.is_finite() && (-RIGHT_ANGLE_TOL..=FRAC_PI_2 + RIGHT_ANGLE_TOL).contains(&angle) {
        Ok(())
    } else {
        Err(Error::InvalidGeometry(format!(
            "{name} = {angle} is outside [0, pi/2]"
        )))
    }
}

fn is_right_angle(angle: f64) -> bool {
    (angle - FRAC_PI_2).abs() <= RIGHT_ANGLE_TOL
}

/// Orthonormal frame of a tilted planar array.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OrientationFrame {
    pub a: Vector3<f64>,
    pub b: Vector3<f64>,
    pub normal: Vector3<f64>,
}

/// Frame for an array tilted by `theta_x`, `theta_y`.
///
/// The normal is the direction of `(tan θ_x, tan θ_y, 1)`; when one angle is
/// exactly `π/2` it degenerates to the matching coordinate axis. `a` is
/// `normal × x̂` (or `normal × ŷ` when the normal is along `x`) and
/// `b = normal × a`.
pub fn orientation_frame(theta_x: f64, theta_y: f64) -> Result<OrientationFrame> {
    check_tilt("theta_x", theta_x)?;
    check_tilt("theta_y", theta_y)?;
    let degenerate = Error::DegenerateOrientation { theta_x, theta_y };
    let normal = match (is_right_angle(theta_x), is_right_angle(theta_y)) {
        (true, true) => return Err(degenerate),
        (true, false) => Vector3::x(),
        (false, true) => Vector3::y(),
        (false, false) => Vector3::new(theta_x.tan(), theta_y.tan(), 1.0).normalize(),
    };
    let mut a = normal.cross(&Vector3::x());
    if a.norm() < 1e-9 {
        a = normal.cross(&Vector3::y());
    }
    if a.norm() < 1e-9 {
        return Err(degenerate);
    }
    let a = a.normalize();
    let b = normal.cross(&a).normalize();
    Ok(OrientationFrame { a, b, normal })
}

/// `arctan √(tan²θ_x + tan²θ_y)`, the angle between an array normal and `z`.
pub fn deflection_angle(theta_x: f64, theta_y: f64) -> f64 {
    if is_right_angle(theta_x) || is_right_angle(theta_y) {
        FRAC_PI_2
    } else {
        theta_x.tan().hypot(theta_y.tan()).atan()
    }
}

/// Element coordinates of all three arrays.
#[derive(Debug, Clone, PartialEq)]
pub struct ElementLayout {
    pub tx: Vec<Vector3<f64>>,
    pub rx: Vec<Vector3<f64>>,
    pub ris: Vec<Vector3<f64>>,
    pub rx_frame: OrientationFrame,
    pub ris_frame: OrientationFrame,
    /// Angle between the transmit and receive UCA normals.
    pub rx_deflection: f64,
    /// Angle between the transmit UCA and RIS normals.
    pub ris_deflection: f64,
}

pub fn element_layout(geom: &SystemGeometry) -> Result<ElementLayout> {
    geom.validate()?;
    let rx_frame = orientation_frame(geom.rx_tilt_x, geom.rx_tilt_y)?;
    let ris_frame = orientation_frame(geom.ris_tilt_x, geom.ris_tilt_y)?;

    let tx = (0..geom.tx_elements)
        .map(|n| {
            let angle = 2.0 * PI * n as f64 / geom.tx_elements as f64;
            Vector3::new(geom.tx_radius * angle.cos(), geom.tx_radius * angle.sin(), 0.0)
        })
        .collect();

    let rx_center = Vector3::new(geom.rx_offset_x, geom.rx_offset_y, geom.rx_distance);
    let rx = (0..geom.rx_elements)
        .map(|n| {
            let angle = 2.0 * PI * n as f64 / geom.rx_elements as f64;
            rx_center - rx_frame.b * (geom.rx_radius * angle.cos())
                + rx_frame.a * (geom.rx_radius * angle.sin())
        })
        .collect();

    let ris_center = Vector3::from(geom.ris_center);
    let d = geom.ris_spacing;
    let col_shift = d * (geom.ris_cols as f64 - 1.0) / 2.0;
    let row_shift = d * (geom.ris_rows as f64 - 1.0) / 2.0;
    let ris = (0..geom.ris_elements())
        .map(|n| {
            let col = (n % geom.ris_cols) as f64;
            let row = (n / geom.ris_cols) as f64;
            ris_center - ris_frame.b * (col * d - col_shift) + ris_frame.a * (row * d - row_shift)
        })
        .collect();

    Ok(ElementLayout {
        tx,
        rx,
        ris,
        rx_frame,
        ris_frame,
        rx_deflection: deflection_angle(geom.rx_tilt_x, geom.rx_tilt_y),
        ris_deflection: deflection_angle(geom.ris_tilt_x, geom.ris_tilt_y),
    })
}
