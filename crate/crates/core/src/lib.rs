//! Simulation and joint optimization of a RIS-assisted OAM-SWIPT link.
//!
//! A transmit UCA sends several OAM modes (unit IDFT across its elements) to
//! a receive UCA over a direct free-space path and a path reflected by a
//! reconfigurable intelligent surface. Each demodulated mode is split into an
//! information branch and an energy-harvesting branch. The crate maximizes
//! the sum rate over the RIS phases and the per-mode splitting ratios
//! subject to a minimum harvested power.

// `!(x > 0.0)` is used on purpose so NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod alternating;
pub mod baselines;
pub mod channel;
pub mod error;
pub mod experiments;
pub mod geometry;
pub mod linalg;
pub mod metrics;
pub mod reflect;
pub mod split;
pub mod transform;

pub use alternating::{optimize, optimize_channels, OptimizationOptions, OptimizationReport, Termination};
pub use baselines::{evaluate_baseline, BaselineKind};
pub use channel::{build_channels, compose, oam_channel, ChannelSet, PropagationParams, ReflectionState};
pub use error::{Error, Result};
pub use geometry::{element_layout, orientation_frame, ElementLayout, OrientationFrame, SystemGeometry};
pub use metrics::{LinkBudget, LinkMetrics, LogBase, PowerSplit};
pub use transform::{NoiseModel, PowerAllocation, TransformPair};
