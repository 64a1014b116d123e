//! GNSS-independent coastal positioning and GNSS integrity monitoring.
//!
//! A first stage matches radar shoreline returns against a vector chart with a
//! likelihood field, searched by particle swarm optimization. A second stage
//! refines the fix by resection on charted landmarks detected as static radar
//! targets. The distance between the GNSS fix and the radar/chart fix forms a
//! residual monitored by two parallel double-window GLRT change detectors, one
//! Gaussian and one kernel-density based.

// `!(x > 0.0)` is used on purpose so NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod chart;
pub mod detect;
pub mod error;
pub mod geodesy;
pub mod landmark;
pub mod lfm;
pub mod radarsim;
pub mod scenario;
pub mod scenes;

pub use chart::{Chart, Landmark, ShorelineSamples};
pub use error::{Error, Result};
pub use geodesy::{GeodeticPoint, NedPoint, Pose, TangentPlane};
