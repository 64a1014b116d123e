//! Synthetic radar: shoreline scans and static-target detections.
//!
//! The pose is held constant for the duration of one antenna revolution.

use crate::chart::{Landmark, ShorelineSamples};
use crate::error::{Error, Result};
use crate::geodesy::{wrap_pi, wrap_two_pi, NedPoint, Pose, TangentPlane};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use std::f64::consts::TAU;
use std::path::Path;

/// One radar return.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RadarObservation {
    pub spoke: u32,
    /// meters, in `(0, rho_max]`
    pub range: f64,
    /// radians clockwise from the heading, in `[0, 2π)`
    pub bearing: f64,
}

/// Returns collected over one full revolution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadarScan {
    pub observations: Vec<RadarObservation>,
    pub rho_max: f64,
    pub timestamp: f64,
}

impl RadarScan {
    pub fn len(&self) -> usize {
        self.observations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.observations.is_empty()
    }

    /// Writes the `spoke_index, range_m, bearing_rad` dump.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = csv::Writer::from_path(path.as_ref())?;
        w.write_record(["spoke_index", "range_m", "bearing_rad"])?;
        for o in &self.observations {
            w.write_record([
                o.spoke.to_string(),
                o.range.to_string(),
                o.bearing.to_string(),
            ])?;
        }
        w.flush().map_err(|e| Error::io(path.as_ref(), e))?;
        Ok(())
    }

    pub fn read_csv(path: impl AsRef<Path>, rho_max: f64) -> Result<Self> {
        #[derive(Deserialize)]
        struct Row {
            spoke_index: u32,
            range_m: f64,
            bearing_rad: f64,
        }
        let mut r = csv::Reader::from_path(path.as_ref())?;
        let mut observations = Vec::new();
        for row in r.deserialize() {
            let row: Row = row?;
            if !(row.range_m > 0.0 && row.range_m <= rho_max) {
                return Err(Error::Config(format!(
                    "{}: range {} outside (0, {rho_max}]",
                    path.as_ref().display(),
                    row.range_m
                )));
            }
            observations.push(RadarObservation {
                spoke: row.spoke_index,
                range: row.range_m,
                bearing: wrap_two_pi(row.bearing_rad),
            });
        }
        Ok(RadarScan {
            observations,
            rho_max,
            timestamp: 0.0,
        })
    }
}

/// Forward radar model parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RadarNoiseParams {
    pub p_detect: f64,
    pub sigma_range: f64,
    /// Bearing noise of static-target detections, radians.
    pub sigma_bearing: f64,
    pub p_clutter_per_spoke: f64,
    pub n_spokes: u32,
    pub rho_max: f64,
}

impl Default for RadarNoiseParams {
    fn default() -> Self {
        RadarNoiseParams {
            p_detect: 0.9,
            sigma_range: 10.0,
            sigma_bearing: 0.3f64.to_radians(),
            p_clutter_per_spoke: 0.1,
            n_spokes: 360,
            rho_max: 5000.0,
        }
    }
}

impl RadarNoiseParams {
    pub fn noise_free(self) -> Self {
        RadarNoiseParams {
            p_detect: 1.0,
            sigma_range: 0.0,
            sigma_bearing: 0.0,
            p_clutter_per_spoke: 0.0,
            ..self
        }
    }

    pub fn validate(&self) -> Result<()> {
        let prob = |p: f64| (0.0..=1.0).contains(&p);
        if !prob(self.p_detect) || !prob(self.p_clutter_per_spoke) {
            return Err(Error::Config("radar probabilities must lie in [0, 1]".into()));
        }
        if !(self.sigma_range >= 0.0 && self.sigma_bearing >= 0.0) {
            return Err(Error::Config("radar noise deviations must be non-negative".into()));
        }
        if self.n_spokes == 0 || !(self.rho_max > 0.0) {
            return Err(Error::Config("radar needs n_spokes >= 1 and rho_max > 0".into()));
        }
        Ok(())
    }
}

/// A detected zero-velocity target (buoy, beacon).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StaticTarget {
    pub range: f64,
    pub bearing: f64,
    pub range_var: f64,
    pub bearing_var: f64,
    /// Landmark that produced the detection. Simulation ground truth only;
    /// estimators never read it.
    #[serde(default)]
    pub source: Option<String>,
}

impl StaticTarget {
    pub fn new(range: f64, bearing: f64, range_var: f64, bearing_var: f64) -> Self {
        StaticTarget {
            range,
            bearing,
            range_var,
            bearing_var,
            source: None,
        }
    }
}

/// Range along each spoke to the nearest shoreline crossing, if within `rho_max`.
pub fn spoke_ranges(true_pose: &Pose, samples: &ShorelineSamples, n_spokes: u32, rho_max: f64) -> Vec<Option<f64>> {
    let n = n_spokes as usize;
    let step = TAU / n as f64;
    let ship = samples.plane().to_ned(true_pose.position);
    let heading = true_pose.heading;
    let mut best = vec![f64::INFINITY; n];

    for (a, b) in samples.segments() {
        let a = a - ship;
        let b = b - ship;
        let d = b - a;
        let ua = wrap_two_pi(a.azimuth() - heading) / step;
        let du = wrap_pi(b.azimuth() - a.azimuth()) / step;
        let (lo, hi) = if du >= 0.0 { (ua, ua + du) } else { (ua + du, ua) };
        let k_lo = (lo - 1e-9).ceil() as i64;
        let k_hi = (hi + 1e-9).floor() as i64;
        for k in k_lo..=k_hi {
            let spoke = k.rem_euclid(n as i64) as usize;
            let dir = NedPoint::polar(1.0, heading + spoke as f64 * step);
            let denom = cross(dir, d);
            if denom == 0.0 {
                continue;
            }
            let r = cross(a, d) / denom;
            let t = cross(a, dir) / denom;
            if r > 0.0 && (-1e-9..=1.0 + 1e-9).contains(&t) && r < best[spoke] {
                best[spoke] = r;
            }
        }
    }
    best.into_iter()
        .map(|r| (r <= rho_max).then_some(r))
        .collect()
}

fn cross(u: NedPoint, v: NedPoint) -> f64 {
    u.north * v.east - u.east * v.north
}

/// Synthesizes one 360° scan from the true pose.
///
/// Per spoke: with probability `p_detect` the nearest shoreline crossing is
/// returned with Gaussian range noise, and with probability
/// `p_clutter_per_spoke` an extra return uniform on `(0, rho_max]` is added.
pub fn cast_scan(
    true_pose: &Pose,
    samples: &ShorelineSamples,
    noise: &RadarNoiseParams,
    rng_seed: u64,
) -> RadarScan {
    let n = noise.n_spokes as usize;
    let step = TAU / n as f64;
    let rho_max = noise.rho_max;
    let ranges = spoke_ranges(true_pose, samples, noise.n_spokes, rho_max);
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let mut observations = Vec::new();

    for (spoke, range) in ranges.into_iter().enumerate() {
        // fixed draw count per spoke keeps streams aligned across settings
        let u_detect: f64 = rng.random();
        let z: f64 = rng.sample(StandardNormal);
        let u_clutter: f64 = rng.random();
        let u_range: f64 = rng.random();
        let bearing = spoke as f64 * step;

        if let Some(r) = range {
            if u_detect < noise.p_detect {
                let noisy = (r + noise.sigma_range * z).clamp(1e-6, rho_max);
                observations.push(RadarObservation {
                    spoke: spoke as u32,
                    range: noisy,
                    bearing,
                });
            }
        }
        if u_clutter < noise.p_clutter_per_spoke {
            observations.push(RadarObservation {
                spoke: spoke as u32,
                range: rho_max * (1.0 - u_range),
                bearing,
            });
        }
    }
    RadarScan {
        observations,
        rho_max,
        timestamp: 0.0,
    }
}

/// Simulated output of the static-target tracker.
///
/// Each landmark within `rho_max` of the true pose is detected with
/// probability `p_detect`, with independent Gaussian range and bearing noise.
/// Reported variances equal the generating ones.
pub fn detect_static_targets(
    true_pose: &Pose,
    landmarks: &[Landmark],
    noise: &RadarNoiseParams,
    rng_seed: u64,
) -> Vec<StaticTarget> {
    let plane = TangentPlane::new(true_pose.position);
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let mut out = Vec::new();
    for l in landmarks {
        let u: f64 = rng.random();
        let zr: f64 = rng.sample(StandardNormal);
        let zb: f64 = rng.sample(StandardNormal);
        let v = plane.to_ned(l.position);
        let range = v.norm();
        if range > noise.rho_max || range == 0.0 || u >= noise.p_detect {
            continue;
        }
        let bearing = wrap_two_pi(v.azimuth() - true_pose.heading + noise.sigma_bearing * zb);
        out.push(StaticTarget {
            range: (range + noise.sigma_range * zr).max(1e-6),
            bearing,
            range_var: noise.sigma_range * noise.sigma_range,
            bearing_var: noise.sigma_bearing * noise.sigma_bearing,
            source: Some(l.id.clone()),
        });
    }
    out
}
