//! First-stage estimator: likelihood field model, EM fitting and a particle
//! swarm search over the pose offset.

use crate::chart::{Chart, ShorelineSamples};
use crate::error::{Error, Result};
use crate::geodesy::{wrap_pi, GeodeticPoint, NedPoint, Pose, TangentPlane};
use crate::radarsim::{RadarObservation, RadarScan};
use nalgebra::{Matrix2, Matrix3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::path::Path;

const SQRT_2PI: f64 = 2.5066282746310002;

/// Used in place of the clutter floor when `p_random` is zero.
const MIN_DENSITY: f64 = 1e-300;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LfmParams {
    pub p_hit: f64,
    pub p_random: f64,
    pub sigma_lfm: f64,
    pub rho_max: f64,
}

impl Default for LfmParams {
    fn default() -> Self {
        LfmParams {
            p_hit: 0.9,
            p_random: 0.1,
            sigma_lfm: 25.0,
            rho_max: 5000.0,
        }
    }
}

impl LfmParams {
    /// `p_random` is set to `1 - p_hit`.
    pub fn new(p_hit: f64, sigma_lfm: f64, rho_max: f64) -> Result<Self> {
        let p = LfmParams {
            p_hit,
            p_random: 1.0 - p_hit,
            sigma_lfm,
            rho_max,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.p_hit) || !(0.0..=1.0).contains(&self.p_random) {
            return Err(Error::Config("LFM weights must lie in [0, 1]".into()));
        }
        if (self.p_hit + self.p_random - 1.0).abs() > 1e-9 {
            return Err(Error::Config(format!(
                "LFM weights must sum to 1, got {} + {}",
                self.p_hit, self.p_random
            )));
        }
        if !(self.sigma_lfm > 0.0) || !(self.rho_max > 0.0) {
            return Err(Error::Config("sigma_lfm and rho_max must be positive".into()));
        }
        Ok(())
    }

    /// Clutter density `p_random / rho_max`, the lower bound of the likelihood.
    pub fn floor(&self) -> f64 {
        self.p_random / self.rho_max
    }

    fn hit_density(&self, d: f64) -> f64 {
        let s = self.sigma_lfm;
        self.p_hit / (SQRT_2PI * s) * (-0.5 * (d / s) * (d / s)).exp()
    }

    /// Mixture density at distance `d` from the nearest shoreline sample.
    pub fn density(&self, d: f64) -> f64 {
        self.hit_density(d) + self.floor()
    }

    fn log_term(&self, d: f64) -> f64 {
        self.density(d).max(self.floor().max(MIN_DENSITY)).ln()
    }

    /// Distance beyond which the hit term is below `rel` times the floor.
    fn cutoff(&self, rel: f64) -> f64 {
        if self.p_hit == 0.0 {
            return 0.0;
        }
        let floor = self.floor().max(MIN_DENSITY);
        let peak = self.p_hit / (SQRT_2PI * self.sigma_lfm);
        let ratio = peak / (rel * floor);
        if ratio <= 1.0 {
            0.0
        } else {
            self.sigma_lfm * (2.0 * ratio.ln()).sqrt()
        }
    }
}

/// Pose correction applied to a prior: NED shift plus heading change.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PoseOffset {
    pub dn: f64,
    pub de: f64,
    pub dpsi: f64,
}

impl PoseOffset {
    pub fn new(dn: f64, de: f64, dpsi: f64) -> Self {
        PoseOffset { dn, de, dpsi }
    }

    fn to_array(self) -> [f64; 3] {
        [self.dn, self.de, self.dpsi]
    }

    fn from_array(a: [f64; 3]) -> Self {
        PoseOffset::new(a[0], a[1], wrap_pi(a[2]))
    }

    /// `prior ⊕ self`.
    pub fn apply(&self, prior: &Pose) -> Pose {
        let plane = TangentPlane::new(prior.position);
        Pose::new(
            plane.to_geo(NedPoint::new(self.dn, self.de)),
            prior.heading + self.dpsi,
        )
    }

    /// Offset that takes `prior` to `target`, in the prior's tangent plane.
    pub fn between(prior: &Pose, target: &Pose) -> Self {
        let d = TangentPlane::new(prior.position).to_ned(target.position);
        PoseOffset::new(d.north, d.east, wrap_pi(target.heading - prior.heading))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PsoConfig {
    pub n_particles: usize,
    pub n_iters: usize,
    pub inertia: f64,
    pub cognitive: f64,
    pub social: f64,
    pub lower: PoseOffset,
    pub upper: PoseOffset,
    pub rng_seed: u64,
    /// Start particle 0 at the box centre instead of a random point.
    pub seed_center: bool,
}

impl Default for PsoConfig {
    fn default() -> Self {
        PsoConfig {
            n_particles: 24,
            n_iters: 40,
            inertia: 0.72,
            cognitive: 1.49,
            social: 1.49,
            lower: PoseOffset::new(-500.0, -500.0, -0.2),
            upper: PoseOffset::new(500.0, 500.0, 0.2),
            rng_seed: 0,
            seed_center: true,
        }
    }
}

impl PsoConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_particles == 0 {
            return Err(Error::Config("PSO needs at least one particle".into()));
        }
        let (lo, hi) = (self.lower.to_array(), self.upper.to_array());
        if lo.iter().zip(&hi).any(|(l, h)| !(h > l) || !l.is_finite() || !h.is_finite()) {
            return Err(Error::Config("PSO bounds must be finite with lower < upper".into()));
        }
        if hi[2] > PI || lo[2] < -PI {
            return Err(Error::Config("PSO heading bounds must lie within ±π".into()));
        }
        Ok(())
    }
}

/// Maximizes `objective` over the configured box with a global-best particle swarm.
///
/// Particles are evaluated in parallel and reduced in index order, so the
/// result depends only on the seed. Non-finite objective values count as -∞.
pub fn pso_maximize<F>(objective: F, config: &PsoConfig) -> (PoseOffset, f64)
where
    F: Fn(&PoseOffset) -> f64 + Sync,
{
    let lo = config.lower.to_array();
    let hi = config.upper.to_array();
    let n = config.n_particles.max(1);
    let mut rng = ChaCha8Rng::seed_from_u64(config.rng_seed);
    let vmax: [f64; 3] = std::array::from_fn(|d| 0.2 * (hi[d] - lo[d]));

    let mut pos: Vec<[f64; 3]> = (0..n)
        .map(|i| {
            if i == 0 && config.seed_center {
                std::array::from_fn(|d| 0.5 * (lo[d] + hi[d]))
            } else {
                std::array::from_fn(|d| rng.random_range(lo[d]..hi[d]))
            }
        })
        .collect();
    let mut vel: Vec<[f64; 3]> = (0..n)
        .map(|_| std::array::from_fn(|d| rng.random_range(-vmax[d]..vmax[d])))
        .collect();

    let eval = |pos: &[[f64; 3]]| -> Vec<f64> {
        pos.par_iter()
            .map(|p| {
                let v = objective(&PoseOffset::new(p[0], p[1], p[2]));
                if v.is_nan() {
                    f64::NEG_INFINITY
                } else {
                    v
                }
            })
            .collect()
    };

    let mut fit = eval(&pos);
    let mut best_pos = pos.clone();
    let mut best_fit = fit.clone();
    let mut g = 0;
    for i in 1..n {
        if best_fit[i] > best_fit[g] {
            g = i;
        }
    }

    for _ in 0..config.n_iters {
        let gpos = best_pos[g];
        for i in 0..n {
            for d in 0..3 {
                let r1: f64 = rng.random();
                let r2: f64 = rng.random();
                let v = config.inertia * vel[i][d]
                    + config.cognitive * r1 * (best_pos[i][d] - pos[i][d])
                    + config.social * r2 * (gpos[d] - pos[i][d]);
                vel[i][d] = v.clamp(-vmax[d], vmax[d]);
                let x = pos[i][d] + vel[i][d];
                if x < lo[d] || x > hi[d] {
                    vel[i][d] = 0.0;
                }
                pos[i][d] = x.clamp(lo[d], hi[d]);
            }
        }
        fit = eval(&pos);
        for i in 0..n {
            if fit[i] > best_fit[i] {
                best_fit[i] = fit[i];
                best_pos[i] = pos[i];
            }
        }
        for i in 0..n {
            if best_fit[i] > best_fit[g] {
                g = i;
            }
        }
    }
    let b = best_pos[g];
    (PoseOffset::new(b[0], b[1], b[2]), best_fit[g])
}

/// World position of a radar return: the polar vector `ρ∠(β + ψ)` mapped
/// from the pose's tangent plane to geodetic coordinates.
pub fn observation_to_geo(range: f64, bearing: f64, pose: &Pose) -> GeodeticPoint {
    TangentPlane::new(pose.position).to_geo(NedPoint::polar(range, bearing + pose.heading))
}

fn endpoint(plane_pose: &TangentPlane, plane_samples: &TangentPlane, o: &RadarObservation, heading: f64) -> NedPoint {
    plane_samples.to_ned(plane_pose.to_geo(NedPoint::polar(o.range, o.bearing + heading)))
}

/// Likelihood of one return under the mixture of a Gaussian in the distance
/// to the nearest shoreline sample and uniform clutter.
pub fn likelihood(
    obs: &RadarObservation,
    pose: &Pose,
    samples: &ShorelineSamples,
    params: &LfmParams,
) -> Result<f64> {
    let p = samples.plane().to_ned(observation_to_geo(obs.range, obs.bearing, pose));
    let d = samples.min_distance(p)?;
    Ok(params.density(d))
}

/// Sum of per-return log-likelihoods, each clamped at the log clutter floor.
pub fn scan_log_likelihood(
    scan: &RadarScan,
    pose: &Pose,
    samples: &ShorelineSamples,
    params: &LfmParams,
) -> Result<f64> {
    if scan.is_empty() {
        return Err(Error::EmptyScan);
    }
    if samples.is_empty() {
        return Err(Error::NoShoreline);
    }
    // beyond this distance the hit term cannot change the sum
    Ok(log_likelihood_bounded(scan, pose, samples, params, 1e-40))
}

fn log_likelihood_bounded(
    scan: &RadarScan,
    pose: &Pose,
    samples: &ShorelineSamples,
    params: &LfmParams,
    rel: f64,
) -> f64 {
    let cutoff = params.cutoff(rel);
    let floor_log = params.log_term(f64::INFINITY);
    let pp = TangentPlane::new(pose.position);
    let ps = samples.plane();
    scan.observations
        .iter()
        .map(|o| {
            let p = endpoint(&pp, &ps, o, pose.heading);
            match samples.nearest_within(p, cutoff) {
                Some((_, d)) => params.log_term(d),
                None => floor_log,
            }
        })
        .sum()
}

/// Which estimator produced a [`PoseEstimate`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    First,
    Second,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PoseEstimate {
    pub mean: Pose,
    /// Covariance over (north m, east m, heading rad).
    pub cov: Matrix3<f64>,
    pub stage: Stage,
    pub available: bool,
}

impl PoseEstimate {
    pub fn unavailable(prior: Pose, stage: Stage) -> Self {
        PoseEstimate {
            mean: prior,
            cov: Matrix3::from_diagonal_element(f64::INFINITY),
            stage,
            available: false,
        }
    }
}

/// Tuning of the first-stage search.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FirstStageConfig {
    pub pso: PsoConfig,
    /// Multipliers on `sigma_lfm`, one PSO run per entry. Wide early kernels
    /// let the swarm see the shoreline from far away; the last entry should be 1.
    pub sigma_schedule: Vec<f64>,
    /// Box half-widths shrink by this factor after each schedule entry.
    pub shrink: f64,
    pub sample_spacing: f64,
    pub position_std: f64,
    pub heading_std: f64,
    /// Curvature eigenvalue ratio below which the fix is flagged degenerate.
    pub degeneracy_ratio: f64,
}

impl Default for FirstStageConfig {
    fn default() -> Self {
        FirstStageConfig {
            pso: PsoConfig::default(),
            sigma_schedule: vec![8.0, 3.0, 1.0],
            shrink: 0.3,
            sample_spacing: 5.0,
            position_std: 61.0,
            heading_std: 2f64.to_radians(),
            degeneracy_ratio: 1e-2,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FirstStageOutput {
    pub estimate: PoseEstimate,
    pub offset: PoseOffset,
    pub log_likelihood: f64,
    /// Eigenvalues of the negated position Hessian of the log-likelihood, ascending.
    pub curvature: [f64; 2],
    /// The objective is (nearly) flat along some horizontal direction.
    pub degenerate: bool,
}

/// First-stage fix with default search settings besides `pso`.
pub fn estimate_first_stage(
    scan: &RadarScan,
    prior: &Pose,
    chart: &Chart,
    params: &LfmParams,
    pso: &PsoConfig,
) -> PoseEstimate {
    let cfg = FirstStageConfig {
        pso: pso.clone(),
        ..FirstStageConfig::default()
    };
    estimate_first_stage_with(scan, prior, chart, params, &cfg).estimate
}

/// Extracts the shoreline around the prior and runs [`first_stage_search`].
pub fn estimate_first_stage_with(
    scan: &RadarScan,
    prior: &Pose,
    chart: &Chart,
    params: &LfmParams,
    cfg: &FirstStageConfig,
) -> FirstStageOutput {
    let reach = {
        let (lo, hi) = (cfg.pso.lower, cfg.pso.upper);
        let m = [lo.dn, lo.de, hi.dn, hi.de].iter().fold(0.0f64, |a, v| a.max(v.abs()));
        params.rho_max + std::f64::consts::SQRT_2 * m
    };
    let samples = chart.extract_shoreline(prior.position, reach, cfg.sample_spacing);
    first_stage_search(scan, prior, &samples, params, cfg)
}

/// Maximizes the scan log-likelihood over the pose offset from `prior`.
///
/// Returns an unavailable estimate when the scan or the shoreline is empty.
pub fn first_stage_search(
    scan: &RadarScan,
    prior: &Pose,
    samples: &ShorelineSamples,
    params: &LfmParams,
    cfg: &FirstStageConfig,
) -> FirstStageOutput {
    if scan.is_empty() || samples.is_empty() {
        return FirstStageOutput {
            estimate: PoseEstimate::unavailable(*prior, Stage::First),
            offset: PoseOffset::default(),
            log_likelihood: f64::NEG_INFINITY,
            curvature: [0.0; 2],
            degenerate: true,
        };
    }

    let lo0 = cfg.pso.lower.to_array();
    let hi0 = cfg.pso.upper.to_array();
    let mut half: [f64; 3] = std::array::from_fn(|d| 0.5 * (hi0[d] - lo0[d]));
    let mut mid: [f64; 3] = std::array::from_fn(|d| 0.5 * (hi0[d] + lo0[d]));
    let schedule = if cfg.sigma_schedule.is_empty() {
        vec![1.0]
    } else {
        cfg.sigma_schedule.clone()
    };

    for (stage, &mult) in schedule.iter().enumerate() {
        let p = LfmParams {
            sigma_lfm: params.sigma_lfm * mult,
            ..*params
        };
        // coarse samples are enough for wide kernels and keep lookups cheap
        let spacing = samples.spacing.max(p.sigma_lfm / 5.0);
        let coarse;
        let s = if spacing > samples.spacing * 1.5 {
            coarse = resample(samples, spacing);
            &coarse
        } else {
            samples
        };
        let pso = PsoConfig {
            lower: PoseOffset::new(mid[0] - half[0], mid[1] - half[1], (mid[2] - half[2]).max(-PI)),
            upper: PoseOffset::new(mid[0] + half[0], mid[1] + half[1], (mid[2] + half[2]).min(PI)),
            rng_seed: cfg.pso.rng_seed.wrapping_add(stage as u64),
            seed_center: true,
            ..cfg.pso.clone()
        };
        let (best, _) = pso_maximize(|off: &PoseOffset| offset_objective(scan, prior, s, &p, off), &pso);
        mid = best.to_array();
        for h in &mut half {
            *h *= cfg.shrink;
        }
    }

    let offset = PoseOffset::from_array(mid);
    let f = |off: &PoseOffset| offset_objective(scan, prior, samples, params, off);
    let log_likelihood = f(&offset);
    let (curvature, degenerate) = position_curvature(&f, offset, params.sigma_lfm, samples.spacing, cfg.degeneracy_ratio);
    let mean = offset.apply(prior);
    let cov = Matrix3::from_diagonal(&nalgebra::Vector3::new(
        cfg.position_std.powi(2),
        cfg.position_std.powi(2),
        cfg.heading_std.powi(2),
    ));
    FirstStageOutput {
        estimate: PoseEstimate {
            mean,
            cov,
            stage: Stage::First,
            available: true,
        },
        offset,
        log_likelihood,
        curvature,
        degenerate,
    }
}

// hit terms below 1e-6 of the floor are dropped
fn offset_objective(scan: &RadarScan, prior: &Pose, samples: &ShorelineSamples, params: &LfmParams, off: &PoseOffset) -> f64 {
    log_likelihood_bounded(scan, &off.apply(prior), samples, params, 1e-6)
}

fn resample(samples: &ShorelineSamples, spacing: f64) -> ShorelineSamples {
    let stride = (spacing / samples.spacing).round().max(1.0) as usize;
    let runs = samples
        .runs
        .iter()
        .map(|r| {
            let run = &samples.points[r.clone()];
            let mut out: Vec<NedPoint> = run.iter().step_by(stride).copied().collect();
            if !(run.len() - 1).is_multiple_of(stride) {
                out.push(run[run.len() - 1]);
            }
            out
        })
        .collect();
    ShorelineSamples::from_runs(samples.origin, runs, samples.spacing * stride as f64)
}

/// Central-difference Hessian of `f` over (dn, de) at `at`. The step is a
/// whole number of sample spacings so sampling ripple along a straight
/// coast cancels.
fn position_curvature<F: Fn(&PoseOffset) -> f64>(
    f: &F,
    at: PoseOffset,
    sigma: f64,
    spacing: f64,
    ratio: f64,
) -> ([f64; 2], bool) {
    let h = (sigma / spacing).round().max(1.0) * spacing;
    let at_d = |a: f64, b: f64| f(&PoseOffset::new(at.dn + a, at.de + b, at.dpsi));
    let f0 = at_d(0.0, 0.0);
    let fnn = (at_d(h, 0.0) - 2.0 * f0 + at_d(-h, 0.0)) / (h * h);
    let fee = (at_d(0.0, h) - 2.0 * f0 + at_d(0.0, -h)) / (h * h);
    let fne = (at_d(h, h) - at_d(h, -h) - at_d(-h, h) + at_d(-h, -h)) / (4.0 * h * h);
    let neg = Matrix2::new(-fnn, -fne, -fne, -fee);
    let eig = neg.symmetric_eigen().eigenvalues;
    let (a, b) = (eig[0].min(eig[1]), eig[0].max(eig[1]));
    let degenerate = !(b > 0.0) || a < ratio * b;
    ([a, b], degenerate)
}

/// Result of [`fit_lfm_em`].
#[derive(Debug, Clone, PartialEq)]
pub struct EmFit {
    pub params: LfmParams,
    /// Log-likelihood before the first update and after each iteration.
    pub log_likelihood: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

/// Fits the LFM mixture by EM on returns recorded at known poses.
///
/// Each return's distance to the shoreline is computed once. Returns with no
/// shoreline in range get an infinite distance and are pure clutter.
pub fn fit_lfm_em(
    dataset: &[(Pose, RadarScan)],
    chart: &Chart,
    init: &LfmParams,
    tol: f64,
    max_iters: usize,
) -> Result<EmFit> {
    fit_lfm_em_spaced(dataset, chart, init, tol, max_iters, 1.0)
}

pub fn fit_lfm_em_spaced(
    dataset: &[(Pose, RadarScan)],
    chart: &Chart,
    init: &LfmParams,
    tol: f64,
    max_iters: usize,
    spacing: f64,
) -> Result<EmFit> {
    if dataset.iter().all(|(_, s)| s.is_empty()) {
        return Err(Error::EmptyInput("EM dataset"));
    }
    let distances: Vec<f64> = dataset
        .par_iter()
        .flat_map_iter(|(pose, scan)| {
            let samples = chart.extract_shoreline(pose.position, scan.rho_max.max(init.rho_max) + 100.0, spacing);
            let pp = TangentPlane::new(pose.position);
            let ps = samples.plane();
            scan.observations
                .iter()
                .map(|o| {
                    if samples.is_empty() {
                        f64::INFINITY
                    } else {
                        let p = endpoint(&pp, &ps, o, pose.heading);
                        samples.min_distance(p).unwrap_or(f64::INFINITY)
                    }
                })
                .collect::<Vec<_>>()
        })
        .collect();
    fit_lfm_em_distances(&distances, init, tol, max_iters)
}

/// EM on precomputed shoreline distances.
pub fn fit_lfm_em_distances(distances: &[f64], init: &LfmParams, tol: f64, max_iters: usize) -> Result<EmFit> {
    if distances.is_empty() {
        return Err(Error::EmptyInput("EM dataset"));
    }
    init.validate()?;
    let n = distances.len() as f64;
    let total = |p: &LfmParams| distances.iter().map(|&d| p.log_term(d)).sum::<f64>();
    let mut params = *init;
    let mut trace = vec![total(&params)];
    let mut converged = false;
    let mut iterations = 0;

    while iterations < max_iters {
        iterations += 1;
        let floor = params.floor();
        let (mut sg, mut sgd2) = (0.0, 0.0);
        for &d in distances {
            let hit = params.hit_density(d);
            let denom = hit + floor;
            let g = if denom > 0.0 { hit / denom } else { 0.0 };
            sg += g;
            if g > 0.0 {
                sgd2 += g * d * d;
            }
        }
        let p_hit = sg / n;
        let sigma = if sg > 0.0 { (sgd2 / sg).sqrt() } else { params.sigma_lfm };
        params = LfmParams {
            p_hit,
            p_random: 1.0 - p_hit,
            sigma_lfm: sigma.max(1e-6),
            rho_max: params.rho_max,
        };
        let ll = total(&params);
        let gain = ll - trace[trace.len() - 1];
        trace.push(ll);
        if gain.abs() < tol {
            converged = true;
            break;
        }
    }
    if !converged {
        log::warn!("EM stopped after {max_iters} iterations without converging");
    }
    Ok(EmFit {
        params,
        log_likelihood: trace,
        iterations,
        converged,
    })
}

#[derive(Serialize, Deserialize)]
struct PoseRow {
    lat_deg: f64,
    lon_deg: f64,
    heading_deg: f64,
}

/// Writes `NNNN.pose.csv` / `NNNN.scan.csv` pairs into `dir`.
pub fn write_dataset(dir: impl AsRef<Path>, dataset: &[(Pose, RadarScan)]) -> Result<()> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for (i, (pose, scan)) in dataset.iter().enumerate() {
        let path = dir.join(format!("{i:04}.pose.csv"));
        let mut w = csv::Writer::from_path(&path)?;
        w.serialize(PoseRow {
            lat_deg: pose.position.lat_deg(),
            lon_deg: pose.position.lon_deg(),
            heading_deg: pose.heading.to_degrees(),
        })?;
        w.flush().map_err(|e| Error::io(&path, e))?;
        scan.write_csv(dir.join(format!("{i:04}.scan.csv")))?;
    }
    Ok(())
}

/// Reads every `<name>.pose.csv` with a matching `<name>.scan.csv`, in name order.
pub fn load_dataset(dir: impl AsRef<Path>, rho_max: f64) -> Result<Vec<(Pose, RadarScan)>> {
    let dir = dir.as_ref();
    let mut names: Vec<String> = std::fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok())
        .filter_map(|e| {
            e.file_name()
                .to_str()
                .and_then(|n| n.strip_suffix(".pose.csv"))
                .map(str::to_string)
        })
        .collect();
    names.sort();
    let mut out = Vec::with_capacity(names.len());
    for name in names {
        let pose_path = dir.join(format!("{name}.pose.csv"));
        let mut r = csv::Reader::from_path(&pose_path)?;
        let row: PoseRow = r
            .deserialize()
            .next()
            .ok_or_else(|| Error::Config(format!("{} has no rows", pose_path.display())))??;
        let position = GeodeticPoint::from_degrees(row.lat_deg, row.lon_deg).ok_or_else(|| {
            Error::Config(format!(
                "{}: invalid position {} {}",
                pose_path.display(),
                row.lat_deg,
                row.lon_deg
            ))
        })?;
        let scan = RadarScan::read_csv(dir.join(format!("{name}.scan.csv")), rho_max)?;
        out.push((Pose::new(position, row.heading_deg.to_radians()), scan));
    }
    if out.is_empty() {
        return Err(Error::EmptyInput("EM dataset directory"));
    }
    Ok(out)
}
