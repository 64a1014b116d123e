//! Mission simulation, GNSS fault injection, Monte Carlo detection-time
//! studies and detector tuning.

use crate::chart::Chart;
use crate::detect::{
    calibrate_threshold, gaussian_glrt, kde_glrt_with, residual, AlarmSource, Detector, DetectorConfig,
    ResidualSample, Threshold, TraceRow,
};
use crate::error::{Error, Result};
use crate::geodesy::{GeodeticPoint, NedPoint, Pose, TangentPlane};
use crate::lfm::{first_stage_search, FirstStageConfig, LfmParams, PoseOffset};
use crate::radarsim::{cast_scan, RadarNoiseParams};
use crate::scenes;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::FRAC_PI_2;
use std::path::Path;

pub const DEFAULT_SAMPLE_PERIOD_S: f64 = 4.96;

/// Independent stream seed for item `index` of a run seeded with `seed`.
pub fn derive_seed(seed: u64, index: u64) -> u64 {
    // splitmix64 finalizer over a combined key
    let mut z = seed ^ index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimedPose {
    pub t: f64,
    pub pose: Pose,
}

/// Constant-speed waypoint following sampled every `period_s`.
///
/// The heading is the course of the current leg. With `duration_s` longer
/// than the route, the route is sailed back and forth.
pub fn waypoint_trajectory(
    waypoints: &[GeodeticPoint],
    speed_mps: f64,
    period_s: f64,
    duration_s: Option<f64>,
) -> Result<Vec<TimedPose>> {
    if waypoints.len() < 2 {
        return Err(Error::Config("trajectory needs at least 2 waypoints".into()));
    }
    if !(speed_mps > 0.0) || !(period_s > 0.0) {
        return Err(Error::Config("speed and sample period must be positive".into()));
    }
    let plane = TangentPlane::new(waypoints[0]);
    let pts: Vec<NedPoint> = waypoints.iter().map(|p| plane.to_ned(*p)).collect();
    let legs: Vec<(NedPoint, NedPoint, f64)> = pts
        .windows(2)
        .map(|w| (w[0], w[1], w[0].distance(&w[1])))
        .filter(|l| l.2 > 0.0)
        .collect();
    if legs.is_empty() {
        return Err(Error::Config("trajectory waypoints coincide".into()));
    }
    let route: f64 = legs.iter().map(|l| l.2).sum();
    let duration = duration_s.unwrap_or(route / speed_mps);
    let n = (duration / period_s + 1e-9).floor() as usize + 1;
    let mut out = Vec::with_capacity(n);
    for k in 0..n {
        let t = k as f64 * period_s;
        let s = speed_mps * t;
        let lap = (s / route).floor();
        let mut along = s - lap * route;
        let backwards = (lap as u64) % 2 == 1;
        if backwards {
            along = route - along;
        }
        let mut pos = legs[legs.len() - 1].1;
        let mut course = (legs[legs.len() - 1].1 - legs[legs.len() - 1].0).azimuth();
        for &(a, b, len) in &legs {
            if along <= len {
                let u = (b - a) * (1.0 / len);
                pos = a + u * along;
                course = u.azimuth();
                break;
            }
            along -= len;
        }
        if backwards {
            course += std::f64::consts::PI;
        }
        out.push(TimedPose {
            t,
            pose: Pose::new(plane.to_geo(pos), course),
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoseSampleRow {
    pub t_s: f64,
    pub lat_deg: f64,
    pub lon_deg: f64,
    pub heading_deg: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TrajectorySpec {
    Waypoints {
        /// `[lat_deg, lon_deg]` pairs
        waypoints: Vec<[f64; 2]>,
        speed_mps: f64,
        #[serde(default)]
        duration_s: Option<f64>,
    },
    Samples {
        samples: Vec<PoseSampleRow>,
    },
}

impl TrajectorySpec {
    pub fn build(&self, period_s: f64) -> Result<Vec<TimedPose>> {
        match self {
            TrajectorySpec::Waypoints { waypoints, speed_mps, duration_s } => {
                let pts = waypoints
                    .iter()
                    .map(|&[lat, lon]| {
                        GeodeticPoint::from_degrees(lat, lon)
                            .ok_or_else(|| Error::Config(format!("invalid waypoint {lat}, {lon}")))
                    })
                    .collect::<Result<Vec<_>>>()?;
                waypoint_trajectory(&pts, *speed_mps, period_s, *duration_s)
            }
            TrajectorySpec::Samples { samples } => {
                let mut out: Vec<TimedPose> = Vec::with_capacity(samples.len());
                for s in samples {
                    let p = GeodeticPoint::from_degrees(s.lat_deg, s.lon_deg)
                        .ok_or_else(|| Error::Config(format!("invalid sample position at t = {}", s.t_s)))?;
                    if let Some(prev) = out.last() {
                        if !(s.t_s > prev.t) {
                            return Err(Error::OutOfOrder { prev: prev.t, t: s.t_s });
                        }
                    }
                    out.push(TimedPose {
                        t: s.t_s,
                        pose: Pose::new(p, s.heading_deg.to_radians()),
                    });
                }
                Ok(out)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FaultKind {
    #[default]
    None,
    Spoof,
    Jam,
}

/// Side of the course the spoofed offset is pushed to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    #[default]
    Left,
    Right,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FaultSpec {
    pub kind: FaultKind,
    pub t_onset: f64,
    /// meters per minute
    pub f_slope: f64,
    pub side: Side,
}

impl Default for FaultSpec {
    fn default() -> Self {
        FaultSpec {
            kind: FaultKind::None,
            t_onset: 0.0,
            f_slope: 20.0,
            side: Side::Left,
        }
    }
}

impl FaultSpec {
    pub fn none() -> Self {
        FaultSpec::default()
    }

    pub fn spoof(t_onset: f64, f_slope: f64) -> Self {
        FaultSpec {
            kind: FaultKind::Spoof,
            t_onset,
            f_slope,
            side: Side::Left,
        }
    }

    pub fn jam(t_onset: f64) -> Self {
        FaultSpec {
            kind: FaultKind::Jam,
            t_onset,
            ..FaultSpec::default()
        }
    }

    pub fn validate(&self, t_start: f64, t_end: f64) -> Result<()> {
        if self.kind == FaultKind::None {
            return Ok(());
        }
        if !(t_start..=t_end).contains(&self.t_onset) {
            return Err(Error::Config(format!(
                "fault onset {} s outside mission span [{t_start}, {t_end}] s",
                self.t_onset
            )));
        }
        if self.kind == FaultKind::Spoof && !(self.f_slope > 0.0) {
            return Err(Error::Config("spoof slope must be positive".into()));
        }
        Ok(())
    }
}

/// Corrupts a GNSS track.
///
/// Spoof adds `f_slope·(t − t_onset)` meters perpendicular to the true
/// course; jam repeats the last fix at or before the onset.
pub fn inject_fault(gnss: &[GeodeticPoint], truth: &[TimedPose], spec: &FaultSpec) -> Vec<GeodeticPoint> {
    match spec.kind {
        FaultKind::None => gnss.to_vec(),
        FaultKind::Spoof => gnss
            .iter()
            .zip(truth)
            .map(|(g, tp)| {
                let dt = tp.t - spec.t_onset;
                if dt < 0.0 {
                    return *g;
                }
                let side = match spec.side {
                    Side::Left => -FRAC_PI_2,
                    Side::Right => FRAC_PI_2,
                };
                let f = NedPoint::polar(spec.f_slope * dt / 60.0, tp.pose.heading + side);
                TangentPlane::new(*g).to_geo(f)
            })
            .collect(),
        FaultKind::Jam => {
            let frozen = truth.iter().rposition(|tp| tp.t <= spec.t_onset);
            gnss.iter()
                .zip(truth)
                .map(|(g, tp)| match frozen {
                    Some(k) if tp.t > spec.t_onset => gnss[k],
                    _ => *g,
                })
                .collect()
        }
    }
}

/// Stand-in for the first stage: the estimate is the truth plus an error
/// drawn from a two-mode mixture. The second mode is a biased lock, like
/// the swarm settling on a neighbouring shoreline feature, which gives the
/// nominal residual its non-Gaussian, bimodal shape.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SurrogateParams {
    /// per-axis std of the main mode, meters
    pub sigma_main: f64,
    pub p_secondary: f64,
    /// bias of the secondary mode, meters
    pub secondary_offset: f64,
    /// direction of the secondary bias relative to the course, degrees
    pub secondary_bearing_deg: f64,
    pub sigma_secondary: f64,
}

impl Default for SurrogateParams {
    fn default() -> Self {
        SurrogateParams {
            sigma_main: 10.0,
            p_secondary: 0.25,
            secondary_offset: 70.0,
            secondary_bearing_deg: 0.0,
            sigma_secondary: 8.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "lowercase")]
pub enum EstimatorMode {
    /// Full radar scan synthesis and first-stage search per step.
    Pipeline,
    Surrogate(SurrogateParams),
}

impl Default for EstimatorMode {
    fn default() -> Self {
        EstimatorMode::Surrogate(SurrogateParams::default())
    }
}

#[derive(Debug, Clone)]
pub struct Mission {
    pub trajectory: Vec<TimedPose>,
    /// Required by [`EstimatorMode::Pipeline`].
    pub chart: Option<Chart>,
    pub sample_period_s: f64,
    pub radar: RadarNoiseParams,
    pub lfm: LfmParams,
    pub first_stage: FirstStageConfig,
    pub detector: DetectorConfig,
    pub estimator: EstimatorMode,
    /// per-axis GNSS noise std, meters
    pub gnss_sigma: f64,
    /// Onsets are drawn after this many seconds; defaults to one full window span.
    pub warmup_s: Option<f64>,
    /// Onsets are drawn at least this long before the mission ends.
    pub tail_s: f64,
    pub seed: u64,
}

impl Mission {
    pub fn new(trajectory: Vec<TimedPose>, detector: DetectorConfig) -> Self {
        Mission {
            trajectory,
            chart: None,
            sample_period_s: DEFAULT_SAMPLE_PERIOD_S,
            radar: RadarNoiseParams::default(),
            lfm: LfmParams::default(),
            first_stage: FirstStageConfig::default(),
            detector,
            estimator: EstimatorMode::default(),
            gnss_sigma: 2.0,
            warmup_s: None,
            tail_s: 900.0,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.detector.validate()?;
        self.radar.validate()?;
        self.lfm.validate()?;
        if self.trajectory.len() < self.detector.span() {
            return Err(Error::Config(format!(
                "mission has {} samples, detector windows need {}",
                self.trajectory.len(),
                self.detector.span()
            )));
        }
        if self.trajectory.windows(2).any(|w| !(w[1].t > w[0].t)) {
            return Err(Error::Config("trajectory timestamps must increase".into()));
        }
        if matches!(self.estimator, EstimatorMode::Pipeline) && self.chart.is_none() {
            return Err(Error::Config("pipeline estimator needs a chart".into()));
        }
        Ok(())
    }

    pub fn t_start(&self) -> f64 {
        self.trajectory[0].t
    }

    pub fn t_end(&self) -> f64 {
        self.trajectory[self.trajectory.len() - 1].t
    }

    /// Range onsets are drawn from.
    pub fn onset_range(&self, detector: &DetectorConfig) -> (f64, f64) {
        let warm = self
            .warmup_s
            .unwrap_or(detector.span() as f64 * self.sample_period_s);
        let lo = self.t_start() + warm;
        let hi = (self.t_end() - self.tail_s).max(lo);
        (lo, hi)
    }

    pub fn with_seed(&self, seed: u64) -> Mission {
        Mission { seed, ..self.clone() }
    }
}

/// Residual series of one mission under `spec`, seeded by `mission.seed`.
pub fn simulate_residuals(mission: &Mission, spec: &FaultSpec) -> Result<Vec<ResidualSample>> {
    mission.validate()?;
    spec.validate(mission.t_start(), mission.t_end())?;
    let truth = &mission.trajectory;
    let steps: Vec<(GeodeticPoint, u64)> = truth
        .iter()
        .enumerate()
        .map(|(k, tp)| {
            let s = derive_seed(mission.seed, k as u64);
            let mut rng = ChaCha8Rng::seed_from_u64(s);
            let n = NedPoint::new(
                mission.gnss_sigma * rng.sample::<f64, _>(StandardNormal),
                mission.gnss_sigma * rng.sample::<f64, _>(StandardNormal),
            );
            (TangentPlane::new(tp.pose.position).to_geo(n), rng.random())
        })
        .collect();
    let gnss: Vec<GeodeticPoint> = steps.iter().map(|s| s.0).collect();
    let corrupted = inject_fault(&gnss, truth, spec);

    let estimate = |k: usize| -> GeodeticPoint {
        let tp = &truth[k];
        let seed = steps[k].1;
        match mission.estimator {
            EstimatorMode::Surrogate(p) => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let u: f64 = rng.random();
                let z1: f64 = rng.sample(StandardNormal);
                let z2: f64 = rng.sample(StandardNormal);
                let e = if u < p.p_secondary {
                    NedPoint::polar(p.secondary_offset, tp.pose.heading + p.secondary_bearing_deg.to_radians())
                        + NedPoint::new(z1, z2) * p.sigma_secondary
                } else {
                    NedPoint::new(z1, z2) * p.sigma_main
                };
                TangentPlane::new(tp.pose.position).to_geo(e)
            }
            EstimatorMode::Pipeline => {
                let chart = mission.chart.as_ref().expect("validated");
                let prior = Pose::new(corrupted[k], tp.pose.heading);
                let reach = mission.radar.rho_max + 1000.0;
                let samples = chart.extract_shoreline(prior.position, reach, mission.first_stage.sample_spacing);
                let ship_samples = samples.clone();
                let scan = cast_scan(&tp.pose, &ship_samples, &mission.radar, seed);
                let cfg = FirstStageConfig {
                    pso: crate::lfm::PsoConfig {
                        rng_seed: derive_seed(seed, 1),
                        ..mission.first_stage.pso.clone()
                    },
                    ..mission.first_stage.clone()
                };
                let out = first_stage_search(&scan, &prior, &samples, &mission.lfm, &cfg);
                if out.estimate.available {
                    out.estimate.mean.position
                } else {
                    // no land in range: the radar fix falls back to the prior
                    PoseOffset::default().apply(&prior).position
                }
            }
        }
    };
    let xr: Vec<GeodeticPoint> = match mission.estimator {
        EstimatorMode::Pipeline => (0..truth.len()).into_par_iter().map(estimate).collect(),
        EstimatorMode::Surrogate(_) => (0..truth.len()).map(estimate).collect(),
    };
    Ok(truth
        .iter()
        .zip(corrupted.iter().zip(&xr))
        .map(|(tp, (g, r))| ResidualSample {
            t: tp.t,
            r: residual(*g, *r),
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunResult {
    pub fault: FaultSpec,
    pub residuals: Vec<ResidualSample>,
    pub g_gauss: Vec<Option<f64>>,
    pub g_kde: Vec<Option<f64>>,
    /// Latched alarm source after each step.
    pub alarm: Vec<AlarmSource>,
    /// First threshold crossing at or after the onset; for fault-free runs,
    /// the first crossing anywhere.
    pub t_alarm_gauss: Option<f64>,
    pub t_alarm_kde: Option<f64>,
    pub t_d_gauss: Option<f64>,
    pub t_d_kde: Option<f64>,
    pub t_d_combined: Option<f64>,
    pub t_end: f64,
}

/// Summary written per run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub t_onset_s: Option<f64>,
    pub t_d_gauss_s: Option<f64>,
    pub t_d_kde_s: Option<f64>,
    pub t_d_combined_s: Option<f64>,
    #[serde(rename = "J_contribution")]
    pub j_contribution: f64,
}

impl RunResult {
    /// Detection time with a miss counted as the rest of the mission.
    pub fn penalized(&self, t_d: Option<f64>) -> f64 {
        t_d.unwrap_or((self.t_end - self.fault.t_onset).max(0.0))
    }

    pub fn summary(&self) -> RunSummary {
        let faulty = self.fault.kind != FaultKind::None;
        RunSummary {
            t_onset_s: faulty.then_some(self.fault.t_onset),
            t_d_gauss_s: self.t_d_gauss,
            t_d_kde_s: self.t_d_kde,
            t_d_combined_s: self.t_d_combined,
            j_contribution: if faulty { self.penalized(self.t_d_combined).powi(2) } else { 0.0 },
        }
    }

    pub fn trace_rows(&self) -> Vec<TraceRow> {
        self.residuals
            .iter()
            .enumerate()
            .map(|(k, s)| TraceRow {
                t_s: s.t,
                r_m: s.r,
                g_gauss: self.g_gauss[k],
                g_kde: self.g_kde[k],
                alarm: self.alarm[k] != AlarmSource::None,
                source: self.alarm[k],
            })
            .collect()
    }
}

/// Runs the combined detector over a residual series.
pub fn run_detector(residuals: &[ResidualSample], config: &DetectorConfig, fault: &FaultSpec) -> Result<RunResult> {
    let mut det = Detector::new(config.clone())?;
    let n = residuals.len();
    let (mut gg, mut gk, mut alarm) = (Vec::with_capacity(n), Vec::with_capacity(n), Vec::with_capacity(n));
    let faulty = fault.kind != FaultKind::None;
    let (mut ta_g, mut ta_k) = (None, None);
    for s in residuals {
        let out = det.step(*s)?;
        gg.push(out.g_gauss);
        gk.push(out.g_kde);
        alarm.push(det.source());
        let armed = !faulty || s.t >= fault.t_onset;
        if armed {
            if ta_g.is_none() && out.g_gauss.is_some_and(|g| g > config.gamma_gauss) {
                ta_g = Some(s.t);
            }
            if ta_k.is_none() && out.g_kde.is_some_and(|g| g > config.gamma_kde) {
                ta_k = Some(s.t);
            }
        }
    }
    let td = |t: Option<f64>| if faulty { t.map(|t| t - fault.t_onset) } else { None };
    let (t_d_gauss, t_d_kde) = (td(ta_g), td(ta_k));
    Ok(RunResult {
        fault: *fault,
        residuals: residuals.to_vec(),
        g_gauss: gg,
        g_kde: gk,
        alarm,
        t_alarm_gauss: ta_g,
        t_alarm_kde: ta_k,
        t_d_gauss,
        t_d_kde,
        t_d_combined: min_opt(t_d_gauss, t_d_kde),
        t_end: residuals.last().map_or(0.0, |s| s.t),
    })
}

fn min_opt(a: Option<f64>, b: Option<f64>) -> Option<f64> {
    match (a, b) {
        (Some(x), Some(y)) => Some(x.min(y)),
        (x, None) => x,
        (None, y) => y,
    }
}

/// Simulates one mission and runs the detector over it.
pub fn run_mission(mission: &Mission, spec: &FaultSpec) -> Result<RunResult> {
    let r = simulate_residuals(mission, spec)?;
    run_detector(&r, &mission.detector, spec)
}

/// Detection times after `spec.t_onset`, evaluating statistics only from
/// the onset onward and stopping once both detectors have fired.
pub fn detection_times(residuals: &[ResidualSample], config: &DetectorConfig, spec: &FaultSpec) -> (Option<f64>, Option<f64>) {
    let span = config.span();
    let start = residuals.partition_point(|s| s.t < spec.t_onset).max(span - 1);
    let values: Vec<f64> = residuals.iter().map(|s| s.r).collect();
    let (mut tg, mut tk) = (None, None);
    for end in start..residuals.len() {
        let w = &values[end + 1 - span..=end];
        let l = &w[..config.lambda];
        let m = &w[config.lambda + config.o..];
        if tg.is_none() && gaussian_glrt(l, m).is_some_and(|g| g > config.gamma_gauss) {
            tg = Some(residuals[end].t - spec.t_onset);
        }
        if tk.is_none() && kde_glrt_with(l, m, config.h, config.leave_one_out).is_some_and(|g| g > config.gamma_kde) {
            tk = Some(residuals[end].t - spec.t_onset);
        }
        if tg.is_some() && tk.is_some() {
            break;
        }
    }
    (tg, tk)
}

/// Onsets drawn uniformly over the mission's onset range.
pub fn draw_onsets(mission: &Mission, detector: &DetectorConfig, n: usize, seed: u64) -> Vec<f64> {
    let (lo, hi) = mission.onset_range(detector);
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, u64::MAX));
    (0..n)
        .map(|_| if hi > lo { rng.random_range(lo..hi) } else { lo })
        .collect()
}

/// `n` runs with onsets uniform over the mission and run `i` seeded by
/// `derive_seed(seed, i)`.
pub fn monte_carlo(mission: &Mission, template: &FaultSpec, n: usize, seed: u64) -> Result<Vec<RunResult>> {
    if n == 0 {
        return Err(Error::Config("Monte Carlo needs n >= 1".into()));
    }
    mission.validate()?;
    let onsets = draw_onsets(mission, &mission.detector, n, seed);
    onsets
        .par_iter()
        .enumerate()
        .map(|(i, &t_onset)| {
            let m = mission.with_seed(derive_seed(seed, i as u64));
            run_mission(&m, &FaultSpec { t_onset, ..*template })
        })
        .collect()
}

/// `Σ t_D²` with misses counted as the remaining mission time.
pub fn performance_index(results: &[RunResult], pick: impl Fn(&RunResult) -> Option<f64>) -> f64 {
    results.iter().map(|r| r.penalized(pick(r)).powi(2)).sum()
}

/// Fault-free residual series for threshold calibration, seeded apart from
/// the fault runs.
pub fn h0_series(mission: &Mission, n_runs: usize, seed: u64) -> Result<Vec<Vec<ResidualSample>>> {
    (0..n_runs)
        .into_par_iter()
        .map(|i| simulate_residuals(&mission.with_seed(derive_seed(seed ^ 0x4830, i as u64)), &FaultSpec::none()))
        .collect()
}

/// Statistics of every full window over the given series.
pub fn h0_statistics(series: &[Vec<ResidualSample>], config: &DetectorConfig) -> (Vec<f64>, Vec<f64>) {
    let per: Vec<Vec<(f64, f64)>> = series
        .par_iter()
        .map(|s| {
            let v: Vec<f64> = s.iter().map(|x| x.r).collect();
            crate::detect::statistics_series(&v, config)
        })
        .collect();
    let flat: Vec<(f64, f64)> = per.into_iter().flatten().collect();
    flat.into_iter().unzip()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub p_fa: f64,
    pub n_samples: usize,
    pub gauss: Threshold,
    pub kde: Threshold,
}

/// Thresholds for both detectors from fault-free statistics.
pub fn calibrate(series: &[Vec<ResidualSample>], config: &DetectorConfig, p_fa: f64) -> Result<Calibration> {
    let (g, k) = h0_statistics(series, config);
    Ok(Calibration {
        p_fa,
        n_samples: g.len(),
        gauss: calibrate_threshold(&g, p_fa)?,
        kde: calibrate_threshold(&k, p_fa)?,
    })
}

/// Candidate values for the detector parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuneGrid {
    pub mu: Vec<usize>,
    pub lambda: Vec<usize>,
    pub o: Vec<usize>,
    pub h: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridPoint {
    pub mu: usize,
    pub lambda: usize,
    pub o: usize,
    /// absent for the Gaussian detector
    pub h: Option<f64>,
    pub gamma: f64,
    pub j: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuneResult {
    pub gauss: GridPoint,
    pub kde: GridPoint,
    pub evaluated: Vec<GridPoint>,
}

/// Settings shared by threshold calibration inside tuning.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CalibrationSettings {
    pub p_fa: f64,
    pub h0_runs: usize,
}

impl Default for CalibrationSettings {
    fn default() -> Self {
        CalibrationSettings { p_fa: 1e-3, h0_runs: 20 }
    }
}

/// Exhaustive grid search minimizing `J = Σ t_D²` per detector.
///
/// Every grid point is calibrated on the same fault-free series and scored
/// on the same `n_per_point` spoof realizations. Ties go to the smaller μ,
/// then the smaller λ, o and h.
pub fn tune_detector(
    mission: &Mission,
    template: &FaultSpec,
    grid: &TuneGrid,
    n_per_point: usize,
    calibration: &CalibrationSettings,
    seed: u64,
) -> Result<TuneResult> {
    if grid.mu.is_empty() || grid.lambda.is_empty() || grid.o.is_empty() || grid.h.is_empty() {
        return Err(Error::Config("tuning grid must be non-empty on every axis".into()));
    }
    if n_per_point == 0 {
        return Err(Error::Config("tuning needs n_per_point >= 1".into()));
    }
    mission.validate()?;
    let h0 = h0_series(mission, calibration.h0_runs, seed)?;
    let max_span = grid.mu.iter().max().unwrap() + grid.lambda.iter().max().unwrap() + grid.o.iter().max().unwrap();
    let widest = DetectorConfig {
        mu: *grid.mu.iter().max().unwrap(),
        lambda: *grid.lambda.iter().max().unwrap(),
        o: *grid.o.iter().max().unwrap(),
        ..mission.detector.clone()
    };
    if mission.trajectory.len() < max_span {
        return Err(Error::Config("mission is shorter than the widest grid window".into()));
    }
    let onsets = draw_onsets(mission, &widest, n_per_point, seed);
    let runs: Vec<(FaultSpec, Vec<ResidualSample>)> = onsets
        .par_iter()
        .enumerate()
        .map(|(i, &t)| {
            let spec = FaultSpec { t_onset: t, ..*template };
            simulate_residuals(&mission.with_seed(derive_seed(seed, i as u64)), &spec).map(|r| (spec, r))
        })
        .collect::<Result<_>>()?;
    let t_end = mission.t_end();

    let mut points = Vec::new();
    for &mu in &grid.mu {
        for &lambda in &grid.lambda {
            for &o in &grid.o {
                for (hi, &h) in grid.h.iter().enumerate() {
                    points.push((mu, lambda, o, h, hi == 0));
                }
            }
        }
    }
    let evaluated: Vec<(GridPoint, Option<GridPoint>)> = points
        .par_iter()
        .map(|&(mu, lambda, o, h, with_gauss)| -> Result<(GridPoint, Option<GridPoint>)> {
            let cfg = DetectorConfig { mu, lambda, o, h, ..mission.detector.clone() };
            cfg.validate()?;
            let cal = calibrate(&h0, &cfg, calibration.p_fa)?;
            let cfg = DetectorConfig {
                gamma_gauss: if with_gauss { cal.gauss.gamma } else { f64::INFINITY },
                gamma_kde: cal.kde.gamma,
                ..cfg
            };
            let (mut jg, mut jk) = (0.0, 0.0);
            for (spec, r) in &runs {
                let (tg, tk) = detection_times(r, &cfg, spec);
                let miss = t_end - spec.t_onset;
                jg += tg.unwrap_or(miss).powi(2);
                jk += tk.unwrap_or(miss).powi(2);
            }
            let kde = GridPoint { mu, lambda, o, h: Some(h), gamma: cal.kde.gamma, j: jk };
            let gauss = with_gauss.then_some(GridPoint { mu, lambda, o, h: None, gamma: cal.gauss.gamma, j: jg });
            Ok((kde, gauss))
        })
        .collect::<Result<_>>()?;

    let key = |p: &GridPoint| (p.mu, p.lambda, p.o);
    let better = |a: &GridPoint, b: &GridPoint| {
        a.j < b.j
            || (a.j == b.j
                && (key(a), a.h.unwrap_or(0.0)).partial_cmp(&(key(b), b.h.unwrap_or(0.0))) == Some(std::cmp::Ordering::Less))
    };
    let pick = |it: &mut dyn Iterator<Item = GridPoint>| {
        let mut best: Option<GridPoint> = None;
        for p in it {
            if best.as_ref().is_none_or(|b| better(&p, b)) {
                best = Some(p);
            }
        }
        best.expect("non-empty grid")
    };
    let kde = pick(&mut evaluated.iter().map(|e| e.0));
    let gauss = pick(&mut evaluated.iter().filter_map(|e| e.1));
    let mut all: Vec<GridPoint> = evaluated.iter().flat_map(|(k, g)| std::iter::once(*k).chain(*g)).collect();
    all.sort_by(|a, b| (key(a), a.h.is_some(), a.h.unwrap_or(0.0)).partial_cmp(&(key(b), b.h.is_some(), b.h.unwrap_or(0.0))).unwrap());
    Ok(TuneResult { gauss, kde, evaluated: all })
}

/// Ensemble statistics over Monte Carlo runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub n: usize,
    pub j_gauss: f64,
    pub j_kde: f64,
    pub j_combined: f64,
    pub detected_gauss: usize,
    pub detected_kde: usize,
    pub detected_combined: usize,
    /// 10/25/50/75/90 % quantiles of penalized detection times, seconds.
    pub quantiles_gauss_s: [f64; 5],
    pub quantiles_kde_s: [f64; 5],
    pub quantiles_combined_s: [f64; 5],
    /// Fraction of runs where the combined detector fired strictly earlier.
    pub combined_earlier_than_gauss: f64,
    pub combined_earlier_than_kde: f64,
    pub kde_earlier_than_gauss: f64,
}

pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let pos = q * (sorted.len() - 1) as f64;
    let (i, frac) = (pos.floor() as usize, pos.fract());
    if i + 1 < sorted.len() {
        sorted[i] * (1.0 - frac) + sorted[i + 1] * frac
    } else {
        sorted[i]
    }
}

pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    quantile(&v, 0.5)
}

pub fn aggregate(results: &[RunResult]) -> Aggregate {
    let n = results.len();
    let qs = |pick: &dyn Fn(&RunResult) -> Option<f64>| {
        let mut v: Vec<f64> = results.iter().map(|r| r.penalized(pick(r))).collect();
        v.sort_by(f64::total_cmp);
        [0.1, 0.25, 0.5, 0.75, 0.9].map(|q| quantile(&v, q))
    };
    let frac = |f: &dyn Fn(&RunResult) -> bool| {
        if n == 0 {
            0.0
        } else {
            results.iter().filter(|r| f(r)).count() as f64 / n as f64
        }
    };
    Aggregate {
        n,
        j_gauss: performance_index(results, |r| r.t_d_gauss),
        j_kde: performance_index(results, |r| r.t_d_kde),
        j_combined: performance_index(results, |r| r.t_d_combined),
        detected_gauss: results.iter().filter(|r| r.t_d_gauss.is_some()).count(),
        detected_kde: results.iter().filter(|r| r.t_d_kde.is_some()).count(),
        detected_combined: results.iter().filter(|r| r.t_d_combined.is_some()).count(),
        quantiles_gauss_s: qs(&|r| r.t_d_gauss),
        quantiles_kde_s: qs(&|r| r.t_d_kde),
        quantiles_combined_s: qs(&|r| r.t_d_combined),
        combined_earlier_than_gauss: frac(&|r| r.penalized(r.t_d_combined) < r.penalized(r.t_d_gauss)),
        combined_earlier_than_kde: frac(&|r| r.penalized(r.t_d_combined) < r.penalized(r.t_d_kde)),
        kde_earlier_than_gauss: frac(&|r| r.penalized(r.t_d_kde) < r.penalized(r.t_d_gauss)),
    }
}

/// Ordinary least-squares slope of `r` against `t` over samples in `[t0, t1]`.
pub fn residual_slope(residuals: &[ResidualSample], t0: f64, t1: f64) -> Option<f64> {
    let pts: Vec<&ResidualSample> = residuals.iter().filter(|s| s.t >= t0 && s.t <= t1).collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mt = pts.iter().map(|s| s.t).sum::<f64>() / n;
    let mr = pts.iter().map(|s| s.r).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|s| (s.t - mt) * (s.r - mr)).sum();
    let sxx: f64 = pts.iter().map(|s| (s.t - mt).powi(2)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

/// Mission configuration file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MissionConfig {
    /// GeoJSON chart, relative to the config file. Without one, a synthetic
    /// archipelago around the trajectory start is used.
    #[serde(default)]
    pub chart_path: Option<String>,
    pub trajectory: TrajectorySpec,
    #[serde(default = "default_period")]
    pub sample_period_s: f64,
    #[serde(default)]
    pub radar: RadarNoiseParams,
    #[serde(default)]
    pub lfm: LfmParams,
    #[serde(default)]
    pub first_stage: FirstStageConfig,
    #[serde(default)]
    pub detector: DetectorConfigFile,
    #[serde(default)]
    pub fault: FaultSpec,
    #[serde(default)]
    pub estimator: EstimatorMode,
    #[serde(default = "default_gnss_sigma")]
    pub gnss_sigma_m: f64,
    #[serde(default)]
    pub warmup_s: Option<f64>,
    #[serde(default = "default_tail")]
    pub tail_s: f64,
    #[serde(default)]
    pub calibration: CalibrationSettings,
    #[serde(default)]
    pub seed: u64,
}

fn default_period() -> f64 {
    DEFAULT_SAMPLE_PERIOD_S
}

fn default_gnss_sigma() -> f64 {
    2.0
}

fn default_tail() -> f64 {
    900.0
}

/// Detector section of a config file; absent thresholds mean "calibrate".
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DetectorConfigFile {
    pub lambda: usize,
    pub mu: usize,
    pub o: usize,
    pub h: f64,
    pub gamma_gauss: Option<f64>,
    pub gamma_kde: Option<f64>,
    pub leave_one_out: bool,
}

impl Default for DetectorConfigFile {
    fn default() -> Self {
        let d = DetectorConfig::default();
        DetectorConfigFile {
            lambda: d.lambda,
            mu: d.mu,
            o: d.o,
            h: d.h,
            gamma_gauss: None,
            gamma_kde: None,
            leave_one_out: d.leave_one_out,
        }
    }
}

impl DetectorConfigFile {
    pub fn to_config(&self) -> DetectorConfig {
        DetectorConfig {
            lambda: self.lambda,
            mu: self.mu,
            o: self.o,
            h: self.h,
            gamma_gauss: self.gamma_gauss.unwrap_or(f64::INFINITY),
            gamma_kde: self.gamma_kde.unwrap_or(f64::INFINITY),
            leave_one_out: self.leave_one_out,
        }
    }

    pub fn has_thresholds(&self) -> bool {
        self.gamma_gauss.is_some() && self.gamma_kde.is_some()
    }
}

impl MissionConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    /// Builds the mission; `base_dir` resolves a relative `chart_path`.
    pub fn build(&self, base_dir: &Path) -> Result<Mission> {
        if !(self.sample_period_s > 0.0) {
            return Err(Error::Config("sample_period_s must be positive".into()));
        }
        let trajectory = self.trajectory.build(self.sample_period_s)?;
        let chart = match &self.chart_path {
            Some(p) => Some(Chart::load(base_dir.join(p))?),
            None => Some(scenes::archipelago(trajectory[0].pose.position)),
        };
        if self.lfm.rho_max != self.radar.rho_max {
            log::warn!("lfm.rho_max {} differs from radar.rho_max {}", self.lfm.rho_max, self.radar.rho_max);
        }
        let m = Mission {
            trajectory,
            chart,
            sample_period_s: self.sample_period_s,
            radar: self.radar,
            lfm: self.lfm,
            first_stage: self.first_stage.clone(),
            detector: self.detector.to_config(),
            estimator: self.estimator,
            gnss_sigma: self.gnss_sigma_m,
            warmup_s: self.warmup_s,
            tail_s: self.tail_s,
            seed: self.seed,
        };
        m.validate()?;
        self.fault.validate(m.t_start(), m.t_end())?;
        Ok(m)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geodesy::to_ned;

    fn origin() -> GeodeticPoint {
        GeodeticPoint::from_degrees(55.1, 10.6).unwrap()
    }

    fn straight(speed: f64, duration: f64) -> Vec<TimedPose> {
        let b = TangentPlane::new(origin()).to_geo(NedPoint::new(0.0, 50_000.0));
        waypoint_trajectory(&[origin(), b], speed, DEFAULT_SAMPLE_PERIOD_S, Some(duration)).unwrap()
    }

    fn small_detector() -> DetectorConfig {
        DetectorConfig { lambda: 20, mu: 10, o: 5, h: 5.0, gamma_gauss: f64::INFINITY, gamma_kde: f64::INFINITY, leave_one_out: false }
    }

    fn mission(duration: f64) -> Mission {
        Mission::new(straight(5.0, duration), small_detector())
    }

    #[test]
    fn trajectory_is_constant_speed() {
        let t = straight(5.0, 600.0);
        assert_eq!(t.len(), 121);
        for w in t.windows(2) {
            let d = to_ned(w[1].pose.position, w[0].pose.position).norm();
            assert!((d - 5.0 * DEFAULT_SAMPLE_PERIOD_S).abs() < 1e-3);
            assert!((w[1].pose.heading - FRAC_PI_2).abs() < 1e-9);
        }
        // short route is sailed back
        let b = TangentPlane::new(origin()).to_geo(NedPoint::new(100.0, 0.0));
        let t = waypoint_trajectory(&[origin(), b], 10.0, 1.0, Some(15.0)).unwrap();
        assert!((to_ned(t[15].pose.position, origin()).north - 50.0).abs() < 1e-6);
        assert!((t[15].pose.heading.abs() - std::f64::consts::PI).abs() < 1e-9);
        assert!(waypoint_trajectory(&[origin()], 1.0, 1.0, None).is_err());
    }

    #[test]
    fn spoof_offset_is_linear_and_left_of_course() {
        let truth = straight(5.0, 600.0);
        let gnss: Vec<GeodeticPoint> = truth.iter().map(|t| t.pose.position).collect();
        let t0 = truth[10].t;
        let spec = FaultSpec::spoof(t0, 20.0);
        let bad = inject_fault(&gnss, &truth, &spec);
        assert_eq!(bad[10], gnss[10]);
        assert_eq!(bad[5], gnss[5]);
        let k = truth.iter().position(|t| t.t - t0 >= 180.0 - 1e-9).unwrap();
        let off = to_ned(bad[k], gnss[k]);
        let expect = 20.0 * (truth[k].t - t0) / 60.0;
        assert!((off.norm() - expect).abs() < 1e-6, "{} vs {expect}", off.norm());
        // course is east, left is north
        assert!(off.north > 0.0 && off.east.abs() < 1e-6);
        let exact = FaultSpec::spoof(0.0, 20.0);
        let truth3 = [TimedPose { t: 180.0, pose: truth[0].pose }];
        let moved = inject_fault(&gnss[..1], &truth3, &exact);
        assert!((to_ned(moved[0], gnss[0]).norm() - 60.0).abs() < 1e-6);
    }

    #[test]
    fn jam_freezes_the_track() {
        let truth = straight(5.0, 600.0);
        let gnss: Vec<GeodeticPoint> = truth.iter().map(|t| t.pose.position).collect();
        let spec = FaultSpec::jam(truth[20].t + 1.0);
        let bad = inject_fault(&gnss, &truth, &spec);
        assert_eq!(&bad[..=20], &gnss[..=20]);
        assert!(bad[21..].iter().all(|p| *p == gnss[20]));
        assert_eq!(inject_fault(&gnss, &truth, &FaultSpec::none()), gnss);
    }

    #[test]
    fn jam_looks_like_spoof_at_vessel_speed() {
        let m = Mission { estimator: EstimatorMode::Surrogate(SurrogateParams { p_secondary: 0.0, ..SurrogateParams::default() }), ..mission(3600.0) };
        let t0 = 1200.0;
        let jam = simulate_residuals(&m, &FaultSpec::jam(t0)).unwrap();
        let spoof = simulate_residuals(&m, &FaultSpec::spoof(t0, 300.0)).unwrap();
        let sj = residual_slope(&jam, t0, t0 + 300.0).unwrap() * 60.0;
        let ss = residual_slope(&spoof, t0, t0 + 300.0).unwrap() * 60.0;
        assert!((sj / ss - 1.0).abs() < 0.05, "{sj} {ss}");
        assert!((sj / 300.0 - 1.0).abs() < 0.05);
    }

    #[test]
    fn runs_are_deterministic() {
        let m = mission(1800.0);
        let spec = FaultSpec::spoof(900.0, 20.0);
        let a = run_mission(&m, &spec).unwrap();
        let b = run_mission(&m, &spec).unwrap();
        assert_eq!(a, b);
        let c = run_mission(&m.with_seed(1), &spec).unwrap();
        assert_ne!(a.residuals, c.residuals);
    }

    #[test]
    fn combined_is_min_of_detectors() {
        let base = mission(2400.0);
        let h0 = h0_series(&base, 5, 3).unwrap();
        let cal = calibrate(&h0, &base.detector, 1e-3).unwrap();
        let m = Mission {
            detector: DetectorConfig { gamma_gauss: cal.gauss.gamma, gamma_kde: cal.kde.gamma, ..base.detector.clone() },
            ..base
        };
        let results = monte_carlo(&m, &FaultSpec::spoof(0.0, 20.0), 20, 9).unwrap();
        for r in &results {
            let tg = r.t_d_gauss.unwrap_or(f64::INFINITY);
            let tk = r.t_d_kde.unwrap_or(f64::INFINITY);
            assert_eq!(r.t_d_combined.unwrap_or(f64::INFINITY), tg.min(tk));
            // the fast path agrees with the streaming run
            let (fg, fk) = detection_times(&r.residuals, &m.detector, &r.fault);
            assert_eq!((fg, fk), (r.t_d_gauss, r.t_d_kde));
        }
        assert!(results.iter().filter(|r| r.t_d_combined.is_some()).count() >= 10);
        let j: f64 = results.iter().map(|r| r.summary().j_contribution).sum();
        let direct = performance_index(&results, |r| r.t_d_combined);
        assert!((j - direct).abs() <= 1e-9 * direct);
    }

    #[test]
    fn single_run_ensemble_matches_run_mission() {
        let m = mission(2400.0);
        let template = FaultSpec::spoof(0.0, 20.0);
        let mc = monte_carlo(&m, &template, 1, 17).unwrap();
        let onset = draw_onsets(&m, &m.detector, 1, 17)[0];
        let direct = run_mission(&m.with_seed(derive_seed(17, 0)), &FaultSpec { t_onset: onset, ..template }).unwrap();
        assert_eq!(mc[0], direct);
    }

    #[test]
    fn onsets_are_uniform() {
        let m = mission(7200.0);
        let (lo, hi) = m.onset_range(&m.detector);
        let onsets = draw_onsets(&m, &m.detector, 1000, 5);
        let bins = 10;
        let mut counts = vec![0usize; bins];
        for t in &onsets {
            assert!(*t >= lo && *t < hi);
            counts[(((t - lo) / (hi - lo)) * bins as f64) as usize] += 1;
        }
        let chi2: f64 = counts.iter().map(|&c| (c as f64 - 100.0).powi(2) / 100.0).sum();
        // 5% critical value with 9 degrees of freedom
        assert!(chi2 < 16.919, "{chi2} {counts:?}");
    }

    #[test]
    fn fault_free_runs_rarely_alarm() {
        let base = mission(1800.0);
        let h0 = h0_series(&base, 40, 21).unwrap();
        // calibrate so one alarm per run length is the budget
        let per_run = base.trajectory.len() - base.detector.span() + 1;
        let cal = calibrate(&h0, &base.detector, 1e-3 / per_run as f64 * 10.0).unwrap();
        let m = Mission {
            detector: DetectorConfig { gamma_gauss: cal.gauss.gamma, gamma_kde: cal.kde.gamma, ..base.detector.clone() },
            ..base
        };
        let alarms = (0..100)
            .filter(|&i| {
                let r = run_mission(&m.with_seed(derive_seed(77, i)), &FaultSpec::none()).unwrap();
                r.alarm.last() != Some(&AlarmSource::None)
            })
            .count();
        assert!(alarms <= 5, "{alarms}");
    }

    #[test]
    fn larger_slope_is_detected_no_later() {
        let base = mission(2400.0);
        let h0 = h0_series(&base, 5, 3).unwrap();
        let cal = calibrate(&h0, &base.detector, 1e-3).unwrap();
        let m = Mission {
            detector: DetectorConfig { gamma_gauss: cal.gauss.gamma, gamma_kde: cal.kde.gamma, ..base.detector.clone() },
            ..base
        };
        let med = |slope: f64| {
            let r = monte_carlo(&m, &FaultSpec::spoof(0.0, slope), 100, 4).unwrap();
            median(&r.iter().map(|x| x.penalized(x.t_d_combined)).collect::<Vec<_>>())
        };
        assert!(med(40.0) <= med(20.0));
    }

    #[test]
    fn tuning_single_point_and_dominance() {
        let m = mission(2400.0);
        let grid = TuneGrid { mu: vec![10], lambda: vec![20], o: vec![5], h: vec![5.0] };
        let cal = CalibrationSettings { p_fa: 1e-2, h0_runs: 3 };
        let r = tune_detector(&m, &FaultSpec::spoof(0.0, 20.0), &grid, 10, &cal, 1).unwrap();
        assert_eq!((r.gauss.mu, r.gauss.lambda, r.gauss.o), (10, 20, 5));
        assert_eq!(r.kde.h, Some(5.0));

        let grid = TuneGrid { mu: vec![10], lambda: vec![20], o: vec![5], h: vec![1e-3, 5.0] };
        let r = tune_detector(&m, &FaultSpec::spoof(0.0, 20.0), &grid, 10, &cal, 1).unwrap();
        let j = |h: f64| r.evaluated.iter().find(|p| p.h == Some(h)).unwrap().j;
        assert_eq!(r.kde.h, Some(if j(1e-3) < j(5.0) { 1e-3 } else { 5.0 }));
        assert_eq!(r.evaluated.len(), 3);
    }

    #[test]
    fn tuned_bandwidth_near_dense_optimum() {
        let m = mission(2400.0);
        let spec = FaultSpec::spoof(0.0, 20.0);
        let cal = CalibrationSettings { p_fa: 1e-2, h0_runs: 3 };
        let coarse: Vec<f64> = vec![1.0, 4.0, 16.0, 64.0];
        let dense: Vec<f64> = (0..=24).map(|i| 2f64.powf(i as f64 / 4.0)).collect();
        let grid = |h: Vec<f64>| TuneGrid { mu: vec![10], lambda: vec![20], o: vec![5], h };
        let rc = tune_detector(&m, &spec, &grid(coarse.clone()), 20, &cal, 2).unwrap();
        let rd = tune_detector(&m, &spec, &grid(dense), 20, &cal, 2).unwrap();
        let (hc, hd) = (rc.kde.h.unwrap(), rd.kde.h.unwrap());
        // within one coarse step (a factor of 4) of the dense optimum
        assert!((hc / hd).log(4.0).abs() <= 1.0 + 1e-9, "{hc} vs {hd}");
    }

    #[test]
    fn pipeline_mission_runs() {
        let o = origin();
        let chart = scenes::archipelago(o);
        let b = TangentPlane::new(o).to_geo(NedPoint::new(0.0, 300.0));
        let traj = waypoint_trajectory(&[o, b], 5.0, DEFAULT_SAMPLE_PERIOD_S, Some(40.0 * DEFAULT_SAMPLE_PERIOD_S)).unwrap();
        let mut m = Mission::new(traj, DetectorConfig { lambda: 10, mu: 5, o: 2, ..small_detector() });
        m.estimator = EstimatorMode::Pipeline;
        m.chart = Some(chart);
        m.first_stage.pso.n_iters = 15;
        let r = simulate_residuals(&m, &FaultSpec::none()).unwrap();
        assert_eq!(r.len(), 41);
        // nominal first-stage error is tens of meters, not hundreds
        let med = median(&r.iter().map(|s| s.r).collect::<Vec<_>>());
        assert!(med < 61.0, "{med}");
    }

    #[test]
    fn config_round_trip() {
        let json = r#"{
            "trajectory": {"waypoints": [[55.1, 10.6], [55.1, 10.8]], "speed_mps": 5.0},
            "detector": {"lambda": 20, "mu": 10, "o": 5, "h": 4.0},
            "fault": {"kind": "spoof", "t_onset": 900.0, "f_slope": 20.0},
            "seed": 3
        }"#;
        let cfg: MissionConfig = serde_json::from_str(json).unwrap();
        assert!(!cfg.detector.has_thresholds());
        let m = cfg.build(Path::new(".")).unwrap();
        assert_eq!(m.detector.mu, 10);
        assert_eq!(m.seed, 3);
        assert!(m.chart.is_some());
        let bad = r#"{"trajectory": {"waypoints": [[55.1, 10.6]], "speed_mps": 5.0}}"#;
        let cfg: MissionConfig = serde_json::from_str(bad).unwrap();
        assert!(matches!(cfg.build(Path::new(".")), Err(Error::Config(_))));
    }
}
