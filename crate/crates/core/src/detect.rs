//! Residual generation and the parallel double-window GLRT detectors.
//!
//! Window layout per step `k`: the test window M holds the newest `mu`
//! samples, the reference window L the `lambda` samples before a gap of `o`.

use crate::error::{Error, Result};
use crate::geodesy::{to_ned, GeodeticPoint};
use serde::{Deserialize, Serialize};
use std::collections::VecDeque;
use std::path::Path;

/// Density floor applied before taking logs.
pub const DENSITY_FLOOR: f64 = 1e-300;

/// Variance floor of the Gaussian fits, m².
pub const VARIANCE_FLOOR: f64 = 1e-6;

/// Mean tropical year, seconds.
pub const YEAR_S: f64 = 365.24219 * 86_400.0;

const LN_2PI: f64 = 1.8378770664093453;

/// Distance between the GNSS fix and the radar/chart fix, in the tangent
/// plane at the GNSS fix.
pub fn residual(x_gnss: GeodeticPoint, x_r: GeodeticPoint) -> f64 {
    to_ned(x_r, x_gnss).norm()
}

/// False-alarm probability per sample for one expected false alarm per `t_fa`.
pub fn p_fa_per_sample(sample_period_s: f64, t_fa_s: f64) -> f64 {
    sample_period_s / t_fa_s
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResidualSample {
    pub t: f64,
    pub r: f64,
}

fn mean_var(w: &[f64]) -> (f64, f64) {
    let n = w.len() as f64;
    let m = w.iter().sum::<f64>() / n;
    let v = w.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / n;
    (m, v.max(VARIANCE_FLOOR))
}

/// Gaussian GLR statistic: M's log-likelihood under its own MLE fit minus
/// under the MLE fit of L. `None` when either window has fewer than 2 samples.
pub fn gaussian_glrt(window_l: &[f64], window_m: &[f64]) -> Option<f64> {
    if window_l.len() < 2 || window_m.len() < 2 {
        return None;
    }
    let (m0, v0) = mean_var(window_l);
    let (m1, v1) = mean_var(window_m);
    let ll = |m: f64, v: f64| {
        window_m
            .iter()
            .map(|r| -0.5 * (LN_2PI + v.ln() + (r - m) * (r - m) / v))
            .sum::<f64>()
    };
    Some(ll(m1, v1) - ll(m0, v0))
}

/// Gaussian-kernel density estimate of `window` at `r`.
///
/// With `exclude` set, that index of `window` is left out (leave-one-out).
pub fn kde_density(r: f64, window: &[f64], h: f64, exclude: Option<usize>) -> f64 {
    let mut s = 0.0;
    for (i, &x) in window.iter().enumerate() {
        if Some(i) != exclude {
            let u = (r - x) / h;
            s += (-0.5 * u * u).exp();
        }
    }
    let n = window.len() - usize::from(exclude.is_some());
    s / (n as f64 * h * 2.5066282746310002)
}

/// KDE GLR statistic over the samples of M, with the evaluation point
/// included in its own window's estimate.
pub fn kde_glrt(window_l: &[f64], window_m: &[f64], h: f64) -> Option<f64> {
    kde_glrt_with(window_l, window_m, h, false)
}

pub fn kde_glrt_with(window_l: &[f64], window_m: &[f64], h: f64, leave_one_out: bool) -> Option<f64> {
    if window_l.len() < 2 || window_m.len() < 2 || !(h > 0.0) {
        return None;
    }
    let g = window_m
        .iter()
        .enumerate()
        .map(|(i, &r)| {
            let own = kde_density(r, window_m, h, leave_one_out.then_some(i));
            let reference = kde_density(r, window_l, h, None);
            own.max(DENSITY_FLOOR).ln() - reference.max(DENSITY_FLOOR).ln()
        })
        .sum();
    Some(g)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Threshold {
    pub gamma: f64,
    /// `p_fa` was below the ECDF resolution `1/n`; `gamma` is the sample maximum.
    pub extrapolated: bool,
}

/// Smallest sample `x` with `ECDF(x) ≥ 1 − p_fa`. Non-finite samples are ignored.
pub fn calibrate_threshold(g_samples: &[f64], p_fa: f64) -> Result<Threshold> {
    let mut s: Vec<f64> = g_samples.iter().copied().filter(|g| g.is_finite()).collect();
    if s.is_empty() {
        return Err(Error::EmptyInput("threshold calibration samples"));
    }
    if !(0.0..=1.0).contains(&p_fa) {
        return Err(Error::Precondition(format!("p_fa = {p_fa} outside [0, 1]")));
    }
    s.sort_by(f64::total_cmp);
    let n = s.len();
    let k = ((n as f64) * (1.0 - p_fa) - 1e-9).ceil().clamp(1.0, n as f64) as usize;
    Ok(Threshold {
        gamma: s[k - 1],
        extrapolated: p_fa < 1.0 / n as f64,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DetectorConfig {
    pub lambda: usize,
    pub mu: usize,
    pub o: usize,
    pub h: f64,
    pub gamma_gauss: f64,
    pub gamma_kde: f64,
    pub leave_one_out: bool,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        // 18 min reference, 9 min test, 10 min gap at a 4.96 s scan period
        DetectorConfig {
            lambda: 218,
            mu: 109,
            o: 121,
            h: 5.0,
            gamma_gauss: f64::INFINITY,
            gamma_kde: f64::INFINITY,
            leave_one_out: false,
        }
    }
}

impl DetectorConfig {
    pub fn validate(&self) -> Result<()> {
        if self.lambda < 2 || self.mu < 2 {
            return Err(Error::Config("window lengths must be at least 2".into()));
        }
        if !(self.h > 0.0) {
            return Err(Error::Config("KDE bandwidth must be positive".into()));
        }
        if self.gamma_gauss.is_nan() || self.gamma_kde.is_nan() {
            return Err(Error::Config("thresholds must not be NaN".into()));
        }
        Ok(())
    }

    pub fn span(&self) -> usize {
        self.lambda + self.o + self.mu
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AlarmSource {
    #[default]
    None,
    Gauss,
    Kde,
    Both,
}

impl AlarmSource {
    fn union(self, gauss: bool, kde: bool) -> Self {
        let g = gauss || matches!(self, AlarmSource::Gauss | AlarmSource::Both);
        let k = kde || matches!(self, AlarmSource::Kde | AlarmSource::Both);
        match (g, k) {
            (false, false) => AlarmSource::None,
            (true, false) => AlarmSource::Gauss,
            (false, true) => AlarmSource::Kde,
            (true, true) => AlarmSource::Both,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            AlarmSource::None => "none",
            AlarmSource::Gauss => "gauss",
            AlarmSource::Kde => "kde",
            AlarmSource::Both => "both",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Decision {
    WarmingUp,
    Nominal,
    Alarm(AlarmSource),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOutput {
    pub g_gauss: Option<f64>,
    pub g_kde: Option<f64>,
    pub decision: Decision,
}

/// Streaming state of the two detectors run in parallel.
///
/// The alarm latches: once raised it stays until [`Detector::reset`], and
/// its source accumulates every detector that has crossed its threshold.
#[derive(Debug, Clone)]
pub struct Detector {
    config: DetectorConfig,
    buf: VecDeque<f64>,
    last_t: Option<f64>,
    source: AlarmSource,
    first_gauss: Option<f64>,
    first_kde: Option<f64>,
}

impl Detector {
    pub fn new(config: DetectorConfig) -> Result<Self> {
        config.validate()?;
        Ok(Detector {
            buf: VecDeque::with_capacity(config.span()),
            config,
            last_t: None,
            source: AlarmSource::None,
            first_gauss: None,
            first_kde: None,
        })
    }

    pub fn config(&self) -> &DetectorConfig {
        &self.config
    }

    pub fn alarm(&self) -> bool {
        self.source != AlarmSource::None
    }

    pub fn source(&self) -> AlarmSource {
        self.source
    }

    /// Time of the first Gaussian exceedance since the last reset.
    pub fn first_gauss(&self) -> Option<f64> {
        self.first_gauss
    }

    pub fn first_kde(&self) -> Option<f64> {
        self.first_kde
    }

    /// Clears the alarm; the windows keep their contents.
    pub fn reset(&mut self) {
        self.source = AlarmSource::None;
        self.first_gauss = None;
        self.first_kde = None;
    }

    pub fn step(&mut self, sample: ResidualSample) -> Result<StepOutput> {
        if let Some(prev) = self.last_t {
            if !(sample.t > prev) {
                return Err(Error::OutOfOrder { prev, t: sample.t });
            }
        }
        if !(sample.r >= 0.0) || !sample.r.is_finite() {
            return Err(Error::Precondition(format!("residual {} at t = {} must be finite and ≥ 0", sample.r, sample.t)));
        }
        self.last_t = Some(sample.t);
        let span = self.config.span();
        if self.buf.len() == span {
            self.buf.pop_front();
        }
        self.buf.push_back(sample.r);
        if self.buf.len() < span {
            return Ok(StepOutput {
                g_gauss: None,
                g_kde: None,
                decision: if self.alarm() { Decision::Alarm(self.source) } else { Decision::WarmingUp },
            });
        }
        let c = &self.config;
        let w = self.buf.make_contiguous();
        let l = &w[..c.lambda];
        let m = &w[c.lambda + c.o..];
        let gg = gaussian_glrt(l, m);
        let gk = kde_glrt_with(l, m, c.h, c.leave_one_out);
        let eg = gg.is_some_and(|g| g > c.gamma_gauss);
        let ek = gk.is_some_and(|g| g > c.gamma_kde);
        if eg && self.first_gauss.is_none() {
            self.first_gauss = Some(sample.t);
        }
        if ek && self.first_kde.is_none() {
            self.first_kde = Some(sample.t);
        }
        self.source = self.source.union(eg, ek);
        Ok(StepOutput {
            g_gauss: gg,
            g_kde: gk,
            decision: if self.alarm() { Decision::Alarm(self.source) } else { Decision::Nominal },
        })
    }
}

/// Statistics of every full window position in `series`, without thresholds.
pub fn statistics_series(series: &[f64], config: &DetectorConfig) -> Vec<(f64, f64)> {
    let span = config.span();
    if series.len() < span {
        return Vec::new();
    }
    (span..=series.len())
        .map(|end| {
            let w = &series[end - span..end];
            let l = &w[..config.lambda];
            let m = &w[config.lambda + config.o..];
            (
                gaussian_glrt(l, m).expect("full windows"),
                kde_glrt_with(l, m, config.h, config.leave_one_out).expect("full windows"),
            )
        })
        .collect()
}

pub fn read_residuals(path: impl AsRef<Path>) -> Result<Vec<ResidualSample>> {
    #[derive(Deserialize)]
    struct Row {
        t_s: f64,
        r_m: f64,
    }
    let mut r = csv::Reader::from_path(path.as_ref())?;
    let mut out: Vec<ResidualSample> = Vec::new();
    for row in r.deserialize() {
        let row: Row = row?;
        if let Some(prev) = out.last() {
            if !(row.t_s > prev.t) {
                return Err(Error::OutOfOrder { prev: prev.t, t: row.t_s });
            }
        }
        out.push(ResidualSample { t: row.t_s, r: row.r_m });
    }
    Ok(out)
}

pub fn write_residuals(path: impl AsRef<Path>, samples: &[ResidualSample]) -> Result<()> {
    let mut w = csv::Writer::from_path(path.as_ref())?;
    w.write_record(["t_s", "r_m"])?;
    for s in samples {
        w.write_record([s.t.to_string(), s.r.to_string()])?;
    }
    w.flush().map_err(|e| Error::io(path.as_ref(), e))?;
    Ok(())
}

/// One row of the detector trace CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub t_s: f64,
    pub r_m: f64,
    pub g_gauss: Option<f64>,
    pub g_kde: Option<f64>,
    pub alarm: bool,
    pub source: AlarmSource,
}

pub fn write_trace(path: impl AsRef<Path>, rows: &[TraceRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path.as_ref())?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| Error::io(path.as_ref(), e))?;
    Ok(())
}
