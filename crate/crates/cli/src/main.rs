use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand};
use coastnav::detect::write_trace;
use coastnav::lfm::{fit_lfm_em_spaced, load_dataset, EmFit, LfmParams};
use coastnav::radarsim::{cast_scan, RadarScan};
use coastnav::scenario::{
    aggregate, calibrate, derive_seed, h0_series, monte_carlo, run_mission, tune_detector, Calibration,
    EstimatorMode, Mission, MissionConfig, RunSummary, TuneGrid,
};
use coastnav::{Chart, Pose};
use serde::Serialize;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "coastnav", version, about = "Radar/chart positioning and GNSS attack monitoring simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Mission config (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Output directory, created if missing.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Overrides the config seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads; defaults to the number of cores.
    #[arg(long)]
    jobs: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// One mission with the configured fault: trace.csv and summary.json.
    Simulate {
        #[command(flatten)]
        common: Common,
    },
    /// Monte Carlo over random onsets: summaries.json and aggregate.json.
    Mc {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 100)]
        n: usize,
    },
    /// Grid search of the window lengths and bandwidth: best_config.json.
    Tune {
        #[command(flatten)]
        common: Common,
        /// TuneGrid JSON: {"mu": [..], "lambda": [..], "o": [..], "h": [..]}
        #[arg(long)]
        grid: PathBuf,
        /// Fault realizations per grid point.
        #[arg(long, default_value_t = 50)]
        n: usize,
    },
    /// EM fit of the likelihood-field mixture: lfm.json.
    FitLfm {
        #[command(flatten)]
        common: Common,
        /// Directory of NNNN.pose.csv / NNNN.scan.csv pairs. Without it,
        /// scans are simulated along the mission trajectory.
        #[arg(long)]
        dataset: Option<PathBuf>,
        /// Number of simulated scans.
        #[arg(long, default_value_t = 20)]
        scans: usize,
        #[arg(long, default_value_t = 1e-8)]
        tol: f64,
        #[arg(long, default_value_t = 200)]
        max_iters: usize,
        /// Shoreline sample spacing, meters.
        #[arg(long, default_value_t = 1.0)]
        spacing: f64,
    },
    /// Thresholds from fault-free runs: thresholds.json.
    Calibrate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        p_fa: Option<f64>,
        /// Minimum number of H0 statistic samples per detector.
        #[arg(long)]
        samples: Option<usize>,
    },
}

/// An error with the exit code it maps to.
struct Failure {
    code: u8,
    error: anyhow::Error,
}

fn config_err(e: impl Into<anyhow::Error>) -> Failure {
    Failure { code: 1, error: e.into() }
}

fn runtime_err(e: impl Into<anyhow::Error>) -> Failure {
    Failure { code: 2, error: e.into() }
}

type CliResult<T> = std::result::Result<T, Failure>;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {:#}", f.error);
            ExitCode::from(f.code)
        }
    }
}

fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Simulate { common } => {
            let (cfg, mission, out) = setup(&common)?;
            let mission = with_thresholds(&cfg, mission)?;
            let result = run_mission(&mission, &cfg.fault).map_err(runtime_err)?;
            write_trace(out.join("trace.csv"), &result.trace_rows()).map_err(runtime_err)?;
            write_json(&out.join("summary.json"), &result.summary())
        }
        Command::Mc { common, n } => {
            if n == 0 {
                return Err(config_err(anyhow!("--n must be at least 1")));
            }
            let (cfg, mission, out) = setup(&common)?;
            let mission = with_thresholds(&cfg, mission)?;
            let results = monte_carlo(&mission, &cfg.fault, n, mission.seed).map_err(runtime_err)?;
            let summaries: Vec<RunSummary> = results.iter().map(|r| r.summary()).collect();
            write_json(&out.join("summaries.json"), &summaries)?;
            write_json(&out.join("aggregate.json"), &aggregate(&results))
        }
        Command::Tune { common, grid, n } => {
            let grid: TuneGrid = read_json(&grid)?;
            let (cfg, mission, out) = setup(&common)?;
            let res = tune_detector(&mission, &cfg.fault, &grid, n, &cfg.calibration, mission.seed)
                .map_err(runtime_err)?;
            write_json(&out.join("best_config.json"), &res)
        }
        Command::FitLfm { common, dataset, scans, tol, max_iters, spacing } => {
            let (cfg, mission, out) = setup(&common)?;
            let chart = mission.chart.as_ref().ok_or_else(|| config_err(anyhow!("fit-lfm needs a chart")))?;
            let data = match dataset {
                Some(dir) => load_dataset(&dir, mission.radar.rho_max).map_err(config_err)?,
                None => simulate_dataset(&mission, chart, scans)?,
            };
            let fit = fit_lfm_em_spaced(&data, chart, &cfg.lfm, tol, max_iters, spacing).map_err(runtime_err)?;
            write_json(&out.join("lfm.json"), &LfmReport::new(&fit, data.len()))
        }
        Command::Calibrate { common, p_fa, samples } => {
            let (cfg, mission, out) = setup(&common)?;
            let p_fa = p_fa.unwrap_or(cfg.calibration.p_fa);
            if !(0.0..=1.0).contains(&p_fa) {
                return Err(config_err(anyhow!("--p-fa {p_fa} outside [0, 1]")));
            }
            let runs = match samples {
                Some(s) => runs_for_samples(&mission, s)?,
                None => cfg.calibration.h0_runs,
            };
            let cal = calibrate_mission(&mission, runs, p_fa)?;
            if cal.gauss.extrapolated {
                log::warn!("p_fa {p_fa} is below the ECDF resolution 1/{}", cal.n_samples);
            }
            write_json(&out.join("thresholds.json"), &cal)
        }
    }
}

fn setup(common: &Common) -> CliResult<(MissionConfig, Mission, PathBuf)> {
    if let Some(j) = common.jobs {
        if j == 0 {
            return Err(config_err(anyhow!("--jobs must be at least 1")));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(j)
            .build_global()
            .map_err(runtime_err)?;
    }
    let mut cfg = MissionConfig::load(&common.config)
        .with_context(|| format!("loading {}", common.config.display()))
        .map_err(config_err)?;
    if let Some(s) = common.seed {
        cfg.seed = s;
    }
    let base = common.config.parent().unwrap_or(Path::new("."));
    let mission = cfg.build(base).map_err(config_err)?;
    fs::create_dir_all(&common.out)
        .with_context(|| format!("creating {}", common.out.display()))
        .map_err(runtime_err)?;
    Ok((cfg, mission, common.out.clone()))
}

/// Fills missing thresholds by calibrating on fault-free runs.
fn with_thresholds(cfg: &MissionConfig, mut mission: Mission) -> CliResult<Mission> {
    if cfg.detector.has_thresholds() {
        return Ok(mission);
    }
    let cal = calibrate_mission(&mission, cfg.calibration.h0_runs, cfg.calibration.p_fa)?;
    log::info!("calibrated thresholds: gauss {}, kde {}", cal.gauss.gamma, cal.kde.gamma);
    if cfg.detector.gamma_gauss.is_none() {
        mission.detector.gamma_gauss = cal.gauss.gamma;
    }
    if cfg.detector.gamma_kde.is_none() {
        mission.detector.gamma_kde = cal.kde.gamma;
    }
    Ok(mission)
}

fn calibrate_mission(mission: &Mission, runs: usize, p_fa: f64) -> CliResult<Calibration> {
    if runs == 0 {
        return Err(config_err(anyhow!("calibration needs at least one H0 run")));
    }
    let series = h0_series(mission, runs, mission.seed).map_err(runtime_err)?;
    calibrate(&series, &mission.detector, p_fa).map_err(runtime_err)
}

fn runs_for_samples(mission: &Mission, samples: usize) -> CliResult<usize> {
    let per_run = (mission.trajectory.len() + 1).saturating_sub(mission.detector.span());
    if per_run == 0 {
        return Err(config_err(anyhow!("mission is shorter than the detector windows")));
    }
    Ok(samples.div_ceil(per_run).max(1))
}

fn simulate_dataset(mission: &Mission, chart: &Chart, n: usize) -> CliResult<Vec<(Pose, RadarScan)>> {
    if n == 0 {
        return Err(config_err(anyhow!("--scans must be at least 1")));
    }
    if matches!(mission.estimator, EstimatorMode::Surrogate(_)) {
        log::debug!("fit-lfm casts scans directly; the estimator mode is ignored");
    }
    let traj = &mission.trajectory;
    let step = (traj.len() / n).max(1);
    let reach = mission.radar.rho_max + 10.0 * mission.radar.sigma_range;
    let data = traj
        .iter()
        .step_by(step)
        .take(n)
        .enumerate()
        .map(|(i, tp)| {
            let samples = chart.extract_shoreline(tp.pose.position, reach, 1.0);
            let mut scan = cast_scan(&tp.pose, &samples, &mission.radar, derive_seed(mission.seed, i as u64));
            scan.timestamp = tp.t;
            (tp.pose, scan)
        })
        .collect();
    Ok(data)
}

#[derive(Serialize)]
struct LfmReport {
    #[serde(flatten)]
    params: LfmParams,
    scans: usize,
    iterations: usize,
    converged: bool,
    log_likelihood: f64,
}

impl LfmReport {
    fn new(fit: &EmFit, scans: usize) -> Self {
        LfmReport {
            params: fit.params,
            scans,
            iterations: fit.iterations,
            converged: fit.converged,
            log_likelihood: fit.log_likelihood.last().copied().unwrap_or(f64::NAN),
        }
    }
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> CliResult<T> {
    let text = fs::read_to_string(path)
        .with_context(|| format!("reading {}", path.display()))
        .map_err(config_err)?;
    serde_json::from_str(&text)
        .with_context(|| format!("parsing {}", path.display()))
        .map_err(config_err)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(runtime_err)?;
    text.push('\n');
    fs::write(path, text)
        .with_context(|| format!("writing {}", path.display()))
        .map_err(runtime_err)
}
