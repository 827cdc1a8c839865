//! Command-line front end: `simulate`, `estimate`, `compare`, `observability`, `rmse`.
//!
//! Exit status: 0 on success, 2 on usage errors, 3 on malformed input files, 1 otherwise.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde::Serialize;

use crate::baseline::run_srs;
use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::filter::{run, TraceRecord};
use crate::io;
use crate::observability::scenario_observability;
use crate::report::{rmse_report, sample_initial_error, InitialError, RmseRecord, StateError, TruthFrame};
use crate::sim::{sample_count, GroundTruthRecord};
use crate::streams::SensorLog;

pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_PARSE: i32 = 3;

/// Resolved configuration copied next to simulated logs.
pub const CONFIG_FILE: &str = "config.toml";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const COMPARE_FILE: &str = "compare.csv";
pub const COMPARE_TRIALS_FILE: &str = "compare_trials.csv";

#[derive(Parser, Debug)]
#[command(name = "niekf", version, about = "Invariant EKF for legged robots on moving ground")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Synthesize sensor logs and ground truth.
    Simulate {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, env = "NIEKF_SEED", default_value_t = 0)]
        seed: u64,
        /// Output directory; defaults to `output.dir` from the config.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run one filter over a log directory.
    Estimate {
        #[arg(long, value_enum)]
        filter: FilterKind,
        #[arg(long)]
        logs: PathBuf,
        /// Defaults to the config saved alongside the logs.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = InitErrorMode::Sample)]
        init_error: InitErrorMode,
        #[arg(long, env = "NIEKF_SEED", default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 0)]
        trial: u64,
        #[arg(long, default_value_t = 5.0)]
        steady_start: f64,
        /// Output directory; defaults to the log directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run both filters over seeded initial errors and tabulate RMSE.
    Compare {
        #[arg(long)]
        logs: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 20)]
        trials: u64,
        #[arg(long, env = "NIEKF_SEED", default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 5.0)]
        steady_start: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print the observability report along the configured trajectory.
    Observability {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 10)]
        steps: usize,
        #[arg(long, default_value_t = 0.0)]
        t0: f64,
        /// Sample spacing in seconds; defaults to the robot IMU period.
        #[arg(long)]
        dt: Option<f64>,
    },
    /// RMSE of a trace against ground truth.
    Rmse {
        #[arg(long)]
        trace: PathBuf,
        #[arg(long)]
        truth: PathBuf,
        #[arg(long, value_enum, default_value_t = FrameArg::Relative)]
        frame: FrameArg,
        #[arg(long, default_value_t = 5.0)]
        steady_start: f64,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum FilterKind {
    Proposed,
    Srs,
}

impl FilterKind {
    pub fn name(self) -> &'static str {
        match self {
            Self::Proposed => "proposed",
            Self::Srs => "srs",
        }
    }

    /// Frame the filter's estimate lives in.
    pub fn frame(self) -> TruthFrame {
        match self {
            Self::Proposed => TruthFrame::Relative,
            Self::Srs => TruthFrame::World,
        }
    }

    pub fn trace_file(self) -> String {
        format!("trace_{}.csv", self.name())
    }

    pub fn summary_file(self) -> String {
        format!("summary_{}.json", self.name())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum InitErrorMode {
    Sample,
    None,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum FrameArg {
    Relative,
    World,
}

impl From<FrameArg> for TruthFrame {
    fn from(f: FrameArg) -> Self {
        match f {
            FrameArg::Relative => TruthFrame::Relative,
            FrameArg::World => TruthFrame::World,
        }
    }
}

/// Runs `kind` over `log`, starting from the first truth record perturbed by `err`.
pub fn estimate_trace(
    kind: FilterKind,
    log: &SensorLog,
    truth: &[GroundTruthRecord],
    config: &RunConfig,
    err: &InitialError,
) -> Result<Vec<TraceRecord>> {
    let first = truth.first().ok_or_else(|| Error::arg("ground truth is empty"))?;
    let start = err.apply(&first.state_in(kind.frame()));
    let chain = config.chain.chain()?;
    match kind {
        FilterKind::Proposed => {
            let mut fc = config.filter_config();
            fc.initial_state = start;
            run(log, &fc, &chain)
        }
        FilterKind::Srs => {
            let mut sc = config.srs_config();
            sc.initial_rot = start.rot;
            sc.initial_vel = start.vel;
            sc.initial_pos = start.pos;
            run_srs(log, &sc, &chain)
        }
    }
}

/// Pooled RMSE over trials with equal sample counts.
pub fn pool_rmse(records: &[RmseRecord]) -> Option<RmseRecord> {
    let n = records.len();
    if n == 0 {
        return None;
    }
    let mean_sq = |f: fn(&RmseRecord) -> crate::liegroup::Vec3| {
        (records.iter().map(|r| f(r).map(|x| x * x)).sum::<crate::liegroup::Vec3>() / n as f64).map(f64::sqrt)
    };
    Some(RmseRecord {
        vel: mean_sq(|r| r.vel),
        euler_deg: mean_sq(|r| r.euler_deg),
        pos: mean_sq(|r| r.pos),
        samples: records.iter().map(|r| r.samples).sum(),
    })
}

#[derive(Serialize)]
struct FileEntry {
    name: String,
    rows: usize,
}

#[derive(Serialize)]
struct Manifest {
    seed: u64,
    duration: f64,
    robot_rate: f64,
    ground_rate: f64,
    encoder_rate: f64,
    joints: usize,
    files: Vec<FileEntry>,
}

#[derive(Serialize)]
struct ErrorSummary {
    euler_deg: [f64; 3],
    vel: [f64; 3],
    pos: [f64; 3],
}

impl From<&InitialError> for ErrorSummary {
    fn from(e: &InitialError) -> Self {
        Self {
            euler_deg: e.euler.map(f64::to_degrees).into(),
            vel: e.vel.into(),
            pos: e.pos.into(),
        }
    }
}

impl From<StateError> for ErrorSummary {
    fn from(e: StateError) -> Self {
        Self {
            euler_deg: e.euler.map(f64::to_degrees).into(),
            vel: e.vel.into(),
            pos: e.pos.into(),
        }
    }
}

#[derive(Serialize)]
struct RmseSummary {
    steady_start: f64,
    samples: usize,
    vel: [f64; 3],
    euler_deg: [f64; 3],
    pos: [f64; 3],
}

impl RmseSummary {
    fn new(r: &RmseRecord, steady_start: f64) -> Self {
        Self {
            steady_start,
            samples: r.samples,
            vel: r.vel.into(),
            euler_deg: r.euler_deg.into(),
            pos: r.pos.into(),
        }
    }
}

#[derive(Serialize)]
struct EstimateSummary {
    filter: FilterKind,
    seed: u64,
    trial: u64,
    records: usize,
    updates: usize,
    initial_error: ErrorSummary,
    final_error: ErrorSummary,
    rmse: Option<RmseSummary>,
}

fn load_config(explicit: Option<&Path>, logs: Option<&Path>) -> Result<RunConfig> {
    if let Some(p) = explicit {
        return RunConfig::load(p);
    }
    if let Some(p) = logs.map(|d| d.join(CONFIG_FILE)).filter(|p| p.exists()) {
        return RunConfig::load(&p);
    }
    Ok(RunConfig::default())
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::fault(e.to_string()))?;
    text.push('\n');
    write_text(path, &text)
}

fn initial_error(mode: InitErrorMode, config: &RunConfig, seed: u64, trial: u64) -> Result<InitialError> {
    match mode {
        InitErrorMode::Sample => sample_initial_error(&config.init_error.ranges(), seed, trial),
        InitErrorMode::None => Ok(InitialError::zero()),
    }
}

fn simulate(config: Option<&Path>, seed: u64, out: Option<&Path>) -> Result<()> {
    let cfg = load_config(config, None)?;
    let out = out
        .map(Path::to_path_buf)
        .or_else(|| cfg.output.dir.clone())
        .ok_or_else(|| Error::arg("no output directory: pass --out or set output.dir"))?;
    let scenario = cfg.scenario(seed)?;
    let sim = scenario.synthesize(true)?;
    create_dir(&out)?;
    io::write_log(&out, &sim.log)?;
    io::write_truth(&out.join(io::TRUTH_FILE), &sim.truth)?;
    write_text(&out.join(CONFIG_FILE), &cfg.to_toml_string())?;
    let rig = &scenario.rig;
    let manifest = Manifest {
        seed,
        duration: cfg.duration,
        robot_rate: rig.robot_rate,
        ground_rate: rig.ground_rate,
        encoder_rate: rig.encoder_rate,
        joints: scenario.chain.joint_count(),
        files: vec![
            FileEntry { name: io::ROBOT_IMU_FILE.into(), rows: sim.log.robot_imu.len() },
            FileEntry { name: io::GROUND_IMU_FILE.into(), rows: sim.log.ground_imu.len() },
            FileEntry { name: io::ENCODER_FILE.into(), rows: sim.log.encoders.len() },
            FileEntry { name: io::TRUTH_FILE.into(), rows: sim.truth.len() },
        ],
    };
    debug_assert_eq!(manifest.files[0].rows, sample_count(cfg.duration, rig.robot_rate));
    write_json(&out.join(MANIFEST_FILE), &manifest)?;
    println!("wrote {} robot, {} ground, {} encoder samples to {}", manifest.files[0].rows, manifest.files[1].rows, manifest.files[2].rows, out.display());
    Ok(())
}

fn rmse_if_possible(trace: &[TraceRecord], truth: &[GroundTruthRecord], frame: TruthFrame, start: f64) -> Result<Option<RmseRecord>> {
    match rmse_report(trace, truth, frame, start) {
        Ok(r) => Ok(Some(r)),
        Err(Error::InvalidArgument(msg)) => {
            log::warn!("no RMSE: {msg}");
            Ok(None)
        }
        Err(e) => Err(e),
    }
}

#[allow(clippy::too_many_arguments)]
fn estimate(
    kind: FilterKind,
    logs: &Path,
    config: Option<&Path>,
    mode: InitErrorMode,
    seed: u64,
    trial: u64,
    steady_start: f64,
    out: Option<&Path>,
) -> Result<()> {
    let cfg = load_config(config, Some(logs))?;
    let log = io::read_log(logs)?;
    let truth = io::read_truth(&logs.join(io::TRUTH_FILE))?;
    let err = initial_error(mode, &cfg, seed, trial)?;
    let trace = estimate_trace(kind, &log, &truth, &cfg, &err)?;
    let out = out.unwrap_or(logs);
    create_dir(out)?;
    io::write_trace(&out.join(kind.trace_file()), &trace)?;

    let frame = kind.frame();
    let last = trace.last().ok_or_else(|| Error::fault("empty trace"))?;
    let truth_last = truth
        .iter()
        .find(|r| (r.t - last.t).abs() <= 1e-9)
        .ok_or_else(|| Error::fault(format!("no truth record at t = {}", last.t)))?;
    let summary = EstimateSummary {
        filter: kind,
        seed,
        trial,
        records: trace.len(),
        updates: trace.iter().filter(|r| !r.innovation_norm.is_nan()).count(),
        initial_error: (&err).into(),
        final_error: StateError::of_trace(last, &truth_last.state_in(frame)).into(),
        rmse: rmse_if_possible(&trace, &truth, frame, steady_start)?.map(|r| RmseSummary::new(&r, steady_start)),
    };
    write_json(&out.join(kind.summary_file()), &summary)?;
    println!("wrote {} records to {}", trace.len(), out.join(kind.trace_file()).display());
    Ok(())
}

/// Per-trial RMSE for both filters, in trial order.
pub fn compare_trials(
    log: &SensorLog,
    truth: &[GroundTruthRecord],
    config: &RunConfig,
    seed: u64,
    trials: u64,
    steady_start: f64,
) -> Result<Vec<(RmseRecord, RmseRecord)>> {
    (0..trials)
        .into_par_iter()
        .map(|i| {
            let err = sample_initial_error(&config.init_error.ranges(), seed, i)?;
            let mut pair = [FilterKind::Srs, FilterKind::Proposed].into_iter().map(|kind| {
                let trace = estimate_trace(kind, log, truth, config, &err)?;
                rmse_report(&trace, truth, kind.frame(), steady_start)
            });
            let srs = pair.next().expect("two filters")?;
            let proposed = pair.next().expect("two filters")?;
            Ok((srs, proposed))
        })
        .collect()
}

fn compare(logs: &Path, config: Option<&Path>, trials: u64, seed: u64, steady_start: f64, out: Option<&Path>) -> Result<()> {
    if trials == 0 {
        return Err(Error::arg("--trials must be at least 1"));
    }
    let cfg = load_config(config, Some(logs))?;
    let log = io::read_log(logs)?;
    let truth = io::read_truth(&logs.join(io::TRUTH_FILE))?;
    let results = compare_trials(&log, &truth, &cfg, seed, trials, steady_start)?;
    let (srs, proposed): (Vec<_>, Vec<_>) = results.iter().copied().unzip();
    let srs_all = pool_rmse(&srs).expect("non-empty");
    let proposed_all = pool_rmse(&proposed).expect("non-empty");

    let out = out.unwrap_or(logs);
    create_dir(out)?;
    io::write_rmse_table(&out.join(COMPARE_FILE), &srs_all, &proposed_all)?;
    let mut rows = String::from("trial,filter");
    for n in RmseRecord::NAMES {
        rows.push(',');
        rows.push_str(n);
    }
    rows.push('\n');
    for (i, (s, p)) in results.iter().enumerate() {
        for (name, r) in [("srs", s), ("proposed", p)] {
            rows.push_str(&format!("{i},{name}"));
            for x in r.components() {
                rows.push_str(&format!(",{x:.16e}"));
            }
            rows.push('\n');
        }
    }
    write_text(&out.join(COMPARE_TRIALS_FILE), &rows)?;

    println!("RMSE over {trials} trials, t >= {steady_start} s");
    println!("{:<10}{:>14}{:>14}", "", "SRS", "Proposed");
    for (name, (s, p)) in RmseRecord::NAMES.iter().zip(srs_all.components().iter().zip(proposed_all.components())) {
        println!("{name:<10}{s:>14.4}{p:>14.4}");
    }
    Ok(())
}

fn observability(config: Option<&Path>, steps: usize, t0: f64, dt: Option<f64>) -> Result<()> {
    let mut cfg = load_config(config, None)?;
    let dt = dt.unwrap_or(1.0 / cfg.rig.robot_rate);
    cfg.duration = cfg.duration.max(t0 + steps as f64 * dt);
    let scenario = cfg.scenario(0)?;
    let report = scenario_observability(&scenario, t0, dt, steps)?;
    print!("{report}");
    Ok(())
}

fn rmse(trace: &Path, truth: &Path, frame: FrameArg, steady_start: f64) -> Result<()> {
    let trace = io::read_trace(trace)?;
    let truth = io::read_truth(truth)?;
    let r = rmse_report(&trace, &truth, frame.into(), steady_start)?;
    println!("samples,{}", r.samples);
    for (name, x) in RmseRecord::NAMES.iter().zip(r.components()) {
        println!("{name},{x:.16e}");
    }
    Ok(())
}

pub fn execute(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate { config, seed, out } => simulate(config.as_deref(), seed, out.as_deref()),
        Command::Estimate {
            filter,
            logs,
            config,
            init_error,
            seed,
            trial,
            steady_start,
            out,
        } => estimate(filter, &logs, config.as_deref(), init_error, seed, trial, steady_start, out.as_deref()),
        Command::Compare {
            logs,
            config,
            trials,
            seed,
            steady_start,
            out,
        } => compare(&logs, config.as_deref(), trials, seed, steady_start, out.as_deref()),
        Command::Observability { config, steps, t0, dt } => observability(config.as_deref(), steps, t0, dt),
        Command::Rmse {
            trace,
            truth,
            frame,
            steady_start,
        } => rmse(&trace, &truth, frame, steady_start),
    }
}

pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Parse { .. } => EXIT_PARSE,
        _ => EXIT_FAILURE,
    }
}

/// Parses `args` (including the program name), runs the command and returns the exit status.
pub fn dispatch<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { 0 };
        }
    };
    match execute(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}
