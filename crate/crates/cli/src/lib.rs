//! File-based workflows around `loadid-core`: generate a synthetic window,
//! identify a load from a CSV record, and run the analysis studies.
//!
//! Each `cmd_*` function takes the parsed arguments of one subcommand, writes
//! its output files and returns what it wrote, so the binary and the tests
//! drive exactly the same code.

pub mod config;
pub mod error;

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use loadid_core::analysis::{
    landscape_slice_with, quasiconvexity_test_with, reliability_test_window, validate_identified,
    GridSpec, LandscapeGrid, QConvexReport, ReliabilityReport, ValidationReport,
    LANDSCAPE_SENTINEL,
};
use loadid_core::signalgen::{
    lowpass_filter_with, window_snr_db, AmbientSpec, EdgeMode, NoiseSpec,
};
use loadid_core::synth::{random_load_seeded, random_physical_load_seeded, synthesize};
use loadid_core::upper_stage::derive_seed;
use loadid_core::{
    feasible_region_from_data, minimize, CompositeLoad, IMParamsTransformed, IdentificationResult,
    MeasurementSeries, ObjectiveWindow, SimOptions, SystemConfig,
};
use serde::{Deserialize, Serialize};

pub use config::{FilterSection, NoiseSection, RunConfig};
pub use error::{CliError, Result};

#[derive(Debug, Parser)]
#[command(
    name = "loadid",
    version,
    about = "Composite load identification from ambient measurements"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate a composite load under ambient voltage and write a CSV window
    /// plus a truth JSON.
    Simulate(SimulateArgs),
    /// Identify motor and ZIP parameters from a CSV window.
    Identify(IdentifyArgs),
    /// Compare two loads under the same fault and report the fitting degree.
    Validate(ValidateArgs),
    /// Midpoint quasi-convexity test of the objective of a window.
    Qconvex(QconvexArgs),
    /// Multi-start reliability test on a window.
    Reliability(ReliabilityArgs),
    /// Export log10 of the objective over a plane through a center point.
    Landscape(LandscapeArgs),
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    /// TOML run configuration; flags override its values.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Seed for every random draw of the command.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub common: Common,
    /// Output CSV (`t,v,theta,p,q`).
    #[arg(long, short)]
    pub out: PathBuf,
    /// Truth JSON; defaults to the CSV path with a `.truth.json` extension.
    #[arg(long)]
    pub truth: Option<PathBuf>,
    /// Load to simulate (truth file, load JSON or identify output); drawn at
    /// random from the seed when absent.
    #[arg(long)]
    pub load: Option<PathBuf>,
    /// Draw the random motor in its original (reactance, time constant) form.
    #[arg(long)]
    pub physical: bool,
    /// Add measurement error at this SNR (dB).
    #[arg(long)]
    pub snr_db: Option<f64>,
    /// Window length (s).
    #[arg(long)]
    pub duration: Option<f64>,
    /// Sample period (s).
    #[arg(long)]
    pub dt: Option<f64>,
    /// Std of the white noise driving the ambient voltage (p.u.).
    #[arg(long)]
    pub noise_std: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum EdgeArg {
    Reflect,
    Predict,
}

impl From<EdgeArg> for EdgeMode {
    fn from(e: EdgeArg) -> Self {
        match e {
            EdgeArg::Reflect => EdgeMode::Reflect,
            EdgeArg::Predict => EdgeMode::Predict,
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct FilterArgs {
    /// Use the window as is.
    #[arg(long)]
    pub no_filter: bool,
    #[arg(long)]
    pub cutoff_hz: Option<f64>,
    /// How the filter continues the record past its ends.
    #[arg(long, value_enum)]
    pub filter_edge: Option<EdgeArg>,
}

#[derive(Debug, Clone, Args)]
pub struct IdentifyArgs {
    #[command(flatten)]
    pub common: Common,
    #[command(flatten)]
    pub filter: FilterArgs,
    /// Input CSV window.
    #[arg(long, short)]
    pub input: PathBuf,
    /// Output JSON.
    #[arg(long, short)]
    pub out: PathBuf,
    /// Number of random starts.
    #[arg(long)]
    pub starts: Option<usize>,
    #[arg(long)]
    pub max_iters: Option<usize>,
}

#[derive(Debug, Clone, Args)]
pub struct ValidateArgs {
    #[command(flatten)]
    pub common: Common,
    /// Reference load (truth file, load JSON or identify output).
    #[arg(long)]
    pub actual: PathBuf,
    /// Load under test, in any of the same forms.
    #[arg(long)]
    pub identified: PathBuf,
    #[arg(long, short)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct QconvexArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long, short)]
    pub input: PathBuf,
    #[arg(long, short)]
    pub out: PathBuf,
    /// Number of random point pairs.
    #[arg(long, default_value_t = 1000)]
    pub pairs: usize,
}

#[derive(Debug, Clone, Args)]
pub struct ReliabilityArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long, short)]
    pub input: PathBuf,
    #[arg(long, short)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 100)]
    pub starts: usize,
}

#[derive(Debug, Clone, Args)]
pub struct LandscapeArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long, short)]
    pub input: PathBuf,
    /// Output CSV matrix.
    #[arg(long, short)]
    pub out: PathBuf,
    /// Center of the slice (truth file, load JSON or identify output).
    #[arg(long)]
    pub center: PathBuf,
    /// First anchor as `a,b,h2,tm`; defaults to the center with `a` scaled
    /// by 1.5.
    #[arg(long)]
    pub d1: Option<String>,
    /// Second anchor as `a,b,h2,tm`; defaults to the center with `b` scaled
    /// by 1.5.
    #[arg(long)]
    pub d2: Option<String>,
    /// First grid axis as `min:max:n`.
    #[arg(long, default_value = "-1:1:101")]
    pub k1: String,
    #[arg(long, default_value = "-1:1:101")]
    pub k2: String,
    /// JSON summary with the infeasible count, the cells that could not be
    /// simulated and the grid minimum.
    #[arg(long)]
    pub report: Option<PathBuf>,
}

/// Companion of a simulated window: the load that produced it and how.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthFile {
    pub load: CompositeLoad,
    pub seed: u64,
    pub ambient: AmbientSpec,
    pub noise: Option<NoiseSpec>,
    pub system: SystemConfig,
    /// Realized SNR of the written window.
    pub snr_db: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterRecord {
    pub cutoff_hz: f64,
    pub edge: EdgeMode,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdentifyReport {
    #[serde(flatten)]
    pub result: IdentificationResult,
    pub seed: u64,
    pub filter: Option<FilterRecord>,
    /// Wall-clock time of filtering plus minimization (s). The only field
    /// that differs between reruns.
    pub elapsed_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QconvexOutput {
    pub seed: u64,
    #[serde(flatten)]
    pub report: QConvexReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReliabilityOutput {
    pub seed: u64,
    #[serde(flatten)]
    pub report: ReliabilityReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidateOutput {
    pub seed: u64,
    #[serde(flatten)]
    pub report: ValidationReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LandscapeSummary {
    pub rows: usize,
    pub cols: usize,
    pub n_infeasible: usize,
    /// Feasible cells whose simulation failed; they hold `log10` of the
    /// solver penalty.
    pub failed: Vec<(usize, usize)>,
    /// Cell with the smallest value.
    pub argmin: (usize, usize),
}

fn read_series(path: &Path) -> Result<MeasurementSeries> {
    let file = File::open(path).map_err(|e| CliError::io(path, e))?;
    MeasurementSeries::read_csv(BufReader::new(file))
        .map_err(|e| CliError::format(path, e.to_string()))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| CliError::io(path, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value).map_err(|e| CliError::io(path, e.into()))?;
    writeln!(w)
        .and_then(|_| w.flush())
        .map_err(|e| CliError::io(path, e))
}

/// Reads a load from a truth file, a bare `{motor, zip}` object or an
/// identify output.
pub fn read_load(path: &Path) -> Result<CompositeLoad> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let value: serde_json::Value =
        serde_json::from_str(&text).map_err(|e| CliError::format(path, e.to_string()))?;
    let parsed = if let Some(load) = value.get("load") {
        serde_json::from_value(load.clone())
    } else if value.get("motor").is_some() {
        serde_json::from_value(value)
    } else if let (Some(d), Some(os)) = (value.get("d_opt"), value.get("os_opt")) {
        serde_json::from_value(d.clone()).and_then(|d| {
            Ok(CompositeLoad::transformed(
                d,
                serde_json::from_value(os.clone())?,
            ))
        })
    } else {
        return Err(CliError::format(
            path,
            "expected a truth file, a {motor, zip} object or an identify result",
        ));
    };
    parsed.map_err(|e| CliError::format(path, e.to_string()))
}

fn parse_point(s: &str) -> Result<IMParamsTransformed> {
    let parts: Vec<f64> = s
        .split(',')
        .map(|x| x.trim().parse::<f64>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| CliError::Usage(format!("'{s}' is not a list of numbers")))?;
    let arr: [f64; 4] = parts
        .try_into()
        .map_err(|_| CliError::Usage(format!("'{s}' needs exactly four values a,b,h2,tm")))?;
    Ok(IMParamsTransformed::from_array(arr))
}

fn parse_grid(s: &str) -> Result<GridSpec> {
    let bad = || CliError::Usage(format!("grid '{s}' must look like min:max:n with n >= 1"));
    let parts: Vec<&str> = s.split(':').collect();
    let [min, max, n] = parts[..] else {
        return Err(bad());
    };
    let spec = GridSpec {
        min: min.trim().parse().map_err(|_| bad())?,
        max: max.trim().parse().map_err(|_| bad())?,
        n: n.trim().parse().map_err(|_| bad())?,
    };
    if spec.n == 0 || !spec.min.is_finite() || !spec.max.is_finite() {
        return Err(bad());
    }
    Ok(spec)
}

/// The system constants for a recorded window: the configured ones with the
/// step taken from the data.
fn system_for(cfg: &RunConfig, data: &MeasurementSeries) -> SystemConfig {
    SystemConfig {
        dt: data.dt(),
        ..cfg.system
    }
}

fn default_truth_path(out: &Path) -> PathBuf {
    out.with_extension("truth.json")
}

pub fn cmd_simulate(args: &SimulateArgs) -> Result<TruthFile> {
    let cfg = RunConfig::load(args.common.config.as_deref())?;
    let seed = cfg.seed(args.common.seed)?;
    let ambient = AmbientSpec {
        duration: args.duration.unwrap_or(cfg.ambient.duration),
        dt: args.dt.unwrap_or(cfg.ambient.dt),
        noise_std: args.noise_std.unwrap_or(cfg.ambient.noise_std),
        seed,
        ..cfg.ambient
    };
    ambient.validate()?;
    let system = SystemConfig {
        dt: ambient.dt,
        ..cfg.system
    };
    system.validate()?;
    let load = match &args.load {
        Some(path) => read_load(path)?,
        None if args.physical => random_physical_load_seeded(seed, &system)?,
        None => random_load_seeded(seed, &system)?,
    };
    let noise = args.snr_db.or(cfg.noise.snr_db).map(|snr| NoiseSpec {
        target_snr_db: snr,
        offset_fraction: cfg.noise.offset_fraction,
        seed: derive_seed(seed, 1),
    });
    let case = synthesize(&load, &ambient, noise.as_ref(), &system)?;

    let mut w = create(&args.out)?;
    case.measured
        .write_csv(&mut w)
        .and_then(|_| w.flush())
        .map_err(|e| CliError::io(&args.out, e))?;
    let truth = TruthFile {
        load,
        seed,
        ambient,
        noise,
        system,
        snr_db: case.snr_db,
    };
    let truth_path = args
        .truth
        .clone()
        .unwrap_or_else(|| default_truth_path(&args.out));
    write_json(&truth_path, &truth)?;
    Ok(truth)
}

pub fn cmd_identify(args: &IdentifyArgs) -> Result<IdentifyReport> {
    let cfg = RunConfig::load(args.common.config.as_deref())?;
    let seed = cfg.seed(args.common.seed)?;
    let raw = read_series(&args.input)?;
    let system = system_for(&cfg, &raw);
    let solver = loadid_core::SolverOptions {
        n_starts: args.starts.unwrap_or(cfg.solver.n_starts),
        max_iters: args.max_iters.unwrap_or(cfg.solver.max_iters),
        seed,
        ..cfg.solver
    };
    solver.validate()?;
    let filter = (!args.filter.no_filter && cfg.filter.enabled).then(|| FilterRecord {
        cutoff_hz: args.filter.cutoff_hz.unwrap_or(cfg.filter.cutoff_hz),
        edge: args
            .filter
            .filter_edge
            .map(EdgeMode::from)
            .unwrap_or(cfg.filter.edge),
    });

    let clock = Instant::now();
    let data = match &filter {
        Some(f) => lowpass_filter_with(&raw, f.cutoff_hz, f.edge)?,
        None => raw.clone(),
    };
    let region = feasible_region_from_data(&data);
    let mut result = minimize(&data, &region, &solver, &cfg.window, &system)?;
    let elapsed_s = clock.elapsed().as_secs_f64();
    // with the filter on, what it removed stands in for the measurement error
    if filter.is_some() {
        result.window.snr_estimate_db = window_snr_db(&data, &raw).ok();
    }
    let report = IdentifyReport {
        result,
        seed,
        filter,
        elapsed_s,
    };
    write_json(&args.out, &report)?;
    Ok(report)
}

pub fn cmd_validate(args: &ValidateArgs) -> Result<ValidateOutput> {
    let cfg = RunConfig::load(args.common.config.as_deref())?;
    let seed = cfg.seed(args.common.seed)?;
    let actual = read_load(&args.actual)?;
    let identified = read_load(&args.identified)?;
    let base = AmbientSpec {
        seed,
        ..cfg.ambient
    };
    let system = SystemConfig {
        dt: base.dt,
        ..cfg.system
    };
    let report = validate_identified(
        &actual,
        &identified,
        &cfg.fault,
        &base,
        &system,
        &SimOptions::default(),
    )?;
    let out = ValidateOutput { seed, report };
    write_json(&args.out, &out)?;
    Ok(out)
}

fn objective_window(cfg: &RunConfig, data: &MeasurementSeries) -> Result<ObjectiveWindow> {
    Ok(ObjectiveWindow::new(
        data,
        &cfg.window,
        &system_for(cfg, data),
    )?)
}

pub fn cmd_qconvex(args: &QconvexArgs) -> Result<QconvexOutput> {
    if args.pairs == 0 {
        return Err(CliError::Usage("--pairs must be at least 1".into()));
    }
    let cfg = RunConfig::load(args.common.config.as_deref())?;
    let seed = cfg.seed(args.common.seed)?;
    let data = read_series(&args.input)?;
    let window = objective_window(&cfg, &data)?;
    let region = feasible_region_from_data(&data);
    let report =
        quasiconvexity_test_with(&window, &region, args.pairs, seed, cfg.solver.penalty_value)?;
    let out = QconvexOutput { seed, report };
    write_json(&args.out, &out)?;
    Ok(out)
}

pub fn cmd_reliability(args: &ReliabilityArgs) -> Result<ReliabilityOutput> {
    if args.starts == 0 {
        return Err(CliError::Usage("--starts must be at least 1".into()));
    }
    let cfg = RunConfig::load(args.common.config.as_deref())?;
    let seed = cfg.seed(args.common.seed)?;
    let data = read_series(&args.input)?;
    let window = objective_window(&cfg, &data)?;
    let region = feasible_region_from_data(&data);
    let solver = loadid_core::SolverOptions {
        n_starts: args.starts,
        seed,
        ..cfg.solver
    };
    let report = reliability_test_window(&window, &region, &solver)?;
    let out = ReliabilityOutput { seed, report };
    write_json(&args.out, &out)?;
    Ok(out)
}

pub fn cmd_landscape(args: &LandscapeArgs) -> Result<LandscapeGrid> {
    let cfg = RunConfig::load(args.common.config.as_deref())?;
    let k1 = parse_grid(&args.k1)?;
    let k2 = parse_grid(&args.k2)?;
    let data = read_series(&args.input)?;
    let center = read_load(&args.center)?.motor.transformed()?;
    let scaled = |j: usize| {
        let mut x = center.to_array();
        x[j] *= 1.5;
        IMParamsTransformed::from_array(x)
    };
    let d1 = args
        .d1
        .as_deref()
        .map(parse_point)
        .transpose()?
        .unwrap_or_else(|| scaled(0));
    let d2 = args
        .d2
        .as_deref()
        .map(parse_point)
        .transpose()?
        .unwrap_or_else(|| scaled(1));
    let window = objective_window(&cfg, &data)?;
    let region = feasible_region_from_data(&data);
    let grid = landscape_slice_with(
        &window,
        &center,
        &d1,
        &d2,
        &k1,
        &k2,
        &region,
        cfg.solver.penalty_value,
    )?;

    let mut w = create(&args.out)?;
    grid.write_csv(&mut w)
        .and_then(|_| w.flush())
        .map_err(|e| CliError::io(&args.out, e))?;
    if let Some(path) = &args.report {
        write_json(path, &landscape_summary(&grid))?;
    }
    Ok(grid)
}

pub fn landscape_summary(grid: &LandscapeGrid) -> LandscapeSummary {
    let mut argmin = ((0, 0), f64::INFINITY);
    let mut n_infeasible = 0;
    for (i, row) in grid.values.iter().enumerate() {
        for (j, &v) in row.iter().enumerate() {
            n_infeasible += usize::from(v == LANDSCAPE_SENTINEL);
            if v < argmin.1 {
                argmin = ((i, j), v);
            }
        }
    }
    LandscapeSummary {
        rows: grid.k1.len(),
        cols: grid.k2.len(),
        n_infeasible,
        failed: grid.failed.clone(),
        argmin: argmin.0,
    }
}

/// Runs one subcommand and returns a one-line summary for the terminal.
pub fn run(cli: &Cli) -> Result<String> {
    Ok(match &cli.command {
        Command::Simulate(a) => {
            let t = cmd_simulate(a)?;
            let d = t.load.motor.transformed()?;
            match t.snr_db {
                Some(snr) => format!(
                    "wrote {} (a={} b={} h2={} tm={}, SNR {snr:.2} dB)",
                    a.out.display(),
                    d.a,
                    d.b,
                    d.h2,
                    d.tm
                ),
                None => format!(
                    "wrote {} (a={} b={} h2={} tm={})",
                    a.out.display(),
                    d.a,
                    d.b,
                    d.h2,
                    d.tm
                ),
            }
        }
        Command::Identify(a) => {
            let r = cmd_identify(a)?;
            let d = r.result.d_opt;
            format!(
                "a={} b={} h2={} tm={} OF={:e} in {:.3} s",
                d.a, d.b, d.h2, d.tm, r.result.of_opt, r.elapsed_s
            )
        }
        Command::Validate(a) => {
            let r = cmd_validate(a)?.report;
            format!("FD={} (P {}, Q {})", r.fd, r.fd_p, r.fd_q)
        }
        Command::Qconvex(a) => {
            let r = cmd_qconvex(a)?.report;
            format!(
                "SP={}% over {} pairs ({} resampled)",
                r.sp, r.n_pairs, r.n_resampled
            )
        }
        Command::Reliability(a) => {
            let r = cmd_reliability(a)?.report;
            format!("SP={}% over {} starts", r.sp, r.distances.len())
        }
        Command::Landscape(a) => {
            let s = landscape_summary(&cmd_landscape(a)?);
            format!(
                "wrote {}x{} grid to {} ({} infeasible, {} not simulable, min at {:?})",
                s.rows,
                s.cols,
                a.out.display(),
                s.n_infeasible,
                s.failed.len(),
                s.argmin
            )
        }
    })
}
