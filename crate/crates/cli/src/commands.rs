//! Argument definitions and the four subcommands.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::{info, warn};
use nalgebra::{DMatrix, DVector};
use serde_json::json;
use streamdmd::kmd::KmdResult;
use streamdmd::linalg::{Orientation, PrecisionMode};
use streamdmd::runner::amplitudes_by_index;
use streamdmd::{
    run, select_modes, Method, ModeSelection, RitzSet, RunConfig, StreamConfig, Weights,
};
use streamdmd_datagen::{
    gray_scott, integrate_ode, synth_linear_stream, synth_lowrank_stream, synth_operator,
    GrayScottSpec, OdeSpec,
};

use crate::error::CliError;
use crate::selfcheck::CRITERIA;
use crate::snapshot_file::{read_any, write_snapshots, Dtype};

#[derive(Debug, Parser)]
#[command(
    name = "streamdmd",
    version,
    about = "Streaming dynamic mode decomposition"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a generated snapshot stream and a JSON sidecar of its parameters.
    Generate(GenerateArgs),
    /// Stream a snapshot file through one method, logging per-step metrics.
    Stream(StreamArgs),
    /// Print the eigenvalue and residual table of a completed run.
    Modes(ModesArgs),
    /// Run the acceptance checks and report pass/fail per criterion.
    Selfcheck(SelfcheckArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Generator {
    GrayScott,
    Chua,
    Lorenz,
    /// Noisy linear dynamics with a random well-conditioned operator.
    Linear,
    /// Rotation dynamics confined to a random subspace.
    Lowrank,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Format {
    F64,
    F32,
}

/// `NxM` grid size.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Grid(pub usize, pub usize);

impl FromStr for Grid {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let (a, b) = s
            .split_once(['x', 'X'])
            .ok_or_else(|| format!("expected NxM, got '{s}'"))?;
        let parse = |t: &str| {
            t.trim()
                .parse::<usize>()
                .map_err(|e| format!("grid '{s}': {e}"))
        };
        Ok(Grid(parse(a)?, parse(b)?))
    }
}

/// Three comma-separated reals.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Point3(pub [f64; 3]);

impl FromStr for Point3 {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let v: Vec<f64> = s
            .split(',')
            .map(|t| t.trim().parse::<f64>().map_err(|e| format!("'{s}': {e}")))
            .collect::<Result<_, _>>()?;
        let arr: [f64; 3] = v
            .try_into()
            .map_err(|_| format!("expected three values, got '{s}'"))?;
        Ok(Point3(arr))
    }
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    #[arg(value_enum)]
    pub generator: Generator,
    /// Output snapshot file; the sidecar is written next to it with `.json` appended.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value = "f64")]
    pub format: Format,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,

    #[arg(long, default_value = "96x96")]
    pub grid: Grid,
    /// Gray-Scott cell width.
    #[arg(long)]
    pub spacing: Option<f64>,
    /// Snapshots after the initial one (Gray-Scott); snapshot count for synthetic streams.
    #[arg(long, default_value_t = 300)]
    pub steps: usize,
    /// Solver steps between Gray-Scott snapshots.
    #[arg(long, default_value_t = 20)]
    pub stride: usize,
    #[arg(long)]
    pub u_only: bool,
    #[arg(long, default_value_t = 3)]
    pub squares: usize,
    #[arg(long)]
    pub du: Option<f64>,
    #[arg(long)]
    pub dv: Option<f64>,
    #[arg(long)]
    pub feed: Option<f64>,
    #[arg(long)]
    pub kill: Option<f64>,

    /// Output sampling step of the ODE generators.
    #[arg(long, default_value_t = 1e-3)]
    pub dt: f64,
    #[arg(long, default_value_t = 2.0)]
    pub t_max: f64,
    /// Initial state `x,y,z`.
    #[arg(long, allow_hyphen_values = true)]
    pub x0: Option<Point3>,
    /// Observe `x, y, z, x², y², z²` instead of the state alone.
    #[arg(long)]
    pub n0_compatible: bool,

    /// Snapshot length of the synthetic streams.
    #[arg(long, default_value_t = 64)]
    pub m: usize,
    /// Subspace dimension of the low-rank stream.
    #[arg(long, default_value_t = 8)]
    pub rank: usize,
    /// Additive noise level of the linear stream.
    #[arg(long, default_value_t = 0.0)]
    pub noise: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum PrecisionArg {
    F64,
    SimF32,
}

impl From<PrecisionArg> for PrecisionMode {
    fn from(p: PrecisionArg) -> Self {
        match p {
            PrecisionArg::F64 => PrecisionMode::Full64,
            PrecisionArg::SimF32 => PrecisionMode::Simulated32,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum OrientationArg {
    Upper,
    Lower,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Switch {
    On,
    Off,
}

/// `uniform` or `exp:β`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WeightsArg(pub Weights);

impl FromStr for WeightsArg {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        if s == "uniform" {
            return Ok(WeightsArg(Weights::Uniform));
        }
        let beta = s
            .strip_prefix("exp:")
            .ok_or_else(|| format!("expected 'uniform' or 'exp:BETA', got '{s}'"))?
            .parse::<f64>()
            .map_err(|e| format!("'{s}': {e}"))?;
        Ok(WeightsArg(Weights::Exponential(beta)))
    }
}

/// `all`, `top:L` or `res:TAU`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SelectArg(pub ModeSelection);

impl FromStr for SelectArg {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        if s == "all" {
            return Ok(SelectArg(ModeSelection::All));
        }
        if let Some(l) = s.strip_prefix("top:") {
            return l
                .parse()
                .map(|l| SelectArg(ModeSelection::TopL(l)))
                .map_err(|e| format!("'{s}': {e}"));
        }
        if let Some(t) = s.strip_prefix("res:") {
            return t
                .parse()
                .map(|t| SelectArg(ModeSelection::ResidualBelow(t)))
                .map_err(|e| format!("'{s}': {e}"));
        }
        Err(format!("expected 'all', 'top:L' or 'res:TAU', got '{s}'"))
    }
}

/// Options shared by `stream` and `modes`.
#[derive(Debug, Args)]
pub struct RunArgs {
    /// Snapshot file (`.csv` is read as one snapshot per line).
    pub input: PathBuf,
    #[arg(long, default_value = "one-basis-tq", value_parser = parse_method)]
    pub method: Method,
    #[arg(long, default_value_t = 15)]
    pub n0: usize,
    #[arg(long, env = "STREAMDMD_TOL1")]
    pub tol1: Option<f64>,
    #[arg(long, env = "STREAMDMD_TOL2")]
    pub tol2: Option<f64>,
    #[arg(long, env = "STREAMDMD_TOL3")]
    pub tol3: Option<f64>,
    #[arg(long)]
    pub max_rank: Option<usize>,
    #[arg(long, value_enum, default_value = "upper")]
    pub orientation: OrientationArg,
    #[arg(long, value_enum, default_value = "f64")]
    pub precision: PrecisionArg,
    #[arg(long, default_value_t = 30)]
    pub window: usize,
    #[arg(long, default_value = "uniform")]
    pub weights: WeightsArg,
    #[arg(long, default_value = "all")]
    pub select: SelectArg,
}

fn parse_method(s: &str) -> Result<Method, String> {
    s.parse().map_err(|e: streamdmd::DmdError| e.to_string())
}

#[derive(Debug, Args)]
pub struct StreamArgs {
    #[command(flatten)]
    pub run: RunArgs,
    /// Largest forecast horizon; 0 disables forecasting.
    #[arg(long, default_value_t = 0)]
    pub forecast: usize,
    /// Per-step metrics, one JSON object per line.
    #[arg(long)]
    pub metrics: Option<PathBuf>,
    /// Final eigenvalue table.
    #[arg(long)]
    pub modes: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "off")]
    pub oracle: Switch,
}

#[derive(Debug, Args)]
pub struct ModesArgs {
    #[command(flatten)]
    pub run: RunArgs,
    /// Write the table here instead of standard output.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SelfcheckArgs {
    /// Run only these criteria (1 to 10).
    #[arg(long, value_delimiter = ',')]
    pub only: Vec<u8>,
    #[arg(long, env = "STREAMDMD_TOL1")]
    pub tol1: Option<f64>,
    #[arg(long, env = "STREAMDMD_TOL2")]
    pub tol2: Option<f64>,
    #[arg(long, env = "STREAMDMD_TOL3")]
    pub tol3: Option<f64>,
}

pub fn execute(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Generate(a) => generate(&a),
        Command::Stream(a) => stream(&a),
        Command::Modes(a) => modes(&a),
        Command::Selfcheck(a) => selfcheck(&a),
    }
}

fn generate(a: &GenerateArgs) -> Result<(), CliError> {
    let (stream, params) = match a.generator {
        Generator::GrayScott => {
            let base = GrayScottSpec::default();
            let spec = GrayScottSpec {
                du: a.du.unwrap_or(base.du),
                dv: a.dv.unwrap_or(base.dv),
                feed: a.feed.unwrap_or(base.feed),
                kill: a.kill.unwrap_or(base.kill),
                nx: a.grid.0,
                ny: a.grid.1,
                spacing: a.spacing.unwrap_or(base.spacing),
                steps: a.steps,
                stride: a.stride,
                seed: a.seed,
                squares: a.squares,
                u_only: a.u_only,
            };
            (
                gray_scott(&spec)?,
                json!({ "gray_scott": spec, "dt": spec.dt() }),
            )
        }
        Generator::Chua | Generator::Lorenz => {
            let mut spec = if a.generator == Generator::Chua {
                OdeSpec::chua(a.x0.map_or([-0.7, 0.1, 0.1], |p| p.0), a.dt, a.t_max)
            } else {
                OdeSpec::lorenz(a.x0.map_or([1.0, 1.0, 1.0], |p| p.0), a.dt, a.t_max)
            };
            if !a.n0_compatible {
                spec.observables.truncate(3);
            }
            if a.seed != 0 {
                warn!("the ODE generators are deterministic; the seed is ignored");
            }
            (integrate_ode(&spec)?, json!({ "ode": spec }))
        }
        Generator::Linear => {
            let op = synth_operator(a.m, 0.8, 1.0, a.seed)?;
            let x0 = DVector::from_element(a.m, 1.0);
            let s = synth_linear_stream(&op.a, &x0, a.steps, a.noise, a.seed)?;
            (
                s,
                json!({ "linear": { "m": a.m, "n": a.steps, "noise": a.noise, "moduli": [0.8, 1.0], "eigenvalues": op.eigenvalues } }),
            )
        }
        Generator::Lowrank => {
            let s = synth_lowrank_stream(a.m, a.rank, a.steps, a.seed)?;
            (
                s,
                json!({ "lowrank": { "m": a.m, "rank": a.rank, "n": a.steps } }),
            )
        }
    };
    if stream.blew_up {
        return Err(CliError::Numerical(format!(
            "generator blew up after {} snapshots",
            stream.n()
        )));
    }
    let dtype = match a.format {
        Format::F64 => Dtype::F64,
        Format::F32 => Dtype::F32,
    };
    write_snapshots(&a.out, &stream.data, dtype)?;
    let sidecar = json!({
        "generator": format!("{:?}", a.generator).to_lowercase(),
        "seed": a.seed,
        "format": if dtype == Dtype::F64 { "f64" } else { "f32" },
        "m": stream.m(),
        "n": stream.n(),
        "params": params,
    });
    let path = sidecar_path(&a.out);
    let text = serde_json::to_string_pretty(&sidecar).map_err(|e| CliError::Data(e.to_string()))?;
    std::fs::write(&path, text + "\n").map_err(|e| CliError::io(&path, e))?;
    info!(
        "wrote {}x{} snapshots to {}",
        stream.m(),
        stream.n(),
        a.out.display()
    );
    Ok(())
}

pub fn sidecar_path(out: &Path) -> PathBuf {
    let mut s = out.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

/// Library defaults overridden by explicit tolerance flags.
fn stream_config(m: usize, r: &RunArgs) -> Result<StreamConfig, CliError> {
    let mut cfg = StreamConfig::for_dimension(m, r.precision.into());
    apply_tolerances(&mut cfg, r.tol1, r.tol2, r.tol3);
    cfg.max_rank = r.max_rank;
    cfg.orientation = match r.orientation {
        OrientationArg::Upper => Orientation::Upper,
        OrientationArg::Lower => Orientation::Lower,
    };
    cfg.validate()?;
    Ok(cfg)
}

fn apply_tolerances(
    cfg: &mut StreamConfig,
    tol1: Option<f64>,
    tol2: Option<f64>,
    tol3: Option<f64>,
) {
    if let Some(t) = tol1 {
        cfg.tol1 = t;
    }
    if let Some(t) = tol2 {
        cfg.tol2 = t;
    }
    if let Some(t) = tol3 {
        cfg.tol3 = t;
    }
}

fn run_config(data: &DMatrix<f64>, r: &RunArgs) -> Result<RunConfig, CliError> {
    let stream = stream_config(data.nrows(), r)?;
    Ok(RunConfig {
        window: r.window,
        weights: r.weights.0,
        selection: r.select.0,
        ..RunConfig::new(r.method, r.n0, stream)
    })
}

fn stream(a: &StreamArgs) -> Result<(), CliError> {
    let data = read_any(&a.run.input)?;
    let mut cfg = run_config(&data, &a.run)?;
    cfg.forecast = a.forecast;
    cfg.oracle = a.oracle == Switch::On;
    cfg.fit_modes = a.modes.is_some();

    let mut writer = match &a.metrics {
        Some(p) => Some((
            p,
            BufWriter::new(File::create(p).map_err(|e| CliError::io(p, e))?),
        )),
        None => None,
    };
    let mut write_err = None;
    let outcome = run(&data, &cfg, |rec| {
        if let Some((path, w)) = writer.as_mut() {
            let line = serde_json::to_string(&rec).expect("metrics serialize");
            if let Err(e) = writeln!(w, "{line}") {
                write_err.get_or_insert_with(|| CliError::io(path, e));
            }
        }
    })?;
    if let Some(e) = write_err {
        return Err(e);
    }
    if let Some((path, mut w)) = writer {
        w.flush().map_err(|e| CliError::io(path, e))?;
    }
    info!("{} records from {}", outcome.records, cfg.method);
    if let Some(path) = &a.modes {
        let ritz = outcome
            .ritz
            .as_ref()
            .ok_or_else(|| CliError::Numerical("no Ritz pairs at the end of the run".into()))?;
        let table = modes_table(ritz, outcome.kmd.as_ref(), cfg.selection);
        std::fs::write(path, table).map_err(|e| CliError::io(path, e))?;
    }
    Ok(())
}

fn modes(a: &ModesArgs) -> Result<(), CliError> {
    let data = read_any(&a.run.input)?;
    let mut cfg = run_config(&data, &a.run)?;
    cfg.fit_modes = true;
    let outcome = run(&data, &cfg, |_| {})?;
    let ritz = outcome
        .ritz
        .as_ref()
        .ok_or_else(|| CliError::Numerical("no Ritz pairs at the end of the run".into()))?;
    let table = modes_table(ritz, outcome.kmd.as_ref(), cfg.selection);
    match &a.out {
        Some(path) => std::fs::write(path, table).map_err(|e| CliError::io(path, e)),
        None => {
            print!("{table}");
            Ok(())
        }
    }
}

/// Comma-separated table of the selected Ritz pairs. The amplitude column is
/// empty when no fit is available.
pub fn modes_table(ritz: &RitzSet, kmd: Option<&KmdResult>, selection: ModeSelection) -> String {
    let amps = kmd.map(|k| amplitudes_by_index(k, ritz.len()));
    let mut out = String::from("re,im,abs,residual,amplitude\n");
    for i in select_modes(ritz, selection) {
        let lam = ritz.eigenvalues[i];
        let amp = amps
            .as_ref()
            .and_then(|a| a[i])
            .map_or(String::new(), |z| format!("{:e}", z.norm()));
        out.push_str(&format!(
            "{:e},{:e},{:e},{:e},{amp}\n",
            lam.re,
            lam.im,
            lam.norm(),
            ritz.residuals[i]
        ));
    }
    out
}

fn selfcheck(a: &SelfcheckArgs) -> Result<(), CliError> {
    // the tolerance overrides are validated even though the checks use their own settings
    let mut cfg = StreamConfig::for_dimension(1000, PrecisionMode::Full64);
    apply_tolerances(&mut cfg, a.tol1, a.tol2, a.tol3);
    cfg.validate()?;
    if let Some(bad) = a.only.iter().find(|id| !(1..=10).contains(*id)) {
        return Err(CliError::Usage(format!(
            "no criterion {bad}; criteria are numbered 1 to 10"
        )));
    }
    // the checks deliberately drive methods into rank caps and breakdowns
    if std::env::var_os("RUST_LOG").is_none() {
        log::set_max_level(log::LevelFilter::Error);
    }
    let mut failed = 0;
    for c in CRITERIA
        .iter()
        .filter(|c| a.only.is_empty() || a.only.contains(&c.id))
    {
        let report = c.evaluate();
        println!("{report}");
        failed += usize::from(!report.verdict.passed);
    }
    if failed > 0 {
        return Err(CliError::ChecksFailed(failed));
    }
    Ok(())
}
