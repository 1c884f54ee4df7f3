//! Command-line front end. Each subcommand runs one scenario and writes a
//! CSV table, either to `--out` or to standard output.
//!
//! Exit codes: 0 on success, 1 on usage, parameter or I/O errors, 2 when a
//! simulation produces a non-finite state.

use std::ffi::OsString;
use std::fs::File;
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::csvfmt::{self, fmt_sig, PRINT_DIGITS};
use crate::frfest::{self, H1Config, Window};
use crate::linear::{self, FlowMode, OperatingPoint};
use crate::params::PlantParameters;
use crate::plant::ExternalLoad;
use crate::sim::{self, InputSignal, Integrator, ModelKind, SimOptions, Trajectory};
use crate::Error;

#[derive(Debug, Parser)]
#[command(
    name = "hydrocyl",
    version,
    about = "Valve-controlled hydraulic cylinder: simulation and analysis"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate a model and write the state trajectory.
    Simulate(SimulateArgs),
    /// Estimate a frequency response from a down-chirp simulation.
    Frf(FrfArgs),
    /// Print derived constants and write operating-point frequency responses.
    Linearize(LinearizeArgs),
    /// Write static load flow against load pressure for several openings.
    Curves(CurvesArgs),
    /// Write the root locus of the position loop and print the critical gain.
    Rootlocus(RootLocusArgs),
}

#[derive(Debug, Args)]
struct Common {
    /// Parameter file with `key = value` lines.
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Output CSV file (standard output if omitted).
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ModelArg {
    Full,
    Reduced,
}

impl From<ModelArg> for ModelKind {
    fn from(m: ModelArg) -> Self {
        match m {
            ModelArg::Full => ModelKind::Full,
            ModelArg::Reduced => ModelKind::Reduced,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum MethodArg {
    Euler,
    Rk4,
}

impl From<MethodArg> for Integrator {
    fn from(m: MethodArg) -> Self {
        match m {
            MethodArg::Euler => Integrator::Euler,
            MethodArg::Rk4 => Integrator::Rk4,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum WindowArg {
    Hann,
    Rectangular,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ModeArg {
    Paper,
    Consistent,
}

#[derive(Debug, Args)]
struct SimulateArgs {
    #[arg(long, value_enum)]
    model: ModelArg,
    /// const:A | step:A[:T] | sine:A:F | chirp:A:F0:F1 (chirps sweep over --tend).
    #[arg(long, allow_hyphen_values = true)]
    input: String,
    /// Simulated time, s.
    #[arg(long)]
    tend: f64,
    /// Integration step, s.
    #[arg(long, default_value_t = 1e-4)]
    dt: f64,
    /// Skip the dead-zone, keeping the saturation at +-alpha.
    #[arg(long)]
    bypass_deadzone: bool,
    #[arg(long, value_enum, default_value = "euler")]
    method: MethodArg,
    #[command(flatten)]
    common: Common,
}

#[derive(Debug, Args)]
struct FrfArgs {
    #[arg(long, value_enum)]
    model: ModelArg,
    /// Chirp amplitude, m.
    #[arg(long)]
    amp: f64,
    /// Start frequency of the down-chirp, Hz.
    #[arg(long, default_value_t = 600.0)]
    f0: f64,
    /// End frequency of the down-chirp, Hz.
    #[arg(long, default_value_t = 1.0)]
    f1: f64,
    /// Sweep duration and simulated time, s.
    #[arg(long, default_value_t = 120.0)]
    tend: f64,
    #[arg(long, default_value_t = 1e-4)]
    dt: f64,
    /// Keep the dead-zone in the input path.
    #[arg(long)]
    with_deadzone: bool,
    /// Samples per Welch segment.
    #[arg(long, default_value_t = 1 << 14)]
    segment: usize,
    /// Fraction of overlap between segments.
    #[arg(long, default_value_t = 0.5)]
    overlap: f64,
    #[arg(long, value_enum, default_value = "hann")]
    window: WindowArg,
    /// Smoothing half-width in bins.
    #[arg(long, default_value_t = 2)]
    smooth: usize,
    /// Estimate from a trajectory CSV written by `simulate` with the same
    /// chirp instead of running a new simulation.
    #[arg(long, value_name = "FILE")]
    from_trajectory: Option<PathBuf>,
    #[command(flatten)]
    common: Common,
}

#[derive(Debug, Args)]
struct LinearizeArgs {
    /// Orifice opening of the operating point, m.
    #[arg(long, requires = "plhat")]
    zhat: Option<f64>,
    /// Load pressure of the operating point, Pa.
    #[arg(long, requires = "zhat", allow_hyphen_values = true)]
    plhat: Option<f64>,
    #[arg(long, value_enum, default_value = "paper")]
    mode: ModeArg,
    #[arg(long, default_value_t = 1.0)]
    fmin: f64,
    #[arg(long, default_value_t = 1000.0)]
    fmax: f64,
    #[arg(long, default_value_t = 400)]
    npoints: usize,
    #[command(flatten)]
    common: Common,
}

#[derive(Debug, Args)]
struct CurvesArgs {
    /// Comma-separated openings, m (default 0.1 alpha to alpha in steps of
    /// 0.1 alpha).
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    zlist: Option<Vec<f64>>,
    /// Load-pressure samples over [-PS, PS].
    #[arg(long, default_value_t = 201)]
    npoints: usize,
    #[command(flatten)]
    common: Common,
}

#[derive(Debug, Args)]
struct RootLocusArgs {
    /// Largest loop gain (default 10 k_crit).
    #[arg(long)]
    kmax: Option<f64>,
    /// Log-spaced gains over [1e-4 kmax, kmax], plus k = 0.
    #[arg(long, default_value_t = 400)]
    npoints: usize,
    #[command(flatten)]
    common: Common,
}

/// Runs the command line `argv` (program name first) and returns the exit
/// code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let stdout = io::stdout();
    let mut report = stdout.lock();
    match dispatch(cli.command, &mut report) {
        Ok(()) => 0,
        Err(e) => {
            let _ = report.flush();
            eprintln!("error: {e}");
            if let Error::InvalidParameters(v) = &e {
                for violation in v {
                    eprintln!("  violated: {violation}");
                }
            }
            match e {
                Error::NonFinite { .. } => 2,
                _ => 1,
            }
        }
    }
}

fn dispatch(cmd: Command, report: &mut dyn Write) -> Result<(), Error> {
    match cmd {
        Command::Simulate(a) => simulate(a, report),
        Command::Frf(a) => frf(a, report),
        Command::Linearize(a) => linearize(a, report),
        Command::Curves(a) => curves(a, report),
        Command::Rootlocus(a) => rootlocus(a, report),
    }
}

fn load_params(config: Option<&Path>) -> Result<PlantParameters, Error> {
    let p = match config {
        Some(path) => PlantParameters::from_config_file(path)?,
        None => PlantParameters::default(),
    };
    p.validated()
}

/// Writes a table through `emit` to `--out`, or to `report` when no file is
/// given.
fn emit_table(
    out: Option<&Path>,
    report: &mut dyn Write,
    emit: impl FnOnce(&mut dyn Write) -> io::Result<()>,
) -> Result<(), Error> {
    match out {
        Some(path) => {
            let mut w = BufWriter::new(File::create(path)?);
            emit(&mut w)?;
            w.flush()?;
        }
        None => emit(report)?,
    }
    Ok(())
}

/// `report` only receives summary lines when the table goes to a file.
fn say(out: Option<&Path>, report: &mut dyn Write, line: String) -> io::Result<()> {
    if out.is_some() {
        writeln!(report, "{line}")
    } else {
        writeln!(io::stderr(), "{line}")
    }
}

fn num(x: f64) -> String {
    fmt_sig(x, PRINT_DIGITS)
}

fn simulate(a: SimulateArgs, report: &mut dyn Write) -> Result<(), Error> {
    let p = load_params(a.common.config.as_deref())?;
    let sig = InputSignal::parse(&a.input, a.tend)?;
    let opts = SimOptions::new(a.model.into(), a.tend, a.dt)
        .bypass(a.bypass_deadzone)
        .integrator(a.method.into());
    let tr = sim::integrate(&p, &sig, &ExternalLoad::Zero, &opts)?;
    let out = a.common.out.as_deref();
    emit_table(out, report, |w| tr.write_csv(w))?;
    say(
        out,
        report,
        format!("{} records, model {}, input {}", tr.len(), opts.model, sig),
    )?;
    Ok(())
}

fn frf(a: FrfArgs, report: &mut dyn Write) -> Result<(), Error> {
    let p = load_params(a.common.config.as_deref())?;
    let sig = InputSignal::DownChirp {
        amplitude: a.amp,
        f_start: a.f0,
        f_end: a.f1,
        duration: a.tend,
    };
    sig.check()?;
    let cfg = H1Config {
        segment_length: a.segment,
        overlap: a.overlap,
        window: match a.window {
            WindowArg::Hann => Window::Hann,
            WindowArg::Rectangular => Window::Rectangular,
        },
        ..H1Config::default()
    };
    let tr = match &a.from_trajectory {
        Some(path) => Trajectory::read_csv(BufReader::new(File::open(path)?))?,
        None => {
            let opts = SimOptions::new(a.model.into(), a.tend, a.dt).bypass(!a.with_deadzone);
            sim::integrate(&p, &sig, &ExternalLoad::Zero, &opts)?
        }
    };
    let est = frfest::trajectory_frf(&tr, &sig, "x_dot", &cfg, a.smooth)?;
    let out = a.common.out.as_deref();
    emit_table(out, report, |w| est.write_csv(w))?;
    if let Some((f, db)) = est.peak_in_band(a.f1.min(a.f0), a.f0.max(a.f1)) {
        say(out, report, format!("peak: {} Hz, {} dB", num(f), num(db)))?;
    }
    if !est.rejected.is_empty() {
        say(
            out,
            report,
            format!("rejected bins: {}", est.rejected.len()),
        )?;
    }
    Ok(())
}

fn linearize(a: LinearizeArgs, report: &mut dyn Write) -> Result<(), Error> {
    let p = load_params(a.common.config.as_deref())?;
    let d = p.derive();
    let mode = match a.mode {
        ModeArg::Paper => FlowMode::Literal,
        ModeArg::Consistent => FlowMode::Consistent,
    };
    writeln!(report, "K = {}", num(d.k))?;
    writeln!(report, "Abar = {}", num(d.abar))?;
    writeln!(report, "Vt = {}", num(d.vt))?;
    writeln!(report, "omega_c = {}", num(d.omega_c))?;
    writeln!(report, "zeta = {}", num(d.zeta))?;

    let points: Vec<(String, OperatingPoint)> = match (a.zhat, a.plhat) {
        (Some(z), Some(pl)) => vec![(String::new(), OperatingPoint::new(z, pl))],
        _ => {
            let mut v = Vec::new();
            for zf in [0.05, 0.95] {
                for pf in [0.05, 0.95] {
                    v.push((
                        format!("_z{zf}_pl{pf}"),
                        OperatingPoint::relative(zf, pf, &p),
                    ));
                }
            }
            v
        }
    };
    if !(a.fmin > 0.0 && a.fmax > a.fmin && a.npoints >= 2) {
        return Err(Error::Domain(
            "need 0 < fmin < fmax and npoints >= 2".into(),
        ));
    }
    let freqs = linear::logspace(a.fmin, a.fmax, a.npoints);
    let mut header = vec!["f_hz".to_string()];
    let mut columns: Vec<Vec<f64>> = Vec::new();
    for (suffix, op) in &points {
        let c = linear::flow_coefficients(op, &p, mode)?;
        let tf = linear::closed_linear_tf_from(&c, &p);
        let label = if suffix.is_empty() {
            String::new()
        } else {
            format!(" [{}]", &suffix[1..])
        };
        writeln!(report, "Cq{label} = {}", num(c.cq))?;
        writeln!(report, "Cqp{label} = {}", num(c.cqp))?;
        let resp = linear::frf_eval(&tf, &freqs);
        header.push(format!("mag_db{suffix}"));
        header.push(format!("phase_deg{suffix}"));
        columns.push(resp.magnitude_db());
        columns.push(resp.phase_deg());
    }
    let rows = (0..freqs.len()).map(|i| {
        let mut r = vec![freqs[i]];
        r.extend(columns.iter().map(|c| c[i]));
        r
    });
    match a.common.out.as_deref() {
        Some(path) => {
            let mut w = BufWriter::new(File::create(path)?);
            csvfmt::write_table(&mut w, &header, rows)?;
        }
        None => {
            writeln!(report)?;
            csvfmt::write_table(&mut *report, &header, rows)?;
        }
    }
    Ok(())
}

fn curves(a: CurvesArgs, report: &mut dyn Write) -> Result<(), Error> {
    let p = load_params(a.common.config.as_deref())?;
    let z_values = a
        .zlist
        .unwrap_or_else(|| (1..=10).map(|i| i as f64 * 0.1 * p.alpha).collect());
    if a.npoints < 2 {
        return Err(Error::Domain("npoints must be at least 2".into()));
    }
    let n = a.npoints;
    let grid: Vec<f64> = (0..n)
        .map(|j| -p.ps + 2.0 * p.ps * j as f64 / (n - 1) as f64)
        .collect();
    let table = linear::flow_pressure_curves(&z_values, &grid, &p);
    let out = a.common.out.as_deref();
    emit_table(out, report, |w| table.write_csv(w))?;
    say(
        out,
        report,
        format!("{} openings x {} load pressures", z_values.len(), n),
    )?;
    Ok(())
}

fn rootlocus(a: RootLocusArgs, report: &mut dyn Write) -> Result<(), Error> {
    let p = load_params(a.common.config.as_deref())?;
    let kc = linear::critical_gain(&p);
    let kmax = a.kmax.unwrap_or(10.0 * kc);
    if !(kmax > 0.0) || a.npoints < 2 {
        return Err(Error::Domain("need kmax > 0 and npoints >= 2".into()));
    }
    let mut gains = vec![0.0];
    gains.extend(linear::logspace(1e-4 * kmax, kmax, a.npoints));
    let poles = linear::root_locus(&p, &gains);
    let out = a.common.out.as_deref();
    emit_table(out, report, |w| {
        linear::write_root_locus_csv(w, &gains, &poles)
    })?;
    say(out, report, format!("k_crit = {}", num(kc)))?;
    match linear::locate_crossing(&p, &gains) {
        Some(c) => say(
            out,
            report,
            format!(
                "crossing: k = {}, omega = {} rad/s",
                num(c.gain),
                num(c.omega)
            ),
        )?,
        None => say(out, report, "no crossing below kmax".to_string())?,
    }
    Ok(())
}
