//! Command-line front end: `analyze`, `verify` and `orbit`.

use std::io::{self, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use lyapgen_core::{lift, LyapunovError, ScalarField};

use crate::config::{Kind, Overrides, SystemConfig};
use crate::export::{self, real};
use crate::pipeline::{Analysis, PipelineError};
use crate::verify::{verify, Status, VerificationReport};

/// Exit statuses.
pub const EXIT_OK: u8 = 0;
pub const EXIT_VERIFICATION_FAILED: u8 = 1;
pub const EXIT_USAGE: u8 = 2;
pub const EXIT_DEGENERATE: u8 = 3;

#[derive(Debug, Parser)]
#[command(
    name = "lyapgen",
    version,
    about = "Complete Lyapunov functions for semiflows from box-grid transition graphs"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the pipeline and all checks; write every output file.
    Analyze(Common),
    /// Run the pipeline and all checks; write report.json only.
    Verify(Common),
    /// Print (t, point, ell, L) along one orbit.
    Orbit {
        #[command(flatten)]
        common: Common,
        /// Initial point, comma separated.
        #[arg(
            long,
            value_delimiter = ',',
            allow_hyphen_values = true,
            required = true
        )]
        x0: Vec<f64>,
        /// Final time; snapped to the integrator grid.
        #[arg(long = "T")]
        t: f64,
    },
}

#[derive(Debug, Args)]
pub struct Common {
    /// System configuration (JSON, schema_version 1).
    pub config: PathBuf,
    /// Subdivision depth (boxes per axis = 2^depth).
    #[arg(long)]
    pub depth: Option<u32>,
    /// Sample points per box axis (k).
    #[arg(long)]
    pub samples: Option<usize>,
    /// Image padding in box widths (delta).
    #[arg(long, allow_hyphen_values = true)]
    pub padding: Option<f64>,
    /// Quadrature samples N on [0, 1].
    #[arg(long = "quad-n")]
    pub quad_n: Option<usize>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

impl Common {
    fn overrides(&self) -> Overrides {
        Overrides {
            depth: self.depth,
            samples: self.samples,
            padding: self.padding,
            quad_n: self.quad_n,
            out: self.out.clone(),
        }
    }
}

/// A failed command with its exit status.
#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub message: String,
}

impl Failure {
    fn usage(message: impl ToString) -> Self {
        Failure {
            code: EXIT_USAGE,
            message: message.to_string(),
        }
    }
}

impl From<PipelineError> for Failure {
    fn from(e: PipelineError) -> Self {
        let code = match &e {
            PipelineError::Lyapunov(
                LyapunovError::EmptyChainRecurrentSet
                | LyapunovError::TooManyComponents(_)
                | LyapunovError::DeadEnd(_)
                | LyapunovError::MonotoneInfeasible { .. },
            ) => EXIT_DEGENERATE,
            _ => EXIT_USAGE,
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

fn load(common: &Common) -> Result<Analysis, Failure> {
    let resolved = SystemConfig::load(&common.config)
        .and_then(|c| c.resolve(&common.overrides()))
        .map_err(Failure::usage)?;
    Ok(Analysis::run(resolved)?)
}

fn print_summary(out: &mut impl Write, a: &Analysis, r: &VerificationReport) -> io::Result<()> {
    let m = &r.metadata;
    writeln!(
        out,
        "{}: {} mode, dimension {}, depth {}, {} boxes, {} edges, {} exiting",
        m.name, m.mode, m.dimension, m.depth, m.box_count, m.edge_count, m.exiting_box_count
    )?;
    writeln!(
        out,
        "k = {}, delta = {}, h = {}, N = {}, seed = {}",
        m.samples_per_axis,
        m.padding,
        m.h.map_or("-".to_string(), |h| h.to_string()),
        m.quad_n,
        m.seed
    )?;
    writeln!(
        out,
        "{} chain transitive components ({} recurrent boxes), Cantor depth {}",
        m.recurrent_component_count, m.recurrent_box_count, m.cantor_depth
    )?;
    for c in &r.components {
        let first = a.morse.members(c.id)[0];
        writeln!(
            out,
            "  rank {:>2}  C{:<6} value {} = {}  {} boxes  near {}",
            c.rank,
            c.id,
            real(c.value),
            c.ternary,
            c.boxes,
            export::center_string(a, first)
        )?;
    }
    writeln!(
        out,
        "checks: {} passed, {} failed, {} skipped",
        r.summary.passed, r.summary.failed, r.summary.skipped
    )?;
    for c in &r.checks {
        let tag = match c.status {
            Status::Pass => "PASS",
            Status::Fail => "FAIL",
            Status::Skipped => "SKIP",
        };
        let measured = match (c.measured, c.tolerance) {
            (Some(m), Some(t)) => format!(" measured {m:e} (tolerance {t:e})"),
            (Some(m), None) => format!(" measured {m:e}"),
            _ => String::new(),
        };
        let reason = c
            .reason
            .as_deref()
            .map(|r| format!(" [{r}]"))
            .unwrap_or_default();
        writeln!(out, "  {tag} {}{measured}{reason}", c.name)?;
    }
    Ok(())
}

fn verdict(r: &VerificationReport) -> u8 {
    if r.passed() {
        EXIT_OK
    } else {
        EXIT_VERIFICATION_FAILED
    }
}

fn cmd_analyze(common: &Common, write_everything: bool) -> Result<u8, Failure> {
    let a = load(common)?;
    let report = verify(&a)?;
    let stdout = io::stdout();
    let mut out = stdout.lock();
    print_summary(&mut out, &a, &report).map_err(Failure::usage)?;
    let written = if write_everything {
        export::write_all(&a, &report)
    } else {
        export::write_report(&a.config.out, &report).map(|p| vec![p])
    };
    let written = written.map_err(|e| match e {
        export::ExportError::Lift(l) => Failure::from(PipelineError::from(l)),
        io => Failure::usage(io),
    })?;
    for p in written {
        writeln!(out, "wrote {}", p.display()).map_err(Failure::usage)?;
    }
    Ok(verdict(&report))
}

/// Rows of the orbit table are printed every this many time units.
const ORBIT_ROW_SPACING: f64 = 1.0 / 16.0;

fn cmd_orbit(common: &Common, x0: &[f64], t: f64) -> Result<u8, Failure> {
    let a = load(common)?;
    if a.config.kind != Kind::Ode {
        return Err(Failure::usage("orbit requires an ode-mode system"));
    }
    let dim = a.grid.dim();
    if x0.len() != dim {
        return Err(Failure::usage(format!(
            "--x0 has {} coordinates, the system has dimension {dim}",
            x0.len()
        )));
    }
    if !a.system.domain().contains(x0) {
        return Err(Failure::usage(format!(
            "--x0 {x0:?} lies outside the domain"
        )));
    }
    if !(t >= 0.0 && t.is_finite()) {
        return Err(Failure::usage(format!(
            "--T must be finite and non-negative, got {t}"
        )));
    }
    let spu = a.system.steps_per_unit().expect("ode mode") as usize;
    let total = a.system.flow(x0, t).map_err(Failure::usage)?;
    let stride = ((ORBIT_ROW_SPACING * spu as f64).round() as usize).max(1);
    let field = a.ell();
    let (lo, hi) = a.assignment.value_range();
    let tol_q = a.config.lift.tolerance(hi - lo);

    let stdout = io::stdout();
    let mut out = stdout.lock();
    let mut emit = || -> io::Result<()> {
        writeln!(
            out,
            "# orbit of {} from x0 = {x0:?} for T = {} ({} steps of h = {})",
            a.config.name, total.time, total.steps, a.config.h
        )?;
        if total.snapped {
            writeln!(
                out,
                "# requested T = {t} is not step-aligned; snapped to {}",
                total.time
            )?;
        }
        writeln!(
            out,
            "# N = {}, tol_q = {}; flag '!' marks L rising by more than tol_q",
            a.config.lift.quad_n,
            real(tol_q)
        )?;
        let mut header = vec!["t".to_string()];
        header.extend((1..=dim).map(|i| format!("x{i}")));
        header.extend(["ell", "L", "flag"].map(String::from));
        writeln!(out, "{}", header.join(","))?;

        let mut point = x0.to_vec();
        let mut step = 0usize;
        let mut prev_l: Option<f64> = None;
        loop {
            let l = lift(&field, &a.system, &point, &a.config.lift)
                .map_err(io::Error::other)?
                .value;
            let rising = prev_l.is_some_and(|p| l > p + tol_q);
            let mut row = vec![real(step as f64 / spu as f64)];
            row.extend(point.iter().map(|v| real(*v)));
            row.push(real(field.value(&point)));
            row.push(real(l));
            row.push(if rising { "!" } else { "" }.to_string());
            writeln!(out, "{}", row.join(","))?;
            prev_l = Some(l);
            if step == total.steps {
                break;
            }
            let next = (step + stride).min(total.steps);
            a.system
                .flow_steps_in_place(&mut point, next - step)
                .map_err(io::Error::other)?;
            step = next;
        }
        Ok(())
    };
    emit().map_err(Failure::usage)?;
    Ok(EXIT_OK)
}

/// Parses `args` and runs the selected command; returns the exit status.
pub fn run<I, T>(args: I) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    let result = match &cli.command {
        Command::Analyze(c) => cmd_analyze(c, true),
        Command::Verify(c) => cmd_analyze(c, false),
        Command::Orbit { common, x0, t } => cmd_orbit(common, x0, *t),
    };
    match result {
        Ok(code) => code,
        Err(f) => {
            eprintln!("lyapgen: {}", f.message);
            f.code
        }
    }
}

pub fn main() -> ExitCode {
    ExitCode::from(run(std::env::args_os()))
}
