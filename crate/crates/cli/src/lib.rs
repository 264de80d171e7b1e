//! Command-line front end for `convmix`: verification suite, benchmarks,
//! context-parallel simulation runs, FLOP tables and smoke training.

pub mod bench;
pub mod settings;
pub mod verify;

use std::ffi::OsString;
use std::fmt;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use convmix::blockconv::two_stage_flops;
use convmix::cpsim::{run_scheme, ExecMode, SchemeRun};
use convmix::hyena::{smoke_train, SmokeOptions, TrainReport};
use convmix::rng;

pub use bench::{cmd_bench, to_csv, BenchRecord, CSV_HEADER};
pub use settings::{LenSpec, Settings};
pub use verify::{cmd_verify, CheckResult, Verdict, VerifyReport};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILED: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

/// Largest loss ratio `smoke-train` accepts.
pub const SMOKE_BAR: f64 = 0.5;

#[derive(Debug)]
pub enum CliError {
    /// Bad flags, config or dimensions.
    Usage(String),
    /// A run completed but did not meet its bar.
    Failed(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Failed(_) => EXIT_FAILED,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) | CliError::Failed(m) => f.write_str(m),
        }
    }
}

impl std::error::Error for CliError {}

impl From<convmix::Error> for CliError {
    fn from(e: convmix::Error) -> Self {
        match e {
            convmix::Error::Diverged { .. } => CliError::Failed(e.to_string()),
            other => CliError::Usage(other.to_string()),
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "convmix", version, about = "Blocked, FFT and context-parallel convolution toolkit")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub flags: Flags,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the oracle and invariant suite.
    Verify,
    /// Time one operation over a length sweep and emit CSV.
    Bench,
    /// Run one context-parallel scheme and report its traffic.
    Cpsim,
    /// Tabulate two-stage model FLOPs over a length sweep.
    Flops,
    /// Fit a small residual SE/LI stack to a shift task.
    SmokeTrain,
}

/// Flags mirror the config keys; values given here override `--config`.
#[derive(Debug, Default, clap::Args)]
pub struct Flags {
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<String>,
    #[arg(long, global = true, value_name = "f32|f64")]
    pub dtype: Option<String>,
    #[arg(long, global = true, value_name = "N|A..B")]
    pub len: Option<String>,
    #[arg(long, global = true)]
    pub filter_len: Option<String>,
    #[arg(long, global = true)]
    pub block_size: Option<String>,
    #[arg(long, global = true)]
    pub width: Option<String>,
    #[arg(long, global = true)]
    pub group_size: Option<String>,
    #[arg(long, global = true)]
    pub ranks: Option<String>,
    #[arg(long, global = true)]
    pub scheme: Option<String>,
    #[arg(long, global = true, value_name = "seq|zigzag")]
    pub layout: Option<String>,
    #[arg(long, global = true)]
    pub pipe: Option<String>,
    #[arg(long, global = true)]
    pub op: Option<String>,
    #[arg(long, global = true)]
    pub reps: Option<String>,
    #[arg(long, global = true)]
    pub steps: Option<String>,
    #[arg(long, global = true)]
    pub lr: Option<String>,
    #[arg(long, global = true, value_name = "PATH")]
    pub csv: Option<String>,
    #[arg(long, global = true, value_name = "PATH")]
    pub log: Option<String>,
}

impl Flags {
    /// Defaults, then the config file, then explicit flags.
    pub fn settings(&self) -> Result<Settings, CliError> {
        let mut s = match &self.config {
            Some(path) => Settings::from_config_file(path).map_err(CliError::Usage)?,
            None => Settings::default(),
        };
        let pairs = [
            ("seed", &self.seed),
            ("dtype", &self.dtype),
            ("len", &self.len),
            ("filter-len", &self.filter_len),
            ("block-size", &self.block_size),
            ("width", &self.width),
            ("group-size", &self.group_size),
            ("ranks", &self.ranks),
            ("scheme", &self.scheme),
            ("layout", &self.layout),
            ("pipe", &self.pipe),
            ("op", &self.op),
            ("reps", &self.reps),
            ("steps", &self.steps),
            ("lr", &self.lr),
            ("csv", &self.csv),
            ("log", &self.log),
        ];
        for (key, value) in pairs {
            if let Some(v) = value {
                s.set(key, v).map_err(|e| CliError::Usage(format!("--{key}: {e}")))?;
            }
        }
        Ok(s)
    }
}

#[derive(Debug, Clone)]
pub struct CpsimReport {
    pub settings: Settings,
    pub run: SchemeRun,
}

impl CpsimReport {
    pub fn within_tolerance(&self) -> bool {
        self.run.max_abs_err <= self.settings.scheme.tolerance()
    }
}

impl fmt::Display for CpsimReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = &self.settings;
        writeln!(
            f,
            "scheme {} ranks {} layout {} d {} l {} lh {}",
            s.scheme,
            s.ranks,
            s.layout.name(),
            s.width,
            s.len.start,
            s.filter_len
        )?;
        writeln!(f, "max_abs_err {:.3e} (tol {:.0e})", self.run.max_abs_err, s.scheme.tolerance())?;
        writeln!(f, "messages {}", self.run.messages())?;
        write!(f, "elements {}", self.run.elements())
    }
}

pub fn cmd_cpsim(s: &Settings) -> Result<CpsimReport, CliError> {
    let len = s.single_len("cpsim").map_err(CliError::Usage)?;
    let mut r = rng::seeded(s.seed);
    let groups = bench::random_groups(&mut r, s.width, s.group_size, s.filter_len)?;
    let x = rng::uniform_tensor::<f64>(&mut r, s.width, len);
    let run = run_scheme(s.scheme, &x, &groups, s.ranks, s.layout, s.pipe, ExecMode::Sequential)?;
    if let Some(path) = &s.log {
        run.group
            .write_log(path)
            .map_err(|e| CliError::Usage(format!("cannot write log {}: {e}", path.display())))?;
    }
    Ok(CpsimReport { settings: s.clone(), run })
}

/// Model FLOP rows; no kernel runs, so timing and error columns are empty.
pub fn cmd_flops(s: &Settings) -> Vec<BenchRecord> {
    s.len
        .values()
        .into_iter()
        .map(|l| BenchRecord {
            op: "two_stage".into(),
            scheme: None,
            d: s.width,
            l,
            lh: s.filter_len,
            lb: Some(s.block_size),
            ranks: None,
            wall_ns: None,
            flops: Some(two_stage_flops(l as u64, s.block_size as u64, s.width as u64)),
            max_abs_err: None,
            elements_moved: None,
        })
        .collect()
}

pub fn smoke_options(s: &Settings) -> SmokeOptions {
    SmokeOptions {
        steps: s.steps,
        seed: s.seed,
        lr: s.lr,
        ..SmokeOptions::default()
    }
}

pub fn cmd_smoke_train(s: &Settings) -> Result<TrainReport, CliError> {
    Ok(smoke_train(&smoke_options(s))?)
}

fn emit(path: Option<&Path>, text: &str, out: &mut dyn Write) -> Result<(), CliError> {
    match path {
        Some(p) => fs::write(p, text).map_err(|e| CliError::Usage(format!("cannot write {}: {e}", p.display()))),
        None => out
            .write_all(text.as_bytes())
            .map_err(|e| CliError::Failed(format!("cannot write output: {e}"))),
    }
}

fn dispatch(cli: &Cli, out: &mut dyn Write) -> Result<i32, CliError> {
    let s = cli.flags.settings()?;
    let io = |e: std::io::Error| CliError::Failed(format!("cannot write output: {e}"));
    match cli.command {
        Command::Verify => {
            let report = cmd_verify(&s);
            for r in &report.results {
                writeln!(out, "{r}").map_err(io)?;
            }
            writeln!(
                out,
                "{} checks: {} passed, {} failed, {} skipped",
                report.results.len(),
                report.passed(),
                report.failed(),
                report.skipped()
            )
            .map_err(io)?;
            if report.ok() {
                Ok(EXIT_OK)
            } else {
                Err(CliError::Failed(format!("failing checks: {}", report.failures().join(", "))))
            }
        }
        Command::Bench => {
            let records = cmd_bench(&s)?;
            emit(s.csv.as_deref(), &to_csv(&records), out)?;
            Ok(EXIT_OK)
        }
        Command::Flops => {
            emit(s.csv.as_deref(), &to_csv(&cmd_flops(&s)), out)?;
            Ok(EXIT_OK)
        }
        Command::Cpsim => {
            let report = cmd_cpsim(&s)?;
            writeln!(out, "{report}").map_err(io)?;
            if report.within_tolerance() {
                Ok(EXIT_OK)
            } else {
                Err(CliError::Failed(format!(
                    "{} error {:.3e} exceeds {:.0e}",
                    s.scheme,
                    report.run.max_abs_err,
                    s.scheme.tolerance()
                )))
            }
        }
        Command::SmokeTrain => {
            let rep = cmd_smoke_train(&s)?;
            writeln!(out, "step,loss").map_err(io)?;
            for (i, l) in rep.losses.iter().enumerate() {
                writeln!(out, "{i},{l:.6e}").map_err(io)?;
            }
            writeln!(out, "ratio {:.4}", rep.ratio()).map_err(io)?;
            if rep.ratio() <= SMOKE_BAR {
                Ok(EXIT_OK)
            } else {
                Err(CliError::Failed(format!("loss ratio {:.4} is above {SMOKE_BAR}", rep.ratio())))
            }
        }
    }
}

/// Parses `args` (program name first), runs the subcommand and returns the
/// exit code. Diagnostics go to `err` as a single line.
pub fn run<I, A>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = A>,
    A: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = write!(out, "{e}");
            return EXIT_OK;
        }
        Err(e) => {
            let msg = e.to_string();
            let line = msg.lines().find(|l| !l.trim().is_empty()).unwrap_or("invalid arguments");
            let _ = writeln!(err, "{}", line.trim());
            return EXIT_USAGE;
        }
    };
    match dispatch(&cli, out) {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(err, "error: {}", e.to_string().replace('\n', " "));
            e.exit_code()
        }
    }
}
