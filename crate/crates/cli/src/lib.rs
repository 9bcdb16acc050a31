//! The `mpdp` command-line harness.
//!
//! [`run`] does all the work so that tests can drive the tool in-process;
//! the binary only forwards `std::env::args` and the exit code.

pub mod args;

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::Parser;
use serde_json::{Map, Value};
use thiserror::Error;

use mpdp::agent::{MetricsRow, RunConfig};
use mpdp::registry::{env_registry, suite_registry};
use mpdp::report::build_report;
use mpdp::verify::VerificationReport;

pub use args::{Cli, Command, TrainArgs};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Failed(String),
    #[error(transparent)]
    Core(#[from] mpdp::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Core(mpdp::Error::Usage(_)) => EXIT_USAGE,
            _ => EXIT_FAILURE,
        }
    }
}

fn usage(e: impl std::fmt::Display) -> CliError {
    CliError::Usage(e.to_string())
}

/// Defaults, then the config file, then the flags.
pub fn resolve_config(config: Option<&Path>, seed: Option<u64>, out: Option<&Path>, flags: &TrainArgs) -> Result<RunConfig, CliError> {
    let mut cfg = RunConfig::default();
    if let Some(path) = config {
        let text = fs::read_to_string(path).map_err(|e| CliError::Core(mpdp::Error::io(path, e)))?;
        cfg = RunConfig::from_json_str(&text).map_err(|e| usage(format!("{}: {e}", path.display())))?;
    }
    let mut layer: Map<String, Value> = flags.layer();
    if let Some(s) = seed {
        layer.insert("seed".into(), Value::from(s));
    }
    if let Some(o) = out {
        layer.insert("out".into(), Value::from(o.display().to_string()));
    }
    let cfg = cfg.overlay(&layer).map_err(usage)?;
    cfg.hyperparams.validate().map_err(usage)?;
    Ok(cfg)
}

fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| CliError::Core(mpdp::Error::io(parent, e)))?;
    }
    fs::write(path, text).map_err(|e| CliError::Core(mpdp::Error::io(path, e)))
}

fn fmt_cell(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.4}")
    } else {
        "-".into()
    }
}

fn progress_line(r: &MetricsRow) -> String {
    format!(
        "step {:>7}  return {:>10}  horizon {:>7}  model_err {:>8}  critic {:>8}  objective {:>9}",
        r.env_step,
        fmt_cell(r.episode_return_mean),
        fmt_cell(r.achieved_horizon_mean),
        fmt_cell(r.model_error_l2_mean),
        fmt_cell(r.critic_loss),
        fmt_cell(r.policy_objective)
    )
}

fn summary_table(report: &VerificationReport) -> String {
    let mut s = format!(
        "suite {}  seed {}  cases {}  passed {}  failed {}  worst violation {:e}\n",
        report.suite, report.seed, report.case_count, report.passed, report.failed, report.worst_violation
    );
    for c in report.cases.iter().filter(|c| !c.passed) {
        s.push_str(&format!("  FAIL case {:>4}  violation {:e}  {}\n", c.case, c.violation, c.detail));
    }
    s
}

fn verify(cli: &Cli, suite: &str, cases: Option<usize>, out: &mut dyn Write) -> Result<(), CliError> {
    let registry = suite_registry();
    let s = registry.get(suite)?;
    let seed = cli.seed.unwrap_or(0);
    let report = s.run(seed, cases.unwrap_or_else(|| s.default_cases()))?;
    let path = cli.out.clone().unwrap_or_else(|| PathBuf::from(format!("verify-{suite}.json")));
    write_text(&path, &report.to_json_string()?)?;
    let _ = write!(out, "{}", summary_table(&report));
    if report.all_passed() {
        Ok(())
    } else {
        Err(CliError::Failed(format!("{} of {} cases failed in suite {suite}", report.failed, report.case_count)))
    }
}

fn train(cli: &Cli, flags: &TrainArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let cfg = resolve_config(cli.config.as_deref(), cli.seed, cli.out.as_deref(), flags)?;
    let registry = env_registry();
    let env = registry.get(&cfg.env)?;
    let quiet = cli.quiet;
    let outcome = env.train(&cfg, &mut |row| {
        if !quiet {
            let _ = writeln!(out, "{}", progress_line(row));
        }
    })?;
    let _ = writeln!(out, "artifact {}", outcome.dir.display());
    Ok(())
}

fn report(cli: &Cli, artifact: &Path, json: bool, out: &mut dyn Write) -> Result<(), CliError> {
    let report = build_report(artifact)?;
    let text = report.to_json_string()?;
    if let Some(path) = &cli.out {
        write_text(path, &text)?;
    }
    let _ = write!(out, "{}", if json { text } else { report.to_text() });
    Ok(())
}

/// Parses `argv` and executes the command. Returns the process exit code.
pub fn run<I, T>(argv: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = if e.use_stderr() { write!(err, "{e}") } else { write!(out, "{e}") };
            return code;
        }
    };
    let result = match &cli.command {
        Command::Verify { suite, cases } => verify(&cli, suite, *cases, out),
        Command::Train(flags) => train(&cli, flags, out),
        Command::Report { artifact, json } => report(&cli, artifact, *json, out),
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            e.exit_code()
        }
    }
}
