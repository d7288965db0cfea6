//! Command-line interface.
//!
//! Exit codes: 0 success, 1 user error (bad arguments, unreadable or invalid
//! inputs, inconsistent datasets), 2 internal error.

mod commands;
mod convert;
mod plot;

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

pub use convert::ConvertArgs;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USER: i32 = 1;
pub const EXIT_INTERNAL: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "instapoly", version, about = "Fixed-N polygon instance representations")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct GlobalArgs {
    /// Seed for every random choice.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Worker threads; 0 uses all cores.
    #[arg(long, global = true, default_value_t = 0)]
    pub jobs: usize,
    #[arg(long, global = true, default_value = ".")]
    pub output_dir: PathBuf,
    /// Format of the report printed to stdout.
    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    pub format: Format,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Convert instance masks or polygon annotations to fixed-N label files.
    Convert(ConvertArgs),
    /// Evaluate a localization loss and its gradient for two polygon files.
    Losses(commands::LossesArgs),
    /// Fit a perturbed polygon back to a ground-truth polygon.
    Fit(commands::FitArgs),
    /// Compute AP of detections against ground truth.
    Eval(commands::EvalArgs),
    /// Emit plot-ready series, comparison tables and SVG overlays.
    Plotdata(plot::PlotArgs),
}

/// A failure classified for the exit code.
#[derive(Debug)]
pub enum Failure {
    User(anyhow::Error),
    Internal(anyhow::Error),
}

impl Failure {
    pub fn exit_code(&self) -> i32 {
        match self {
            Failure::User(_) => EXIT_USER,
            Failure::Internal(_) => EXIT_INTERNAL,
        }
    }
}

impl<E: Into<anyhow::Error>> From<E> for Failure {
    /// Library and file errors are caused by the inputs; anything else is ours.
    fn from(e: E) -> Self {
        let e = e.into();
        let user = e.chain().any(|c| {
            c.is::<crate::Error>() || c.is::<crate::io::IoError>() || c.is::<crate::fitter::FitError>()
        });
        if user {
            Failure::User(e)
        } else {
            Failure::Internal(e)
        }
    }
}

pub type CliResult<T> = std::result::Result<T, Failure>;

pub fn user_error(msg: impl std::fmt::Display) -> Failure {
    Failure::User(anyhow::anyhow!("{msg}"))
}

/// Runs the command line and returns the process exit code.
pub fn run<I, T>(args: I, stdout: &mut (dyn Write + Send), stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = write!(stderr, "{}", e.render());
            return if e.use_stderr() { EXIT_USER } else { EXIT_OK };
        }
    };
    let pool = match rayon::ThreadPoolBuilder::new().num_threads(cli.global.jobs).build() {
        Ok(p) => p,
        Err(e) => {
            let _ = writeln!(stderr, "error: thread pool: {e}");
            return EXIT_INTERNAL;
        }
    };
    let result = pool.install(|| dispatch(&cli, stdout));
    match result {
        Ok(()) => EXIT_OK,
        Err(f) => {
            let (Failure::User(e) | Failure::Internal(e)) = &f;
            let _ = writeln!(stderr, "error: {e:#}");
            f.exit_code()
        }
    }
}

fn dispatch(cli: &Cli, stdout: &mut (dyn Write + Send)) -> CliResult<()> {
    let g = &cli.global;
    match &cli.command {
        Command::Convert(a) => convert::run(a, g, stdout),
        Command::Losses(a) => commands::losses(a, g, stdout),
        Command::Fit(a) => commands::fit(a, g, stdout),
        Command::Eval(a) => commands::eval(a, g, stdout),
        Command::Plotdata(a) => plot::run(a, g, stdout),
    }
}

/// Prints a JSON value, or its flattened `key,value` pairs as CSV.
fn print_report(stdout: &mut dyn Write, format: Format, json: &serde_json::Value) -> CliResult<()> {
    match format {
        Format::Json => {
            stdout.write_all(&crate::io::to_json_bytes(json))?;
        }
        Format::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            w.write_record(["key", "value"])?;
            flatten_json("", json, &mut |k, v| w.write_record([k, v]))?;
            stdout.write_all(&w.into_inner().map_err(|e| anyhow::anyhow!("{e}"))?)?;
        }
    }
    Ok(())
}

fn flatten_json(
    prefix: &str,
    v: &serde_json::Value,
    emit: &mut dyn FnMut(&str, &str) -> csv::Result<()>,
) -> csv::Result<()> {
    let join = |k: &str| if prefix.is_empty() { k.to_string() } else { format!("{prefix}.{k}") };
    match v {
        serde_json::Value::Object(m) => {
            for (k, v) in m {
                flatten_json(&join(k), v, emit)?;
            }
        }
        serde_json::Value::Array(a) => {
            for (i, v) in a.iter().enumerate() {
                flatten_json(&join(&i.to_string()), v, emit)?;
            }
        }
        serde_json::Value::String(s) => emit(prefix, s)?,
        other => emit(prefix, &other.to_string())?,
    }
    Ok(())
}
