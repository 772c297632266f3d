//! The `pipetrace` command line: `run` executes a pipeline spec with
//! tracing, `bench` measures tracing overhead.
//!
//! Exit codes: 0 success, 1 runtime or I/O failure, 2 bad arguments, bad
//! spec, or failed validation.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use pipetrace_core::bench::{self, BenchProgram, DEFAULT_REPS};
use pipetrace_core::hints::{HintCode, HintConfig};
use pipetrace_core::pipeline::{execute_plan, load_sources, parse_spec, validate_plan, PlanError};
use pipetrace_core::report::{emit_json, emit_text};
use pipetrace_core::tracer::{TraceConfig, DEFAULT_SAMPLE_SIZE};

pub const EXIT_OK: i32 = 0;
pub const EXIT_RUNTIME: i32 = 1;
pub const EXIT_INVALID: i32 = 2;

#[derive(Debug, Parser)]
#[command(
    name = "pipetrace",
    version,
    about = "Run dataframe pipelines with per-step tracing and hints"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Validate and execute a pipeline spec, then print its trace report.
    Run(RunArgs),
    /// Time every benchmark program with tracing off and on.
    Bench(BenchArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Text,
    Json,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// Pipeline spec (JSON). Relative source paths resolve against its directory.
    pub spec: PathBuf,
    /// Execute without capturing samples; report only totals.
    #[arg(long)]
    pub no_trace: bool,
    #[arg(long, default_value_t = DEFAULT_SAMPLE_SIZE)]
    pub sample_size: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Turn off every hint rule.
    #[arg(long)]
    pub no_hints: bool,
    #[arg(long, value_enum, default_value_t = Format::Text)]
    pub format: Format,
    /// Write the report here instead of standard output.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Text report width in columns (minimum 40).
    #[arg(long, default_value_t = 100)]
    pub width: usize,
    #[arg(long)]
    pub join_explosion_factor: Option<f64>,
    #[arg(long)]
    pub null_growth_delta: Option<f64>,
    #[arg(long)]
    pub dedup_ratio: Option<f64>,
    /// Disable one hint rule by code or name (repeatable), e.g. `A6`.
    #[arg(long = "disable-hint", value_parser = parse_hint_code)]
    pub disable_hint: Vec<HintCode>,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    /// Comma-separated row counts.
    #[arg(long, value_delimiter = ',', default_values_t = bench::DEFAULT_SCALES, value_parser = parse_scale)]
    pub scales: Vec<u64>,
    #[arg(long, default_value_t = DEFAULT_REPS as u64, value_parser = clap::value_parser!(u64).range(1..))]
    pub reps: u64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Results CSV path.
    #[arg(long, default_value = "results.csv")]
    pub out: PathBuf,
    /// Comma-separated subset of B1..B6.
    #[arg(long, value_delimiter = ',', value_parser = parse_program)]
    pub programs: Vec<BenchProgram>,
}

fn parse_hint_code(s: &str) -> Result<HintCode, String> {
    HintCode::parse(s).ok_or_else(|| format!("unknown hint code `{s}`"))
}

fn parse_program(s: &str) -> Result<BenchProgram, String> {
    BenchProgram::parse(s).ok_or_else(|| format!("unknown program `{s}` (expected B1..B6)"))
}

fn parse_scale(s: &str) -> Result<u64, String> {
    match s.trim().parse::<u64>() {
        Ok(0) => Err("scale must be positive".into()),
        Ok(n) => Ok(n),
        Err(e) => Err(format!("bad scale `{s}`: {e}")),
    }
}

impl RunArgs {
    pub fn trace_config(&self) -> TraceConfig {
        TraceConfig {
            enabled: !self.no_trace,
            sample_size: self.sample_size,
            seed: self.seed,
        }
    }

    pub fn hint_config(&self) -> HintConfig {
        let mut cfg = if self.no_hints {
            HintConfig::silent()
        } else {
            HintConfig::default()
        };
        if let Some(v) = self.join_explosion_factor {
            cfg.join_explosion_factor = v;
        }
        if let Some(v) = self.null_growth_delta {
            cfg.null_growth_delta = v;
        }
        if let Some(v) = self.dedup_ratio {
            cfg.dedup_ratio = v;
        }
        cfg.disabled.extend(self.disable_hint.iter().copied());
        cfg
    }
}

fn write_output(out: Option<&Path>, text: &str, stdout: &mut dyn Write) -> std::io::Result<()> {
    match out {
        Some(path) => fs::write(path, text),
        None => stdout.write_all(text.as_bytes()),
    }
}

pub fn cmd_run(args: &RunArgs, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32 {
    let hint_config = args.hint_config();
    let document = match fs::read_to_string(&args.spec) {
        Ok(d) => d,
        Err(e) => {
            let _ = writeln!(stderr, "error: cannot read {}: {e}", args.spec.display());
            return EXIT_RUNTIME;
        }
    };
    let mut spec = match parse_spec(&document) {
        Ok(s) => s,
        Err(e) => {
            let _ = writeln!(stderr, "error: {}: {e}", args.spec.display());
            return EXIT_INVALID;
        }
    };
    if let Some(dir) = args.spec.parent() {
        spec.resolve_paths(dir);
    }

    let plan = match validate_plan(&spec, &hint_config) {
        Ok(plan) => plan,
        Err(e) => {
            for h in e.hints() {
                let _ = writeln!(stderr, "{h}");
            }
            let _ = writeln!(stderr, "error: validation failed: {e}");
            return match e {
                PlanError::Source(_) | PlanError::RightSource { .. } => EXIT_RUNTIME,
                PlanError::Config(_) | PlanError::Step { .. } => EXIT_INVALID,
            };
        }
    };
    for h in &plan.hints {
        let _ = writeln!(stderr, "{h}");
    }

    let result = load_sources(&plan)
        .and_then(|sources| execute_plan(&plan, &sources, &args.trace_config(), &hint_config));
    let (_, trace) = match result {
        Ok(r) => r,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            return EXIT_RUNTIME;
        }
    };

    let report = match args.format {
        Format::Json => emit_json(&trace),
        Format::Text => emit_text(&trace, args.width),
    };
    if let Err(e) = write_output(args.out.as_deref(), &report, stdout) {
        let _ = writeln!(stderr, "error: cannot write report: {e}");
        return EXIT_RUNTIME;
    }
    EXIT_OK
}

pub fn cmd_bench(args: &BenchArgs, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32 {
    let programs: Vec<BenchProgram> = if args.programs.is_empty() {
        BenchProgram::ALL.to_vec()
    } else {
        args.programs.clone()
    };
    let results = bench::run_suite(
        &programs,
        &args.scales,
        args.reps as usize,
        args.seed,
        |r| {
            let _ = writeln!(
                stderr,
                "{} {:>9} rows: baseline {:.3} ms, traced {:.3} ms, ratio {:.4}",
                r.program,
                r.scale_rows,
                r.baseline_median_ns as f64 / 1e6,
                r.instrumented_median_ns as f64 / 1e6,
                r.overhead_ratio
            );
        },
    );
    let results = match results {
        Ok(r) => r,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            return EXIT_RUNTIME;
        }
    };
    let summary = bench::summarize(&results);
    if let Err(e) = fs::write(&args.out, &summary.csv) {
        let _ = writeln!(stderr, "error: cannot write {}: {e}", args.out.display());
        return EXIT_RUNTIME;
    }
    let _ = stdout.write_all(summary.table.as_bytes());
    EXIT_OK
}

/// Parse `argv` and run. Usage errors print clap's message and return 2.
pub fn main_with<I, T>(argv: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() {
                EXIT_INVALID
            } else {
                EXIT_OK
            };
            let rendered = e.render().to_string();
            if e.use_stderr() {
                let _ = stderr.write_all(rendered.as_bytes());
            } else {
                let _ = stdout.write_all(rendered.as_bytes());
            }
            return code;
        }
    };
    match &cli.command {
        Command::Run(args) => cmd_run(args, stdout, stderr),
        Command::Bench(args) => cmd_bench(args, stdout, stderr),
    }
}
