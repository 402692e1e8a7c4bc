//! Command-line interface: `analyze`, `summarize`, `simulate`, `oracle`
//! and `render` subcommands wiring ingest → regressors → correlations →
//! export.
//!
//! Exit codes: 0 success, 1 usage error, 2 input or validation error,
//! 3 numerical failure. Every error prints a single line starting with its
//! class name.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::export::{self, RenderSpec};
use crate::ingest::{self, AlignPolicy, Metadata};
use crate::partial_corr::{self, CorrError, PartialCorrResult};
use crate::regressors::{log_spaced_grid, FitError, GamConfig, RegressorKind};
use crate::summary;
use crate::synth::{self, SynthConfig};
use crate::trace::{validate_runset, Corr, DatasetId, RunSet};

pub const SEED_ENV_VAR: &str = "OODCORR_SEED";

#[derive(Parser)]
#[command(
    name = "oodcorr",
    version,
    about = "Partial out-of-distribution correlation analysis over finetuning evaluation traces"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Compute partial OOD correlations from a trace CSV
    Analyze(AnalyzeArgs),
    /// Accuracy table at each run's best in-domain checkpoint
    Summarize(SummarizeArgs),
    /// Generate synthetic traces from a JSON config
    Simulate(SimulateArgs),
    /// Analytic ground-truth partial correlations for a synthetic config
    Oracle(OracleArgs),
    /// Render heatmap and graph from a dumped result JSON
    Render(RenderArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum RegressorArg {
    Linear,
    Ridge,
    Gam,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum AlignArg {
    Strict,
    Intersect,
}

#[derive(Args)]
struct AnalyzeArgs {
    /// Trace CSV (header: run,step,dataset,accuracy)
    #[arg(long)]
    input: PathBuf,
    /// Directory for result.json, partial_corr.csv and renderings
    #[arg(long)]
    output_dir: PathBuf,
    /// In-domain dataset id; overrides the sidecar metadata
    #[arg(long)]
    in_domain: Option<String>,
    /// Runset label; overrides the sidecar metadata
    #[arg(long)]
    label: Option<String>,
    #[arg(long, value_enum, default_value_t = RegressorArg::Gam)]
    regressor: RegressorArg,
    /// Ridge penalty weight (ridge only; default 1.0)
    #[arg(long)]
    ridge_lambda: Option<f64>,
    /// Number of spline basis functions (gam only; default 10)
    #[arg(long)]
    n_basis: Option<usize>,
    /// Smallest smoothing weight in the selection grid (gam only; default 1e-4)
    #[arg(long)]
    lambda_min: Option<f64>,
    /// Largest smoothing weight in the selection grid (gam only; default 1e6)
    #[arg(long)]
    lambda_max: Option<f64>,
    /// Number of grid points for smoothing-weight selection (gam only; default 40)
    #[arg(long)]
    lambda_steps: Option<usize>,
    #[arg(long, value_enum, default_value_t = AlignArg::Intersect)]
    align: AlignArg,
    /// Fit and correlate per run, then average via Fisher z
    #[arg(long)]
    per_run: bool,
    /// Also write heatmap.svg
    #[arg(long)]
    heatmap: bool,
    /// Also write graph.dot
    #[arg(long)]
    graph: bool,
    /// Also write raw_corr.csv (correlations without residualization)
    #[arg(long)]
    raw: bool,
    /// Also write curves.csv (fitted-regressor samples per dataset)
    #[arg(long)]
    curves: bool,
}

#[derive(Args)]
struct SummarizeArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    in_domain: Option<String>,
    #[arg(long)]
    label: Option<String>,
    /// Also write summary.txt and summary.csv here
    #[arg(long)]
    output_dir: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = AlignArg::Intersect)]
    align: AlignArg,
}

#[derive(Args)]
struct SimulateArgs {
    /// Synthetic config JSON
    #[arg(long)]
    config: PathBuf,
    /// Output trace CSV path (a .meta.json sidecar is written next to it)
    #[arg(long)]
    output: PathBuf,
    /// Overrides the config seed; OODCORR_SEED is the fallback
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct OracleArgs {
    #[arg(long)]
    config: PathBuf,
    /// Output CSV path; stdout when omitted
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct RenderArgs {
    /// result.json produced by analyze
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    output_dir: PathBuf,
    /// Write heatmap.svg (default: both renderings)
    #[arg(long)]
    heatmap: bool,
    /// Write graph.dot (default: both renderings)
    #[arg(long)]
    graph: bool,
}

struct CliError {
    code: u8,
    message: String,
}

impl CliError {
    fn usage(message: impl Into<String>) -> Self {
        CliError {
            code: 1,
            message: message.into(),
        }
    }

    fn input(message: impl Into<String>) -> Self {
        CliError {
            code: 2,
            message: message.into(),
        }
    }

    fn numeric(message: impl Into<String>) -> Self {
        CliError {
            code: 3,
            message: message.into(),
        }
    }
}

impl From<ingest::IngestError> for CliError {
    fn from(e: ingest::IngestError) -> Self {
        CliError::input(e.to_string())
    }
}

impl From<synth::SynthError> for CliError {
    fn from(e: synth::SynthError) -> Self {
        CliError::input(e.to_string())
    }
}

impl From<summary::SummaryError> for CliError {
    fn from(e: summary::SummaryError) -> Self {
        CliError::input(e.to_string())
    }
}

impl From<export::ExportError> for CliError {
    fn from(e: export::ExportError) -> Self {
        CliError::input(e.to_string())
    }
}

impl From<CorrError> for CliError {
    fn from(e: CorrError) -> Self {
        match &e {
            CorrError::Fit {
                source: FitError::SingularSystem | FitError::DegenerateX,
                ..
            } => CliError::numeric(e.to_string()),
            _ => CliError::input(e.to_string()),
        }
    }
}

/// Entry point for the binary. Parses arguments and maps every failure to
/// its exit code.
pub fn run() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.message);
            ExitCode::from(e.code)
        }
    }
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Analyze(args) => cmd_analyze(args),
        Command::Summarize(args) => cmd_summarize(args),
        Command::Simulate(args) => cmd_simulate(args),
        Command::Oracle(args) => cmd_oracle(args),
        Command::Render(args) => cmd_render(args),
    }
}

/// Flags that only apply to one regressor family conflict with the others.
fn reject_foreign_flags(args: &AnalyzeArgs, family: &str) -> Result<(), CliError> {
    let gam_only = [
        ("--n-basis", args.n_basis.is_some()),
        ("--lambda-min", args.lambda_min.is_some()),
        ("--lambda-max", args.lambda_max.is_some()),
        ("--lambda-steps", args.lambda_steps.is_some()),
    ];
    for (flag, present) in gam_only {
        if present && family != "gam" {
            return Err(CliError::usage(format!(
                "ConflictingFlags: {flag} applies to --regressor gam, not {family}"
            )));
        }
    }
    if args.ridge_lambda.is_some() && family != "ridge" {
        return Err(CliError::usage(format!(
            "ConflictingFlags: --ridge-lambda applies to --regressor ridge, not {family}"
        )));
    }
    Ok(())
}

fn build_regressor(args: &AnalyzeArgs) -> Result<RegressorKind, CliError> {
    match args.regressor {
        RegressorArg::Linear => {
            reject_foreign_flags(args, "linear")?;
            Ok(RegressorKind::Linear)
        }
        RegressorArg::Ridge => {
            reject_foreign_flags(args, "ridge")?;
            let lambda = args.ridge_lambda.unwrap_or(1.0);
            if lambda <= 0.0 || !lambda.is_finite() {
                return Err(CliError::usage(format!(
                    "NonPositiveLambda: --ridge-lambda must be finite and positive, got {lambda}"
                )));
            }
            Ok(RegressorKind::Ridge { lambda })
        }
        RegressorArg::Gam => {
            reject_foreign_flags(args, "gam")?;
            let steps = args.lambda_steps.unwrap_or(40);
            if steps < 2 {
                return Err(CliError::usage(
                    "InvalidConfig: --lambda-steps must be at least 2".to_string(),
                ));
            }
            let lambda_min = args.lambda_min.unwrap_or(1e-4);
            let lambda_max = args.lambda_max.unwrap_or(1e6);
            let grid_ok = lambda_min > 0.0 && lambda_max > lambda_min;
            if !grid_ok {
                return Err(CliError::usage(
                    "InvalidConfig: need 0 < --lambda-min < --lambda-max".to_string(),
                ));
            }
            let cfg = GamConfig {
                n_basis: args.n_basis.unwrap_or(10),
                lambda_grid: log_spaced_grid(lambda_min, lambda_max, steps),
                ..GamConfig::default()
            };
            cfg.validate().map_err(|e| CliError::usage(e.to_string()))?;
            Ok(RegressorKind::Gam(cfg))
        }
    }
}

/// flag > sidecar for both the in-domain id and the label.
fn load_runset(
    input: &Path,
    in_domain_flag: Option<&str>,
    label_flag: Option<&str>,
    align: AlignArg,
) -> Result<RunSet, CliError> {
    let sidecar = ingest::read_sidecar(input)?.unwrap_or_default();
    let in_domain = in_domain_flag
        .map(str::to_string)
        .or(sidecar.in_domain)
        .ok_or_else(|| {
            CliError::usage(
                "MissingInDomain: pass --in-domain or provide a .meta.json sidecar".to_string(),
            )
        })?;
    let mut runset = ingest::parse_trace_csv(input, &DatasetId::new(in_domain))?;
    if let Some(label) = label_flag.map(str::to_string).or(sidecar.label) {
        runset.label = label;
    }
    let policy = match align {
        AlignArg::Strict => AlignPolicy::Strict,
        AlignArg::Intersect => AlignPolicy::Intersect,
    };
    let (runset, dropped) = ingest::align_checkpoints(runset, policy)?;
    if !dropped.is_empty() {
        eprintln!(
            "warning: dropped {} checkpoint(s) not shared by all series of their run",
            dropped.len()
        );
    }
    let violations = validate_runset(&runset);
    if let Some(first) = violations.first() {
        return Err(CliError::input(format!(
            "Violation: {first}{}",
            if violations.len() > 1 {
                format!(" (+{} more)", violations.len() - 1)
            } else {
                String::new()
            }
        )));
    }
    Ok(runset)
}

fn write_file(path: &Path, content: &str) -> Result<(), CliError> {
    std::fs::write(path, content)
        .map_err(|e| CliError::input(format!("Io: {}: {e}", path.display())))
}

fn ensure_dir(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::input(format!("Io: {}: {e}", dir.display())))
}

fn cmd_analyze(args: AnalyzeArgs) -> Result<(), CliError> {
    let kind = build_regressor(&args)?;
    let runset = load_runset(
        &args.input,
        args.in_domain.as_deref(),
        args.label.as_deref(),
        args.align,
    )?;

    let result: PartialCorrResult = if args.per_run {
        partial_corr::partial_corr_matrix_per_run(&runset, &kind)?
    } else {
        partial_corr::partial_corr_matrix(&runset, &kind)?
    };

    ensure_dir(&args.output_dir)?;
    write_file(
        &args.output_dir.join("result.json"),
        &export::dump_result_json(&result),
    )?;
    write_file(
        &args.output_dir.join("partial_corr.csv"),
        &export::dump_result_csv(&result),
    )?;
    if args.heatmap {
        write_file(
            &args.output_dir.join("heatmap.svg"),
            &export::render_heatmap(&result, &RenderSpec::default()),
        )?;
    }
    if args.graph {
        write_file(
            &args.output_dir.join("graph.dot"),
            &export::render_graph(&result),
        )?;
    }
    if args.raw {
        let raw = partial_corr::raw_corr_matrix(&runset)?;
        write_file(
            &args.output_dir.join("raw_corr.csv"),
            &export::dump_matrix_csv(&raw),
        )?;
    }
    if args.curves {
        write_file(
            &args.output_dir.join("curves.csv"),
            &export::dump_curves_csv(&result, 101),
        )?;
    }

    println!("n_points: {}", result.n_points);
    match partial_corr::average_partial_corr(&result) {
        Corr::Defined(v) => println!("average_partial_corr: {v}"),
        Corr::Undefined => println!("average_partial_corr: undefined"),
    }
    Ok(())
}

fn cmd_summarize(args: SummarizeArgs) -> Result<(), CliError> {
    let runset = load_runset(
        &args.input,
        args.in_domain.as_deref(),
        args.label.as_deref(),
        args.align,
    )?;
    let table = summary::summary_table(&runset)?;
    print!("{}", table.to_text());
    if let Some(dir) = args.output_dir {
        ensure_dir(&dir)?;
        write_file(&dir.join("summary.txt"), &table.to_text())?;
        write_file(&dir.join("summary.csv"), &table.to_csv())?;
    }
    Ok(())
}

/// Seed precedence: `--seed` flag, then the config file, then the
/// `OODCORR_SEED` environment variable, then 0.
fn load_synth_config(path: &Path, seed_flag: Option<u64>) -> Result<SynthConfig, CliError> {
    let content = std::fs::read_to_string(path)
        .map_err(|e| CliError::input(format!("Io: {}: {e}", path.display())))?;
    let value: serde_json::Value = serde_json::from_str(&content)
        .map_err(|e| CliError::input(format!("MalformedConfig: {}: {e}", path.display())))?;
    let file_seed = value.get("seed").and_then(|s| s.as_u64());
    let mut cfg: SynthConfig = serde_json::from_value(value)
        .map_err(|e| CliError::input(format!("MalformedConfig: {}: {e}", path.display())))?;
    cfg.seed = seed_flag
        .or(file_seed)
        .or_else(|| {
            std::env::var(SEED_ENV_VAR)
                .ok()
                .and_then(|s| s.parse().ok())
        })
        .unwrap_or(0);
    cfg.validate()?;
    Ok(cfg)
}

fn cmd_simulate(args: SimulateArgs) -> Result<(), CliError> {
    let cfg = load_synth_config(&args.config, args.seed)?;
    let (runset, clip) = synth::simulate_runset(&cfg);
    if clip.fraction() > 0.01 {
        eprintln!(
            "warning: {:.1}% of generated accuracies were clipped to [0, 100]; \
             the analytic ground truth degrades under clipping",
            100.0 * clip.fraction()
        );
    }
    if let Some(parent) = args.output.parent() {
        if !parent.as_os_str().is_empty() {
            ensure_dir(parent)?;
        }
    }
    write_file(&args.output, &ingest::write_trace_csv(&runset))?;
    let meta = Metadata {
        label: Some(runset.label.clone()),
        in_domain: Some(runset.in_domain.name().to_string()),
    };
    write_file(
        &ingest::sidecar_path(&args.output),
        &format!(
            "{}\n",
            serde_json::to_string_pretty(&meta).expect("metadata serializes")
        ),
    )?;
    println!(
        "wrote {} traces x {} steps (seed {})",
        cfg.n_runs, cfg.n_steps, cfg.seed
    );
    Ok(())
}

fn cmd_oracle(args: OracleArgs) -> Result<(), CliError> {
    let cfg = load_synth_config(&args.config, None)?;
    let matrix = synth::ground_truth_partial_corr(&cfg);
    let csv = export::dump_matrix_csv(&matrix);
    match args.output {
        Some(path) => write_file(&path, &csv)?,
        None => print!("{csv}"),
    }
    Ok(())
}

fn cmd_render(args: RenderArgs) -> Result<(), CliError> {
    let content = std::fs::read_to_string(&args.input)
        .map_err(|e| CliError::input(format!("Io: {}: {e}", args.input.display())))?;
    let result = export::load_result_json(&content)?;
    ensure_dir(&args.output_dir)?;
    let both = !args.heatmap && !args.graph;
    if args.heatmap || both {
        write_file(
            &args.output_dir.join("heatmap.svg"),
            &export::render_heatmap(&result, &RenderSpec::default()),
        )?;
    }
    if args.graph || both {
        write_file(
            &args.output_dir.join("graph.dot"),
            &export::render_graph(&result),
        )?;
    }
    Ok(())
}
