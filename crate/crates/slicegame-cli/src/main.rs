//! Command-line front end: reproducible equilibrium runs over JSON scenario
//! files, figure-style sweeps, and Monte Carlo deviation studies.
//!
//! Exit codes: 0 success, 2 validation failure (malformed input or failed
//! verification), 3 solver non-convergence (partial results are written).

mod output;
mod verify;

use std::fs;
use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use slicegame::abrd::{abrd_traced, AbrdConfig, BrMethod};
use slicegame::equilibrium::proposed_solution;
use slicegame::experiments::{deviation_study, sweep, ScenarioFamily, SweepSpec};
use slicegame::model::Scenario;

use output::{Format, Metadata};

const EXIT_VALIDATION: u8 = 2;
const EXIT_NONCONVERGENCE: u8 = 3;

#[derive(Parser)]
#[command(name = "slicegame", version, about = "Tenant-competition equilibria over shared cells")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Compute the closed-form solution of a scenario
    Solve(SolveArgs),
    /// Solve a scenario by asynchronous best-response dynamics
    Abrd(AbrdArgs),
    /// Run the numerical invariant checks on a scenario
    Verify(VerifyArgs),
    /// Tabulate one of the predefined parameter sweeps
    Sweep(SweepArgs),
    /// Monte Carlo deviation study over a scenario family
    Montecarlo(MonteCarloArgs),
}

#[derive(Args)]
struct CommonOut {
    /// Output file; stdout when omitted
    #[arg(long)]
    out: Option<PathBuf>,
    /// Output format
    #[arg(long, value_enum, default_value_t = FormatArg::Json)]
    format: FormatArg,
    /// Suppress the timestamp so outputs are byte-identical across runs
    #[arg(long)]
    deterministic: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Json,
    Csv,
}

impl From<FormatArg> for Format {
    fn from(f: FormatArg) -> Format {
        match f {
            FormatArg::Json => Format::Json,
            FormatArg::Csv => Format::Csv,
        }
    }
}

#[derive(Args)]
struct SolveArgs {
    /// Scenario JSON file
    #[arg(long)]
    scenario: PathBuf,
    #[command(flatten)]
    out: CommonOut,
}

#[derive(Args)]
struct AbrdArgs {
    /// Scenario JSON file
    #[arg(long)]
    scenario: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Convergence threshold on the per-round weight change
    #[arg(long, default_value_t = 1e-8)]
    tolerance: f64,
    #[arg(long, default_value_t = 500)]
    max_rounds: usize,
    #[arg(long, value_enum, default_value_t = BrMethodArg::Gradient)]
    br_method: BrMethodArg,
    /// Iteration budget per best-response call
    #[arg(long, default_value_t = 1000)]
    br_iters: usize,
    /// Write per-round weight matrices as JSON lines to this file
    #[arg(long)]
    trace: Option<PathBuf>,
    #[command(flatten)]
    out: CommonOut,
}

#[derive(Clone, Copy, ValueEnum)]
enum BrMethodArg {
    Gradient,
    Heuristic,
}

impl From<BrMethodArg> for BrMethod {
    fn from(m: BrMethodArg) -> BrMethod {
        match m {
            BrMethodArg::Gradient => BrMethod::Gradient,
            BrMethodArg::Heuristic => BrMethod::Heuristic,
        }
    }
}

#[derive(Args)]
struct VerifyArgs {
    /// Scenario JSON file
    #[arg(long)]
    scenario: PathBuf,
    /// Seed of the random probe points
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    out: CommonOut,
}

#[derive(Clone, Copy, ValueEnum)]
enum SweepKind {
    SigmaVsTenantsAlpha,
    SigmaVsTenantsGamma,
    Rho1VsShareBounds,
    SigmaVsShareEquality,
    HetProfile,
}

impl SweepKind {
    fn key(self) -> &'static str {
        match self {
            SweepKind::SigmaVsTenantsAlpha => "sigma_vs_tenants_alpha",
            SweepKind::SigmaVsTenantsGamma => "sigma_vs_tenants_gamma",
            SweepKind::Rho1VsShareBounds => "rho1_vs_share_bounds",
            SweepKind::SigmaVsShareEquality => "sigma_vs_share_equality",
            SweepKind::HetProfile => "het_profile",
        }
    }
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long, value_enum)]
    kind: SweepKind,
    /// Dynamics seed (het-profile only)
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Dynamics tolerance (het-profile only)
    #[arg(long, default_value_t = 1e-8)]
    tolerance: f64,
    #[command(flatten)]
    out: CommonOut,
}

#[derive(Args)]
struct MonteCarloArgs {
    /// Scenario family JSON file
    #[arg(long)]
    family: PathBuf,
    /// Override the family's replication count
    #[arg(long)]
    replications: Option<usize>,
    /// Override the family's random seed
    #[arg(long)]
    seed: Option<u64>,
    /// Dynamics convergence threshold
    #[arg(long, default_value_t = 1e-8)]
    tolerance: f64,
    #[arg(long, value_enum, default_value_t = BrMethodArg::Gradient)]
    br_method: BrMethodArg,
    /// Also write histogram triples (metric, bin_left, bin_right, count) as CSV
    #[arg(long)]
    histograms: Option<PathBuf>,
    #[command(flatten)]
    out: CommonOut,
}

struct CliError {
    code: u8,
    message: String,
}

impl CliError {
    fn validation(message: impl Into<String>) -> Self {
        CliError { code: EXIT_VALIDATION, message: message.into() }
    }
}

impl From<slicegame::GameError> for CliError {
    fn from(e: slicegame::GameError) -> Self {
        CliError::validation(e.to_string())
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {}", e.message);
            ExitCode::from(e.code)
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode, CliError> {
    match cli.command {
        Command::Solve(args) => {
            let scenario = read_scenario(&args.scenario)?;
            let result = proposed_solution(&scenario)?;
            let meta = Metadata::new::<()>("solve", None, args.out.deterministic);
            write_or_fail(output::write_json(
                args.out.out.as_deref(),
                &meta,
                Some(&scenario),
                &result,
            ))?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Abrd(args) => {
            let scenario = read_scenario(&args.scenario)?;
            let config = AbrdConfig {
                tolerance: args.tolerance,
                max_rounds: args.max_rounds,
                rng_seed: args.seed,
                br_method: args.br_method.into(),
                br_iters: args.br_iters,
            };
            config.validate()?;

            let mut trace_file = match &args.trace {
                Some(path) => Some(
                    fs::File::create(path)
                        .map_err(|e| CliError::validation(format!("cannot open trace file: {e}")))?,
                ),
                None => None,
            };
            let result = abrd_traced(&scenario, &config, |round, rows| {
                if let Some(f) = trace_file.as_mut() {
                    let line = serde_json::json!({ "round": round, "weights": rows });
                    let _ = writeln!(f, "{line}");
                }
            })?;

            let converged = result.diagnostics.converged;
            let meta = Metadata::new("abrd", Some(&config), args.out.deterministic);
            write_or_fail(output::write_json(args.out.out.as_deref(), &meta, Some(&scenario), &result))?;
            if converged {
                Ok(ExitCode::SUCCESS)
            } else {
                eprintln!(
                    "warning: dynamics did not converge within {} rounds; partial results written",
                    config.max_rounds
                );
                Ok(ExitCode::from(EXIT_NONCONVERGENCE))
            }
        }
        Command::Verify(args) => {
            let scenario = read_scenario(&args.scenario)?;
            let report = verify::run_checks(&scenario, args.seed)?;
            let meta = Metadata::new::<()>("verify", None, args.out.deterministic);
            for check in &report.checks {
                println!("{check}");
            }
            if let Some(path) = args.out.out.as_deref() {
                write_or_fail(output::write_json(Some(path), &meta, Some(&scenario), &report))?;
            }
            if report.all_passed() {
                Ok(ExitCode::SUCCESS)
            } else {
                Err(CliError::validation("verification checks failed"))
            }
        }
        Command::Sweep(args) => {
            let mut spec = SweepSpec::with_defaults(args.kind.key())
                .expect("every CLI kind has a default spec");
            if let SweepSpec::HetProfile { abrd: cfg, .. } = &mut spec {
                cfg.rng_seed = args.seed;
                cfg.tolerance = args.tolerance;
            }
            let table = sweep(&spec)?;
            let meta = Metadata::new("sweep", Some(&spec), args.out.deterministic);
            write_or_fail(output::write_table(
                args.out.out.as_deref(),
                &meta,
                &table,
                args.out.format.into(),
            ))?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Montecarlo(args) => {
            let mut family: ScenarioFamily = read_json(&args.family)?;
            if let Some(n) = args.replications {
                family.replications = n;
            }
            if let Some(seed) = args.seed {
                family.rng_seed = seed;
            }
            family.validate()?;
            let config = AbrdConfig {
                tolerance: args.tolerance,
                br_method: args.br_method.into(),
                rng_seed: family.rng_seed,
                ..AbrdConfig::default()
            };
            let report = deviation_study(&family, &config)?;

            if let Some(path) = &args.histograms {
                output::write_histograms(path, &report)
                    .map_err(|e| CliError::validation(format!("cannot write histograms: {e}")))?;
            }
            let failed = report.failed_replications.len();
            let meta = Metadata::new("montecarlo", Some(&config), args.out.deterministic);
            write_or_fail(output::write_deviation_report(
                args.out.out.as_deref(),
                &meta,
                &report,
                args.out.format.into(),
            ))?;
            println!(
                "P90|eps_rho| = {:.4}%  P95|eps_rho| = {:.4}%  P90|eps_sigma| = {:.5}%  P95|eps_sigma| = {:.5}%",
                report.p90_abs_eps_rho * 100.0,
                report.p95_abs_eps_rho * 100.0,
                report.p90_abs_eps_sigma * 100.0,
                report.p95_abs_eps_sigma * 100.0,
            );
            if failed > 0 {
                eprintln!(
                    "warning: {failed} replication(s) did not converge and were excluded; \
                     partial statistics written"
                );
                Ok(ExitCode::from(EXIT_NONCONVERGENCE))
            } else {
                Ok(ExitCode::SUCCESS)
            }
        }
    }
}

fn write_or_fail(result: std::io::Result<()>) -> Result<(), CliError> {
    result.map_err(|e| CliError::validation(format!("cannot write output: {e}")))
}

fn read_scenario(path: &std::path::Path) -> Result<Scenario, CliError> {
    read_json(path)
}

fn read_json<T: serde::de::DeserializeOwned>(path: &std::path::Path) -> Result<T, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::validation(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| {
        CliError::validation(format!(
            "{}: line {}, column {}: {e}",
            path.display(),
            e.line(),
            e.column()
        ))
    })
}
