//! `ordsum`: weighted summary measures for treatment effects on ordinal
//! outcomes — analyze trial data, run power studies, inspect the built-in
//! scenario registry.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use ordsum::measures::WeightKind;
use ordsum::ppo::ModelFamily;

use ordsum_cli::analyze::{parse_measures, run_analyze, AnalyzeRequest};
use ordsum_cli::error::{CliError, Result};
use ordsum_cli::simulate_cmd::run_simulate;
use ordsum_cli::tables::{run_scenarios, run_true_values};
use ordsum_cli::default_output_dir;

#[derive(Parser)]
#[command(
    name = "ordsum",
    version,
    about = "Weighted summary measures for treatment effects on ordinal outcomes",
    after_help = "Output files land in --output/--out-dir, else $ORDSUM_OUTPUT_DIR, else the \
                  working directory. Exit codes: 0 success, 1 internal, 2 usage, 3 schema \
                  violation, 4 unmapped outcome label, 5 sampler diagnostics failure."
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

// One short-lived value parsed at startup; variant size is irrelevant.
#[allow(clippy::large_enum_variant)]
#[derive(Subcommand)]
enum Command {
    /// Fit a model to a trial CSV and report weighted summary measures.
    Analyze(AnalyzeArgs),
    /// Run a power / type-I-error simulation study from a JSON config.
    Simulate(SimulateArgs),
    /// List the built-in simulation scenarios and their distributions.
    Scenarios,
    /// Print closed-form true summary values for the built-in scenarios.
    TrueValues,
}

#[derive(Args)]
struct AnalyzeArgs {
    /// Input CSV with a header row.
    #[arg(long)]
    input: PathBuf,
    /// Column holding the ordinal outcome.
    #[arg(long, default_value = "outcome")]
    outcome: String,
    /// Column holding the arm label.
    #[arg(long, default_value = "arm")]
    arm: String,
    /// Arm label identifying the control group.
    #[arg(long)]
    control_label: String,
    /// Ordered outcome labels, best first (comma separated). Without this,
    /// the outcome column must hold integer levels 1..K.
    #[arg(long, value_delimiter = ',')]
    levels: Option<Vec<String>>,
    /// Numeric covariate columns to adjust for (comma separated).
    #[arg(long, value_delimiter = ',', default_value = "", hide_default_value = true)]
    covariates: Vec<String>,
    /// Model family: po (proportional odds) or ppo (partial proportional odds).
    #[arg(long, default_value = "ppo")]
    family: String,
    /// Break-point weighting: control, clayton, sum, cumulative, or uniform.
    #[arg(long, default_value = "control")]
    weights: String,
    /// Summary measures to report (comma separated), from wOR, wRD, wRR+,
    /// wRR-, AOR, ARD, ARR+, ARR-.
    #[arg(long, default_value = "wOR,wRD,wRR+,wRR-")]
    measures: String,
    /// Seed for the sampler; identical inputs and seed reproduce the report
    /// byte for byte.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Number of independent chains.
    #[arg(long, default_value_t = 4)]
    chains: usize,
    /// Adaptation iterations discarded per chain.
    #[arg(long, default_value_t = 1000)]
    warmup: usize,
    /// Retained posterior draws per chain.
    #[arg(long, default_value_t = 1000)]
    draws: usize,
    /// Prior standard deviation for the partial-proportional-odds terms.
    #[arg(long, default_value_t = 100.0)]
    prior_sd_tau: f64,
    /// JSON report path (default: <output dir>/analysis.json); the plot CSV
    /// lands next to it with a _breakpoints.csv suffix.
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct SimulateArgs {
    /// JSON config: scenarios / scenario_file, methods, replicates, n,
    /// treatment_fraction, seed, chains, warmup, draws_per_chain,
    /// rhat_threshold.
    #[arg(long)]
    config: PathBuf,
    /// Directory for power.csv and power.json.
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Analyze(args) => {
            let family: ModelFamily = args
                .family
                .parse()
                .map_err(|_| CliError::schema(format!("unknown model family: {}", args.family)))?;
            let weight_kind: WeightKind = args
                .weights
                .parse()
                .map_err(|_| CliError::schema(format!("unknown weight kind: {}", args.weights)))?;
            let measures = parse_measures(&args.measures)?;
            let output = args
                .output
                .unwrap_or_else(|| default_output_dir().join("analysis.json"));
            let covariates: Vec<String> = args
                .covariates
                .into_iter()
                .filter(|c| !c.is_empty())
                .collect();
            run_analyze(&AnalyzeRequest {
                input: args.input,
                outcome: args.outcome,
                arm: args.arm,
                control_label: args.control_label,
                levels: args.levels,
                covariates,
                family,
                weight_kind,
                measures,
                seed: args.seed,
                chains: args.chains,
                warmup: args.warmup,
                draws_per_chain: args.draws,
                prior_sd_tau: args.prior_sd_tau,
                output,
            })
        }
        Command::Simulate(args) => {
            let out_dir = args.out_dir.unwrap_or_else(default_output_dir);
            run_simulate(&args.config, &out_dir)
        }
        Command::Scenarios => run_scenarios(),
        Command::TrueValues => run_true_values(),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
