//! The `analyze` command: fit the requested model to a trial CSV, marginalize
//! the posterior, and report weighted summary measures with intervals.

use std::path::{Path, PathBuf};

use ordsum::marginal::{
    marginalize_adjusted, marginalize_unadjusted, posterior_mean_weights, summarize_breakpoints,
    summarize_draws, MarginalDraws,
};
use ordsum::measures::{MeasureKind, WeightKind};
use ordsum::ppo::{Arm, ModelConfig, ModelFamily};
use ordsum::rng::mix_seed;
use ordsum::sampler::{sample_posterior, Algorithm, SamplerConfig};

use crate::error::{CliError, Result};
use crate::ingest::{read_trial_csv, ColumnSpec, IngestedData};
use crate::report::{
    sig3, AnalysisReport, BreakpointReport, ConfigEcho, DataInfo, MeasureReport, ParamDiagnostic,
    SamplerInfo, ToolInfo, TruncationInfo, WeightsInfo, REPORT_SCHEMA_VERSION,
};

/// Convergence gate for "the run completed with passing diagnostics".
pub const RHAT_THRESHOLD: f64 = 1.1;

/// Stream index separating bootstrap randomness from the sampler's.
const BOOTSTRAP_STREAM: u64 = 0xB007;

#[derive(Debug, Clone)]
pub struct AnalyzeRequest {
    pub input: PathBuf,
    pub outcome: String,
    pub arm: String,
    pub control_label: String,
    pub levels: Option<Vec<String>>,
    pub covariates: Vec<String>,
    pub family: ModelFamily,
    pub weight_kind: WeightKind,
    pub measures: Vec<MeasureKind>,
    pub seed: u64,
    pub chains: usize,
    pub warmup: usize,
    pub draws_per_chain: usize,
    pub prior_sd_tau: f64,
    /// JSON report path; the plot CSV lands next to it.
    pub output: PathBuf,
}

/// Parses a comma-separated measure list; `+`/`-` suffixes are accepted for
/// the risk-ratio kinds (e.g. `wRR+` for `wRRplus`).
pub fn parse_measures(s: &str) -> Result<Vec<MeasureKind>> {
    let mut kinds = Vec::new();
    for token in s.split(',').map(str::trim).filter(|t| !t.is_empty()) {
        let normalized = token.replace('+', "plus").replace('-', "minus");
        let kind: MeasureKind = normalized
            .parse()
            .map_err(|_| CliError::schema(format!("unknown measure: {token}")))?;
        if !kinds.contains(&kind) {
            kinds.push(kind);
        }
    }
    if kinds.is_empty() {
        return Err(CliError::schema("the measure list is empty"));
    }
    Ok(kinds)
}

fn plot_csv_path(output: &Path) -> PathBuf {
    let stem = output
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "analysis".to_string());
    output.with_file_name(format!("{stem}_breakpoints.csv"))
}

fn breakpoint_reports(marginal: &MarginalDraws) -> Result<Vec<BreakpointReport>> {
    let or = summarize_breakpoints(marginal, MeasureKind::WOr)?;
    let rd = summarize_breakpoints(marginal, MeasureKind::WRd)?;
    let rr_plus = summarize_breakpoints(marginal, MeasureKind::WRrPlus)?;
    let rr_minus = summarize_breakpoints(marginal, MeasureKind::WRrMinus)?;
    Ok(or
        .iter()
        .zip(&rd)
        .zip(&rr_plus)
        .zip(&rr_minus)
        .map(|(((or, rd), rp), rm)| BreakpointReport {
            breakpoint: or.breakpoint,
            log_or: or.into(),
            rd: rd.into(),
            log_rr_plus: rp.into(),
            log_rr_minus: rm.into(),
        })
        .collect())
}

pub fn run_analyze(req: &AnalyzeRequest) -> Result<()> {
    let spec = ColumnSpec {
        outcome: req.outcome.clone(),
        arm: req.arm.clone(),
        control_label: req.control_label.clone(),
        levels: req.levels.clone(),
        covariates: req.covariates.clone(),
    };
    let data = read_trial_csv(&req.input, &spec)?;
    let levels = data.level_labels.len();

    let mut model = ModelConfig::new(req.family, levels, req.covariates.len())
        .map_err(|e| CliError::schema(e.to_string()))?;
    model.tau_prior_sd = req.prior_sd_tau;

    let mut sampler_cfg = SamplerConfig::new(Algorithm::Rwm, req.seed);
    sampler_cfg.chains = req.chains;
    sampler_cfg.warmup = req.warmup;
    sampler_cfg.draws_per_chain = req.draws_per_chain;

    let posterior = sample_posterior(&model, &data.dataset, &sampler_cfg)?;

    let adjusted = !req.covariates.is_empty();
    let bootstrap_seed = adjusted.then(|| mix_seed(req.seed, BOOTSTRAP_STREAM));
    let marginal = match bootstrap_seed {
        Some(seed) => marginalize_adjusted(&posterior, &data.dataset, seed)?,
        None => marginalize_unadjusted(&posterior)?,
    };

    let measures: Vec<MeasureReport> = req
        .measures
        .iter()
        .map(|&kind| summarize_draws(&marginal, kind, req.weight_kind).map(|s| (&s).into()))
        .collect::<ordsum::Result<_>>()?;

    let report = AnalysisReport {
        schema_version: REPORT_SCHEMA_VERSION,
        tool: ToolInfo::current(),
        config: ConfigEcho {
            input: req.input.display().to_string(),
            outcome_column: req.outcome.clone(),
            arm_column: req.arm.clone(),
            control_label: data.control_label.clone(),
            treatment_label: data.treatment_label.clone(),
            levels: data.level_labels.clone(),
            covariate_columns: req.covariates.clone(),
            family: req.family.label().to_string(),
            weights: req.weight_kind.label().to_string(),
            measures: req.measures.iter().map(|m| m.label().to_string()).collect(),
            seed: req.seed,
            chains: req.chains,
            warmup: req.warmup,
            draws_per_chain: req.draws_per_chain,
            prior_sd_tau: req.prior_sd_tau,
            rhat_threshold: RHAT_THRESHOLD,
            marginalization: if adjusted {
                "bootstrap-adjusted"
            } else {
                "unadjusted"
            },
            bootstrap_seed,
        },
        data: DataInfo {
            n: data.dataset.n_records(),
            n_control: data.n_in_arm(Arm::Control),
            n_treatment: data.n_in_arm(Arm::Treatment),
            levels,
        },
        sampler: SamplerInfo {
            algorithm: posterior.algorithm.label(),
            generator: posterior.generator,
            seed: posterior.seed,
            acceptance_rate: posterior.acceptance_rate,
            converged: posterior.diagnostics.converged(RHAT_THRESHOLD),
            max_rhat: posterior.diagnostics.max_rhat(),
            min_ess: posterior.diagnostics.min_ess(),
            parameters: posterior
                .diagnostics
                .names
                .iter()
                .zip(&posterior.diagnostics.rhat)
                .zip(&posterior.diagnostics.ess)
                .map(|((name, &rhat), &ess)| ParamDiagnostic {
                    name: name.clone(),
                    rhat,
                    ess,
                })
                .collect(),
        },
        truncation: TruncationInfo {
            truncated_draws: marginal.truncated_draws(),
            fraction: marginal.truncation_fraction(),
            warning: marginal.truncation_warning(),
        },
        weights: WeightsInfo {
            kind: req.weight_kind.label().to_string(),
            posterior_mean: posterior_mean_weights(&marginal, req.weight_kind)?,
        },
        breakpoints: breakpoint_reports(&marginal)?,
        measures,
    };

    if let Some(dir) = req.output.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    std::fs::write(&req.output, report.to_json().map_err(|e| CliError::other(e.to_string()))?)?;
    let plot_path = plot_csv_path(&req.output);
    std::fs::write(&plot_path, report.to_plot_csv())?;

    print_summary(&report, &data);
    println!(
        "report: {}\nplot data: {}",
        req.output.display(),
        plot_path.display()
    );

    if !report.sampler.converged {
        return Err(CliError::SamplerFailure(format!(
            "worst split R-hat {:.3} exceeds {RHAT_THRESHOLD}; rerun with more --warmup/--draws \
             (outputs were still written)",
            report.sampler.max_rhat
        )));
    }
    Ok(())
}

fn print_summary(report: &AnalysisReport, data: &IngestedData) {
    println!(
        "analyzed {} records ({} {}, {} {}), {} outcome levels, {} model",
        report.data.n,
        report.data.n_control,
        data.control_label,
        report.data.n_treatment,
        data.treatment_label,
        report.data.levels,
        report.config.family,
    );
    println!(
        "sampler: {} chains x {} draws, acceptance {:.2}, max R-hat {:.3}, min ESS {:.0}",
        report.config.chains,
        report.config.draws_per_chain,
        report.sampler.acceptance_rate,
        report.sampler.max_rhat,
        report.sampler.min_ess,
    );
    if report.truncation.warning {
        println!(
            "warning: {:.1}% of posterior draws needed the feasibility repair",
            100.0 * report.truncation.fraction
        );
    }
    for m in &report.measures {
        // Ratio measures print on the ratio scale at three significant
        // digits; difference measures are already on their natural scale.
        println!(
            "{:>10} [{} weights]: {} (95% CrI {} to {}){}",
            m.measure,
            m.weights,
            sig3(m.point),
            sig3(m.lower),
            sig3(m.upper),
            if m.significant { "  *" } else { "" }
        );
    }
}
