//! Simulation engine for operating characteristics of ordinal treatment-effect
//! analyses: named trial scenarios, multinomial data generation, a replicate
//! loop that records rejection decisions per analysis method, and a
//! deterministic large-sample solver for the proportional-odds projection of
//! each scenario.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::glm::{fit_binary_logistic, net_benefit};
use crate::marginal::{marginalize_unadjusted, quantile_sorted, summarize_draws, MarginalDraws};
use crate::measures::{expit, logit, true_log_summary, MeasureKind, OutcomeDist, WeightKind};
use crate::ppo::{
    initial_params, log_likelihood, log_likelihood_with_grad, ArmCounts, ModelConfig, ModelFamily,
    PpoParams, TrialDataset,
};
use crate::rng::{mix_seed, stream_rng};
use crate::sampler::{sample_posterior, Algorithm, PosteriorDraws, SamplerConfig};

/// Which simulation family a built-in scenario belongs to.
///
/// Setting one uses a uniform control distribution; setting two uses a
/// heavily skewed control distribution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Setting {
    #[serde(rename = "1")]
    One,
    #[serde(rename = "2")]
    Two,
}

impl Setting {
    /// Short label used in scenario names and CSV output.
    pub fn label(self) -> &'static str {
        match self {
            Setting::One => "1",
            Setting::Two => "2",
        }
    }
}

impl fmt::Display for Setting {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// A named pair of outcome distributions defining one simulated trial design.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    /// Unique scenario name, e.g. `"Setting1/LowPO"`.
    pub name: String,
    /// Built-in family tag; `None` for user-supplied scenarios.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub setting: Option<Setting>,
    /// Control-arm outcome distribution.
    pub control: OutcomeDist,
    /// Treatment-arm outcome distribution (same number of levels).
    pub treatment: OutcomeDist,
}

impl ScenarioSpec {
    /// Builds a scenario after checking that both arms share the same number
    /// of levels and the name is non-empty.
    pub fn new(
        name: impl Into<String>,
        setting: Option<Setting>,
        control: OutcomeDist,
        treatment: OutcomeDist,
    ) -> Result<Self> {
        let name = name.into();
        let spec = ScenarioSpec {
            name,
            setting,
            control,
            treatment,
        };
        spec.validate()?;
        Ok(spec)
    }

    fn validate(&self) -> Result<()> {
        if self.name.trim().is_empty() {
            return Err(Error::ScenarioFile("scenario name must be non-empty".into()));
        }
        if self.control.levels() != self.treatment.levels() {
            return Err(Error::ScenarioFile(format!(
                "scenario '{}': control has {} levels but treatment has {}",
                self.name,
                self.control.levels(),
                self.treatment.levels()
            )));
        }
        Ok(())
    }

    /// Number of outcome levels K.
    pub fn levels(&self) -> usize {
        self.control.levels()
    }

    /// True under the null: identical distributions in both arms.
    pub fn is_null(&self) -> bool {
        self.control == self.treatment
    }

    /// True log-scale weighted summary of this scenario's population effect.
    pub fn true_log_summary(&self, kind: MeasureKind, weight_kind: WeightKind) -> Result<f64> {
        true_log_summary(&self.control, &self.treatment, kind, weight_kind)
    }
}

/// Shifts every cumulative probability of `control` by a constant odds ratio.
fn po_shifted(control: &OutcomeDist, odds_ratio: f64) -> OutcomeDist {
    let shift = odds_ratio.ln();
    let cum: Vec<f64> = control
        .cumulative()
        .values()
        .iter()
        .map(|&f| expit(logit(f) + shift))
        .collect();
    OutcomeDist::from_cumulative(&cum).expect("proportional-odds shift preserves validity")
}

/// Shifts every cumulative probability by a constant additive amount.
fn rd_shifted(control: &OutcomeDist, delta: f64) -> OutcomeDist {
    let cum: Vec<f64> = control
        .cumulative()
        .values()
        .iter()
        .map(|&f| f + delta)
        .collect();
    OutcomeDist::from_cumulative(&cum).expect("risk-difference shift preserves validity")
}

/// Multiplies every cumulative probability by a constant ratio.
fn rr_shifted(control: &OutcomeDist, ratio: f64) -> OutcomeDist {
    let cum: Vec<f64> = control
        .cumulative()
        .values()
        .iter()
        .map(|&f| f * ratio)
        .collect();
    OutcomeDist::from_cumulative(&cum).expect("risk-ratio shift preserves validity")
}

fn builtin(name: &str, setting: Setting, control: &OutcomeDist, treatment: OutcomeDist) -> ScenarioSpec {
    ScenarioSpec::new(name, Some(setting), control.clone(), treatment)
        .expect("built-in scenarios are valid")
}

/// The registry of built-in five-level simulation scenarios.
///
/// Setting one places a uniform distribution on the control arm and pairs it
/// with proportional-odds, constant-risk-difference, constant-risk-ratio, and
/// two non-proportional alternatives. Setting two uses a skewed control
/// distribution with proportional-odds and two non-proportional alternatives.
pub fn builtin_scenarios() -> Vec<ScenarioSpec> {
    let c1 = OutcomeDist::uniform(5);
    let c2 = OutcomeDist::new(vec![0.70, 0.18, 0.09, 0.02, 0.01]).expect("valid");

    let dist = |cells: &[f64]| OutcomeDist::new(cells.to_vec()).expect("valid built-in distribution");

    vec![
        builtin("Setting1/Null", Setting::One, &c1, c1.clone()),
        builtin("Setting1/LowPO", Setting::One, &c1, po_shifted(&c1, 1.36)),
        builtin("Setting1/HighPO", Setting::One, &c1, po_shifted(&c1, 1.48)),
        builtin("Setting1/LowRD", Setting::One, &c1, rd_shifted(&c1, 0.06)),
        builtin("Setting1/HighRD", Setting::One, &c1, rd_shifted(&c1, 0.07)),
        builtin("Setting1/LowRR", Setting::One, &c1, rr_shifted(&c1, 1.125)),
        builtin("Setting1/HighRR", Setting::One, &c1, rr_shifted(&c1, 1.15)),
        builtin(
            "Setting1/NP1",
            Setting::One,
            &c1,
            dist(&[0.29, 0.20, 0.17, 0.17, 0.17]),
        ),
        builtin(
            "Setting1/NP2",
            Setting::One,
            &c1,
            dist(&[0.20, 0.35, 0.15, 0.15, 0.15]),
        ),
        builtin("Setting2/Null", Setting::Two, &c2, c2.clone()),
        builtin("Setting2/LowPO", Setting::Two, &c2, po_shifted(&c2, 1.47)),
        builtin("Setting2/HighPO", Setting::Two, &c2, po_shifted(&c2, 1.60)),
        builtin(
            "Setting2/NP5",
            Setting::Two,
            &c2,
            dist(&[0.77, 0.17, 0.045, 0.01, 0.005]),
        ),
        builtin(
            "Setting2/NP6",
            Setting::Two,
            &c2,
            dist(&[0.70, 0.27, 0.0225, 0.005, 0.0025]),
        ),
    ]
}

/// Looks up a built-in scenario by its exact name.
pub fn find_scenario(name: &str) -> Result<ScenarioSpec> {
    builtin_scenarios()
        .into_iter()
        .find(|s| s.name == name)
        .ok_or_else(|| {
            Error::InvalidConfig(format!(
                "unknown scenario '{name}'; run the scenario listing to see built-in names"
            ))
        })
}

/// Parses a JSON scenario file: an array of objects with `name`,
/// `control`, and `treatment` probability arrays.
///
/// Every distribution is validated on load and duplicate names are rejected.
pub fn parse_scenarios(json: &str) -> Result<Vec<ScenarioSpec>> {
    let specs: Vec<ScenarioSpec> =
        serde_json::from_str(json).map_err(|e| Error::ScenarioFile(format!("parse error: {e}")))?;
    if specs.is_empty() {
        return Err(Error::ScenarioFile("scenario file contains no scenarios".into()));
    }
    for spec in &specs {
        spec.validate()?;
    }
    for (i, spec) in specs.iter().enumerate() {
        if specs[..i].iter().any(|other| other.name == spec.name) {
            return Err(Error::ScenarioFile(format!(
                "duplicate scenario name '{}'",
                spec.name
            )));
        }
    }
    Ok(specs)
}

/// An analysis method evaluated on each simulated replicate.
///
/// Bayesian summary methods share one partial-proportional-odds fit per
/// replicate; the proportional-odds method uses its own fit; net benefit and
/// per-breakpoint binary logistic fits are frequentist.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum Method {
    /// Common odds ratio from a Bayesian proportional-odds fit.
    Po,
    /// Frequentist net benefit with projection variance.
    NetBenefit,
    /// Uniform-weight average log odds ratio.
    Aor,
    /// Control-weighted geometric-mean odds ratio.
    WOr,
    /// Sum-only-weighted geometric-mean odds ratio.
    WOrSum,
    /// Cumulative-only-weighted geometric-mean odds ratio.
    WOrCumulative,
    /// Uniform-weight average risk difference.
    Ard,
    /// Control-weighted mean risk difference.
    WRd,
    /// Uniform-weight geometric-mean risk ratio (favorable direction).
    ArrPlus,
    /// Control-weighted geometric-mean risk ratio (favorable direction).
    WRrPlus,
    /// Uniform-weight geometric-mean risk ratio (unfavorable direction).
    ArrMinus,
    /// Control-weighted geometric-mean risk ratio (unfavorable direction).
    WRrMinus,
    /// Frequentist binary logistic regression at one breakpoint (1-based).
    Binary(usize),
}

impl Method {
    /// Canonical text label, also used in CSV and JSON output.
    pub fn label(&self) -> String {
        match self {
            Method::Po => "po".into(),
            Method::NetBenefit => "nb".into(),
            Method::Aor => "AOR".into(),
            Method::WOr => "wOR".into(),
            Method::WOrSum => "wOR-sum".into(),
            Method::WOrCumulative => "wOR-cumulative".into(),
            Method::Ard => "ARD".into(),
            Method::WRd => "wRD".into(),
            Method::ArrPlus => "ARRplus".into(),
            Method::WRrPlus => "wRRplus".into(),
            Method::ArrMinus => "ARRminus".into(),
            Method::WRrMinus => "wRRminus".into(),
            Method::Binary(k) => format!("binary@{k}"),
        }
    }

    /// The posterior summary measure this method reports, if it is one of the
    /// Bayesian weighted summaries.
    pub fn measure(&self) -> Option<(MeasureKind, WeightKind)> {
        match self {
            Method::Aor => Some((MeasureKind::Aor, WeightKind::Uniform)),
            Method::WOr => Some((MeasureKind::WOr, WeightKind::Control)),
            Method::WOrSum => Some((MeasureKind::WOr, WeightKind::SumOnly)),
            Method::WOrCumulative => Some((MeasureKind::WOr, WeightKind::CumulativeOnly)),
            Method::Ard => Some((MeasureKind::Ard, WeightKind::Uniform)),
            Method::WRd => Some((MeasureKind::WRd, WeightKind::Control)),
            Method::ArrPlus => Some((MeasureKind::ArrPlus, WeightKind::Uniform)),
            Method::WRrPlus => Some((MeasureKind::WRrPlus, WeightKind::Control)),
            Method::ArrMinus => Some((MeasureKind::ArrMinus, WeightKind::Uniform)),
            Method::WRrMinus => Some((MeasureKind::WRrMinus, WeightKind::Control)),
            _ => None,
        }
    }

    /// Whether this method needs the Bayesian proportional-odds fit.
    pub fn needs_po_fit(&self) -> bool {
        matches!(self, Method::Po)
    }

    /// Whether this method needs the Bayesian partial-proportional-odds fit.
    pub fn needs_ppo_fit(&self) -> bool {
        self.measure().is_some()
    }

    /// The default method set: proportional odds, net benefit, and the
    /// uniform- and control-weighted odds-ratio summaries.
    pub fn default_set() -> Vec<Method> {
        vec![Method::Po, Method::NetBenefit, Method::Aor, Method::WOr]
    }

    /// Every supported method for a K-level outcome, including one binary
    /// logistic analysis per breakpoint.
    pub fn full_set(levels: usize) -> Vec<Method> {
        let mut methods = vec![
            Method::Po,
            Method::NetBenefit,
            Method::Aor,
            Method::WOr,
            Method::WOrSum,
            Method::WOrCumulative,
            Method::Ard,
            Method::WRd,
            Method::ArrPlus,
            Method::WRrPlus,
            Method::ArrMinus,
            Method::WRrMinus,
        ];
        methods.extend((1..levels).map(Method::Binary));
        methods
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let lower = s.trim().to_ascii_lowercase();
        if let Some(rest) = lower.strip_prefix("binary@") {
            let k: usize = rest.parse().map_err(|_| {
                Error::InvalidConfig(format!("invalid breakpoint in method '{s}'"))
            })?;
            if k == 0 {
                return Err(Error::InvalidConfig("binary breakpoint is 1-based".into()));
            }
            return Ok(Method::Binary(k));
        }
        match lower.as_str() {
            "po" => Ok(Method::Po),
            "nb" | "net-benefit" => Ok(Method::NetBenefit),
            "aor" => Ok(Method::Aor),
            "wor" => Ok(Method::WOr),
            "wor-sum" => Ok(Method::WOrSum),
            "wor-cumulative" => Ok(Method::WOrCumulative),
            "ard" => Ok(Method::Ard),
            "wrd" => Ok(Method::WRd),
            "arrplus" | "arr+" => Ok(Method::ArrPlus),
            "wrrplus" | "wrr+" => Ok(Method::WRrPlus),
            "arrminus" | "arr-" => Ok(Method::ArrMinus),
            "wrrminus" | "wrr-" => Ok(Method::WRrMinus),
            _ => Err(Error::InvalidConfig(format!("unknown method '{s}'"))),
        }
    }
}

impl From<Method> for String {
    fn from(m: Method) -> Self {
        m.label()
    }
}

impl TryFrom<String> for Method {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

/// Configuration for a simulation study.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    /// Number of simulated trials per scenario.
    pub replicates: usize,
    /// Total sample size per trial (split across arms).
    pub n: usize,
    /// Fraction of the sample allocated to the treatment arm.
    pub treatment_fraction: f64,
    /// Master seed; every replicate derives its own independent stream.
    pub seed: u64,
    /// Methods evaluated on each replicate.
    pub methods: Vec<Method>,
    /// Chains per Bayesian fit.
    pub chains: usize,
    /// Warmup iterations per chain.
    pub warmup: usize,
    /// Retained draws per chain.
    pub draws_per_chain: usize,
    /// Convergence gate: a fit whose worst split-R-hat exceeds this is retried
    /// once with doubled warmup, then flagged as a failure.
    pub rhat_threshold: f64,
}

impl SimConfig {
    /// Desk-scale defaults: 200 replicates of n = 1000 at equal allocation,
    /// four chains of 1000 warmup + 1000 retained draws per fit. The chain
    /// budget matters: on heavily skewed outcomes a smaller budget leaves the
    /// random-walk sampler under-mixed, which narrows credible intervals and
    /// visibly inflates rejection rates, so lowering it is a trade-off for
    /// quick smoke runs rather than a free speed-up.
    pub fn new(seed: u64) -> Self {
        SimConfig {
            replicates: 200,
            n: 1000,
            treatment_fraction: 0.5,
            seed,
            methods: Method::default_set(),
            chains: 4,
            warmup: 1000,
            draws_per_chain: 1000,
            rhat_threshold: 1.1,
        }
    }

    fn validate(&self, levels: usize) -> Result<()> {
        if self.replicates == 0 {
            return Err(Error::InvalidConfig("replicates must be at least 1".into()));
        }
        if self.n < 2 {
            return Err(Error::InvalidConfig("sample size must be at least 2".into()));
        }
        if !(self.treatment_fraction > 0.0 && self.treatment_fraction < 1.0) {
            return Err(Error::InvalidConfig(
                "treatment fraction must lie strictly between 0 and 1".into(),
            ));
        }
        if self.methods.is_empty() {
            return Err(Error::InvalidConfig("method list must be non-empty".into()));
        }
        for (i, m) in self.methods.iter().enumerate() {
            if self.methods[..i].contains(m) {
                return Err(Error::InvalidConfig(format!("duplicate method '{m}'")));
            }
            if let Method::Binary(k) = m {
                if *k >= levels {
                    return Err(Error::InvalidConfig(format!(
                        "binary breakpoint {k} out of range for {levels} levels"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Draws one outcome level from `probs` by cumulative inversion.
fn sample_level<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (k, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return k;
        }
    }
    probs.len() - 1
}

/// Simulates one two-arm trial with fixed arm sizes and independent
/// multinomial outcomes; returns a covariate-free dataset of level counts.
///
/// The treatment arm receives `round(n * treatment_fraction)` subjects
/// (at least one per arm) and the control arm the remainder.
pub fn generate_trial<R: Rng + ?Sized>(
    scenario: &ScenarioSpec,
    n: usize,
    treatment_fraction: f64,
    rng: &mut R,
) -> Result<TrialDataset> {
    if n < 2 {
        return Err(Error::InvalidConfig("sample size must be at least 2".into()));
    }
    if !(treatment_fraction > 0.0 && treatment_fraction < 1.0) {
        return Err(Error::InvalidConfig(
            "treatment fraction must lie strictly between 0 and 1".into(),
        ));
    }
    let n_treatment = ((n as f64) * treatment_fraction).round() as usize;
    let n_treatment = n_treatment.clamp(1, n - 1);
    let n_control = n - n_treatment;

    let levels = scenario.levels();
    let mut control_counts = vec![0.0; levels];
    for _ in 0..n_control {
        control_counts[sample_level(scenario.control.probs(), rng)] += 1.0;
    }
    let mut treatment_counts = vec![0.0; levels];
    for _ in 0..n_treatment {
        treatment_counts[sample_level(scenario.treatment.probs(), rng)] += 1.0;
    }
    Ok(TrialDataset::from_counts(ArmCounts::new(
        control_counts,
        treatment_counts,
    )?))
}

/// Power-table entry for one method within one scenario.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MethodPower {
    /// The analysis method.
    pub method: Method,
    /// Replicates on which the method rejected the null.
    pub rejections: usize,
    /// Replicates contributing to the rate (failures excluded).
    pub used: usize,
    /// Replicates excluded for this method (sampler or fit failure).
    pub failures: usize,
    /// Rejection rate among used replicates.
    pub rejection_rate: f64,
    /// Monte-Carlo standard error `sqrt(r (1 - r) / used)`.
    pub mc_se: f64,
}

/// All method results for one simulated scenario.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScenarioPower {
    /// Scenario name.
    pub scenario: String,
    /// Built-in setting tag, if any.
    pub setting: Option<Setting>,
    /// Total sample size per replicate.
    pub n: usize,
    /// Number of replicates attempted.
    pub replicates: usize,
    /// Master seed used for this scenario run.
    pub seed: u64,
    /// Replicates whose proportional-odds fit failed diagnostics even after
    /// the doubled-warmup retry.
    pub po_fit_failures: usize,
    /// Replicates whose partial-proportional-odds fit failed diagnostics even
    /// after the doubled-warmup retry.
    pub ppo_fit_failures: usize,
    /// Per-method rejection rates.
    pub methods: Vec<MethodPower>,
}

impl ScenarioPower {
    /// Looks up one method's entry by label.
    pub fn method(&self, method: Method) -> Option<&MethodPower> {
        self.methods.iter().find(|m| m.method == method)
    }
}

/// Rejection rates for a set of scenarios, one row group per scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Default)]
pub struct PowerTable {
    /// One entry per simulated scenario.
    pub scenarios: Vec<ScenarioPower>,
}

impl PowerTable {
    /// Renders the table as CSV with one row per (scenario, method) pair.
    pub fn to_csv_string(&self) -> Result<String> {
        let mut writer = csv::Writer::from_writer(Vec::new());
        writer
            .write_record([
                "scenario",
                "setting",
                "method",
                "n",
                "replicates",
                "used",
                "rejections",
                "rejection_rate",
                "mc_se",
                "failures",
            ])
            .map_err(|e| Error::InvalidData(format!("csv write failed: {e}")))?;
        for scenario in &self.scenarios {
            for m in &scenario.methods {
                writer
                    .write_record([
                        scenario.scenario.clone(),
                        scenario
                            .setting
                            .map(|s| s.label().to_string())
                            .unwrap_or_default(),
                        m.method.label(),
                        scenario.n.to_string(),
                        scenario.replicates.to_string(),
                        m.used.to_string(),
                        m.rejections.to_string(),
                        format!("{:.6}", m.rejection_rate),
                        format!("{:.6}", m.mc_se),
                        m.failures.to_string(),
                    ])
                    .map_err(|e| Error::InvalidData(format!("csv write failed: {e}")))?;
            }
        }
        let bytes = writer
            .into_inner()
            .map_err(|e| Error::InvalidData(format!("csv write failed: {e}")))?;
        String::from_utf8(bytes).map_err(|e| Error::InvalidData(format!("csv not utf-8: {e}")))
    }
}

/// Per-replicate analysis outcome: one decision per configured method
/// (`None` marks a failure excluded from the rate).
struct ReplicateOutcome {
    decisions: Vec<Option<bool>>,
    po_failed: bool,
    ppo_failed: bool,
}

/// Streams used within one replicate, offsets from the replicate seed.
const STREAM_DATA: u64 = 0;
const SEED_PO_FIT: u64 = 1;
const SEED_PPO_FIT: u64 = 2;
const SEED_RETRY_OFFSET: u64 = 0x5eed;

/// Fits one Bayesian model with the replicate budget, retrying once with
/// doubled warmup when the convergence gate fails. Returns `None` when both
/// attempts fail diagnostics.
fn fit_with_retry(
    model: &ModelConfig,
    data: &TrialDataset,
    cfg: &SimConfig,
    seed: u64,
) -> Result<Option<PosteriorDraws>> {
    let mut sampler_cfg = SamplerConfig::new(Algorithm::Rwm, seed);
    sampler_cfg.chains = cfg.chains;
    sampler_cfg.warmup = cfg.warmup;
    sampler_cfg.draws_per_chain = cfg.draws_per_chain;
    let first = sample_posterior(model, data, &sampler_cfg)?;
    if first.diagnostics.converged(cfg.rhat_threshold) {
        return Ok(Some(first));
    }
    let mut retry_cfg = sampler_cfg;
    retry_cfg.warmup *= 2;
    retry_cfg.seed = mix_seed(seed, SEED_RETRY_OFFSET);
    let second = sample_posterior(model, data, &retry_cfg)?;
    if second.diagnostics.converged(cfg.rhat_threshold) {
        Ok(Some(second))
    } else {
        Ok(None)
    }
}

/// Equal-tailed 95% credible interval of the proportional-odds effect trace;
/// returns whether it excludes zero.
fn po_interval_rejects(posterior: &PosteriorDraws) -> Result<bool> {
    let beta_index = posterior
        .model
        .param_names()
        .iter()
        .position(|n| n == "beta")
        .ok_or_else(|| Error::Sampler("proportional-odds fit has no effect parameter".into()))?;
    let mut trace: Vec<f64> = posterior
        .params_iter()
        .map(|p| p.flatten()[beta_index])
        .collect();
    trace.sort_by(|a, b| a.partial_cmp(b).expect("finite draws"));
    let lower = quantile_sorted(&trace, 0.025);
    let upper = quantile_sorted(&trace, 0.975);
    Ok(lower > 0.0 || upper < 0.0)
}

fn run_single_replicate(
    scenario: &ScenarioSpec,
    cfg: &SimConfig,
    replicate: usize,
) -> Result<ReplicateOutcome> {
    let rep_seed = mix_seed(cfg.seed, replicate as u64);
    let mut data_rng = stream_rng(rep_seed, STREAM_DATA);
    let data = generate_trial(scenario, cfg.n, cfg.treatment_fraction, &mut data_rng)?;
    let levels = scenario.levels();

    let needs_po = cfg.methods.iter().any(Method::needs_po_fit);
    let needs_ppo = cfg.methods.iter().any(Method::needs_ppo_fit);

    let mut po_failed = false;
    let po_posterior = if needs_po {
        let model = ModelConfig::new(ModelFamily::Po, levels, 0)?;
        let fit = fit_with_retry(&model, &data, cfg, mix_seed(rep_seed, SEED_PO_FIT))?;
        po_failed = fit.is_none();
        fit
    } else {
        None
    };

    let mut ppo_failed = false;
    let ppo_marginal: Option<MarginalDraws> = if needs_ppo {
        let model = ModelConfig::new(ModelFamily::Ppo, levels, 0)?;
        let fit = fit_with_retry(&model, &data, cfg, mix_seed(rep_seed, SEED_PPO_FIT))?;
        ppo_failed = fit.is_none();
        match fit {
            Some(posterior) => Some(marginalize_unadjusted(&posterior)?),
            None => None,
        }
    } else {
        None
    };

    let mut decisions = Vec::with_capacity(cfg.methods.len());
    for method in &cfg.methods {
        let decision = match method {
            Method::Po => match &po_posterior {
                Some(posterior) => Some(po_interval_rejects(posterior)?),
                None => None,
            },
            Method::NetBenefit => Some(net_benefit(&data)?.significant()),
            Method::Binary(k) => {
                let fit = fit_binary_logistic(&data, *k, false)?;
                if fit.converged {
                    Some(fit.significant())
                } else {
                    None
                }
            }
            _ => {
                let (kind, weight_kind) = method
                    .measure()
                    .expect("non-special methods are weighted summaries");
                match &ppo_marginal {
                    Some(marginal) => match summarize_draws(marginal, kind, weight_kind) {
                        Ok(summary) => Some(summary.significant),
                        Err(Error::InvalidData(_)) => None,
                        Err(e) => return Err(e),
                    },
                    None => None,
                }
            }
        };
        decisions.push(decision);
    }

    Ok(ReplicateOutcome {
        decisions,
        po_failed,
        ppo_failed,
    })
}

/// Runs the full replicate loop for one scenario and aggregates rejection
/// rates per method.
///
/// Replicates run in parallel, each on an RNG stream derived from the master
/// seed and the replicate index, so results are independent of thread
/// scheduling and of the order of methods in the configuration. A replicate
/// whose sampler fails the convergence gate is retried once with doubled
/// warmup, then recorded as a failure: excluded from the rates of the methods
/// that depend on that fit and counted in the scenario metadata.
pub fn run_replicates(scenario: &ScenarioSpec, cfg: &SimConfig) -> Result<ScenarioPower> {
    scenario.validate()?;
    cfg.validate(scenario.levels())?;

    let outcomes: Vec<ReplicateOutcome> = (0..cfg.replicates)
        .into_par_iter()
        .map(|replicate| run_single_replicate(scenario, cfg, replicate))
        .collect::<Result<Vec<_>>>()?;

    let methods = cfg
        .methods
        .iter()
        .enumerate()
        .map(|(index, &method)| {
            let mut rejections = 0usize;
            let mut used = 0usize;
            for outcome in &outcomes {
                if let Some(rejected) = outcome.decisions[index] {
                    used += 1;
                    if rejected {
                        rejections += 1;
                    }
                }
            }
            let rate = if used > 0 {
                rejections as f64 / used as f64
            } else {
                f64::NAN
            };
            let mc_se = if used > 0 {
                (rate * (1.0 - rate) / used as f64).sqrt()
            } else {
                f64::NAN
            };
            MethodPower {
                method,
                rejections,
                used,
                failures: cfg.replicates - used,
                rejection_rate: rate,
                mc_se,
            }
        })
        .collect();

    Ok(ScenarioPower {
        scenario: scenario.name.clone(),
        setting: scenario.setting,
        n: cfg.n,
        replicates: cfg.replicates,
        seed: cfg.seed,
        po_fit_failures: outcomes.iter().filter(|o| o.po_failed).count(),
        ppo_fit_failures: outcomes.iter().filter(|o| o.ppo_failed).count(),
        methods,
    })
}

/// Runs `run_replicates` over several scenarios and collects a power table.
pub fn run_study(scenarios: &[ScenarioSpec], cfg: &SimConfig) -> Result<PowerTable> {
    let scenarios = scenarios
        .iter()
        .map(|scenario| run_replicates(scenario, cfg))
        .collect::<Result<Vec<_>>>()?;
    Ok(PowerTable { scenarios })
}

/// Large-sample proportional-odds projection of a scenario: the maximum
/// likelihood common log odds ratio of a proportional-odds fit to the exact
/// expected level counts at one million subjects split equally across arms.
///
/// Deterministic (no simulation noise). Solved by Newton iteration with the
/// analytic score and a finite-difference Hessian of the score.
pub fn po_true_value(scenario: &ScenarioSpec) -> Result<f64> {
    const TOTAL: f64 = 1_000_000.0;
    let half = TOTAL / 2.0;
    let control: Vec<f64> = scenario.control.probs().iter().map(|p| p * half).collect();
    let treatment: Vec<f64> = scenario.treatment.probs().iter().map(|p| p * half).collect();
    let data = TrialDataset::from_counts(ArmCounts::new(control, treatment)?);
    let model = ModelConfig::new(ModelFamily::Po, scenario.levels(), 0)?;
    let dim = model.dim();

    let score = |flat: &[f64]| -> Result<Vec<f64>> {
        let params = PpoParams::from_flat(&model, flat)?;
        let (_, grad) = log_likelihood_with_grad(&model, &params, &data)?;
        grad.ok_or_else(|| {
            Error::NonConvergence("expected-count fit reached an infeasible point".into())
        })
    };

    let mut params = initial_params(&model, &data)?;
    let mut log_lik = log_likelihood(&model, &params, &data)?;
    for _ in 0..100 {
        let flat = params.flatten();
        let grad = score(&flat)?;
        let grad_max = grad.iter().fold(0.0f64, |acc, g| acc.max(g.abs()));
        if grad_max < 1e-6 {
            return Ok(params.beta);
        }

        let mut hessian = DMatrix::zeros(dim, dim);
        for i in 0..dim {
            let step = 1e-6 * flat[i].abs().max(1.0);
            let mut plus = flat.clone();
            plus[i] += step;
            let mut minus = flat.clone();
            minus[i] -= step;
            let grad_plus = score(&plus)?;
            let grad_minus = score(&minus)?;
            for j in 0..dim {
                hessian[(j, i)] = (grad_plus[j] - grad_minus[j]) / (2.0 * step);
            }
        }
        let hessian = (&hessian + &hessian.transpose()) * 0.5;
        let neg_grad = -DVector::from_vec(grad);
        let delta = hessian
            .lu()
            .solve(&neg_grad)
            .ok_or_else(|| Error::NonConvergence("singular Hessian in expected-count fit".into()))?;

        let mut step_scale = 1.0;
        loop {
            let candidate: Vec<f64> = flat
                .iter()
                .zip(delta.iter())
                .map(|(x, d)| x + step_scale * d)
                .collect();
            let candidate = PpoParams::from_flat(&model, &candidate)?;
            let candidate_log_lik = log_likelihood(&model, &candidate, &data)?;
            if candidate_log_lik.is_finite() && candidate_log_lik >= log_lik - 1e-9 {
                params = candidate;
                log_lik = candidate_log_lik;
                break;
            }
            step_scale *= 0.5;
            if step_scale < 1e-10 {
                return Err(Error::NonConvergence(
                    "expected-count fit line search failed".into(),
                ));
            }
        }
    }
    Err(Error::NonConvergence(
        "expected-count proportional-odds fit did not converge".into(),
    ))
}
