//! Cumulative-logit models for ordinal trial outcomes: proportional odds
//! (PO) and partial proportional odds (PPO), with the log densities and
//! gradients the samplers consume.
//!
//! For outcome level y ∈ {1..K} (lower = better), arm code a = ±1/2
//! (treatment +1/2, control −1/2), and covariates x:
//!
//! ```text
//! P(Y ≤ k | a, x) = expit[ α_k + (β + 1[k ≥ 2] τ_{k−1}) a + γ'x ]
//! ```
//!
//! The PO family fixes τ ≡ 0, so β is the common log cumulative odds ratio.
//! The PPO family frees one τ per break point beyond the first; the induced
//! cumulative curves can then cross, so a parameter point may imply a
//! negative cell probability at some design point. Such points are rejected
//! during sampling (log density −∞); at prediction time the cells are
//! truncated at zero and rescaled instead, so every retained draw still
//! yields a usable distribution.
//!
//! The prior puts a symmetric Dirichlet on the baseline cell probabilities
//! implied by α (concentration 1/(0.8 + 0.35·max(K, 3)), flat-ish but
//! proper), carried to α-space with the change-of-variables Jacobian
//! Σ_k log[c_k(1−c_k)], and independent zero-mean normals on β, τ, and γ.

use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::measures::expit;

/// Default prior standard deviation for β, τ, and γ.
pub const DEFAULT_EFFECT_PRIOR_SD: f64 = 100.0;

/// Dirichlet concentration used for the baseline-cell prior: chosen so the
/// induced prior on each cumulative logit stays roughly flat over the range
/// that matters, while remaining proper for any K.
pub fn default_cell_concentration(levels: usize) -> f64 {
    1.0 / (0.8 + 0.35 * levels.max(3) as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelFamily {
    Po,
    Ppo,
}

impl ModelFamily {
    pub fn label(self) -> &'static str {
        match self {
            ModelFamily::Po => "po",
            ModelFamily::Ppo => "ppo",
        }
    }
}

impl std::str::FromStr for ModelFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "po" => Ok(ModelFamily::Po),
            "ppo" => Ok(ModelFamily::Ppo),
            other => Err(Error::InvalidConfig(format!("unknown model family: {other}"))),
        }
    }
}

impl std::fmt::Display for ModelFamily {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.label())
    }
}

/// Model structure plus prior hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub family: ModelFamily,
    pub levels: usize,
    pub covariates: usize,
    pub beta_prior_sd: f64,
    pub tau_prior_sd: f64,
    pub gamma_prior_sd: f64,
    pub cell_concentration: f64,
}

impl ModelConfig {
    pub fn new(family: ModelFamily, levels: usize, covariates: usize) -> Result<Self> {
        if levels < 2 {
            return Err(Error::InvalidConfig(format!(
                "need at least 2 outcome levels, got {levels}"
            )));
        }
        Ok(Self {
            family,
            levels,
            covariates,
            beta_prior_sd: DEFAULT_EFFECT_PRIOR_SD,
            tau_prior_sd: DEFAULT_EFFECT_PRIOR_SD,
            gamma_prior_sd: DEFAULT_EFFECT_PRIOR_SD,
            cell_concentration: default_cell_concentration(levels),
        })
    }

    pub fn breakpoints(&self) -> usize {
        self.levels - 1
    }

    /// Number of τ parameters: one per break point beyond the first (PPO),
    /// none for PO.
    pub fn n_tau(&self) -> usize {
        match self.family {
            ModelFamily::Po => 0,
            ModelFamily::Ppo => self.levels - 2,
        }
    }

    /// Total free-parameter count in flattened order α, β, τ, γ.
    pub fn dim(&self) -> usize {
        self.breakpoints() + 1 + self.n_tau() + self.covariates
    }

    pub fn param_names(&self) -> Vec<String> {
        let mut names = Vec::with_capacity(self.dim());
        for k in 1..=self.breakpoints() {
            names.push(format!("alpha[{k}]"));
        }
        names.push("beta".to_string());
        for k in 1..=self.n_tau() {
            names.push(format!("tau[{k}]"));
        }
        for j in 1..=self.covariates {
            names.push(format!("gamma[{j}]"));
        }
        names
    }
}

/// Parameters of a PO/PPO model. `tau` is empty for the PO family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PpoParams {
    pub alpha: Vec<f64>,
    pub beta: f64,
    pub tau: Vec<f64>,
    pub gamma: Vec<f64>,
}

impl PpoParams {
    /// Public constructor: requires finite values and strictly increasing α
    /// (the baseline distribution must be a valid simplex point).
    pub fn new(alpha: Vec<f64>, beta: f64, tau: Vec<f64>, gamma: Vec<f64>) -> Result<Self> {
        if alpha.is_empty() {
            return Err(Error::InvalidParams("alpha must be non-empty".into()));
        }
        let all = alpha
            .iter()
            .chain(std::iter::once(&beta))
            .chain(tau.iter())
            .chain(gamma.iter());
        if all.clone().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParams("non-finite parameter".into()));
        }
        if alpha.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidParams(
                "alpha must be strictly increasing".into(),
            ));
        }
        Ok(Self {
            alpha,
            beta,
            tau,
            gamma,
        })
    }

    /// Rebuild from the flattened order α, β, τ, γ. Dimensions are checked
    /// against the config; monotonicity of α is not — candidate points from
    /// a sampler may be infeasible, which the log density reports as −∞.
    pub fn from_flat(cfg: &ModelConfig, flat: &[f64]) -> Result<Self> {
        if flat.len() != cfg.dim() {
            return Err(Error::DimensionMismatch {
                expected: cfg.dim(),
                got: flat.len(),
            });
        }
        let m = cfg.breakpoints();
        let t = cfg.n_tau();
        Ok(Self {
            alpha: flat[..m].to_vec(),
            beta: flat[m],
            tau: flat[m + 1..m + 1 + t].to_vec(),
            gamma: flat[m + 1 + t..].to_vec(),
        })
    }

    pub fn flatten(&self) -> Vec<f64> {
        let mut flat = Vec::with_capacity(self.alpha.len() + 1 + self.tau.len() + self.gamma.len());
        flat.extend_from_slice(&self.alpha);
        flat.push(self.beta);
        flat.extend_from_slice(&self.tau);
        flat.extend_from_slice(&self.gamma);
        flat
    }

    pub fn check_dims(&self, cfg: &ModelConfig) -> Result<()> {
        if self.alpha.len() != cfg.breakpoints()
            || self.tau.len() != cfg.n_tau()
            || self.gamma.len() != cfg.covariates
        {
            return Err(Error::DimensionMismatch {
                expected: cfg.dim(),
                got: self.alpha.len() + 1 + self.tau.len() + self.gamma.len(),
            });
        }
        Ok(())
    }

    /// Treatment effect on the cumulative logit at 0-based break point `k`:
    /// β at the first break point, β + τ_k beyond it.
    pub fn effect_at(&self, k: usize) -> f64 {
        if k == 0 || self.tau.is_empty() {
            self.beta
        } else {
            self.beta + self.tau[k - 1]
        }
    }
}

/// Trial arm, coded ±1/2 in the linear predictor so that α stays the
/// mid-point (average-arm) cumulative logit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Arm {
    Control,
    Treatment,
}

impl Arm {
    pub fn coded(self) -> f64 {
        match self {
            Arm::Control => -0.5,
            Arm::Treatment => 0.5,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Arm::Control => "control",
            Arm::Treatment => "treatment",
        }
    }
}

/// One observation: arm, 0-based outcome level, covariate values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub arm: Arm,
    pub level: usize,
    pub covariates: Vec<f64>,
}

/// Per-arm outcome counts. Counts are `f64` so expectation-weighted
/// pseudo-data (e.g. population-level fits) use the same code path.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmCounts {
    levels: usize,
    control: Vec<f64>,
    treatment: Vec<f64>,
}

impl ArmCounts {
    pub fn new(control: Vec<f64>, treatment: Vec<f64>) -> Result<Self> {
        if control.len() != treatment.len() {
            return Err(Error::DimensionMismatch {
                expected: control.len(),
                got: treatment.len(),
            });
        }
        if control.len() < 2 {
            return Err(Error::InvalidData(format!(
                "need at least 2 outcome levels, got {}",
                control.len()
            )));
        }
        if control
            .iter()
            .chain(treatment.iter())
            .any(|&c| !c.is_finite() || c < 0.0)
        {
            return Err(Error::InvalidData("counts must be finite and ≥ 0".into()));
        }
        let total: f64 = control.iter().chain(treatment.iter()).sum();
        if total <= 0.0 {
            return Err(Error::InvalidData("all counts are zero".into()));
        }
        let levels = control.len();
        Ok(Self {
            levels,
            control,
            treatment,
        })
    }

    pub fn levels(&self) -> usize {
        self.levels
    }

    pub fn arm(&self, arm: Arm) -> &[f64] {
        match arm {
            Arm::Control => &self.control,
            Arm::Treatment => &self.treatment,
        }
    }

    pub fn arm_total(&self, arm: Arm) -> f64 {
        self.arm(arm).iter().sum()
    }
}

/// A dataset for model fitting. With no covariates the records are
/// aggregated to per-arm counts once, so each likelihood evaluation costs
/// O(K) instead of O(n).
#[derive(Debug, Clone, PartialEq)]
pub struct TrialDataset {
    levels: usize,
    covariates: usize,
    records: Vec<TrialRecord>,
    counts: Option<ArmCounts>,
}

impl TrialDataset {
    pub fn new(levels: usize, covariates: usize, records: Vec<TrialRecord>) -> Result<Self> {
        if levels < 2 {
            return Err(Error::InvalidData(format!(
                "need at least 2 outcome levels, got {levels}"
            )));
        }
        if records.is_empty() {
            return Err(Error::InvalidData("dataset has no records".into()));
        }
        for (i, r) in records.iter().enumerate() {
            if r.level >= levels {
                return Err(Error::InvalidData(format!(
                    "record {i}: level {} out of range for {levels} levels",
                    r.level
                )));
            }
            if r.covariates.len() != covariates {
                return Err(Error::InvalidData(format!(
                    "record {i}: expected {covariates} covariates, got {}",
                    r.covariates.len()
                )));
            }
            if r.covariates.iter().any(|x| !x.is_finite()) {
                return Err(Error::InvalidData(format!("record {i}: non-finite covariate")));
            }
        }
        let counts = if covariates == 0 {
            let mut control = vec![0.0; levels];
            let mut treatment = vec![0.0; levels];
            for r in &records {
                match r.arm {
                    Arm::Control => control[r.level] += 1.0,
                    Arm::Treatment => treatment[r.level] += 1.0,
                }
            }
            Some(ArmCounts {
                levels,
                control,
                treatment,
            })
        } else {
            None
        };
        Ok(Self {
            levels,
            covariates,
            records,
            counts,
        })
    }

    /// Counts-only dataset (no per-record covariates, possibly fractional
    /// counts).
    pub fn from_counts(counts: ArmCounts) -> Self {
        Self {
            levels: counts.levels,
            covariates: 0,
            records: Vec::new(),
            counts: Some(counts),
        }
    }

    pub fn levels(&self) -> usize {
        self.levels
    }

    pub fn covariate_count(&self) -> usize {
        self.covariates
    }

    pub fn records(&self) -> &[TrialRecord] {
        &self.records
    }

    pub fn counts(&self) -> Option<&ArmCounts> {
        self.counts.as_ref()
    }

    pub fn n_records(&self) -> usize {
        self.records.len()
    }

    pub fn arm_size(&self, arm: Arm) -> f64 {
        match &self.counts {
            Some(c) => c.arm_total(arm),
            None => self.records.iter().filter(|r| r.arm == arm).count() as f64,
        }
    }

    /// True when only one arm carries data; the treatment contrast is then
    /// unidentified and a sampler must hold β (and τ) at zero.
    pub fn is_single_arm(&self) -> bool {
        self.arm_size(Arm::Control) == 0.0 || self.arm_size(Arm::Treatment) == 0.0
    }
}

/// Cell probabilities implied at one design point. When the cumulative
/// curves cross, `feasible` is false and `probs` holds the
/// truncated-at-zero, rescaled cells.
#[derive(Debug, Clone, PartialEq)]
pub struct CellProbs {
    pub probs: Vec<f64>,
    pub feasible: bool,
}

/// Cumulative-probability vector at one design point (length K−1).
fn cumulative_at(cfg: &ModelConfig, params: &PpoParams, a: f64, gx: f64) -> Vec<f64> {
    (0..cfg.breakpoints())
        .map(|k| expit(params.alpha[k] + params.effect_at(k) * a + gx))
        .collect()
}

fn dot(gamma: &[f64], x: &[f64]) -> f64 {
    gamma.iter().zip(x).map(|(g, x)| g * x).sum()
}

/// Model cell probabilities for one arm and covariate vector.
pub fn cell_probs(
    cfg: &ModelConfig,
    params: &PpoParams,
    arm: Arm,
    x: &[f64],
) -> Result<CellProbs> {
    params.check_dims(cfg)?;
    if x.len() != cfg.covariates {
        return Err(Error::DimensionMismatch {
            expected: cfg.covariates,
            got: x.len(),
        });
    }
    let cum = cumulative_at(cfg, params, arm.coded(), dot(&params.gamma, x));
    let mut probs = Vec::with_capacity(cfg.levels);
    let mut prev = 0.0;
    for &c in &cum {
        probs.push(c - prev);
        prev = c;
    }
    probs.push(1.0 - prev);
    let feasible = probs.iter().all(|&q| q >= 0.0);
    if !feasible {
        // Truncate-and-rescale: the prediction-time repair for crossed
        // cumulative curves.
        for q in &mut probs {
            *q = q.max(0.0);
        }
        let total: f64 = probs.iter().sum();
        for q in &mut probs {
            *q /= total;
        }
    }
    Ok(CellProbs { probs, feasible })
}

/// Flat-gradient accumulator in the order α, β, τ, γ.
struct GradAccum {
    grad: Vec<f64>,
    m: usize,
    n_tau: usize,
}

impl GradAccum {
    fn new(cfg: &ModelConfig) -> Self {
        Self {
            grad: vec![0.0; cfg.dim()],
            m: cfg.breakpoints(),
            n_tau: cfg.n_tau(),
        }
    }

    /// Add w·g·∂η_k/∂θ for the linear predictor at 0-based break point `k`.
    fn add(&mut self, k: usize, g: f64, a: f64, x: &[f64], w: f64) {
        let gw = g * w;
        self.grad[k] += gw;
        self.grad[self.m] += gw * a;
        if k >= 1 && self.n_tau > 0 {
            self.grad[self.m + 1 + (k - 1)] += gw * a;
        }
        for (j, &xj) in x.iter().enumerate() {
            self.grad[self.m + 1 + self.n_tau + j] += gw * xj;
        }
    }
}

/// Log-likelihood core shared by the fast counts path and the per-record
/// path. Returns −∞ (and no gradient) when any design point present in the
/// data implies a negative cell probability.
fn log_lik_impl(
    cfg: &ModelConfig,
    params: &PpoParams,
    data: &TrialDataset,
    want_grad: bool,
) -> Result<(f64, Option<Vec<f64>>)> {
    params.check_dims(cfg)?;
    if data.levels() != cfg.levels {
        return Err(Error::DimensionMismatch {
            expected: cfg.levels,
            got: data.levels(),
        });
    }
    if data.covariate_count() != cfg.covariates {
        return Err(Error::DimensionMismatch {
            expected: cfg.covariates,
            got: data.covariate_count(),
        });
    }
    let mut value = 0.0;
    let mut accum = want_grad.then(|| GradAccum::new(cfg));

    if let Some(counts) = data.counts() {
        for arm in [Arm::Control, Arm::Treatment] {
            let n = counts.arm(arm);
            if counts.arm_total(arm) == 0.0 {
                continue;
            }
            let a = arm.coded();
            let cum = cumulative_at(cfg, params, a, 0.0);
            let mut prev = 0.0;
            let mut cells = Vec::with_capacity(cfg.levels);
            for &c in &cum {
                cells.push(c - prev);
                prev = c;
            }
            cells.push(1.0 - prev);
            if cells.iter().any(|&q| q < 0.0) {
                return Ok((f64::NEG_INFINITY, None));
            }
            for (level, &w) in n.iter().enumerate() {
                if w == 0.0 {
                    continue;
                }
                let q = cells[level];
                if q <= 0.0 {
                    return Ok((f64::NEG_INFINITY, None));
                }
                value += w * q.ln();
                if let Some(acc) = accum.as_mut() {
                    if level < cfg.breakpoints() {
                        let f = cum[level];
                        acc.add(level, f * (1.0 - f) / q, a, &[], w);
                    }
                    if level >= 1 {
                        let f = cum[level - 1];
                        acc.add(level - 1, -f * (1.0 - f) / q, a, &[], w);
                    }
                }
            }
        }
    } else {
        for r in data.records() {
            let a = r.arm.coded();
            let gx = dot(&params.gamma, &r.covariates);
            // Monotone η ⟺ all cells nonnegative at this design point.
            let mut etas = Vec::with_capacity(cfg.breakpoints());
            let mut prev = f64::NEG_INFINITY;
            for k in 0..cfg.breakpoints() {
                let eta = params.alpha[k] + params.effect_at(k) * a + gx;
                if eta < prev {
                    return Ok((f64::NEG_INFINITY, None));
                }
                prev = eta;
                etas.push(eta);
            }
            let upper = if r.level == cfg.levels - 1 {
                1.0
            } else {
                expit(etas[r.level])
            };
            let lower = if r.level == 0 {
                0.0
            } else {
                expit(etas[r.level - 1])
            };
            let q = upper - lower;
            if q <= 0.0 {
                return Ok((f64::NEG_INFINITY, None));
            }
            value += q.ln();
            if let Some(acc) = accum.as_mut() {
                if r.level < cfg.breakpoints() {
                    acc.add(r.level, upper * (1.0 - upper) / q, a, &r.covariates, 1.0);
                }
                if r.level >= 1 {
                    acc.add(r.level - 1, -lower * (1.0 - lower) / q, a, &r.covariates, 1.0);
                }
            }
        }
    }
    Ok((value, accum.map(|a| a.grad)))
}

pub fn log_likelihood(cfg: &ModelConfig, params: &PpoParams, data: &TrialDataset) -> Result<f64> {
    log_lik_impl(cfg, params, data, false).map(|(v, _)| v)
}

/// Log prior density (with normalizing constants) and optionally its
/// gradient. −∞ when α is not strictly increasing.
fn log_prior_impl(
    cfg: &ModelConfig,
    params: &PpoParams,
    want_grad: bool,
) -> Result<(f64, Option<Vec<f64>>)> {
    params.check_dims(cfg)?;
    let m = cfg.breakpoints();
    let conc = cfg.cell_concentration;
    let c: Vec<f64> = params.alpha.iter().map(|&a| expit(a)).collect();
    let mut cells = Vec::with_capacity(cfg.levels);
    let mut prev = 0.0;
    for &ck in &c {
        cells.push(ck - prev);
        prev = ck;
    }
    cells.push(1.0 - prev);
    if cells.iter().any(|&q| q <= 0.0) {
        return Ok((f64::NEG_INFINITY, None));
    }

    let mut value = ln_gamma(cfg.levels as f64 * conc) - cfg.levels as f64 * ln_gamma(conc);
    for &q in &cells {
        value += (conc - 1.0) * q.ln();
    }
    for &ck in &c {
        value += (ck * (1.0 - ck)).ln();
    }
    let ln_norm = |v: f64, sd: f64| -0.5 * (v / sd).powi(2) - sd.ln() - 0.5 * (2.0 * std::f64::consts::PI).ln();
    value += ln_norm(params.beta, cfg.beta_prior_sd);
    for &t in &params.tau {
        value += ln_norm(t, cfg.tau_prior_sd);
    }
    for &g in &params.gamma {
        value += ln_norm(g, cfg.gamma_prior_sd);
    }

    let grad = want_grad.then(|| {
        let mut grad = vec![0.0; cfg.dim()];
        for k in 0..m {
            let dck = c[k] * (1.0 - c[k]);
            grad[k] = dck * (conc - 1.0) * (1.0 / cells[k] - 1.0 / cells[k + 1])
                + (1.0 - 2.0 * c[k]);
        }
        grad[m] = -params.beta / cfg.beta_prior_sd.powi(2);
        for (i, &t) in params.tau.iter().enumerate() {
            grad[m + 1 + i] = -t / cfg.tau_prior_sd.powi(2);
        }
        for (j, &g) in params.gamma.iter().enumerate() {
            grad[m + 1 + cfg.n_tau() + j] = -g / cfg.gamma_prior_sd.powi(2);
        }
        grad
    });
    Ok((value, grad))
}

pub fn log_prior(cfg: &ModelConfig, params: &PpoParams) -> Result<f64> {
    log_prior_impl(cfg, params, false).map(|(v, _)| v)
}

/// Unnormalized log posterior.
pub fn log_posterior(cfg: &ModelConfig, params: &PpoParams, data: &TrialDataset) -> Result<f64> {
    let prior = log_prior(cfg, params)?;
    if prior == f64::NEG_INFINITY {
        return Ok(f64::NEG_INFINITY);
    }
    Ok(prior + log_likelihood(cfg, params, data)?)
}

/// Log posterior with its analytic gradient (`None` at infeasible points,
/// where the value is −∞).
pub fn log_posterior_with_grad(
    cfg: &ModelConfig,
    params: &PpoParams,
    data: &TrialDataset,
) -> Result<(f64, Option<Vec<f64>>)> {
    let (pv, pg) = log_prior_impl(cfg, params, true)?;
    if pv == f64::NEG_INFINITY {
        return Ok((f64::NEG_INFINITY, None));
    }
    let (lv, lg) = log_lik_impl(cfg, params, data, true)?;
    if lv == f64::NEG_INFINITY {
        return Ok((f64::NEG_INFINITY, None));
    }
    let mut grad = pg.expect("finite prior carries a gradient");
    for (g, l) in grad.iter_mut().zip(lg.expect("finite likelihood carries a gradient")) {
        *g += l;
    }
    Ok((pv + lv, Some(grad)))
}

/// Likelihood and analytic gradient only (no prior), for maximum-likelihood
/// work on (possibly fractional) counts.
pub fn log_likelihood_with_grad(
    cfg: &ModelConfig,
    params: &PpoParams,
    data: &TrialDataset,
) -> Result<(f64, Option<Vec<f64>>)> {
    log_lik_impl(cfg, params, data, true)
}

/// Per-observation log-likelihood contributions, one entry per record in
/// dataset order. Counts-only datasets are expanded observation-by-
/// observation (integer counts required), control arm first, levels in
/// order.
pub fn pointwise_log_lik(
    cfg: &ModelConfig,
    params: &PpoParams,
    data: &TrialDataset,
) -> Result<Vec<f64>> {
    params.check_dims(cfg)?;
    let mut out = Vec::new();
    let mut push_obs = |arm: Arm, level: usize, times: usize| -> Result<()> {
        let cp = cell_probs(cfg, params, arm, &[])?;
        let q = if cp.feasible { cp.probs[level] } else { f64::NAN };
        let ll = if cp.feasible && q > 0.0 {
            q.ln()
        } else {
            f64::NEG_INFINITY
        };
        out.extend(std::iter::repeat_n(ll, times));
        Ok(())
    };
    if data.records().is_empty() {
        let counts = data
            .counts()
            .ok_or_else(|| Error::InvalidData("empty dataset".into()))?;
        for arm in [Arm::Control, Arm::Treatment] {
            for (level, &n) in counts.arm(arm).iter().enumerate() {
                if n == 0.0 {
                    continue;
                }
                if n.fract() != 0.0 {
                    return Err(Error::InvalidData(
                        "pointwise log-likelihood needs integer counts".into(),
                    ));
                }
                push_obs(arm, level, n as usize)?;
            }
        }
    } else {
        for r in data.records() {
            let cp = cell_probs(cfg, params, r.arm, &r.covariates)?;
            let q = cp.probs[r.level];
            out.push(if cp.feasible && q > 0.0 {
                q.ln()
            } else {
                f64::NEG_INFINITY
            });
        }
    }
    Ok(out)
}

/// Starting point for samplers: α from the pooled smoothed empirical
/// cumulative logits (add-0.5 smoothing keeps them finite), effects at zero.
pub fn initial_params(cfg: &ModelConfig, data: &TrialDataset) -> Result<PpoParams> {
    if data.levels() != cfg.levels {
        return Err(Error::DimensionMismatch {
            expected: cfg.levels,
            got: data.levels(),
        });
    }
    let mut pooled = vec![0.5; cfg.levels];
    match data.counts() {
        Some(c) => {
            for (level, cell) in pooled.iter_mut().enumerate() {
                *cell += c.arm(Arm::Control)[level] + c.arm(Arm::Treatment)[level];
            }
        }
        None => {
            for r in data.records() {
                pooled[r.level] += 1.0;
            }
        }
    }
    let total: f64 = pooled.iter().sum();
    let mut alpha = Vec::with_capacity(cfg.breakpoints());
    let mut acc = 0.0;
    for &p in &pooled[..cfg.levels - 1] {
        acc += p;
        alpha.push(crate::measures::logit(acc / total));
    }
    PpoParams::new(alpha, 0.0, vec![0.0; cfg.n_tau()], vec![0.0; cfg.covariates])
}
