//! Break-point effects, weighting schemes, and weighted summary measures.
//!
//! For an ordinal outcome with K levels (lower = better) and arm-wise cell
//! probabilities π_{k,a}, each break point k = 1..K−1 carries the cumulative
//! probability π⁺_{k,a} = P(Y ≤ k | A = a) and four effect measures:
//!
//! ```text
//! OR_k  = {π⁺_{k,t}/(1−π⁺_{k,t})} / {π⁺_{k,c}/(1−π⁺_{k,c})}
//! RD_k  = π⁺_{k,t} − π⁺_{k,c}
//! RR⁺_k = π⁺_{k,t} / π⁺_{k,c}            (relative risk of a better outcome)
//! RR⁻_k = (1−π⁺_{k,c}) / (1−π⁺_{k,t})    (relative risk of a worse outcome,
//!                                          reported > 1 favoring treatment)
//! ```
//!
//! A weighted summary aggregates the break points: ratio measures by a
//! weighted geometric mean (arithmetic mean of logs), the risk difference by
//! a weighted arithmetic mean. The default weights are built from the
//! control arm alone,
//!
//! ```text
//! w_k = (π_{k,c} + π_{k+1,c}) · π⁺_{k,c} (1 − π⁺_{k,c})
//! ```
//!
//! which vanish exactly where the cumulative logits blow up, so the weighted
//! measures stay well defined on the closed simplex. The same formula
//! evaluated at the average of the two arms gives the Clayton "overall"
//! weights; the two factors are also available separately (sum-only,
//! cumulative-only), and uniform weights recover the plain geometric /
//! arithmetic means (AOR, ARD, ARR±).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Probability vector over K ordered outcome levels for one arm.
///
/// Construction validates: every element in [0, 1], K ≥ 2, and the sum
/// within 1e-12 of one (then renormalized exactly). Deserialization runs
/// the same validation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "Vec<f64>", try_from = "Vec<f64>")]
pub struct OutcomeDist {
    probs: Vec<f64>,
}

impl From<OutcomeDist> for Vec<f64> {
    fn from(d: OutcomeDist) -> Self {
        d.probs
    }
}

impl TryFrom<Vec<f64>> for OutcomeDist {
    type Error = Error;

    fn try_from(probs: Vec<f64>) -> Result<Self> {
        Self::new(probs)
    }
}

pub const PROB_SUM_TOL: f64 = 1e-12;

impl OutcomeDist {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.len() < 2 {
            return Err(Error::InvalidDistribution(format!(
                "need at least 2 levels, got {}",
                probs.len()
            )));
        }
        if let Some(bad) = probs.iter().find(|p| !(0.0..=1.0).contains(*p) || !p.is_finite()) {
            return Err(Error::InvalidDistribution(format!(
                "probability {bad} outside [0, 1]"
            )));
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > PROB_SUM_TOL {
            return Err(Error::InvalidDistribution(format!(
                "probabilities sum to {sum}, not 1"
            )));
        }
        let mut probs = probs;
        if sum != 1.0 {
            probs.iter_mut().for_each(|p| *p /= sum);
        }
        Ok(Self { probs })
    }

    /// Internal constructor for values already normalized by arithmetic that
    /// guarantees it (e.g. truncate-and-rescale).
    pub(crate) fn from_normalized(probs: Vec<f64>) -> Self {
        debug_assert!(probs.len() >= 2);
        debug_assert!((probs.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        Self { probs }
    }

    pub fn uniform(levels: usize) -> Self {
        assert!(levels >= 2, "need at least 2 levels");
        Self {
            probs: vec![1.0 / levels as f64; levels],
        }
    }

    /// Build a distribution from its K−1 cumulative probabilities.
    pub fn from_cumulative(cum: &[f64]) -> Result<Self> {
        let mut probs = Vec::with_capacity(cum.len() + 1);
        let mut prev = 0.0;
        for &c in cum {
            probs.push(c - prev);
            prev = c;
        }
        probs.push(1.0 - prev);
        Self::new(probs)
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn levels(&self) -> usize {
        self.probs.len()
    }

    pub fn breakpoints(&self) -> usize {
        self.probs.len() - 1
    }

    /// Cumulative probabilities π⁺_k = P(Y ≤ k) for k = 1..K−1.
    ///
    /// A break point with no probability mass above it yields exactly 1.0
    /// (and leading zero-probability levels yield exactly 0.0), so that
    /// boundary break points are recognized exactly rather than up to
    /// accumulated rounding; interior values are clamped into [0, 1].
    pub fn cumulative(&self) -> CumulativeDist {
        CumulativeDist {
            cum: cumulative_values(&self.probs),
        }
    }

    /// Same probabilities in reverse level order.
    pub fn reversed(&self) -> Self {
        let mut probs = self.probs.clone();
        probs.reverse();
        Self { probs }
    }
}

/// Cumulative probabilities at the K−1 break points; nondecreasing, in [0, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct CumulativeDist {
    cum: Vec<f64>,
}

impl CumulativeDist {
    pub fn values(&self) -> &[f64] {
        &self.cum
    }

    pub fn len(&self) -> usize {
        self.cum.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cum.is_empty()
    }
}

/// Per-break-point effect measures. Ratio measures are held on the log
/// scale; an entry is `None` where its formula degenerates (a cumulative
/// probability at 0 or 1 on the side the formula divides by or logs).
#[derive(Debug, Clone)]
pub struct BreakpointEffects {
    log_or: Vec<Option<f64>>,
    rd: Vec<f64>,
    log_rr_plus: Vec<Option<f64>>,
    log_rr_minus: Vec<Option<f64>>,
}

impl BreakpointEffects {
    pub fn len(&self) -> usize {
        self.rd.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rd.is_empty()
    }

    pub fn log_or(&self) -> &[Option<f64>] {
        &self.log_or
    }

    /// Risk differences; always defined.
    pub fn rd(&self) -> &[f64] {
        &self.rd
    }

    pub fn log_rr_plus(&self) -> &[Option<f64>] {
        &self.log_rr_plus
    }

    pub fn log_rr_minus(&self) -> &[Option<f64>] {
        &self.log_rr_minus
    }

    /// Odds ratios on the ratio scale.
    pub fn or(&self) -> Vec<Option<f64>> {
        self.log_or.iter().map(|v| v.map(f64::exp)).collect()
    }

    fn on_scale(&self, scale: EffectScale, k: usize) -> Option<f64> {
        match scale {
            EffectScale::LogOr => self.log_or[k],
            EffectScale::Rd => Some(self.rd[k]),
            EffectScale::LogRrPlus => self.log_rr_plus[k],
            EffectScale::LogRrMinus => self.log_rr_minus[k],
        }
    }
}

/// Compute all four effect vectors from a control/treatment pair.
pub fn breakpoint_effects(
    control: &OutcomeDist,
    treatment: &OutcomeDist,
) -> Result<BreakpointEffects> {
    if control.levels() != treatment.levels() {
        return Err(Error::DimensionMismatch {
            expected: control.levels(),
            got: treatment.levels(),
        });
    }
    let fc = control.cumulative();
    let ft = treatment.cumulative();
    let m = fc.len();
    let mut log_or = Vec::with_capacity(m);
    let mut rd = Vec::with_capacity(m);
    let mut log_rr_plus = Vec::with_capacity(m);
    let mut log_rr_minus = Vec::with_capacity(m);
    for k in 0..m {
        let (c, t) = (fc.values()[k], ft.values()[k]);
        let interior = |p: f64| p > 0.0 && p < 1.0;
        log_or.push(if interior(c) && interior(t) {
            Some(logit(t) - logit(c))
        } else {
            None
        });
        rd.push(t - c);
        log_rr_plus.push(if c > 0.0 && t > 0.0 {
            Some(t.ln() - c.ln())
        } else {
            None
        });
        log_rr_minus.push(if c < 1.0 && t < 1.0 {
            Some((1.0 - c).ln() - (1.0 - t).ln())
        } else {
            None
        });
    }
    Ok(BreakpointEffects {
        log_or,
        rd,
        log_rr_plus,
        log_rr_minus,
    })
}

/// Weighting scheme over break points.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WeightKind {
    /// (π_{k,c}+π_{k+1,c}) · π⁺_{k,c}(1−π⁺_{k,c}), control arm only.
    Control,
    /// Same formula at the average of the two arms' distributions.
    #[serde(rename = "clayton")]
    ClaytonOverall,
    /// π_{k,c}+π_{k+1,c} alone.
    #[serde(rename = "sum")]
    SumOnly,
    /// π⁺_{k,c}(1−π⁺_{k,c}) alone.
    #[serde(rename = "cumulative")]
    CumulativeOnly,
    Uniform,
}

impl WeightKind {
    pub const ALL: [WeightKind; 5] = [
        WeightKind::Control,
        WeightKind::ClaytonOverall,
        WeightKind::SumOnly,
        WeightKind::CumulativeOnly,
        WeightKind::Uniform,
    ];

    pub fn label(self) -> &'static str {
        match self {
            WeightKind::Control => "control",
            WeightKind::ClaytonOverall => "clayton",
            WeightKind::SumOnly => "sum",
            WeightKind::CumulativeOnly => "cumulative",
            WeightKind::Uniform => "uniform",
        }
    }
}

impl std::str::FromStr for WeightKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "control" => Ok(WeightKind::Control),
            "clayton" | "clayton-overall" | "overall" => Ok(WeightKind::ClaytonOverall),
            "sum" | "sum-only" => Ok(WeightKind::SumOnly),
            "cumulative" | "cumulative-only" => Ok(WeightKind::CumulativeOnly),
            "uniform" => Ok(WeightKind::Uniform),
            other => Err(Error::InvalidConfig(format!("unknown weight kind: {other}"))),
        }
    }
}

impl std::fmt::Display for WeightKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.label())
    }
}

/// A realized weight vector (length K−1, nonnegative, not all zero).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WeightScheme {
    pub kind: WeightKind,
    values: Vec<f64>,
}

impl WeightScheme {
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Values scaled to sum to one.
    pub fn normalized(&self) -> Vec<f64> {
        let total: f64 = self.values.iter().sum();
        self.values.iter().map(|w| w / total).collect()
    }
}

/// Evaluate a weighting scheme. The treatment arm is consulted only by the
/// Clayton overall kind; control-based kinds ignore it entirely.
pub fn weights(
    kind: WeightKind,
    control: &OutcomeDist,
    treatment: Option<&OutcomeDist>,
) -> Result<WeightScheme> {
    let m = control.breakpoints();
    let values = match kind {
        WeightKind::Uniform => vec![1.0; m],
        WeightKind::ClaytonOverall => {
            let t = treatment.ok_or_else(|| {
                Error::InvalidConfig("clayton weights require the treatment distribution".into())
            })?;
            if t.levels() != control.levels() {
                return Err(Error::DimensionMismatch {
                    expected: control.levels(),
                    got: t.levels(),
                });
            }
            let avg: Vec<f64> = control
                .probs()
                .iter()
                .zip(t.probs())
                .map(|(c, t)| 0.5 * (c + t))
                .collect();
            pair_times_cum(&avg)
        }
        WeightKind::Control => pair_times_cum(control.probs()),
        WeightKind::SumOnly => pair_sums(control.probs()),
        WeightKind::CumulativeOnly => cum_variances(control.probs()),
    };
    if values.iter().all(|&w| w == 0.0) {
        return Err(Error::ZeroWeights);
    }
    Ok(WeightScheme { kind, values })
}

fn pair_sums(probs: &[f64]) -> Vec<f64> {
    probs.windows(2).map(|w| w[0] + w[1]).collect()
}

/// Cumulative probabilities at the K−1 break points; exact 1.0 once no mass
/// remains above a break point, so that a zero tail is recognized exactly.
fn cumulative_values(probs: &[f64]) -> Vec<f64> {
    let last_nonzero = probs.iter().rposition(|&p| p != 0.0).unwrap_or(0);
    let mut acc = 0.0f64;
    probs[..probs.len() - 1]
        .iter()
        .enumerate()
        .map(|(k, &p)| {
            acc = (acc + p).min(1.0);
            if k >= last_nonzero {
                1.0
            } else {
                acc
            }
        })
        .collect()
}

fn cum_variances(probs: &[f64]) -> Vec<f64> {
    cumulative_values(probs)
        .into_iter()
        .map(|f| f * (1.0 - f))
        .collect()
}

fn pair_times_cum(probs: &[f64]) -> Vec<f64> {
    pair_sums(probs)
        .into_iter()
        .zip(cum_variances(probs))
        .map(|(s, v)| s * v)
        .collect()
}

/// The eight population-level summary kinds. The `A*` kinds are the
/// uniform-weight specials of their `w*` counterparts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum MeasureKind {
    #[serde(rename = "wOR")]
    WOr,
    #[serde(rename = "wRD")]
    WRd,
    #[serde(rename = "wRRplus")]
    WRrPlus,
    #[serde(rename = "wRRminus")]
    WRrMinus,
    #[serde(rename = "AOR")]
    Aor,
    #[serde(rename = "ARD")]
    Ard,
    #[serde(rename = "ARRplus")]
    ArrPlus,
    #[serde(rename = "ARRminus")]
    ArrMinus,
}

/// Aggregation scale of a summary: log of a ratio, or plain difference.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EffectScale {
    LogOr,
    Rd,
    LogRrPlus,
    LogRrMinus,
}

impl EffectScale {
    fn measure_name(self) -> &'static str {
        match self {
            EffectScale::LogOr => "odds ratio",
            EffectScale::Rd => "risk difference",
            EffectScale::LogRrPlus => "relative risk (better)",
            EffectScale::LogRrMinus => "relative risk (worse)",
        }
    }
}

impl MeasureKind {
    pub const ALL: [MeasureKind; 8] = [
        MeasureKind::WOr,
        MeasureKind::WRd,
        MeasureKind::WRrPlus,
        MeasureKind::WRrMinus,
        MeasureKind::Aor,
        MeasureKind::Ard,
        MeasureKind::ArrPlus,
        MeasureKind::ArrMinus,
    ];

    pub fn scale(self) -> EffectScale {
        match self {
            MeasureKind::WOr | MeasureKind::Aor => EffectScale::LogOr,
            MeasureKind::WRd | MeasureKind::Ard => EffectScale::Rd,
            MeasureKind::WRrPlus | MeasureKind::ArrPlus => EffectScale::LogRrPlus,
            MeasureKind::WRrMinus | MeasureKind::ArrMinus => EffectScale::LogRrMinus,
        }
    }

    /// True for the A* kinds, which fix uniform weights.
    pub fn uniform_weighted(self) -> bool {
        matches!(
            self,
            MeasureKind::Aor | MeasureKind::Ard | MeasureKind::ArrPlus | MeasureKind::ArrMinus
        )
    }

    pub fn is_ratio(self) -> bool {
        !matches!(self.scale(), EffectScale::Rd)
    }

    /// Null value on the reporting scale: 1 for ratios, 0 for differences.
    pub fn null_value(self) -> f64 {
        if self.is_ratio() {
            1.0
        } else {
            0.0
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            MeasureKind::WOr => "wOR",
            MeasureKind::WRd => "wRD",
            MeasureKind::WRrPlus => "wRRplus",
            MeasureKind::WRrMinus => "wRRminus",
            MeasureKind::Aor => "AOR",
            MeasureKind::Ard => "ARD",
            MeasureKind::ArrPlus => "ARRplus",
            MeasureKind::ArrMinus => "ARRminus",
        }
    }
}

impl std::str::FromStr for MeasureKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        MeasureKind::ALL
            .iter()
            .copied()
            .find(|m| m.label().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::InvalidConfig(format!("unknown measure kind: {s}")))
    }
}

impl std::fmt::Display for MeasureKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.label())
    }
}

/// One computed summary. Ratio kinds aggregate on the log scale; `value()`
/// exponentiates them back for reporting.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SummaryMeasure {
    pub kind: MeasureKind,
    raw: f64,
}

impl SummaryMeasure {
    /// Value on the aggregation scale (log for ratio kinds, identity for RD).
    pub fn aggregate(&self) -> f64 {
        self.raw
    }

    /// Value on the reporting scale (ratio scale for ratio kinds).
    pub fn value(&self) -> f64 {
        if self.kind.is_ratio() {
            self.raw.exp()
        } else {
            self.raw
        }
    }
}

/// Weighted aggregation of break-point effects into one summary.
///
/// Break points with zero weight contribute nothing, even where their effect
/// is undefined; an undefined effect under positive weight is an error. The
/// A* kinds insist on uniform weights so that they remain exactly the
/// uniform-weight specials of their w* counterparts.
pub fn summarize(
    effects: &BreakpointEffects,
    w: &WeightScheme,
    kind: MeasureKind,
) -> Result<SummaryMeasure> {
    if effects.len() != w.len() {
        return Err(Error::DimensionMismatch {
            expected: effects.len(),
            got: w.len(),
        });
    }
    if kind.uniform_weighted() && w.kind != WeightKind::Uniform {
        return Err(Error::InvalidConfig(format!(
            "{kind} takes uniform weights, got {} weights",
            w.kind
        )));
    }
    let scale = kind.scale();
    let mut terms = Vec::with_capacity(w.len());
    let mut denom = 0.0;
    for (k, &wk) in w.values().iter().enumerate() {
        if wk == 0.0 {
            continue;
        }
        match effects.on_scale(scale, k) {
            Some(e) => {
                terms.push((wk, e));
                denom += wk;
            }
            None => {
                return Err(Error::UndefinedEffect {
                    measure: scale.measure_name(),
                    breakpoint: k + 1,
                })
            }
        }
    }
    debug_assert!(denom > 0.0, "WeightScheme guarantees a positive weight");
    // Normalize before accumulating so a lone weighted break point passes its
    // effect through unchanged (its normalized weight is exactly 1).
    let raw = terms.iter().map(|&(wk, e)| (wk / denom) * e).sum();
    Ok(SummaryMeasure { kind, raw })
}

/// Closed-form population value of a summary on its aggregation scale
/// (log scale for ratio kinds). The A* kinds force uniform weights.
pub fn true_log_summary(
    control: &OutcomeDist,
    treatment: &OutcomeDist,
    kind: MeasureKind,
    weight_kind: WeightKind,
) -> Result<f64> {
    let effects = breakpoint_effects(control, treatment)?;
    let wk = if kind.uniform_weighted() {
        WeightKind::Uniform
    } else {
        weight_kind
    };
    let w = weights(wk, control, Some(treatment))?;
    Ok(summarize(&effects, &w, kind)?.aggregate())
}

pub fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

pub fn expit(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}
