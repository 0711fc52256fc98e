//! Machine-readable outputs for `analyze`: a versioned JSON report and a
//! plot-ready CSV of per-break-point and summary effects with intervals.

use serde::Serialize;

use ordsum::marginal::{BreakpointSummary, MeasureSummary};

pub const REPORT_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Serialize)]
pub struct ToolInfo {
    pub name: &'static str,
    pub version: &'static str,
}

impl ToolInfo {
    pub fn current() -> Self {
        ToolInfo {
            name: "ordsum",
            version: env!("CARGO_PKG_VERSION"),
        }
    }
}

/// Full echo of the analysis request, sufficient to reproduce the run.
#[derive(Debug, Serialize)]
pub struct ConfigEcho {
    pub input: String,
    pub outcome_column: String,
    pub arm_column: String,
    pub control_label: String,
    pub treatment_label: String,
    pub levels: Vec<String>,
    pub covariate_columns: Vec<String>,
    pub family: String,
    pub weights: String,
    pub measures: Vec<String>,
    pub seed: u64,
    pub chains: usize,
    pub warmup: usize,
    pub draws_per_chain: usize,
    pub prior_sd_tau: f64,
    pub rhat_threshold: f64,
    pub marginalization: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bootstrap_seed: Option<u64>,
}

#[derive(Debug, Serialize)]
pub struct DataInfo {
    pub n: usize,
    pub n_control: usize,
    pub n_treatment: usize,
    pub levels: usize,
}

#[derive(Debug, Serialize)]
pub struct ParamDiagnostic {
    pub name: String,
    pub rhat: f64,
    pub ess: f64,
}

#[derive(Debug, Serialize)]
pub struct SamplerInfo {
    pub algorithm: &'static str,
    pub generator: &'static str,
    pub seed: u64,
    pub acceptance_rate: f64,
    pub converged: bool,
    pub max_rhat: f64,
    pub min_ess: f64,
    pub parameters: Vec<ParamDiagnostic>,
}

#[derive(Debug, Serialize)]
pub struct TruncationInfo {
    /// Posterior draws whose implied cell probabilities needed the
    /// truncate-and-rescale repair during marginalization.
    pub truncated_draws: usize,
    pub fraction: f64,
    /// Set when enough draws truncated that the fit deserves suspicion.
    pub warning: bool,
}

#[derive(Debug, Serialize)]
pub struct WeightsInfo {
    pub kind: String,
    /// Posterior mean of the normalized break-point weights.
    pub posterior_mean: Vec<f64>,
}

/// Interval on the aggregation scale (log for ratio measures).
#[derive(Debug, Serialize)]
pub struct LogInterval {
    pub point: f64,
    pub lower: f64,
    pub upper: f64,
    pub n_undefined: usize,
}

impl From<&BreakpointSummary> for LogInterval {
    fn from(s: &BreakpointSummary) -> Self {
        LogInterval {
            point: s.median,
            lower: s.lower,
            upper: s.upper,
            n_undefined: s.n_undefined,
        }
    }
}

/// Cumulative effects at one break point ("level k or worse").
#[derive(Debug, Serialize)]
pub struct BreakpointReport {
    /// 1-based break point index.
    pub breakpoint: usize,
    pub log_or: LogInterval,
    pub rd: LogInterval,
    pub log_rr_plus: LogInterval,
    pub log_rr_minus: LogInterval,
}

#[derive(Debug, Serialize)]
pub struct MeasureReport {
    pub measure: String,
    pub weights: String,
    /// Reporting scale (ratio scale for ratio measures).
    pub point: f64,
    pub lower: f64,
    pub upper: f64,
    /// Aggregation scale (log for ratio measures, identity otherwise).
    pub aggregate_point: f64,
    pub aggregate_lower: f64,
    pub aggregate_upper: f64,
    /// The 95% interval excludes the null on the aggregation scale.
    pub significant: bool,
    pub n_draws: usize,
    pub n_undefined: usize,
}

impl From<&MeasureSummary> for MeasureReport {
    fn from(s: &MeasureSummary) -> Self {
        MeasureReport {
            measure: s.kind.label().to_string(),
            weights: s.weight_kind.label().to_string(),
            point: s.point,
            lower: s.lower,
            upper: s.upper,
            aggregate_point: s.aggregate_point,
            aggregate_lower: s.aggregate_lower,
            aggregate_upper: s.aggregate_upper,
            significant: s.significant,
            n_draws: s.n_draws,
            n_undefined: s.n_undefined,
        }
    }
}

#[derive(Debug, Serialize)]
pub struct AnalysisReport {
    pub schema_version: u32,
    pub tool: ToolInfo,
    pub config: ConfigEcho,
    pub data: DataInfo,
    pub sampler: SamplerInfo,
    pub truncation: TruncationInfo,
    pub weights: WeightsInfo,
    pub breakpoints: Vec<BreakpointReport>,
    pub measures: Vec<MeasureReport>,
}

impl AnalysisReport {
    pub fn to_json(&self) -> serde_json::Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    /// Plot-ready CSV: per-break-point and summary effects with intervals,
    /// all on the aggregation scale (log for ratio measures).
    pub fn to_plot_csv(&self) -> String {
        let mut out = String::from("kind,measure,breakpoint,point,lower,upper\n");
        for bp in &self.breakpoints {
            let rows: [(&str, &LogInterval); 4] = [
                ("logOR", &bp.log_or),
                ("RD", &bp.rd),
                ("logRRplus", &bp.log_rr_plus),
                ("logRRminus", &bp.log_rr_minus),
            ];
            for (name, iv) in rows {
                out.push_str(&format!(
                    "breakpoint,{name},{},{},{},{}\n",
                    bp.breakpoint, iv.point, iv.lower, iv.upper
                ));
            }
        }
        for m in &self.measures {
            out.push_str(&format!(
                "summary,{},,{},{},{}\n",
                m.measure, m.aggregate_point, m.aggregate_lower, m.aggregate_upper
            ));
        }
        out
    }
}

/// Formats a value to three significant digits for terminal display of
/// ratio-scale measures.
pub fn sig3(v: f64) -> String {
    if v == 0.0 || !v.is_finite() {
        return format!("{v}");
    }
    let magnitude = v.abs().log10().floor() as i32;
    let decimals = (2 - magnitude).max(0) as usize;
    format!("{v:.decimals$}")
}

#[cfg(test)]
mod tests {
    use super::sig3;

    #[test]
    fn three_significant_digits() {
        assert_eq!(sig3(1.73205), "1.73");
        assert_eq!(sig3(0.0423), "0.0423");
        assert_eq!(sig3(12.345), "12.3");
        assert_eq!(sig3(173.2), "173");
        assert_eq!(sig3(0.999), "0.999");
    }
}
