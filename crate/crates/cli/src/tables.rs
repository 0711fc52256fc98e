//! The `scenarios` and `true-values` commands: print the built-in scenario
//! registry and its closed-form population summary values.

use ordsum::measures::{MeasureKind, OutcomeDist, WeightKind};
use ordsum::simulate::{builtin_scenarios, po_true_value};

use crate::error::Result;

fn cells(d: &OutcomeDist) -> String {
    let inner: Vec<String> = d.probs().iter().map(|p| format!("{p:.4}")).collect();
    format!("({})", inner.join(", "))
}

/// Lists every built-in scenario with its exact arm distributions and the
/// closed-form log wOR under control weights.
pub fn run_scenarios() -> Result<()> {
    println!(
        "{:<18} {:<8} {:<44} {:<44} {:>8}",
        "scenario", "setting", "control", "treatment", "log wOR"
    );
    for s in builtin_scenarios() {
        let wor = s.true_log_summary(MeasureKind::WOr, WeightKind::Control)?;
        println!(
            "{:<18} {:<8} {:<44} {:<44} {:>8.3}",
            s.name,
            s.setting.map(|t| t.label()).unwrap_or("-"),
            cells(&s.control),
            cells(&s.treatment),
            wor
        );
    }
    println!();
    println!("values are population log weighted odds ratios under control-arm weights;");
    println!("run `ordsum true-values` for every weighting and the proportional-odds value.");
    Ok(())
}

/// Prints the full true-value table: the proportional-odds projection and the
/// log wOR under each weighting scheme, per built-in scenario.
pub fn run_true_values() -> Result<()> {
    println!(
        "{:<18} {:<8} {:>8} {:>10} {:>13} {:>8} {:>10}",
        "scenario", "setting", "PO", "wOR", "wOR-cumul", "wOR-sum", "wOR-overall"
    );
    for s in builtin_scenarios() {
        let po = po_true_value(&s)?;
        let variants = [
            WeightKind::Control,
            WeightKind::CumulativeOnly,
            WeightKind::SumOnly,
            WeightKind::ClaytonOverall,
        ];
        let mut row = format!(
            "{:<18} {:<8} {:>8.3}",
            s.name,
            s.setting.map(|t| t.label()).unwrap_or("-"),
            po
        );
        let widths = [10, 13, 8, 10];
        for (kind, width) in variants.into_iter().zip(widths) {
            let v = s.true_log_summary(MeasureKind::WOr, kind)?;
            row.push_str(&format!(" {v:>width$.3}"));
        }
        println!("{row}");
    }
    println!();
    println!("all values on the log scale; PO is the proportional-odds model projection");
    println!("fitted to exact expected counts at n = 1,000,000.");
    Ok(())
}
