//! Minimal end-to-end run: fit the partial-proportional-odds model to
//! outcome counts, marginalize, and print two weighted summaries.

use ordsum::marginal::{marginalize_unadjusted, summarize_draws};
use ordsum::measures::{MeasureKind, WeightKind};
use ordsum::ppo::{ArmCounts, ModelConfig, ModelFamily, TrialDataset};
use ordsum::sampler::{sample_posterior, Algorithm, SamplerConfig};

fn main() -> ordsum::Result<()> {
    // Outcome counts per level (best to worst), one vector per arm.
    let data = TrialDataset::from_counts(ArmCounts::new(
        vec![84.0, 21.0, 10.0, 5.0],
        vec![98.0, 12.0, 7.0, 3.0],
    )?);
    let model = ModelConfig::new(ModelFamily::Ppo, 4, 0)?;
    let sampler = SamplerConfig::new(Algorithm::Rwm, 7);
    let posterior = sample_posterior(&model, &data, &sampler)?;
    assert!(posterior.diagnostics.converged(1.1));

    let marginal = marginalize_unadjusted(&posterior)?;
    let wor = summarize_draws(&marginal, MeasureKind::WOr, WeightKind::Control)?;
    let wrd = summarize_draws(&marginal, MeasureKind::WRd, WeightKind::Control)?;
    println!("wOR {:.2} (95% CrI {:.2} to {:.2})", wor.point, wor.lower, wor.upper);
    println!("wRD {:+.3} (95% CrI {:+.3} to {:+.3})", wrd.point, wrd.lower, wrd.upper);
    Ok(())
}
