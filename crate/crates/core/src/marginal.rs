//! From posterior parameter draws to marginal arm-level outcome
//! distributions, and from those to posterior summaries of the weighted
//! effect measures.
//!
//! Without covariates, each parameter draw maps directly to one control and
//! one treatment distribution. With covariates, reporting a marginal
//! (population-averaged) effect requires integrating the conditional
//! distributions over the covariate law; here that integral is taken
//! against a Bayesian-bootstrap draw of the empirical covariate
//! distribution — one fresh Dirichlet(1, …, 1) weighting of the observed
//! covariate rows per posterior draw — so the uncertainty in the covariate
//! law propagates into the reported intervals (g-computation).
//!
//! Partial-proportional-odds draws can imply crossed cumulative curves at
//! some design points; each conditional is repaired by truncating negative
//! cells to zero and rescaling *before* averaging, and the fraction of
//! draws that needed repair is tracked so callers can warn when it exceeds
//! 5%.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::measures::{
    breakpoint_effects, summarize, weights, BreakpointEffects, EffectScale, MeasureKind,
    OutcomeDist, WeightKind,
};
use crate::ppo::{cell_probs, Arm, TrialDataset};
use crate::rng::{bootstrap_weights, stream_rng};
use crate::sampler::PosteriorDraws;

/// Fraction of truncated draws above which results deserve a warning.
pub const TRUNCATION_WARN_FRACTION: f64 = 0.05;

/// Marginal control and treatment distributions implied by one posterior
/// draw. `truncated` records whether any conditional behind this pair
/// needed the truncate-and-rescale repair.
#[derive(Debug, Clone, PartialEq)]
pub struct ArmPair {
    pub control: OutcomeDist,
    pub treatment: OutcomeDist,
    pub truncated: bool,
}

/// Posterior sample of marginal arm distributions.
#[derive(Debug, Clone, PartialEq)]
pub struct MarginalDraws {
    pub pairs: Vec<ArmPair>,
    pub levels: usize,
}

impl MarginalDraws {
    pub fn n_draws(&self) -> usize {
        self.pairs.len()
    }

    pub fn truncated_draws(&self) -> usize {
        self.pairs.iter().filter(|p| p.truncated).count()
    }

    pub fn truncation_fraction(&self) -> f64 {
        if self.pairs.is_empty() {
            0.0
        } else {
            self.truncated_draws() as f64 / self.pairs.len() as f64
        }
    }

    /// True when enough draws needed the feasibility repair that the
    /// partial-proportional-odds fit should be treated with suspicion.
    pub fn truncation_warning(&self) -> bool {
        self.truncation_fraction() > TRUNCATION_WARN_FRACTION
    }
}

/// Arm distributions at covariates 0 (for a covariate-free model, the
/// marginal distributions themselves).
pub fn marginalize_unadjusted(posterior: &PosteriorDraws) -> Result<MarginalDraws> {
    let cfg = &posterior.model;
    let zeros = vec![0.0; cfg.covariates];
    let pairs = posterior
        .params_iter()
        .map(|params| {
            let c = cell_probs(cfg, params, Arm::Control, &zeros)?;
            let t = cell_probs(cfg, params, Arm::Treatment, &zeros)?;
            Ok(ArmPair {
                truncated: !(c.feasible && t.feasible),
                control: OutcomeDist::from_normalized(c.probs),
                treatment: OutcomeDist::from_normalized(t.probs),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(MarginalDraws {
        pairs,
        levels: cfg.levels,
    })
}

/// Covariate-standardized arm distributions by g-computation.
///
/// For posterior draw d, every record's conditional outcome distribution is
/// evaluated under both arm assignments (own covariates kept) and averaged
/// with one Bayesian-bootstrap weight vector drawn from stream d of `seed`.
/// A covariate-free model short-circuits to the unadjusted transform.
pub fn marginalize_adjusted(
    posterior: &PosteriorDraws,
    data: &TrialDataset,
    seed: u64,
) -> Result<MarginalDraws> {
    let cfg = &posterior.model;
    if data.levels() != cfg.levels || data.covariate_count() != cfg.covariates {
        return Err(Error::DimensionMismatch {
            expected: cfg.levels + cfg.covariates,
            got: data.levels() + data.covariate_count(),
        });
    }
    if cfg.covariates == 0 {
        return marginalize_unadjusted(posterior);
    }
    let records = data.records();
    if records.is_empty() {
        return Err(Error::InvalidData(
            "covariate standardization needs record-level data".into(),
        ));
    }
    let pairs = posterior
        .draws()
        .par_iter()
        .enumerate()
        .map(|(d, draw)| {
            let mut rng = stream_rng(seed, d as u64);
            let w = bootstrap_weights(&mut rng, records.len());
            let mut control = vec![0.0; cfg.levels];
            let mut treatment = vec![0.0; cfg.levels];
            let mut truncated = false;
            for (r, &wi) in records.iter().zip(&w) {
                let c = cell_probs(cfg, &draw.params, Arm::Control, &r.covariates)?;
                let t = cell_probs(cfg, &draw.params, Arm::Treatment, &r.covariates)?;
                truncated |= !(c.feasible && t.feasible);
                for k in 0..cfg.levels {
                    control[k] += wi * c.probs[k];
                    treatment[k] += wi * t.probs[k];
                }
            }
            Ok(ArmPair {
                control: OutcomeDist::from_normalized(control),
                treatment: OutcomeDist::from_normalized(treatment),
                truncated,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(MarginalDraws {
        pairs,
        levels: cfg.levels,
    })
}

/// Posterior summary of one weighted measure: median point estimate and
/// equal-tailed 95% interval, computed on the aggregation scale (log scale
/// for ratios) and reported on both scales.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MeasureSummary {
    pub kind: MeasureKind,
    pub weight_kind: WeightKind,
    /// Median on the reporting scale (ratio scale for ratio measures).
    pub point: f64,
    pub lower: f64,
    pub upper: f64,
    /// Same three quantities on the aggregation scale.
    pub aggregate_point: f64,
    pub aggregate_lower: f64,
    pub aggregate_upper: f64,
    /// Interval excludes the null (0 on the aggregation scale).
    pub significant: bool,
    /// Draws that produced a defined value.
    pub n_draws: usize,
    /// Draws skipped because the measure was undefined there.
    pub n_undefined: usize,
}

/// Linear-interpolation quantile of a sorted sample.
pub(crate) fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    debug_assert!(!sorted.is_empty());
    if sorted.len() == 1 {
        return sorted[0];
    }
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

fn raw_summary(pair: &ArmPair, kind: MeasureKind, weight_kind: WeightKind) -> Result<f64> {
    let effects = breakpoint_effects(&pair.control, &pair.treatment)?;
    let wk = if kind.uniform_weighted() {
        WeightKind::Uniform
    } else {
        weight_kind
    };
    let w = weights(wk, &pair.control, Some(&pair.treatment))?;
    Ok(summarize(&effects, &w, kind)?.aggregate())
}

/// Summarize one measure over the marginal draws. Draws where the measure
/// is undefined are skipped and counted; it is an error for every draw to
/// be undefined.
pub fn summarize_draws(
    draws: &MarginalDraws,
    kind: MeasureKind,
    weight_kind: WeightKind,
) -> Result<MeasureSummary> {
    let mut raws = Vec::with_capacity(draws.pairs.len());
    let mut undefined = 0usize;
    for pair in &draws.pairs {
        match raw_summary(pair, kind, weight_kind) {
            Ok(v) => raws.push(v),
            Err(Error::UndefinedEffect { .. }) | Err(Error::ZeroWeights) => undefined += 1,
            Err(e) => return Err(e),
        }
    }
    if raws.is_empty() {
        return Err(Error::InvalidData(format!(
            "{kind} undefined in every posterior draw"
        )));
    }
    raws.sort_by(|a, b| a.partial_cmp(b).expect("summaries are finite"));
    let agg_point = quantile_sorted(&raws, 0.5);
    let agg_lower = quantile_sorted(&raws, 0.025);
    let agg_upper = quantile_sorted(&raws, 0.975);
    let to_natural = |v: f64| if kind.is_ratio() { v.exp() } else { v };
    Ok(MeasureSummary {
        kind,
        weight_kind: if kind.uniform_weighted() {
            WeightKind::Uniform
        } else {
            weight_kind
        },
        point: to_natural(agg_point),
        lower: to_natural(agg_lower),
        upper: to_natural(agg_upper),
        aggregate_point: agg_point,
        aggregate_lower: agg_lower,
        aggregate_upper: agg_upper,
        significant: agg_lower > 0.0 || agg_upper < 0.0,
        n_draws: raws.len(),
        n_undefined: undefined,
    })
}

/// Posterior summary of one break point's effect on the aggregation scale.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BreakpointSummary {
    /// 1-based break point index.
    pub breakpoint: usize,
    pub median: f64,
    pub lower: f64,
    pub upper: f64,
    pub n_undefined: usize,
}

fn effect_on_scale(e: &BreakpointEffects, scale: EffectScale, k: usize) -> Option<f64> {
    match scale {
        EffectScale::LogOr => e.log_or()[k],
        EffectScale::Rd => Some(e.rd()[k]),
        EffectScale::LogRrPlus => e.log_rr_plus()[k],
        EffectScale::LogRrMinus => e.log_rr_minus()[k],
    }
}

/// Per-break-point posterior effect summaries for the measure's scale —
/// the raw material for forest-style plots of effect heterogeneity.
pub fn summarize_breakpoints(
    draws: &MarginalDraws,
    kind: MeasureKind,
) -> Result<Vec<BreakpointSummary>> {
    let m = draws.levels - 1;
    let scale = kind.scale();
    let mut per_bp: Vec<Vec<f64>> = vec![Vec::with_capacity(draws.pairs.len()); m];
    let mut undefined = vec![0usize; m];
    for pair in &draws.pairs {
        let effects = breakpoint_effects(&pair.control, &pair.treatment)?;
        for k in 0..m {
            match effect_on_scale(&effects, scale, k) {
                Some(v) => per_bp[k].push(v),
                None => undefined[k] += 1,
            }
        }
    }
    per_bp
        .into_iter()
        .zip(undefined)
        .enumerate()
        .map(|(k, (mut vals, n_undefined))| {
            if vals.is_empty() {
                return Err(Error::InvalidData(format!(
                    "effect undefined in every draw at break point {}",
                    k + 1
                )));
            }
            vals.sort_by(|a, b| a.partial_cmp(b).expect("effects are finite"));
            Ok(BreakpointSummary {
                breakpoint: k + 1,
                median: quantile_sorted(&vals, 0.5),
                lower: quantile_sorted(&vals, 0.025),
                upper: quantile_sorted(&vals, 0.975),
                n_undefined,
            })
        })
        .collect()
}

/// Posterior mean of the normalized weight vector — how much each break
/// point actually contributes to a weighted summary, averaged over draws.
pub fn posterior_mean_weights(
    draws: &MarginalDraws,
    weight_kind: WeightKind,
) -> Result<Vec<f64>> {
    let m = draws.levels - 1;
    let mut acc = vec![0.0; m];
    let mut used = 0usize;
    for pair in &draws.pairs {
        match weights(weight_kind, &pair.control, Some(&pair.treatment)) {
            Ok(w) => {
                for (a, v) in acc.iter_mut().zip(w.normalized()) {
                    *a += v;
                }
                used += 1;
            }
            Err(Error::ZeroWeights) => continue,
            Err(e) => return Err(e),
        }
    }
    if used == 0 {
        return Err(Error::ZeroWeights);
    }
    for a in &mut acc {
        *a /= used as f64;
    }
    Ok(acc)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measures::expit;
    use crate::ppo::{ModelConfig, ModelFamily, PpoParams, TrialRecord};
    use crate::sampler::{PosteriorDraws, TaggedDraw};
    use approx::assert_abs_diff_eq;

    fn synthetic_posterior(cfg: ModelConfig, params: Vec<PpoParams>) -> PosteriorDraws {
        let draws = params
            .into_iter()
            .enumerate()
            .map(|(i, params)| TaggedDraw {
                chain: 0,
                iteration: i,
                params,
            })
            .collect();
        PosteriorDraws::from_parts(cfg, draws)
    }

    #[test]
    fn unadjusted_matches_direct_transform() {
        let cfg = ModelConfig::new(ModelFamily::Po, 3, 0).unwrap();
        let p = PpoParams::new(vec![-0.2, 1.1], 0.8, vec![], vec![]).unwrap();
        let post = synthetic_posterior(cfg, vec![p]);
        let m = marginalize_unadjusted(&post).unwrap();
        assert_eq!(m.n_draws(), 1);
        let pair = &m.pairs[0];
        assert_abs_diff_eq!(
            pair.control.cumulative().values()[0],
            expit(-0.2 - 0.4),
            epsilon = 1e-12
        );
        assert_abs_diff_eq!(
            pair.treatment.cumulative().values()[1],
            expit(1.1 + 0.4),
            epsilon = 1e-12
        );
        assert!(!pair.truncated);
    }

    #[test]
    fn truncated_draws_are_counted() {
        let cfg = ModelConfig::new(ModelFamily::Ppo, 3, 0).unwrap();
        let good = PpoParams::new(vec![-0.2, 1.1], 0.3, vec![0.1], vec![]).unwrap();
        // Crossed treatment-arm curves: needs the repair.
        let bad = PpoParams::new(vec![0.1, 0.2], -3.0, vec![-1.0], vec![]).unwrap();
        let post = synthetic_posterior(cfg, vec![good, bad]);
        let m = marginalize_unadjusted(&post).unwrap();
        assert_eq!(m.truncated_draws(), 1);
        assert_abs_diff_eq!(m.truncation_fraction(), 0.5, epsilon = 1e-15);
        assert!(m.truncation_warning());
        assert_abs_diff_eq!(
            m.pairs[1].treatment.probs().iter().sum::<f64>(),
            1.0,
            epsilon = 1e-12
        );
    }

    #[test]
    fn adjusted_without_covariates_equals_unadjusted() {
        let cfg = ModelConfig::new(ModelFamily::Po, 3, 0).unwrap();
        let p = PpoParams::new(vec![-0.5, 0.7], 0.4, vec![], vec![]).unwrap();
        let post = synthetic_posterior(cfg.clone(), vec![p]);
        let data = TrialDataset::new(
            3,
            0,
            vec![TrialRecord {
                arm: Arm::Control,
                level: 0,
                covariates: vec![],
            }],
        )
        .unwrap();
        let a = marginalize_adjusted(&post, &data, 9).unwrap();
        let u = marginalize_unadjusted(&post).unwrap();
        assert_eq!(a, u);
    }

    #[test]
    fn zero_coefficient_covariate_changes_nothing() {
        // γ = 0 makes every conditional identical, so the bootstrap average
        // is the conditional itself no matter the weights.
        let cfg = ModelConfig::new(ModelFamily::Po, 3, 1).unwrap();
        let p = PpoParams::new(vec![-0.5, 0.7], 0.4, vec![], vec![0.0]).unwrap();
        let post = synthetic_posterior(cfg, vec![p.clone()]);
        let records: Vec<TrialRecord> = (0..20)
            .map(|i| TrialRecord {
                arm: if i % 2 == 0 { Arm::Control } else { Arm::Treatment },
                level: i % 3,
                covariates: vec![i as f64],
            })
            .collect();
        let data = TrialDataset::new(3, 1, records).unwrap();
        let a = marginalize_adjusted(&post, &data, 5).unwrap();
        let cfg0 = ModelConfig::new(ModelFamily::Po, 3, 0).unwrap();
        let p0 = PpoParams::new(p.alpha.clone(), p.beta, vec![], vec![]).unwrap();
        let u = marginalize_unadjusted(&synthetic_posterior(cfg0, vec![p0])).unwrap();
        for (pa, pu) in a.pairs.iter().zip(&u.pairs) {
            for k in 0..3 {
                assert_abs_diff_eq!(
                    pa.control.probs()[k],
                    pu.control.probs()[k],
                    epsilon = 1e-12
                );
                assert_abs_diff_eq!(
                    pa.treatment.probs()[k],
                    pu.treatment.probs()[k],
                    epsilon = 1e-12
                );
            }
        }
    }

    #[test]
    fn adjusted_is_reproducible_and_seed_sensitive() {
        let cfg = ModelConfig::new(ModelFamily::Po, 3, 1).unwrap();
        let p = PpoParams::new(vec![-0.5, 0.7], 0.4, vec![], vec![0.6]).unwrap();
        let post = synthetic_posterior(cfg, vec![p]);
        let records: Vec<TrialRecord> = (0..15)
            .map(|i| TrialRecord {
                arm: if i % 2 == 0 { Arm::Control } else { Arm::Treatment },
                level: i % 3,
                covariates: vec![(i as f64) / 7.0 - 1.0],
            })
            .collect();
        let data = TrialDataset::new(3, 1, records).unwrap();
        let a = marginalize_adjusted(&post, &data, 5).unwrap();
        let b = marginalize_adjusted(&post, &data, 5).unwrap();
        let c = marginalize_adjusted(&post, &data, 6).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    fn pair_from(control: &[f64], treatment: &[f64]) -> ArmPair {
        ArmPair {
            control: OutcomeDist::new(control.to_vec()).unwrap(),
            treatment: OutcomeDist::new(treatment.to_vec()).unwrap(),
            truncated: false,
        }
    }

    #[test]
    fn quantiles_interpolate() {
        let xs = [1.0, 2.0, 3.0, 4.0];
        assert_abs_diff_eq!(quantile_sorted(&xs, 0.5), 2.5, epsilon = 1e-15);
        assert_abs_diff_eq!(quantile_sorted(&xs, 0.0), 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(quantile_sorted(&xs, 1.0), 4.0, epsilon = 1e-15);
        assert_abs_diff_eq!(quantile_sorted(&[7.0], 0.3), 7.0, epsilon = 1e-15);
    }

    #[test]
    fn summary_median_and_interval() {
        // 401 draws with log wOR spread symmetrically around a known center.
        let c = [1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0];
        let mut pairs = Vec::new();
        for i in 0..401 {
            let shift = 0.2 + 0.001 * (i as f64 - 200.0);
            let ft: Vec<f64> = OutcomeDist::new(c.to_vec())
                .unwrap()
                .cumulative()
                .values()
                .iter()
                .map(|&f| expit(crate::measures::logit(f) + shift))
                .collect();
            pairs.push(ArmPair {
                control: OutcomeDist::new(c.to_vec()).unwrap(),
                treatment: OutcomeDist::from_cumulative(&ft).unwrap(),
                truncated: false,
            });
        }
        let draws = MarginalDraws { pairs, levels: 3 };
        let s = summarize_draws(&draws, MeasureKind::WOr, WeightKind::Control).unwrap();
        assert_abs_diff_eq!(s.aggregate_point, 0.2, epsilon = 1e-12);
        assert_abs_diff_eq!(s.point, 0.2f64.exp(), epsilon = 1e-12);
        // With 401 evenly spaced draws the 2.5% quantile position is
        // 0.025 * 400 = 10 exactly, i.e. ten grid steps above the minimum.
        assert_abs_diff_eq!(s.aggregate_lower, 0.2 - 0.190, epsilon = 1e-12);
        assert_abs_diff_eq!(s.aggregate_upper, 0.2 + 0.190, epsilon = 1e-12);
        assert!(s.significant, "interval (0.01, 0.39) excludes 0");
        assert_eq!(s.n_draws, 401);
        assert_eq!(s.n_undefined, 0);

        // Centered at zero: not significant.
        let mut pairs = Vec::new();
        for i in 0..101 {
            let shift = 0.001 * (i as f64 - 50.0);
            let ft: Vec<f64> = [1.0 / 3.0, 2.0 / 3.0]
                .iter()
                .map(|&f| expit(crate::measures::logit(f) + shift))
                .collect();
            pairs.push(ArmPair {
                control: OutcomeDist::new(c.to_vec()).unwrap(),
                treatment: OutcomeDist::from_cumulative(&ft).unwrap(),
                truncated: false,
            });
        }
        let draws = MarginalDraws { pairs, levels: 3 };
        let s = summarize_draws(&draws, MeasureKind::WOr, WeightKind::Control).unwrap();
        assert!(!s.significant);
    }

    #[test]
    fn undefined_draws_are_skipped_and_counted() {
        // One draw has a boundary control distribution: the log OR at break
        // point 1 is undefined there under positive uniform weight.
        let pairs = vec![
            pair_from(&[0.4, 0.3, 0.3], &[0.5, 0.3, 0.2]),
            ArmPair {
                control: OutcomeDist::new(vec![0.0, 0.5, 0.5]).unwrap(),
                treatment: OutcomeDist::new(vec![0.2, 0.4, 0.4]).unwrap(),
                truncated: false,
            },
        ];
        let draws = MarginalDraws { pairs, levels: 3 };
        let s = summarize_draws(&draws, MeasureKind::Aor, WeightKind::Uniform).unwrap();
        assert_eq!(s.n_draws, 1);
        assert_eq!(s.n_undefined, 1);

        // Control weighting skips the zero-weight break point instead.
        let s = summarize_draws(&draws, MeasureKind::WOr, WeightKind::Control).unwrap();
        assert_eq!(s.n_draws, 2);
        assert_eq!(s.n_undefined, 0);
    }

    #[test]
    fn breakpoint_summaries_track_each_breakpoint() {
        let pairs = vec![pair_from(&[0.5, 0.3, 0.2], &[0.6, 0.25, 0.15]); 5];
        let draws = MarginalDraws { pairs, levels: 3 };
        let bs = summarize_breakpoints(&draws, MeasureKind::WOr).unwrap();
        assert_eq!(bs.len(), 2);
        let or1 = (0.6f64 / 0.4) / (0.5 / 0.5);
        assert_abs_diff_eq!(bs[0].median, or1.ln(), epsilon = 1e-12);
        assert_abs_diff_eq!(bs[0].lower, bs[0].upper, epsilon = 1e-12);
        assert_eq!(bs[0].breakpoint, 1);
        assert_eq!(bs[1].breakpoint, 2);
    }

    #[test]
    fn mean_weights_are_a_simplex_point() {
        let pairs = vec![
            pair_from(&[0.5, 0.3, 0.2], &[0.6, 0.25, 0.15]),
            pair_from(&[0.3, 0.5, 0.2], &[0.35, 0.5, 0.15]),
        ];
        let draws = MarginalDraws { pairs, levels: 3 };
        for wk in WeightKind::ALL {
            let w = posterior_mean_weights(&draws, wk).unwrap();
            assert_eq!(w.len(), 2);
            assert_abs_diff_eq!(w.iter().sum::<f64>(), 1.0, epsilon = 1e-12);
            assert!(w.iter().all(|&v| v >= 0.0));
        }
    }
}
