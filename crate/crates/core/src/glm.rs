//! Frequentist comparators: dichotomized binary logistic regression at a
//! chosen break point, and the net benefit (win difference) with its
//! U-statistic variance.

use nalgebra::{Cholesky, DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::measures::{expit, OutcomeDist};
use crate::ppo::{Arm, TrialDataset};

/// Two-sided 97.5% standard-normal quantile, for 95% intervals.
pub const Z_975: f64 = 1.959_963_984_540_054;

const MAX_IRLS_ITER: usize = 50;
const IRLS_RIDGE: f64 = 1e-8;
/// Relative log-likelihood change declaring IRLS converged.
const IRLS_TOL: f64 = 1e-10;
/// A coefficient this large on the logit scale means separation, not signal.
const SEPARATION_BOUND: f64 = 30.0;

/// Maximum-likelihood fit of a binary logistic model for the event
/// Y ≤ `breakpoint`, with the treatment arm coded ±1/2 so the arm
/// coefficient is the log odds ratio.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BinaryFit {
    /// 1-based break point that defined the event.
    pub breakpoint: usize,
    /// Full coefficient vector: intercept, arm, then covariates.
    pub coefficients: Vec<f64>,
    pub log_or: f64,
    pub se: f64,
    /// 95% Wald interval on the odds-ratio scale.
    pub ci_lower: f64,
    pub ci_upper: f64,
    pub converged: bool,
    pub iterations: usize,
}

impl BinaryFit {
    pub fn odds_ratio(&self) -> f64 {
        self.log_or.exp()
    }

    pub fn significant(&self) -> bool {
        self.ci_lower > 1.0 || self.ci_upper < 1.0
    }
}

/// Grouped observations for the IRLS loop: design row, trials, successes.
struct BinomialRow {
    x: Vec<f64>,
    trials: f64,
    successes: f64,
}

fn binom_loglik(rows: &[BinomialRow], beta: &DVector<f64>) -> f64 {
    rows.iter()
        .map(|r| {
            let eta: f64 = r.x.iter().zip(beta.iter()).map(|(x, b)| x * b).sum();
            let mu = expit(eta);
            let mut ll = 0.0;
            if r.successes > 0.0 {
                ll += r.successes * mu.ln();
            }
            if r.trials - r.successes > 0.0 {
                ll += (r.trials - r.successes) * (1.0 - mu).ln();
            }
            ll
        })
        .sum()
}

fn irls(rows: &[BinomialRow], dim: usize) -> Result<(DVector<f64>, DMatrix<f64>, bool, usize)> {
    let mut beta = DVector::zeros(dim);
    let mut ll = binom_loglik(rows, &beta);
    let mut converged = false;
    let mut iterations = 0;
    let mut fisher = DMatrix::zeros(dim, dim);
    for iter in 1..=MAX_IRLS_ITER {
        iterations = iter;
        let mut grad = DVector::zeros(dim);
        fisher.fill(0.0);
        for r in rows {
            let eta: f64 = r.x.iter().zip(beta.iter()).map(|(x, b)| x * b).sum();
            let mu = expit(eta);
            let w = r.trials * mu * (1.0 - mu);
            let resid = r.successes - r.trials * mu;
            for i in 0..dim {
                grad[i] += r.x[i] * resid;
                for j in 0..dim {
                    fisher[(i, j)] += w * r.x[i] * r.x[j];
                }
            }
        }
        let mut ridged = fisher.clone();
        for i in 0..dim {
            ridged[(i, i)] += IRLS_RIDGE;
        }
        let mut delta = Cholesky::new(ridged)
            .map(|c| c.solve(&grad))
            .ok_or_else(|| Error::NonConvergence("information matrix not positive".into()))?;
        // Step-halving keeps Newton ascent monotone.
        let mut candidate = &beta + &delta;
        let mut ll_new = binom_loglik(rows, &candidate);
        let mut halvings = 0;
        while ll_new < ll && halvings < 30 {
            delta /= 2.0;
            candidate = &beta + &delta;
            ll_new = binom_loglik(rows, &candidate);
            halvings += 1;
        }
        beta = candidate;
        if beta.iter().any(|b| b.abs() > SEPARATION_BOUND) {
            return Ok((beta, fisher, false, iterations));
        }
        if (ll_new - ll).abs() <= IRLS_TOL * ll.abs().max(1.0) {
            converged = true;
            break;
        }
        ll = ll_new;
    }
    // Fisher information at the final coefficients, for standard errors.
    fisher.fill(0.0);
    for r in rows {
        let eta: f64 = r.x.iter().zip(beta.iter()).map(|(x, b)| x * b).sum();
        let mu = expit(eta);
        let w = r.trials * mu * (1.0 - mu);
        for i in 0..dim {
            for j in 0..dim {
                fisher[(i, j)] += w * r.x[i] * r.x[j];
            }
        }
    }
    Ok((beta, fisher, converged, iterations))
}

/// Fit the dichotomized logistic comparator at one break point.
/// `adjust` includes the dataset's covariates in the linear predictor.
pub fn fit_binary_logistic(
    data: &TrialDataset,
    breakpoint: usize,
    adjust: bool,
) -> Result<BinaryFit> {
    if breakpoint == 0 || breakpoint >= data.levels() {
        return Err(Error::InvalidConfig(format!(
            "break point {breakpoint} out of range 1..={}",
            data.levels() - 1
        )));
    }
    if adjust && data.covariate_count() == 0 {
        return Err(Error::InvalidData(
            "adjusted fit requested but the data carry no covariates".into(),
        ));
    }
    let n_cov = if adjust { data.covariate_count() } else { 0 };
    let dim = 2 + n_cov;

    let rows: Vec<BinomialRow> = if data.records().is_empty() {
        let counts = data
            .counts()
            .ok_or_else(|| Error::InvalidData("empty dataset".into()))?;
        [Arm::Control, Arm::Treatment]
            .into_iter()
            .filter(|&arm| counts.arm_total(arm) > 0.0)
            .map(|arm| {
                let n = counts.arm(arm);
                BinomialRow {
                    x: vec![1.0, arm.coded()],
                    trials: n.iter().sum(),
                    successes: n[..breakpoint].iter().sum(),
                }
            })
            .collect()
    } else {
        data.records()
            .iter()
            .map(|r| {
                let mut x = vec![1.0, r.arm.coded()];
                if adjust {
                    x.extend_from_slice(&r.covariates);
                }
                BinomialRow {
                    x,
                    trials: 1.0,
                    successes: if r.level < breakpoint { 1.0 } else { 0.0 },
                }
            })
            .collect()
    };
    if rows.len() < 2 {
        return Err(Error::InvalidData(
            "binary comparison needs both arms".into(),
        ));
    }

    let (beta, fisher, converged, iterations) = irls(&rows, dim)?;
    let mut ridged = fisher;
    for i in 0..dim {
        ridged[(i, i)] += IRLS_RIDGE;
    }
    let cov = Cholesky::new(ridged)
        .map(|c| c.inverse())
        .ok_or_else(|| Error::NonConvergence("information matrix not invertible".into()))?;
    let log_or = beta[1];
    let se = cov[(1, 1)].sqrt();
    Ok(BinaryFit {
        breakpoint,
        coefficients: beta.iter().copied().collect(),
        log_or,
        se,
        ci_lower: (log_or - Z_975 * se).exp(),
        ci_upper: (log_or + Z_975 * se).exp(),
        converged,
        iterations,
    })
}

/// Net benefit estimate: P(Y_t < Y_c) − P(Y_t > Y_c) over independent
/// cross-arm pairs (lower level = better, so positive favors treatment).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NetBenefitEstimate {
    pub estimate: f64,
    pub se: f64,
    pub ci_lower: f64,
    pub ci_upper: f64,
    pub n_control: f64,
    pub n_treatment: f64,
}

impl NetBenefitEstimate {
    pub fn significant(&self) -> bool {
        self.ci_lower > 0.0 || self.ci_upper < 0.0
    }
}

/// Empirical net benefit from K-level counts, O(K²), with the U-statistic
/// projection variance and a normal-approximation 95% interval.
pub fn net_benefit(data: &TrialDataset) -> Result<NetBenefitEstimate> {
    let levels = data.levels();
    let (nc, nt) = match data.counts() {
        Some(c) => (c.arm(Arm::Control).to_vec(), c.arm(Arm::Treatment).to_vec()),
        None => {
            let mut nc = vec![0.0; levels];
            let mut nt = vec![0.0; levels];
            for r in data.records() {
                match r.arm {
                    Arm::Control => nc[r.level] += 1.0,
                    Arm::Treatment => nt[r.level] += 1.0,
                }
            }
            (nc, nt)
        }
    };
    let n_c: f64 = nc.iter().sum();
    let n_t: f64 = nt.iter().sum();
    if n_c <= 0.0 || n_t <= 0.0 {
        return Err(Error::InvalidData(
            "net benefit needs observations in both arms".into(),
        ));
    }
    let pc: Vec<f64> = nc.iter().map(|&v| v / n_c).collect();
    let pt: Vec<f64> = nt.iter().map(|&v| v / n_t).collect();

    // Per-level projections: φ_t(i) = P̂(C > i) − P̂(C < i), and symmetrically
    // for control against the treatment distribution.
    let proj = |own_level: usize, other: &[f64]| -> f64 {
        let above: f64 = other[own_level + 1..].iter().sum();
        let below: f64 = other[..own_level].iter().sum();
        above - below
    };
    let phi_t: Vec<f64> = (0..levels).map(|i| proj(i, &pc)).collect();
    let phi_c: Vec<f64> = (0..levels).map(|j| -proj(j, &pt)).collect();
    let estimate: f64 = (0..levels).map(|i| pt[i] * phi_t[i]).sum();

    let weighted_var = |counts: &[f64], phi: &[f64], n: f64| -> f64 {
        if n <= 1.0 {
            return f64::NAN;
        }
        counts
            .iter()
            .zip(phi)
            .map(|(&w, &p)| w * (p - estimate).powi(2))
            .sum::<f64>()
            / (n - 1.0)
    };
    let var = weighted_var(&nt, &phi_t, n_t) / n_t + weighted_var(&nc, &phi_c, n_c) / n_c;
    let se = var.sqrt();
    Ok(NetBenefitEstimate {
        estimate,
        se,
        ci_lower: estimate - Z_975 * se,
        ci_upper: estimate + Z_975 * se,
        n_control: n_c,
        n_treatment: n_t,
    })
}

/// Population net benefit of a treatment distribution against a control
/// distribution.
pub fn population_net_benefit(control: &OutcomeDist, treatment: &OutcomeDist) -> Result<f64> {
    if control.levels() != treatment.levels() {
        return Err(Error::DimensionMismatch {
            expected: control.levels(),
            got: treatment.levels(),
        });
    }
    let (pc, pt) = (control.probs(), treatment.probs());
    let mut nb = 0.0;
    for (i, &t) in pt.iter().enumerate() {
        for (j, &c) in pc.iter().enumerate() {
            if i < j {
                nb += t * c;
            } else if i > j {
                nb -= t * c;
            }
        }
    }
    Ok(nb)
}
