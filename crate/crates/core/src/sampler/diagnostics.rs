//! Convergence and mixing diagnostics: split-R̂ and multi-chain effective
//! sample size with initial-monotone-sequence truncation of the
//! autocorrelation sum.

/// Sample mean and variance (denominator n−1).
pub(crate) fn mean_and_var(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = if xs.len() < 2 {
        f64::NAN
    } else {
        xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)
    };
    (mean, var)
}

/// Split every chain in half (dropping a middle element when odd), then
/// trim all half-sequences to a common length.
fn split_halves(chains: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let mut seqs = Vec::with_capacity(2 * chains.len());
    for c in chains {
        let half = c.len() / 2;
        seqs.push(c[..half].to_vec());
        seqs.push(c[c.len() - half..].to_vec());
    }
    let n = seqs.iter().map(Vec::len).min().unwrap_or(0);
    for s in &mut seqs {
        s.truncate(n);
    }
    seqs
}

struct PooledVariance {
    seqs: Vec<Vec<f64>>,
    n: usize,
    w: f64,
    var_plus: f64,
}

fn pooled_variance(chains: &[Vec<f64>]) -> Option<PooledVariance> {
    let seqs = split_halves(chains);
    let n = seqs.first()?.len();
    if n < 4 {
        return None;
    }
    let stats: Vec<(f64, f64)> = seqs.iter().map(|s| mean_and_var(s)).collect();
    let w = stats.iter().map(|s| s.1).sum::<f64>() / stats.len() as f64;
    let means: Vec<f64> = stats.iter().map(|s| s.0).collect();
    let (_, var_means) = mean_and_var(&means);
    let var_plus = (n as f64 - 1.0) / n as f64 * w + var_means;
    // w must be strictly positive (NaN fails too: a degenerate chain has no
    // usable within-sequence variance).
    if w.is_nan() || w <= 0.0 || !var_plus.is_finite() {
        return None;
    }
    Some(PooledVariance {
        seqs,
        n,
        w,
        var_plus,
    })
}

/// Split-chain potential scale reduction factor. NaN when the pooled
/// within-sequence variance degenerates (e.g. a constant chain) or the
/// sequences are too short.
pub fn split_rhat(chains: &[Vec<f64>]) -> f64 {
    match pooled_variance(chains) {
        Some(p) => (p.var_plus / p.w).sqrt(),
        None => f64::NAN,
    }
}

/// Autocovariance at one lag, denominator n (biased, as the spectral
/// estimate wants).
fn autocov(xs: &[f64], mean: f64, lag: usize) -> f64 {
    let n = xs.len();
    (0..n - lag)
        .map(|i| (xs[i] - mean) * (xs[i + lag] - mean))
        .sum::<f64>()
        / n as f64
}

/// Multi-chain effective sample size of the pooled posterior draws.
///
/// Combined lag-t autocorrelations ρ̂_t = 1 − (W − mean_c γ̂_{c,t}) / var⁺
/// are summed in consecutive pairs; the sum stops at the first non-positive
/// pair and the pair sequence is forced non-increasing before summing
/// (initial monotone sequence estimator). NaN on degenerate input.
pub fn ess(chains: &[Vec<f64>]) -> f64 {
    let Some(p) = pooled_variance(chains) else {
        return f64::NAN;
    };
    let (c, n) = (p.seqs.len(), p.n);
    let means: Vec<f64> = p.seqs.iter().map(|s| mean_and_var(s).0).collect();
    let bias = n as f64 / (n as f64 - 1.0);
    let rho = |lag: usize| -> f64 {
        let mean_acov = p
            .seqs
            .iter()
            .zip(&means)
            .map(|(s, &m)| autocov(s, m, lag) * bias)
            .sum::<f64>()
            / c as f64;
        1.0 - (p.w - mean_acov) / p.var_plus
    };

    let mut pair_sum = 0.0;
    let mut prev_pair = f64::INFINITY;
    let mut lag = 0;
    while lag + 1 < n {
        let pair = if lag == 0 {
            1.0 + rho(1)
        } else {
            rho(lag) + rho(lag + 1)
        };
        if pair <= 0.0 {
            break;
        }
        let pair = pair.min(prev_pair);
        pair_sum += pair;
        prev_pair = pair;
        lag += 2;
    }
    let tau = (2.0 * pair_sum - 1.0).max(f64::MIN_POSITIVE);
    let total = (c * n) as f64;
    (total / tau).min(total * total.log10().max(1.0))
}
