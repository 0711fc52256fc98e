//! Hamiltonian Monte Carlo for the proportional-odds family: leapfrog
//! integration with a dual-averaged step size tuned during warmup and a
//! diagonal mass matrix estimated from the early warmup draws. Frozen
//! coordinates (single-arm data) carry zero momentum and zero gradient, so
//! they never move.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::{jittered_init, ChainOutput, SamplerConfig};
use crate::error::{Error, Result};
use crate::ppo::{log_posterior_with_grad, ModelConfig, PpoParams, TrialDataset};
use crate::rng::stream_rng;

const EPS_BOUNDS: (f64, f64) = (1e-6, 2.0);
const MAX_LEAPFROG_STEPS: usize = 64;
const DIVERGENCE_ENERGY: f64 = 1000.0;

struct State {
    q: Vec<f64>,
    lp: f64,
    grad: Vec<f64>,
}

fn kinetic(p: &[f64], inv_mass: &[f64]) -> f64 {
    0.5 * p.iter().zip(inv_mass).map(|(p, m)| p * p * m).sum::<f64>()
}

fn draw_momentum(rng: &mut ChaCha8Rng, inv_mass: &[f64]) -> Vec<f64> {
    inv_mass
        .iter()
        .map(|&m| {
            if m > 0.0 {
                rng.sample::<f64, _>(StandardNormal) / m.sqrt()
            } else {
                0.0
            }
        })
        .collect()
}

/// Run `steps` leapfrog steps. `None` marks a divergence: the trajectory
/// left the feasible region (−∞ posterior, no gradient).
fn leapfrog<F>(
    start: &State,
    p0: &[f64],
    eps: f64,
    steps: usize,
    inv_mass: &[f64],
    eval: &F,
) -> Result<Option<(State, Vec<f64>)>>
where
    F: Fn(&[f64]) -> Result<(f64, Option<Vec<f64>>)>,
{
    let mut q = start.q.clone();
    let mut grad = start.grad.clone();
    let mut lp = start.lp;
    let mut p = p0.to_vec();
    for _ in 0..steps {
        for (pi, gi) in p.iter_mut().zip(&grad) {
            *pi += 0.5 * eps * gi;
        }
        for ((qi, pi), mi) in q.iter_mut().zip(&p).zip(inv_mass) {
            *qi += eps * mi * pi;
        }
        let (v, g) = eval(&q)?;
        match g {
            Some(g) if v.is_finite() => {
                lp = v;
                grad = g;
            }
            _ => return Ok(None),
        }
        for (pi, gi) in p.iter_mut().zip(&grad) {
            *pi += 0.5 * eps * gi;
        }
    }
    Ok(Some((State { q, lp, grad }, p)))
}

/// Double/halve the step size until a single leapfrog step crosses 50%
/// acceptance, the usual starting point for dual averaging.
fn find_reasonable_eps<F>(
    state: &State,
    inv_mass: &[f64],
    rng: &mut ChaCha8Rng,
    eval: &F,
) -> Result<f64>
where
    F: Fn(&[f64]) -> Result<(f64, Option<Vec<f64>>)>,
{
    let p0 = draw_momentum(rng, inv_mass);
    let h0 = -state.lp + kinetic(&p0, inv_mass);
    let log_ratio = |eps: f64| -> Result<f64> {
        Ok(match leapfrog(state, &p0, eps, 1, inv_mass, eval)? {
            Some((s, p)) => h0 - (-s.lp + kinetic(&p, inv_mass)),
            None => f64::NEG_INFINITY,
        })
    };
    let mut eps = 0.1;
    let mut lr = log_ratio(eps)?;
    let mut tries = 0;
    while !lr.is_finite() && tries < 40 {
        eps *= 0.5;
        lr = log_ratio(eps)?;
        tries += 1;
    }
    if !lr.is_finite() {
        return Ok(1e-3);
    }
    let a: f64 = if lr > (0.5f64).ln() { 1.0 } else { -1.0 };
    tries = 0;
    while a * lr > -a * std::f64::consts::LN_2 && tries < 40 {
        eps *= 2.0f64.powf(a);
        if !(EPS_BOUNDS.0..=EPS_BOUNDS.1).contains(&eps) {
            break;
        }
        lr = log_ratio(eps)?;
        if !lr.is_finite() {
            eps *= 0.5;
            break;
        }
        tries += 1;
    }
    Ok(eps.clamp(EPS_BOUNDS.0, EPS_BOUNDS.1))
}

pub(crate) fn run_hmc_chain(
    cfg: &ModelConfig,
    data: &TrialDataset,
    scfg: &SamplerConfig,
    chain: usize,
    base_init: &[f64],
    free: &[bool],
) -> Result<ChainOutput> {
    let mut rng = stream_rng(scfg.seed, chain as u64);
    let q0 = jittered_init(cfg, data, base_init, free, &mut rng)?;
    let eval = |q: &[f64]| -> Result<(f64, Option<Vec<f64>>)> {
        let params = PpoParams::from_flat(cfg, q)?;
        let (v, g) = log_posterior_with_grad(cfg, &params, data)?;
        Ok((
            v,
            g.map(|mut g| {
                for (gi, &f) in g.iter_mut().zip(free) {
                    if !f {
                        *gi = 0.0;
                    }
                }
                g
            }),
        ))
    };

    let (lp0, g0) = eval(&q0)?;
    let grad0 = g0.ok_or_else(|| Error::Sampler("infeasible starting point".into()))?;
    let mut state = State {
        q: q0,
        lp: lp0,
        grad: grad0,
    };
    let dim = state.q.len();
    let mut inv_mass: Vec<f64> = free.iter().map(|&f| if f { 1.0 } else { 0.0 }).collect();
    let mut eps = find_reasonable_eps(&state, &inv_mass, &mut rng, &eval)?;

    // Dual-averaging state (Nesterov averaging toward the target rate).
    let (t0, da_gamma, kappa) = (10.0, 0.05, 0.75);
    let mut mu = (10.0 * eps).ln();
    let mut hbar = 0.0;
    let mut log_eps_bar: f64 = 0.0;
    let mut da_m = 0usize;

    // Window of warmup iterations used to estimate the diagonal mass.
    let mass_lo = scfg.warmup / 4;
    let mass_hi = scfg.warmup / 2;
    let mut msum = vec![0.0; dim];
    let mut msq = vec![0.0; dim];
    let mut mcount = 0usize;

    let total = scfg.warmup + scfg.draws_per_chain;
    let mut draws = Vec::with_capacity(scfg.draws_per_chain);
    let (mut accepted, mut proposed) = (0u64, 0u64);
    for iter in 0..total {
        let adapting = iter < scfg.warmup;
        if iter == scfg.warmup && da_m > 0 {
            eps = log_eps_bar.exp().clamp(EPS_BOUNDS.0, EPS_BOUNDS.1);
        }
        let p0 = draw_momentum(&mut rng, &inv_mass);
        let h0 = -state.lp + kinetic(&p0, &inv_mass);
        let base_steps = (1.0 / eps).round().clamp(1.0, MAX_LEAPFROG_STEPS as f64) as usize;
        let steps = rng.random_range(base_steps.div_ceil(2)..=base_steps);
        let traj = leapfrog(&state, &p0, eps, steps, &inv_mass, &eval)?;
        let alpha = match &traj {
            Some((s, p)) => {
                let dh = h0 - (-s.lp + kinetic(p, &inv_mass));
                if dh.is_nan() || dh < -DIVERGENCE_ENERGY {
                    0.0
                } else {
                    dh.exp().min(1.0)
                }
            }
            None => 0.0,
        };
        let accept = rng.random::<f64>() < alpha;
        if accept {
            if let Some((s, _)) = traj {
                state = s;
            }
        }
        if adapting {
            da_m += 1;
            let frac = 1.0 / (da_m as f64 + t0);
            hbar = (1.0 - frac) * hbar + frac * (scfg.target_accept - alpha);
            let log_eps = mu - (da_m as f64).sqrt() / da_gamma * hbar;
            let w = (da_m as f64).powf(-kappa);
            log_eps_bar = w * log_eps + (1.0 - w) * log_eps_bar;
            eps = log_eps.exp().clamp(EPS_BOUNDS.0, EPS_BOUNDS.1);

            if iter >= mass_lo && iter < mass_hi {
                for i in 0..dim {
                    msum[i] += state.q[i];
                    msq[i] += state.q[i] * state.q[i];
                }
                mcount += 1;
            }
            if iter + 1 == mass_hi && mcount >= 50 {
                let n = mcount as f64;
                for i in 0..dim {
                    if free[i] {
                        let var = (msq[i] / n - (msum[i] / n).powi(2)).max(1e-6);
                        inv_mass[i] = var;
                    }
                }
                eps = find_reasonable_eps(&state, &inv_mass, &mut rng, &eval)?;
                mu = (10.0 * eps).ln();
                hbar = 0.0;
                log_eps_bar = 0.0;
                da_m = 0;
            }
        } else {
            proposed += 1;
            if accept {
                accepted += 1;
            }
        }
        if !adapting {
            draws.push(state.q.clone());
        }
    }
    Ok(ChainOutput {
        draws,
        accepted,
        proposed,
    })
}
