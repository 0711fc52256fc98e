//! Seed-derivation helpers.
//!
//! Everything stochastic in this crate runs on `ChaCha8`, a counter-based
//! generator with 2^64 independent streams. Chains, replicates, and
//! bootstrap draws each get their own stream, so results are reproducible
//! regardless of worker count or schedule.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1, Gamma};

/// Generator name recorded in output metadata.
pub const GENERATOR: &str = "chacha8-stream";

/// RNG for a (seed, stream) pair. Streams are cheap and independent.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Stateless mix of a seed with an index (SplitMix64 finalizer). Used to
/// derive per-replicate seeds that do not collide across streams.
pub fn mix_seed(seed: u64, index: u64) -> u64 {
    let mut z = seed ^ index.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// One draw from a symmetric Dirichlet(conc, …, conc) over `k` cells.
pub fn dirichlet_symmetric<R: Rng + ?Sized>(rng: &mut R, k: usize, conc: f64) -> Vec<f64> {
    let gamma = Gamma::new(conc, 1.0).expect("concentration must be positive");
    let mut draws: Vec<f64> = (0..k).map(|_| gamma.sample(rng)).collect();
    let mut total: f64 = draws.iter().sum();
    // Gamma(conc) mass near zero can underflow for small conc; retry is
    // cheaper than clamping and keeps the simplex interior.
    while total <= 0.0 || !total.is_finite() {
        draws = (0..k).map(|_| gamma.sample(rng)).collect();
        total = draws.iter().sum();
    }
    draws.iter_mut().for_each(|d| *d /= total);
    draws
}

/// One draw of Bayesian-bootstrap weights: Dirichlet(1, …, 1) over `n`
/// observations, sampled as normalized standard exponentials.
pub fn bootstrap_weights<R: Rng + ?Sized>(rng: &mut R, n: usize) -> Vec<f64> {
    let mut w: Vec<f64> = (0..n).map(|_| rng.sample::<f64, _>(Exp1)).collect();
    let total: f64 = w.iter().sum();
    w.iter_mut().for_each(|x| *x /= total);
    w
}
