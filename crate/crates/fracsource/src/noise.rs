//! Seeded additive Gaussian noise.

use fracsource_core::FluxTrace;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

/// Add `N(0, (level * max|flux_l|)^2)` noise to each trace, sensor 1 first.
///
/// The generator is seeded once, so the result depends only on the traces,
/// `level` and `seed`.
pub fn add_noise(traces: &[FluxTrace; 2], level: f64, seed: u64) -> [FluxTrace; 2] {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = traces.clone();
    if level <= 0.0 {
        return out;
    }
    for trace in &mut out {
        let peak = trace.values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let sigma = level * peak;
        if sigma == 0.0 {
            continue;
        }
        let normal = Normal::new(0.0, sigma).expect("finite positive deviation");
        for v in &mut trace.values {
            *v += normal.sample(&mut rng);
        }
    }
    out
}
