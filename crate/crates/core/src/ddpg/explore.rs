use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

const MAX_REJECTIONS: usize = 10_000;

/// Normal(mean, sigma²) truncated to [lo, hi], by rejection.
pub fn truncated_normal<R: Rng + ?Sized>(mean: f64, sigma: f64, lo: f64, hi: f64, rng: &mut R) -> f64 {
    if sigma <= 0.0 {
        return mean.clamp(lo, hi);
    }
    for _ in 0..MAX_REJECTIONS {
        let z: f64 = StandardNormal.sample(rng);
        let x = mean + sigma * z;
        if (lo..=hi).contains(&x) {
            return x;
        }
    }
    mean.clamp(lo, hi)
}

/// Exploratory preserved ratio: truncated-normal on [0, 1] around the
/// actor's mean, clipped to [floor, 1].
pub fn explore_action<R: Rng + ?Sized>(mean: f64, sigma: f64, floor: f64, rng: &mut R) -> f64 {
    truncated_normal(mean, sigma, 0.0, 1.0, rng).clamp(floor, 1.0)
}
