//! Central finite-difference check of analytic gradients.

use rand::seq::index::sample;
use rand::Rng;

/// Relative errors below this denominator are measured against it instead,
/// so coordinates with (near) zero gradient cannot divide by zero.
const DENOMINATOR_FLOOR: f64 = 1e-7;

/// Largest relative error between `analytic` and central differences of
/// `loss` over the coordinates in `indices`, each perturbed by ±`eps`.
pub fn grad_check(params: &[f64], analytic: &[f64], loss: impl Fn(&[f64]) -> f64, indices: &[usize], eps: f64) -> f64 {
    let mut probe = params.to_vec();
    let mut worst = 0.0f64;
    for &i in indices {
        let original = probe[i];
        probe[i] = original + eps;
        let up = loss(&probe);
        probe[i] = original - eps;
        let down = loss(&probe);
        probe[i] = original;
        let numeric = (up - down) / (2.0 * eps);
        let denom = analytic[i].abs().max(numeric.abs()).max(DENOMINATOR_FLOOR);
        worst = worst.max((analytic[i] - numeric).abs() / denom);
    }
    worst
}

/// Up to `count` distinct indices from `start..start + len`, ascending.
pub fn sample_indices<R: Rng + ?Sized>(rng: &mut R, start: usize, len: usize, count: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = sample(rng, len, count.min(len))
        .into_iter()
        .map(|i| start + i)
        .collect();
    idx.sort_unstable();
    idx
}
