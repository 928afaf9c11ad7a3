//! Space-filling initial designs over a box.

use rand::seq::SliceRandom;
use rand::Rng;

use crate::systems::Interval;

/// Latin hypercube sample of `n` points: each axis is cut into `n` equal
/// strata and every stratum is hit exactly once, at a uniform offset.
pub fn latin_hypercube<R: Rng + ?Sized>(
    bounds: &[Interval],
    n: usize,
    rng: &mut R,
) -> Vec<Vec<f64>> {
    let mut points = vec![vec![0.0; bounds.len()]; n];
    for (d, b) in bounds.iter().enumerate() {
        let mut strata: Vec<usize> = (0..n).collect();
        strata.shuffle(rng);
        for (i, s) in strata.into_iter().enumerate() {
            let u: f64 = rng.random();
            points[i][d] = b.lo + b.width() * (s as f64 + u) / n as f64;
        }
    }
    points
}

pub fn uniform_random<R: Rng + ?Sized>(
    bounds: &[Interval],
    n: usize,
    rng: &mut R,
) -> Vec<Vec<f64>> {
    (0..n)
        .map(|_| {
            bounds
                .iter()
                .map(|b| b.lo + b.width() * rng.random::<f64>())
                .collect()
        })
        .collect()
}
