#![allow(dead_code)]

use bifhunter_core::design::latin_hypercube;
use bifhunter_core::gp::{fit, FitOptions, NoiseSpec, TrainedSurrogate};
use bifhunter_core::systems::{observe, FnField, Interval, ObservationDataset};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Latin hypercube observations of `f` over `state_box x param`.
pub fn sample_field<F>(
    state_box: &[Interval],
    param: Interval,
    n: usize,
    sigma: f64,
    seed: u64,
    f: F,
) -> ObservationDataset
where
    F: Fn(&[f64], f64) -> Vec<f64> + Sync,
{
    let mut bounds = state_box.to_vec();
    bounds.push(param);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let field = FnField {
        f: |x: &[f64], p: f64| Ok(f(x, p)),
        dim: state_box.len(),
    };
    let mut data = ObservationDataset::new();
    for z in latin_hypercube(&bounds, n, &mut rng) {
        let d = z.len() - 1;
        data.push(observe(&field, &z[..d], z[d], sigma, &mut rng).unwrap())
            .unwrap();
    }
    data
}

pub fn fit_field<F>(
    state_box: &[Interval],
    param: Interval,
    n: usize,
    sigma: f64,
    seed: u64,
    f: F,
) -> TrainedSurrogate
where
    F: Fn(&[f64], f64) -> Vec<f64> + Sync,
{
    let data = sample_field(state_box, param, n, sigma, seed, f);
    let opts = FitOptions {
        noise: NoiseSpec::Known(sigma),
        seed,
        ..Default::default()
    };
    fit(&data, &opts).unwrap()
}

pub fn brusselator(x: &[f64], b: f64) -> Vec<f64> {
    let a = 1.5;
    vec![
        a + x[0] * x[0] * x[1] - (b + 1.0) * x[0],
        b * x[0] - x[0] * x[0] * x[1],
    ]
}

pub fn budworm(x: &[f64], r: f64) -> Vec<f64> {
    vec![r * x[0] * (1.0 - x[0] / 15.0) - x[0] * x[0] / (1.0 + x[0] * x[0])]
}

/// Parameter value on the budworm steady-state branch through `x`.
pub fn budworm_r(x: f64) -> f64 {
    x / ((1.0 + x * x) * (1.0 - x / 15.0))
}

pub fn iv(lo: f64, hi: f64) -> Interval {
    Interval::new(lo, hi)
}
