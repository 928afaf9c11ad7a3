use super::sample::{sample_realization, RealizationSampler};
use super::*;
use crate::systems::Observation;
use proptest::prelude::*;
use rand::Rng;

fn dataset<F: Fn(&[f64], f64) -> Vec<f64>>(points: &[(Vec<f64>, f64)], f: F) -> ObservationDataset {
    let mut d = ObservationDataset::new();
    for (x, p) in points {
        d.push(Observation {
            state: x.clone(),
            param: *p,
            value: f(x, *p),
            noise_sigma: 0.0,
        })
        .unwrap();
    }
    d
}

fn noiseless() -> FitOptions {
    FitOptions {
        noise: NoiseSpec::Known(0.0),
        ..Default::default()
    }
}

fn grid_2d(n: usize) -> Vec<(Vec<f64>, f64)> {
    let mut pts = Vec::new();
    for i in 0..n {
        for j in 0..n {
            let x = 0.5 + 2.0 * i as f64 / (n - 1) as f64;
            let y = 0.8 + 2.0 * ((j * 7 + i * 3) % n) as f64 / (n - 1) as f64;
            let p = 2.2 + 2.0 * ((i * 5 + j * 2) % n) as f64 / (n - 1) as f64;
            pts.push((vec![x, y], p));
        }
    }
    pts
}

fn smooth_field(x: &[f64], p: f64) -> Vec<f64> {
    vec![
        1.5 + x[0] * x[0] * x[1] - p * x[0] - x[0],
        p * x[0] - x[0] * x[0] * x[1] + 0.3 * (x[1] * p).sin(),
    ]
}

fn fitted_2d() -> TrainedSurrogate {
    let data = dataset(&grid_2d(6), smooth_field);
    let opts = FitOptions {
        noise: NoiseSpec::Known(1e-3),
        seed: 3,
        ..Default::default()
    };
    fit(&data, &opts).unwrap()
}

#[test]
fn two_points_are_interpolated() {
    let data = dataset(&[(vec![0.0], 1.0), (vec![1.0], 1.0)], |x, _| {
        vec![3.0 * x[0] - 1.0]
    });
    let gp = fit(&data, &noiseless()).unwrap();
    assert!((gp.predict_mean(&[0.0], 1.0).unwrap()[0] + 1.0).abs() < 1e-6);
    assert!((gp.predict_mean(&[1.0], 1.0).unwrap()[0] - 2.0).abs() < 1e-6);
}

#[test]
fn constant_targets_give_constant_mean() {
    let pts: Vec<_> = (0..6)
        .map(|i| (vec![i as f64 * 0.3], 0.5 * i as f64))
        .collect();
    let data = dataset(&pts, |_, _| vec![4.2]);
    let gp = fit(&data, &noiseless()).unwrap();
    for k in 0..20 {
        let z = k as f64 * 0.17 - 0.5;
        assert!((gp.predict_mean(&[z], 1.3 * z).unwrap()[0] - 4.2).abs() < 1e-6);
        assert!(gp.predict_mean_jacobian(&[z], z).unwrap().amax() < 1e-8);
        assert!(gp.predict_mean_mixed_second(&[z], z).unwrap()[0].amax() < 1e-8);
    }
}

#[test]
fn training_points_reproduced_with_small_variance() {
    let pts = grid_2d(5);
    let data = dataset(&pts, smooth_field);
    let gp = fit(&data, &noiseless()).unwrap();
    for (x, p) in &pts {
        let pd = gp.predict(x, *p).unwrap();
        let f = smooth_field(x, *p);
        for (c, fc) in f.iter().enumerate() {
            assert!((pd.mean[c] - fc).abs() < 1e-6, "{} vs {fc}", pd.mean[c]);
            assert!(pd.cov[(c, c)] < 1e-8);
        }
    }
}

#[test]
fn variance_recovers_prior_far_away() {
    let gp = fitted_2d();
    let far = gp.predict(&[500.0, -500.0], 900.0).unwrap();
    for c in 0..2 {
        assert!(far.cov[(c, c)] >= 0.99 * gp.signal_variance(c));
    }
}

#[test]
fn batched_prediction_matches_single() {
    let gp = fitted_2d();
    let pts = vec![(vec![1.0, 2.0], 3.0), (vec![1.7, 1.1], 2.5)];
    let batch = gp.predict_batch(&pts).unwrap();
    for (b, (x, p)) in batch.iter().zip(&pts) {
        assert_eq!(*b, gp.predict(x, *p).unwrap());
    }
}

#[test]
fn cholesky_factor_reconstructs_training_covariance() {
    let gp = fitted_2d();
    for c in 0..2 {
        let l = gp.cholesky_factor(c);
        let k = gp.training_covariance(c);
        let rel = (l * l.transpose() - &k).norm() / k.norm();
        assert!(rel < 1e-8, "relative error {rel}");
    }
}

#[test]
fn likelihood_never_below_any_start() {
    let gp = fitted_2d();
    for r in gp.fit_reports() {
        assert_eq!(r.starts.len(), 5);
        for s in &r.starts {
            assert!(r.lml >= s.initial_lml);
            assert!(s.final_lml >= s.initial_lml - 1e-9);
        }
    }
}

#[test]
fn fit_is_seed_deterministic() {
    let a = fitted_2d();
    let b = fitted_2d();
    assert_eq!(a.hyperparams(), b.hyperparams());
}

#[test]
fn conflicting_duplicates_are_degenerate() {
    let mut data = dataset(&[(vec![0.0], 0.0), (vec![1.0], 0.0)], |x, _| vec![x[0]]);
    data.push(Observation {
        state: vec![0.0],
        param: 0.0,
        value: vec![5.0],
        noise_sigma: 0.0,
    })
    .unwrap();
    assert!(matches!(
        fit(&data, &noiseless()),
        Err(Error::DegenerateDataset(_))
    ));
    let one = dataset(&[(vec![0.0], 0.0)], |x, _| vec![x[0]]);
    assert!(fit(&one, &noiseless()).is_err());
}

#[test]
fn linear_slope_is_learned() {
    let pts: Vec<_> = (0..25).map(|i| (vec![i as f64 / 24.0], 0.0)).collect();
    let data = dataset(&pts, |x, _| vec![x[0]]);
    let opts = FitOptions {
        noise: NoiseSpec::Known(1e-4),
        ..Default::default()
    };
    let gp = fit(&data, &opts).unwrap();
    for x in [0.2, 0.4, 0.6, 0.8] {
        let j = gp.predict_mean_jacobian(&[x], 0.0).unwrap();
        assert!((j[(0, 0)] - 1.0).abs() < 0.05);
    }
}

#[test]
fn std_gradient_vanishes_midway_between_symmetric_points() {
    let data = dataset(&[(vec![0.0], 0.0), (vec![1.0], 0.0)], |_, _| vec![1.0]);
    let h = KernelHyperparams {
        signal_variance: 1.0,
        lengthscales: vec![0.3, 1.0],
        noise_variance: 0.0,
    };
    let gp = TrainedSurrogate::with_hyperparams(&data, vec![h]).unwrap();
    let g = gp.predict_std_gradient(&[0.5], 0.0).unwrap();
    assert!(g.grad[(0, 0)].abs() < 1e-6);
    assert!(!g.floored[0]);
}

#[test]
fn zero_uncertainty_floors_std_gradient() {
    let gp = fitted_2d().with_uncertainty_scale(0.0);
    let g = gp.predict_std_gradient(&[1.0, 2.0], 3.0).unwrap();
    assert!(g.floored.iter().all(|f| *f));
    assert_eq!(g.grad.amax(), 0.0);
}

#[test]
fn posterior_contracts_at_new_noiseless_point() {
    let pts = grid_2d(4);
    let mut data = dataset(&pts, smooth_field);
    let q = (vec![1.33, 1.91], 3.07);
    let h = fit(&data, &noiseless()).unwrap().hyperparams();
    data.push(Observation {
        state: q.0.clone(),
        param: q.1,
        value: smooth_field(&q.0, q.1),
        noise_sigma: 0.0,
    })
    .unwrap();
    let gp = TrainedSurrogate::with_hyperparams(&data, h).unwrap();
    let pd = gp.predict(&q.0, q.1).unwrap();
    assert!(pd.cov[(0, 0)] < 1e-8 && pd.cov[(1, 1)] < 1e-8);
}

#[test]
fn dump_and_load_reproduce_predictions() {
    let gp = fitted_2d();
    let back = TrainedSurrogate::from_json(&gp.to_json().unwrap()).unwrap();
    let a = gp.predict(&[1.2, 2.2], 3.1).unwrap();
    let b = back.predict(&[1.2, 2.2], 3.1).unwrap();
    assert!((a.mean - b.mean).amax() < 1e-12);
    assert!((a.cov - b.cov).amax() < 1e-12);
}

#[test]
fn single_point_draws_match_predictive_moments() {
    let gp = fitted_2d();
    let z = vec![1.05, 1.5, 2.9];
    let pd = gp.predict(&z[..2], z[2]).unwrap();
    let sampler = RealizationSampler::new(&gp, std::slice::from_ref(&z)).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let n = 100_000;
    let mut s1 = [0.0; 2];
    let mut s2 = [0.0; 2];
    for _ in 0..n {
        let d = sampler.draw(&mut rng);
        for c in 0..2 {
            s1[c] += d[(0, c)];
            s2[c] += d[(0, c)] * d[(0, c)];
        }
    }
    for c in 0..2 {
        let m = s1[c] / n as f64;
        let v = s2[c] / n as f64 - m * m;
        let var = pd.cov[(c, c)];
        assert!((m - pd.mean[c]).abs() < 3.0 * (var / n as f64).sqrt());
        // Var of the sample variance is 2 var^2 / n for a Gaussian.
        assert!((v - var).abs() < 3.0 * var * (2.0 / n as f64).sqrt());
    }
}

#[test]
fn coincident_points_draw_equal_values() {
    let gp = fitted_2d();
    let a = vec![1.05, 1.5, 2.9];
    let b = vec![1.05 + 1e-12, 1.5, 2.9];
    for seed in 0..20 {
        let d = sample_realization(&gp, &[a.clone(), b.clone()], seed).unwrap();
        for c in 0..2 {
            assert!((d[(0, c)] - d[(1, c)]).abs() < 1e-4);
        }
    }
    let d1 = sample_realization(&gp, &[a.clone(), b.clone()], 5).unwrap();
    let d2 = sample_realization(&gp, &[a, b], 5).unwrap();
    assert_eq!(d1, d2);
}

fn random_model(seed: u64) -> TrainedSurrogate {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_state = 1 + (seed % 2) as usize;
    let pts: Vec<(Vec<f64>, f64)> = (0..12)
        .map(|_| {
            let x = (0..n_state)
                .map(|_| rng.random::<f64>() * 2.0 - 1.0)
                .collect();
            (x, rng.random::<f64>())
        })
        .collect();
    let coef: Vec<f64> = (0..6).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect();
    let data = dataset(&pts, |x, p| {
        (0..n_state)
            .map(|c| {
                (coef[c] * 3.0 * x[0]).sin()
                    + coef[2 + c] * p * x[x.len() - 1]
                    + coef[4] * x[c] * x[c]
            })
            .collect()
    });
    let hypers = (0..n_state)
        .map(|c| KernelHyperparams {
            signal_variance: 0.5 + rng.random::<f64>(),
            lengthscales: (0..=n_state)
                .map(|_| 0.2 + 0.6 * rng.random::<f64>())
                .collect(),
            noise_variance: if c == 0 { 1e-4 } else { 1e-2 },
        })
        .collect();
    TrainedSurrogate::with_hyperparams(&data, hypers).unwrap()
}

fn close(analytic: f64, fd: f64) -> bool {
    (analytic - fd).abs() <= f64::max(1e-5, 1e-3 * fd.abs())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn analytic_derivatives_match_differences(seed in 0u64..10_000, u in proptest::collection::vec(-1.0..1.0f64, 3)) {
        let gp = random_model(seed);
        let n = gp.state_dim();
        let mut z = u[..=n].to_vec();
        z[n] = 0.5 * (u[n] + 1.0);
        let e = gp.local(&z, Detail::Full);
        let h1 = 1e-5;
        let h2 = 1e-4;
        for a in 0..=n {
            let mut zp = z.clone();
            let mut zm = z.clone();
            zp[a] += h1;
            zm[a] -= h1;
            let ep = gp.local(&zp, Detail::Full);
            let em = gp.local(&zm, Detail::Full);
            for c in 0..n {
                let fd = (ep.mean[c] - em.mean[c]) / (2.0 * h1);
                prop_assert!(close(e.jac[(c, a)], fd), "jac c={} a={} {} vs {}", c, a, e.jac[(c, a)], fd);
                let fd = (ep.std[c] - em.std[c]) / (2.0 * h1);
                prop_assert!(close(e.std_grad[(c, a)], fd), "std c={} a={} {} vs {}", c, a, e.std_grad[(c, a)], fd);
            }
            for b in 0..=n {
                let shifted = |da: f64, db: f64| {
                    let mut w = z.clone();
                    w[a] += da;
                    w[b] += db;
                    gp.local(&w, Detail::MeanJac).mean
                };
                let fd = (shifted(h2, h2) - shifted(h2, -h2) - shifted(-h2, h2) + shifted(-h2, -h2)) / (4.0 * h2 * h2);
                for c in 0..n {
                    prop_assert!(close(e.hess[c][(a, b)], fd[c]), "hess c={} a={} b={} {} vs {}", c, a, b, e.hess[c][(a, b)], fd[c]);
                    prop_assert!((e.hess[c][(a, b)] - e.hess[c][(b, a)]).abs() < 1e-10);
                }
            }
        }
    }

    #[test]
    fn predictive_variance_is_nonnegative(seed in 0u64..1000, u in proptest::collection::vec(-3.0..3.0f64, 3)) {
        let gp = random_model(seed);
        let n = gp.state_dim();
        let pd = gp.predict(&u[..n], u[n]).unwrap();
        for c in 0..n {
            prop_assert!(pd.cov[(c, c)] >= 0.0);
        }
    }
}
