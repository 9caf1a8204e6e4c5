//! The analytic backend checked against quantities computed without it:
//! finite differences of the closed-form log density and a Monte-Carlo
//! least-squares fit of the optimal affine denoiser.

use gas_core::backend::perturb_with_alpha_bar;
use gas_core::{
    analytic_noise, Condition, DiffusionSchedule, GaussianBackendSpec, LatentGrid, LatentShape,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// log N(x; m, v I), written out independently of the predictor.
fn log_density(x: &[f64], m: &[f64], v: f64) -> f64 {
    let d = x.len() as f64;
    let sq: f64 = x.iter().zip(m).map(|(a, b)| (a - b) * (a - b)).sum();
    -0.5 * sq / v - 0.5 * d * (2.0 * std::f64::consts::PI * v).ln()
}

#[test]
fn predictor_matches_finite_difference_score() {
    let shape = LatentShape::new(2, 3, 3);
    let sched = DiffusionSchedule::default();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mu = LatentGrid::from_fn(shape, |_| rng.random_range(-1.5..1.5));
    let variance = 0.7;
    let spec = GaussianBackendSpec::new(variance, LatentGrid::zeros(shape))
        .unwrap()
        .with_mean("c", mu.clone())
        .unwrap();
    let cond = Condition::phrase("c");
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let t = rng.random_range(0..sched.num_timesteps());
        let z_t = LatentGrid::from_fn(shape, |_| rng.random_range(-3.0..3.0));
        let a = sched.alpha_bar(t).unwrap();
        let v = a * variance + 1.0 - a;
        let m: Vec<f64> = mu.to_vec().iter().map(|x| a.sqrt() * x).collect();
        let pred = analytic_noise(&spec, &z_t, t, &cond, &sched)
            .unwrap()
            .to_vec();
        let x = z_t.to_vec();
        for i in 0..x.len() {
            let mut hi = x.clone();
            let mut lo = x.clone();
            hi[i] += h;
            lo[i] -= h;
            let fd = (log_density(&hi, &m, v) - log_density(&lo, &m, v)) / (2.0 * h);
            let score = -pred[i] / (1.0 - a).sqrt();
            worst = worst.max((score - fd).abs());
        }
    }
    assert!(worst < 1e-4, "max score error {worst:e}");
}

#[test]
fn predictor_is_the_optimal_affine_denoiser() {
    // Fit eps ~ a z_t + b by least squares over 10,000 draws and compare with
    // the closed-form coefficients; also compare the achieved mean squared error.
    let mu = 0.8;
    let variance = 1.5;
    let alpha_bar: f64 = 0.4;
    let shape = LatentShape::new(1, 1, 1);
    let sched = DiffusionSchedule::from_alpha_bar(vec![alpha_bar, 0.1]).unwrap();
    let spec = GaussianBackendSpec::new(variance, LatentGrid::zeros(shape))
        .unwrap()
        .with_mean("c", LatentGrid::filled(shape, mu))
        .unwrap();
    let cond = Condition::phrase("c");
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let n = 10_000;
    let mut zs = Vec::with_capacity(n);
    let mut es = Vec::with_capacity(n);
    let mut preds = Vec::with_capacity(n);
    for _ in 0..n {
        let z0: f64 = mu + variance.sqrt() * rng.sample::<f64, _>(StandardNormal);
        let e: f64 = rng.sample(StandardNormal);
        let z_t = perturb_with_alpha_bar(
            &LatentGrid::filled(shape, z0),
            &LatentGrid::filled(shape, e),
            alpha_bar,
        )
        .unwrap();
        preds.push(
            analytic_noise(&spec, &z_t, 0, &cond, &sched)
                .unwrap()
                .get(0, 0, 0),
        );
        zs.push(z_t.get(0, 0, 0));
        es.push(e);
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let (mz, me) = (mean(&zs), mean(&es));
    let cov: f64 = zs
        .iter()
        .zip(&es)
        .map(|(z, e)| (z - mz) * (e - me))
        .sum::<f64>();
    let var: f64 = zs.iter().map(|z| (z - mz) * (z - mz)).sum::<f64>();
    let a_fit = cov / var;
    let b_fit = me - a_fit * mz;

    let v = alpha_bar * variance + 1.0 - alpha_bar;
    let a_true = (1.0 - alpha_bar).sqrt() / v;
    let b_true = -a_true * alpha_bar.sqrt() * mu;
    // Standard error of the slope is about sqrt(resid_var / (n var_z)) ~ 0.006.
    assert!((a_fit - a_true).abs() < 0.03, "slope {a_fit} vs {a_true}");
    assert!(
        (b_fit - b_true).abs() < 0.05,
        "intercept {b_fit} vs {b_true}"
    );

    let mse =
        |f: &dyn Fn(usize) -> f64| (0..n).map(|i| (f(i) - es[i]).powi(2)).sum::<f64>() / n as f64;
    let mse_analytic = mse(&|i| preds[i]);
    let mse_fit = mse(&|i| a_fit * zs[i] + b_fit);
    assert!(mse_analytic >= mse_fit - 1e-12);
    assert!(mse_analytic - mse_fit < 2e-3, "{mse_analytic} vs {mse_fit}");
    // Any other member of the family does worse.
    let mse_off = mse(&|i| 1.1 * a_true * zs[i] + b_true);
    assert!(mse_off > mse_analytic);
}

#[test]
fn perturb_then_predict_round_trips_noise() {
    let shape = LatentShape::new(3, 4, 4);
    let sched = DiffusionSchedule::default();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..20 {
        let mu = LatentGrid::from_fn(shape, |_| rng.random_range(-2.0..2.0));
        let eps = LatentGrid::from_fn(shape, |_| rng.sample(StandardNormal));
        let spec = GaussianBackendSpec::new(0.0, LatentGrid::zeros(shape))
            .unwrap()
            .with_mean("c", mu.clone())
            .unwrap();
        let t = rng.random_range(0..1000);
        let z_t = gas_core::perturb(&mu, t, &eps, &sched).unwrap();
        let out = analytic_noise(&spec, &z_t, t, &Condition::phrase("c"), &sched).unwrap();
        assert!(out.max_abs_diff(&eps) < 1e-10);
    }
}
