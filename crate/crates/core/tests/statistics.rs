use mlpath::mc;
use mlpath::measure::{DiscretePath, GaussianMeasureSpec, TimeGrid};
use mlpath::tilt::Sde;
use mlpath::zoo::{self, DriftPreset};
use statrs::distribution::{ContinuousCDF, Normal};

#[test]
fn wiener_samples_have_covariance_eps_squared_min() {
    let eps = 0.7;
    let grid = TimeGrid::new(1.0, 4).unwrap();
    let spec = GaussianMeasureSpec::wiener(grid, eps).unwrap();
    let samples = spec.sample(20240607, 100_000).unwrap();
    let n = samples.len() as f64;
    for i in 1..=4 {
        for j in i..=4 {
            let products: Vec<f64> = samples.iter().map(|s| s.values()[i] * s.values()[j]).collect();
            let mean = products.iter().sum::<f64>() / n;
            let var = products.iter().map(|p| (p - mean).powi(2)).sum::<f64>() / (n - 1.0);
            let se = (var / n).sqrt();
            let exact = eps * eps * grid.node(i).min(grid.node(j));
            assert!((mean - exact).abs() <= 3.0 * se, "cov({i},{j}) = {mean} vs {exact} (se {se})");
        }
    }
}

// X ~ N(0, 1) on a one-interval grid; balls of radius δ around 1 and 0.
// 1000 independent trials: a 50-trial block is too noisy to separate a
// miscalibrated interval from an unlucky block.
#[test]
fn scalar_ratio_intervals_are_calibrated() {
    let grid = TimeGrid::new(1.0, 1).unwrap();
    let sde = Sde::from_origin(zoo::preset_drift(DriftPreset::Zero).unwrap());
    let z1 = DiscretePath::new(grid, vec![0.0, 1.0]).unwrap();
    let z2 = DiscretePath::zeros(grid);
    let delta = 0.5;
    let phi = Normal::standard();
    let oracle = (phi.cdf(1.0 + delta) - phi.cdf(1.0 - delta)) / (phi.cdf(delta) - phi.cdf(-delta));
    let trials = 1000;
    let covered = (0..trials)
        .filter(|&seed| {
            let ensemble = mc::simulate(&sde, 1.0, grid, 20_000, 1000 + seed).unwrap();
            let r = mc::small_ball_ratio(&ensemble, &z1, &z2, delta).unwrap();
            assert!(!r.below_floor);
            r.ci_low.unwrap() <= oracle && oracle <= r.ci_high.unwrap()
        })
        .count();
    let rate = covered as f64 / trials as f64;
    let binomial_se = (0.95 * 0.05 / trials as f64).sqrt();
    assert!(rate >= 0.9, "coverage {covered}/{trials}");
    assert!((rate - 0.95).abs() <= 3.0 * binomial_se, "coverage {covered}/{trials} is not nominal");
}
