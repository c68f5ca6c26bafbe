use mlpath::measure::{DiscretePath, GaussianMeasureSpec, TimeGrid, WeightedSequence};
use mlpath::tilt::{self, Functional, Sde, SdeAction, TiltedMeasure};
use mlpath::zoo::{self, AlgebraicSystem, DriftPreset, PathDependentModel, ScalarMap};
use proptest::prelude::*;
use proptest::strategy::ValueTree;

const PRESETS: [DriftPreset; 4] =
    [DriftPreset::Zero, DriftPreset::Ou { theta: 1.0 }, DriftPreset::Ou { theta: -0.7 }, DriftPreset::DoubleWell];

/// `start + slope·t + Σ c_k sin(kπt/T)`: smooth, starts at `start`.
fn smooth_path(grid: TimeGrid, start: f64, slope: f64, modes: &[f64]) -> DiscretePath {
    let t_max = grid.horizon();
    DiscretePath::from_fn(grid, |t| {
        start
            + slope * t
            + modes
                .iter()
                .enumerate()
                .map(|(k, c)| c * ((k + 1) as f64 * std::f64::consts::PI * t / t_max).sin())
                .sum::<f64>()
    })
    .unwrap()
}

fn modes() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-1.0..1.0f64, 4)
}

fn relative(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-300)
}

fn sde(preset: DriftPreset) -> Sde {
    Sde::from_origin(zoo::preset_drift(preset).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn wiener_norm_is_a_quadratic_form(
        a in modes(), b in modes(), sa in -2.0..2.0f64, sb in -2.0..2.0f64, alpha in -3.0..3.0f64,
    ) {
        let grid = TimeGrid::new(1.5, 64).unwrap();
        let spec = GaussianMeasureSpec::wiener(grid, 1.0).unwrap();
        let x = smooth_path(grid, 0.0, sa, &a);
        let y = smooth_path(grid, 0.0, sb, &b);
        let nx = spec.cm_norm_sq(&x).unwrap();
        prop_assert!(nx >= 0.0);
        let scaled = spec.cm_norm_sq(&x.scaled(alpha).unwrap()).unwrap();
        prop_assert!((scaled - alpha * alpha * nx).abs() <= 1e-12 * nx.max(1.0));
        let sum = spec.cm_norm_sq(&x.add(&y).unwrap()).unwrap();
        let diff = spec.cm_norm_sq(&x.sub(&y).unwrap()).unwrap();
        let rhs = 2.0 * nx + 2.0 * spec.cm_norm_sq(&y).unwrap();
        prop_assert!(relative(sum + diff, rhs) <= 1e-10);
    }

    #[test]
    fn diagonal_norm_is_a_quadratic_form(
        x in prop::collection::vec(-5.0..5.0f64, 12),
        y in prop::collection::vec(-5.0..5.0f64, 12),
        alpha in -3.0..3.0f64,
    ) {
        let weights = AlgebraicSystem::harmonic_weights(12);
        let spec = GaussianMeasureSpec::diagonal(weights.clone(), 1.0).unwrap();
        let norm = |v: &[f64]| spec.cm_norm_sq(&WeightedSequence::new(weights.clone(), v.to_vec()).unwrap()).unwrap();
        let nx = norm(&x);
        prop_assert!(nx >= 0.0);
        let ax: Vec<f64> = x.iter().map(|v| alpha * v).collect();
        prop_assert!((norm(&ax) - alpha * alpha * nx).abs() <= 1e-12 * nx.max(1.0));
        let s: Vec<f64> = x.iter().zip(&y).map(|(a, b)| a + b).collect();
        let d: Vec<f64> = x.iter().zip(&y).map(|(a, b)| a - b).collect();
        prop_assert!(relative(norm(&s) + norm(&d), 2.0 * nx + 2.0 * norm(&y)) <= 1e-10);
    }

    #[test]
    fn only_the_zero_element_has_zero_norm(i in 1usize..33, v in -1.0..1.0f64) {
        prop_assume!(v != 0.0);
        let grid = TimeGrid::new(1.0, 32).unwrap();
        let spec = GaussianMeasureSpec::wiener(grid, 1.0).unwrap();
        prop_assert_eq!(spec.cm_norm_sq(&DiscretePath::zeros(grid)).unwrap(), 0.0);
        let mut values = vec![0.0; 33];
        values[i] = v;
        prop_assert!(spec.cm_norm_sq(&DiscretePath::new(grid, values).unwrap()).unwrap() > 0.0);
    }

    #[test]
    fn om_fw_gap_is_exactly_the_correction(m in modes(), slope in -2.0..2.0f64, p in 0usize..4, eps in 0.01..2.0f64) {
        let sde = sde(PRESETS[p]);
        let z = smooth_path(TimeGrid::new(2.0, 200).unwrap(), 0.0, slope, &m);
        let om = tilt::om_sde(&sde, &z, eps).unwrap().value;
        let residual = eps * eps * om - tilt::fw_sde(&sde, &z).value - eps * eps * tilt::om_correction(&sde, &z);
        prop_assert!(residual.abs() <= 1e-10, "residual {residual}");
    }

    #[test]
    fn two_derivations_of_the_om_function_agree(m in modes(), slope in -2.0..2.0f64, p in 0usize..4, eps in 0.05..2.0f64) {
        let grid = TimeGrid::new(1.0, 100).unwrap();
        let sde = sde(PRESETS[p]);
        let z = smooth_path(grid, 0.0, slope, &m);
        let spec = GaussianMeasureSpec::wiener(grid, 1.0).unwrap();
        let via_tilt = tilt::om_tilted(&spec, &sde.expansion(&grid), &z, eps).unwrap().value;
        let direct = tilt::om_sde(&sde, &z, eps).unwrap().value;
        prop_assert!(relative(via_tilt, direct) <= 1e-8, "{via_tilt} vs {direct}");
    }

    #[test]
    fn girsanov_residual_equals_fw(m in modes(), slope in -2.0..2.0f64, p in 0usize..4) {
        let grid = TimeGrid::new(1.0, 100).unwrap();
        let sde = sde(PRESETS[p]);
        let z = smooth_path(grid, 0.0, slope, &m);
        let spec = GaussianMeasureSpec::wiener(grid, 1.0).unwrap();
        let drift = sde.drift.clone();
        let residual = tilt::fw_girsanov_residual(&spec, |v| tilt::drift_integral(&drift, grid.dt(), v), &z).unwrap();
        let fw = tilt::fw_sde(&sde, &z).value;
        prop_assert!(relative(residual.value, fw) <= 1e-8, "{} vs {fw}", residual.value);
    }

    #[test]
    fn functionals_are_infinite_exactly_off_the_pinned_start(m in modes(), offset in -1.0..1.0f64, p in 0usize..4) {
        prop_assume!(offset != 0.0);
        let grid = TimeGrid::new(1.0, 50).unwrap();
        let sde = sde(PRESETS[p]);
        let spec = GaussianMeasureSpec::wiener(grid, 1.0).unwrap();
        let expansion = sde.expansion(&grid);
        for (z, off) in [(smooth_path(grid, 0.0, 0.3, &m), false), (smooth_path(grid, offset, 0.3, &m), true)] {
            let values = [
                tilt::om_sde(&sde, &z, 0.5).unwrap().value,
                tilt::fw_sde(&sde, &z).value,
                tilt::om_tilted(&spec, &expansion, &z, 0.5).unwrap().value,
                tilt::fw_tilted(&spec, &expansion, &z).unwrap().value,
                SdeAction::fw(&sde, &grid).value(z.values()),
                SdeAction::scaled_om(&sde, &grid, 0.5).unwrap().value(z.values()),
            ];
            for v in values {
                prop_assert_eq!(v == f64::INFINITY, off, "{:?}", values);
            }
        }
    }

    #[test]
    fn path_dependent_norm_is_homogeneous_of_degree_two(m in modes(), slope in -2.0..2.0f64, alpha in -3.0..3.0f64) {
        let grid = TimeGrid::new(1.0, 64).unwrap();
        let model = PathDependentModel::new("sin", |t: f64| 1.0 + 0.5 * t.sin(), |t: f64| t - 0.5 * t.cos() + 0.5, grid).unwrap();
        let z = smooth_path(grid, 0.0, slope, &m);
        let n = model.cm_half_norm(&z).unwrap();
        prop_assert!(n >= 0.0);
        let scaled = model.cm_half_norm(&z.scaled(alpha).unwrap()).unwrap();
        prop_assert!((scaled - alpha * alpha * n).abs() <= 1e-12 * n.max(1.0));
    }

    // The tilt is order 0, so ε²·OM_ε = F₀ + ½‖·‖² for every ε.
    #[test]
    fn tilting_reproduces_the_path_dependent_norm(m in modes(), slope in -2.0..2.0f64, eps in 0.05..2.0f64) {
        let grid = TimeGrid::new(1.0, 64).unwrap();
        let model = PathDependentModel::new("exp", |t: f64| (-t).exp(), |t: f64| 1.0 - (-t).exp(), grid).unwrap();
        let measure = TiltedMeasure::new(GaussianMeasureSpec::wiener(grid, 1.0).unwrap(), model.expansion()).unwrap();
        let z = smooth_path(grid, 0.0, slope, &m);
        let scaled_om = eps * eps * measure.om(&z, eps).unwrap().value;
        let exact = model.cm_half_norm(&z).unwrap();
        prop_assert!(relative(scaled_om, exact) <= 1e-10, "{scaled_om} vs {exact}");
    }

    #[test]
    fn linear_algebraic_fw_factors(phi in prop::collection::vec(-3.0..3.0f64, 1..200), kappa in -0.9..0.9f64) {
        let weights = AlgebraicSystem::harmonic_weights(phi.len());
        let zero = AlgebraicSystem::uniform(weights.clone(), ScalarMap::zero()).unwrap();
        let linear = AlgebraicSystem::uniform(weights, ScalarMap::linear(kappa).unwrap()).unwrap();
        let base = zoo::algebraic_fw(&zero, &phi).unwrap().value;
        let value = zoo::algebraic_fw(&linear, &phi).unwrap().value;
        prop_assert!((value - (1.0 - kappa).powi(2) * base).abs() <= 1e-14 * base.max(1e-300));
    }

    #[test]
    fn zero_map_solve_returns_the_noise(xi in prop::collection::vec(-4.0..4.0f64, 1..100), eps in 0.0..2.0f64) {
        let weights = AlgebraicSystem::harmonic_weights(xi.len());
        let system = AlgebraicSystem::uniform(weights.clone(), ScalarMap::zero()).unwrap();
        let noise = WeightedSequence::new(weights.clone(), xi.clone()).unwrap();
        let solution = zoo::algebraic_solve(&system, &noise, eps).unwrap();
        prop_assert!(solution.failures.is_empty());
        for ((x, a), n) in solution.x.values().iter().zip(&weights).zip(&xi) {
            prop_assert_eq!(*x, eps * a * n);
        }
    }
}

// The shift constant does not depend on z, so shifting cannot move argmins.
#[test]
fn shift_is_the_same_constant_for_every_path() {
    let grid = TimeGrid::new(1.0, 16).unwrap();
    let sde = sde(DriftPreset::DoubleWell);
    let measure = TiltedMeasure::new(GaussianMeasureSpec::wiener(grid, 1.0).unwrap(), sde.expansion(&grid)).unwrap();
    let shift = measure.inf_shift();
    assert!(shift.converged);
    let mut runner = proptest::test_runner::TestRunner::deterministic();
    let mut diffs = Vec::new();
    for _ in 0..32 {
        let (m, slope) = (modes(), -2.0..2.0f64).new_tree(&mut runner).unwrap().current();
        let z = smooth_path(grid, 0.0, slope, &m);
        let shifted = measure.fw(&z, true).unwrap().value;
        let unshifted = measure.fw(&z, false).unwrap().value;
        assert!(shifted >= -1e-10, "shifted rate is negative: {shifted}");
        diffs.push(unshifted - shifted);
    }
    for d in &diffs {
        assert!((d - shift.value).abs() <= 1e-12, "{d} vs {}", shift.value);
    }
    let argmin = DiscretePath::new(grid, shift.argmin.clone()).unwrap();
    assert!(measure.fw(&argmin, true).unwrap().value.abs() <= 1e-12);
}
