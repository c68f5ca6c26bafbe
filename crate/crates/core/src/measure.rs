//! Reference Gaussian measures and their Cameron-Martin structure.
//!
//! Two reference measures are supported:
//!
//! * `WienerPath`: Brownian motion on a uniform grid over `[0, T]`. The
//!   Cameron-Martin space is the set of paths pinned at `z(0) = 0`, with
//!   squared norm `∫ z'(t)² dt`.
//! * `DiagonalSequence`: the law of `(a_1 ξ_1, …, a_N ξ_N)` with i.i.d.
//!   standard normal `ξ_n`, truncated at `N`. Elements `z_n = a_n² φ_n` have
//!   squared norm `Σ φ_n² a_n² = Σ z_n² / a_n²`.
//!
//! The scaled measure `μ₀^ε(A) = μ₀(A / ε)` keeps the same Cameron-Martin
//! norm; only sampling depends on the noise scale.
//!
//! Discrete derivatives are forward differences and the derivative integral
//! is a left-endpoint sum, so the discrete norm of a grid path equals the
//! exact norm of its piecewise-linear interpolant.

use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{ensure_finite, ensure_positive, Error, Result};
use crate::rng;

/// Uniform time grid `t_i = i·T/n`, `i = 0..=n`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    horizon: f64,
    intervals: usize,
}

impl TimeGrid {
    pub fn new(horizon: f64, intervals: usize) -> Result<Self> {
        ensure_positive("horizon", horizon)?;
        if intervals == 0 {
            return Err(Error::Input("grid needs at least one interval".into()));
        }
        Ok(Self { horizon, intervals })
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn intervals(&self) -> usize {
        self.intervals
    }

    pub fn node_count(&self) -> usize {
        self.intervals + 1
    }

    pub fn dt(&self) -> f64 {
        self.horizon / self.intervals as f64
    }

    pub fn node(&self, i: usize) -> f64 {
        self.horizon * i as f64 / self.intervals as f64
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..self.node_count()).map(|i| self.node(i)).collect()
    }

    /// Grid over `[0, t_k]` with the same spacing.
    pub fn prefix(&self, k: usize) -> Result<TimeGrid> {
        if k == 0 || k > self.intervals {
            return Err(Error::Structure(format!("prefix length {k} outside 1..={}", self.intervals)));
        }
        TimeGrid::new(self.node(k), k)
    }
}

/// Nodal values of a path on a [`TimeGrid`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DiscretePath {
    grid: TimeGrid,
    values: Vec<f64>,
}

impl DiscretePath {
    pub fn new(grid: TimeGrid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.node_count() {
            return Err(Error::Structure(format!(
                "path has {} values but the grid has {} nodes",
                values.len(),
                grid.node_count()
            )));
        }
        ensure_finite("path", &values)?;
        Ok(Self { grid, values })
    }

    pub fn from_fn(grid: TimeGrid, f: impl Fn(f64) -> f64) -> Result<Self> {
        let values = grid.nodes().into_iter().map(f).collect();
        Self::new(grid, values)
    }

    pub fn zeros(grid: TimeGrid) -> Self {
        Self { grid, values: vec![0.0; grid.node_count()] }
    }

    /// Straight line from `from` at `t = 0` to `to` at `t = T`.
    pub fn straight(grid: TimeGrid, from: f64, to: f64) -> Result<Self> {
        let n = grid.intervals() as f64;
        let values = (0..grid.node_count()).map(|i| from + (to - from) * i as f64 / n).collect();
        Self::new(grid, values)
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn start(&self) -> f64 {
        self.values[0]
    }

    pub fn terminal(&self) -> f64 {
        self.values[self.values.len() - 1]
    }

    pub fn scaled(&self, factor: f64) -> Result<Self> {
        Self::new(self.grid, self.values.iter().map(|v| v * factor).collect())
    }

    pub fn sub(&self, other: &DiscretePath) -> Result<Self> {
        self.check_same_grid(other)?;
        Ok(Self {
            grid: self.grid,
            values: self.values.iter().zip(&other.values).map(|(a, b)| a - b).collect(),
        })
    }

    pub fn add(&self, other: &DiscretePath) -> Result<Self> {
        self.check_same_grid(other)?;
        Ok(Self {
            grid: self.grid,
            values: self.values.iter().zip(&other.values).map(|(a, b)| a + b).collect(),
        })
    }

    /// Sup-norm distance over grid nodes.
    pub fn sup_distance(&self, other: &DiscretePath) -> Result<f64> {
        self.check_same_grid(other)?;
        Ok(self.values.iter().zip(&other.values).fold(0.0_f64, |m, (a, b)| m.max((a - b).abs())))
    }

    /// Piecewise-linear interpolation at time `t` (clamped to `[0, T]`).
    pub fn interpolate(&self, t: f64) -> f64 {
        let n = self.grid.intervals();
        let s = (t / self.grid.dt()).clamp(0.0, n as f64);
        let i = (s.floor() as usize).min(n - 1);
        let w = s - i as f64;
        self.values[i] * (1.0 - w) + self.values[i + 1] * w
    }

    /// Resamples onto another grid with the same horizon by linear interpolation.
    pub fn resample(&self, grid: &TimeGrid) -> Result<Self> {
        if (grid.horizon() - self.grid.horizon()).abs() > 1e-12 * self.grid.horizon() {
            return Err(Error::Structure("resampling requires equal horizons".into()));
        }
        Self::new(*grid, grid.nodes().into_iter().map(|t| self.interpolate(t)).collect())
    }

    fn check_same_grid(&self, other: &DiscretePath) -> Result<()> {
        if self.grid != other.grid {
            return Err(Error::Structure("paths live on different grids".into()));
        }
        Ok(())
    }
}

/// Forward-difference derivative `d_i = (z_{i+1} - z_i) / Δt`, one value per interval.
pub fn path_derivative(path: &DiscretePath) -> Vec<f64> {
    let dt = path.grid.dt();
    path.values.windows(2).map(|w| (w[1] - w[0]) / dt).collect()
}

/// Truncated sequence element paired with its weights `a_n`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WeightedSequence {
    weights: Vec<f64>,
    values: Vec<f64>,
}

impl WeightedSequence {
    pub fn new(weights: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        check_weights(&weights)?;
        if weights.len() != values.len() {
            return Err(Error::Structure(format!(
                "{} weights but {} values",
                weights.len(),
                values.len()
            )));
        }
        ensure_finite("sequence", &values)?;
        Ok(Self { weights, values })
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

fn check_weights(weights: &[f64]) -> Result<()> {
    if weights.is_empty() {
        return Err(Error::Input("weight sequence must be non-empty".into()));
    }
    ensure_finite("weights", weights)?;
    if let Some(i) = weights.iter().position(|a| *a == 0.0) {
        return Err(Error::Input(format!("weight a_{} is zero", i + 1)));
    }
    Ok(())
}

/// The centered reference Gaussian.
#[derive(Debug, Clone, PartialEq)]
pub enum Reference {
    WienerPath(TimeGrid),
    /// Weights `a_1..a_N`; the truncation is `N = weights.len()`.
    DiagonalSequence(Vec<f64>),
}

/// Reference Gaussian `μ₀` together with a noise scale `ε` (so the measure
/// in use is `μ₀^ε`).
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianMeasureSpec {
    reference: Reference,
    noise_scale: f64,
}

/// Borrowed element of either reference space.
#[derive(Debug, Clone, Copy)]
pub enum ElementRef<'a> {
    Path(&'a DiscretePath),
    Sequence(&'a WeightedSequence),
}

impl<'a> From<&'a DiscretePath> for ElementRef<'a> {
    fn from(p: &'a DiscretePath) -> Self {
        ElementRef::Path(p)
    }
}

impl<'a> From<&'a WeightedSequence> for ElementRef<'a> {
    fn from(s: &'a WeightedSequence) -> Self {
        ElementRef::Sequence(s)
    }
}

impl ElementRef<'_> {
    pub fn values(&self) -> &[f64] {
        match self {
            ElementRef::Path(p) => p.values(),
            ElementRef::Sequence(s) => s.values(),
        }
    }
}

/// Owned sample from a reference measure.
#[derive(Debug, Clone, PartialEq)]
pub enum Element {
    Path(DiscretePath),
    Sequence(WeightedSequence),
}

impl Element {
    pub fn values(&self) -> &[f64] {
        match self {
            Element::Path(p) => p.values(),
            Element::Sequence(s) => s.values(),
        }
    }

    pub fn as_ref(&self) -> ElementRef<'_> {
        match self {
            Element::Path(p) => ElementRef::Path(p),
            Element::Sequence(s) => ElementRef::Sequence(s),
        }
    }

    pub fn into_path(self) -> Option<DiscretePath> {
        match self {
            Element::Path(p) => Some(p),
            Element::Sequence(_) => None,
        }
    }
}

impl GaussianMeasureSpec {
    pub fn wiener(grid: TimeGrid, noise_scale: f64) -> Result<Self> {
        ensure_positive("noise scale", noise_scale)?;
        Ok(Self { reference: Reference::WienerPath(grid), noise_scale })
    }

    pub fn diagonal(weights: Vec<f64>, noise_scale: f64) -> Result<Self> {
        ensure_positive("noise scale", noise_scale)?;
        check_weights(&weights)?;
        Ok(Self { reference: Reference::DiagonalSequence(weights), noise_scale })
    }

    pub fn reference(&self) -> &Reference {
        &self.reference
    }

    pub fn noise_scale(&self) -> f64 {
        self.noise_scale
    }

    /// Number of coordinates of an element (grid nodes or truncation `N`).
    pub fn dimension(&self) -> usize {
        match &self.reference {
            Reference::WienerPath(grid) => grid.node_count(),
            Reference::DiagonalSequence(w) => w.len(),
        }
    }

    /// Same reference measure with the noise scale replaced.
    pub fn scale(&self, noise_scale: f64) -> Result<Self> {
        ensure_positive("noise scale", noise_scale)?;
        Ok(Self { reference: self.reference.clone(), noise_scale })
    }

    /// Checks that an element lives in this spec's space (grid or length).
    pub fn check_element(&self, element: ElementRef<'_>) -> Result<()> {
        match (&self.reference, element) {
            (Reference::WienerPath(grid), ElementRef::Path(p)) => {
                if p.grid() != grid {
                    return Err(Error::Structure("path grid differs from the reference grid".into()));
                }
            }
            (Reference::DiagonalSequence(w), ElementRef::Sequence(s)) => {
                if s.len() != w.len() {
                    return Err(Error::Structure(format!(
                        "sequence length {} differs from truncation {}",
                        s.len(),
                        w.len()
                    )));
                }
            }
            _ => return Err(Error::Structure("element kind does not match the reference measure".into())),
        }
        Ok(())
    }

    /// Squared Cameron-Martin norm, `+∞` outside the Cameron-Martin space.
    pub fn cm_norm_sq<'a>(&self, element: impl Into<ElementRef<'a>>) -> Result<f64> {
        let element = element.into();
        self.check_element(element)?;
        ensure_finite("element", element.values())?;
        Ok(self.cm_norm_sq_values(element.values()))
    }

    /// Squared norm of raw coordinates; the caller guarantees the shape.
    pub fn cm_norm_sq_values(&self, values: &[f64]) -> f64 {
        match &self.reference {
            Reference::WienerPath(grid) => wiener_cm_norm_sq(grid.dt(), values),
            Reference::DiagonalSequence(w) => diagonal_cm_norm_sq(w, values),
        }
    }

    /// Gradient of the squared norm with respect to the coordinates.
    pub(crate) fn cm_norm_sq_gradient(&self, values: &[f64], grad: &mut [f64]) {
        match &self.reference {
            Reference::WienerPath(grid) => {
                let dt = grid.dt();
                grad.iter_mut().for_each(|g| *g = 0.0);
                for i in 0..values.len() - 1 {
                    let d = (values[i + 1] - values[i]) / dt;
                    grad[i] -= 2.0 * d;
                    grad[i + 1] += 2.0 * d;
                }
            }
            Reference::DiagonalSequence(w) => {
                for ((g, z), a) in grad.iter_mut().zip(values).zip(w) {
                    *g = 2.0 * z / (a * a);
                }
            }
        }
    }

    /// Draws sample `index` of the stream identified by `seed`.
    pub fn sample_one(&self, seed: u64, index: u64) -> Element {
        let mut rng = rng::stream(seed, index);
        match &self.reference {
            Reference::WienerPath(grid) => {
                let step_sd = self.noise_scale * grid.dt().sqrt();
                let mut values = Vec::with_capacity(grid.node_count());
                let mut z = 0.0;
                values.push(z);
                for _ in 0..grid.intervals() {
                    let xi: f64 = StandardNormal.sample(&mut rng);
                    z += step_sd * xi;
                    values.push(z);
                }
                Element::Path(DiscretePath { grid: *grid, values })
            }
            Reference::DiagonalSequence(w) => {
                let values = w
                    .iter()
                    .map(|a| {
                        let xi: f64 = StandardNormal.sample(&mut rng);
                        (self.noise_scale * a) * xi
                    })
                    .collect();
                Element::Sequence(WeightedSequence { weights: w.clone(), values })
            }
        }
    }

    /// `count` independent samples from `μ₀^ε`; sample `i` uses stream `i`.
    pub fn sample(&self, seed: u64, count: usize) -> Result<Vec<Element>> {
        if count == 0 {
            return Err(Error::Input("sample count must be at least 1".into()));
        }
        Ok((0..count as u64).into_par_iter().map(|i| self.sample_one(seed, i)).collect())
    }
}

/// `Σ ((z_{i+1} - z_i)/Δt)² Δt`, or `+∞` when `z_0 ≠ 0`.
pub fn wiener_cm_norm_sq(dt: f64, values: &[f64]) -> f64 {
    if values[0] != 0.0 {
        return f64::INFINITY;
    }
    values
        .windows(2)
        .map(|w| {
            let d = (w[1] - w[0]) / dt;
            d * d * dt
        })
        .sum()
}

/// `Σ z_n² / a_n²`.
pub fn diagonal_cm_norm_sq(weights: &[f64], values: &[f64]) -> f64 {
    weights.iter().zip(values).map(|(a, z)| (z / a) * (z / a)).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_grid(n: usize) -> TimeGrid {
        TimeGrid::new(1.0, n).unwrap()
    }

    #[test]
    fn grid_invariants() {
        let g = TimeGrid::new(2.5, 7).unwrap();
        assert_eq!(g.node_count(), 8);
        assert_eq!(g.node(7), 2.5);
        assert!(g.nodes().windows(2).all(|w| w[1] > w[0]));
        assert!(TimeGrid::new(0.0, 3).is_err());
        assert!(TimeGrid::new(1.0, 0).is_err());
        assert!(TimeGrid::new(f64::NAN, 3).is_err());
    }

    #[test]
    fn path_rejects_bad_shapes() {
        let g = unit_grid(4);
        assert!(matches!(DiscretePath::new(g, vec![0.0; 3]), Err(Error::Structure(_))));
        assert!(matches!(DiscretePath::new(g, vec![0.0, 1.0, f64::NAN, 0.0, 0.0]), Err(Error::Input(_))));
    }

    #[test]
    fn wiener_norm_of_zero_and_linear_paths() {
        let g = unit_grid(1000);
        let spec = GaussianMeasureSpec::wiener(g, 1.0).unwrap();
        assert_eq!(spec.cm_norm_sq(&DiscretePath::zeros(g)).unwrap(), 0.0);
        let line = DiscretePath::from_fn(g, |t| t).unwrap();
        assert!((spec.cm_norm_sq(&line).unwrap() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn wiener_norm_is_infinite_off_the_pinned_space() {
        let g = unit_grid(10);
        let spec = GaussianMeasureSpec::wiener(g, 1.0).unwrap();
        let shifted = DiscretePath::from_fn(g, |t| 1.0 + t).unwrap();
        assert_eq!(spec.cm_norm_sq(&shifted).unwrap(), f64::INFINITY);
    }

    #[test]
    fn diagonal_norm_matches_basel_partial_sum() {
        let n = 1_000_000;
        let weights: Vec<f64> = (1..=n).map(|k| 1.0 / k as f64).collect();
        let values: Vec<f64> = (1..=n).map(|k| 1.0 / (k as f64 * k as f64)).collect();
        let spec = GaussianMeasureSpec::diagonal(weights.clone(), 1.0).unwrap();
        let seq = WeightedSequence::new(weights, values).unwrap();
        let value = spec.cm_norm_sq(&seq).unwrap();
        // π²/6 minus the tail Σ_{k>N} 1/k² ≈ 1/N
        let basel = std::f64::consts::PI.powi(2) / 6.0;
        assert!((value - 1.644934).abs() < 1e-5, "{value}");
        assert!((basel - value - 1.0 / n as f64).abs() < 1e-9);
    }

    #[test]
    fn mismatched_elements_are_structural_errors() {
        let spec = GaussianMeasureSpec::wiener(unit_grid(4), 1.0).unwrap();
        let other = DiscretePath::zeros(unit_grid(5));
        assert!(matches!(spec.cm_norm_sq(&other), Err(Error::Structure(_))));
        let diag = GaussianMeasureSpec::diagonal(vec![1.0, 0.5], 1.0).unwrap();
        let seq = WeightedSequence::new(vec![1.0], vec![0.3]).unwrap();
        assert!(matches!(diag.cm_norm_sq(&seq), Err(Error::Structure(_))));
        assert!(matches!(diag.cm_norm_sq(&other), Err(Error::Structure(_))));
    }

    #[test]
    fn zero_weights_are_rejected() {
        assert!(GaussianMeasureSpec::diagonal(vec![1.0, 0.0], 1.0).is_err());
        assert!(WeightedSequence::new(vec![0.0], vec![1.0]).is_err());
    }

    #[test]
    fn derivative_examples() {
        let g = unit_grid(1000);
        let c = DiscretePath::from_fn(g, |_| 3.0).unwrap();
        assert!(path_derivative(&c).iter().all(|d| *d == 0.0));
        let line = DiscretePath::from_fn(g, |t| t).unwrap();
        assert!(path_derivative(&line).iter().all(|d| (d - 1.0).abs() < 1e-12));
        let quad = DiscretePath::from_fn(g, |t| t * t).unwrap();
        let dt = g.dt();
        let worst = path_derivative(&quad)
            .iter()
            .enumerate()
            .map(|(i, d)| (d - 2.0 * (i as f64 + 0.5) * dt).abs())
            .fold(0.0, f64::max);
        assert!(worst <= 1e-9, "{worst}");
    }

    #[test]
    fn scale_replaces_only_noise() {
        let spec = GaussianMeasureSpec::wiener(unit_grid(8), 0.3).unwrap();
        assert_eq!(spec.scale(0.3).unwrap(), spec);
        assert!(spec.scale(0.0).is_err());
        assert!(spec.scale(-1.0).is_err());
        let z = DiscretePath::from_fn(unit_grid(8), |t| t.sin()).unwrap();
        assert_eq!(spec.scale(2.0).unwrap().cm_norm_sq(&z).unwrap(), spec.cm_norm_sq(&z).unwrap());
    }

    #[test]
    fn sampling_is_deterministic_and_linear_in_noise() {
        let spec = GaussianMeasureSpec::wiener(unit_grid(16), 0.7).unwrap();
        let a = spec.sample(11, 5).unwrap();
        let b = spec.sample(11, 5).unwrap();
        assert_eq!(a, b);
        let doubled = spec.scale(1.4).unwrap().sample(11, 5).unwrap();
        for (x, y) in a.iter().zip(&doubled) {
            for (u, v) in x.values().iter().zip(y.values()) {
                assert_eq!(2.0 * u, *v);
            }
        }
        assert!(spec.sample(1, 0).is_err());
    }

    #[test]
    fn wiener_terminal_variance() {
        let spec = GaussianMeasureSpec::wiener(unit_grid(4), 1.0).unwrap();
        let n = 100_000;
        let samples = spec.sample(3, n).unwrap();
        let var = samples.iter().map(|s| s.values()[4].powi(2)).sum::<f64>() / n as f64;
        assert!((var - 1.0).abs() < 0.02, "{var}");
    }

    #[test]
    fn diagonal_sample_std() {
        let spec = GaussianMeasureSpec::diagonal(vec![1.0], 0.5).unwrap();
        let n = 100_000;
        let samples = spec.sample(5, n).unwrap();
        let mean = samples.iter().map(|s| s.values()[0]).sum::<f64>() / n as f64;
        let var = samples.iter().map(|s| (s.values()[0] - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        assert!((var.sqrt() - 0.5).abs() < 0.01, "{}", var.sqrt());
    }

    #[test]
    fn resample_and_interpolate() {
        let fine = DiscretePath::from_fn(unit_grid(8), |t| 3.0 * t - 1.0).unwrap();
        let coarse = fine.resample(&unit_grid(2)).unwrap();
        assert_eq!(coarse.values(), &[-1.0, 0.5, 2.0]);
        assert!((fine.interpolate(0.3) - (-0.1)).abs() < 1e-12);
    }
}
