//! Concrete models: drift presets, the linear path-dependent SDE and the
//! system of random algebraic equations.

use std::fmt;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{ensure_finite, Error, Result};
use crate::measure::{DiscretePath, TimeGrid, WeightedSequence};
use crate::numeric::compensated_sum;
use crate::tilt::{DriftModel, Functional, ScalarFn, TiltingExpansion};

/// Named drift with exact derivatives.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case", deny_unknown_fields)]
pub enum DriftPreset {
    /// `b = 0`.
    Zero,
    /// `b(x) = −θx`.
    Ou { theta: f64 },
    /// `b(x) = x − x³`.
    DoubleWell,
}

impl DriftPreset {
    pub fn from_name(name: &str, theta: Option<f64>) -> Result<Self> {
        match (name, theta) {
            ("zero", None) => Ok(Self::Zero),
            ("double_well", None) => Ok(Self::DoubleWell),
            ("ou", Some(theta)) => Ok(Self::Ou { theta }),
            ("ou", None) => Err(Error::Input("preset `ou` needs theta".into())),
            ("zero" | "double_well", Some(_)) => Err(Error::Input(format!("preset `{name}` takes no theta"))),
            _ => Err(Error::UnknownPreset(name.to_string())),
        }
    }
}

pub fn preset_drift(preset: DriftPreset) -> Result<DriftModel> {
    match preset {
        DriftPreset::Zero => DriftModel::new("zero", |_| 0.0, |_| 0.0, |_| 0.0),
        DriftPreset::Ou { theta } => {
            ensure_finite("theta", &[theta])?;
            DriftModel::new(format!("ou({theta})"), move |x| -theta * x, move |_| -theta, |_| 0.0)
        }
        DriftPreset::DoubleWell => {
            DriftModel::new("double_well", |x| x - x * x * x, |x| 1.0 - 3.0 * x * x, |x| -6.0 * x)
        }
    }
}

/// `X^ε(t) = ε(B(t) + ∫₀ᵗ a(s) B(s) ds)` on a fixed grid, with `A' = a`.
///
/// `X^ε` is centered Gaussian and, writing `I(t) = a(t) ∫₀ᵗ e^{−(A(t)−A(s))} z'(s) ds`,
///
/// ```text
/// ½‖z‖²_μ = ½ ∫₀ᵀ (z'(t) − I(t))² dt.
/// ```
///
/// On each interval `z'` is the difference quotient `d_j`, the `s`-integral
/// is the trapezoid rule per interval, and the outer integral uses the
/// interval mean of `I`. Cost is `O(n²)`.
#[derive(Clone)]
pub struct PathDependentModel {
    name: String,
    grid: TimeGrid,
    a_nodes: Vec<f64>,
    big_a_nodes: Vec<f64>,
}

impl fmt::Debug for PathDependentModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("PathDependentModel").field("name", &self.name).field("grid", &self.grid).finish()
    }
}

impl PathDependentModel {
    /// `big_a` must be an antiderivative of `a`; checked by central
    /// differences at interior grid nodes.
    pub fn new(
        name: impl Into<String>,
        a: impl Fn(f64) -> f64,
        big_a: impl Fn(f64) -> f64,
        grid: TimeGrid,
    ) -> Result<Self> {
        let name = name.into();
        let nodes = grid.nodes();
        let a_nodes: Vec<f64> = nodes.iter().map(|t| a(*t)).collect();
        let big_a_nodes: Vec<f64> = nodes.iter().map(|t| big_a(*t)).collect();
        ensure_finite("a", &a_nodes)?;
        ensure_finite("A", &big_a_nodes)?;
        let checks = 17.min(grid.intervals() + 1);
        for i in 0..checks {
            let t = grid.horizon() * (i as f64 + 0.5) / checks as f64;
            let h = 1e-5 * grid.horizon().max(1.0);
            let fd = (big_a(t + h) - big_a(t - h)) / (2.0 * h);
            let exact = a(t);
            if (fd - exact).abs() > 1e-6 * exact.abs().max(1.0) {
                return Err(Error::Input(format!("model `{name}`: A'({t}) = {fd} but a({t}) = {exact}")));
            }
        }
        Ok(Self { name, grid, a_nodes, big_a_nodes })
    }

    /// `a ≡ c`, `A(t) = c t`.
    pub fn constant(c: f64, grid: TimeGrid) -> Result<Self> {
        ensure_finite("a", &[c])?;
        Self::new(format!("constant({c})"), move |_| c, move |t| c * t, grid)
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    /// Interval means `Ī_i = (I_i + I_{i+1})/2` of the memory term.
    fn memory_means(&self, d: &[f64]) -> Vec<f64> {
        let n = d.len();
        let dt = self.grid.dt();
        let a = &self.a_nodes;
        let big_a = &self.big_a_nodes;
        let memory: Vec<f64> = (0..=n)
            .map(|k| {
                if k == 0 || a[k] == 0.0 {
                    return 0.0;
                }
                let mut acc = 0.0;
                let mut w_left = (big_a[0] - big_a[k]).exp();
                for (j, dj) in d.iter().enumerate().take(k) {
                    let w_right = (big_a[j + 1] - big_a[k]).exp();
                    acc += dj * 0.5 * (w_left + w_right);
                    w_left = w_right;
                }
                a[k] * dt * acc
            })
            .collect();
        memory.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect()
    }

    fn increments(&self, z: &[f64]) -> Vec<f64> {
        let dt = self.grid.dt();
        z.windows(2).map(|w| (w[1] - w[0]) / dt).collect()
    }

    /// `½ Σ (d_i − Ī_i)² Δt` with its gradient, no pin check.
    fn action(&self, z: &[f64], grad: Option<&mut [f64]>) -> f64 {
        let dt = self.grid.dt();
        let d = self.increments(z);
        let n = d.len();
        let mean = self.memory_means(&d);
        let r: Vec<f64> = d.iter().zip(&mean).map(|(x, m)| x - m).collect();
        let value = 0.5 * dt * r.iter().map(|x| x * x).sum::<f64>();
        if let Some(grad) = grad {
            // q_k = ∂value/∂I_k
            let q: Vec<f64> = (0..=n)
                .map(|k| {
                    let left = if k > 0 { r[k - 1] } else { 0.0 };
                    let right = if k < n { r[k] } else { 0.0 };
                    -0.5 * dt * (left + right)
                })
                .collect();
            let a = &self.a_nodes;
            let big_a = &self.big_a_nodes;
            // ∂value/∂d_j = Δt r_j + Σ_{k>j} q_k a_k Δt (w_{k,j} + w_{k,j+1})/2
            let dd: Vec<f64> = (0..n)
                .map(|j| {
                    let memory: f64 = (j + 1..=n)
                        .filter(|&k| a[k] != 0.0)
                        .map(|k| {
                            let w = 0.5 * ((big_a[j] - big_a[k]).exp() + (big_a[j + 1] - big_a[k]).exp());
                            q[k] * a[k] * dt * w
                        })
                        .sum();
                    dt * r[j] + memory
                })
                .collect();
            grad.iter_mut().for_each(|g| *g = 0.0);
            for (j, g) in dd.iter().enumerate() {
                grad[j] -= g / dt;
                grad[j + 1] += g / dt;
            }
        }
        value
    }

    /// `½‖z‖²_μ`, `+∞` unless `z(0) = 0`.
    pub fn cm_half_norm(&self, z: &DiscretePath) -> Result<f64> {
        if z.grid() != &self.grid {
            return Err(Error::Structure("path grid differs from the model grid".into()));
        }
        if z.start() != 0.0 {
            return Ok(f64::INFINITY);
        }
        Ok(self.action(z.values(), None))
    }

    /// The Gaussian rate `½‖·‖²_μ` as an objective on nodal values.
    pub fn rate(&self) -> PathDependentRate<'_> {
        PathDependentRate { model: self }
    }

    /// Tilt of the Wiener measure on the model grid:
    /// `F₀(y) = −Σ Ī_i Δy_i + ½ Σ Ī_i² Δt`, all higher terms zero.
    ///
    /// The Itô-Stratonovich covariation of the memory term is a constant
    /// and is dropped, so `F₀ + ½‖·‖²_{Wiener} = ½‖·‖²_μ` exactly.
    pub fn expansion(&self) -> TiltingExpansion {
        let term: Arc<dyn Functional> = Arc::new(PathDependentTilt { model: self.clone() });
        TiltingExpansion::new(vec![term], None, vec![1.0]).expect("one term, one parameter")
    }
}

pub fn path_dependent_cm_half_norm(model: &PathDependentModel, z: &DiscretePath) -> Result<f64> {
    model.cm_half_norm(z)
}

pub struct PathDependentRate<'a> {
    model: &'a PathDependentModel,
}

impl Functional for PathDependentRate<'_> {
    fn value(&self, z: &[f64]) -> f64 {
        if z[0] != 0.0 {
            return f64::INFINITY;
        }
        self.model.action(z, None)
    }

    fn value_and_gradient(&self, z: &[f64], grad: &mut [f64]) -> f64 {
        let v = self.model.action(z, Some(grad));
        if z[0] != 0.0 {
            return f64::INFINITY;
        }
        v
    }
}

struct PathDependentTilt {
    model: PathDependentModel,
}

impl Functional for PathDependentTilt {
    fn value(&self, y: &[f64]) -> f64 {
        let dt = self.model.grid.dt();
        let d = self.model.increments(y);
        let mean = self.model.memory_means(&d);
        d.iter().zip(&mean).map(|(x, m)| (-m * x + 0.5 * m * m) * dt).sum()
    }

    fn value_and_gradient(&self, y: &[f64], grad: &mut [f64]) -> f64 {
        let dt = self.model.grid.dt();
        let action = self.model.action(y, Some(grad));
        let mut half_norm = 0.0;
        for i in 0..y.len() - 1 {
            let d = (y[i + 1] - y[i]) / dt;
            half_norm += 0.5 * d * d * dt;
            grad[i] += d;
            grad[i + 1] -= d;
        }
        action - half_norm
    }
}

/// Scalar map `f` with derivative, used coordinatewise in an
/// [`AlgebraicSystem`].
#[derive(Clone)]
pub struct ScalarMap {
    name: String,
    f: ScalarFn,
    df: ScalarFn,
}

impl fmt::Debug for ScalarMap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name)
    }
}

/// Serializable names of the shipped maps.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case", deny_unknown_fields)]
pub enum MapPreset {
    Zero,
    /// `f(x) = κx`, `|κ| ≤ 0.9`.
    Linear { kappa: f64 },
    /// `f(x) = s·tanh(x)`, `|s| ≤ 0.9`.
    Tanh { scale: f64 },
}

pub const MAX_CONTRACTION: f64 = 0.9;

impl ScalarMap {
    pub fn custom(
        name: impl Into<String>,
        f: impl Fn(f64) -> f64 + Send + Sync + 'static,
        df: impl Fn(f64) -> f64 + Send + Sync + 'static,
    ) -> Self {
        Self { name: name.into(), f: Arc::new(f), df: Arc::new(df) }
    }

    pub fn zero() -> Self {
        Self::custom("zero", |_| 0.0, |_| 0.0)
    }

    pub fn linear(kappa: f64) -> Result<Self> {
        check_contraction("kappa", kappa)?;
        Ok(Self::custom(format!("linear({kappa})"), move |x| kappa * x, move |_| kappa))
    }

    pub fn tanh(scale: f64) -> Result<Self> {
        check_contraction("scale", scale)?;
        Ok(Self::custom(
            format!("tanh({scale})"),
            move |x| scale * x.tanh(),
            move |x| {
                let c = x.cosh();
                scale / (c * c)
            },
        ))
    }

    pub fn from_preset(preset: MapPreset) -> Result<Self> {
        match preset {
            MapPreset::Zero => Ok(Self::zero()),
            MapPreset::Linear { kappa } => Self::linear(kappa),
            MapPreset::Tanh { scale } => Self::tanh(scale),
        }
    }

    pub fn eval(&self, x: f64) -> f64 {
        (self.f)(x)
    }

    pub fn derivative(&self, x: f64) -> f64 {
        (self.df)(x)
    }
}

fn check_contraction(name: &str, c: f64) -> Result<()> {
    if !c.is_finite() || c.abs() > MAX_CONTRACTION {
        return Err(Error::Input(format!("{name} must satisfy |{name}| <= {MAX_CONTRACTION}, got {c}")));
    }
    Ok(())
}

#[derive(Debug, Clone)]
enum Maps {
    Uniform(ScalarMap),
    PerIndex(Vec<ScalarMap>),
}

/// `x_n = f_n(x_n) + ε a_n ξ_n`, `n = 1..N`.
#[derive(Debug, Clone)]
pub struct AlgebraicSystem {
    weights: Vec<f64>,
    maps: Maps,
}

const CHUNK: usize = 4096;

impl AlgebraicSystem {
    pub fn uniform(weights: Vec<f64>, map: ScalarMap) -> Result<Self> {
        Self::check_weights(&weights)?;
        Ok(Self { weights, maps: Maps::Uniform(map) })
    }

    pub fn per_index(weights: Vec<f64>, maps: Vec<ScalarMap>) -> Result<Self> {
        Self::check_weights(&weights)?;
        if maps.len() != weights.len() {
            return Err(Error::Structure(format!("{} weights but {} maps", weights.len(), maps.len())));
        }
        Ok(Self { weights, maps: Maps::PerIndex(maps) })
    }

    /// `a_n = 1/n`, `n = 1..N`.
    pub fn harmonic_weights(truncation: usize) -> Vec<f64> {
        (1..=truncation).map(|n| 1.0 / n as f64).collect()
    }

    fn check_weights(weights: &[f64]) -> Result<()> {
        if weights.is_empty() {
            return Err(Error::Input("truncation N must be at least 1".into()));
        }
        ensure_finite("weights", weights)?;
        if let Some(i) = weights.iter().position(|a| *a == 0.0) {
            return Err(Error::Input(format!("weight a_{} is zero", i + 1)));
        }
        Ok(())
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn truncation(&self) -> usize {
        self.weights.len()
    }

    pub fn map(&self, n: usize) -> &ScalarMap {
        match &self.maps {
            Maps::Uniform(m) => m,
            Maps::PerIndex(v) => &v[n],
        }
    }

    fn check_len(&self, len: usize) -> Result<()> {
        if len != self.weights.len() {
            return Err(Error::Structure(format!("{len} coordinates for truncation {}", self.weights.len())));
        }
        Ok(())
    }

    /// Deterministic chunked sum of `term(n)` over all coordinates.
    fn sum_terms(&self, term: impl Fn(usize) -> f64 + Sync) -> f64 {
        let partial: Vec<f64> = (0..self.weights.len())
            .into_par_iter()
            .chunks(CHUNK)
            .map(|idx| compensated_sum(idx.into_iter().map(&term)))
            .collect();
        compensated_sum(partial)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AlgebraicFw {
    pub value: f64,
    /// `z_n = a_n² φ_n`.
    pub z: Vec<f64>,
}

/// `½ Σ (φ_n − f_n(φ_n))² a_n²`.
pub fn algebraic_fw(system: &AlgebraicSystem, phi: &[f64]) -> Result<AlgebraicFw> {
    system.check_len(phi.len())?;
    ensure_finite("phi", phi)?;
    let w = &system.weights;
    let value = 0.5
        * system.sum_terms(|n| {
            let r = phi[n] - system.map(n).eval(phi[n]);
            r * r * w[n] * w[n]
        });
    let z = phi.iter().zip(w).map(|(p, a)| a * a * p).collect();
    Ok(AlgebraicFw { value, z })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SolveFailure {
    pub index: usize,
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AlgebraicSolution {
    pub x: WeightedSequence,
    pub failures: Vec<SolveFailure>,
}

pub const SOLVE_TOL: f64 = 1e-12;
const SOLVE_MAX_ITER: usize = 10_000;

/// Fixed-point iteration `x ← f_n(x) + ε a_n ξ_n` per coordinate. The noise
/// values are the standard coordinates `ξ_n`. A diverging coordinate keeps
/// its last finite iterate and is listed in `failures`.
pub fn algebraic_solve(system: &AlgebraicSystem, noise: &WeightedSequence, eps: f64) -> Result<AlgebraicSolution> {
    system.check_len(noise.len())?;
    if eps < 0.0 || !eps.is_finite() {
        return Err(Error::Input(format!("eps must be finite and non-negative, got {eps}")));
    }
    let xi = noise.values();
    let w = &system.weights;
    let solved: Vec<(f64, f64)> = (0..w.len())
        .into_par_iter()
        .map(|n| {
            let f = system.map(n);
            let c = eps * w[n] * xi[n];
            let mut x = c;
            let mut residual = (x - f.eval(x) - c).abs();
            for _ in 0..SOLVE_MAX_ITER {
                if residual <= SOLVE_TOL {
                    break;
                }
                let next = f.eval(x) + c;
                let next_residual = (next - f.eval(next) - c).abs();
                if !next_residual.is_finite() {
                    break;
                }
                x = next;
                residual = next_residual;
            }
            (x, residual)
        })
        .collect();
    let failures = solved
        .iter()
        .enumerate()
        .filter(|(_, (_, r))| !(*r <= SOLVE_TOL))
        .map(|(index, (_, residual))| SolveFailure { index, residual: *residual })
        .collect();
    let x = WeightedSequence::new(w.clone(), solved.into_iter().map(|(x, _)| x).collect())?;
    Ok(AlgebraicSolution { x, failures })
}

/// Tilt of the diagonal Gaussian with weights `a_n` whose rate in the
/// coordinates `z_n = a_n² φ_n` is [`algebraic_fw`]:
/// `F₀(z) = Σ a_n² (½ f_n(φ_n)² − φ_n f_n(φ_n))`.
pub fn algebraic_expansion(system: &AlgebraicSystem) -> TiltingExpansion {
    let term: Arc<dyn Functional> = Arc::new(AlgebraicTilt { system: system.clone() });
    TiltingExpansion::new(vec![term], None, vec![1.0]).expect("one term, one parameter")
}

struct AlgebraicTilt {
    system: AlgebraicSystem,
}

impl Functional for AlgebraicTilt {
    fn value(&self, z: &[f64]) -> f64 {
        let w = &self.system.weights;
        self.system.sum_terms(|n| {
            let a2 = w[n] * w[n];
            let phi = z[n] / a2;
            let f = self.system.map(n).eval(phi);
            a2 * (0.5 * f * f - phi * f)
        })
    }

    fn value_and_gradient(&self, z: &[f64], grad: &mut [f64]) -> f64 {
        let w = &self.system.weights;
        for (n, g) in grad.iter_mut().enumerate() {
            let phi = z[n] / (w[n] * w[n]);
            let map = self.system.map(n);
            let (f, df) = (map.eval(phi), map.derivative(phi));
            *g = f * df - f - phi * df;
        }
        self.value(z)
    }
}
