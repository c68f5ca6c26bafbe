//! Onsager-Machlup and Freidlin-Wentzell functionals for exponential tilts of
//! a scaled Gaussian reference measure.
//!
//! # Sign convention
//!
//! A tilted family is stored through the exponent `F^ε` of
//!
//! ```text
//! dμ^ε/dμ₀^ε ∝ exp(−F^ε / ε²),   F^ε = F₀ + ε F₁ + (ε²/2) F₂ + … + εⁿ R_n(ε, ·)
//! ```
//!
//! so that `OM_ε(z) = F^ε(z)/ε² + ‖z‖²/(2ε²)` on the Cameron-Martin space and
//! `FW(z) = F₀(z) + ½‖z‖² − inf(F₀ + ½‖·‖²)`. The Girsanov density of
//! `dX = b(X) dt + ε dB` carries the opposite sign, so its Stratonovich form
//! gives
//!
//! ```text
//! F₀(z) = −∫ b(z)∘dz + ½ ∫ b(z)² dt,   F₁ = 0,   F₂(z) = ∫ b'(z) dt.
//! ```
//!
//! # Discretization
//!
//! On a uniform grid the drift enters every interval through its trapezoid
//! mean `b̄_i = (b(z_i) + b(z_{i+1}))/2`. The pathwise integral `∫ b∘dz` is
//! the trapezoid sum `Σ b̄_i (z_{i+1} − z_i)` and the same mean is used inside
//! the squares, so
//!
//! ```text
//! FW(z) = ½ Σ (d_i − b̄_i)² Δt,   d_i = (z_{i+1} − z_i)/Δt.
//! ```
//!
//! With this choice the SDE display, the tilted form and the Girsanov
//! residual `½‖z − H(z)‖²` with `H(z)(t) = ∫₀ᵗ b(z) ds` are the same
//! number up to round-off. `∫ b'(z) dt` uses the plain trapezoid rule.

use std::fmt;
use std::sync::{Arc, OnceLock};

use serde::{Deserialize, Serialize};

use crate::error::{ensure_positive, Error, Result};
use crate::measure::{DiscretePath, ElementRef, GaussianMeasureSpec, Reference, TimeGrid};
use crate::rng;
use crate::variational::{self, Metric, MinimizeOptions};

pub type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// Scalar drift `b` with its first two derivatives.
///
/// The second derivative is only needed for gradients of the
/// Onsager-Machlup correction `½∫b'(z) dt`.
#[derive(Clone)]
pub struct DriftModel {
    name: String,
    b: ScalarFn,
    b_prime: ScalarFn,
    b_second: ScalarFn,
}

impl fmt::Debug for DriftModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("DriftModel").field("name", &self.name).finish_non_exhaustive()
    }
}

/// Interval on which derivative pairs are spot-checked.
const DERIVATIVE_CHECK_RANGE: f64 = 2.0;
const DERIVATIVE_CHECK_POINTS: u64 = 16;
const DERIVATIVE_CHECK_TOL: f64 = 1e-6;

impl DriftModel {
    pub fn new(
        name: impl Into<String>,
        b: impl Fn(f64) -> f64 + Send + Sync + 'static,
        b_prime: impl Fn(f64) -> f64 + Send + Sync + 'static,
        b_second: impl Fn(f64) -> f64 + Send + Sync + 'static,
    ) -> Result<Self> {
        let model = Self {
            name: name.into(),
            b: Arc::new(b),
            b_prime: Arc::new(b_prime),
            b_second: Arc::new(b_second),
        };
        model.check_derivatives()?;
        Ok(model)
    }

    fn check_derivatives(&self) -> Result<()> {
        use rand::Rng;
        let mut rng = rng::stream(0x5EED_D21F, 0);
        for _ in 0..DERIVATIVE_CHECK_POINTS {
            let x = rng.random_range(-DERIVATIVE_CHECK_RANGE..DERIVATIVE_CHECK_RANGE);
            for (label, f, df) in [
                ("b'", &self.b, &self.b_prime),
                ("b''", &self.b_prime, &self.b_second),
            ] {
                let h = 1e-5 * x.abs().max(1.0);
                let fd = (f(x + h) - f(x - h)) / (2.0 * h);
                let exact = df(x);
                if !exact.is_finite() || !fd.is_finite() {
                    return Err(Error::Input(format!("drift `{}`: {label} not finite at {x}", self.name)));
                }
                if (fd - exact).abs() > DERIVATIVE_CHECK_TOL * exact.abs().max(1.0) {
                    return Err(Error::Input(format!(
                        "drift `{}`: {label}({x}) = {exact} but finite differences give {fd}",
                        self.name
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn b(&self, x: f64) -> f64 {
        (self.b)(x)
    }

    pub fn b_prime(&self, x: f64) -> f64 {
        (self.b_prime)(x)
    }

    pub fn b_second(&self, x: f64) -> f64 {
        (self.b_second)(x)
    }
}

/// Small-noise SDE `dX = b(X) dt + ε dB`, `X(0) = start`.
///
/// Its path functionals are finite only on paths with `z(0) = start`; the
/// centered element `z − start` is what lives in the Wiener Cameron-Martin
/// space.
#[derive(Debug, Clone)]
pub struct Sde {
    pub drift: DriftModel,
    pub start: f64,
}

impl Sde {
    pub fn new(drift: DriftModel, start: f64) -> Self {
        Self { drift, start }
    }

    pub fn from_origin(drift: DriftModel) -> Self {
        Self { drift, start: 0.0 }
    }

    /// Tilting expansion acting on centered elements `y = z − start`.
    pub fn expansion(&self, grid: &TimeGrid) -> TiltingExpansion {
        let dt = grid.dt();
        let f0 = SdeTiltF0 { drift: self.drift.clone(), offset: self.start, dt };
        let f2 = SdeTiltF2 { drift: self.drift.clone(), offset: self.start, dt };
        TiltingExpansion {
            terms: vec![Arc::new(f0), Arc::new(ZeroFunctional), Arc::new(f2)],
            remainder: None,
            moment_params: vec![1.0; 3],
        }
    }
}

/// Extended-real functional value with its labeled addends.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FunctionalValue {
    pub value: f64,
    pub components: Vec<(String, f64)>,
}

impl FunctionalValue {
    pub fn from_components(components: Vec<(&str, f64)>) -> Self {
        let value = if components.iter().any(|(_, v)| *v == f64::INFINITY) {
            f64::INFINITY
        } else {
            components.iter().map(|(_, v)| v).sum()
        };
        Self { value, components: components.into_iter().map(|(k, v)| (k.to_string(), v)).collect() }
    }

    pub fn component(&self, label: &str) -> Option<f64> {
        self.components.iter().find(|(k, _)| k == label).map(|(_, v)| *v)
    }

    pub fn is_infinite(&self) -> bool {
        self.value == f64::INFINITY
    }
}

/// Real-valued function of element coordinates with an analytic gradient.
pub trait Functional: Send + Sync {
    fn value(&self, x: &[f64]) -> f64;

    /// Writes `∂J/∂x_k` into `grad` and returns `J(x)`.
    fn value_and_gradient(&self, x: &[f64], grad: &mut [f64]) -> f64;
}

#[derive(Debug, Clone, Copy, Default)]
pub struct ZeroFunctional;

impl Functional for ZeroFunctional {
    fn value(&self, _: &[f64]) -> f64 {
        0.0
    }

    fn value_and_gradient(&self, _: &[f64], grad: &mut [f64]) -> f64 {
        grad.iter_mut().for_each(|g| *g = 0.0);
        0.0
    }
}

/// `factor · J`.
pub struct Scaled<F> {
    pub factor: f64,
    pub inner: F,
}

impl<F: Functional> Functional for Scaled<F> {
    fn value(&self, x: &[f64]) -> f64 {
        self.factor * self.inner.value(x)
    }

    fn value_and_gradient(&self, x: &[f64], grad: &mut [f64]) -> f64 {
        let v = self.inner.value_and_gradient(x, grad);
        grad.iter_mut().for_each(|g| *g *= self.factor);
        self.factor * v
    }
}

type ValueFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;
type GradientFn = Arc<dyn Fn(&[f64], &mut [f64]) + Send + Sync>;

/// Functional built from closures. Without an explicit gradient, central
/// finite differences are used (step `1e-6·max(1, |x_k|)`).
#[derive(Clone)]
pub struct FnFunctional {
    value: ValueFn,
    gradient: Option<GradientFn>,
}

impl FnFunctional {
    pub fn new(value: impl Fn(&[f64]) -> f64 + Send + Sync + 'static) -> Self {
        Self { value: Arc::new(value), gradient: None }
    }

    pub fn with_gradient(
        value: impl Fn(&[f64]) -> f64 + Send + Sync + 'static,
        gradient: impl Fn(&[f64], &mut [f64]) + Send + Sync + 'static,
    ) -> Self {
        Self { value: Arc::new(value), gradient: Some(Arc::new(gradient)) }
    }
}

impl Functional for FnFunctional {
    fn value(&self, x: &[f64]) -> f64 {
        (self.value)(x)
    }

    fn value_and_gradient(&self, x: &[f64], grad: &mut [f64]) -> f64 {
        match &self.gradient {
            Some(g) => g(x, grad),
            None => {
                let mut probe = x.to_vec();
                for k in 0..x.len() {
                    let h = 1e-6 * x[k].abs().max(1.0);
                    probe[k] = x[k] + h;
                    let up = (self.value)(&probe);
                    probe[k] = x[k] - h;
                    let down = (self.value)(&probe);
                    probe[k] = x[k];
                    grad[k] = (up - down) / (2.0 * h);
                }
            }
        }
        (self.value)(x)
    }
}

/// ε-dependent remainder `R_n(ε, ·)` of a tilting expansion.
pub trait Remainder: Send + Sync {
    fn value(&self, eps: f64, x: &[f64]) -> f64;
}

/// `F^ε = Σ_{i≤n} (εⁱ/i!) F_i + εⁿ R_n(ε, ·)`.
///
/// The moment parameters `γ_i` are recorded as declared by the caller and
/// are not verified.
#[derive(Clone)]
pub struct TiltingExpansion {
    terms: Vec<Arc<dyn Functional>>,
    remainder: Option<Arc<dyn Remainder>>,
    moment_params: Vec<f64>,
}

impl fmt::Debug for TiltingExpansion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("TiltingExpansion")
            .field("order", &self.order())
            .field("has_remainder", &self.remainder.is_some())
            .field("moment_params", &self.moment_params)
            .finish()
    }
}

impl TiltingExpansion {
    pub fn new(
        terms: Vec<Arc<dyn Functional>>,
        remainder: Option<Arc<dyn Remainder>>,
        moment_params: Vec<f64>,
    ) -> Result<Self> {
        if terms.is_empty() {
            return Err(Error::Structure("an expansion needs at least F_0".into()));
        }
        if moment_params.len() != terms.len() {
            return Err(Error::Structure(format!(
                "{} terms but {} moment parameters",
                terms.len(),
                moment_params.len()
            )));
        }
        for (i, g) in moment_params.iter().enumerate() {
            ensure_positive(&format!("gamma_{i}"), *g)?;
        }
        Ok(Self { terms, remainder, moment_params })
    }

    /// `F^ε ≡ 0`: the untilted Gaussian.
    pub fn zero() -> Self {
        Self { terms: vec![Arc::new(ZeroFunctional)], remainder: None, moment_params: vec![1.0] }
    }

    pub fn order(&self) -> usize {
        self.terms.len() - 1
    }

    pub fn term(&self, i: usize) -> &dyn Functional {
        self.terms[i].as_ref()
    }

    pub fn leading(&self) -> &dyn Functional {
        self.terms[0].as_ref()
    }

    pub fn moment_params(&self) -> &[f64] {
        &self.moment_params
    }

    pub fn evaluate(&self, eps: f64, x: &[f64]) -> f64 {
        let mut total = 0.0;
        let mut weight = 1.0;
        for (i, term) in self.terms.iter().enumerate() {
            if i > 0 {
                weight *= eps / i as f64;
            }
            total += weight * term.value(x);
        }
        if let Some(r) = &self.remainder {
            total += eps.powi(self.order() as i32) * r.value(eps, x);
        }
        total
    }
}

/// Exponentially tilted Gaussian `μ^ε ∝ exp(−F^ε/ε²) μ₀^ε`.
///
/// The infimum `inf(F₀ + ½‖·‖²)` that normalizes the rate function is found
/// numerically the first time it is requested and cached.
pub struct TiltedMeasure {
    spec: GaussianMeasureSpec,
    expansion: TiltingExpansion,
    shift: OnceLock<InfShift>,
    shift_options: MinimizeOptions,
}

/// Numerical estimate of `inf(F₀ + ½‖·‖²)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InfShift {
    pub value: f64,
    pub argmin: Vec<f64>,
    pub grad_norm: f64,
    pub tolerance: f64,
    pub converged: bool,
    pub starts: usize,
}

impl TiltedMeasure {
    pub fn new(spec: GaussianMeasureSpec, expansion: TiltingExpansion) -> Result<Self> {
        let zero = vec![0.0; spec.dimension()];
        let f0 = expansion.leading().value(&zero);
        if !f0.is_finite() {
            return Err(Error::Domain(format!("F_0 is not finite at the zero element ({f0})")));
        }
        Ok(Self { spec, expansion, shift: OnceLock::new(), shift_options: MinimizeOptions::default() })
    }

    pub fn with_shift_options(mut self, options: MinimizeOptions) -> Self {
        self.shift_options = options;
        self
    }

    pub fn spec(&self) -> &GaussianMeasureSpec {
        &self.spec
    }

    pub fn expansion(&self) -> &TiltingExpansion {
        &self.expansion
    }

    /// `OM_ε(z) = F^ε(z)/ε² + ‖z‖²/(2ε²)`, `+∞` off the Cameron-Martin space.
    pub fn om<'a>(&self, z: impl Into<ElementRef<'a>>, eps: f64) -> Result<FunctionalValue> {
        ensure_positive("eps", eps)?;
        let z = z.into();
        let norm = self.spec.cm_norm_sq(z)?;
        let eps2 = eps * eps;
        let tilt = self.expansion.evaluate(eps, z.values()) / eps2;
        Ok(FunctionalValue::from_components(vec![("tilt", tilt), ("cm_half_norm", 0.5 * norm / eps2)]))
    }

    /// `F₀(z) + ½‖z‖²`, minus the cached infimum when `shifted`.
    pub fn fw<'a>(&self, z: impl Into<ElementRef<'a>>, shifted: bool) -> Result<FunctionalValue> {
        let z = z.into();
        let norm = self.spec.cm_norm_sq(z)?;
        let f0 = self.expansion.leading().value(z.values());
        let mut components = vec![("f0", f0), ("cm_half_norm", 0.5 * norm)];
        if shifted {
            components.push(("shift", -self.inf_shift().value));
        }
        Ok(FunctionalValue::from_components(components))
    }

    /// `F₀ + ½‖·‖²` as an objective on raw coordinates.
    pub fn rate_objective(&self) -> RateObjective<'_> {
        RateObjective { measure: self }
    }

    pub fn inf_shift(&self) -> &InfShift {
        self.shift.get_or_init(|| self.compute_shift())
    }

    fn compute_shift(&self) -> InfShift {
        const RANDOM_STARTS: u64 = 4;
        let dim = self.spec.dimension();
        let (metric, free) = match self.spec.reference() {
            Reference::WienerPath(grid) => {
                let mut free = vec![true; dim];
                free[0] = false;
                (Metric::Wiener { dt: grid.dt(), horizon: grid.horizon() }, free)
            }
            Reference::DiagonalSequence(w) => (Metric::Diagonal(w.clone()), vec![true; dim]),
        };
        let unit = self.spec.scale(1.0).expect("unit noise scale is valid");
        let mut starts = vec![vec![0.0; dim]];
        starts.extend((0..RANDOM_STARTS).map(|i| unit.sample_one(0xC0FF_EE00, i).values().to_vec()));
        let objective = self.rate_objective();
        let mut best: Option<variational::DescentOutcome> = None;
        for start in &starts {
            let outcome = variational::descend(&objective, start.clone(), &free, &metric, &self.shift_options);
            if best.as_ref().is_none_or(|b| outcome.value < b.value) {
                best = Some(outcome);
            }
        }
        let best = best.expect("at least one start");
        InfShift {
            value: best.value,
            argmin: best.values,
            grad_norm: best.grad_norm,
            tolerance: self.shift_options.tol,
            converged: best.converged,
            starts: starts.len(),
        }
    }
}

/// `F₀ + ½‖·‖²` of a [`TiltedMeasure`].
pub struct RateObjective<'a> {
    measure: &'a TiltedMeasure,
}

impl Functional for RateObjective<'_> {
    fn value(&self, x: &[f64]) -> f64 {
        self.measure.expansion.leading().value(x) + 0.5 * self.measure.spec.cm_norm_sq_values(x)
    }

    fn value_and_gradient(&self, x: &[f64], grad: &mut [f64]) -> f64 {
        let f0 = self.measure.expansion.leading().value_and_gradient(x, grad);
        let mut cm = vec![0.0; x.len()];
        self.measure.spec.cm_norm_sq_gradient(x, &mut cm);
        for (g, c) in grad.iter_mut().zip(&cm) {
            *g += 0.5 * c;
        }
        f0 + 0.5 * self.measure.spec.cm_norm_sq_values(x)
    }
}

/// `OM_{μ^ε}(z)` for an expansion over `spec`.
pub fn om_tilted<'a>(
    spec: &GaussianMeasureSpec,
    expansion: &TiltingExpansion,
    z: impl Into<ElementRef<'a>>,
    eps: f64,
) -> Result<FunctionalValue> {
    TiltedMeasure::new(spec.clone(), expansion.clone())?.om(z, eps)
}

/// Unshifted `F₀(z) + ½‖z‖²`. Use [`TiltedMeasure::fw`] for the shifted
/// value so the infimum is cached across calls.
pub fn fw_tilted<'a>(
    spec: &GaussianMeasureSpec,
    expansion: &TiltingExpansion,
    z: impl Into<ElementRef<'a>>,
) -> Result<FunctionalValue> {
    TiltedMeasure::new(spec.clone(), expansion.clone())?.fw(z, false)
}

/// Expansion of the SDE `dX = b(X) dt + ε dB` started at 0, relative to the
/// Wiener measure on `grid`.
pub fn sde_expansion(drift: &DriftModel, grid: &TimeGrid) -> TiltingExpansion {
    Sde::from_origin(drift.clone()).expansion(grid)
}

/// `F₀(y) = −Σ b̄_i Δy_i + ½ Σ b̄_i² Δt`, drift evaluated at `offset + y`.
struct SdeTiltF0 {
    drift: DriftModel,
    offset: f64,
    dt: f64,
}

impl Functional for SdeTiltF0 {
    fn value(&self, y: &[f64]) -> f64 {
        let b: Vec<f64> = y.iter().map(|v| self.drift.b(self.offset + v)).collect();
        (0..y.len() - 1)
            .map(|i| {
                let bm = 0.5 * (b[i] + b[i + 1]);
                -bm * (y[i + 1] - y[i]) + 0.5 * bm * bm * self.dt
            })
            .sum()
    }

    fn value_and_gradient(&self, y: &[f64], grad: &mut [f64]) -> f64 {
        let n = y.len() - 1;
        let b: Vec<f64> = y.iter().map(|v| self.drift.b(self.offset + v)).collect();
        let bp: Vec<f64> = y.iter().map(|v| self.drift.b_prime(self.offset + v)).collect();
        grad.iter_mut().for_each(|g| *g = 0.0);
        let mut total = 0.0;
        for i in 0..n {
            let bm = 0.5 * (b[i] + b[i + 1]);
            let dy = y[i + 1] - y[i];
            total += -bm * dy + 0.5 * bm * bm * self.dt;
            // ∂/∂b̄_i of the interval term, times ∂b̄_i/∂y = b'/2 at each end
            let dterm = -dy + bm * self.dt;
            grad[i] += 0.5 * bp[i] * dterm + bm;
            grad[i + 1] += 0.5 * bp[i + 1] * dterm - bm;
        }
        total
    }
}

/// `F₂(y) = ∫ b'(offset + y) dt` by the trapezoid rule.
struct SdeTiltF2 {
    drift: DriftModel,
    offset: f64,
    dt: f64,
}

impl Functional for SdeTiltF2 {
    fn value(&self, y: &[f64]) -> f64 {
        trapezoid(self.dt, y.iter().map(|v| self.drift.b_prime(self.offset + v)))
    }

    fn value_and_gradient(&self, y: &[f64], grad: &mut [f64]) -> f64 {
        let last = y.len() - 1;
        for (k, (g, v)) in grad.iter_mut().zip(y).enumerate() {
            let w = if k == 0 || k == last { 0.5 } else { 1.0 };
            *g = self.dt * w * self.drift.b_second(self.offset + v);
        }
        self.value(y)
    }
}

fn trapezoid(dt: f64, values: impl ExactSizeIterator<Item = f64>) -> f64 {
    let last = values.len() - 1;
    dt * values.enumerate().map(|(k, v)| if k == 0 || k == last { 0.5 * v } else { v }).sum::<f64>()
}

/// `½ Σ (d_i − b̄_i)² Δt` without the start check.
fn drift_residual(drift: &DriftModel, dt: f64, z: &[f64]) -> f64 {
    let mut prev_b = drift.b(z[0]);
    let mut total = 0.0;
    for i in 0..z.len() - 1 {
        let next_b = drift.b(z[i + 1]);
        let r = (z[i + 1] - z[i]) / dt - 0.5 * (prev_b + next_b);
        total += r * r;
        prev_b = next_b;
    }
    0.5 * total * dt
}

/// `½ ∫ b'(z) dt`, trapezoid rule.
fn half_b_prime_integral(drift: &DriftModel, dt: f64, z: &[f64]) -> f64 {
    0.5 * trapezoid(dt, z.iter().map(|v| drift.b_prime(*v)))
}

/// `OM_{X^ε}(z) = (1/2ε²) ∫ (z' − b(z))² dt + ½ ∫ b'(z) dt`.
pub fn om_sde(sde: &Sde, z: &DiscretePath, eps: f64) -> Result<FunctionalValue> {
    ensure_positive("eps", eps)?;
    let dt = z.grid().dt();
    if z.start() != sde.start {
        return Ok(FunctionalValue::from_components(vec![
            ("drift_residual", f64::INFINITY),
            ("correction", half_b_prime_integral(&sde.drift, dt, z.values())),
        ]));
    }
    Ok(FunctionalValue::from_components(vec![
        ("drift_residual", drift_residual(&sde.drift, dt, z.values()) / (eps * eps)),
        ("correction", half_b_prime_integral(&sde.drift, dt, z.values())),
    ]))
}

/// `FW_X(z) = ½ ∫ (z' − b(z))² dt`, `+∞` unless `z(0)` is the SDE start.
pub fn fw_sde(sde: &Sde, z: &DiscretePath) -> FunctionalValue {
    let value = if z.start() != sde.start {
        f64::INFINITY
    } else {
        drift_residual(&sde.drift, z.grid().dt(), z.values())
    };
    FunctionalValue::from_components(vec![("drift_residual", value)])
}

/// `½ ∫ b'(z(t)) dt`: the part of `ε²·OM_ε` that vanishes as `ε → 0`,
/// divided by `ε²`.
pub fn om_correction(sde: &Sde, z: &DiscretePath) -> f64 {
    half_b_prime_integral(&sde.drift, z.grid().dt(), z.values())
}

/// `ε²·OM_ε(z) − FW(z)`; equals `ε²·om_correction(z)` up to round-off.
pub fn pointwise_gap(sde: &Sde, z: &DiscretePath, eps: f64) -> Result<f64> {
    let om = om_sde(sde, z, eps)?;
    Ok(eps * eps * om.value - fw_sde(sde, z).value)
}

/// `½ ‖z − H(z)‖²` for a map `H` into the Cameron-Martin space.
pub fn fw_girsanov_residual<'a>(
    spec: &GaussianMeasureSpec,
    h: impl Fn(&[f64]) -> Vec<f64>,
    z: impl Into<ElementRef<'a>>,
) -> Result<FunctionalValue> {
    let z = z.into();
    let own = spec.cm_norm_sq(z)?;
    let hz = h(z.values());
    if hz.len() != z.values().len() {
        return Err(Error::Structure(format!(
            "H(z) has {} coordinates, expected {}",
            hz.len(),
            z.values().len()
        )));
    }
    if own == f64::INFINITY {
        return Ok(FunctionalValue::from_components(vec![("residual_half_norm", f64::INFINITY)]));
    }
    let diff: Vec<f64> = z.values().iter().zip(&hz).map(|(a, b)| a - b).collect();
    Ok(FunctionalValue::from_components(vec![("residual_half_norm", 0.5 * spec.cm_norm_sq_values(&diff))]))
}

/// `H(z)(t_k) = ∫₀^{t_k} b(z(s)) ds`, cumulative trapezoid rule.
pub fn drift_integral(drift: &DriftModel, dt: f64, z: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(z.len());
    let mut acc = 0.0;
    let mut prev_b = drift.b(z[0]);
    out.push(0.0);
    for v in &z[1..] {
        let next_b = drift.b(*v);
        acc += 0.5 * (prev_b + next_b) * dt;
        out.push(acc);
        prev_b = next_b;
    }
    out
}

/// Discretization of the stochastic integral `∫ b(z) dz`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IntegralScheme {
    /// Left endpoint: `Σ b(z_i) Δz_i`.
    ItoLeft,
    /// Trapezoid: `Σ b̄_i Δz_i`.
    StratonovichTrapezoid,
}

pub fn stochastic_integral(drift: &DriftModel, path: &DiscretePath, scheme: IntegralScheme) -> f64 {
    let z = path.values();
    match scheme {
        IntegralScheme::ItoLeft => z.windows(2).map(|w| drift.b(w[0]) * (w[1] - w[0])).sum(),
        IntegralScheme::StratonovichTrapezoid => {
            z.windows(2).map(|w| 0.5 * (drift.b(w[0]) + drift.b(w[1])) * (w[1] - w[0])).sum()
        }
    }
}

/// `log dμ^ε/dμ₀^ε = (1/ε²)(∫ b dz − ½ ∫ b² dt)` along `path`.
///
/// `ItoLeft` uses left endpoints throughout and is an exact discrete
/// martingale weight. `StratonovichTrapezoid` uses the trapezoid means and
/// subtracts the conversion term `(ε²/2) ∫ b'`, so that
/// `ε²·log_density = −F^ε` for the SDE expansion.
pub fn girsanov_log_density(
    drift: &DriftModel,
    path: &DiscretePath,
    eps: f64,
    scheme: IntegralScheme,
) -> Result<f64> {
    ensure_positive("eps", eps)?;
    let dt = path.grid().dt();
    let z = path.values();
    let eps2 = eps * eps;
    let exponent = match scheme {
        IntegralScheme::ItoLeft => z
            .windows(2)
            .map(|w| {
                let b = drift.b(w[0]);
                b * (w[1] - w[0]) - 0.5 * b * b * dt
            })
            .sum::<f64>(),
        IntegralScheme::StratonovichTrapezoid => {
            let main: f64 = z
                .windows(2)
                .map(|w| {
                    let bm = 0.5 * (drift.b(w[0]) + drift.b(w[1]));
                    bm * (w[1] - w[0]) - 0.5 * bm * bm * dt
                })
                .sum();
            main - 0.5 * eps2 * trapezoid(dt, z.iter().map(|v| drift.b_prime(*v)))
        }
    };
    Ok(exponent / eps2)
}

/// `FW + w·½∫b'` on raw nodal values: `w = 0` is the Freidlin-Wentzell
/// action and `w = ε²` is `ε²·OM_ε`.
#[derive(Debug, Clone)]
pub struct SdeAction {
    sde: Sde,
    dt: f64,
    correction_weight: f64,
}

impl SdeAction {
    pub fn fw(sde: &Sde, grid: &TimeGrid) -> Self {
        Self { sde: sde.clone(), dt: grid.dt(), correction_weight: 0.0 }
    }

    /// `ε²·OM_ε`; same minimizers as `OM_ε`.
    pub fn scaled_om(sde: &Sde, grid: &TimeGrid, eps: f64) -> Result<Self> {
        ensure_positive("eps", eps)?;
        Ok(Self { sde: sde.clone(), dt: grid.dt(), correction_weight: eps * eps })
    }

    pub fn correction_weight(&self) -> f64 {
        self.correction_weight
    }
}

impl Functional for SdeAction {
    fn value(&self, z: &[f64]) -> f64 {
        if z[0] != self.sde.start {
            return f64::INFINITY;
        }
        let mut v = drift_residual(&self.sde.drift, self.dt, z);
        if self.correction_weight != 0.0 {
            v += self.correction_weight * half_b_prime_integral(&self.sde.drift, self.dt, z);
        }
        v
    }

    fn value_and_gradient(&self, z: &[f64], grad: &mut [f64]) -> f64 {
        let n = z.len() - 1;
        let dt = self.dt;
        let drift = &self.sde.drift;
        let b: Vec<f64> = z.iter().map(|v| drift.b(*v)).collect();
        let bp: Vec<f64> = z.iter().map(|v| drift.b_prime(*v)).collect();
        let r: Vec<f64> = (0..n).map(|i| (z[i + 1] - z[i]) / dt - 0.5 * (b[i] + b[i + 1])).collect();
        for k in 0..=n {
            let mut g = 0.0;
            if k > 0 {
                g += r[k - 1] * (1.0 - 0.5 * dt * bp[k]);
            }
            if k < n {
                g -= r[k] * (1.0 + 0.5 * dt * bp[k]);
            }
            grad[k] = g;
        }
        let mut value = 0.5 * dt * r.iter().map(|x| x * x).sum::<f64>();
        if self.correction_weight != 0.0 {
            for (k, g) in grad.iter_mut().enumerate() {
                let w = if k == 0 || k == n { 0.5 } else { 1.0 };
                *g += self.correction_weight * 0.5 * dt * w * drift.b_second(z[k]);
            }
            value += self.correction_weight * 0.5 * trapezoid(dt, bp.iter().copied());
        }
        if z[0] != self.sde.start {
            return f64::INFINITY;
        }
        value
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::zoo::{preset_drift, DriftPreset};

    fn grid(n: usize) -> TimeGrid {
        TimeGrid::new(1.0, n).unwrap()
    }

    fn ou() -> Sde {
        Sde::from_origin(preset_drift(DriftPreset::Ou { theta: 1.0 }).unwrap())
    }

    #[test]
    fn drift_derivative_mismatch_is_rejected() {
        let bad = DriftModel::new("bad", |x| x * x, |x| x, |_| 1.0);
        assert!(matches!(bad, Err(Error::Input(_))));
    }

    #[test]
    fn functional_value_sums_components() {
        let v = FunctionalValue::from_components(vec![("a", 1.5), ("b", -0.25)]);
        assert_eq!(v.value, 1.25);
        assert_eq!(v.component("b"), Some(-0.25));
        let inf = FunctionalValue::from_components(vec![("a", 1.0), ("b", f64::INFINITY)]);
        assert!(inf.is_infinite());
    }

    #[test]
    fn om_and_fw_closed_forms_for_ou_on_linear_path() {
        let g = grid(1000);
        let z = DiscretePath::from_fn(g, |t| t).unwrap();
        let sde = ou();
        let om = om_sde(&sde, &z, 0.5).unwrap();
        assert!((om.value - 25.0 / 6.0).abs() < 1e-6, "{}", om.value);
        assert!((om.component("correction").unwrap() + 0.5).abs() < 1e-12);
        assert!((fw_sde(&sde, &z).value - 7.0 / 6.0).abs() < 1e-6);
        assert!((pointwise_gap(&sde, &z, 0.5).unwrap() + 0.125).abs() < 1e-9);
    }

    #[test]
    fn zero_drift_and_zero_path() {
        let g = grid(50);
        let zero = Sde::from_origin(preset_drift(DriftPreset::Zero).unwrap());
        let z0 = DiscretePath::zeros(g);
        assert_eq!(om_sde(&zero, &z0, 0.3).unwrap().value, 0.0);
        let z = DiscretePath::from_fn(g, |t| (3.0 * t).sin()).unwrap();
        assert_eq!(pointwise_gap(&zero, &z, 0.7).unwrap(), 0.0);
        let dw = Sde::from_origin(preset_drift(DriftPreset::DoubleWell).unwrap());
        assert_eq!(fw_sde(&dw, &z0).value, 0.0);
    }

    #[test]
    fn om_rejects_nonpositive_eps() {
        let z = DiscretePath::zeros(grid(4));
        assert!(om_sde(&ou(), &z, 0.0).is_err());
        assert!(om_sde(&ou(), &z, -1.0).is_err());
        let drift = preset_drift(DriftPreset::Zero).unwrap();
        assert!(girsanov_log_density(&drift, &z, 0.0, IntegralScheme::ItoLeft).is_err());
    }

    #[test]
    fn functionals_are_infinite_off_the_pinned_start() {
        let g = grid(20);
        let z = DiscretePath::from_fn(g, |t| 0.1 + t).unwrap();
        let sde = ou();
        assert!(om_sde(&sde, &z, 0.5).unwrap().is_infinite());
        assert!(fw_sde(&sde, &z).is_infinite());
        let spec = GaussianMeasureSpec::wiener(g, 0.5).unwrap();
        let expansion = sde_expansion(&sde.drift, &g);
        assert!(om_tilted(&spec, &expansion, &z, 0.5).unwrap().is_infinite());
        assert!(fw_tilted(&spec, &expansion, &z).unwrap().is_infinite());
        assert!(fw_girsanov_residual(&spec, |v| v.to_vec(), &z).unwrap().is_infinite());
        assert_eq!(SdeAction::fw(&sde, &g).value(z.values()), f64::INFINITY);
    }

    #[test]
    fn sde_expansion_leading_term_closed_form() {
        let g = grid(10_000);
        let z = DiscretePath::from_fn(g, |t| t).unwrap();
        let expansion = sde_expansion(&ou().drift, &g);
        assert_eq!(expansion.order(), 2);
        let f0 = expansion.leading().value(z.values());
        assert!((f0 - 2.0 / 3.0).abs() < 1e-9, "{f0}");
        assert_eq!(expansion.term(1).value(z.values()), 0.0);
        assert!((expansion.term(2).value(z.values()) + 1.0).abs() < 1e-12);
        let spec = GaussianMeasureSpec::wiener(g, 1.0).unwrap();
        let fw = fw_tilted(&spec, &expansion, &z).unwrap().value;
        assert!((fw - 7.0 / 6.0).abs() < 1e-6);
    }

    #[test]
    fn zero_expansion_reduces_to_gaussian() {
        let g = grid(1000);
        let spec = GaussianMeasureSpec::wiener(g, 0.5).unwrap();
        let zero = TiltingExpansion::zero();
        assert_eq!(om_tilted(&spec, &zero, &DiscretePath::zeros(g), 0.5).unwrap().value, 0.0);
        let line = DiscretePath::from_fn(g, |t| t).unwrap();
        assert!((om_tilted(&spec, &zero, &line, 0.5).unwrap().value - 2.0).abs() < 1e-9);
        assert!((fw_tilted(&spec, &zero, &line).unwrap().value - 0.5).abs() < 1e-9);
        let sde_like = sde_expansion(&preset_drift(DriftPreset::Zero).unwrap(), &g);
        assert_eq!(sde_like.evaluate(0.3, line.values()), 0.0);
    }

    #[test]
    fn expansion_uses_factorial_weights() {
        let constant = |c: f64| -> Arc<dyn Functional> { Arc::new(FnFunctional::new(move |_| c)) };
        let exp = TiltingExpansion::new(
            vec![constant(1.0), constant(1.0), constant(1.0), constant(1.0)],
            None,
            vec![1.0; 4],
        )
        .unwrap();
        let eps: f64 = 0.3;
        let expected = 1.0 + eps + eps * eps / 2.0 + eps.powi(3) / 6.0;
        assert!((exp.evaluate(eps, &[0.0]) - expected).abs() < 1e-15);
        assert!(TiltingExpansion::new(vec![constant(0.0)], None, vec![]).is_err());
        assert!(TiltingExpansion::new(vec![constant(0.0)], None, vec![-1.0]).is_err());
    }

    #[test]
    fn correction_examples() {
        let g = grid(100);
        let ou2 = Sde::from_origin(preset_drift(DriftPreset::Ou { theta: 2.0 }).unwrap());
        let z = DiscretePath::from_fn(g, |t| t * t - 0.3 * t).unwrap();
        assert!((om_correction(&ou2, &z) + 1.0).abs() < 1e-12);
        let dw = Sde::from_origin(preset_drift(DriftPreset::DoubleWell).unwrap());
        assert!((om_correction(&dw, &DiscretePath::zeros(g)) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn girsanov_residual_identity_map_and_zero_map() {
        let g = grid(200);
        let spec = GaussianMeasureSpec::wiener(g, 1.0).unwrap();
        let z = DiscretePath::from_fn(g, |t| (2.0 * t).sin()).unwrap();
        assert_eq!(fw_girsanov_residual(&spec, |v| v.to_vec(), &z).unwrap().value, 0.0);
        let half = 0.5 * spec.cm_norm_sq(&z).unwrap();
        let zero_h = fw_girsanov_residual(&spec, |v| vec![0.0; v.len()], &z).unwrap().value;
        assert!((zero_h - half).abs() < 1e-14);
        assert!(fw_girsanov_residual(&spec, |_| vec![0.0; 3], &z).is_err());
    }

    #[test]
    fn girsanov_residual_with_drift_integral_matches_fw() {
        let g = grid(1000);
        let spec = GaussianMeasureSpec::wiener(g, 1.0).unwrap();
        let z = DiscretePath::from_fn(g, |t| t).unwrap();
        let sde = ou();
        let dt = g.dt();
        let r = fw_girsanov_residual(&spec, |v| drift_integral(&sde.drift, dt, v), &z).unwrap();
        assert!((r.value - 7.0 / 6.0).abs() < 1e-6);
        assert!((r.value - fw_sde(&sde, &z).value).abs() < 1e-12);
    }

    #[test]
    fn stratonovich_integral_of_identity_is_exact() {
        let drift = preset_drift(DriftPreset::Ou { theta: -1.0 }).unwrap(); // b(x) = x
        let g = grid(37);
        let z = DiscretePath::from_fn(g, |t| (5.0 * t).sin() + t * t).unwrap();
        let s = stochastic_integral(&drift, &z, IntegralScheme::StratonovichTrapezoid);
        assert!((s - 0.5 * z.terminal().powi(2)).abs() < 1e-8);
    }

    #[test]
    fn stratonovich_log_density_is_minus_tilt_exponent() {
        let g = grid(300);
        let dw = preset_drift(DriftPreset::DoubleWell).unwrap();
        let z = DiscretePath::from_fn(g, |t| 0.8 * (3.0 * t).sin()).unwrap();
        let eps = 0.4;
        let log_density = girsanov_log_density(&dw, &z, eps, IntegralScheme::StratonovichTrapezoid).unwrap();
        let f_eps = sde_expansion(&dw, &g).evaluate(eps, z.values());
        assert!((eps * eps * log_density + f_eps).abs() < 1e-12);
        let zero = preset_drift(DriftPreset::Zero).unwrap();
        for scheme in [IntegralScheme::ItoLeft, IntegralScheme::StratonovichTrapezoid] {
            assert_eq!(girsanov_log_density(&zero, &z, eps, scheme).unwrap(), 0.0);
        }
    }

    #[test]
    fn shifted_fw_subtracts_cached_infimum() {
        let g = grid(64);
        let spec = GaussianMeasureSpec::wiener(g, 1.0).unwrap();
        let measure = TiltedMeasure::new(spec, sde_expansion(&ou().drift, &g)).unwrap();
        // OU from 0 with free end: the infimum is attained by z ≡ 0 and is 0.
        let shift = measure.inf_shift();
        assert!(shift.converged);
        assert!(shift.value.abs() < 1e-12, "{}", shift.value);
        let z = DiscretePath::from_fn(g, |t| t).unwrap();
        let shifted = measure.fw(&z, true).unwrap();
        let unshifted = measure.fw(&z, false).unwrap();
        assert!((shifted.value - unshifted.value + shift.value).abs() < 1e-15);
        assert!(std::ptr::eq(shift, measure.inf_shift()));
    }
}
