//! Minimization of discretized path functionals, small-noise sweeps of the
//! Onsager-Machlup mode and numerical Γ-convergence diagnostics.
//!
//! The optimizer is gradient descent in the Cameron-Martin metric: the raw
//! nodal gradient `g` is preconditioned by the tridiagonal stiffness matrix
//! of `½‖·‖²`, which makes the step size independent of the grid. Steps are
//! chosen by Armijo backtracking. Convergence is declared when the
//! `L²`-scaled gradient `max_k |g_k|/Δt` over free nodes is at most `tol`;
//! at a stationary point of a path functional this is the sup-norm of the
//! discrete Euler-Lagrange residual.

use std::cmp::Ordering;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{ensure_finite, ensure_positive, Error, Result};
use crate::measure::{DiscretePath, TimeGrid};
use crate::numeric::{solve_tridiagonal, sup_norm};
use crate::rng;
use crate::tilt::{Functional, Sde, SdeAction};

/// Endpoint pins of a path minimization.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Constraints {
    #[serde(default = "default_pin_start")]
    pub pin_start: Option<f64>,
    #[serde(default)]
    pub pin_end: Option<f64>,
}

fn default_pin_start() -> Option<f64> {
    Some(0.0)
}

impl Default for Constraints {
    fn default() -> Self {
        Self { pin_start: Some(0.0), pin_end: None }
    }
}

impl Constraints {
    pub fn pinned(start: f64, end: f64) -> Self {
        Self { pin_start: Some(start), pin_end: Some(end) }
    }

    pub fn start_only(start: f64) -> Self {
        Self { pin_start: Some(start), pin_end: None }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, pin) in [("pin_start", self.pin_start), ("pin_end", self.pin_end)] {
            if let Some(v) = pin {
                ensure_finite(name, &[v])?;
            }
        }
        Ok(())
    }

    fn check(&self, path: &DiscretePath) -> Result<()> {
        self.validate()?;
        if let Some(s) = self.pin_start {
            if path.start() != s {
                return Err(Error::Domain(format!("start value {} violates pin_start = {s}", path.start())));
            }
        }
        if let Some(e) = self.pin_end {
            if path.terminal() != e {
                return Err(Error::Domain(format!("terminal value {} violates pin_end = {e}", path.terminal())));
            }
        }
        Ok(())
    }

    fn free_mask(&self, nodes: usize) -> Vec<bool> {
        let mut free = vec![true; nodes];
        if self.pin_start.is_some() {
            free[0] = false;
        }
        if self.pin_end.is_some() {
            free[nodes - 1] = false;
        }
        free
    }

    /// Straight line between the pins, or the constant start value.
    pub fn straight_line(&self, grid: TimeGrid) -> Result<DiscretePath> {
        let start = self.pin_start.unwrap_or(0.0);
        DiscretePath::straight(grid, start, self.pin_end.unwrap_or(start))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MinimizeOptions {
    pub tol: f64,
    pub max_iter: usize,
    pub armijo_c1: f64,
    pub initial_step: f64,
    pub max_backtracks: usize,
    /// Local minima closer than this in sup-norm are merged by `multi_start`.
    pub dedup_radius: f64,
    pub record_history: bool,
}

impl Default for MinimizeOptions {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            max_iter: 100_000,
            armijo_c1: 1e-4,
            initial_step: 1.0,
            max_backtracks: 60,
            dedup_radius: 1e-4,
            record_history: false,
        }
    }
}

impl MinimizeOptions {
    pub fn with_tol(mut self, tol: f64) -> Self {
        self.tol = tol;
        self
    }

    pub fn validate(&self) -> Result<()> {
        ensure_positive("tol", self.tol)?;
        ensure_positive("initial_step", self.initial_step)?;
        ensure_positive("dedup_radius", self.dedup_radius)?;
        if !(self.armijo_c1 > 0.0 && self.armijo_c1 < 0.5) {
            return Err(Error::Input(format!("armijo_c1 must lie in (0, 0.5), got {}", self.armijo_c1)));
        }
        if self.max_iter == 0 || self.max_backtracks == 0 {
            return Err(Error::Input("max_iter and max_backtracks must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MinimizeResult {
    pub path: DiscretePath,
    pub value: f64,
    pub grad_norm: f64,
    pub iterations: usize,
    pub converged: bool,
    pub start_label: String,
    /// Objective value before each iteration, when requested.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub history: Option<Vec<f64>>,
}

/// Inner-product geometry used to precondition the gradient.
#[derive(Debug, Clone, PartialEq)]
pub enum Metric {
    /// `½‖z‖² = ½ Σ (Δz)²/Δt`; gradients are reported divided by `Δt`.
    Wiener { dt: f64, horizon: f64 },
    /// `½ Σ z_n²/a_n²`.
    Diagonal(Vec<f64>),
    Euclidean,
}

impl Metric {
    fn gradient_scale(&self) -> f64 {
        match self {
            Metric::Wiener { dt, .. } => *dt,
            _ => 1.0,
        }
    }

    /// Descent direction `−M⁻¹ g` restricted to the free coordinates.
    fn direction(&self, grad: &[f64], free: &[bool]) -> Vec<f64> {
        let mut p = vec![0.0; grad.len()];
        match self {
            Metric::Wiener { dt, horizon } => {
                let idx: Vec<usize> = (0..grad.len()).filter(|&k| free[k]).collect();
                if idx.is_empty() {
                    return p;
                }
                debug_assert!(idx.windows(2).all(|w| w[1] == w[0] + 1), "free nodes must be contiguous");
                let m = idx.len();
                let last = grad.len() - 1;
                // Hessian of ½‖z‖² on the free block; a mass term keeps it
                // invertible when the start is free.
                let mass = if free[0] { dt / (horizon * horizon) } else { 0.0 };
                let diag: Vec<f64> = idx
                    .iter()
                    .map(|&k| {
                        let neighbors = (k > 0) as u8 + (k < last) as u8;
                        f64::from(neighbors) / dt + mass
                    })
                    .collect();
                let off = vec![-1.0 / dt; m];
                let mut rhs: Vec<f64> = idx.iter().map(|&k| -grad[k]).collect();
                solve_tridiagonal(&off, &diag, &off, &mut rhs);
                for (&k, v) in idx.iter().zip(rhs) {
                    p[k] = v;
                }
            }
            Metric::Diagonal(w) => {
                for k in 0..grad.len() {
                    if free[k] {
                        p[k] = -w[k] * w[k] * grad[k];
                    }
                }
            }
            Metric::Euclidean => {
                for k in 0..grad.len() {
                    if free[k] {
                        p[k] = -grad[k];
                    }
                }
            }
        }
        p
    }
}

#[derive(Debug, Clone)]
pub(crate) struct DescentOutcome {
    pub values: Vec<f64>,
    pub value: f64,
    pub grad_norm: f64,
    pub iterations: usize,
    pub converged: bool,
    pub history: Option<Vec<f64>>,
}

fn free_sup(grad: &[f64], free: &[bool], scale: f64) -> f64 {
    grad.iter().zip(free).filter(|(_, f)| **f).fold(0.0_f64, |m, (g, _)| m.max((g / scale).abs()))
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Largest rise of the objective, relative to `max(|f|, 1)`, that an accepted
/// step may show.
pub const ROUNDOFF_SLACK: f64 = 8.0 * f64::EPSILON;

pub fn roundoff_slack(value: f64) -> f64 {
    ROUNDOFF_SLACK * value.abs().max(1.0)
}

/// Preconditioned gradient descent with Armijo backtracking.
///
/// When the Armijo decrease is below the resolution of `f`, a step is still
/// accepted if `f` rises by at most `ROUNDOFF_SLACK·max(|f|, 1)` and the
/// directional derivative has dropped to `(1 − 2c₁)|gᵀp|` (approximate Wolfe
/// test). Iterate values are non-increasing up to that slack; insisting on
/// exact monotonicity stalls well above a 1e-8 gradient tolerance on fine
/// grids, where the remaining decrease is below the resolution of `f`.
pub(crate) fn descend(
    objective: &dyn Functional,
    mut x: Vec<f64>,
    free: &[bool],
    metric: &Metric,
    opts: &MinimizeOptions,
) -> DescentOutcome {
    let n = x.len();
    let scale = metric.gradient_scale();
    let mut grad = vec![0.0; n];
    let mut value = objective.value_and_gradient(&x, &mut grad);
    let mut history = opts.record_history.then(Vec::new);
    let mut step = opts.initial_step;
    let mut trial = vec![0.0; n];
    let mut trial_grad = vec![0.0; n];
    let mut iterations = 0;
    let mut grad_norm = free_sup(&grad, free, scale);
    while grad_norm > opts.tol && iterations < opts.max_iter {
        if let Some(h) = history.as_mut() {
            h.push(value);
        }
        let p = metric.direction(&grad, free);
        let slope = dot(&grad, &p);
        if slope >= 0.0 {
            break;
        }
        let slack = roundoff_slack(value);
        let mut alpha = (2.0 * step).min(opts.initial_step.max(1.0) * 1e3);
        let mut accepted = None;
        for _ in 0..opts.max_backtracks {
            for k in 0..n {
                trial[k] = x[k] + alpha * p[k];
            }
            let trial_value = objective.value_and_gradient(&trial, &mut trial_grad);
            if trial_value.is_finite() {
                let armijo = trial_value <= value + opts.armijo_c1 * alpha * slope;
                let flat = trial_value <= value + slack
                    && dot(&trial_grad, &p) <= (1.0 - 2.0 * opts.armijo_c1) * slope.abs();
                if armijo || flat {
                    accepted = Some(trial_value);
                    break;
                }
            }
            alpha *= 0.5;
        }
        let Some(new_value) = accepted else { break };
        debug_assert!(new_value <= value + slack, "objective increased: {value} -> {new_value}");
        std::mem::swap(&mut x, &mut trial);
        std::mem::swap(&mut grad, &mut trial_grad);
        value = new_value;
        step = alpha;
        iterations += 1;
        grad_norm = free_sup(&grad, free, scale);
    }
    if let Some(h) = history.as_mut() {
        h.push(value);
    }
    DescentOutcome { values: x, value, grad_norm, iterations, converged: grad_norm <= opts.tol, history }
}

/// Minimizes a path functional over the free nodes of `init`.
pub fn minimize(
    objective: &dyn Functional,
    init: &DiscretePath,
    constraints: &Constraints,
    opts: &MinimizeOptions,
) -> Result<MinimizeResult> {
    minimize_labeled(objective, init, constraints, opts, "init")
}

fn minimize_labeled(
    objective: &dyn Functional,
    init: &DiscretePath,
    constraints: &Constraints,
    opts: &MinimizeOptions,
    label: &str,
) -> Result<MinimizeResult> {
    opts.validate()?;
    constraints.check(init)?;
    let v0 = objective.value(init.values());
    if !v0.is_finite() {
        return Err(Error::Domain(format!("objective is {v0} at the initial path `{label}`")));
    }
    let grid = *init.grid();
    let free = constraints.free_mask(grid.node_count());
    let metric = Metric::Wiener { dt: grid.dt(), horizon: grid.horizon() };
    let out = descend(objective, init.values().to_vec(), &free, &metric, opts);
    Ok(MinimizeResult {
        path: DiscretePath::new(grid, out.values)?,
        value: out.value,
        grad_norm: out.grad_norm,
        iterations: out.iterations,
        converged: out.converged,
        start_label: label.to_string(),
        history: out.history,
    })
}

fn lexicographic(a: &[f64], b: &[f64]) -> Ordering {
    a.iter().zip(b).map(|(x, y)| x.total_cmp(y)).find(|o| o.is_ne()).unwrap_or(Ordering::Equal)
}

/// Runs `minimize` from every start and returns the distinct local minima,
/// sorted by value with ties broken lexicographically on nodal values.
pub fn multi_start(
    objective: &dyn Functional,
    starts: &[DiscretePath],
    constraints: &Constraints,
    opts: &MinimizeOptions,
) -> Result<Vec<MinimizeResult>> {
    if starts.is_empty() {
        return Err(Error::Input("multi_start needs at least one start".into()));
    }
    let mut results = starts
        .par_iter()
        .enumerate()
        .map(|(i, s)| minimize_labeled(objective, s, constraints, opts, &format!("start_{i}")))
        .collect::<Result<Vec<_>>>()?;
    results.sort_by(|a, b| a.value.total_cmp(&b.value).then_with(|| lexicographic(a.path.values(), b.path.values())));
    let mut distinct: Vec<MinimizeResult> = Vec::new();
    for r in results {
        let duplicate = distinct
            .iter()
            .any(|d| d.path.sup_distance(&r.path).map(|x| x <= opts.dedup_radius).unwrap_or(false));
        if !duplicate {
            distinct.push(r);
        }
    }
    Ok(distinct)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpsSweepEntry {
    pub eps: f64,
    pub mode: MinimizeResult,
    /// `ε²·OM_ε` at the mode.
    pub scaled_om: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpsSweepResult {
    pub entries: Vec<EpsSweepEntry>,
    pub fw_mode: MinimizeResult,
    pub distances: Vec<f64>,
}

pub(crate) fn check_decreasing(name: &str, values: &[f64]) -> Result<()> {
    if values.is_empty() {
        return Err(Error::Input(format!("{name} must be non-empty")));
    }
    for v in values {
        ensure_positive(name, *v)?;
    }
    if values.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::Input(format!("{name} must be strictly decreasing")));
    }
    Ok(())
}

/// OM modes along a decreasing `ε` ladder, each warm-started from the
/// previous one, and their sup-norm distances to the FW mode from `init`.
pub fn eps_sweep(
    sde: &Sde,
    init: &DiscretePath,
    constraints: &Constraints,
    eps_list: &[f64],
    opts: &MinimizeOptions,
) -> Result<EpsSweepResult> {
    check_decreasing("eps_list", eps_list)?;
    let grid = *init.grid();
    let fw_mode = minimize_labeled(&SdeAction::fw(sde, &grid), init, constraints, opts, "init")?;
    let mut entries = Vec::with_capacity(eps_list.len());
    let mut distances = Vec::with_capacity(eps_list.len());
    let mut warm = init.clone();
    let mut label = "init".to_string();
    for &eps in eps_list {
        let objective = SdeAction::scaled_om(sde, &grid, eps)?;
        let mode = minimize_labeled(&objective, &warm, constraints, opts, &label)?;
        distances.push(mode.path.sup_distance(&fw_mode.path)?);
        warm = mode.path.clone();
        label = format!("warm_eps_{eps}");
        entries.push(EpsSweepEntry { eps, scaled_om: mode.value, mode });
    }
    Ok(EpsSweepResult { entries, fw_mode, distances })
}

/// Which stationarity equation `euler_lagrange_residual` checks.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ElMode {
    Fw,
    Om { eps: f64 },
}

/// Sup over interior nodes of the discrete Euler-Lagrange residual of
/// `z'' = b b' (+ (ε²/2) b'')`, in the stencil consistent with the
/// trapezoid discretization of the action.
pub fn euler_lagrange_residual(sde: &Sde, z: &DiscretePath, mode: ElMode) -> f64 {
    let n = z.grid().intervals();
    let dt = z.grid().dt();
    let v = z.values();
    let drift = &sde.drift;
    let b: Vec<f64> = v.iter().map(|x| drift.b(*x)).collect();
    let correction = match mode {
        ElMode::Fw => 0.0,
        ElMode::Om { eps } => 0.5 * eps * eps,
    };
    (1..n)
        .map(|k| {
            let bp = drift.b_prime(v[k]);
            let zpp = (v[k + 1] - 2.0 * v[k] + v[k - 1]) / (dt * dt);
            let b_avg = (b[k - 1] + 2.0 * b[k] + b[k + 1]) / 4.0;
            let transport = bp * (v[k + 1] - v[k - 1]) / (2.0 * dt) - (b[k + 1] - b[k - 1]) / (2.0 * dt);
            let mut r = zpp - bp * b_avg + transport;
            if correction != 0.0 {
                r -= correction * drift.b_second(v[k]);
            }
            r.abs()
        })
        .fold(0.0, f64::max)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GammaOptions {
    pub probes: usize,
    pub seed: u64,
}

impl Default for GammaOptions {
    fn default() -> Self {
        Self { probes: 256, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GammaRadius {
    pub radius: f64,
    /// `(ε, min over probes of J_ε)` in the order of the `ε` list.
    pub infima: Vec<(f64, f64)>,
    /// Min and max of the infima over the trailing half of the `ε` list.
    pub liminf_estimate: f64,
    pub limsup_estimate: f64,
    /// Linear extrapolation in `ε²` from the last two infima.
    pub extrapolated: f64,
    /// `max(0, limit(z) − liminf_estimate)`.
    pub slack: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GammaReport {
    pub limit_value: f64,
    pub radii: Vec<GammaRadius>,
    /// Constant recovery sequence `J_ε(z)`.
    pub recovery: Vec<(f64, f64)>,
    pub recovery_limit: f64,
    pub recovery_gap: f64,
    pub probes: usize,
}

fn eps_sq_extrapolate(points: &[(f64, f64)]) -> f64 {
    match points {
        [] => f64::NAN,
        [(_, v)] => *v,
        [.., (e1, v1), (e2, v2)] => {
            let (s1, s2) = (e1 * e1, e2 * e2);
            (v2 * s1 - v1 * s2) / (s1 - s2)
        }
    }
}

/// Root of `x^{d+1} = x + 1`, the generalized golden ratio of dimension `d`.
fn harmonious(d: usize) -> f64 {
    let mut x: f64 = 2.0;
    for _ in 0..64 {
        x = (1.0 + x).powf(1.0 / (d as f64 + 1.0));
    }
    x
}

/// Probe perturbations in the sup-norm ball of radius `r`, zero at pinned
/// nodes. Index 0 is the center; odd indices are nodewise quasi-random
/// points, even indices smooth sine-mode combinations.
pub(crate) struct ProbeSet {
    free: Vec<bool>,
    horizon_nodes: usize,
    nodal_alpha: Vec<f64>,
    modal_alpha: Vec<f64>,
}

const PROBE_MODES: usize = 8;

impl ProbeSet {
    pub(crate) fn new(free: Vec<bool>) -> Self {
        let d = free.iter().filter(|f| **f).count().max(1);
        let g = harmonious(d);
        let nodal_alpha = (1..=d).map(|k| g.powi(-(k as i32)).fract()).collect();
        let gm = harmonious(PROBE_MODES);
        let modal_alpha = (1..=PROBE_MODES).map(|k| gm.powi(-(k as i32)).fract()).collect();
        Self { horizon_nodes: free.len(), free, nodal_alpha, modal_alpha }
    }

    pub(crate) fn perturbation(&self, index: usize, radius: f64, offset: f64) -> Vec<f64> {
        let mut p = vec![0.0; self.horizon_nodes];
        if index == 0 {
            return p;
        }
        let j = (index / 2) as f64;
        if index % 2 == 1 {
            let mut a = self.nodal_alpha.iter();
            for (k, f) in self.free.iter().enumerate() {
                if *f {
                    let u = (offset + j * a.next().unwrap()).fract();
                    p[k] = radius * (2.0 * u - 1.0);
                }
            }
        } else {
            let coeffs: Vec<f64> = self.modal_alpha.iter().map(|a| 2.0 * (offset + j * a).fract() - 1.0).collect();
            let last = (self.horizon_nodes - 1) as f64;
            for (k, f) in self.free.iter().enumerate() {
                if *f {
                    let s = k as f64 / last;
                    p[k] = coeffs
                        .iter()
                        .enumerate()
                        .map(|(m, c)| c * ((m + 1) as f64 * std::f64::consts::PI * s).sin() / (m + 1) as f64)
                        .sum();
                }
            }
            let sup = sup_norm(&p);
            if sup > 0.0 {
                p.iter_mut().for_each(|v| *v *= radius / sup);
            }
        }
        p
    }
}

/// Estimates Γ-lower and Γ-upper limits of `family(ε)` at `z` from sampled
/// neighborhood infima, and checks the constant recovery sequence against
/// the candidate limit.
///
/// The neighborhood infimum is a minimum over probe points, hence an upper
/// bound on the true infimum; the report cannot certify a Γ-limit.
pub fn gamma_diagnostic<F, J>(
    family: F,
    limit: &dyn Functional,
    z: &DiscretePath,
    constraints: &Constraints,
    radii: &[f64],
    eps_list: &[f64],
    opts: &GammaOptions,
) -> Result<GammaReport>
where
    F: Fn(f64) -> Result<J> + Sync,
    J: Functional,
{
    check_decreasing("radii", radii)?;
    check_decreasing("eps_list", eps_list)?;
    constraints.check(z)?;
    if opts.probes == 0 {
        return Err(Error::Input("probes must be positive".into()));
    }
    let limit_value = limit.value(z.values());
    let probes = ProbeSet::new(constraints.free_mask(z.values().len()));
    let offset = {
        let mut r = rng::stream(opts.seed, 0);
        r.random::<f64>()
    };
    let trailing = eps_list.len() - eps_list.len() / 2;
    let members = eps_list.iter().map(|&e| family(e)).collect::<Result<Vec<J>>>()?;

    let radii = radii
        .iter()
        .map(|&radius| {
            let infima: Vec<(f64, f64)> = eps_list
                .iter()
                .zip(&members)
                .map(|(&eps, j)| {
                    let inf = (0..opts.probes)
                        .into_par_iter()
                        .map(|i| {
                            let p = probes.perturbation(i, radius, offset);
                            let x: Vec<f64> = z.values().iter().zip(&p).map(|(a, b)| a + b).collect();
                            j.value(&x)
                        })
                        .reduce(|| f64::INFINITY, f64::min);
                    (eps, inf)
                })
                .collect();
            let tail = &infima[infima.len() - trailing..];
            let liminf_estimate = tail.iter().map(|p| p.1).fold(f64::INFINITY, f64::min);
            let limsup_estimate = tail.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max);
            GammaRadius {
                radius,
                extrapolated: eps_sq_extrapolate(&infima),
                slack: (limit_value - liminf_estimate).max(0.0),
                infima,
                liminf_estimate,
                limsup_estimate,
            }
        })
        .collect();

    let recovery: Vec<(f64, f64)> = eps_list.iter().zip(&members).map(|(&e, j)| (e, j.value(z.values()))).collect();
    let recovery_limit = eps_sq_extrapolate(&recovery);
    Ok(GammaReport {
        limit_value,
        radii,
        recovery_gap: (recovery_limit - limit_value).abs(),
        recovery,
        recovery_limit,
        probes: opts.probes,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoercivityReport {
    /// `(R, min over directions of J(center + R·u))`.
    pub growth: Vec<(f64, f64)>,
    /// The minimum grew strictly with `R`.
    pub growing: bool,
}

/// Heuristic sublevel-boundedness probe along smooth random directions of
/// unit sup-norm. Growth along finitely many directions is necessary, not
/// sufficient, for coercivity.
pub fn coercivity_probe(
    objective: &dyn Functional,
    center: &DiscretePath,
    constraints: &Constraints,
    scales: &[f64],
    directions: usize,
    seed: u64,
) -> Result<CoercivityReport> {
    constraints.check(center)?;
    if scales.is_empty() || scales.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Input("scales must be non-empty and strictly increasing".into()));
    }
    let probes = ProbeSet::new(constraints.free_mask(center.values().len()));
    let offset = rng::stream(seed, 1).random::<f64>();
    let growth: Vec<(f64, f64)> = scales
        .iter()
        .map(|&scale| {
            let worst = (0..directions)
                .into_par_iter()
                .map(|i| {
                    let p = probes.perturbation(2 * (i + 1), scale, offset);
                    let x: Vec<f64> = center.values().iter().zip(&p).map(|(a, b)| a + b).collect();
                    objective.value(&x)
                })
                .reduce(|| f64::INFINITY, f64::min);
            (scale, worst)
        })
        .collect();
    let growing = growth.windows(2).all(|w| w[1].1 > w[0].1);
    Ok(CoercivityReport { growth, growing })
}
