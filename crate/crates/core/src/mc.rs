//! Monte Carlo checks: Euler-Maruyama ensembles, small-ball probability
//! ratios, rare-event decay rates and Girsanov reweighting.
//!
//! Sample `i` always draws its normals from stream `i` of the run seed, and
//! every reduction is taken over fixed chunks of consecutive samples that
//! are combined in index order. Results therefore do not depend on the
//! number of worker threads. Paths are regenerated on demand rather than
//! stored.

use std::fmt;
use std::io::Write;
use std::ops::Range;
use std::sync::Arc;

use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{ensure_finite, ensure_positive, Error, Result};
use crate::measure::{DiscretePath, TimeGrid};
use crate::numeric::CompensatedSum;
use crate::rng;
use crate::tilt::{girsanov_log_density, DriftModel, IntegralScheme, Sde, SdeAction};
use crate::variational::{self, check_decreasing, Constraints, MinimizeOptions};

const CHUNK: u64 = 4096;

/// Maps `f` over consecutive chunks of `0..count` in parallel and returns
/// the per-chunk results in index order.
fn chunked<T: Send>(count: u64, f: impl Fn(Range<u64>) -> T + Sync) -> Vec<T> {
    let chunks = count.div_ceil(CHUNK);
    (0..chunks).into_par_iter().map(|c| f(c * CHUNK..((c + 1) * CHUNK).min(count))).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    EulerMaruyama,
}

/// Lazily generated Euler-Maruyama ensemble of `dX = b(X) dt + ε dB`.
#[derive(Debug, Clone)]
pub struct Ensemble {
    drift: DriftModel,
    eps: f64,
    grid: TimeGrid,
    start: f64,
    count: u64,
    seed: u64,
    scheme: Scheme,
}

/// `X_{i+1} = X_i + b(X_i)Δt + ε√Δt ξ_i`; `ε = 0` gives the Euler flow.
pub fn simulate(sde: &Sde, eps: f64, grid: TimeGrid, count: u64, seed: u64) -> Result<Ensemble> {
    if !(eps >= 0.0) || !eps.is_finite() {
        return Err(Error::Input(format!("eps must be finite and non-negative, got {eps}")));
    }
    ensure_finite("start", &[sde.start])?;
    if count == 0 {
        return Err(Error::Input("ensemble count must be at least 1".into()));
    }
    Ok(Ensemble { drift: sde.drift.clone(), eps, grid, start: sde.start, count, seed, scheme: Scheme::EulerMaruyama })
}

impl Ensemble {
    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn scheme(&self) -> Scheme {
        self.scheme
    }

    /// Writes path `index` into `out` (length `n + 1`).
    fn fill(&self, index: u64, out: &mut [f64]) {
        let mut rng = rng::stream(self.seed, index);
        let dt = self.grid.dt();
        let noise = self.eps * dt.sqrt();
        let mut x = self.start;
        out[0] = x;
        for slot in &mut out[1..] {
            let xi: f64 = StandardNormal.sample(&mut rng);
            x = x + self.drift.b(x) * dt + noise * xi;
            *slot = x;
        }
    }

    pub fn path(&self, index: u64) -> DiscretePath {
        let mut values = vec![0.0; self.grid.node_count()];
        self.fill(index, &mut values);
        DiscretePath::new(self.grid, values).expect("simulated path has the ensemble grid")
    }

    pub fn paths(&self) -> Vec<DiscretePath> {
        (0..self.count).into_par_iter().map(|i| self.path(i)).collect()
    }

    /// Folds every path of each chunk into an accumulator; accumulators are
    /// returned in chunk order.
    pub fn fold_chunks<A: Send>(&self, init: impl Fn() -> A + Sync, step: impl Fn(&mut A, &[f64]) + Sync) -> Vec<A> {
        chunked(self.count, |range| {
            let mut acc = init();
            let mut buf = vec![0.0; self.grid.node_count()];
            for i in range {
                self.fill(i, &mut buf);
                step(&mut acc, &buf);
            }
            acc
        })
    }

    /// CSV with header `sample_id,t,value`, one row per node.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "sample_id,t,value")?;
        let nodes = self.grid.nodes();
        let mut buf = vec![0.0; nodes.len()];
        for i in 0..self.count {
            self.fill(i, &mut buf);
            for (t, v) in nodes.iter().zip(&buf) {
                writeln!(out, "{i},{t},{v}")?;
            }
        }
        Ok(())
    }
}

/// Ratio `μ(B_δ(z₁))/μ(B_δ(z₂))` estimated from hit counts in sup-norm
/// balls over grid nodes.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RatioEstimate {
    pub delta: f64,
    pub hits_1: u64,
    pub hits_2: u64,
    pub hits_both: u64,
    pub count: u64,
    /// `None` when `hits_2 = 0`.
    pub point_estimate: Option<f64>,
    pub ci_low: Option<f64>,
    pub ci_high: Option<f64>,
    /// Half-width of the 95% interval for the log-ratio.
    pub log_half_width: Option<f64>,
    /// `hits_2` is below [`HIT_FLOOR`].
    pub below_floor: bool,
}

pub const HIT_FLOOR: u64 = 100;
const Z95: f64 = 1.959_963_984_540_054;

impl RatioEstimate {
    fn from_counts(delta: f64, hits_1: u64, hits_2: u64, hits_both: u64, count: u64) -> Self {
        let below_floor = hits_2 < HIT_FLOOR;
        let undefined = Self {
            delta,
            hits_1,
            hits_2,
            hits_both,
            count,
            point_estimate: None,
            ci_low: None,
            ci_high: None,
            log_half_width: None,
            below_floor,
        };
        if hits_2 == 0 {
            return undefined;
        }
        let ratio = hits_1 as f64 / hits_2 as f64;
        if hits_1 == 0 {
            // rule of three for the numerator
            return Self {
                point_estimate: Some(0.0),
                ci_low: Some(0.0),
                ci_high: Some(3.0 / hits_2 as f64),
                ..undefined
            };
        }
        let n = count as f64;
        let (p1, p2, p12) = (hits_1 as f64 / n, hits_2 as f64 / n, hits_both as f64 / n);
        let var = ((1.0 - p1) / p1 + (1.0 - p2) / p2 - 2.0 * (p12 - p1 * p2) / (p1 * p2)) / n;
        let half = Z95 * var.max(0.0).sqrt();
        Self {
            point_estimate: Some(ratio),
            ci_low: Some(ratio * (-half).exp()),
            ci_high: Some(ratio * half.exp()),
            log_half_width: Some(half),
            ..undefined
        }
    }

    pub fn log_ratio(&self) -> Option<f64> {
        self.point_estimate.filter(|r| *r > 0.0).map(f64::ln)
    }
}

fn check_on_grid(ensemble: &Ensemble, z: &DiscretePath, name: &str) -> Result<()> {
    if z.grid() != ensemble.grid() {
        return Err(Error::Structure(format!("{name} is not on the ensemble grid")));
    }
    Ok(())
}

/// Ratio estimates for every `δ` of a ladder from one pass over the
/// ensemble.
pub fn small_ball_ladder(
    ensemble: &Ensemble,
    z1: &DiscretePath,
    z2: &DiscretePath,
    deltas: &[f64],
) -> Result<Vec<RatioEstimate>> {
    check_on_grid(ensemble, z1, "z1")?;
    check_on_grid(ensemble, z2, "z2")?;
    if deltas.is_empty() {
        return Err(Error::Input("at least one ball radius is needed".into()));
    }
    for d in deltas {
        ensure_positive("delta", *d)?;
    }
    let (a, b) = (z1.values(), z2.values());
    let k = deltas.len();
    let counts = ensemble.fold_chunks(
        || vec![[0u64; 3]; k],
        |acc, x| {
            let mut d1: f64 = 0.0;
            let mut d2: f64 = 0.0;
            for ((xi, ai), bi) in x.iter().zip(a).zip(b) {
                d1 = d1.max((xi - ai).abs());
                d2 = d2.max((xi - bi).abs());
            }
            for (c, delta) in acc.iter_mut().zip(deltas) {
                let (h1, h2) = (d1 <= *delta, d2 <= *delta);
                c[0] += h1 as u64;
                c[1] += h2 as u64;
                c[2] += (h1 && h2) as u64;
            }
        },
    );
    let mut total = vec![[0u64; 3]; k];
    for chunk in counts {
        for (t, c) in total.iter_mut().zip(chunk) {
            for j in 0..3 {
                t[j] += c[j];
            }
        }
    }
    Ok(deltas
        .iter()
        .zip(total)
        .map(|(d, [h1, h2, h12])| RatioEstimate::from_counts(*d, h1, h2, h12, ensemble.count()))
        .collect())
}

pub fn small_ball_ratio(ensemble: &Ensemble, z1: &DiscretePath, z2: &DiscretePath, delta: f64) -> Result<RatioEstimate> {
    Ok(small_ball_ladder(ensemble, z1, z2, &[delta])?.remove(0))
}

/// Default ball radii, in units of the path scale.
pub const DEFAULT_DELTA_LADDER: [f64; 4] = [0.8, 0.6, 0.4, 0.3];

/// Path event tested on grid nodes.
#[derive(Clone)]
pub enum Event {
    TerminalAtLeast(f64),
    SupAtLeast(f64),
    Always,
    Custom(Arc<dyn Fn(&[f64]) -> bool + Send + Sync>),
}

impl fmt::Debug for Event {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Event::TerminalAtLeast(c) => write!(f, "TerminalAtLeast({c})"),
            Event::SupAtLeast(c) => write!(f, "SupAtLeast({c})"),
            Event::Always => f.write_str("Always"),
            Event::Custom(_) => f.write_str("Custom"),
        }
    }
}

impl Event {
    pub fn contains(&self, values: &[f64]) -> bool {
        match self {
            Event::TerminalAtLeast(c) => values[values.len() - 1] >= *c,
            Event::SupAtLeast(c) => values.iter().any(|v| v >= c),
            Event::Always => true,
            Event::Custom(f) => f(values),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RatePoint {
    pub eps: f64,
    pub hits: u64,
    pub count: u64,
    pub p_hat: f64,
    /// `ε² log p̂`; `None` when there were no hits.
    pub scaled_log: Option<f64>,
    /// Delta-method standard error `ε² √((1 − p̂)/(N p̂))`.
    pub std_error: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RateEstimate {
    pub points: Vec<RatePoint>,
    /// Limit of `ε² log p̂` as `ε → 0`; `None` if every `p̂` is zero.
    pub extrapolated: Option<f64>,
    pub extrapolated_se: Option<f64>,
    /// Basis of the extrapolation fit.
    pub fit: String,
    pub zero_hit_eps: Vec<f64>,
}

/// `p̂(ε) = P(X^ε ∈ A)` by direct simulation for every `ε`, with common
/// random numbers across `ε`, and the extrapolated rate `lim ε² log p̂`.
///
/// The limit is the intercept of a least-squares fit of
/// `a + c ε² log ε + b ε²` (three or more usable points) or of `a + b ε²`
/// (two points). Its standard error propagates the per-point errors as if
/// independent.
pub fn ldp_rate(
    sde: &Sde,
    grid: TimeGrid,
    event: &Event,
    eps_list: &[f64],
    count: u64,
    seed: u64,
) -> Result<RateEstimate> {
    check_decreasing("eps_list", eps_list)?;
    if count == 0 {
        return Err(Error::Input("count must be at least 1".into()));
    }
    let n = grid.intervals();
    let dt = grid.dt();
    let sq = dt.sqrt();
    let drift = &sde.drift;
    let partial = chunked(count, |range| {
        let mut hits = vec![0u64; eps_list.len()];
        let mut xi = vec![0.0; n];
        let mut path = vec![0.0; n + 1];
        for i in range {
            let mut rng = rng::stream(seed, i);
            xi.iter_mut().for_each(|x| *x = StandardNormal.sample(&mut rng));
            for (h, eps) in hits.iter_mut().zip(eps_list) {
                let noise = eps * sq;
                let mut x = sde.start;
                path[0] = x;
                for (slot, e) in path[1..].iter_mut().zip(&xi) {
                    x = x + drift.b(x) * dt + noise * e;
                    *slot = x;
                }
                *h += event.contains(&path) as u64;
            }
        }
        hits
    });
    let mut hits = vec![0u64; eps_list.len()];
    for chunk in partial {
        for (h, c) in hits.iter_mut().zip(chunk) {
            *h += c;
        }
    }
    let points: Vec<RatePoint> = eps_list
        .iter()
        .zip(hits)
        .map(|(&eps, h)| {
            let p = h as f64 / count as f64;
            let usable = h > 0;
            RatePoint {
                eps,
                hits: h,
                count,
                p_hat: p,
                scaled_log: usable.then(|| eps * eps * p.ln()),
                std_error: usable.then(|| eps * eps * ((1.0 - p) / (count as f64 * p)).sqrt()),
            }
        })
        .collect();
    let zero_hit_eps = points.iter().filter(|p| p.hits == 0).map(|p| p.eps).collect();
    let (extrapolated, extrapolated_se, fit) = extrapolate(&points);
    Ok(RateEstimate { points, extrapolated, extrapolated_se, fit: fit.to_string(), zero_hit_eps })
}

fn extrapolate(points: &[RatePoint]) -> (Option<f64>, Option<f64>, &'static str) {
    let usable: Vec<(f64, f64, f64)> = points
        .iter()
        .filter_map(|p| Some((p.eps, p.scaled_log?, p.std_error?)))
        .collect();
    match usable.len() {
        0 => (None, None, "none"),
        1 => (Some(usable[0].1), Some(usable[0].2), "single point"),
        2 => {
            let rows: Vec<Vec<f64>> = usable.iter().map(|(e, _, _)| vec![1.0, e * e]).collect();
            let (a, se) = intercept(&rows, &usable);
            (a, se, "a + b eps^2")
        }
        _ => {
            let rows: Vec<Vec<f64>> = usable.iter().map(|(e, _, _)| vec![1.0, e * e * e.ln(), e * e]).collect();
            let (a, se) = intercept(&rows, &usable);
            (a, se, "a + c eps^2 ln eps + b eps^2")
        }
    }
}

/// Intercept of the least-squares fit and its propagated standard error.
fn intercept(rows: &[Vec<f64>], data: &[(f64, f64, f64)]) -> (Option<f64>, Option<f64>) {
    let k = rows[0].len();
    // normal matrix augmented with the first unit vector: solving gives the
    // first row of (XᵀX)⁻¹, whose product with Xᵀ is the intercept weight.
    let mut m = vec![vec![0.0; k + 1]; k];
    for r in rows {
        for i in 0..k {
            for j in 0..k {
                m[i][j] += r[i] * r[j];
            }
        }
    }
    m[0][k] = 1.0;
    for col in 0..k {
        let pivot = (col..k).max_by(|&a, &b| m[a][col].abs().total_cmp(&m[b][col].abs())).unwrap();
        if m[pivot][col].abs() < 1e-300 {
            return (None, None);
        }
        m.swap(col, pivot);
        for row in 0..k {
            if row != col {
                let f = m[row][col] / m[col][col];
                for j in col..=k {
                    m[row][j] -= f * m[col][j];
                }
            }
        }
    }
    let e0: Vec<f64> = (0..k).map(|i| m[i][k] / m[i][i]).collect();
    let weights: Vec<f64> = rows.iter().map(|r| r.iter().zip(&e0).map(|(x, e)| x * e).sum()).collect();
    let a = weights.iter().zip(data).map(|(w, d)| w * d.1).sum();
    let se = weights.iter().zip(data).map(|(w, d)| (w * d.2).powi(2)).sum::<f64>().sqrt();
    (Some(a), Some(se))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FwInfimum {
    pub value: f64,
    pub path: DiscretePath,
    pub candidates: usize,
}

const LEVELS: usize = 8;
const HITTING_TIMES: usize = 16;

/// `inf {FW(z) : z(0) = start, z ∈ A}` for `A` = {terminal ≥ c} or
/// {sup ≥ c}, by pinned minimizations over a grid of terminal levels or
/// hitting times.
pub fn fw_infimum_over_event(sde: &Sde, grid: TimeGrid, event: &Event, opts: &MinimizeOptions) -> Result<FwInfimum> {
    let free_end = Constraints::start_only(sde.start);
    let flow = variational::minimize(&SdeAction::fw(sde, &grid), &free_end.straight_line(grid)?, &free_end, opts)?;
    match event {
        Event::Always => Ok(FwInfimum { value: flow.value, path: flow.path, candidates: 1 }),
        Event::Custom(_) => Err(Error::Unsupported("fw_infimum_over_event supports terminal and sup events".into())),
        Event::TerminalAtLeast(c) | Event::SupAtLeast(c) if event.contains(flow.path.values()) => {
            ensure_finite("level", &[*c])?;
            Ok(FwInfimum { value: flow.value, path: flow.path, candidates: 1 })
        }
        Event::TerminalAtLeast(c) => {
            ensure_finite("level", &[*c])?;
            let spacing = 0.25 * c.abs().max(1.0);
            let mut best: Option<(f64, DiscretePath)> = None;
            let mut warm: Option<DiscretePath> = None;
            for j in 0..=LEVELS {
                let level = c + j as f64 * spacing;
                let pins = Constraints::pinned(sde.start, level);
                let init = match &warm {
                    Some(w) => shift_terminal(w, level)?,
                    None => pins.straight_line(grid)?,
                };
                let r = variational::minimize(&SdeAction::fw(sde, &grid), &init, &pins, opts)?;
                if best.as_ref().is_none_or(|(v, _)| r.value < *v) {
                    best = Some((r.value, r.path.clone()));
                }
                warm = Some(r.path);
            }
            let (value, path) = best.expect("at least one level");
            Ok(FwInfimum { value, path, candidates: LEVELS + 1 })
        }
        Event::SupAtLeast(c) => {
            ensure_finite("level", &[*c])?;
            let n = grid.intervals();
            let mut ks: Vec<usize> = (1..=HITTING_TIMES).map(|j| (j * n).div_ceil(HITTING_TIMES).max(1)).collect();
            ks.dedup();
            let mut best: Option<(f64, DiscretePath)> = None;
            for &k in &ks {
                let head_grid = grid.prefix(k)?;
                let pins = Constraints::pinned(sde.start, *c);
                let head = variational::minimize(&SdeAction::fw(sde, &head_grid), &pins.straight_line(head_grid)?, &pins, opts)?;
                let mut values = head.path.values().to_vec();
                let mut value = head.value;
                if k < n {
                    let tail_grid = TimeGrid::new(grid.horizon() - head_grid.horizon(), n - k)?;
                    let tail_sde = Sde::new(sde.drift.clone(), *c);
                    let tail_pins = Constraints::start_only(*c);
                    let tail = variational::minimize(
                        &SdeAction::fw(&tail_sde, &tail_grid),
                        &tail_pins.straight_line(tail_grid)?,
                        &tail_pins,
                        opts,
                    )?;
                    value += tail.value;
                    values.extend_from_slice(&tail.path.values()[1..]);
                }
                if best.as_ref().is_none_or(|(v, _)| value < *v) {
                    best = Some((value, DiscretePath::new(grid, values)?));
                }
            }
            let (value, path) = best.expect("at least one hitting time");
            Ok(FwInfimum { value, path, candidates: ks.len() })
        }
    }
}

fn shift_terminal(path: &DiscretePath, level: f64) -> Result<DiscretePath> {
    let n = path.grid().intervals() as f64;
    let delta = level - path.terminal();
    let mut values: Vec<f64> = path.values().iter().enumerate().map(|(k, v)| v + delta * k as f64 / n).collect();
    *values.last_mut().unwrap() = level;
    DiscretePath::new(*path.grid(), values)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MeanEstimate {
    pub mean: f64,
    pub std_error: f64,
    pub count: u64,
}

/// `E[exp(log density)]` over Wiener paths `εB` started at 0, which is 1
/// when the density is a true probability density.
pub fn girsanov_normalization(
    drift: &DriftModel,
    grid: TimeGrid,
    eps: f64,
    scheme: IntegralScheme,
    count: u64,
    seed: u64,
) -> Result<MeanEstimate> {
    ensure_positive("eps", eps)?;
    let zero = Sde::from_origin(crate::zoo::preset_drift(crate::zoo::DriftPreset::Zero)?);
    let ensemble = simulate(&zero, eps, grid, count, seed)?;
    let sums = ensemble.fold_chunks(
        || (CompensatedSum::new(), CompensatedSum::new()),
        |(s, s2), x| {
            let path = DiscretePath::new(grid, x.to_vec()).expect("ensemble grid");
            let w = girsanov_log_density(drift, &path, eps, scheme).expect("eps checked").exp();
            s.add(w);
            s2.add(w * w);
        },
    );
    let (mut s, mut s2) = (CompensatedSum::new(), CompensatedSum::new());
    for (a, b) in &sums {
        s.merge(a);
        s2.merge(b);
    }
    let n = count as f64;
    let mean = s.value() / n;
    let var = (s2.value() / n - mean * mean).max(0.0) * n / (n - 1.0).max(1.0);
    Ok(MeanEstimate { mean, std_error: (var / n).sqrt(), count })
}
