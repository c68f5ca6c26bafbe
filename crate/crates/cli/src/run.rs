//! Dispatch from a validated config to the library, plus record and CSV
//! emission. Everything written to CSV is a pure function of the config.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use mlpath::mc::{self, Event};
use mlpath::tilt::{self, SdeAction};
use mlpath::variational::{self, ElMode, GammaOptions};
use mlpath::zoo::{self, AlgebraicSystem, ScalarMap};
use mlpath::{DiscretePath, FunctionalValue, GaussianMeasureSpec, Sde, WeightedSequence};
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::*;
use crate::CliError;

#[derive(Debug, Serialize)]
pub struct RunRecord {
    pub version: &'static str,
    pub kind: &'static str,
    pub seed: u64,
    pub wall_clock_seconds: f64,
    /// The parsed config; re-parses to an equal config.
    pub config: ExperimentConfig,
    pub results: Value,
    /// CSV files written next to the record, by file name.
    pub files: Vec<String>,
}

/// CSV file assembled in memory.
struct Csv {
    name: &'static str,
    text: String,
}

impl Csv {
    fn new(name: &'static str, header: &str) -> Self {
        Self { name, text: format!("{header}\n") }
    }

    fn row(&mut self, cells: &[String]) {
        self.text.push_str(&cells.join(","));
        self.text.push('\n');
    }
}

/// Shortest round-trip decimal; `inf`, `-inf` and `nan` for non-finite values.
fn num(x: f64) -> String {
    if x.is_finite() {
        format!("{x:?}")
    } else if x.is_nan() {
        "nan".into()
    } else if x > 0.0 {
        "inf".into()
    } else {
        "-inf".into()
    }
}

fn opt(x: Option<f64>) -> String {
    x.map(num).unwrap_or_default()
}

fn components(v: &FunctionalValue) -> Value {
    let mut map = serde_json::Map::new();
    map.insert("value".into(), json!(v.value));
    for (k, x) in &v.components {
        map.insert(k.clone(), json!(x));
    }
    Value::Object(map)
}

fn sde(model: &zoo::DriftPreset, start: f64) -> Result<Sde, CliError> {
    Ok(Sde::new(zoo::preset_drift(*model)?, start))
}

/// Long-format path table: one row per (label, node).
fn paths_csv(name: &'static str, paths: &[(String, &DiscretePath)]) -> Csv {
    let mut csv = Csv::new(name, "label,t,value");
    for (label, path) in paths {
        for (t, v) in path.grid().nodes().into_iter().zip(path.values()) {
            csv.row(&[label.clone(), num(t), num(*v)]);
        }
    }
    csv
}

pub fn run(config: &ExperimentConfig, out: &Path) -> Result<RunRecord, CliError> {
    let started = Instant::now();
    let seed = config.seed;
    let (results, files) = match &config.experiment {
        Experiment::Evaluate(c) => evaluate(c)?,
        Experiment::Minimize(c) => minimize(c)?,
        Experiment::EpsSweep(c) => eps_sweep(c)?,
        Experiment::Gamma(c) => gamma(c, seed)?,
        Experiment::McSmallball(c) => smallball(c, seed)?,
        Experiment::McLdp(c) => ldp(c, seed)?,
        Experiment::Algebraic(c) => algebraic(c, seed)?,
    };
    fs::create_dir_all(out).map_err(|e| CliError::io(out, e))?;
    let mut names = Vec::with_capacity(files.len());
    for csv in files {
        let path = out.join(csv.name);
        fs::write(&path, csv.text).map_err(|e| CliError::io(&path, e))?;
        names.push(csv.name.to_string());
    }
    let record = RunRecord {
        version: mlpath::VERSION,
        kind: config.experiment.kind(),
        seed,
        wall_clock_seconds: started.elapsed().as_secs_f64(),
        config: config.clone(),
        results,
        files: names,
    };
    let path = record_path(out);
    let text = serde_json::to_string_pretty(&record).expect("record serializes");
    fs::write(&path, text + "\n").map_err(|e| CliError::io(&path, e))?;
    Ok(record)
}

pub fn record_path(out: &Path) -> PathBuf {
    out.join("record.json")
}

type Output = Result<(Value, Vec<Csv>), CliError>;

fn evaluate(c: &EvaluateConfig) -> Output {
    let sde = sde(&c.model, c.start)?;
    let grid = c.grid.grid();
    let z = c.path.path(grid);
    let om = tilt::om_sde(&sde, &z, c.eps)?;
    let fw = tilt::fw_sde(&sde, &z);
    let gap = tilt::pointwise_gap(&sde, &z, c.eps)?;
    let results = json!({
        "om": om.value,
        "fw": fw.value,
        "gap": gap,
        "correction": tilt::om_correction(&sde, &z),
        "om_components": components(&om),
        "el_residual_fw": variational::euler_lagrange_residual(&sde, &z, ElMode::Fw),
        "el_residual_om": variational::euler_lagrange_residual(&sde, &z, ElMode::Om { eps: c.eps }),
    });
    Ok((results, vec![paths_csv("path.csv", &[("z".into(), &z)])]))
}

fn minimize(c: &MinimizeConfig) -> Output {
    let sde = sde(&c.model, c.constraints.pin_start.unwrap_or(0.0))?;
    let grid = c.grid.grid();
    let starts = if c.starts.is_empty() {
        vec![c.constraints.straight_line(grid)?]
    } else {
        c.starts.iter().map(|s| s.path(grid)).collect()
    };
    let objective = match c.eps {
        Some(eps) => SdeAction::scaled_om(&sde, &grid, eps)?,
        None => SdeAction::fw(&sde, &grid),
    };
    let minima = variational::multi_start(&objective, &starts, &c.constraints, &c.options)?;
    let mut summary = Csv::new("minima.csv", "rank,start_label,value,grad_norm,iterations,converged");
    for (i, m) in minima.iter().enumerate() {
        summary.row(&[
            i.to_string(),
            m.start_label.clone(),
            num(m.value),
            num(m.grad_norm),
            m.iterations.to_string(),
            m.converged.to_string(),
        ]);
    }
    let labeled: Vec<(String, &DiscretePath)> =
        minima.iter().enumerate().map(|(i, m)| (format!("rank_{i}"), &m.path)).collect();
    let paths = paths_csv("minima_paths.csv", &labeled);
    let results = json!({
        "objective": if c.eps.is_some() { "scaled_om" } else { "fw" },
        "minima": minima.iter().map(|m| json!({
            "start_label": m.start_label,
            "value": m.value,
            "grad_norm": m.grad_norm,
            "iterations": m.iterations,
            "converged": m.converged,
        })).collect::<Vec<_>>(),
    });
    Ok((results, vec![summary, paths]))
}

fn eps_sweep(c: &EpsSweepConfig) -> Output {
    let sde = sde(&c.model, c.constraints.pin_start.unwrap_or(0.0))?;
    let grid = c.grid.grid();
    let init = match &c.init {
        Some(p) => p.path(grid),
        None => c.constraints.straight_line(grid)?,
    };
    let sweep = variational::eps_sweep(&sde, &init, &c.constraints, &c.eps_list, &c.options)?;
    let mut table = Csv::new("eps_sweep.csv", "eps,om_value,grad_norm,iterations,dist_to_fw_mode");
    for (e, d) in sweep.entries.iter().zip(&sweep.distances) {
        table.row(&[num(e.eps), num(e.scaled_om), num(e.mode.grad_norm), e.mode.iterations.to_string(), num(*d)]);
    }
    let mut labeled = vec![("fw".to_string(), &sweep.fw_mode.path)];
    labeled.extend(sweep.entries.iter().map(|e| (format!("eps_{}", num(e.eps)), &e.mode.path)));
    let modes = paths_csv("modes.csv", &labeled);
    let results = json!({
        "fw_mode": {
            "value": sweep.fw_mode.value,
            "grad_norm": sweep.fw_mode.grad_norm,
            "iterations": sweep.fw_mode.iterations,
            "converged": sweep.fw_mode.converged,
        },
        "entries": sweep.entries.iter().zip(&sweep.distances).map(|(e, d)| json!({
            "eps": e.eps,
            "om_value": e.scaled_om,
            "grad_norm": e.mode.grad_norm,
            "iterations": e.mode.iterations,
            "converged": e.mode.converged,
            "dist_to_fw_mode": d,
        })).collect::<Vec<_>>(),
    });
    Ok((results, vec![table, modes]))
}

fn gamma(c: &GammaConfig, seed: u64) -> Output {
    let sde = sde(&c.model, c.constraints.pin_start.unwrap_or(0.0))?;
    let grid = c.grid.grid();
    let limit = SdeAction::fw(&sde, &grid);
    let init = c.constraints.straight_line(grid)?;
    let center = variational::minimize(&limit, &init, &c.constraints, &c.options)?;
    let report = variational::gamma_diagnostic(
        |eps| SdeAction::scaled_om(&sde, &grid, eps),
        &limit,
        &center.path,
        &c.constraints,
        &c.radii,
        &c.eps_list,
        &GammaOptions { probes: c.probes, seed },
    )?;
    let mut table = Csv::new("gamma.csv", "radius,eps,infimum");
    for r in &report.radii {
        for (eps, inf) in &r.infima {
            table.row(&[num(r.radius), num(*eps), num(*inf)]);
        }
    }
    let results = json!({
        "center": {"value": center.value, "grad_norm": center.grad_norm, "converged": center.converged},
        "report": report,
    });
    Ok((results, vec![table, paths_csv("center.csv", &[("fw_mode".into(), &center.path)])]))
}

fn smallball(c: &SmallBallConfig, seed: u64) -> Output {
    let sde = sde(&c.model, c.start)?;
    let grid = c.grid.grid();
    let (z1, z2) = (c.z1.path(grid), c.z2.path(grid));
    let ensemble = mc::simulate(&sde, c.eps, grid, c.count, seed)?;
    let ladder = mc::small_ball_ladder(&ensemble, &z1, &z2, &c.deltas)?;
    let mut table = Csv::new(
        "smallball.csv",
        "delta,hits_1,hits_2,hits_both,count,ratio,ci_low,ci_high,log_ratio,log_half_width,below_floor",
    );
    for r in &ladder {
        table.row(&[
            num(r.delta),
            r.hits_1.to_string(),
            r.hits_2.to_string(),
            r.hits_both.to_string(),
            r.count.to_string(),
            opt(r.point_estimate),
            opt(r.ci_low),
            opt(r.ci_high),
            opt(r.log_ratio()),
            opt(r.log_half_width),
            r.below_floor.to_string(),
        ]);
    }
    let fw_gap = tilt::fw_sde(&sde, &z2).value - tilt::fw_sde(&sde, &z1).value;
    let om_gap = tilt::om_sde(&sde, &z2, c.eps)?.value - tilt::om_sde(&sde, &z1, c.eps)?.value;
    let results = json!({
        "ladder": ladder,
        "om_log_ratio": om_gap,
        "fw_log_ratio": fw_gap / (c.eps * c.eps),
    });
    Ok((results, vec![table]))
}

fn ldp(c: &LdpConfig, seed: u64) -> Output {
    let sde = sde(&c.model, c.start)?;
    let grid = c.grid.grid();
    let event: Event = c.event.to_event();
    let rate = mc::ldp_rate(&sde, grid, &event, &c.eps_list, c.count, seed)?;
    let infimum = mc::fw_infimum_over_event(&sde, grid, &event, &c.options)?;
    let mut table = Csv::new("ldp.csv", "eps,hits,count,p_hat,scaled_log,std_error");
    for p in &rate.points {
        table.row(&[
            num(p.eps),
            p.hits.to_string(),
            p.count.to_string(),
            num(p.p_hat),
            opt(p.scaled_log),
            opt(p.std_error),
        ]);
    }
    let results = json!({
        "rate": rate,
        "fw_infimum": infimum.value,
        "fw_infimum_candidates": infimum.candidates,
    });
    Ok((results, vec![table, paths_csv("fw_minimizer.csv", &[("fw_minimizer".into(), &infimum.path)])]))
}

fn algebraic(c: &AlgebraicConfig, seed: u64) -> Output {
    let weights = c.weights.weights();
    let n = weights.len();
    let system = AlgebraicSystem::uniform(weights.clone(), ScalarMap::from_preset(c.map)?)?;
    let phi = match &c.phi {
        PhiConfig::Constant { value } => vec![*value; n],
        PhiConfig::Values { values } => values.clone(),
    };
    let fw = zoo::algebraic_fw(&system, &phi)?;
    let mut header = String::from("n,weight,phi,z");
    let solution = match c.solve_eps {
        Some(eps) => {
            let xi = GaussianMeasureSpec::diagonal(vec![1.0; n], 1.0)?.sample_one(seed, 0);
            let noise = WeightedSequence::new(weights.clone(), xi.values().to_vec())?;
            let _ = write!(header, ",xi,x");
            Some((xi, zoo::algebraic_solve(&system, &noise, eps)?))
        }
        None => None,
    };
    let mut table = Csv::new("algebraic.csv", &header);
    for i in 0..n {
        let mut row = vec![(i + 1).to_string(), num(weights[i]), num(phi[i]), num(fw.z[i])];
        if let Some((xi, sol)) = &solution {
            row.push(num(xi.values()[i]));
            row.push(num(sol.x.values()[i]));
        }
        table.row(&row);
    }
    let results = json!({
        "fw": fw.value,
        "solve": solution.as_ref().map(|(_, s)| json!({"failures": s.failures})),
    });
    Ok((results, vec![table]))
}
