//! Experiment configuration: strict JSON, one top-level seed.

use mlpath::mc::{Event, DEFAULT_DELTA_LADDER};
use mlpath::variational::{Constraints, MinimizeOptions};
use mlpath::zoo::{DriftPreset, MapPreset};
use mlpath::{DiscretePath, TimeGrid};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub seed: u64,
    /// Output directory; `--out` takes precedence.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out_dir: Option<String>,
    pub experiment: Experiment,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Experiment {
    Evaluate(EvaluateConfig),
    Minimize(MinimizeConfig),
    EpsSweep(EpsSweepConfig),
    Gamma(GammaConfig),
    McSmallball(SmallBallConfig),
    McLdp(LdpConfig),
    Algebraic(AlgebraicConfig),
}

impl Experiment {
    pub fn kind(&self) -> &'static str {
        match self {
            Experiment::Evaluate(_) => "evaluate",
            Experiment::Minimize(_) => "minimize",
            Experiment::EpsSweep(_) => "eps_sweep",
            Experiment::Gamma(_) => "gamma",
            Experiment::McSmallball(_) => "mc_smallball",
            Experiment::McLdp(_) => "mc_ldp",
            Experiment::Algebraic(_) => "algebraic",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub horizon: f64,
    pub intervals: usize,
}

/// Path given by a formula in `t` or by its nodal values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "snake_case", deny_unknown_fields)]
pub enum PathConfig {
    /// `Σ c_k t^k`.
    Polynomial { coefficients: Vec<f64> },
    /// `offset + amplitude·sin(frequency·t)`.
    Sine {
        amplitude: f64,
        frequency: f64,
        #[serde(default)]
        offset: f64,
    },
    Values { values: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvaluateConfig {
    pub model: DriftPreset,
    pub grid: GridConfig,
    #[serde(default)]
    pub start: f64,
    pub path: PathConfig,
    pub eps: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MinimizeConfig {
    pub model: DriftPreset,
    pub grid: GridConfig,
    #[serde(default)]
    pub constraints: Constraints,
    /// Minimize `ε²·OM_ε` when set, the FW action otherwise.
    #[serde(default)]
    pub eps: Option<f64>,
    /// Starting paths; the straight line between the pins when empty.
    #[serde(default)]
    pub starts: Vec<PathConfig>,
    #[serde(default)]
    pub options: MinimizeOptions,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EpsSweepConfig {
    pub model: DriftPreset,
    pub grid: GridConfig,
    #[serde(default)]
    pub constraints: Constraints,
    pub eps_list: Vec<f64>,
    #[serde(default)]
    pub init: Option<PathConfig>,
    #[serde(default)]
    pub options: MinimizeOptions,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GammaConfig {
    pub model: DriftPreset,
    pub grid: GridConfig,
    #[serde(default)]
    pub constraints: Constraints,
    pub radii: Vec<f64>,
    pub eps_list: Vec<f64>,
    #[serde(default = "default_probes")]
    pub probes: usize,
    #[serde(default)]
    pub options: MinimizeOptions,
}

fn default_probes() -> usize {
    256
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SmallBallConfig {
    pub model: DriftPreset,
    pub grid: GridConfig,
    #[serde(default)]
    pub start: f64,
    pub eps: f64,
    pub count: u64,
    pub z1: PathConfig,
    pub z2: PathConfig,
    #[serde(default = "default_deltas")]
    pub deltas: Vec<f64>,
}

fn default_deltas() -> Vec<f64> {
    DEFAULT_DELTA_LADDER.to_vec()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum EventConfig {
    TerminalAtLeast { level: f64 },
    SupAtLeast { level: f64 },
    Always,
}

impl EventConfig {
    pub fn to_event(self) -> Event {
        match self {
            EventConfig::TerminalAtLeast { level } => Event::TerminalAtLeast(level),
            EventConfig::SupAtLeast { level } => Event::SupAtLeast(level),
            EventConfig::Always => Event::Always,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LdpConfig {
    pub model: DriftPreset,
    pub grid: GridConfig,
    #[serde(default)]
    pub start: f64,
    pub event: EventConfig,
    pub eps_list: Vec<f64>,
    pub count: u64,
    #[serde(default)]
    pub options: MinimizeOptions,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum WeightsConfig {
    /// `a_n = 1/n`.
    Harmonic { truncation: usize },
    Values { values: Vec<f64> },
}

impl WeightsConfig {
    pub fn weights(&self) -> Vec<f64> {
        match self {
            WeightsConfig::Harmonic { truncation } => mlpath::zoo::AlgebraicSystem::harmonic_weights(*truncation),
            WeightsConfig::Values { values } => values.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum PhiConfig {
    Constant { value: f64 },
    Values { values: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AlgebraicConfig {
    pub weights: WeightsConfig,
    pub map: MapPreset,
    pub phi: PhiConfig,
    /// Also solve `x = f(x) + ε a ξ` for noise drawn from the run seed.
    #[serde(default)]
    pub solve_eps: Option<f64>,
}

/// Validation failure naming the offending field.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldError {
    pub field: String,
    pub message: String,
}

type Check = Result<(), FieldError>;

fn fail(field: &str, message: impl Into<String>) -> Check {
    Err(FieldError { field: field.to_string(), message: message.into() })
}

fn positive(field: &str, v: f64) -> Check {
    if !(v.is_finite() && v > 0.0) {
        return fail(field, format!("must be finite and positive, got {v}"));
    }
    Ok(())
}

fn finite(field: &str, v: f64) -> Check {
    if !v.is_finite() {
        return fail(field, format!("must be finite, got {v}"));
    }
    Ok(())
}

fn decreasing(field: &str, values: &[f64]) -> Check {
    if values.is_empty() {
        return fail(field, "must be non-empty");
    }
    for (i, v) in values.iter().enumerate() {
        positive(&format!("{field}[{i}]"), *v)?;
    }
    if values.windows(2).any(|w| w[1] >= w[0]) {
        return fail(field, "must be strictly decreasing");
    }
    Ok(())
}

fn count(field: &str, n: u64) -> Check {
    if n == 0 {
        return fail(field, "must be at least 1");
    }
    Ok(())
}

impl GridConfig {
    fn validate(&self, field: &str) -> Check {
        positive(&format!("{field}.horizon"), self.horizon)?;
        if self.intervals == 0 {
            return fail(&format!("{field}.intervals"), "must be at least 1");
        }
        Ok(())
    }

    pub fn grid(&self) -> TimeGrid {
        TimeGrid::new(self.horizon, self.intervals).expect("validated grid")
    }
}

impl PathConfig {
    fn validate(&self, field: &str, grid: &GridConfig) -> Check {
        match self {
            PathConfig::Polynomial { coefficients } => {
                if coefficients.is_empty() {
                    return fail(&format!("{field}.coefficients"), "must be non-empty");
                }
                for (i, c) in coefficients.iter().enumerate() {
                    finite(&format!("{field}.coefficients[{i}]"), *c)?;
                }
            }
            PathConfig::Sine { amplitude, frequency, offset } => {
                finite(&format!("{field}.amplitude"), *amplitude)?;
                finite(&format!("{field}.frequency"), *frequency)?;
                finite(&format!("{field}.offset"), *offset)?;
            }
            PathConfig::Values { values } => {
                if values.len() != grid.intervals + 1 {
                    return fail(
                        &format!("{field}.values"),
                        format!("needs {} node values, got {}", grid.intervals + 1, values.len()),
                    );
                }
                for (i, v) in values.iter().enumerate() {
                    finite(&format!("{field}.values[{i}]"), *v)?;
                }
            }
        }
        Ok(())
    }

    pub fn path(&self, grid: TimeGrid) -> DiscretePath {
        let path = match self {
            PathConfig::Polynomial { coefficients } => {
                DiscretePath::from_fn(grid, |t| coefficients.iter().rev().fold(0.0, |acc, c| acc * t + c))
            }
            PathConfig::Sine { amplitude, frequency, offset } => {
                DiscretePath::from_fn(grid, |t| offset + amplitude * (frequency * t).sin())
            }
            PathConfig::Values { values } => DiscretePath::new(grid, values.clone()),
        };
        path.expect("validated path")
    }
}

fn model(field: &str, preset: &DriftPreset) -> Check {
    if let DriftPreset::Ou { theta } = preset {
        finite(&format!("{field}.theta"), *theta)?;
    }
    Ok(())
}

fn constraints(field: &str, c: &Constraints) -> Check {
    if let Some(v) = c.pin_start {
        finite(&format!("{field}.pin_start"), v)?;
    }
    if let Some(v) = c.pin_end {
        finite(&format!("{field}.pin_end"), v)?;
    }
    Ok(())
}

fn options(field: &str, o: &MinimizeOptions) -> Check {
    positive(&format!("{field}.tol"), o.tol)?;
    positive(&format!("{field}.initial_step"), o.initial_step)?;
    positive(&format!("{field}.dedup_radius"), o.dedup_radius)?;
    if !(o.armijo_c1 > 0.0 && o.armijo_c1 < 0.5) {
        return fail(&format!("{field}.armijo_c1"), format!("must lie in (0, 0.5), got {}", o.armijo_c1));
    }
    if o.max_iter == 0 {
        return fail(&format!("{field}.max_iter"), "must be at least 1");
    }
    if o.max_backtracks == 0 {
        return fail(&format!("{field}.max_backtracks"), "must be at least 1");
    }
    Ok(())
}

impl ExperimentConfig {
    pub fn validate(&self) -> Check {
        let e = "experiment";
        let f = |name: &str| format!("{e}.{name}");
        match &self.experiment {
            Experiment::Evaluate(c) => {
                model(&f("model"), &c.model)?;
                c.grid.validate(&f("grid"))?;
                finite(&f("start"), c.start)?;
                c.path.validate(&f("path"), &c.grid)?;
                positive(&f("eps"), c.eps)?;
            }
            Experiment::Minimize(c) => {
                model(&f("model"), &c.model)?;
                c.grid.validate(&f("grid"))?;
                constraints(&f("constraints"), &c.constraints)?;
                if let Some(eps) = c.eps {
                    positive(&f("eps"), eps)?;
                }
                for (i, s) in c.starts.iter().enumerate() {
                    s.validate(&f(&format!("starts[{i}]")), &c.grid)?;
                }
                options(&f("options"), &c.options)?;
            }
            Experiment::EpsSweep(c) => {
                model(&f("model"), &c.model)?;
                c.grid.validate(&f("grid"))?;
                constraints(&f("constraints"), &c.constraints)?;
                decreasing(&f("eps_list"), &c.eps_list)?;
                if let Some(init) = &c.init {
                    init.validate(&f("init"), &c.grid)?;
                }
                options(&f("options"), &c.options)?;
            }
            Experiment::Gamma(c) => {
                model(&f("model"), &c.model)?;
                c.grid.validate(&f("grid"))?;
                constraints(&f("constraints"), &c.constraints)?;
                decreasing(&f("radii"), &c.radii)?;
                decreasing(&f("eps_list"), &c.eps_list)?;
                count(&f("probes"), c.probes as u64)?;
                options(&f("options"), &c.options)?;
            }
            Experiment::McSmallball(c) => {
                model(&f("model"), &c.model)?;
                c.grid.validate(&f("grid"))?;
                finite(&f("start"), c.start)?;
                positive(&f("eps"), c.eps)?;
                count(&f("count"), c.count)?;
                c.z1.validate(&f("z1"), &c.grid)?;
                c.z2.validate(&f("z2"), &c.grid)?;
                if c.deltas.is_empty() {
                    return fail(&f("deltas"), "must be non-empty");
                }
                for (i, d) in c.deltas.iter().enumerate() {
                    positive(&f(&format!("deltas[{i}]")), *d)?;
                }
            }
            Experiment::McLdp(c) => {
                model(&f("model"), &c.model)?;
                c.grid.validate(&f("grid"))?;
                finite(&f("start"), c.start)?;
                match c.event {
                    EventConfig::TerminalAtLeast { level } | EventConfig::SupAtLeast { level } => {
                        finite(&f("event.level"), level)?
                    }
                    EventConfig::Always => {}
                }
                decreasing(&f("eps_list"), &c.eps_list)?;
                count(&f("count"), c.count)?;
                options(&f("options"), &c.options)?;
            }
            Experiment::Algebraic(c) => {
                let weights = c.weights.weights();
                if weights.is_empty() {
                    return fail(&f("weights"), "truncation must be at least 1");
                }
                for (i, w) in weights.iter().enumerate() {
                    if !w.is_finite() || *w == 0.0 {
                        return fail(&f(&format!("weights.values[{i}]")), format!("must be finite and nonzero, got {w}"));
                    }
                }
                match c.map {
                    MapPreset::Linear { kappa } => contraction(&f("map.kappa"), kappa)?,
                    MapPreset::Tanh { scale } => contraction(&f("map.scale"), scale)?,
                    MapPreset::Zero => {}
                }
                match &c.phi {
                    PhiConfig::Constant { value } => finite(&f("phi.value"), *value)?,
                    PhiConfig::Values { values } => {
                        if values.len() != weights.len() {
                            return fail(
                                &f("phi.values"),
                                format!("needs {} entries, got {}", weights.len(), values.len()),
                            );
                        }
                        for (i, v) in values.iter().enumerate() {
                            finite(&f(&format!("phi.values[{i}]")), *v)?;
                        }
                    }
                }
                if let Some(eps) = c.solve_eps {
                    if !(eps.is_finite() && eps >= 0.0) {
                        return fail(&f("solve_eps"), format!("must be finite and non-negative, got {eps}"));
                    }
                }
            }
        }
        Ok(())
    }
}

fn contraction(field: &str, c: f64) -> Check {
    if !(c.is_finite() && c.abs() <= mlpath::zoo::MAX_CONTRACTION) {
        return fail(field, format!("must satisfy |x| <= {}, got {c}", mlpath::zoo::MAX_CONTRACTION));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<ExperimentConfig, serde_json::Error> {
        serde_json::from_str(text)
    }

    const EVALUATE: &str = r#"{
        "seed": 3,
        "experiment": {
            "kind": "evaluate",
            "model": {"name": "ou", "theta": 1.0},
            "grid": {"horizon": 1.0, "intervals": 100},
            "path": {"shape": "polynomial", "coefficients": [0.0, 1.0]},
            "eps": 0.5
        }
    }"#;

    #[test]
    fn parses_and_round_trips() {
        let cfg = parse(EVALUATE).unwrap();
        assert_eq!(cfg.experiment.kind(), "evaluate");
        cfg.validate().unwrap();
        let echo = serde_json::to_string(&cfg).unwrap();
        assert_eq!(parse(&echo).unwrap(), cfg);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let bad = EVALUATE.replace("\"eps\": 0.5", "\"eps\": 0.5, \"epsilon\": 1");
        let err = parse(&bad).unwrap_err().to_string();
        assert!(err.contains("epsilon"), "{err}");
        let bad_top = EVALUATE.replace("\"seed\": 3", "\"seed\": 3, \"sead\": 1");
        assert!(parse(&bad_top).is_err());
    }

    #[test]
    fn negative_eps_names_the_field() {
        let cfg = parse(&EVALUATE.replace("\"eps\": 0.5", "\"eps\": -0.5")).unwrap();
        let err = cfg.validate().unwrap_err();
        assert_eq!(err.field, "experiment.eps");
    }

    #[test]
    fn sweep_requires_decreasing_eps() {
        let text = r#"{"experiment": {"kind": "eps_sweep", "model": {"name": "zero"},
            "grid": {"horizon": 1, "intervals": 10}, "eps_list": [0.5, 1.0]}}"#;
        let err = parse(text).unwrap().validate().unwrap_err();
        assert_eq!(err.field, "experiment.eps_list");
    }

    #[test]
    fn defaults_fill_in() {
        let text = r#"{"experiment": {"kind": "mc_smallball", "model": {"name": "zero"},
            "grid": {"horizon": 1, "intervals": 8}, "eps": 1, "count": 10,
            "z1": {"shape": "polynomial", "coefficients": [0, 0.5]},
            "z2": {"shape": "polynomial", "coefficients": [0]}}}"#;
        let cfg = parse(text).unwrap();
        assert_eq!(cfg.seed, 0);
        match cfg.experiment {
            Experiment::McSmallball(c) => assert_eq!(c.deltas, DEFAULT_DELTA_LADDER.to_vec()),
            _ => unreachable!(),
        }
    }

    #[test]
    fn path_values_must_match_grid() {
        let text = r#"{"experiment": {"kind": "evaluate", "model": {"name": "zero"},
            "grid": {"horizon": 1, "intervals": 2}, "eps": 1,
            "path": {"shape": "values", "values": [0, 1]}}}"#;
        let err = parse(text).unwrap().validate().unwrap_err();
        assert_eq!(err.field, "experiment.path.values");
    }
}
