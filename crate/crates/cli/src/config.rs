//! Run configuration: TOML file plus `--set key=value` overrides.

use std::fmt;
use std::path::PathBuf;

use nalgebra::{DMatrix, DVector};
use serde::Deserialize;
use smallnoise_core::moments::ReferenceOptions;
use smallnoise_core::{DriftSpec, InitialLaw, SdeSpec, SpaceMethod, TimeGrid, TimeRule};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    Simulate,
    Moments,
    KlContinuous,
    KlDiscrete,
    SweepEps,
    SweepDt,
    WrongMeanTv,
    Rate,
}

impl Command {
    pub fn parse(s: &str) -> Option<Self> {
        Command::deserialize(serde::de::value::StrDeserializer::<serde::de::value::Error>::new(s))
            .ok()
    }

    pub fn name(&self) -> &'static str {
        match self {
            Command::Simulate => "simulate",
            Command::Moments => "moments",
            Command::KlContinuous => "kl-continuous",
            Command::KlDiscrete => "kl-discrete",
            Command::SweepEps => "sweep-eps",
            Command::SweepDt => "sweep-dt",
            Command::WrongMeanTv => "wrong-mean-tv",
            Command::Rate => "rate",
        }
    }
}

impl fmt::Display for Command {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub command: Option<Command>,
    #[serde(default)]
    pub seed: u64,
    pub out: Option<PathBuf>,
    pub problem: ProblemConfig,
    #[serde(default)]
    pub estimator: EstimatorConfig,
    #[serde(default)]
    pub simulate: SimulateConfig,
    #[serde(default)]
    pub moments: MomentsConfig,
    #[serde(default)]
    pub sweep: SweepSection,
    #[serde(default)]
    pub rate: RateConfig,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemConfig {
    pub drift: DriftSpec,
    /// Row-major `D × D`.
    pub sigma: Vec<f64>,
    pub epsilon: f64,
    pub horizon: f64,
    pub steps: usize,
    pub initial: InitialConfig,
    /// Initial law of the approximation, if it differs from `initial`.
    pub approx_initial: Option<InitialConfig>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, tag = "kind", rename_all = "kebab-case")]
pub enum InitialConfig {
    Dirac {
        mean: Vec<f64>,
    },
    /// `N(mean, ε·cov)` with `cov` row-major.
    Gaussian {
        mean: Vec<f64>,
        cov: Vec<f64>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TrajectoryKind {
    Reference,
    EulerInterpolated,
    Factored,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimatorConfig {
    #[serde(default)]
    pub space: SpaceMethod,
    #[serde(default = "default_substeps")]
    pub substeps: usize,
    #[serde(default = "default_trajectory")]
    pub trajectory: TrajectoryKind,
    #[serde(default = "default_reference_steps")]
    pub reference_steps: usize,
    #[serde(default = "default_output_every")]
    pub reference_output_every: usize,
    /// Number of chain steps summed by `kl-discrete` (default: all).
    pub upto: Option<usize>,
}

fn default_substeps() -> usize {
    TimeRule::default().substeps
}

fn default_trajectory() -> TrajectoryKind {
    TrajectoryKind::Reference
}

fn default_reference_steps() -> usize {
    10_000
}

fn default_output_every() -> usize {
    10
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        Self {
            space: SpaceMethod::default(),
            substeps: default_substeps(),
            trajectory: default_trajectory(),
            reference_steps: default_reference_steps(),
            reference_output_every: default_output_every(),
            upto: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LawKind {
    Nonlinear,
    Linearized,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateConfig {
    #[serde(default = "default_paths")]
    pub paths: usize,
    #[serde(default = "default_law")]
    pub law: LawKind,
    /// Write every path to `ensemble.csv`.
    #[serde(default)]
    pub dump: bool,
}

fn default_paths() -> usize {
    1000
}

fn default_law() -> LawKind {
    LawKind::Nonlinear
}

impl Default for SimulateConfig {
    fn default() -> Self {
        Self {
            paths: default_paths(),
            law: default_law(),
            dump: false,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MomentsConfig {
    #[serde(default = "default_scheme")]
    pub scheme: TrajectoryKind,
}

fn default_scheme() -> TrajectoryKind {
    TrajectoryKind::Factored
}

impl Default for MomentsConfig {
    fn default() -> Self {
        Self {
            scheme: default_scheme(),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    #[serde(default)]
    pub values: Vec<f64>,
    /// Fixed ε of `sweep-dt` (default: `problem.epsilon`).
    pub epsilon: Option<f64>,
    /// Fixed Δt of the discrete estimator in `sweep-eps` (default: `T/steps`).
    pub dt: Option<f64>,
    /// Euler–Maruyama step of the TV companions (default: `T/steps`).
    pub dt_sim: Option<f64>,
    #[serde(default = "default_tv_paths")]
    pub tv_paths: usize,
    #[serde(default = "default_tv_bins")]
    pub tv_bins: usize,
    /// `KL·ε/Δt²` study in `sweep-dt`: fixed Δt and the ε values.
    pub ratio_dt: Option<f64>,
    #[serde(default)]
    pub ratio_epsilons: Vec<f64>,
    /// Mean offset of `wrong-mean-tv`.
    #[serde(default = "default_offset")]
    pub offset: f64,
}

fn default_tv_paths() -> usize {
    100_000
}

fn default_tv_bins() -> usize {
    200
}

fn default_offset() -> f64 {
    0.5
}

impl Default for SweepSection {
    fn default() -> Self {
        Self {
            values: Vec::new(),
            epsilon: None,
            dt: None,
            dt_sim: None,
            tv_paths: default_tv_paths(),
            tv_bins: default_tv_bins(),
            ratio_dt: None,
            ratio_epsilons: Vec::new(),
            offset: default_offset(),
        }
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields, tag = "path", rename_all = "kebab-case")]
pub enum RateConfig {
    /// RK4 solution of the mean ODE.
    #[default]
    Ode,
    /// Euler mean sequence on the problem grid.
    Euler,
    /// `φ ≡ v0`.
    Constant,
    /// `φ(t) = v0 + t·slope`.
    Line { slope: Vec<f64> },
}

/// Validation failure, reported with exit code 2.
#[derive(Debug)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<smallnoise_core::Error> for ConfigError {
    fn from(e: smallnoise_core::Error) -> Self {
        ConfigError(e.to_string())
    }
}

fn invalid<T>(msg: impl Into<String>) -> Result<T, ConfigError> {
    Err(ConfigError(msg.into()))
}

/// Parses `text`, applies `key=value` overrides on dotted paths and
/// deserializes the result.
pub fn load(text: &str, overrides: &[String]) -> Result<RunConfig, ConfigError> {
    let mut table: toml::Table = text
        .parse()
        .map_err(|e| ConfigError(format!("config: {e}")))?;
    for o in overrides {
        let (key, raw) = o
            .split_once('=')
            .ok_or_else(|| ConfigError(format!("override '{o}' is not key=value")))?;
        set_path(&mut table, key.trim(), parse_value(raw.trim()))?;
    }
    table
        .try_into()
        .map_err(|e: toml::de::Error| ConfigError(format!("config: {}", e.message())))
}

/// A TOML literal if it parses as one, a bare string otherwise.
fn parse_value(raw: &str) -> toml::Value {
    format!("v = {raw}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()))
}

fn set_path(table: &mut toml::Table, key: &str, value: toml::Value) -> Result<(), ConfigError> {
    let mut parts: Vec<&str> = key.split('.').collect();
    let last = parts
        .pop()
        .filter(|p| !p.is_empty())
        .ok_or_else(|| ConfigError(format!("empty override key '{key}'")))?;
    let mut node = table;
    for part in parts {
        let entry = node
            .entry(part.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        node = entry
            .as_table_mut()
            .ok_or_else(|| ConfigError(format!("override '{key}': '{part}' is not a table")))?;
    }
    node.insert(last.to_string(), value);
    Ok(())
}

fn positive(name: &str, v: f64) -> Result<f64, ConfigError> {
    if v.is_finite() && v > 0.0 {
        Ok(v)
    } else {
        invalid(format!("{name} must be positive, got {v}"))
    }
}

fn square(name: &str, entries: &[f64], d: usize) -> Result<DMatrix<f64>, ConfigError> {
    if entries.len() != d * d {
        return invalid(format!(
            "{name} needs {} entries for D = {d}, got {}",
            d * d,
            entries.len()
        ));
    }
    Ok(DMatrix::from_row_slice(d, d, entries))
}

fn vector(name: &str, entries: &[f64], d: usize) -> Result<DVector<f64>, ConfigError> {
    if entries.len() != d {
        return invalid(format!("{name} needs {d} entries, got {}", entries.len()));
    }
    Ok(DVector::from_column_slice(entries))
}

impl InitialConfig {
    fn build(&self, name: &str, d: usize) -> Result<InitialLaw, ConfigError> {
        Ok(match self {
            InitialConfig::Dirac { mean } => {
                InitialLaw::Dirac(vector(&format!("{name}.mean"), mean, d)?)
            }
            InitialConfig::Gaussian { mean, cov } => InitialLaw::Gaussian {
                mean: vector(&format!("{name}.mean"), mean, d)?,
                cov: square(&format!("{name}.cov"), cov, d)?,
            },
        })
    }
}

/// Everything a command needs, validated.
#[derive(Debug, Clone)]
pub struct Resolved {
    pub command: Command,
    pub spec: SdeSpec,
    pub grid: TimeGrid,
    /// Initial law the approximation starts from.
    pub approx: InitialLaw,
    pub rule: TimeRule,
    pub reference: ReferenceOptions,
}

impl RunConfig {
    pub fn resolve(&self) -> Result<Resolved, ConfigError> {
        let command = self.command.ok_or_else(|| {
            ConfigError("no command given (config 'command' or positional argument)".into())
        })?;
        let p = &self.problem;
        let drift = p
            .drift
            .build()
            .map_err(|e| ConfigError(format!("problem.drift: {e}")))?;
        let d = drift.dim();
        positive("problem.epsilon", p.epsilon)?;
        positive("problem.horizon", p.horizon)?;
        if p.steps == 0 {
            return invalid("problem.steps must be positive");
        }
        let sigma = square("problem.sigma", &p.sigma, d)?;
        let initial = p.initial.build("problem.initial", d)?;
        let approx = match &p.approx_initial {
            Some(a) => a.build("problem.approx_initial", d)?,
            None => initial.clone(),
        };
        let spec = SdeSpec::new(drift, sigma, p.epsilon, initial)
            .map_err(|e| ConfigError(format!("problem: {e}")))?;
        let grid = TimeGrid::new(p.horizon, p.steps)?;

        let e = &self.estimator;
        if e.substeps == 0 {
            return invalid("estimator.substeps must be positive");
        }
        match e.space {
            SpaceMethod::MonteCarlo { samples } if samples < 2 => {
                return invalid("estimator.space.samples must be at least 2")
            }
            SpaceMethod::GaussHermite { order: 0 } => {
                return invalid("estimator.space.order must be positive")
            }
            _ => {}
        }
        if e.reference_steps == 0
            || e.reference_output_every == 0
            || e.reference_steps % e.reference_output_every != 0
        {
            return invalid(
                "estimator.reference_output_every must divide estimator.reference_steps",
            );
        }
        if self.simulate.paths == 0 {
            return invalid("simulate.paths must be positive");
        }
        let s = &self.sweep;
        if matches!(
            command,
            Command::SweepEps | Command::SweepDt | Command::WrongMeanTv
        ) {
            if s.values.len() < 4 {
                return invalid("sweep.values needs at least 4 entries");
            }
            for v in &s.values {
                positive("sweep.values", *v)?;
            }
            if s.values.windows(2).any(|w| w[1] >= w[0]) {
                return invalid("sweep.values must be strictly descending");
            }
        }
        for (name, v) in [
            ("sweep.epsilon", s.epsilon),
            ("sweep.dt", s.dt),
            ("sweep.dt_sim", s.dt_sim),
            ("sweep.ratio_dt", s.ratio_dt),
        ] {
            if let Some(v) = v {
                positive(name, v)?;
            }
        }
        for v in &s.ratio_epsilons {
            positive("sweep.ratio_epsilons", *v)?;
        }
        if s.tv_bins == 0 {
            return invalid("sweep.tv_bins must be positive");
        }
        if !s.offset.is_finite() {
            return invalid("sweep.offset must be finite");
        }
        Ok(Resolved {
            command,
            spec,
            grid,
            approx,
            rule: TimeRule::with_substeps(e.substeps),
            reference: ReferenceOptions {
                steps: e.reference_steps,
                output_every: e.reference_output_every,
            },
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASE: &str = r#"
        command = "kl-continuous"
        [problem]
        drift = { name = "double-well" }
        sigma = [1.0]
        epsilon = 0.001
        horizon = 1.0
        steps = 100
        initial = { kind = "dirac", mean = [0.5] }
    "#;

    #[test]
    fn overrides_replace_nested_values() {
        let cfg = load(
            BASE,
            &[
                "problem.epsilon=0.01".into(),
                "estimator.space.kind=\"gauss-hermite\"".into(),
                "estimator.space.order=12".into(),
            ],
        )
        .unwrap();
        assert_eq!(cfg.problem.epsilon, 0.01);
        assert_eq!(cfg.estimator.space, SpaceMethod::GaussHermite { order: 12 });
    }

    #[test]
    fn bare_strings_are_accepted() {
        let cfg = load(BASE, &["command=rate".into()]).unwrap();
        assert_eq!(cfg.command, Some(Command::Rate));
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let err = load(BASE, &["problem.eps=0.1".into()]).unwrap_err();
        assert!(err.0.contains("eps"), "{err}");
    }

    #[test]
    fn negative_epsilon_names_the_field() {
        let cfg = load(BASE, &["problem.epsilon=-1".into()]).unwrap();
        let err = cfg.resolve().unwrap_err();
        assert!(err.0.contains("problem.epsilon"), "{err}");
    }

    #[test]
    fn command_names_round_trip() {
        for c in [
            Command::Simulate,
            Command::Moments,
            Command::KlContinuous,
            Command::KlDiscrete,
            Command::SweepEps,
            Command::SweepDt,
            Command::WrongMeanTv,
            Command::Rate,
        ] {
            assert_eq!(Command::parse(c.name()), Some(c));
        }
        assert_eq!(Command::parse("nope"), None);
    }
}
