use std::path::{Path, PathBuf};

use serde::Deserialize;
use serde_json::Value;

use hestonvar::coercivity::{EpsilonTriple, VariationalParams};
use hestonvar::model::{HestonParams, OptionSpec};
use hestonvar::oracle::McConfig;
use hestonvar::solver::{LinearSolver, SolverOptions, TimeGrid};
use hestonvar::wspace::TruncatedDomain;

use crate::Failure;

/// One JSON document describing a run.
///
/// Prices are computed for a unit spot internally: the strike is divided by
/// `s0` before it reaches the solver and prices are scaled back afterwards.
/// A user-supplied `domain` is therefore in `x = ln(S / s0)`.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub model: HestonParams,
    pub option: OptionSpec,
    /// Searched for when absent.
    #[serde(default)]
    pub variational: Option<VariationalParams>,
    /// Together with `delta`, turns the search into a single certification.
    #[serde(default)]
    pub epsilons: Option<EpsilonTriple>,
    #[serde(default)]
    pub delta: Option<f64>,
    /// Defaults to the truncation chosen for the option.
    #[serde(default)]
    pub domain: Option<TruncatedDomain>,
    /// Defaults to 256 implicit Euler steps.
    #[serde(default)]
    pub time: Option<TimeGrid>,
    #[serde(default = "default_mc")]
    pub mc: McConfig,
    #[serde(default)]
    pub solver: SolverSettings,
    #[serde(default = "default_s0")]
    pub s0: f64,
    pub y0: f64,
    #[serde(default)]
    pub outputs: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSettings {
    #[serde(default = "yes")]
    pub lumped_mass: bool,
    #[serde(default)]
    pub linear_solver: LinearSolver,
}

impl Default for SolverSettings {
    fn default() -> Self {
        SolverSettings { lumped_mass: true, linear_solver: LinearSolver::default() }
    }
}

impl From<SolverSettings> for SolverOptions {
    fn from(s: SolverSettings) -> Self {
        SolverOptions { lumped_mass: s.lumped_mass, linear_solver: s.linear_solver }
    }
}

fn yes() -> bool {
    true
}

fn default_s0() -> f64 {
    1.0
}

fn default_mc() -> McConfig {
    McConfig { paths: 100_000, steps: 100, seed: 1, scheme: Default::default() }
}

pub const DEFAULT_STEPS: usize = 256;

impl RunConfig {
    pub fn load(path: &Path, overrides: &[String]) -> Result<Self, Failure> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Failure::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut doc: Value =
            serde_json::from_str(&text).map_err(|e| Failure::Config(format!("{}: {e}", path.display())))?;
        for o in overrides {
            apply_override(&mut doc, o)?;
        }
        let cfg: RunConfig = serde_json::from_value(doc).map_err(|e| Failure::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    fn validate(&self) -> Result<(), Failure> {
        let bad = |e: hestonvar::Error| Failure::Config(e.to_string());
        self.model.validate().map_err(bad)?;
        self.option.validate().map_err(bad)?;
        if let Some(vp) = &self.variational {
            vp.validate().map_err(bad)?;
        }
        if self.epsilons.is_some() != self.delta.is_some() {
            return Err(Failure::Config("epsilons and delta must be given together".into()));
        }
        if self.epsilons.is_some() && self.variational.is_none() {
            return Err(Failure::Config("epsilons and delta need explicit variational parameters".into()));
        }
        if let Some(d) = &self.domain {
            d.validate().map_err(bad)?;
        }
        if let Some(t) = &self.time {
            t.validate().map_err(bad)?;
            if t.maturity != self.option.maturity {
                return Err(Failure::Config(format!(
                    "time.maturity {} differs from option.maturity {}",
                    t.maturity, self.option.maturity
                )));
            }
        }
        self.mc.validate().map_err(bad)?;
        if !(self.s0 > 0.0 && self.s0.is_finite()) {
            return Err(Failure::Config(format!("s0 must be > 0, got {}", self.s0)));
        }
        if !(self.y0 >= 0.0 && self.y0.is_finite()) {
            return Err(Failure::Config(format!("y0 must be >= 0, got {}", self.y0)));
        }
        Ok(())
    }

    /// The option seen by the solver, quoted for unit spot.
    pub fn unit_option(&self) -> OptionSpec {
        OptionSpec { strike: self.option.strike / self.s0, ..self.option }
    }

    pub fn domain(&self) -> TruncatedDomain {
        self.domain.unwrap_or_else(|| TruncatedDomain::for_option(&self.model, &self.unit_option()))
    }

    pub fn time_grid(&self) -> TimeGrid {
        self.time.unwrap_or(TimeGrid { maturity: self.option.maturity, steps: DEFAULT_STEPS, theta: 1.0 })
    }

    pub fn output_dir(&self, flag: Option<&Path>) -> Result<PathBuf, Failure> {
        flag.map(Path::to_path_buf)
            .or_else(|| self.outputs.clone())
            .ok_or_else(|| Failure::Config("no output directory: pass --out or set outputs".into()))
    }
}

/// `a.b.c=value`, where the value is parsed as JSON and falls back to a string.
fn apply_override(doc: &mut Value, spec: &str) -> Result<(), Failure> {
    let (path, raw) =
        spec.split_once('=').ok_or_else(|| Failure::Config(format!("override {spec:?} is not key=value")))?;
    let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    let keys: Vec<&str> = path.split('.').collect();
    if keys.iter().any(|k| k.is_empty()) {
        return Err(Failure::Config(format!("override key {path:?} is malformed")));
    }
    let mut node = doc;
    for key in &keys[..keys.len() - 1] {
        let obj = node
            .as_object_mut()
            .ok_or_else(|| Failure::Config(format!("override {path:?} descends into a non-object")))?;
        node = obj.entry(key.to_string()).or_insert_with(|| Value::Object(Default::default()));
        if node.is_null() {
            *node = Value::Object(Default::default());
        }
    }
    let obj =
        node.as_object_mut().ok_or_else(|| Failure::Config(format!("override {path:?} descends into a non-object")))?;
    obj.insert(keys[keys.len() - 1].to_string(), value);
    Ok(())
}
