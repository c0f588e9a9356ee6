//! Experiment configuration, read from TOML.
//!
//! Every section is optional and falls back to the canonical run: the
//! monostable oscillator `μ₁ = −1, μ₃ = −0.7, κ₁ = 1, κ₃ = 0.4` under a unit
//! OU input on `[0, 3]`, started from `m_x0 = 2, C_x0x0 = 1`. Dotted keys such
//! as `oscillator.mu3 = -0.1` work as well as tables.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::causal_solver::{GridSpec, SolverConfig};
use crate::error::{Error, Result};
use crate::excitation::{Kernel, KernelFamily, KernelSpec};
use crate::monte_carlo::McConfig;
use crate::oscillator::{InitialMoments, OscillatorParams};
use crate::two_time::FieldMethod;

/// Excitation kernel given either by its decay parameter `a` or by its correlation time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelConfig {
    pub family: KernelFamily,
    pub sigma2: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub a: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tau_corr: Option<f64>,
    #[serde(default)]
    pub omega0: f64,
    #[serde(default)]
    pub mean: f64,
}

impl Default for KernelConfig {
    fn default() -> Self {
        Self { family: KernelFamily::Ou, sigma2: 1.0, a: Some(1.0), tau_corr: None, omega0: 0.0, mean: 0.0 }
    }
}

impl KernelConfig {
    pub fn build(&self) -> Result<Kernel> {
        let kernel = match (self.a, self.tau_corr) {
            (Some(a), None) => Kernel::deterministic_limit(KernelSpec {
                family: self.family,
                sigma2: self.sigma2,
                a,
                omega0: self.omega0,
                mean: self.mean,
            }),
            (None, Some(tau)) => Kernel::with_correlation_time(self.family, self.sigma2, tau, self.omega0, self.mean),
            _ => return Err(Error::config("kernel", "set exactly one of `a` and `tau_corr`")),
        };
        kernel.map_err(|e| section_error("kernel", e))
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FieldRoute {
    #[default]
    Integral,
    Ode,
    /// Both routes, plus their difference in the report.
    Both,
}

impl FieldRoute {
    pub fn methods(self) -> Vec<FieldMethod> {
        match self {
            FieldRoute::Integral => vec![FieldMethod::Integral],
            FieldRoute::Ode => vec![FieldMethod::Ode],
            FieldRoute::Both => vec![FieldMethod::Integral, FieldMethod::Ode],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputsConfig {
    pub field_method: FieldRoute,
    /// Write every `field_stride`-th grid node of the two-time surfaces.
    pub field_stride: usize,
}

impl Default for OutputsConfig {
    fn default() -> Self {
        Self { field_method: FieldRoute::Integral, field_stride: 1 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    Mu3,
    Kappa3,
    TauCorr,
    Omega0,
    Family,
}

impl SweepAxis {
    pub fn name(self) -> &'static str {
        match self {
            SweepAxis::Mu3 => "mu3",
            SweepAxis::Kappa3 => "kappa3",
            SweepAxis::TauCorr => "tau_corr",
            SweepAxis::Omega0 => "omega0",
            SweepAxis::Family => "family",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SweepValue {
    Number(f64),
    Family(KernelFamily),
}

impl std::fmt::Display for SweepValue {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            SweepValue::Number(v) => write!(f, "{v}"),
            SweepValue::Family(k) => f.write_str(k.name()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub axis: SweepAxis,
    pub values: Vec<SweepValue>,
    /// Also run a Monte Carlo ensemble (the `[mc]` section) at every point.
    #[serde(default)]
    pub mc: bool,
}

impl SweepConfig {
    /// Applies one sweep value to a copy of the base experiment.
    pub fn apply(&self, base: &ExperimentConfig, value: SweepValue) -> Result<(OscillatorParams, KernelConfig)> {
        let mut params = base.oscillator;
        let mut kernel = base.kernel.clone();
        let bad = || Error::config("sweep.values", format!("value {value} does not fit axis `{}`", self.axis.name()));
        match (self.axis, value) {
            (SweepAxis::Mu3, SweepValue::Number(v)) => params.mu3 = v,
            (SweepAxis::Kappa3, SweepValue::Number(v)) => params.kappa3 = v,
            (SweepAxis::TauCorr, SweepValue::Number(v)) => {
                kernel.a = None;
                kernel.tau_corr = Some(v);
            }
            (SweepAxis::Omega0, SweepValue::Number(v)) => kernel.omega0 = v,
            (SweepAxis::Family, SweepValue::Family(f)) => kernel.family = f,
            _ => return Err(bad()),
        }
        Ok((params, kernel))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Table1Config {
    pub kappa3: Vec<f64>,
    /// Independent ensembles pooled per row, seeded `seed, seed + 1, …`.
    pub replicates: usize,
    /// Evaluation time; the end of the Monte Carlo grid when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub time: Option<f64>,
}

impl Default for Table1Config {
    fn default() -> Self {
        Self { kappa3: vec![0.4, 0.0, -0.4], replicates: 5, time: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Fig12Config {
    pub families: Vec<KernelFamily>,
    pub mu3: Vec<f64>,
    pub tau_corr: Vec<f64>,
    /// Integration horizon standing in for the long-time limit.
    pub t_end: f64,
}

impl Default for Fig12Config {
    fn default() -> Self {
        Self {
            families: vec![KernelFamily::Ou, KernelFamily::GaussianFilter],
            mu3: vec![-0.4, -0.7],
            tau_corr: vec![0.25, 0.5, 1.0, 2.0, 4.0],
            t_end: 15.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub oscillator: OscillatorParams,
    pub kernel: KernelConfig,
    pub init: InitialMoments,
    pub grid: GridSpec,
    pub solver: SolverConfig,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mc: Option<McConfig>,
    pub outputs: OutputsConfig,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepConfig>,
    pub table1: Table1Config,
    pub fig12: Fig12Config,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            oscillator: OscillatorParams { mu1: -1.0, mu3: -0.7, kappa1: 1.0, kappa3: 0.4 },
            kernel: KernelConfig::default(),
            init: InitialMoments::default(),
            grid: GridSpec::default(),
            solver: SolverConfig::default(),
            mc: None,
            outputs: OutputsConfig::default(),
            sweep: None,
            table1: Table1Config::default(),
            fig12: Fig12Config::default(),
        }
    }
}

fn merge_into(base: &mut toml::Table, over: toml::Table) {
    for (key, value) in over {
        match (base.get_mut(&key), value) {
            (Some(toml::Value::Table(b)), toml::Value::Table(o)) => merge_into(b, o),
            (_, value) => {
                base.insert(key, value);
            }
        }
    }
}

/// Re-labels a component validation error with its config section.
fn section_error(section: &str, e: Error) -> Error {
    match e {
        Error::InvalidParameter { field, reason } => Error::config(format!("{section}.{field}"), reason),
        other => Error::config(section, other.to_string()),
    }
}

impl ExperimentConfig {
    /// Parses a config; keys missing from a section keep their default values.
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let user: toml::Table = text.parse().map_err(|e: toml::de::Error| {
            let line = e.span().map(|s| text[..s.start].lines().count().max(1));
            let at = line.map(|l| format!("line {l}")).unwrap_or_else(|| "config".into());
            Error::config(at, e.message().trim().to_string())
        })?;
        let mut merged = toml::Table::try_from(Self::default()).map_err(|e| Error::config("config", e.to_string()))?;
        if let (Some(toml::Value::Table(k)), Some(toml::Value::Table(d))) = (user.get("kernel"), merged.get_mut("kernel")) {
            // A user-given correlation time replaces the default decay parameter.
            if k.contains_key("tau_corr") && !k.contains_key("a") {
                d.remove("a");
            }
        }
        merge_into(&mut merged, user);
        toml::Value::Table(merged).try_into().map_err(|e: toml::de::Error| Error::config("config", e.message().trim().to_string()))
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::config(path.display().to_string(), format!("cannot read: {e}")))?;
        Self::from_toml_str(&text).map_err(|e| match e {
            Error::Config { path: at, message } => Error::config(format!("{}: {at}", path.display()), message),
            other => other,
        })
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::config("config", e.to_string()))
    }

    /// Checks every section the run depends on.
    pub fn validate(&self) -> Result<()> {
        self.oscillator.validate().map_err(|e| section_error("oscillator", e))?;
        self.kernel.build()?;
        self.init.validate().map_err(|e| section_error("init", e))?;
        self.grid.validate().map_err(|e| section_error("grid", e))?;
        self.solver.validate().map_err(|e| section_error("solver", e))?;
        if self.outputs.field_stride == 0 {
            return Err(Error::config("outputs.field_stride", "must be >= 1"));
        }
        if let Some(mc) = &self.mc {
            mc.validate().map_err(|e| section_error("mc", e))?;
            if mc.histogram_time.is_some() && mc.histogram.is_none() {
                return Err(Error::config("mc.histogram", "histogram_time is set but no histogram bins are given"));
            }
        }
        if let Some(sweep) = &self.sweep {
            if sweep.values.is_empty() {
                return Err(Error::config("sweep.values", "must list at least one value"));
            }
            if sweep.mc && self.mc.is_none() {
                return Err(Error::config("sweep.mc", "requires an [mc] section"));
            }
            for &v in &sweep.values {
                sweep.apply(self, v)?;
            }
        }
        if self.table1.replicates == 0 {
            return Err(Error::config("table1.replicates", "must be >= 1"));
        }
        if !(self.fig12.t_end > self.grid.t0) {
            return Err(Error::config("fig12.t_end", "must exceed grid.t0"));
        }
        Ok(())
    }

    /// Monte Carlo settings, defaults when the section is absent.
    pub fn mc_or_default(&self) -> McConfig {
        self.mc.clone().unwrap_or_default()
    }
}
