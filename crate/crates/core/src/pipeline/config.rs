//! TOML run configuration.

use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::ais::CallParams;
use crate::clustering::ClusterParams;
use crate::error::{Error, Result};
use crate::forecast::{DatasetParams, EnsembleWeights, TrainParams};
use crate::similarity::KernelParams;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AisFormat {
    /// Raw `!AIVDM` sentences, one per line.
    Nmea,
    /// Decoded `mmsi,timestamp,lat,lon,sog,cog` rows.
    Csv,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Inputs {
    pub ports: PathBuf,
    pub climate: PathBuf,
    pub scenario_climate: Option<PathBuf>,
    pub ais: PathBuf,
    /// Inferred from the file extension when unset (`.nmea`/`.txt` are NMEA).
    pub ais_format: Option<AisFormat>,
    pub exogenous: Option<PathBuf>,
}

impl Inputs {
    pub fn ais_format(&self) -> AisFormat {
        self.ais_format
            .unwrap_or_else(|| match self.ais.extension().and_then(|e| e.to_str()) {
                Some("nmea" | "txt" | "log") => AisFormat::Nmea,
                _ => AisFormat::Csv,
            })
    }

    /// `(name, path)` for every configured input.
    pub fn named(&self) -> Vec<(&'static str, &Path)> {
        let mut out = vec![
            ("ports", self.ports.as_path()),
            ("climate", self.climate.as_path()),
            ("ais", self.ais.as_path()),
        ];
        if let Some(p) = &self.scenario_climate {
            out.push(("scenario_climate", p));
        }
        if let Some(p) = &self.exogenous {
            out.push(("exogenous", p));
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ForecastConfig {
    pub lags: usize,
    pub horizon: usize,
    pub tau: f64,
    pub negative_ratio: f64,
    pub recency_horizon: u32,
    /// Trailing labeled months held out for evaluation.
    pub eval_months: usize,
    pub learning_rate: f64,
    pub epochs: usize,
    /// One ensemble member per entry.
    pub l2: Vec<f64>,
    pub alphas: Vec<f64>,
}

impl Default for ForecastConfig {
    fn default() -> Self {
        let d = DatasetParams::default();
        let t = TrainParams::default();
        Self {
            lags: d.lags,
            horizon: d.horizon,
            tau: d.tau,
            negative_ratio: d.negative_ratio,
            recency_horizon: d.recency_horizon,
            eval_months: 6,
            learning_rate: t.learning_rate,
            epochs: t.epochs,
            l2: vec![1e-4, 1e-1],
            alphas: vec![0.5, 0.5],
        }
    }
}

impl ForecastConfig {
    pub fn dataset_params(&self, seed: u64) -> DatasetParams {
        DatasetParams {
            lags: self.lags,
            horizon: self.horizon,
            tau: self.tau,
            negative_ratio: self.negative_ratio,
            recency_horizon: self.recency_horizon,
            seed,
        }
    }

    pub fn train_params(&self, l2: f64, seed: u64) -> TrainParams {
        TrainParams {
            l2,
            learning_rate: self.learning_rate,
            epochs: self.epochs,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.dataset_params(0).validate()?;
        if self.eval_months == 0 {
            return Err(Error::Domain("eval_months must be >= 1".into()));
        }
        if self.l2.is_empty() {
            return Err(Error::Domain(
                "at least one ensemble member (l2 entry) is required".into(),
            ));
        }
        for &l2 in &self.l2 {
            self.train_params(l2, 0).validate()?;
        }
        let weights = EnsembleWeights::new(self.alphas.clone())?;
        if weights.len() != self.l2.len() {
            return Err(Error::Domain(format!(
                "{} ensemble weights for {} members",
                weights.len(),
                self.l2.len()
            )));
        }
        Ok(())
    }
}

/// Scales listed edges (or all inbound edges of a port) by `multiplier`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WhatIf {
    pub name: String,
    #[serde(default)]
    pub inbound: Option<String>,
    #[serde(default)]
    pub edges: Vec<(String, String)>,
    pub multiplier: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RiskConfig {
    pub gamma: f64,
    /// Walk length for multi-hop exposure.
    pub hops: usize,
    /// Voyages chained into one shipment path.
    pub path_hops: usize,
    /// Dwell at the destination maps to `1 - exp(-dwell / scale)`.
    pub residence_scale_hours: f64,
    pub what_if: Vec<WhatIf>,
}

impl Default for RiskConfig {
    fn default() -> Self {
        Self {
            gamma: 0.6,
            hops: 3,
            path_hops: 2,
            residence_scale_hours: 48.0,
            what_if: Vec::new(),
        }
    }
}

impl RiskConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return Err(Error::Domain(format!(
                "gamma must be in (0, 1], got {}",
                self.gamma
            )));
        }
        if self.hops == 0 {
            return Err(Error::Domain("hops must be >= 1".into()));
        }
        if self.path_hops == 0 {
            return Err(Error::Domain("path_hops must be >= 1".into()));
        }
        if !(self.residence_scale_hours.is_finite() && self.residence_scale_hours > 0.0) {
            return Err(Error::Domain(format!(
                "residence_scale_hours must be > 0, got {}",
                self.residence_scale_hours
            )));
        }
        for w in &self.what_if {
            if !(0.0..=1.0).contains(&w.multiplier) {
                return Err(Error::Domain(format!(
                    "what_if {}: multiplier must be in [0, 1], got {}",
                    w.name, w.multiplier
                )));
            }
            if w.inbound.is_none() && w.edges.is_empty() {
                return Err(Error::Domain(format!("what_if {}: no edges selected", w.name)));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReportConfig {
    pub top_n: usize,
}

impl Default for ReportConfig {
    fn default() -> Self {
        Self { top_n: 20 }
    }
}

/// Which similarity matrix feeds the kernel.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KernelSimilarity {
    Base,
    /// Scenario similarity when a scenario climate is configured, base otherwise.
    #[default]
    Scenario,
}

impl FromStr for KernelSimilarity {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "base" => Ok(Self::Base),
            "scenario" => Ok(Self::Scenario),
            _ => Err(Error::Config(format!(
                "kernel similarity must be \"base\" or \"scenario\", got {s:?}"
            ))),
        }
    }
}

impl std::fmt::Display for KernelSimilarity {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Base => "base",
            Self::Scenario => "scenario",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GraphConfig {
    /// Window for the additional rolling snapshot export; 1 disables it.
    pub aggregate_months: usize,
}

impl Default for GraphConfig {
    fn default() -> Self {
        Self { aggregate_months: 1 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub seed: u64,
    pub threads: Option<usize>,
    pub output_dir: PathBuf,
    pub kernel_similarity: KernelSimilarity,
    pub inputs: Inputs,
    pub clustering: ClusterParams,
    pub kernel: KernelParams,
    pub calls: CallParams,
    pub graph: GraphConfig,
    pub forecast: ForecastConfig,
    pub risk: RiskConfig,
    pub report: ReportConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            threads: None,
            output_dir: PathBuf::from("out"),
            kernel_similarity: KernelSimilarity::default(),
            inputs: Inputs::default(),
            clustering: ClusterParams::default(),
            kernel: KernelParams::default(),
            calls: CallParams::default(),
            graph: GraphConfig::default(),
            forecast: ForecastConfig::default(),
            risk: RiskConfig::default(),
            report: ReportConfig::default(),
        }
    }
}

fn config_err(section: &str, e: Error) -> Error {
    match e {
        Error::Config(_) => e,
        other => Error::Config(format!("[{section}] {other}")),
    }
}

impl PipelineConfig {
    /// Parses TOML; relative paths are resolved against `base`.
    pub fn from_toml(text: &str, base: &Path) -> Result<Self> {
        let mut cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.resolve_paths(base);
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::from_toml(&text, base)
    }

    fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if !p.as_os_str().is_empty() && p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.output_dir);
        fix(&mut self.inputs.ports);
        fix(&mut self.inputs.climate);
        fix(&mut self.inputs.ais);
        if let Some(p) = self.inputs.scenario_climate.as_mut() {
            fix(p);
        }
        if let Some(p) = self.inputs.exogenous.as_mut() {
            fix(p);
        }
    }

    /// Parameter domains first, then input paths; nothing is opened.
    pub fn validate(&self) -> Result<()> {
        if self.threads == Some(0) {
            return Err(Error::Config("threads must be >= 1".into()));
        }
        self.clustering
            .validate()
            .map_err(|e| config_err("clustering", e))?;
        self.kernel.validate().map_err(|e| config_err("kernel", e))?;
        self.calls.validate().map_err(|e| config_err("calls", e))?;
        if self.graph.aggregate_months == 0 {
            return Err(Error::Config("[graph] aggregate_months must be >= 1".into()));
        }
        self.forecast.validate().map_err(|e| config_err("forecast", e))?;
        self.risk.validate().map_err(|e| config_err("risk", e))?;
        if self.report.top_n == 0 {
            return Err(Error::Config("[report] top_n must be >= 1".into()));
        }
        for (name, path) in self.inputs.named() {
            if path.as_os_str().is_empty() {
                return Err(Error::Config(format!("[inputs] {name} is required")));
            }
            if !path.is_file() {
                return Err(Error::Config(format!(
                    "[inputs] {name} file {} does not exist",
                    path.display()
                )));
            }
        }
        if self.output_dir.as_os_str().is_empty() {
            return Err(Error::Config("output_dir is required".into()));
        }
        Ok(())
    }
}
