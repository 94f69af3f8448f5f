//! JSON configuration files and the bundled presets.
//!
//! Angles are given in degrees in every configuration file and converted to
//! radians on load. Unknown fields are rejected.

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::crlb::{crlb_heatmap, CrlbGrid, FimMode, GridSpec};
use crate::estimators::Method;
use crate::geometry::{PathLossParams, Point3};
use crate::rng;
use crate::synthesis::{generate_series, sample_noise_profiles, HeteroNoiseSpec, MeasurementSeries, NoiseProfile};

/// A configuration problem, naming the offending field.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub field: String,
    pub reason: String,
}

impl ConfigError {
    pub fn new(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Self {
            field: field.into(),
            reason: reason.into(),
        }
    }
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.field.is_empty() {
            write!(f, "invalid config: {}", self.reason)
        } else {
            write!(f, "invalid config field `{}`: {}", self.field, self.reason)
        }
    }
}

impl std::error::Error for ConfigError {}

type ConfigResult<T> = std::result::Result<T, ConfigError>;

fn positive(field: &str, v: f64) -> ConfigResult<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(ConfigError::new(field, format!("must be finite and > 0, got {v}")))
    }
}

fn finite_point(field: &str, p: &[f64; 3]) -> ConfigResult<Point3> {
    if p.iter().all(|v| v.is_finite()) {
        Ok(Point3::new(p[0], p[1], p[2]))
    } else {
        Err(ConfigError::new(field, "coordinates must be finite"))
    }
}

fn check_path_loss(p: &PathLossParams) -> ConfigResult<()> {
    p.validate().map_err(|e| match e {
        crate::Error::InvalidParameter { name, reason } => {
            ConfigError::new(format!("path_loss.{name}"), reason)
        }
        other => ConfigError::new("path_loss", other.to_string()),
    })
}

/// Parses JSON into `T`, reporting serde errors against the field they concern.
pub fn parse_json<T: for<'de> Deserialize<'de>>(text: &str) -> ConfigResult<T> {
    serde_json::from_str(text).map_err(|e| {
        let msg = e.to_string();
        // serde messages quote the field: "missing field `x`", "unknown field `x`"
        let field = msg
            .split('`')
            .nth(1)
            .filter(|_| msg.contains("field"))
            .unwrap_or("")
            .to_string();
        ConfigError::new(field, msg)
    })
}

pub fn load_json<T: for<'de> Deserialize<'de>>(path: &Path) -> std::result::Result<T, LoadError> {
    let text = std::fs::read_to_string(path).map_err(|e| LoadError::Io(path.display().to_string(), e))?;
    parse_json(&text).map_err(LoadError::Config)
}

#[derive(Debug)]
pub enum LoadError {
    Io(String, std::io::Error),
    Config(ConfigError),
}

impl fmt::Display for LoadError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LoadError::Io(path, e) => write!(f, "cannot read {path}: {e}"),
            LoadError::Config(e) => e.fmt(f),
        }
    }
}

impl std::error::Error for LoadError {}

/// Exponential hyper-distribution means, degrees and dB.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseSpecDeg {
    pub mu_m_deg: f64,
    pub mu_v_deg: f64,
    pub mu_n_db: f64,
}

impl NoiseSpecDeg {
    pub fn to_spec(&self) -> HeteroNoiseSpec {
        HeteroNoiseSpec {
            mu_m: self.mu_m_deg.to_radians(),
            mu_v: self.mu_v_deg.to_radians(),
            mu_n: self.mu_n_db,
        }
    }

    fn validate(&self, prefix: &str) -> ConfigResult<()> {
        positive(&format!("{prefix}.mu_m_deg"), self.mu_m_deg)?;
        positive(&format!("{prefix}.mu_v_deg"), self.mu_v_deg)?;
        positive(&format!("{prefix}.mu_n_db"), self.mu_n_db)
    }
}

/// Fixed per-anchor noise, degrees and dB.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProfileDeg {
    pub sigma_m_deg: f64,
    pub sigma_v_deg: f64,
    pub sigma_n_db: f64,
}

impl ProfileDeg {
    pub fn to_profile(&self) -> NoiseProfile {
        NoiseProfile {
            sigma_m: self.sigma_m_deg.to_radians(),
            sigma_v: self.sigma_v_deg.to_radians(),
            sigma_n: self.sigma_n_db,
        }
    }

    fn validate(&self, prefix: &str) -> ConfigResult<()> {
        positive(&format!("{prefix}.sigma_m_deg"), self.sigma_m_deg)?;
        positive(&format!("{prefix}.sigma_v_deg"), self.sigma_v_deg)?;
        positive(&format!("{prefix}.sigma_n_db"), self.sigma_n_db)
    }
}

/// Axis-aligned placement box, meters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Region {
    pub min: [f64; 3],
    pub max: [f64; 3],
}

impl Default for Region {
    fn default() -> Self {
        Self {
            min: [0.0; 3],
            max: [40.0; 3],
        }
    }
}

impl Region {
    fn validate(&self) -> ConfigResult<()> {
        for k in 0..3 {
            if !(self.min[k].is_finite() && self.max[k].is_finite() && self.max[k] > self.min[k]) {
                return Err(ConfigError::new(
                    "region",
                    "each max must be finite and strictly above its min",
                ));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepParam {
    NAnchors,
    TSteps,
    MuMDeg,
    MuVDeg,
    MuNDb,
}

impl SweepParam {
    pub fn name(self) -> &'static str {
        match self {
            SweepParam::NAnchors => "n_anchors",
            SweepParam::TSteps => "t_steps",
            SweepParam::MuMDeg => "mu_m_deg",
            SweepParam::MuVDeg => "mu_v_deg",
            SweepParam::MuNDb => "mu_n_db",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sweep {
    pub param: SweepParam,
    pub values: Vec<f64>,
}

fn default_methods() -> Vec<Method> {
    Method::ALL.to_vec()
}

/// Monte-Carlo scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub n_anchors: usize,
    pub t_steps: usize,
    pub noise: NoiseSpecDeg,
    #[serde(default)]
    pub path_loss: PathLossParams,
    #[serde(default)]
    pub region: Region,
    pub mc_runs: usize,
    pub seed: u64,
    #[serde(default = "default_methods")]
    pub methods: Vec<Method>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<Sweep>,
    /// Record wall-clock time per fix. Off by default so reports stay reproducible.
    #[serde(default)]
    pub profile_runtime: bool,
}

impl ScenarioConfig {
    pub fn validate(&self) -> ConfigResult<()> {
        let min_anchors = if self.methods.iter().all(|m| *m == Method::Ls) { 1 } else { 2 };
        if self.n_anchors < min_anchors {
            return Err(ConfigError::new(
                "n_anchors",
                format!("must be >= {min_anchors} for the configured methods"),
            ));
        }
        if self.t_steps < 1 {
            return Err(ConfigError::new("t_steps", "must be >= 1"));
        }
        self.noise.validate("noise")?;
        check_path_loss(&self.path_loss)?;
        self.region.validate()?;
        if self.mc_runs < 1 {
            return Err(ConfigError::new("mc_runs", "must be >= 1"));
        }
        if self.methods.is_empty() {
            return Err(ConfigError::new("methods", "at least one method is required"));
        }
        let mut seen = std::collections::HashSet::new();
        if let Some(m) = self.methods.iter().find(|m| !seen.insert(**m)) {
            return Err(ConfigError::new("methods", format!("`{m}` listed twice")));
        }
        if let Some(sweep) = &self.sweep {
            if sweep.values.is_empty() {
                return Err(ConfigError::new("sweep.values", "must not be empty"));
            }
            for v in &sweep.values {
                self.with_value(sweep.param, *v)?;
            }
        }
        Ok(())
    }

    /// Copy of this config with `param` set to `value` and the sweep removed.
    pub fn with_value(&self, param: SweepParam, value: f64) -> ConfigResult<ScenarioConfig> {
        let mut c = self.clone();
        c.sweep = None;
        let count = |v: f64| -> ConfigResult<usize> {
            if v.is_finite() && v >= 1.0 && v.fract() == 0.0 {
                Ok(v as usize)
            } else {
                Err(ConfigError::new(
                    "sweep.values",
                    format!("{} requires positive integers, got {v}", param.name()),
                ))
            }
        };
        match param {
            SweepParam::NAnchors => c.n_anchors = count(value)?,
            SweepParam::TSteps => c.t_steps = count(value)?,
            SweepParam::MuMDeg => c.noise.mu_m_deg = value,
            SweepParam::MuVDeg => c.noise.mu_v_deg = value,
            SweepParam::MuNDb => c.noise.mu_n_db = value,
        }
        if self.sweep.is_some() {
            c.validate().map_err(|e| ConfigError::new("sweep.values", e.to_string()))?;
        }
        Ok(c)
    }
}

/// Fixed-layout simulation: one target, known anchors, and either explicit
/// per-anchor noise or a hyper-distribution to draw it from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationConfig {
    pub anchors: Vec<[f64; 3]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target: Option<[f64; 3]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub profiles: Option<Vec<ProfileDeg>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise: Option<NoiseSpecDeg>,
    #[serde(default)]
    pub path_loss: PathLossParams,
    pub t_steps: usize,
    #[serde(default)]
    pub seed: u64,
}

impl SimulationConfig {
    pub fn anchor_points(&self) -> ConfigResult<Vec<Point3>> {
        if self.anchors.is_empty() {
            return Err(ConfigError::new("anchors", "at least one anchor is required"));
        }
        self.anchors
            .iter()
            .enumerate()
            .map(|(i, a)| finite_point(&format!("anchors[{i}]"), a))
            .collect()
    }

    pub fn target_point(&self) -> ConfigResult<Option<Point3>> {
        self.target.as_ref().map(|t| finite_point("target", t)).transpose()
    }

    /// Checks the fields needed to simulate a series.
    pub fn validate(&self) -> ConfigResult<()> {
        self.validate_layout()?;
        let target = self
            .target_point()?
            .ok_or_else(|| ConfigError::new("target", "required for simulation"))?;
        for (i, a) in self.anchor_points()?.iter().enumerate() {
            if (target - a).norm() < crate::geometry::MIN_SEPARATION {
                return Err(ConfigError::new(format!("anchors[{i}]"), "coincides with the target"));
            }
        }
        if self.t_steps < 1 {
            return Err(ConfigError::new("t_steps", "must be >= 1"));
        }
        match (&self.profiles, &self.noise) {
            (Some(p), None) => {
                if p.len() != self.anchors.len() {
                    return Err(ConfigError::new(
                        "profiles",
                        format!("{} profiles for {} anchors", p.len(), self.anchors.len()),
                    ));
                }
                for (i, pr) in p.iter().enumerate() {
                    pr.validate(&format!("profiles[{i}]"))?;
                }
                Ok(())
            }
            (None, Some(n)) => n.validate("noise"),
            _ => Err(ConfigError::new("profiles", "give exactly one of `profiles` or `noise`")),
        }
    }

    /// Draws one series from `rng::from_seed(seed)`: the noise profiles first
    /// when only a hyper-distribution is given, then the measurements.
    pub fn simulate(&self) -> crate::Result<MeasurementSeries> {
        self.validate().map_err(|e| crate::Error::invalid("config", e.to_string()))?;
        let anchors = self.anchor_points().expect("validated");
        let target = self.target_point().expect("validated").expect("validated");
        let mut rng = rng::from_seed(self.seed);
        let profiles = match (&self.profiles, &self.noise) {
            (Some(p), _) => p.iter().map(ProfileDeg::to_profile).collect(),
            (None, Some(n)) => sample_noise_profiles(&n.to_spec(), anchors.len(), &mut rng)?,
            (None, None) => unreachable!("validated"),
        };
        generate_series(&target, &anchors, &profiles, &self.path_loss, self.t_steps, &mut rng)
    }

    /// Checks only anchors and path loss, which is all estimation needs.
    pub fn validate_layout(&self) -> ConfigResult<()> {
        self.anchor_points()?;
        self.target_point()?;
        check_path_loss(&self.path_loss)
    }
}

fn default_modes() -> Vec<FimMode> {
    FimMode::ALL.to_vec()
}

/// CRLB heatmap over a grid of target positions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CrlbMapConfig {
    pub anchors: Vec<[f64; 3]>,
    pub profiles: Vec<ProfileDeg>,
    #[serde(default)]
    pub path_loss: PathLossParams,
    pub t_steps: usize,
    #[serde(default)]
    pub grid: GridSpec,
    #[serde(default = "default_modes")]
    pub modes: Vec<FimMode>,
}

impl CrlbMapConfig {
    pub fn validate(&self) -> ConfigResult<()> {
        if self.anchors.is_empty() {
            return Err(ConfigError::new("anchors", "at least one anchor is required"));
        }
        for (i, a) in self.anchors.iter().enumerate() {
            finite_point(&format!("anchors[{i}]"), a)?;
        }
        if self.profiles.len() != self.anchors.len() {
            return Err(ConfigError::new(
                "profiles",
                format!("{} profiles for {} anchors", self.profiles.len(), self.anchors.len()),
            ));
        }
        for (i, p) in self.profiles.iter().enumerate() {
            p.validate(&format!("profiles[{i}]"))?;
        }
        check_path_loss(&self.path_loss)?;
        if self.t_steps < 1 {
            return Err(ConfigError::new("t_steps", "must be >= 1"));
        }
        self.grid.validate().map_err(|e| ConfigError::new("grid", e.to_string()))?;
        if self.modes.is_empty() {
            return Err(ConfigError::new("modes", "at least one mode is required"));
        }
        Ok(())
    }

    pub fn anchor_points(&self) -> Vec<Point3> {
        self.anchors.iter().map(|a| Point3::new(a[0], a[1], a[2])).collect()
    }

    pub fn noise_profiles(&self) -> Vec<NoiseProfile> {
        self.profiles.iter().map(ProfileDeg::to_profile).collect()
    }

    /// One grid per configured mode, in configuration order.
    pub fn compute(&self) -> crate::Result<Vec<CrlbGrid>> {
        self.validate().map_err(|e| crate::Error::invalid("config", e.to_string()))?;
        let (anchors, profiles) = (self.anchor_points(), self.noise_profiles());
        self.modes
            .iter()
            .map(|&mode| crlb_heatmap(&anchors, &profiles, &self.path_loss, self.t_steps, &self.grid, mode))
            .collect()
    }
}

/// Configuration files shipped with the crate.
pub mod presets {
    use super::*;

    #[derive(Debug, Clone, Copy, PartialEq, Eq)]
    pub enum Kind {
        Scenario,
        Simulation,
        CrlbMap,
    }

    pub const ALL: [(&str, Kind, &str); 9] = [
        ("fig2", Kind::Simulation, include_str!("../presets/fig2.json")),
        ("fig3", Kind::CrlbMap, include_str!("../presets/fig3.json")),
        ("scenario1", Kind::Scenario, include_str!("../presets/scenario1.json")),
        ("scenario2", Kind::Scenario, include_str!("../presets/scenario2.json")),
        ("scenario3", Kind::Scenario, include_str!("../presets/scenario3.json")),
        ("scenario4", Kind::Scenario, include_str!("../presets/scenario4.json")),
        ("scenario5", Kind::Scenario, include_str!("../presets/scenario5.json")),
        ("bench", Kind::Scenario, include_str!("../presets/bench.json")),
        ("bench_scaling", Kind::Scenario, include_str!("../presets/bench_scaling.json")),
    ];

    pub fn text(name: &str) -> Option<&'static str> {
        ALL.iter().find(|(n, _, _)| *n == name).map(|(_, _, t)| *t)
    }

    pub fn scenario(name: &str) -> Option<ScenarioConfig> {
        ALL.iter()
            .find(|(n, k, _)| *n == name && *k == Kind::Scenario)
            .map(|(_, _, t)| parse_json(t).expect("bundled preset parses"))
    }

    pub fn simulation(name: &str) -> Option<SimulationConfig> {
        ALL.iter()
            .find(|(n, k, _)| *n == name && *k == Kind::Simulation)
            .map(|(_, _, t)| parse_json(t).expect("bundled preset parses"))
    }

    pub fn crlb_map(name: &str) -> Option<CrlbMapConfig> {
        ALL.iter()
            .find(|(n, k, _)| *n == name && *k == Kind::CrlbMap)
            .map(|(_, _, t)| parse_json(t).expect("bundled preset parses"))
    }
}
