//! Fisher information and Cramér–Rao lower bounds for the RSS-AOA time-series model.
//!
//! With `T` independent samples per anchor the information is `T` times the
//! single-sample information, which in turn sums the outer products of the
//! measurement gradients weighted by the inverse noise variances:
//!
//! * azimuth: `grad phi = [-dy, dx, 0] / d2^2`
//! * elevation: `grad alpha = [dx dz / d2, dy dz / d2, -d2] / d^2`
//! * RSS: `grad P = -(10 gamma / ln 10) (x - a) / d^2`
//!
//! where `d2` is the horizontal and `d` the full anchor–target distance.

use std::io::Write;

use nalgebra::{Matrix3, Vector3};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{PathLossParams, Point3, MIN_SEPARATION};
use crate::synthesis::NoiseProfile;

/// Information matrices with a larger condition number are treated as singular.
pub const FIM_CONDITION_LIMIT: f64 = 1e12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FimMode {
    RssOnly,
    AoaOnly,
    Hybrid,
}

impl FimMode {
    pub const ALL: [FimMode; 3] = [FimMode::RssOnly, FimMode::AoaOnly, FimMode::Hybrid];

    pub fn name(self) -> &'static str {
        match self {
            FimMode::RssOnly => "rss_only",
            FimMode::AoaOnly => "aoa_only",
            FimMode::Hybrid => "hybrid",
        }
    }

    fn uses_rss(self) -> bool {
        matches!(self, FimMode::RssOnly | FimMode::Hybrid)
    }

    fn uses_aoa(self) -> bool {
        matches!(self, FimMode::AoaOnly | FimMode::Hybrid)
    }
}

impl std::str::FromStr for FimMode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        FimMode::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| format!("unknown mode `{s}` (expected rss_only, aoa_only or hybrid)"))
    }
}

/// Symmetric 3x3 Fisher information matrix, 1/m^2.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FisherMatrix(pub Matrix3<f64>);

impl FisherMatrix {
    pub fn entries(&self) -> &Matrix3<f64> {
        &self.0
    }

    /// Ratio of extreme eigenvalues; infinite when the smallest is not positive.
    pub fn condition_number(&self) -> f64 {
        let eig = self.0.symmetric_eigenvalues();
        let (lo, hi) = (eig.min(), eig.max());
        if lo > 0.0 {
            hi / lo
        } else {
            f64::INFINITY
        }
    }
}

/// RSS information scale `(10 gamma / (sigma_n ln 10))^2`.
pub fn rss_information_scale(gamma: f64, sigma_n: f64) -> f64 {
    (10.0 * gamma / (sigma_n * std::f64::consts::LN_10)).powi(2)
}

pub fn fim(
    target: &Point3,
    anchors: &[Point3],
    profiles: &[NoiseProfile],
    params: &PathLossParams,
    t_steps: usize,
    mode: FimMode,
) -> Result<FisherMatrix> {
    if anchors.len() != profiles.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} anchors but {} noise profiles",
            anchors.len(),
            profiles.len()
        )));
    }
    let mut info = Matrix3::zeros();
    for (anchor, profile) in anchors.iter().zip(profiles) {
        let delta = target - anchor;
        let (dx, dy, dz) = (delta.x, delta.y, delta.z);
        let d_sq = delta.norm_squared();
        if d_sq.sqrt() < MIN_SEPARATION {
            return Err(Error::Coincident(d_sq.sqrt()));
        }
        if mode.uses_rss() {
            let eta = rss_information_scale(params.gamma, profile.sigma_n);
            info += (eta / (d_sq * d_sq)) * delta * delta.transpose();
        }
        if mode.uses_aoa() {
            let d2_sq = dx * dx + dy * dy;
            let d2 = d2_sq.sqrt();
            if d2 < MIN_SEPARATION {
                return Err(Error::PlanarCoincident(d2));
            }
            let g_phi = Vector3::new(-dy, dx, 0.0) / d2_sq;
            let g_alpha = Vector3::new(dx * dz / d2, dy * dz / d2, -d2) / d_sq;
            info += g_phi * g_phi.transpose() / profile.sigma_m.powi(2);
            info += g_alpha * g_alpha.transpose() / profile.sigma_v.powi(2);
        }
    }
    Ok(FisherMatrix(info * t_steps as f64))
}

/// `sqrt(trace(FIM^-1))`, meters.
pub fn crlb(fim: &FisherMatrix) -> Result<f64> {
    let cond = fim.condition_number();
    if cond.is_nan() || cond > FIM_CONDITION_LIMIT {
        return Err(Error::SingularFim(cond));
    }
    let inv = fim
        .0
        .try_inverse()
        .ok_or(Error::SingularFim(f64::INFINITY))?;
    Ok(inv.trace().max(0.0).sqrt())
}

/// Axis-aligned grid of target positions at a fixed height.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub x1_min: f64,
    pub x1_max: f64,
    pub x2_min: f64,
    pub x2_max: f64,
    pub step: f64,
    pub x3: f64,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            x1_min: 1.0,
            x1_max: 40.0,
            x2_min: 1.0,
            x2_max: 40.0,
            step: 0.5,
            x3: 0.0,
        }
    }
}

fn axis(min: f64, max: f64, step: f64) -> Vec<f64> {
    let count = ((max - min) / step + 1e-9).floor() as usize + 1;
    (0..count).map(|k| min + k as f64 * step).collect()
}

impl GridSpec {
    pub fn validate(&self) -> Result<()> {
        let all = [self.x1_min, self.x1_max, self.x2_min, self.x2_max, self.step, self.x3];
        if all.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("grid", "all grid values must be finite"));
        }
        if self.step <= 0.0 {
            return Err(Error::invalid("grid.step", "must be > 0"));
        }
        if self.x1_max < self.x1_min || self.x2_max < self.x2_min {
            return Err(Error::invalid("grid", "max must not be below min"));
        }
        Ok(())
    }

    pub fn x1_axis(&self) -> Vec<f64> {
        axis(self.x1_min, self.x1_max, self.step)
    }

    pub fn x2_axis(&self) -> Vec<f64> {
        axis(self.x2_min, self.x2_max, self.step)
    }
}

/// CRLB over a grid. `values[j * x1.len() + i]` holds the bound at
/// `(x1[i], x2[j])`; `None` marks a singular (masked) point.
#[derive(Debug, Clone, PartialEq)]
pub struct CrlbGrid {
    pub mode: FimMode,
    pub x3: f64,
    pub x1: Vec<f64>,
    pub x2: Vec<f64>,
    pub values: Vec<Option<f64>>,
}

impl CrlbGrid {
    pub fn get(&self, i: usize, j: usize) -> Option<f64> {
        self.values[j * self.x1.len() + i]
    }

    pub fn masked_count(&self) -> usize {
        self.values.iter().filter(|v| v.is_none()).count()
    }

    pub fn masked_points(&self) -> Vec<(f64, f64)> {
        self.points()
            .filter(|(_, _, v)| v.is_none())
            .map(|(x1, x2, _)| (x1, x2))
            .collect()
    }

    /// `(x1, x2, value)` in storage order.
    pub fn points(&self) -> impl Iterator<Item = (f64, f64, Option<f64>)> + '_ {
        let n1 = self.x1.len();
        self.values
            .iter()
            .enumerate()
            .map(move |(k, v)| (self.x1[k % n1], self.x2[k / n1], *v))
    }

    /// Location and value of the smallest unmasked bound.
    pub fn argmin(&self) -> Option<(f64, f64, f64)> {
        self.points()
            .filter_map(|(x1, x2, v)| v.map(|v| (x1, x2, v)))
            .min_by(|a, b| a.2.total_cmp(&b.2))
    }

    /// Columns `x1,x2,crlb,masked`; masked rows leave `crlb` empty.
    pub fn write_csv<W: Write>(&self, writer: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["x1", "x2", "crlb", "masked"])?;
        for (x1, x2, v) in self.points() {
            let (value, masked) = match v {
                Some(v) => (v.to_string(), "0"),
                None => (String::new(), "1"),
            };
            w.write_record([x1.to_string(), x2.to_string(), value, masked.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }

    /// Dense whitespace-separated matrix, one line per `x2` value and one
    /// column per `x1` value, masked points written as `NaN`. Leading `#`
    /// lines carry the mode and both axes.
    pub fn write_matrix<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        let join = |xs: &[f64]| xs.iter().map(f64::to_string).collect::<Vec<_>>().join(" ");
        writeln!(w, "# mode {} x3 {}", self.mode.name(), self.x3)?;
        writeln!(w, "# x1 {}", join(&self.x1))?;
        writeln!(w, "# x2 {}", join(&self.x2))?;
        for row in self.values.chunks(self.x1.len()) {
            let line = row
                .iter()
                .map(|v| v.map_or_else(|| "NaN".to_string(), |v| v.to_string()))
                .collect::<Vec<_>>()
                .join(" ");
            writeln!(w, "{line}")?;
        }
        Ok(())
    }
}

/// Evaluates the bound at every grid point. Points where the information
/// matrix is singular or undefined are masked.
pub fn crlb_heatmap(
    anchors: &[Point3],
    profiles: &[NoiseProfile],
    params: &PathLossParams,
    t_steps: usize,
    grid: &GridSpec,
    mode: FimMode,
) -> Result<CrlbGrid> {
    grid.validate()?;
    if anchors.len() != profiles.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} anchors but {} noise profiles",
            anchors.len(),
            profiles.len()
        )));
    }
    let x1 = grid.x1_axis();
    let x2 = grid.x2_axis();
    let n1 = x1.len();
    let values = (0..n1 * x2.len())
        .into_par_iter()
        .map(|k| {
            let target = Point3::new(x1[k % n1], x2[k / n1], grid.x3);
            fim(&target, anchors, profiles, params, t_steps, mode)
                .and_then(|f| crlb(&f))
                .ok()
        })
        .collect();
    Ok(CrlbGrid {
        mode,
        x3: grid.x3,
        x1,
        x2,
        values,
    })
}
