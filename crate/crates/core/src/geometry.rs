//! Noise-free relations between a target and an anchor.
//!
//! Azimuth is the four-quadrant bearing of the target in the horizontal plane
//! seen from the anchor, elevation is the polar angle measured from the +x3
//! axis (so it lives in `[0, pi]`), and received power follows the
//! log-distance path-loss law `P0 - 10 gamma log10(d / d0)`.

use std::f64::consts::PI;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Position in meters. Used for anchors, targets and estimates alike.
pub type Point3 = Vector3<f64>;

/// Separations below this (meters) are treated as coincident points.
pub const MIN_SEPARATION: f64 = 1e-9;

/// Log-distance path-loss parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PathLossParams {
    /// Received power at the reference distance, dB.
    pub p0_db: f64,
    /// Reference distance, meters.
    pub d0_m: f64,
    /// Path-loss exponent.
    pub gamma: f64,
}

impl Default for PathLossParams {
    fn default() -> Self {
        Self {
            p0_db: -10.0,
            d0_m: 1.0,
            gamma: 2.7,
        }
    }
}

impl PathLossParams {
    pub fn new(p0_db: f64, d0_m: f64, gamma: f64) -> Result<Self> {
        let params = Self { p0_db, d0_m, gamma };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.p0_db.is_finite() {
            return Err(Error::invalid("p0_db", "must be finite"));
        }
        if !(self.d0_m.is_finite() && self.d0_m > 0.0) {
            return Err(Error::invalid("d0_m", "must be finite and > 0"));
        }
        if !(self.gamma.is_finite() && self.gamma > 0.0) {
            return Err(Error::invalid("gamma", "must be finite and > 0"));
        }
        Ok(())
    }

    /// Distance implied by a received power, inverting the path-loss law.
    pub fn distance_from_rss(&self, rss_db: f64) -> f64 {
        self.d0_m * 10f64.powf((self.p0_db - rss_db) / (10.0 * self.gamma))
    }

    /// `10^(P / (10 gamma))`, the per-anchor scale of the range equation.
    pub fn lambda(&self, rss_db: f64) -> f64 {
        10f64.powf(rss_db / (10.0 * self.gamma))
    }

    /// `d0 * 10^(P0 / (10 gamma))`, the right-hand side constant of the range equation.
    pub fn beta(&self) -> f64 {
        self.d0_m * 10f64.powf(self.p0_db / (10.0 * self.gamma))
    }
}

/// Azimuth in `(-pi, pi]` and polar elevation in `[0, pi]`, radians.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Angles {
    pub azimuth: f64,
    pub elevation: f64,
}

impl Angles {
    pub fn between(target: &Point3, anchor: &Point3) -> Result<Self> {
        Ok(Self {
            azimuth: azimuth_true(target, anchor)?,
            elevation: elevation_true(target, anchor)?,
        })
    }

    pub fn unit_vector(&self) -> Point3 {
        unit_vector(self.azimuth, self.elevation)
    }
}

/// Horizontal distance between two points.
pub fn planar_distance(target: &Point3, anchor: &Point3) -> f64 {
    (target.x - anchor.x).hypot(target.y - anchor.y)
}

pub fn azimuth_true(target: &Point3, anchor: &Point3) -> Result<f64> {
    let dx = target.x - anchor.x;
    let dy = target.y - anchor.y;
    let planar = dx.hypot(dy);
    if planar < MIN_SEPARATION {
        return Err(Error::PlanarCoincident(planar));
    }
    let phi = dy.atan2(dx);
    // atan2(-0.0, negative) yields -pi; keep the half-open range.
    Ok(if phi <= -PI { PI } else { phi })
}

pub fn elevation_true(target: &Point3, anchor: &Point3) -> Result<f64> {
    let delta = target - anchor;
    let d = delta.norm();
    if d < MIN_SEPARATION {
        return Err(Error::Coincident(d));
    }
    Ok((delta.z / d).clamp(-1.0, 1.0).acos())
}

pub fn rss_true(target: &Point3, anchor: &Point3, params: &PathLossParams) -> Result<f64> {
    let d = (target - anchor).norm();
    if d < MIN_SEPARATION {
        return Err(Error::Coincident(d));
    }
    Ok(params.p0_db - 10.0 * params.gamma * (d / params.d0_m).log10())
}

/// Unit vector pointing along `(azimuth, elevation)` in spherical coordinates.
pub fn unit_vector(azimuth: f64, elevation: f64) -> Point3 {
    let (sin_phi, cos_phi) = azimuth.sin_cos();
    let (sin_alpha, cos_alpha) = elevation.sin_cos();
    Point3::new(cos_phi * sin_alpha, sin_phi * sin_alpha, cos_alpha)
}
