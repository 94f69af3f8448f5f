//! Heterogeneous noise profiles and RSS-AOA measurement time series.
//!
//! Random draws are consumed in a fixed order so that a seed fully determines
//! the output: profiles anchor by anchor (azimuth, elevation, RSS sigma), then
//! series samples anchor-major and time-minor, with the azimuth, elevation and
//! RSS noise drawn in that order at every step.

use std::io::{Read, Write};

use rand::Rng;
use rand_distr::{Distribution, Exp, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::error::{Error, Result};
use crate::geometry::{self, PathLossParams, Point3};

/// Lower bound applied to every sampled standard deviation.
pub const SIGMA_FLOOR: f64 = 1e-9;

/// Per-anchor noise standard deviations: azimuth and elevation in radians, RSS in dB.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseProfile {
    pub sigma_m: f64,
    pub sigma_v: f64,
    pub sigma_n: f64,
}

impl NoiseProfile {
    pub fn new(sigma_m: f64, sigma_v: f64, sigma_n: f64) -> Result<Self> {
        let profile = Self {
            sigma_m,
            sigma_v,
            sigma_n,
        };
        profile.validate()?;
        Ok(profile)
    }

    pub fn floor() -> Self {
        Self {
            sigma_m: SIGMA_FLOOR,
            sigma_v: SIGMA_FLOOR,
            sigma_n: SIGMA_FLOOR,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("sigma_m", self.sigma_m),
            ("sigma_v", self.sigma_v),
            ("sigma_n", self.sigma_n),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::invalid(name, "must be finite and > 0"));
            }
        }
        Ok(())
    }
}

/// Means of the exponential distributions the per-anchor sigmas are drawn from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HeteroNoiseSpec {
    /// Azimuth, radians.
    pub mu_m: f64,
    /// Elevation, radians.
    pub mu_v: f64,
    /// RSS, dB.
    pub mu_n: f64,
}

impl HeteroNoiseSpec {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("mu_m", self.mu_m), ("mu_v", self.mu_v), ("mu_n", self.mu_n)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::invalid(name, "must be finite and > 0"));
            }
        }
        Ok(())
    }
}

fn exp_with_mean(mean: f64, name: &'static str) -> Result<Exp<f64>> {
    Exp::new(mean.recip()).map_err(|e| Error::invalid(name, e.to_string()))
}

pub fn sample_noise_profiles<R: Rng + ?Sized>(
    spec: &HeteroNoiseSpec,
    n_anchors: usize,
    rng: &mut R,
) -> Result<Vec<NoiseProfile>> {
    spec.validate()?;
    if n_anchors == 0 {
        return Err(Error::TooFewAnchors {
            required: 1,
            got: 0,
        });
    }
    let exp_m = exp_with_mean(spec.mu_m, "mu_m")?;
    let exp_v = exp_with_mean(spec.mu_v, "mu_v")?;
    let exp_n = exp_with_mean(spec.mu_n, "mu_n")?;
    Ok((0..n_anchors)
        .map(|_| {
            let sigma_m = exp_m.sample(rng).max(SIGMA_FLOOR);
            let sigma_v = exp_v.sample(rng).max(SIGMA_FLOOR);
            let sigma_n = exp_n.sample(rng).max(SIGMA_FLOOR);
            NoiseProfile {
                sigma_m,
                sigma_v,
                sigma_n,
            }
        })
        .collect())
}

/// Azimuth, elevation and RSS readings for `n_anchors` anchors over `t_steps`
/// steps. Each channel is stored anchor-major: sample `(i, t)` sits at
/// `i * t_steps + t`.
///
/// Angles are stored unwrapped (true angle plus noise).
#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementSeries {
    n_anchors: usize,
    t_steps: usize,
    azimuth: Vec<f64>,
    elevation: Vec<f64>,
    rss: Vec<f64>,
}

impl MeasurementSeries {
    pub fn from_channels(
        n_anchors: usize,
        t_steps: usize,
        azimuth: Vec<f64>,
        elevation: Vec<f64>,
        rss: Vec<f64>,
    ) -> Result<Self> {
        if n_anchors == 0 {
            return Err(Error::TooFewAnchors {
                required: 1,
                got: 0,
            });
        }
        if t_steps == 0 {
            return Err(Error::invalid("t_steps", "must be >= 1"));
        }
        let len = n_anchors * t_steps;
        for (name, ch) in [("azimuth", &azimuth), ("elevation", &elevation), ("rss", &rss)] {
            if ch.len() != len {
                return Err(Error::DimensionMismatch(format!(
                    "{name} channel has {} samples, expected {len}",
                    ch.len()
                )));
            }
        }
        Ok(Self {
            n_anchors,
            t_steps,
            azimuth,
            elevation,
            rss,
        })
    }

    pub fn n_anchors(&self) -> usize {
        self.n_anchors
    }

    pub fn t_steps(&self) -> usize {
        self.t_steps
    }

    fn range(&self, anchor: usize) -> std::ops::Range<usize> {
        anchor * self.t_steps..(anchor + 1) * self.t_steps
    }

    pub fn azimuth(&self, anchor: usize) -> &[f64] {
        &self.azimuth[self.range(anchor)]
    }

    pub fn elevation(&self, anchor: usize) -> &[f64] {
        &self.elevation[self.range(anchor)]
    }

    pub fn rss(&self, anchor: usize) -> &[f64] {
        &self.rss[self.range(anchor)]
    }

    pub fn time_average(&self) -> AveragedMeasurements {
        time_average(self)
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> std::result::Result<(), SeriesCsvError> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(SERIES_HEADER)?;
        for i in 0..self.n_anchors {
            let (az, el, rss) = (self.azimuth(i), self.elevation(i), self.rss(i));
            for t in 0..self.t_steps {
                w.write_record(&[
                    i.to_string(),
                    t.to_string(),
                    az[t].to_string(),
                    el[t].to_string(),
                    rss[t].to_string(),
                ])?;
            }
        }
        w.flush()?;
        Ok(())
    }

    /// Parses the CSV written by [`MeasurementSeries::write_csv`]. Rows may
    /// come in any order but must cover every `(anchor_index, time_step)`
    /// pair of a rectangular grid exactly once.
    pub fn read_csv<R: Read>(reader: R) -> std::result::Result<Self, SeriesCsvError> {
        let mut r = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .flexible(true)
            .from_reader(reader);
        let header = r.headers()?.clone();
        if header.iter().ne(SERIES_HEADER) {
            return Err(SeriesCsvError::Row {
                row: 1,
                reason: format!("expected header {}", SERIES_HEADER.join(",")),
            });
        }
        let mut rows: Vec<(usize, usize, [f64; 3], u64)> = Vec::new();
        for record in r.records() {
            let record = record?;
            let row = record.position().map_or(0, |p| p.line());
            let bad = |reason: String| SeriesCsvError::Row { row, reason };
            if record.len() != SERIES_HEADER.len() {
                return Err(bad(format!(
                    "expected {} fields, found {}",
                    SERIES_HEADER.len(),
                    record.len()
                )));
            }
            let index = |k: usize| {
                record[k]
                    .parse::<usize>()
                    .map_err(|_| bad(format!("`{}` is not a valid {}", &record[k], SERIES_HEADER[k])))
            };
            let value = |k: usize| match record[k].parse::<f64>() {
                Ok(v) if v.is_finite() => Ok(v),
                _ => Err(bad(format!("`{}` is not a finite {}", &record[k], SERIES_HEADER[k]))),
            };
            rows.push((index(0)?, index(1)?, [value(2)?, value(3)?, value(4)?], row));
        }
        if rows.is_empty() {
            return Err(SeriesCsvError::Row {
                row: 2,
                reason: "no measurement rows".into(),
            });
        }
        let n_anchors = rows.iter().map(|r| r.0).max().unwrap_or(0) + 1;
        let t_steps = rows.iter().map(|r| r.1).max().unwrap_or(0) + 1;
        let len = n_anchors * t_steps;
        let mut seen = vec![false; len];
        let (mut az, mut el, mut rss) = (vec![0.0; len], vec![0.0; len], vec![0.0; len]);
        for (i, t, [a, e, p], row) in rows {
            let k = i * t_steps + t;
            if std::mem::replace(&mut seen[k], true) {
                return Err(SeriesCsvError::Row {
                    row,
                    reason: format!("duplicate sample for anchor {i}, time step {t}"),
                });
            }
            az[k] = a;
            el[k] = e;
            rss[k] = p;
        }
        if let Some(k) = seen.iter().position(|s| !s) {
            return Err(SeriesCsvError::Incomplete {
                anchor: k / t_steps,
                time_step: k % t_steps,
            });
        }
        Ok(Self::from_channels(n_anchors, t_steps, az, el, rss)?)
    }
}

pub const SERIES_HEADER: [&str; 5] = [
    "anchor_index",
    "time_step",
    "azimuth_rad",
    "elevation_rad",
    "rss_db",
];

#[derive(Debug, Error)]
pub enum SeriesCsvError {
    #[error("row {row}: {reason}")]
    Row { row: u64, reason: String },
    #[error("series is not rectangular: missing anchor {anchor}, time step {time_step}")]
    Incomplete { anchor: usize, time_step: usize },
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Invalid(#[from] Error),
}

/// Draws a series around the noise-free values of every anchor.
pub fn generate_series<R: Rng + ?Sized>(
    target: &Point3,
    anchors: &[Point3],
    profiles: &[NoiseProfile],
    params: &PathLossParams,
    t_steps: usize,
    rng: &mut R,
) -> Result<MeasurementSeries> {
    if anchors.len() != profiles.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} anchors but {} noise profiles",
            anchors.len(),
            profiles.len()
        )));
    }
    if t_steps == 0 {
        return Err(Error::invalid("t_steps", "must be >= 1"));
    }
    let len = anchors.len() * t_steps;
    let (mut az, mut el, mut rss) = (
        Vec::with_capacity(len),
        Vec::with_capacity(len),
        Vec::with_capacity(len),
    );
    for (anchor, profile) in anchors.iter().zip(profiles) {
        let phi = geometry::azimuth_true(target, anchor)?;
        let alpha = geometry::elevation_true(target, anchor)?;
        let power = geometry::rss_true(target, anchor, params)?;
        for _ in 0..t_steps {
            let m: f64 = StandardNormal.sample(rng);
            let v: f64 = StandardNormal.sample(rng);
            let n: f64 = StandardNormal.sample(rng);
            az.push(phi + profile.sigma_m * m);
            el.push(alpha + profile.sigma_v * v);
            rss.push(power + profile.sigma_n * n);
        }
    }
    MeasurementSeries::from_channels(anchors.len(), t_steps, az, el, rss)
}

/// Series whose every sample equals the noise-free value.
pub fn noise_free_series(
    target: &Point3,
    anchors: &[Point3],
    params: &PathLossParams,
    t_steps: usize,
) -> Result<MeasurementSeries> {
    if t_steps == 0 {
        return Err(Error::invalid("t_steps", "must be >= 1"));
    }
    let (mut az, mut el, mut rss) = (Vec::new(), Vec::new(), Vec::new());
    for anchor in anchors {
        let phi = geometry::azimuth_true(target, anchor)?;
        let alpha = geometry::elevation_true(target, anchor)?;
        let power = geometry::rss_true(target, anchor, params)?;
        az.extend(std::iter::repeat_n(phi, t_steps));
        el.extend(std::iter::repeat_n(alpha, t_steps));
        rss.extend(std::iter::repeat_n(power, t_steps));
    }
    MeasurementSeries::from_channels(anchors.len(), t_steps, az, el, rss)
}

/// Per-anchor arithmetic means of each channel.
#[derive(Debug, Clone, PartialEq)]
pub struct AveragedMeasurements {
    pub azimuth: Vec<f64>,
    pub elevation: Vec<f64>,
    pub rss: Vec<f64>,
}

impl AveragedMeasurements {
    pub fn len(&self) -> usize {
        self.azimuth.len()
    }

    pub fn is_empty(&self) -> bool {
        self.azimuth.is_empty()
    }
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

pub fn time_average(series: &MeasurementSeries) -> AveragedMeasurements {
    let n = series.n_anchors();
    AveragedMeasurements {
        azimuth: (0..n).map(|i| mean(series.azimuth(i))).collect(),
        elevation: (0..n).map(|i| mean(series.elevation(i))).collect(),
        rss: (0..n).map(|i| mean(series.rss(i))).collect(),
    }
}
