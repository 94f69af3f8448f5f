//! Closed-form hybrid RSS-AOA position estimators.
//!
//! Every averaged anchor reading contributes three equations that are linear
//! in the target position `x`:
//!
//! * azimuth: `c_i . (x - a_i) = 0` with `c_i = [-sin phi_i, cos phi_i, 0]`
//! * elevation: `(cos alpha_i u_i - k) . (x - a_i) = 0` with `k = [0, 0, 1]`
//! * range: `lambda_i u_i . (x - a_i) = beta`, `lambda_i = 10^(P_i / 10 gamma)`,
//!   `beta = d0 10^(P0 / 10 gamma)`
//!
//! where `u_i` is the unit vector of the averaged angles. The rows are stacked
//! azimuth block first, then elevation, then range, giving a `3N x 3` system
//! `A x = b` solved in the weighted least-squares sense `min |W (A x - b)|^2`.
//!
//! The two-stage estimator first solves with range-based weights, substitutes
//! the rough fix into the per-time-step versions of the three equations, and
//! re-solves the averaged system with weights `1 / sigma_r` taken from the
//! mean squared residual of each equation.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector, Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{unit_vector, PathLossParams, Point3};
use crate::synthesis::{AveragedMeasurements, MeasurementSeries};

/// Lower bound on estimated residual variances.
pub const VARIANCE_FLOOR: f64 = 1e-10;

/// Normal matrices with a larger condition number are treated as singular.
pub const CONDITION_LIMIT: f64 = 1e12;

/// Weighted linear system `W (A x - b)` with `3N` rows.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearSystem {
    design: DMatrix<f64>,
    rhs: DVector<f64>,
    weights: DVector<f64>,
}

impl LinearSystem {
    pub fn new(design: DMatrix<f64>, rhs: DVector<f64>, weights: DVector<f64>) -> Result<Self> {
        let rows = design.nrows();
        if design.ncols() != 3 {
            return Err(Error::DimensionMismatch(format!(
                "design matrix has {} columns, expected 3",
                design.ncols()
            )));
        }
        if rows == 0 || !rows.is_multiple_of(3) {
            return Err(Error::DimensionMismatch(format!(
                "design matrix has {rows} rows, expected a positive multiple of 3"
            )));
        }
        if rhs.len() != rows || weights.len() != rows {
            return Err(Error::DimensionMismatch(format!(
                "{rows} rows but rhs has {} and weights have {} entries",
                rhs.len(),
                weights.len()
            )));
        }
        if let Some(w) = weights.iter().find(|w| !(w.is_finite() && **w > 0.0)) {
            return Err(Error::invalid("weights", format!("all weights must be finite and > 0, found {w}")));
        }
        Ok(Self {
            design,
            rhs,
            weights,
        })
    }

    pub fn n_anchors(&self) -> usize {
        self.design.nrows() / 3
    }

    pub fn design(&self) -> &DMatrix<f64> {
        &self.design
    }

    pub fn rhs(&self) -> &DVector<f64> {
        &self.rhs
    }

    pub fn weights(&self) -> &DVector<f64> {
        &self.weights
    }

    /// Same equations, different weights.
    pub fn with_weights(&self, weights: &[f64]) -> Result<Self> {
        Self::new(
            self.design.clone(),
            self.rhs.clone(),
            DVector::from_column_slice(weights),
        )
    }

    fn weighted(&self) -> (DMatrix<f64>, DVector<f64>) {
        let mut wa = self.design.clone();
        for (mut row, w) in wa.row_iter_mut().zip(self.weights.iter()) {
            row *= *w;
        }
        (wa, self.rhs.component_mul(&self.weights))
    }

    /// `A^T W^T W A`.
    pub fn normal_matrix(&self) -> Matrix3<f64> {
        let (wa, _) = self.weighted();
        let n = wa.transpose() * &wa;
        Matrix3::from_fn(|r, c| n[(r, c)])
    }

    /// `(W A)^T W (A x - b)`, half the gradient of the weighted cost.
    pub fn normal_residual(&self, x: &Point3) -> Vector3<f64> {
        let (wa, wb) = self.weighted();
        let r = &wa * DVector::from_column_slice(x.as_slice()) - wb;
        let g = wa.transpose() * r;
        Vector3::new(g[0], g[1], g[2])
    }

    /// `(W A)^T W b`.
    pub fn normal_rhs(&self) -> Vector3<f64> {
        let (wa, wb) = self.weighted();
        let g = wa.transpose() * wb;
        Vector3::new(g[0], g[1], g[2])
    }

    /// `|W (A x - b)|^2`.
    pub fn cost(&self, x: &Point3) -> f64 {
        let (wa, wb) = self.weighted();
        (&wa * DVector::from_column_slice(x.as_slice()) - wb).norm_squared()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Stage1,
    Stage2,
    Baseline,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub position: Point3,
    pub stage: Stage,
    /// Set when the returned position comes from a fallback because a later
    /// solve was ill-conditioned.
    pub condition_flag: bool,
    /// Condition number of the normal matrix of the solve that produced `position`.
    pub condition_number: f64,
}

pub fn build_linear_system(
    avg: &AveragedMeasurements,
    anchors: &[Point3],
    params: &PathLossParams,
    weights: &[f64],
) -> Result<LinearSystem> {
    let n = anchors.len();
    if avg.len() != n || avg.elevation.len() != n || avg.rss.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "{n} anchors but averaged measurements for {} anchors",
            avg.len()
        )));
    }
    if weights.len() != 3 * n {
        return Err(Error::DimensionMismatch(format!(
            "{} weights for {} equations",
            weights.len(),
            3 * n
        )));
    }
    let k = Vector3::z();
    let beta = params.beta();
    let mut design = DMatrix::zeros(3 * n, 3);
    let mut rhs = DVector::zeros(3 * n);
    for (i, a) in anchors.iter().enumerate() {
        let (phi, alpha) = (avg.azimuth[i], avg.elevation[i]);
        let (sin_phi, cos_phi) = phi.sin_cos();
        let u = unit_vector(phi, alpha);
        let rows = [
            Vector3::new(-sin_phi, cos_phi, 0.0),
            alpha.cos() * u - k,
            params.lambda(avg.rss[i]) * u,
        ];
        for (block, row) in rows.iter().enumerate() {
            let r = block * n + i;
            design.set_row(r, &row.transpose());
            rhs[r] = row.dot(a);
        }
        rhs[2 * n + i] += beta;
    }
    LinearSystem::new(design, rhs, DVector::from_column_slice(weights))
}

/// Range-based weights `1 - d_i / sum(d)`, repeated for the three equation families.
pub fn stage1_weights(avg_rss: &[f64], params: &PathLossParams) -> Result<Vec<f64>> {
    let n = avg_rss.len();
    if n < 2 {
        return Err(Error::TooFewAnchors {
            required: 2,
            got: n,
        });
    }
    let d: Vec<f64> = avg_rss.iter().map(|p| params.distance_from_rss(*p)).collect();
    let total: f64 = d.iter().sum();
    let w: Vec<f64> = d.iter().map(|di| 1.0 - di / total).collect();
    Ok(w.iter().chain(&w).chain(&w).copied().collect())
}

/// Weighted least-squares solution via Householder QR of `W A`.
///
/// Fails with [`Error::IllConditioned`] when the normal matrix `A^T W^2 A`
/// has a condition number above [`CONDITION_LIMIT`].
pub fn solve_lwls(system: &LinearSystem) -> Result<Estimate> {
    let (wa, mut wb) = system.weighted();
    let qr = wa.qr();
    let r = qr.r();
    let r = Matrix3::from_fn(|i, j| r[(i, j)]);

    let sv = r.singular_values();
    let (smax, smin) = (sv.max(), sv.min());
    let cond = if smin > 0.0 { (smax / smin).powi(2) } else { f64::INFINITY };
    if cond.is_nan() || cond > CONDITION_LIMIT {
        return Err(Error::IllConditioned(cond));
    }

    qr.q_tr_mul(&mut wb);
    let qtb = Vector3::new(wb[0], wb[1], wb[2]);
    let position = r
        .solve_upper_triangular(&qtb)
        .ok_or(Error::IllConditioned(f64::INFINITY))?;
    if !position.iter().all(|v| v.is_finite()) {
        return Err(Error::IllConditioned(cond));
    }
    Ok(Estimate {
        position,
        stage: Stage::Baseline,
        condition_flag: false,
        condition_number: cond,
    })
}

/// Per-step residuals of the three equation families, anchor-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Residuals {
    n_anchors: usize,
    t_steps: usize,
    pub azimuth: Vec<f64>,
    pub elevation: Vec<f64>,
    pub rss: Vec<f64>,
}

impl Residuals {
    pub fn n_anchors(&self) -> usize {
        self.n_anchors
    }

    pub fn t_steps(&self) -> usize {
        self.t_steps
    }

    /// `(r1, r2, r3)` of anchor `i` at step `t`.
    pub fn get(&self, i: usize, t: usize) -> (f64, f64, f64) {
        let k = i * self.t_steps + t;
        (self.azimuth[k], self.elevation[k], self.rss[k])
    }
}

/// Substitutes `rough` into the per-step equations. The elevation residual
/// scales the per-step unit vector by the cosine of the time-averaged
/// elevation `avg_elevation[i]`.
pub fn compute_residuals(
    series: &MeasurementSeries,
    avg_elevation: &[f64],
    rough: &Point3,
    anchors: &[Point3],
    params: &PathLossParams,
) -> Result<Residuals> {
    let n = series.n_anchors();
    let t_steps = series.t_steps();
    if anchors.len() != n || avg_elevation.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "series has {n} anchors, got {} anchor positions and {} averaged elevations",
            anchors.len(),
            avg_elevation.len()
        )));
    }
    let beta = params.beta();
    let k = Vector3::z();
    let mut out = Residuals {
        n_anchors: n,
        t_steps,
        azimuth: Vec::with_capacity(n * t_steps),
        elevation: Vec::with_capacity(n * t_steps),
        rss: Vec::with_capacity(n * t_steps),
    };
    for (i, a) in anchors.iter().enumerate() {
        let delta = rough - a;
        let cos_avg = avg_elevation[i].cos();
        let (az, el, p) = (series.azimuth(i), series.elevation(i), series.rss(i));
        for t in 0..t_steps {
            let (sin_phi, cos_phi) = az[t].sin_cos();
            let u = unit_vector(az[t], el[t]);
            let u_dot = u.dot(&delta);
            out.azimuth.push(cos_phi * delta.y - sin_phi * delta.x);
            out.elevation.push((cos_avg * u - k).dot(&delta));
            out.rss.push(params.lambda(p[t]) * u_dot - beta);
        }
    }
    Ok(out)
}

/// Estimated residual variances per anchor and equation family.
#[derive(Debug, Clone, PartialEq)]
pub struct ResidualStats {
    pub var_azimuth: Vec<f64>,
    pub var_elevation: Vec<f64>,
    pub var_rss: Vec<f64>,
}

impl ResidualStats {
    /// Weights `1 / sigma_r` in row order (azimuth, elevation, range blocks).
    pub fn weights(&self) -> Vec<f64> {
        self.var_azimuth
            .iter()
            .chain(&self.var_elevation)
            .chain(&self.var_rss)
            .map(|v| v.sqrt().recip())
            .collect()
    }
}

fn mean_square_floored(xs: &[f64]) -> f64 {
    (xs.iter().map(|r| r * r).sum::<f64>() / xs.len() as f64).max(VARIANCE_FLOOR)
}

/// Mean of squared residuals over time for every anchor and family, floored
/// at [`VARIANCE_FLOOR`].
pub fn residual_variances(residuals: &Residuals) -> ResidualStats {
    let t = residuals.t_steps;
    let per_anchor = |ch: &[f64]| ch.chunks(t).map(mean_square_floored).collect::<Vec<_>>();
    ResidualStats {
        var_azimuth: per_anchor(&residuals.azimuth),
        var_elevation: per_anchor(&residuals.elevation),
        var_rss: per_anchor(&residuals.rss),
    }
}

/// Intermediate results of the two-stage estimator.
#[derive(Debug, Clone)]
pub struct TwoStage {
    pub stage1: Estimate,
    pub stats: ResidualStats,
    /// `None` when the re-weighted system was ill-conditioned.
    pub stage2: Option<Estimate>,
}

impl TwoStage {
    pub fn estimate(&self) -> Estimate {
        match self.stage2 {
            Some(e) => e,
            None => Estimate {
                condition_flag: true,
                ..self.stage1
            },
        }
    }
}

fn check_anchor_count(series: &MeasurementSeries, anchors: &[Point3]) -> Result<()> {
    if series.n_anchors() != anchors.len() {
        return Err(Error::DimensionMismatch(format!(
            "series has {} anchors, got {} anchor positions",
            series.n_anchors(),
            anchors.len()
        )));
    }
    Ok(())
}

pub fn run_two_stage(
    series: &MeasurementSeries,
    anchors: &[Point3],
    params: &PathLossParams,
) -> Result<TwoStage> {
    check_anchor_count(series, anchors)?;
    let avg = series.time_average();
    let system = build_linear_system(&avg, anchors, params, &stage1_weights(&avg.rss, params)?)?;
    let stage1 = Estimate {
        stage: Stage::Stage1,
        ..solve_lwls(&system)?
    };

    let residuals = compute_residuals(series, &avg.elevation, &stage1.position, anchors, params)?;
    let stats = residual_variances(&residuals);
    let stage2 = match system.with_weights(&stats.weights()).and_then(|s| solve_lwls(&s)) {
        Ok(e) => Some(Estimate {
            stage: Stage::Stage2,
            ..e
        }),
        Err(Error::IllConditioned(_)) | Err(Error::InvalidParameter { .. }) => None,
        Err(e) => return Err(e),
    };
    Ok(TwoStage {
        stage1,
        stats,
        stage2,
    })
}

/// Two-stage residual-variance weighted estimate. Falls back to the stage-1
/// fix with `condition_flag` set when the second solve is ill-conditioned.
pub fn estimate_two_stage(
    series: &MeasurementSeries,
    anchors: &[Point3],
    params: &PathLossParams,
) -> Result<Estimate> {
    Ok(run_two_stage(series, anchors, params)?.estimate())
}

/// Unweighted least squares on the time-averaged equations.
pub fn estimate_ls(
    series: &MeasurementSeries,
    anchors: &[Point3],
    params: &PathLossParams,
) -> Result<Estimate> {
    check_anchor_count(series, anchors)?;
    let avg = series.time_average();
    let system = build_linear_system(&avg, anchors, params, &vec![1.0; 3 * anchors.len()])?;
    solve_lwls(&system)
}

/// Least squares with range-based weights (the first stage of the two-stage method).
pub fn estimate_wls_d(
    series: &MeasurementSeries,
    anchors: &[Point3],
    params: &PathLossParams,
) -> Result<Estimate> {
    check_anchor_count(series, anchors)?;
    let avg = series.time_average();
    let system = build_linear_system(&avg, anchors, params, &stage1_weights(&avg.rss, params)?)?;
    solve_lwls(&system)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "proposed")]
    TwoStage,
    #[serde(rename = "ls")]
    Ls,
    #[serde(rename = "wls_d")]
    WlsD,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::TwoStage, Method::Ls, Method::WlsD];

    pub fn name(self) -> &'static str {
        match self {
            Method::TwoStage => "proposed",
            Method::Ls => "ls",
            Method::WlsD => "wls_d",
        }
    }

    pub fn estimate(
        self,
        series: &MeasurementSeries,
        anchors: &[Point3],
        params: &PathLossParams,
    ) -> Result<Estimate> {
        match self {
            Method::TwoStage => estimate_two_stage(series, anchors, params),
            Method::Ls => estimate_ls(series, anchors, params),
            Method::WlsD => estimate_wls_d(series, anchors, params),
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "proposed" | "two_stage" => Ok(Method::TwoStage),
            "ls" => Ok(Method::Ls),
            "wls_d" | "wls-d" => Ok(Method::WlsD),
            other => Err(format!("unknown method `{other}` (expected proposed, ls or wls_d)")),
        }
    }
}
