//! Monte-Carlo RMSE experiments.
//!
//! Every run re-draws the anchor and target placement, the per-anchor noise
//! profiles and the measurement series from its own ChaCha stream
//! ([`crate::rng::stream`] keyed by master seed, sweep-point index and run
//! index). All configured methods then estimate from the same series, so the
//! numbers of one method do not depend on which other methods are enabled.
//!
//! Runs whose estimator fails or reports an ill-conditioned solve are
//! excluded from that method's RMSE and counted as failures.

use std::io::Write;
use std::time::Instant;

use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::config::{ConfigError, ScenarioConfig, SweepParam};
use crate::crlb::{crlb, fim, FimMode};
use crate::error::Error;
use crate::estimators::Method;
use crate::geometry::{PathLossParams, Point3};
use crate::rng::{self, SimRng};
use crate::synthesis::{generate_series, sample_noise_profiles, MeasurementSeries, NoiseProfile};

#[derive(Debug, Error)]
pub enum BenchError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("simulation failed: {0}")]
    Simulation(#[from] Error),
}

pub type BenchResult<T> = std::result::Result<T, BenchError>;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MethodResult {
    pub method: Method,
    /// Root mean squared position error over successful runs; NaN if none succeeded.
    pub rmse_m: f64,
    pub failures: usize,
    pub successes: usize,
    /// Mean wall-clock seconds per fix, when runtime profiling was enabled.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mean_runtime_s: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepPoint {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sweep_value: Option<f64>,
    /// Mean hybrid CRLB over runs with a regular information matrix.
    pub crlb_m: Option<f64>,
    pub crlb_failures: usize,
    pub methods: Vec<MethodResult>,
}

impl SweepPoint {
    pub fn method(&self, method: Method) -> Option<&MethodResult> {
        self.methods.iter().find(|m| m.method == method)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RmseReport {
    pub config: ScenarioConfig,
    pub points: Vec<SweepPoint>,
}

/// Anchor and target placement of one run.
#[derive(Debug, Clone, PartialEq)]
pub struct Placement {
    pub target: Point3,
    pub anchors: Vec<Point3>,
}

fn uniform_point(rng: &mut SimRng, min: &[f64; 3], max: &[f64; 3]) -> Point3 {
    Point3::from_fn(|k, _| rng.random_range(min[k]..max[k]))
}

/// Draws anchors then the target uniformly in the region, starting over
/// whenever some anchor is closer to the target than `d0`.
pub fn draw_placement(config: &ScenarioConfig, rng: &mut SimRng) -> Placement {
    let (min, max) = (&config.region.min, &config.region.max);
    let min_sep = config.path_loss.d0_m;
    loop {
        let anchors: Vec<Point3> = (0..config.n_anchors).map(|_| uniform_point(rng, min, max)).collect();
        let target = uniform_point(rng, min, max);
        if anchors.iter().all(|a| (target - a).norm() >= min_sep) {
            return Placement { target, anchors };
        }
    }
}

/// Everything a single run draws, before any estimator sees it.
#[derive(Debug, Clone)]
pub struct RunInput {
    pub placement: Placement,
    pub profiles: Vec<NoiseProfile>,
    pub series: MeasurementSeries,
}

pub fn draw_run(config: &ScenarioConfig, point: u64, run: u64) -> crate::Result<RunInput> {
    let mut rng = rng::stream(config.seed, point, run);
    let placement = draw_placement(config, &mut rng);
    let profiles = sample_noise_profiles(&config.noise.to_spec(), config.n_anchors, &mut rng)?;
    let series = generate_series(
        &placement.target,
        &placement.anchors,
        &profiles,
        &config.path_loss,
        config.t_steps,
        &mut rng,
    )?;
    Ok(RunInput {
        placement,
        profiles,
        series,
    })
}

struct RunOutcome {
    /// Squared error per configured method, `None` on failure.
    sq_errors: Vec<Option<f64>>,
    runtimes: Vec<f64>,
    crlb: Option<f64>,
}

fn estimate_error(
    method: Method,
    input: &RunInput,
    params: &PathLossParams,
) -> Option<f64> {
    match method.estimate(&input.series, &input.placement.anchors, params) {
        Ok(e) if !e.condition_flag => Some((e.position - input.placement.target).norm_squared()),
        _ => None,
    }
}

fn run_once(config: &ScenarioConfig, point: u64, run: u64) -> crate::Result<RunOutcome> {
    let input = draw_run(config, point, run)?;
    let mut sq_errors = Vec::with_capacity(config.methods.len());
    let mut runtimes = Vec::new();
    for &method in &config.methods {
        if config.profile_runtime {
            let start = Instant::now();
            let err = estimate_error(method, &input, &config.path_loss);
            runtimes.push(start.elapsed().as_secs_f64());
            sq_errors.push(err);
        } else {
            sq_errors.push(estimate_error(method, &input, &config.path_loss));
        }
    }
    let bound = fim(
        &input.placement.target,
        &input.placement.anchors,
        &input.profiles,
        &config.path_loss,
        config.t_steps,
        FimMode::Hybrid,
    )
    .and_then(|f| crlb(&f))
    .ok();
    Ok(RunOutcome {
        sq_errors,
        runtimes,
        crlb: bound,
    })
}

fn run_point(config: &ScenarioConfig, point: u64, sweep_value: Option<f64>) -> BenchResult<SweepPoint> {
    let outcomes = (0..config.mc_runs as u64)
        .into_par_iter()
        .map(|run| run_once(config, point, run))
        .collect::<crate::Result<Vec<_>>>()?;

    let methods = config
        .methods
        .iter()
        .enumerate()
        .map(|(k, &method)| {
            let (mut sum_sq, mut successes) = (0.0, 0usize);
            for o in &outcomes {
                if let Some(e) = o.sq_errors[k] {
                    sum_sq += e;
                    successes += 1;
                }
            }
            let rmse_m = if successes > 0 {
                (sum_sq / successes as f64).sqrt()
            } else {
                f64::NAN
            };
            let mean_runtime_s = config.profile_runtime.then(|| {
                outcomes.iter().map(|o| o.runtimes[k]).sum::<f64>() / outcomes.len() as f64
            });
            MethodResult {
                method,
                rmse_m,
                failures: outcomes.len() - successes,
                successes,
                mean_runtime_s,
            }
        })
        .collect();

    let bounds: Vec<f64> = outcomes.iter().filter_map(|o| o.crlb).collect();
    let crlb_m = (!bounds.is_empty()).then(|| bounds.iter().sum::<f64>() / bounds.len() as f64);
    Ok(SweepPoint {
        sweep_value,
        crlb_m,
        crlb_failures: outcomes.len() - bounds.len(),
        methods,
    })
}

/// Runs the base configuration (any sweep is ignored) as sweep point 0.
pub fn run_monte_carlo(config: &ScenarioConfig) -> BenchResult<RmseReport> {
    let mut base = config.clone();
    base.sweep = None;
    base.validate()?;
    let point = run_point(&base, 0, None)?;
    Ok(RmseReport {
        config: config.clone(),
        points: vec![point],
    })
}

/// Runs one Monte-Carlo point per sweep value; point `k` uses sub-streams
/// keyed by `k`, so appending values leaves earlier points unchanged.
pub fn sweep_parameter(config: &ScenarioConfig) -> BenchResult<RmseReport> {
    config.validate()?;
    let Some(sweep) = &config.sweep else {
        return Err(ConfigError::new("sweep", "a sweep is required").into());
    };
    let points = sweep
        .values
        .iter()
        .enumerate()
        .map(|(k, &v)| {
            let c = config.with_value(sweep.param, v)?;
            log::info!("sweep {} = {v}: {} runs", sweep.param.name(), c.mc_runs);
            run_point(&c, k as u64, Some(v))
        })
        .collect::<BenchResult<Vec<_>>>()?;
    Ok(RmseReport {
        config: config.clone(),
        points,
    })
}

/// Sweeps when the config has a sweep, otherwise a single point.
pub fn run(config: &ScenarioConfig) -> BenchResult<RmseReport> {
    if config.sweep.is_some() {
        sweep_parameter(config)
    } else {
        run_monte_carlo(config)
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

impl RmseReport {
    pub fn sweep_param(&self) -> Option<SweepParam> {
        self.config.sweep.as_ref().map(|s| s.param)
    }

    /// Columns `method,sweep_param,sweep_value,rmse_m,crlb_m,failures,runtime_s`,
    /// one row per method and sweep point. Absent values are left empty.
    pub fn write_csv<W: Write>(&self, writer: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record([
            "method",
            "sweep_param",
            "sweep_value",
            "rmse_m",
            "crlb_m",
            "failures",
            "runtime_s",
        ])?;
        let param = self.sweep_param().map(|p| p.name()).unwrap_or("");
        for point in &self.points {
            for m in &point.methods {
                w.write_record([
                    m.method.name().to_string(),
                    param.to_string(),
                    fmt_opt(point.sweep_value),
                    m.rmse_m.to_string(),
                    fmt_opt(point.crlb_m),
                    m.failures.to_string(),
                    fmt_opt(m.mean_runtime_s),
                ])?;
            }
        }
        w.flush()?;
        Ok(())
    }

    /// Pretty JSON with the full configuration echoed.
    pub fn write_json<W: Write>(&self, writer: W) -> serde_json::Result<()> {
        serde_json::to_writer_pretty(writer, self)
    }
}

/// Mean seconds per fix for one method at one sweep point.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RuntimeEntry {
    pub method: Method,
    pub n_anchors: usize,
    pub t_steps: usize,
    pub runs: usize,
    pub mean_runtime_s: f64,
}

/// Times every configured method on every run, single-threaded, excluding
/// series generation.
pub fn runtime_profile(config: &ScenarioConfig) -> BenchResult<Vec<RuntimeEntry>> {
    config.validate()?;
    let configs: Vec<ScenarioConfig> = match &config.sweep {
        Some(s) => s
            .values
            .iter()
            .map(|v| config.with_value(s.param, *v))
            .collect::<Result<_, _>>()?,
        None => vec![config.clone()],
    };
    let mut out = Vec::new();
    for (k, c) in configs.iter().enumerate() {
        let inputs = (0..c.mc_runs as u64)
            .map(|run| draw_run(c, k as u64, run))
            .collect::<crate::Result<Vec<_>>>()?;
        for &method in &c.methods {
            let start = Instant::now();
            for input in &inputs {
                std::hint::black_box(method.estimate(
                    &input.series,
                    &input.placement.anchors,
                    &c.path_loss,
                ))
                .ok();
            }
            out.push(RuntimeEntry {
                method,
                n_anchors: c.n_anchors,
                t_steps: c.t_steps,
                runs: inputs.len(),
                mean_runtime_s: start.elapsed().as_secs_f64() / inputs.len() as f64,
            });
        }
    }
    Ok(out)
}

/// Columns `method,n_anchors,t_steps,runs,mean_runtime_s`.
pub fn write_runtime_csv<W: Write>(entries: &[RuntimeEntry], writer: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["method", "n_anchors", "t_steps", "runs", "mean_runtime_s"])?;
    for e in entries {
        w.write_record([
            e.method.name().to_string(),
            e.n_anchors.to_string(),
            e.t_steps.to_string(),
            e.runs.to_string(),
            e.mean_runtime_s.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::{presets, NoiseSpecDeg, Sweep};

    fn small(runs: usize) -> ScenarioConfig {
        let mut c = presets::scenario("bench").unwrap();
        c.mc_runs = runs;
        c
    }

    #[test]
    fn near_zero_noise_gives_tiny_rmse() {
        let mut c = small(50);
        c.noise = NoiseSpecDeg {
            mu_m_deg: 1e-12,
            mu_v_deg: 1e-12,
            mu_n_db: 1e-12,
        };
        let report = run_monte_carlo(&c).unwrap();
        for m in &report.points[0].methods {
            assert!(m.rmse_m <= 1e-5, "{}: {}", m.method, m.rmse_m);
            assert_eq!(m.failures, 0);
        }
    }

    #[test]
    fn single_run_rmse_is_error_norm() {
        let c = small(1);
        let report = run_monte_carlo(&c).unwrap();
        let input = draw_run(&c, 0, 0).unwrap();
        for m in &report.points[0].methods {
            let e = m.method.estimate(&input.series, &input.placement.anchors, &c.path_loss).unwrap();
            let err = (e.position - input.placement.target).norm();
            assert_eq!(m.rmse_m, err);
        }
    }

    #[test]
    fn placements_respect_minimum_separation() {
        let mut c = small(1);
        c.region.max = [3.0, 3.0, 3.0];
        c.n_anchors = 6;
        for run in 0..200 {
            let p = draw_placement(&c, &mut rng::stream(1, 0, run));
            assert!(p.anchors.iter().all(|a| (p.target - a).norm() >= 1.0));
            assert!(p.target.iter().all(|v| (0.0..3.0).contains(v)));
        }
    }

    #[test]
    fn reports_are_reproducible() {
        let c = small(40);
        assert_eq!(run_monte_carlo(&c).unwrap(), run_monte_carlo(&c).unwrap());
    }

    #[test]
    fn method_list_does_not_affect_other_methods() {
        let c = small(60);
        let full = run_monte_carlo(&c).unwrap();
        let mut only_ls = c.clone();
        only_ls.methods = vec![Method::Ls];
        let part = run_monte_carlo(&only_ls).unwrap();
        assert_eq!(
            full.points[0].method(Method::Ls),
            part.points[0].method(Method::Ls)
        );
        assert_eq!(full.points[0].crlb_m, part.points[0].crlb_m);
    }

    #[test]
    fn single_value_sweep_equals_plain_run() {
        let mut c = small(30);
        c.noise.mu_m_deg = 8.0;
        let plain = run_monte_carlo(&c).unwrap();
        let mut swept = c.clone();
        swept.sweep = Some(Sweep {
            param: SweepParam::MuMDeg,
            values: vec![8.0],
        });
        let report = sweep_parameter(&swept).unwrap();
        assert_eq!(report.points.len(), 1);
        assert_eq!(report.points[0].methods, plain.points[0].methods);
        assert_eq!(report.points[0].crlb_m, plain.points[0].crlb_m);
    }

    #[test]
    fn appending_sweep_values_keeps_earlier_points() {
        let mut c = small(20);
        c.sweep = Some(Sweep {
            param: SweepParam::TSteps,
            values: vec![3.0, 5.0],
        });
        let a = sweep_parameter(&c).unwrap();
        c.sweep.as_mut().unwrap().values.push(8.0);
        let b = sweep_parameter(&c).unwrap();
        assert_eq!(a.points[..], b.points[..2]);
    }

    #[test]
    fn csv_has_one_row_per_method_and_point() {
        let mut c = presets::scenario("scenario1").unwrap();
        c.mc_runs = 5;
        let report = sweep_parameter(&c).unwrap();
        let mut buf = Vec::new();
        report.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "method,sweep_param,sweep_value,rmse_m,crlb_m,failures,runtime_s");
        assert_eq!(lines.len(), 1 + 3 * 10);
        assert!(lines[1].starts_with("proposed,mu_m_deg,2,"));
        assert!(lines[1].ends_with(','), "runtime column empty without profiling");
    }

    #[test]
    fn profiling_fills_runtime() {
        let mut c = small(10);
        c.profile_runtime = true;
        let report = run_monte_carlo(&c).unwrap();
        assert!(report.points[0].methods.iter().all(|m| m.mean_runtime_s.unwrap() > 0.0));
        let entries = runtime_profile(&small(10)).unwrap();
        assert_eq!(entries.len(), 3);
        assert!(entries.iter().all(|e| e.mean_runtime_s > 0.0 && e.runs == 10));
    }

    #[test]
    fn invalid_config_is_rejected() {
        let mut c = small(0);
        assert!(matches!(run_monte_carlo(&c), Err(BenchError::Config(_))));
        c.mc_runs = 3;
        assert!(matches!(sweep_parameter(&c), Err(BenchError::Config(_))));
    }
}
