//! Independent reference implementations used by the integration tests.
//!
//! Nothing here calls into the library's geometry or solver code; vectors are
//! plain arrays and every formula is written out from the model directly.

#![allow(dead_code)]

use std::f64::consts::{LN_10, PI};

pub type V3 = [f64; 3];

pub fn sub(a: V3, b: V3) -> V3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

pub fn dot(a: V3, b: V3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

pub fn norm(a: V3) -> f64 {
    dot(a, a).sqrt()
}

/// Log-distance model parameters in the order `(p0, d0, gamma)`.
#[derive(Clone, Copy, Debug)]
pub struct Model {
    pub p0: f64,
    pub d0: f64,
    pub gamma: f64,
}

impl Model {
    pub const DEFAULT: Model = Model {
        p0: -10.0,
        d0: 1.0,
        gamma: 2.7,
    };
}

/// Row-by-row construction of the linearised system from averaged
/// measurements. Returns rows and right-hand side in the order azimuth block,
/// elevation block, range block.
pub fn naive_system(
    azimuth: &[f64],
    elevation: &[f64],
    rss: &[f64],
    anchors: &[V3],
    m: Model,
) -> (Vec<V3>, Vec<f64>) {
    let n = anchors.len();
    let beta = m.d0 * 10f64.powf(m.p0 / (10.0 * m.gamma));
    let mut rows = vec![[0.0; 3]; 3 * n];
    let mut rhs = vec![0.0; 3 * n];
    for i in 0..n {
        let (phi, alpha, a) = (azimuth[i], elevation[i], anchors[i]);
        let u = [phi.cos() * alpha.sin(), phi.sin() * alpha.sin(), alpha.cos()];
        let lambda = 10f64.powf(rss[i] / (10.0 * m.gamma));

        rows[i] = [-phi.sin(), phi.cos(), 0.0];
        rhs[i] = -phi.sin() * a[0] + phi.cos() * a[1];

        let ca = alpha.cos();
        rows[n + i] = [ca * u[0], ca * u[1], ca * u[2] - 1.0];
        rhs[n + i] = ca * u[0] * a[0] + ca * u[1] * a[1] + (ca * u[2] - 1.0) * a[2];

        rows[2 * n + i] = [lambda * u[0], lambda * u[1], lambda * u[2]];
        rhs[2 * n + i] = lambda * (u[0] * a[0] + u[1] * a[1] + u[2] * a[2]) + beta;
    }
    (rows, rhs)
}

/// Minimises `sum_k w_k^2 (rows_k . x - rhs_k)^2` by conjugate gradients on
/// the normal equations, restarted until the step stalls.
pub fn cg_minimize(rows: &[V3], rhs: &[f64], weights: &[f64]) -> V3 {
    let mut h = [[0.0; 3]; 3];
    let mut g = [0.0; 3];
    for ((r, b), w) in rows.iter().zip(rhs).zip(weights) {
        let w2 = w * w;
        for i in 0..3 {
            g[i] += w2 * r[i] * b;
            for j in 0..3 {
                h[i][j] += w2 * r[i] * r[j];
            }
        }
    }
    let hmul = |v: V3| -> V3 { [dot(h[0], v), dot(h[1], v), dot(h[2], v)] };
    // Gradient of the cost, evaluated from the rows so that refinement sees
    // the true residual rather than one rounded through the normal matrix.
    let residual = |x: V3| -> V3 {
        let mut out = [0.0; 3];
        for ((r, b), w) in rows.iter().zip(rhs).zip(weights) {
            let e = w * w * (dot(*r, x) - b);
            for i in 0..3 {
                out[i] -= e * r[i];
            }
        }
        out
    };

    let mut x = [0.0; 3];
    let scale = norm(g).max(f64::MIN_POSITIVE);
    for _restart in 0..50 {
        let mut r = residual(x);
        if norm(r) <= 1e-15 * scale {
            break;
        }
        let mut p = r;
        let mut rr = dot(r, r);
        for _ in 0..3 {
            let hp = hmul(p);
            let php = dot(p, hp);
            if php <= 0.0 || rr == 0.0 {
                break;
            }
            let a = rr / php;
            for i in 0..3 {
                x[i] += a * p[i];
                r[i] -= a * hp[i];
            }
            let rr_new = dot(r, r);
            let b = rr_new / rr;
            for i in 0..3 {
                p[i] = r[i] + b * p[i];
            }
            rr = rr_new;
        }
    }
    x
}

/// Per-anchor noise standard deviations (radians, radians, dB).
#[derive(Clone, Copy, Debug)]
pub struct Sigmas {
    pub m: f64,
    pub v: f64,
    pub n: f64,
}

/// One observation per anchor and time step.
#[derive(Clone, Debug)]
pub struct Observations {
    pub azimuth: Vec<Vec<f64>>,
    pub elevation: Vec<Vec<f64>>,
    pub rss: Vec<Vec<f64>>,
}

pub fn true_azimuth(x: V3, a: V3) -> f64 {
    (x[1] - a[1]).atan2(x[0] - a[0])
}

pub fn true_elevation(x: V3, a: V3) -> f64 {
    let d = sub(x, a);
    (d[2] / norm(d)).acos()
}

pub fn true_rss(x: V3, a: V3, m: Model) -> f64 {
    m.p0 - 10.0 * m.gamma * (norm(sub(x, a)) / m.d0).log10()
}

fn wrap(angle: f64) -> f64 {
    let mut a = angle % (2.0 * PI);
    if a > PI {
        a -= 2.0 * PI
    } else if a <= -PI {
        a += 2.0 * PI
    }
    a
}

/// Gaussian log-density of all observations given target `x`, dropping the
/// constant normalisation terms.
pub fn log_density(x: V3, obs: &Observations, anchors: &[V3], sigmas: &[Sigmas], m: Model) -> f64 {
    let mut total = 0.0;
    for (i, &a) in anchors.iter().enumerate() {
        let (phi, alpha, p) = (true_azimuth(x, a), true_elevation(x, a), true_rss(x, a, m));
        let s = sigmas[i];
        for t in 0..obs.azimuth[i].len() {
            let em = wrap(obs.azimuth[i][t] - phi);
            let ev = obs.elevation[i][t] - alpha;
            let en = obs.rss[i][t] - p;
            total -= em * em / (2.0 * s.m * s.m) + ev * ev / (2.0 * s.v * s.v) + en * en / (2.0 * s.n * s.n);
        }
    }
    total
}

/// Observations `truth + sign * noise`, where `noise[i][t]` holds standard
/// normal draws for the three channels.
pub fn perturbed(
    x: V3,
    anchors: &[V3],
    sigmas: &[Sigmas],
    m: Model,
    noise: &[Vec<[f64; 3]>],
    sign: f64,
) -> Observations {
    let mut obs = Observations {
        azimuth: vec![],
        elevation: vec![],
        rss: vec![],
    };
    for (i, &a) in anchors.iter().enumerate() {
        let s = sigmas[i];
        let z = &noise[i];
        obs.azimuth.push(z.iter().map(|e| true_azimuth(x, a) + sign * s.m * e[0]).collect());
        obs.elevation.push(z.iter().map(|e| true_elevation(x, a) + sign * s.v * e[1]).collect());
        obs.rss.push(z.iter().map(|e| true_rss(x, a, m) + sign * s.n * e[2]).collect());
    }
    obs
}

/// Central finite-difference Hessian of `f` at `x` with step `h`.
pub fn fd_hessian(f: impl Fn(V3) -> f64, x: V3, h: f64) -> [[f64; 3]; 3] {
    let shifted = |i: usize, si: f64, j: usize, sj: f64| {
        let mut y = x;
        y[i] += si * h;
        y[j] += sj * h;
        f(y)
    };
    let mut out = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in i..3 {
            let v = (shifted(i, 1.0, j, 1.0) - shifted(i, 1.0, j, -1.0) - shifted(i, -1.0, j, 1.0)
                + shifted(i, -1.0, j, -1.0))
                / (4.0 * h * h);
            out[i][j] = v;
            out[j][i] = v;
        }
    }
    out
}

/// `-E[Hessian of the log-density]` estimated by Monte Carlo over
/// antithetic noise pairs. `noise` holds one standard-normal draw per
/// anchor, time step and channel for each pair.
pub fn fd_fisher(
    x: V3,
    anchors: &[V3],
    sigmas: &[Sigmas],
    m: Model,
    noise_pairs: &[Vec<Vec<[f64; 3]>>],
) -> [[f64; 3]; 3] {
    let min_planar = anchors
        .iter()
        .map(|a| (x[0] - a[0]).hypot(x[1] - a[1]))
        .fold(f64::INFINITY, f64::min);
    let h = 1e-3 * min_planar;
    let mut acc = [[0.0; 3]; 3];
    let mut count = 0.0;
    for noise in noise_pairs {
        for sign in [1.0, -1.0] {
            let obs = perturbed(x, anchors, sigmas, m, noise, sign);
            let hess = fd_hessian(|y| log_density(y, &obs, anchors, sigmas, m), x, h);
            for i in 0..3 {
                for j in 0..3 {
                    acc[i][j] -= hess[i][j];
                }
            }
            count += 1.0;
        }
    }
    acc.map(|row| row.map(|v| v / count))
}

/// Frobenius norm of `a - b` relative to that of `b`.
pub fn rel_frobenius(a: &[[f64; 3]; 3], b: &[[f64; 3]; 3]) -> f64 {
    let mut num = 0.0;
    let mut den = 0.0;
    for i in 0..3 {
        for j in 0..3 {
            num += (a[i][j] - b[i][j]).powi(2);
            den += b[i][j].powi(2);
        }
    }
    (num / den).sqrt()
}

/// Elevation contribution to the (x2, x3) Fisher entry summed over anchors,
/// for `t_steps` observations each.
pub fn elevation_yz_term(x: V3, anchors: &[V3], sigmas: &[Sigmas], t_steps: usize) -> f64 {
    anchors
        .iter()
        .zip(sigmas)
        .map(|(&a, s)| {
            let d = sub(x, a);
            let dd = dot(d, d);
            -(t_steps as f64) * d[1] * d[2] / (s.v * s.v * dd * dd)
        })
        .sum()
}

/// RSS information scale with the logarithm constant dropped, as if the
/// natural log of 10 were replaced by `log10(10) = 1`.
pub fn eta_without_ln10(gamma: f64, sigma_n: f64) -> f64 {
    (10.0 * gamma / sigma_n).powi(2)
}

pub fn eta(gamma: f64, sigma_n: f64) -> f64 {
    (10.0 * gamma / (sigma_n * LN_10)).powi(2)
}

/// RMSE over squared errors.
pub fn rmse(sq_errors: &[f64]) -> f64 {
    (sq_errors.iter().sum::<f64>() / sq_errors.len() as f64).sqrt()
}
