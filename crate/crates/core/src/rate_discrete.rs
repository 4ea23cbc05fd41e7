//! Annealed cumulant function of the first-passage time, the curvature
//! criterion and a Legendre reconstruction of the quenched rate function.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::chain_exact::{laplace_from_steps, ChainError, LAPLACE_MAX_DEPTH};
use crate::env_model::EnvDistribution;
use crate::error::ErrorClass;
use crate::rng::{site_uniform, substream_seed, Domain};
use crate::stats::{pairwise_sum, run_replicas};

/// Default Laplace-bracket tolerance.
pub const DEFAULT_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RateError {
    #[error(transparent)]
    Chain(#[from] ChainError),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("velocity {0} outside (0, 1]")]
    VelocityOutOfRange(f64),
}

impl RateError {
    pub fn class(&self) -> ErrorClass {
        match self {
            RateError::Chain(e) => e.class(),
            _ => ErrorClass::Validation,
        }
    }
}

type Result<T> = std::result::Result<T, RateError>;

/// Sampling setup shared by the cumulant-function estimators.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CgfConfig {
    pub env_samples: u64,
    /// Largest recursion depth (sites to the left of the origin).
    pub window: usize,
    pub tol: f64,
    pub seed: u64,
    pub threads: usize,
}

impl CgfConfig {
    pub fn new(env_samples: u64, seed: u64) -> Self {
        CgfConfig {
            env_samples,
            window: LAPLACE_MAX_DEPTH,
            tol: DEFAULT_TOL,
            seed,
            threads: 1,
        }
    }

    pub fn threads(mut self, threads: usize) -> Self {
        self.threads = threads.max(1);
        self
    }

    fn validate(&self) -> Result<()> {
        if self.env_samples < 100 {
            return Err(RateError::InvalidArgument(format!(
                "env_samples = {} must be at least 100",
                self.env_samples
            )));
        }
        if self.window < 1 || !(self.tol > 0.0) {
            return Err(RateError::InvalidArgument("window and tol must be positive".into()));
        }
        Ok(())
    }

    fn env_seed(&self, k: u64) -> u64 {
        substream_seed(self.seed, Domain::Environment, k)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CgfPoint {
    pub r: f64,
    /// `Lambda(r) = E log phi`.
    pub lambda: f64,
    /// `E[phi'/phi]`.
    pub d_lambda: f64,
    /// `E[phi''/phi - (phi'/phi)^2]`.
    pub d2_lambda: f64,
    /// `Lambda'' / Lambda'^3`.
    pub f: f64,
    /// `E[phi''/phi] / Lambda'^3`.
    pub g: f64,
    /// `(e / eps0) E[phi''] / E[phi']^3`.
    pub h: f64,
    /// Standard error of `lambda` over environments.
    pub mc_err: f64,
    pub f_err: f64,
    pub g_err: f64,
    pub h_err: f64,
    pub env_samples: u64,
    /// Largest Laplace bracket width over the sampled environments.
    pub max_bracket: f64,
}

impl CgfPoint {
    /// `0 <= f <= g <= h` up to `k` standard errors.
    pub fn chain_holds(&self, k: f64) -> bool {
        self.f >= -k * self.f_err
            && self.f <= self.g + k * (self.f_err + self.g_err)
            && self.g <= self.h + k * (self.g_err + self.h_err)
    }
}

#[derive(Debug, Clone, Copy)]
struct Sample {
    phi: f64,
    d1: f64,
    d2: f64,
    width: f64,
}

fn sample_env(dist: &EnvDistribution, r: f64, seed: u64, cfg: &CgfConfig) -> Result<Sample> {
    let l = laplace_from_steps(
        |k| dist.quantile(site_uniform(seed, -(k as i64))),
        cfg.window,
        r,
        cfg.tol,
    )?;
    Ok(Sample {
        phi: l.phi,
        d1: l.dphi,
        d2: l.d2phi,
        width: l.bracket_width,
    })
}

fn sample_mean(xs: &[f64]) -> f64 {
    pairwise_sum(xs) / xs.len() as f64
}

/// Covariance of two sample columns with divisor `n - 1`.
fn cov(x: &[f64], mx: f64, y: &[f64], my: f64) -> f64 {
    let prods: Vec<f64> = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).collect();
    pairwise_sum(&prods) / (x.len() as f64 - 1.0)
}

/// Delta-method standard error of `A / B^3`, where `A` and `B` are the means
/// of `a` and `b`, scaled by `c`.
fn ratio_cube_err(a: &[f64], b: &[f64], c: f64) -> f64 {
    let (ma, mb) = (sample_mean(a), sample_mean(b));
    let ga = c / mb.powi(3);
    let gb = -3.0 * c * ma / mb.powi(4);
    let var = ga * ga * cov(a, ma, a, ma) + 2.0 * ga * gb * cov(a, ma, b, mb) + gb * gb * cov(b, mb, b, mb);
    (var.max(0.0) / a.len() as f64).sqrt()
}

fn assemble(r: f64, eps0: f64, samples: &[Sample]) -> CgfPoint {
    let n = samples.len();
    let logp: Vec<f64> = samples.iter().map(|s| s.phi.ln()).collect();
    let u: Vec<f64> = samples.iter().map(|s| s.d1 / s.phi).collect();
    let w: Vec<f64> = samples.iter().map(|s| s.d2 / s.phi).collect();
    let curv: Vec<f64> = u.iter().zip(&w).map(|(u, w)| w - u * u).collect();
    let d1: Vec<f64> = samples.iter().map(|s| s.d1).collect();
    let d2: Vec<f64> = samples.iter().map(|s| s.d2).collect();
    let lambda = sample_mean(&logp);
    let dl = sample_mean(&u);
    let d2l = sample_mean(&curv);
    let c = std::f64::consts::E / eps0;
    let mc_err = (cov(&logp, lambda, &logp, lambda) / n as f64).sqrt();
    CgfPoint {
        r,
        lambda,
        d_lambda: dl,
        d2_lambda: d2l,
        f: d2l / dl.powi(3),
        g: sample_mean(&w) / dl.powi(3),
        h: c * sample_mean(&d2) / sample_mean(&d1).powi(3),
        mc_err,
        f_err: ratio_cube_err(&curv, &u, 1.0),
        g_err: ratio_cube_err(&w, &u, 1.0),
        h_err: ratio_cube_err(&d2, &d1, c),
        env_samples: n as u64,
        max_bracket: samples.iter().map(|s| s.width).fold(0.0, f64::max),
    }
}

/// `Lambda(r)` and its derivatives, averaged over `env_samples` environments.
pub fn annealed_cgf(dist: &EnvDistribution, r: f64, cfg: &CgfConfig) -> Result<CgfPoint> {
    cfg.validate()?;
    if !(r < 0.0) {
        return Err(RateError::InvalidArgument(format!("r = {r} must be < 0")));
    }
    let res = run_replicas(cfg.env_samples, cfg.threads, |k| sample_env(dist, r, cfg.env_seed(k), cfg));
    let samples = res.into_iter().collect::<Result<Vec<_>>>()?;
    Ok(assemble(r, dist.eps0(), &samples))
}

/// Cumulant points over `r_grid`, all computed on the same environments.
pub fn annealed_cgf_grid(dist: &EnvDistribution, r_grid: &[f64], cfg: &CgfConfig) -> Result<Vec<CgfPoint>> {
    r_grid.iter().map(|&r| annealed_cgf(dist, r, cfg)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvatureTrend {
    /// Points sorted by `r` increasing (toward `0-`).
    pub points: Vec<CgfPoint>,
    pub f_nonnegative: bool,
    pub chain_ok: bool,
    /// `f` at the point nearest 0 is below `f` at the farthest point.
    pub f_end_below_start: bool,
    /// `f` nonincreasing toward 0 along the grid, within 3 standard errors.
    pub f_monotone: bool,
    /// OLS slope of `log h` against `log |r|` over the three points nearest 0.
    pub h_slope: f64,
}

pub fn curvature_trend(dist: &EnvDistribution, r_grid: &[f64], cfg: &CgfConfig) -> Result<CurvatureTrend> {
    if r_grid.len() < 3 || r_grid.iter().any(|r| !(*r < 0.0)) {
        return Err(RateError::InvalidArgument(
            "grid needs at least three strictly negative values".into(),
        ));
    }
    let mut grid = r_grid.to_vec();
    grid.sort_by(f64::total_cmp);
    grid.dedup();
    let points = annealed_cgf_grid(dist, &grid, cfg)?;
    let last3 = &points[points.len() - 3..];
    let x: Vec<f64> = last3.iter().map(|p| p.r.abs().ln()).collect();
    let y: Vec<f64> = last3.iter().map(|p| p.h.ln()).collect();
    let (first, last) = (points[0], points[points.len() - 1]);
    Ok(CurvatureTrend {
        f_nonnegative: points.iter().all(|p| p.f >= 0.0),
        chain_ok: points.iter().all(|p| p.chain_holds(3.0)),
        f_end_below_start: last.f < first.f,
        f_monotone: points
            .windows(2)
            .all(|w| w[1].f <= w[0].f + 3.0 * (w[0].f_err + w[1].f_err)),
        h_slope: crate::stats::ols_slope(&x, &y),
        points,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RatePoint {
    pub velocity: f64,
    /// `sup_{r <= 0} (r - v Lambda(r))`.
    pub i: f64,
    /// Central second difference over the velocity grid (NaN at the ends).
    pub i_second_diff: f64,
    pub r_star: f64,
    /// `1 / f(r_star)`, the curvature predicted by the duality.
    pub inv_f_at_r_star: f64,
}

/// Vertex of the parabola through three points, if it is a maximum inside
/// `[x0, x2]`.
fn parabola_max(x: [f64; 3], y: [f64; 3]) -> Option<(f64, f64)> {
    let d1 = (y[1] - y[0]) / (x[1] - x[0]);
    let d2 = (y[2] - y[1]) / (x[2] - x[1]);
    let a = (d2 - d1) / (x[2] - x[0]);
    if !(a < 0.0) {
        return None;
    }
    let b = d1 - a * (x[0] + x[1]);
    let xv = -b / (2.0 * a);
    if !(xv >= x[0] && xv <= x[2]) {
        return None;
    }
    let yv = y[1] + (xv - x[1]) * (d1 + a * (xv - x[0]));
    Some((xv, yv))
}

fn interp(points: &[CgfPoint], r: f64, sel: impl Fn(&CgfPoint) -> f64) -> f64 {
    let k = points.partition_point(|p| p.r < r);
    if k == 0 {
        return sel(&points[0]);
    }
    if k == points.len() {
        return sel(&points[k - 1]);
    }
    let (a, b) = (&points[k - 1], &points[k]);
    let t = (r - a.r) / (b.r - a.r);
    sel(a) + t * (sel(b) - sel(a))
}

/// Legendre reconstruction from precomputed cumulant points (sorted by `r`).
pub fn rate_function_from_points(points: &[CgfPoint], velocities: &[f64]) -> Result<Vec<RatePoint>> {
    if points.len() < 3 {
        return Err(RateError::InvalidArgument("need at least three r points".into()));
    }
    if points.windows(2).any(|w| !(w[0].r < w[1].r)) {
        return Err(RateError::InvalidArgument("r points must be strictly increasing".into()));
    }
    let mut vs = velocities.to_vec();
    for &v in &vs {
        if !(v > 0.0 && v <= 1.0) {
            return Err(RateError::VelocityOutOfRange(v));
        }
    }
    vs.sort_by(f64::total_cmp);
    vs.dedup();
    let mut out: Vec<RatePoint> = vs
        .iter()
        .map(|&v| {
            let vals: Vec<f64> = points.iter().map(|p| p.r - v * p.lambda).collect();
            let j = (0..vals.len()).fold(0, |b, i| if vals[i] > vals[b] { i } else { b });
            let (mut rs, mut best) = (points[j].r, vals[j]);
            if j > 0 && j + 1 < points.len() {
                let x = [points[j - 1].r, points[j].r, points[j + 1].r];
                let y = [vals[j - 1], vals[j], vals[j + 1]];
                if let Some((xv, yv)) = parabola_max(x, y) {
                    if yv >= best {
                        rs = xv;
                        best = yv;
                    }
                }
            }
            RatePoint {
                velocity: v,
                i: best.max(0.0),
                i_second_diff: f64::NAN,
                r_star: rs,
                inv_f_at_r_star: 1.0 / interp(points, rs, |p| p.f),
            }
        })
        .collect();
    for k in 1..out.len().saturating_sub(1) {
        let (h1, h2) = (out[k].velocity - out[k - 1].velocity, out[k + 1].velocity - out[k].velocity);
        let s1 = (out[k].i - out[k - 1].i) / h1;
        let s2 = (out[k + 1].i - out[k].i) / h2;
        out[k].i_second_diff = 2.0 * (s2 - s1) / (h1 + h2);
    }
    Ok(out)
}

/// Cumulant points on `r_grid`, then the Legendre reconstruction on
/// `velocities`.
pub fn rate_function_table(
    dist: &EnvDistribution,
    r_grid: &[f64],
    velocities: &[f64],
    cfg: &CgfConfig,
) -> Result<(Vec<CgfPoint>, Vec<RatePoint>)> {
    let mut grid = r_grid.to_vec();
    grid.sort_by(f64::total_cmp);
    grid.dedup();
    let points = annealed_cgf_grid(dist, &grid, cfg)?;
    let rates = rate_function_from_points(&points, velocities)?;
    Ok((points, rates))
}
