//! Exact quenched quantities for the birth-death chain on a finite window.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::env_model::{EnvError, Environment, Potential};
use crate::error::ErrorClass;

pub const LAPLACE_MIN_DEPTH: usize = 64;
pub const LAPLACE_MAX_DEPTH: usize = 1 << 20;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ChainError {
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error("need a < x < b, got a = {a}, x = {x}, b = {b}")]
    BadOrder { a: i64, x: i64, b: i64 },
    #[error("r = {0} > 0 is not supported")]
    PositiveR(f64),
    #[error("invalid tolerance {0}")]
    BadTolerance(f64),
    #[error("bracket width {achieved:e} above tolerance {tol:e} at depth {depth}")]
    BracketNotReached { achieved: f64, tol: f64, depth: usize },
}

impl ChainError {
    pub fn class(&self) -> ErrorClass {
        match self {
            ChainError::BracketNotReached { .. } => ErrorClass::Convergence,
            ChainError::Env(e) => e.class(),
            _ => ErrorClass::Validation,
        }
    }
}

type Result<T> = std::result::Result<T, ChainError>;

/// Incremental `log(sum exp(x_i))` with a running maximum shift.
#[derive(Debug, Clone, Copy)]
pub struct LogSum {
    max: f64,
    scaled: f64,
}

impl Default for LogSum {
    fn default() -> Self {
        LogSum {
            max: f64::NEG_INFINITY,
            scaled: 0.0,
        }
    }
}

impl LogSum {
    #[inline]
    pub fn add(&mut self, x: f64) {
        if x <= self.max {
            self.scaled += (x - self.max).exp();
        } else {
            self.scaled = self.scaled * (self.max - x).exp() + 1.0;
            self.max = x;
        }
    }

    pub fn value(&self) -> f64 {
        if self.max == f64::NEG_INFINITY {
            f64::NEG_INFINITY
        } else {
            self.max + self.scaled.ln()
        }
    }
}

fn check_order(a: i64, x: i64, b: i64) -> Result<()> {
    if a < x && x < b {
        Ok(())
    } else {
        Err(ChainError::BadOrder { a, x, b })
    }
}

fn log_sum_v(pot: &Potential, from: i64, to: i64) -> f64 {
    let mut s = LogSum::default();
    for k in from..=to {
        s.add(pot.get(k).expect("covered"));
    }
    s.value()
}

/// `P^x(tau_b < tau_a) = sum_{k=a}^{x-1} e^{V(k)} / sum_{k=a}^{b-1} e^{V(k)}`.
pub fn hit_prob_before(pot: &Potential, x: i64, a: i64, b: i64) -> Result<f64> {
    check_order(a, x, b)?;
    pot.require(a, b - 1)?;
    Ok((log_sum_v(pot, a, x - 1) - log_sum_v(pot, a, b - 1)).exp())
}

/// `P^x(tau_a < tau_b)`, evaluated directly rather than as a complement.
pub fn hit_prob_lower_first(pot: &Potential, x: i64, a: i64, b: i64) -> Result<f64> {
    check_order(a, x, b)?;
    pot.require(a, b - 1)?;
    Ok((log_sum_v(pot, x, b - 1) - log_sum_v(pot, a, b - 1)).exp())
}

/// `E^x(tau_a ^ tau_b)` from the one-step equations
/// `T_i = 1 + omega_i T_{i+1} + (1 - omega_i) T_{i-1}`, `T_a = T_b = 0`.
pub fn expected_exit_time_exact(env: &Environment, x: i64, a: i64, b: i64) -> Result<f64> {
    check_order(a, x, b)?;
    let n = (b - a - 1) as usize;
    let mut om = Vec::with_capacity(n);
    for i in a + 1..b {
        om.push(env.omega_checked(i)?);
    }
    // Thomas algorithm on -q_i T_{i-1} + T_i - w_i T_{i+1} = 1
    let mut c = vec![0.0; n];
    let mut d = vec![0.0; n];
    for k in 0..n {
        let (w, q) = (om[k], 1.0 - om[k]);
        let (cp, dp) = if k == 0 { (0.0, 0.0) } else { (c[k - 1], d[k - 1]) };
        let denom = 1.0 - q * cp;
        c[k] = w / denom;
        d[k] = (1.0 + q * dp) / denom;
    }
    let mut t = vec![0.0; n];
    t[n - 1] = d[n - 1];
    for k in (0..n - 1).rev() {
        t[k] = d[k] + c[k] * t[k + 1];
    }
    Ok(t[(x - a - 1) as usize])
}

/// `sum_{k=x}^{b-1} sum_{l=a}^{k} exp(V(k) - V(l)) / omega_l`, an upper bound
/// for `E^x(tau_a ^ tau_b)`.
pub fn expected_exit_time_bound(
    env: &Environment,
    pot: &Potential,
    x: i64,
    a: i64,
    b: i64,
) -> Result<f64> {
    check_order(a, x, b)?;
    pot.require(a, b - 1)?;
    let mut inner = LogSum::default();
    let mut outer = LogSum::default();
    for k in a..b {
        let w = env.omega_checked(k)?;
        inner.add(-pot.get(k).expect("covered") - w.ln());
        if k >= x {
            outer.add(pot.get(k).expect("covered") + inner.value());
        }
    }
    Ok(outer.value().exp())
}

/// `(P^{m-1}(tau_a < tau_m), P^{m+1}(tau_b < tau_m))`.
pub fn single_excursion_escape_prob(pot: &Potential, m: i64, a: i64, b: i64) -> Result<(f64, f64)> {
    check_order(a, m - 1, m)?;
    check_order(m, m + 1, b)?;
    let left = hit_prob_lower_first(pot, m - 1, a, m)?;
    let right = hit_prob_before(pot, m + 1, m, b)?;
    Ok((left, right))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    /// `tau_1` from 0.
    Right,
    /// `tau_{-1}` from 0.
    Left,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LaplaceEval {
    pub r: f64,
    /// `E(e^{r tau})`, from the lower run.
    pub phi: f64,
    /// `E(tau e^{r tau})`.
    pub dphi: f64,
    /// `E(tau^2 e^{r tau})`.
    pub d2phi: f64,
    /// Upper-run value of `phi`.
    pub phi_upper: f64,
    pub bracket_width: f64,
    /// Rigorous bounds on the truncation error of `dphi` and `d2phi`.
    pub dphi_err: f64,
    pub d2phi_err: f64,
    pub depth_used: usize,
}

#[derive(Debug, Clone, Copy)]
struct Run {
    phi: f64,
    d1: f64,
    d2: f64,
}

/// One pass of `phi_i = p_i a / (1 - (1 - p_i) a phi_{i-1})` over the `depth`
/// sites nearest the origin, farthest first, with analytic `r`-derivatives.
fn laplace_pass(p: &impl Fn(usize) -> f64, depth: usize, r: f64, boundary: f64) -> Run {
    let a = r.exp();
    let (mut phi, mut d1, mut d2) = (boundary, 0.0, 0.0);
    for k in (0..depth).rev() {
        let w = p(k);
        let qa = (1.0 - w) * a;
        let den = 1.0 - qa * phi;
        let dd = -qa * (phi + d1);
        let ddd = -qa * (phi + 2.0 * d1 + d2);
        let np = w * a / den;
        let g = dd / den;
        let nd1 = np * (1.0 - g);
        let nd2 = nd1 * (1.0 - g) - np * (ddd / den - g * g);
        phi = np;
        d1 = nd1;
        d2 = nd2;
    }
    Run { phi, d1, d2 }
}

/// Bracketed evaluation of the first-passage transform from probabilities
/// `p(k)` of stepping toward the target at distance `k` from the origin.
/// At most `available` sites are used.
pub fn laplace_from_steps(
    p: impl Fn(usize) -> f64,
    available: usize,
    r: f64,
    tol: f64,
) -> Result<LaplaceEval> {
    if r > 0.0 || r.is_nan() {
        return Err(ChainError::PositiveR(r));
    }
    if !(tol > 0.0) {
        return Err(ChainError::BadTolerance(tol));
    }
    if r == 0.0 {
        return Ok(LaplaceEval {
            r,
            phi: 1.0,
            dphi: f64::INFINITY,
            d2phi: f64::INFINITY,
            phi_upper: 1.0,
            bracket_width: 0.0,
            dphi_err: 0.0,
            d2phi_err: 0.0,
            depth_used: 0,
        });
    }
    let cap = available.min(LAPLACE_MAX_DEPTH);
    let mut depth = LAPLACE_MIN_DEPTH.min(cap);
    loop {
        let lo = laplace_pass(&p, depth, r, 0.0);
        let hi = laplace_pass(&p, depth, r, 1.0);
        let width = hi.phi - lo.phi;
        if width <= tol {
            let lo2 = laplace_pass(&p, depth, r / 2.0, 0.0);
            let hi2 = laplace_pass(&p, depth, r / 2.0, 1.0);
            let w2 = (hi2.phi - lo2.phi).max(0.0);
            let e = std::f64::consts::E;
            return Ok(LaplaceEval {
                r,
                phi: lo.phi,
                dphi: lo.d1,
                d2phi: lo.d2,
                phi_upper: hi.phi,
                bracket_width: width.max(0.0),
                dphi_err: 2.0 / (e * r.abs()) * w2,
                d2phi_err: (4.0 / (e * r.abs())).powi(2) * w2,
                depth_used: depth,
            });
        }
        if depth >= cap {
            return Err(ChainError::BracketNotReached {
                achieved: width,
                tol,
                depth,
            });
        }
        depth = (2 * depth).min(cap);
    }
}

/// `E_omega(e^{r tau_1})` (right) or `E_omega(e^{r tau_{-1}})` (left) with
/// its first two `r`-derivatives.
pub fn quenched_laplace(env: &Environment, r: f64, direction: Direction, tol: f64) -> Result<LaplaceEval> {
    match direction {
        Direction::Right => {
            if env.lo() > 0 || env.hi() < 0 {
                return Err(EnvError::OutOfWindow {
                    index: 0,
                    lo: env.lo(),
                    hi: env.hi(),
                }
                .into());
            }
            let available = (1 - env.lo()) as usize;
            laplace_from_steps(|k| env.omega_at(-(k as i64)).expect("covered"), available, r, tol)
        }
        Direction::Left => {
            if env.lo() > 0 || env.hi() < 0 {
                return Err(EnvError::OutOfWindow {
                    index: 0,
                    lo: env.lo(),
                    hi: env.hi(),
                }
                .into());
            }
            let available = (env.hi() + 1) as usize;
            laplace_from_steps(
                |k| 1.0 - env.omega_at(k as i64).expect("covered"),
                available,
                r,
                tol,
            )
        }
    }
}

/// Lower-run values of `phi` at every depth `64, 128, ...` up to `max_depth`,
/// paired with the upper-run values; used to audit bracketing.
pub fn laplace_bracket_history(
    env: &Environment,
    r: f64,
    max_depth: usize,
) -> Vec<(usize, f64, f64)> {
    let available = ((1 - env.lo()).max(0) as usize).min(max_depth);
    let p = |k: usize| env.omega_at(-(k as i64)).expect("covered");
    let mut out = Vec::new();
    let mut depth = LAPLACE_MIN_DEPTH.min(available);
    while depth <= available && depth > 0 {
        let lo = laplace_pass(&p, depth, r, 0.0);
        let hi = laplace_pass(&p, depth, r, 1.0);
        out.push((depth, lo.phi, hi.phi));
        if depth == available {
            break;
        }
        depth = (2 * depth).min(available);
    }
    out
}
