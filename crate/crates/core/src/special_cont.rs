//! Modified Bessel-K ratios and the rate functions of the diffusion in a
//! drifted Brownian potential.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::error::ErrorClass;

/// Default relative tolerance for the Bessel continued fraction.
pub const BESSEL_TOL: f64 = 1e-15;

const CF_MAX_ITER: usize = 2_000_000;
const SCAN_POINTS: usize = 32;
const INV_PHI: f64 = 0.618_033_988_749_894_9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SpecialError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("continued fraction for K ratio at (nu = {nu}, y = {y}) stopped at relative change {achieved:e}")]
    NoConvergence { nu: f64, y: f64, achieved: f64 },
    #[error("objective is not unimodal on [0, {upper}] for kappa = {kappa}, u = {u}")]
    NotUnimodal { kappa: f64, u: f64, upper: f64 },
}

impl SpecialError {
    pub fn class(&self) -> ErrorClass {
        match self {
            SpecialError::InvalidArgument(_) => ErrorClass::Validation,
            _ => ErrorClass::Convergence,
        }
    }
}

type Result<T> = std::result::Result<T, SpecialError>;

/// Taylor coefficients of `1/Gamma(z) = sum_k C[k-1] z^k`.
const RGAMMA: [f64; 26] = [
    1.0,
    0.577_215_664_901_532_9,
    -0.655_878_071_520_253_8,
    -0.042_002_635_034_095_2,
    0.166_538_611_382_291_5,
    -0.042_197_734_555_544_3,
    -0.009_621_971_527_877_0,
    0.007_218_943_246_663_0,
    -0.001_165_167_591_859_1,
    -0.000_215_241_674_114_9,
    0.000_128_050_282_388_2,
    -0.000_020_134_854_780_7,
    -0.000_001_250_493_482_1,
    0.000_001_133_027_232_0,
    -0.000_000_205_633_841_7,
    0.000_000_006_116_095_0,
    0.000_000_005_002_007_5,
    -0.000_000_001_181_274_6,
    0.000_000_000_104_342_7,
    0.000_000_000_007_782_3,
    -0.000_000_000_003_696_8,
    0.000_000_000_000_510_0,
    -0.000_000_000_000_020_6,
    -0.000_000_000_000_005_4,
    0.000_000_000_000_001_4,
    0.000_000_000_000_000_1,
];

/// `(1/Gamma(1+mu), 1/Gamma(1-mu), gam1, gam2)` for `|mu| <= 1/2`, with
/// `gam1 = (1/Gamma(1-mu) - 1/Gamma(1+mu)) / (2 mu)` and
/// `gam2 = (1/Gamma(1-mu) + 1/Gamma(1+mu)) / 2`.
fn gamma_terms(mu: f64) -> (f64, f64, f64, f64) {
    // 1/Gamma(1 + mu) = sum_k RGAMMA[k] mu^k, split into even and odd parts
    let mut even = 0.0;
    let mut odd_over_mu = 0.0;
    let m2 = mu * mu;
    let mut pw = 1.0;
    for k in (0..RGAMMA.len()).step_by(2) {
        even += RGAMMA[k] * pw;
        if k + 1 < RGAMMA.len() {
            odd_over_mu += RGAMMA[k + 1] * pw;
        }
        pw *= m2;
    }
    let odd = mu * odd_over_mu;
    (even + odd, even - odd, -odd_over_mu, even)
}

/// `K_{mu+1}(y) / K_mu(y)` for `|mu| <= 1/2` and small `y` by Temme's series.
fn k_ratio_temme(mu: f64, y: f64, tol: f64) -> f64 {
    let x2 = 0.5 * y;
    let pimu = std::f64::consts::PI * mu;
    let fact = if pimu.abs() < 1e-15 { 1.0 } else { pimu / pimu.sin() };
    let d = -x2.ln();
    let e = mu * d;
    let fact2 = if e.abs() < 1e-15 { 1.0 } else { e.sinh() / e };
    let (gampl, gammi, gam1, gam2) = gamma_terms(mu);
    let mut ff = fact * (gam1 * e.cosh() + gam2 * fact2 * d);
    let mut sum = ff;
    let ee = e.exp();
    let mut p = 0.5 * ee / gampl;
    let mut q = 0.5 / (ee * gammi);
    let mut c = 1.0;
    let dd = x2 * x2;
    let mut sum1 = p;
    let mu2 = mu * mu;
    for i in 1..10_000 {
        let fi = i as f64;
        ff = (fi * ff + p + q) / (fi * fi - mu2);
        c *= dd / fi;
        p /= fi - mu;
        q /= fi + mu;
        let del = c * ff;
        sum += del;
        sum1 += c * (p - fi * ff);
        if del.abs() < sum.abs() * tol.max(1e-17) {
            break;
        }
    }
    sum1 * (2.0 / y) / sum
}

/// `K_{mu+1}(y) / K_mu(y)` for `|mu| <= 1/2` by Steed's evaluation of the
/// second continued fraction.
fn k_ratio_steed(mu: f64, y: f64, tol: f64) -> Result<f64> {
    let a1 = 0.25 - mu * mu;
    let mut b = 2.0 * (1.0 + y);
    let mut d = 1.0 / b;
    let mut delh = d;
    let mut h = d;
    let mut a = -a1;
    let mut last = f64::INFINITY;
    for i in 1..CF_MAX_ITER {
        a -= 2.0 * i as f64;
        b += 2.0;
        d = 1.0 / (b + a * d);
        delh *= b * d - 1.0;
        h += delh;
        last = (delh / h).abs();
        if last < tol {
            return Ok((mu + y + 0.5 - a1 * h) / y);
        }
    }
    Err(SpecialError::NoConvergence {
        nu: mu,
        y,
        achieved: last,
    })
}

fn k_ratio_base(mu: f64, y: f64, tol: f64) -> Result<f64> {
    if y < 2.0 {
        Ok(k_ratio_temme(mu, y, tol))
    } else {
        k_ratio_steed(mu, y, tol)
    }
}

/// `R_nu(y) = K_nu(y) / K_{nu+1}(y)`.
pub fn bessel_k_ratio(nu: f64, y: f64, tol: f64) -> Result<f64> {
    if !(y > 0.0) || !y.is_finite() || !nu.is_finite() {
        return Err(SpecialError::InvalidArgument(format!(
            "K ratio needs finite nu and y > 0, got nu = {nu}, y = {y}"
        )));
    }
    if !(tol > 0.0) {
        return Err(SpecialError::InvalidArgument(format!("tol = {tol}")));
    }
    if nu < -0.5 {
        // K_{-s} = K_s
        return Ok(1.0 / bessel_k_ratio(-nu - 1.0, y, tol)?);
    }
    let n = (nu + 0.5).floor();
    let mu = nu - n;
    let mut t = k_ratio_base(mu, y, tol).map_err(|e| match e {
        SpecialError::NoConvergence { achieved, .. } => SpecialError::NoConvergence { nu, y, achieved },
        other => other,
    })?;
    for k in 1..=(n as usize) {
        t = 2.0 * (mu + k as f64) / y + 1.0 / t;
    }
    Ok(1.0 / t)
}

/// `v_kappa = (kappa - 1)^+ / 4`.
pub fn v_kappa(kappa: f64) -> f64 {
    (kappa - 1.0).max(0.0) / 4.0
}

fn check_kappa(kappa: f64) -> Result<()> {
    if kappa > 0.0 && kappa.is_finite() {
        Ok(())
    } else {
        Err(SpecialError::InvalidArgument(format!("kappa = {kappa} must be > 0")))
    }
}

/// `Gamma_kappa(lambda) = sqrt(2 lambda) K_{kappa-1}(z) / K_kappa(z)`,
/// `z = 4 sqrt(2 lambda)`.
pub fn gamma_kappa(kappa: f64, lambda: f64, tol: f64) -> Result<f64> {
    check_kappa(kappa)?;
    if !(lambda >= 0.0) || !lambda.is_finite() {
        return Err(SpecialError::InvalidArgument(format!(
            "lambda = {lambda} must be >= 0"
        )));
    }
    if lambda == 0.0 {
        return Ok(0.0);
    }
    let s = (2.0 * lambda).sqrt();
    Ok(s * bessel_k_ratio(kappa - 1.0, 4.0 * s, tol)?)
}

/// `(phi_v(x), A(x))` with `phi_v(x) = sqrt(2x + v^2) - v` and
/// `A(x) = (-x - v^2 + v sqrt(2x + v^2)) / sqrt(2x + v^2)`.
pub fn phi_and_a(kappa: f64, x: f64) -> Result<(f64, f64)> {
    check_kappa(kappa)?;
    if !(x > 0.0) || !x.is_finite() {
        return Err(SpecialError::InvalidArgument(format!("x = {x} must be > 0")));
    }
    let v = v_kappa(kappa);
    let s = (2.0 * x + v * v).sqrt();
    // s - v written without cancellation
    let phi = 2.0 * x / (s + v);
    // v s - v^2 = v phi
    let a = (-x + v * phi) / s;
    debug_assert!(a < 0.0);
    Ok((phi, a))
}

/// Residual `x G' - 2 G^2 - kappa G + 4x` of the Riccati equation, with `G'`
/// from a central difference of step `h`.
pub fn ode_residual(kappa: f64, x: f64, h: Option<f64>, tol: f64) -> Result<f64> {
    let h = h.unwrap_or_else(|| (1e-6f64).max(1e-6 * x));
    if !(x > h && h > 0.0) {
        return Err(SpecialError::InvalidArgument(format!(
            "need x > h > 0, got x = {x}, h = {h}"
        )));
    }
    let g = gamma_kappa(kappa, x, tol)?;
    let dg = (gamma_kappa(kappa, x + h, tol)? - gamma_kappa(kappa, x - h, tol)?) / (2.0 * h);
    Ok(x * dg - 2.0 * g * g - kappa * g + 4.0 * x)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateI {
    pub value: f64,
    pub lambda_star: f64,
}

/// `I_kappa(u) = sup_{lambda >= 0} (Gamma_kappa(lambda) - lambda u)`.
pub fn rate_i(kappa: f64, u: f64, tol: f64) -> Result<RateI> {
    check_kappa(kappa)?;
    if !(u > 0.0) || !u.is_finite() {
        return Err(SpecialError::InvalidArgument(format!("u = {u} must be > 0")));
    }
    let obj = |l: f64| gamma_kappa(kappa, l, tol).map(|g| g - l * u);
    let mut upper = 4.0 / (u * u);
    for attempt in 0..2 {
        let step = upper / SCAN_POINTS as f64;
        let vals = (0..=SCAN_POINTS)
            .map(|k| obj(k as f64 * step))
            .collect::<Result<Vec<_>>>()?;
        let k = vals
            .iter()
            .enumerate()
            .fold(0, |best, (i, v)| if *v > vals[best] { i } else { best });
        let slack = 1e-12 * (1.0 + vals[k].abs());
        let unimodal = vals[..=k].windows(2).all(|w| w[1] >= w[0] - slack)
            && vals[k..].windows(2).all(|w| w[1] <= w[0] + slack);
        if !unimodal || (k == SCAN_POINTS && attempt == 0) {
            upper *= 4.0;
            continue;
        }
        let mut lo = k.saturating_sub(1) as f64 * step;
        let mut hi = (k + 1).min(SCAN_POINTS) as f64 * step;
        let mut c = hi - INV_PHI * (hi - lo);
        let mut d = lo + INV_PHI * (hi - lo);
        let (mut fc, mut fd) = (obj(c)?, obj(d)?);
        while hi - lo > 1e-13 * (1.0 + hi) {
            if fc >= fd {
                hi = d;
                d = c;
                fd = fc;
                c = hi - INV_PHI * (hi - lo);
                fc = obj(c)?;
            } else {
                lo = c;
                c = d;
                fc = fd;
                d = lo + INV_PHI * (hi - lo);
                fd = obj(d)?;
            }
        }
        let (mut ls, mut best) = if fc >= fd { (c, fc) } else { (d, fd) };
        if vals[0] >= best {
            ls = 0.0;
            best = vals[0];
        }
        return Ok(RateI {
            value: best.max(0.0),
            lambda_star: ls,
        });
    }
    Err(SpecialError::NotUnimodal { kappa, u, upper })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContRatePoint {
    pub kappa: f64,
    pub v_kappa: f64,
    /// The speed `x`; `I` is evaluated at `u = 1/x`.
    pub argument: f64,
    /// `Gamma_kappa` at `lambda_star`.
    pub gamma: f64,
    /// `phi_{v_kappa}` at `lambda_star`.
    pub phi_v: f64,
    pub i_kappa: f64,
    pub lambda_star: f64,
    pub j_kappa: f64,
    pub j_b: f64,
}

/// `J_kappa(x) = x I_kappa(1/x)` next to `J^B(x) = (x - v_kappa)^2 / 2`.
pub fn rate_j(kappa: f64, x: f64, tol: f64) -> Result<ContRatePoint> {
    if !(x > 0.0) || !x.is_finite() {
        return Err(SpecialError::InvalidArgument(format!("x = {x} must be > 0")));
    }
    let i = rate_i(kappa, 1.0 / x, tol)?;
    let v = v_kappa(kappa);
    let gamma = gamma_kappa(kappa, i.lambda_star, tol)?;
    let phi_v = if i.lambda_star > 0.0 {
        phi_and_a(kappa, i.lambda_star)?.0
    } else {
        0.0
    };
    Ok(ContRatePoint {
        kappa,
        v_kappa: v,
        argument: x,
        gamma,
        phi_v,
        i_kappa: i.value,
        lambda_star: i.lambda_star,
        j_kappa: x * i.value,
        j_b: 0.5 * (x - v) * (x - v),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BesselMargin {
    pub nu: f64,
    pub y: f64,
    pub ratio: f64,
    /// `y / (sqrt(y^2 + nu^2) + nu) - R_nu(y)`.
    pub upper: f64,
    /// `R_nu(y) - y / (sqrt(y^2 + (nu+1)^2) + nu + 1)`.
    pub lower: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BesselReport {
    pub points: Vec<BesselMargin>,
    pub min_upper: f64,
    pub min_upper_at: (f64, f64),
    pub min_lower: f64,
    pub min_lower_at: (f64, f64),
}

impl BesselReport {
    pub fn all_positive(&self) -> bool {
        self.min_upper > 0.0 && self.min_lower > 0.0
    }
}

/// Upper bound `(sqrt(y^2 + nu^2) - nu) / y` in cancellation-free form.
pub fn ratio_upper_bound(nu: f64, y: f64) -> f64 {
    y / ((y * y + nu * nu).sqrt() + nu)
}

/// Lower bound `(1/y)[y^2 / (sqrt(y^2 + c^2) - c) - 2c]`, `c = nu + 1`, in
/// its equivalent form `y / (sqrt(y^2 + c^2) + c)`.
pub fn ratio_lower_bound(nu: f64, y: f64) -> f64 {
    ratio_upper_bound(nu + 1.0, y)
}

pub fn bessel_margin(nu: f64, y: f64, tol: f64) -> Result<BesselMargin> {
    let ratio = bessel_k_ratio(nu, y, tol)?;
    Ok(BesselMargin {
        nu,
        y,
        ratio,
        upper: ratio_upper_bound(nu, y) - ratio,
        lower: ratio - ratio_lower_bound(nu, y),
    })
}

pub fn verify_bessel_inequalities(nu_grid: &[f64], y_grid: &[f64], tol: f64) -> Result<BesselReport> {
    if nu_grid.is_empty() || y_grid.is_empty() {
        return Err(SpecialError::InvalidArgument("empty grid".into()));
    }
    let mut points = Vec::with_capacity(nu_grid.len() * y_grid.len());
    for &nu in nu_grid {
        if !(nu > 0.0) {
            return Err(SpecialError::InvalidArgument(format!("nu = {nu} must be > 0")));
        }
        for &y in y_grid {
            points.push(bessel_margin(nu, y, tol)?);
        }
    }
    let mut rep = BesselReport {
        points,
        min_upper: f64::INFINITY,
        min_upper_at: (f64::NAN, f64::NAN),
        min_lower: f64::INFINITY,
        min_lower_at: (f64::NAN, f64::NAN),
    };
    for p in &rep.points {
        if p.upper < rep.min_upper {
            rep.min_upper = p.upper;
            rep.min_upper_at = (p.nu, p.y);
        }
        if p.lower < rep.min_lower {
            rep.min_lower = p.lower;
            rep.min_lower_at = (p.nu, p.y);
        }
    }
    Ok(rep)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AsymptoticReport {
    pub kappa: f64,
    pub lambda: f64,
    pub gamma: f64,
    /// `Gamma - sqrt(2 lambda) + (kappa - 1/2) / 4`.
    pub hankel_gap: f64,
    /// `Gamma - phi_v + 1/8`; meaningful for `kappa > 1`.
    pub phi_gap: f64,
}

pub fn asymptotic_checks(kappa: f64, lambda: f64, tol: f64) -> Result<AsymptoticReport> {
    if !(lambda >= 1e3) {
        return Err(SpecialError::InvalidArgument(format!(
            "lambda = {lambda} must be at least 1e3"
        )));
    }
    let gamma = gamma_kappa(kappa, lambda, tol)?;
    let (phi, _) = phi_and_a(kappa, lambda)?;
    Ok(AsymptoticReport {
        kappa,
        lambda,
        gamma,
        hankel_gap: gamma - (2.0 * lambda).sqrt() + (kappa - 0.5) / 4.0,
        phi_gap: gamma - phi + 0.125,
    })
}

/// `inf_{0 < u < 1/v} {lambda u + (u/2)(1/u - v)^2} - phi_v(lambda)`,
/// the infimum found by golden section.
pub fn legendre_gap(v: f64, lambda: f64) -> Result<f64> {
    if !(v > 0.0 && lambda > 0.0) {
        return Err(SpecialError::InvalidArgument(format!(
            "need v > 0 and lambda > 0, got v = {v}, lambda = {lambda}"
        )));
    }
    let f = |u: f64| lambda * u + 0.5 * u * (1.0 / u - v).powi(2);
    let (mut lo, mut hi) = (0.0, 1.0 / v);
    let mut c = hi - INV_PHI * (hi - lo);
    let mut d = lo + INV_PHI * (hi - lo);
    let (mut fc, mut fd) = (f(c), f(d));
    while hi - lo > 1e-12 * hi {
        if fc <= fd {
            hi = d;
            d = c;
            fd = fc;
            c = hi - INV_PHI * (hi - lo);
            fc = f(c);
        } else {
            lo = c;
            c = d;
            fc = fd;
            d = lo + INV_PHI * (hi - lo);
            fd = f(d);
        }
    }
    let inf = fc.min(fd);
    Ok(inf - ((2.0 * lambda + v * v).sqrt() - v))
}

#[cfg(test)]
#[allow(clippy::excessive_precision)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    const T: f64 = BESSEL_TOL;

    fn k_half(y: f64) -> f64 {
        (std::f64::consts::PI / (2.0 * y)).sqrt() * (-y).exp()
    }

    /// `K_{n+1/2}` from the elementary closed forms.
    fn k_half_int(n: u32, y: f64) -> f64 {
        let k0 = k_half(y);
        match n {
            0 => k0,
            1 => k0 * (1.0 + 1.0 / y),
            2 => k0 * (1.0 + 3.0 / y + 3.0 / (y * y)),
            3 => k0 * (1.0 + 6.0 / y + 15.0 / (y * y) + 15.0 / (y * y * y)),
            _ => unreachable!(),
        }
    }

    #[test]
    fn ratio_examples() {
        assert_relative_eq!(bessel_k_ratio(0.5, 1.0, T).unwrap(), 0.5, max_relative = 1e-15);
        for y in [0.01, 0.3, 1.0, 17.0, 400.0] {
            assert_relative_eq!(bessel_k_ratio(-0.5, y, T).unwrap(), 1.0, max_relative = 1e-15);
        }
        let r = bessel_k_ratio(0.5, 1.0, T).unwrap();
        let rm = bessel_k_ratio(-0.5, 1.0, T).unwrap();
        assert_relative_eq!(1.0 / r, rm + 2.0 * 0.5 / 1.0, max_relative = 1e-15);
        assert!(bessel_k_ratio(1.0, 0.0, T).is_err());
    }

    #[test]
    fn half_integer_oracle() {
        for y in [0.05, 0.5, 1.0, 3.0, 25.0, 80.0] {
            for n in 0..3u32 {
                let got = bessel_k_ratio(n as f64 + 0.5, y, T).unwrap();
                let want = k_half_int(n, y) / k_half_int(n + 1, y);
                assert_relative_eq!(got, want, max_relative = 1e-12);
            }
        }
    }

    #[test]
    fn matches_high_precision_reference() {
        // 30-digit reference values
        let cases = [
            (0.3, 0.05, 0.070352025819944966853),
            (0.3, 2.0, 0.72151365466462890813),
            (1.7, 0.05, 0.014698285202996713467),
            (1.7, 7.5, 0.76103621490590177565),
            (4.9, 0.05, 0.0051018739667686906167),
            (4.9, 50.0, 0.89875578797436399885),
            (-0.8, 1.3, 1.1924409515908870923),
            (0.0, 0.01, 0.047224775745701985722),
            (2.25, 300.0, 0.9908904333568796978),
        ];
        for (nu, y, want) in cases {
            assert_relative_eq!(bessel_k_ratio(nu, y, T).unwrap(), want, max_relative = 1e-12);
        }
    }

    #[test]
    fn temme_and_steed_agree() {
        for mu in [-0.5, -0.3, 0.0, 1e-9, 0.25, 0.4999] {
            for y in [1.0, 1.5, 1.99] {
                let a = k_ratio_temme(mu, y, T);
                let b = k_ratio_steed(mu, y, T).unwrap();
                assert!((a - b).abs() <= 1e-13 * b.abs(), "mu {mu} y {y}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn gamma_examples() {
        assert_eq!(gamma_kappa(2.0, 0.0, T).unwrap(), 0.0);
        assert_relative_eq!(gamma_kappa(0.5, 2.0, T).unwrap(), 2.0, max_relative = 1e-15);
        assert_relative_eq!(gamma_kappa(1.5, 0.5, T).unwrap(), 0.8, max_relative = 1e-14);
        assert_relative_eq!(gamma_kappa(2.0, 1.0, T).unwrap(), 1.1090252195260825163, max_relative = 1e-12);
        assert_relative_eq!(gamma_kappa(0.75, 0.01, T).unwrap(), 0.10767622172697120387, max_relative = 1e-12);
    }

    #[test]
    fn phi_and_a_examples() {
        let (p, a) = phi_and_a(0.8, 3.0).unwrap();
        assert_relative_eq!(p, 6f64.sqrt(), max_relative = 1e-15);
        assert_relative_eq!(a, -(1.5f64).sqrt(), max_relative = 1e-15);
        let (p, _) = phi_and_a(2.0, 1.0).unwrap();
        assert_relative_eq!(p, 2.0625f64.sqrt() - 0.25, max_relative = 1e-15);
        assert!((p - 1.186135).abs() < 1e-5);
        let (_, a) = phi_and_a(3.0, 1e-12).unwrap();
        assert!(a < 0.0 && a.abs() < 1e-11);
        for x in [1e-6, 0.1, 1.0, 1e3] {
            for k in [0.5, 1.5, 2.0, 5.0] {
                let v = v_kappa(k);
                let (_, a) = phi_and_a(k, x).unwrap();
                let s = (2.0 * x + v * v).sqrt();
                assert!(a < 0.0);
                assert_relative_eq!(a, (-x - v * v + v * s) / s, max_relative = 1e-6);
            }
        }
    }

    #[test]
    fn ode_examples() {
        for x in [0.01, 0.5, 3.0, 100.0] {
            assert!(ode_residual(0.5, x, None, T).unwrap().abs() < 1e-7 * (1.0 + x));
        }
        assert!(ode_residual(2.0, 1.0, None, T).unwrap().abs() <= 1e-5);
        let r1 = ode_residual(2.0, 1.0, Some(1e-2), T).unwrap().abs();
        let r2 = ode_residual(2.0, 1.0, Some(5e-3), T).unwrap().abs();
        assert!((r1 / r2 - 4.0).abs() < 0.2, "{r1} {r2}");
        assert!(ode_residual(2.0, 1e-7, None, T).is_err());
    }

    #[test]
    fn rate_i_examples() {
        let i = rate_i(0.5, 1.0, T).unwrap();
        assert_relative_eq!(i.value, 0.5, max_relative = 1e-12);
        assert_relative_eq!(i.lambda_star, 0.5, max_relative = 1e-5);
        for (k, u) in [(2.0, 1.0), (2.0, 3.0), (1.5, 0.2), (3.0, 2.0)] {
            let i = rate_i(k, u, T).unwrap();
            let v = v_kappa(k);
            assert!(i.value >= 0.0);
            if u < 1.0 / v {
                assert!(i.value < 0.5 * u * (1.0 / u - v).powi(2));
            }
        }
        // beyond 1/v the supremum is at lambda = 0
        let i = rate_i(3.0, 2.5, T).unwrap();
        assert!(i.value < 1e-12);
    }

    #[test]
    fn rate_j_examples() {
        for x in [0.5, 1.0, 2.0] {
            let p = rate_j(0.5, x, T).unwrap();
            assert_relative_eq!(p.j_kappa, x * x / 2.0, max_relative = 1e-9);
        }
        let p = rate_j(2.0, 1.0, T).unwrap();
        assert_eq!(p.j_b, 0.28125);
        assert!(p.j_kappa < p.j_b);
        assert_relative_eq!(p.j_kappa, 0.22031493555604540883, max_relative = 1e-10);
        assert!(p.gamma < p.phi_v);
        let p = rate_j(0.25, 1.0, T).unwrap();
        assert!(p.j_kappa > 0.5);
        assert_relative_eq!(p.j_kappa, 0.55772965114808509223, max_relative = 1e-10);
        assert_relative_eq!(rate_j(0.75, 1.0, T).unwrap().j_kappa, 0.44544963023097581892, max_relative = 1e-10);
        assert_relative_eq!(rate_j(3.0, 2.0, T).unwrap().j_kappa, 0.99437402571480804136, max_relative = 1e-10);
    }

    #[test]
    fn bessel_bound_examples() {
        let m = bessel_margin(0.5, 1.0, T).unwrap();
        assert_relative_eq!(ratio_upper_bound(0.5, 1.0), 1.25f64.sqrt() - 0.5, max_relative = 1e-15);
        assert!((ratio_upper_bound(0.5, 1.0) - 0.618034).abs() < 1e-6);
        let direct_lower = 1.0 / (3.25f64.sqrt() - 1.5) - 3.0;
        assert_relative_eq!(ratio_lower_bound(0.5, 1.0), direct_lower, max_relative = 1e-13);
        assert!((direct_lower - 0.302776).abs() < 1e-6);
        assert!(m.upper > 0.0 && m.lower > 0.0);
        let m = bessel_margin(1.0, 100.0, T).unwrap();
        assert!(m.upper > 0.0);
        assert_relative_eq!(m.upper, 1.0 / 200.0, max_relative = 0.05);
    }

    #[test]
    fn asymptotics() {
        let r = asymptotic_checks(2.0, 1e6, T).unwrap();
        assert!(r.hankel_gap.abs() <= 1e-2);
        assert!(r.phi_gap.abs() <= 1e-2);
        for l in [1e3, 1e5, 1e8] {
            let r = asymptotic_checks(0.5, l, T).unwrap();
            assert!((r.gamma - (2.0 * l).sqrt()).abs() <= 1e-12 * r.gamma);
        }
    }

    #[test]
    fn strict_dominance_on_log_grid() {
        for k in [1.5, 2.0, 3.0] {
            for j in 0..=100 {
                let l = 10f64.powf(-4.0 + 10.0 * j as f64 / 100.0);
                let g = gamma_kappa(k, l, T).unwrap();
                let (p, _) = phi_and_a(k, l).unwrap();
                assert!(g < p, "kappa {k} lambda {l}: {g} vs {p}");
            }
        }
    }

    #[test]
    fn legendre_identity() {
        for v in [0.25, 0.5] {
            for l in [0.1, 1.0, 10.0] {
                assert!(legendre_gap(v, l).unwrap().abs() < 1e-8);
            }
        }
    }

    #[test]
    fn regime_separation() {
        for x in [0.25, 1.0, 4.0] {
            let half = x * x / 2.0;
            assert!(rate_j(0.75, x, T).unwrap().j_kappa < half);
            assert!(rate_j(1.0, x, T).unwrap().j_kappa < half);
            assert!((rate_j(0.5, x, T).unwrap().j_kappa - half).abs() <= 1e-9 * half);
            assert!(rate_j(0.25, x, T).unwrap().j_kappa > half);
        }
    }

    proptest! {
        #[test]
        fn recurrence_closure(nu in 0.5f64..5.0, ly in -1.0f64..2.0) {
            let y = 10f64.powf(ly);
            let r = bessel_k_ratio(nu, y, T).unwrap();
            let rm = bessel_k_ratio(nu - 1.0, y, T).unwrap();
            let res = 1.0 / r - rm - 2.0 * nu / y;
            prop_assert!(res.abs() <= 1e-10 * (1.0 / r));
        }

        #[test]
        fn ratio_in_unit_interval(nu in -0.49f64..8.0, ly in -2.0f64..3.0) {
            let r = bessel_k_ratio(nu, 10f64.powf(ly), T).unwrap();
            prop_assert!(r > 0.0 && r < 1.0);
        }
    }
}
