//! Site laws, sampled environments, the potential, valleys and the
//! good-environment event.
//!
//! Sign conventions: `rho_i = (1 - omega_i) / omega_i`, `V(0) = 0`,
//! `V(n) - V(n - 1) = log rho_n` for every integer `n`, so that
//! `V(-1) = -log rho_0`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::error::ErrorClass;
use crate::rng::site_uniform;

/// Relative slack applied to every closed-interval comparison in the
/// good-environment event.
pub const CLOSED_SLACK: f64 = 1e-9;

/// Threshold above which `eps' = eps * delta` is accepted with a warning.
pub const EPS_PRIME_SOFT_LIMIT: f64 = 1.0 / 20.0;

/// Schema version stamped into serialized environments.
pub const ENV_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EnvError {
    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),
    #[error("invalid window [{lo}, {hi}]")]
    InvalidWindow { lo: i64, hi: i64 },
    #[error("site omega_{index} = {value} outside [eps0, 1 - eps0] = [{eps0}, {}]", 1.0 - eps0)]
    OmegaOutOfSupport { index: i64, value: f64, eps0: f64 },
    #[error("index {index} outside window [{lo}, {hi}]")]
    OutOfWindow { index: i64, lo: i64, hi: i64 },
    #[error("window [{lo}, {hi}] must touch the origin")]
    MissingOrigin { lo: i64, hi: i64 },
    #[error("window ends at {have}, at least {need} is required")]
    WindowTooShort { need: i64, have: i64 },
    #[error("degenerate distribution: Var(log rho) = 0 with E(log rho) = 0")]
    Degenerate,
    #[error("degenerate valley: the minimum on [0, b] is attained only at 0")]
    DegenerateValley,
    #[error("no delta > 0 with eta(-2 delta <= log rho <= -delta) > 0")]
    NoDelta,
    #[error("eps' = {eps_prime} violates 10 eps' < 1")]
    EpsPrimeTooLarge { eps_prime: f64 },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

impl EnvError {
    pub fn class(&self) -> ErrorClass {
        ErrorClass::Validation
    }
}

type Result<T> = std::result::Result<T, EnvError>;

/// Law of a single `omega_0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DistKind {
    /// `{p, 1 - p}` with probability 1/2 each.
    TwoPoint { p: f64 },
    /// Uniform on `[eps0, 1 - eps0]`.
    Uniform { eps0: f64 },
    /// Point mass; only meaningful as an oracle.
    Constant { p: f64 },
    /// Finite support with (unnormalized) weights.
    Finite { support: Vec<f64>, weights: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "DistKind", into = "DistKind")]
pub struct EnvDistribution {
    kind: DistKind,
    eps0: f64,
    mean_log_rho: f64,
    var_log_rho: f64,
    mean_rho: f64,
    /// Cumulative normalized weights for `Finite`.
    cumulative: Vec<f64>,
}

impl From<EnvDistribution> for DistKind {
    fn from(d: EnvDistribution) -> Self {
        d.kind
    }
}

impl TryFrom<DistKind> for EnvDistribution {
    type Error = EnvError;

    fn try_from(kind: DistKind) -> Result<Self> {
        EnvDistribution::new(kind)
    }
}

fn log_rho_of(omega: f64) -> f64 {
    ((1.0 - omega) / omega).ln()
}

fn check_prob(p: f64, what: &str) -> Result<()> {
    if !(p > 0.0 && p < 1.0) {
        return Err(EnvError::InvalidDistribution(format!(
            "{what} = {p} must lie in (0, 1)"
        )));
    }
    Ok(())
}

impl EnvDistribution {
    pub fn new(kind: DistKind) -> Result<Self> {
        let mut cumulative = Vec::new();
        let (eps0, mean_log_rho, var_log_rho, mean_rho) = match &kind {
            DistKind::TwoPoint { p } => {
                check_prob(*p, "p")?;
                let l = log_rho_of(*p);
                let rho = (1.0 - p) / p;
                (p.min(1.0 - p), 0.0, l * l, 0.5 * (rho + 1.0 / rho))
            }
            DistKind::Uniform { eps0 } => {
                let a = *eps0;
                if !(a > 0.0 && a < 0.5) {
                    return Err(EnvError::InvalidDistribution(format!(
                        "uniform eps0 = {a} must lie in (0, 1/2)"
                    )));
                }
                let span = 1.0 - 2.0 * a;
                let var = simpson(|w| log_rho_of(w).powi(2), a, 1.0 - a, 20_000) / span;
                let mean_rho = log_rho_of(a) / span - 1.0;
                (a, 0.0, var, mean_rho)
            }
            DistKind::Constant { p } => {
                check_prob(*p, "p")?;
                (p.min(1.0 - p), log_rho_of(*p), 0.0, (1.0 - p) / p)
            }
            DistKind::Finite { support, weights } => {
                if support.is_empty() || support.len() != weights.len() {
                    return Err(EnvError::InvalidDistribution(
                        "finite support needs matching non-empty support and weights".into(),
                    ));
                }
                for &s in support {
                    check_prob(s, "support point")?;
                }
                if weights.iter().any(|w| !(*w >= 0.0) || !w.is_finite()) {
                    return Err(EnvError::InvalidDistribution(
                        "weights must be finite and nonnegative".into(),
                    ));
                }
                let total: f64 = weights.iter().sum();
                if !(total > 0.0) {
                    return Err(EnvError::InvalidDistribution(
                        "weights must not all vanish".into(),
                    ));
                }
                let mut acc = 0.0;
                let mut m = 0.0;
                let mut m2 = 0.0;
                let mut mr = 0.0;
                let mut eps0 = 0.5f64;
                for (&s, &w) in support.iter().zip(weights) {
                    let q = w / total;
                    acc += q;
                    cumulative.push(acc);
                    let l = log_rho_of(s);
                    m += q * l;
                    m2 += q * l * l;
                    mr += q * (1.0 - s) / s;
                    if w > 0.0 {
                        eps0 = eps0.min(s.min(1.0 - s));
                    }
                }
                if let Some(last) = cumulative.last_mut() {
                    *last = 1.0;
                }
                if m.abs() < 1e-12 {
                    m = 0.0;
                }
                (eps0, m, (m2 - m * m).max(0.0), mr)
            }
        };
        Ok(EnvDistribution {
            kind,
            eps0,
            mean_log_rho,
            var_log_rho,
            mean_rho,
            cumulative,
        })
    }

    pub fn two_point(p: f64) -> Result<Self> {
        Self::new(DistKind::TwoPoint { p })
    }

    pub fn uniform(eps0: f64) -> Result<Self> {
        Self::new(DistKind::Uniform { eps0 })
    }

    pub fn constant(p: f64) -> Result<Self> {
        Self::new(DistKind::Constant { p })
    }

    pub fn finite(support: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        Self::new(DistKind::Finite { support, weights })
    }

    pub fn kind(&self) -> &DistKind {
        &self.kind
    }

    /// Ellipticity bound: `omega_0` lies in `[eps0, 1 - eps0]` almost surely.
    pub fn eps0(&self) -> f64 {
        self.eps0
    }

    pub fn mean_log_rho(&self) -> f64 {
        self.mean_log_rho
    }

    /// `sigma^2 = Var(log rho_0)`.
    pub fn var_log_rho(&self) -> f64 {
        self.var_log_rho
    }

    pub fn mean_rho(&self) -> f64 {
        self.mean_rho
    }

    pub fn is_degenerate(&self) -> bool {
        self.var_log_rho == 0.0
    }

    /// Inverse-CDF map from a uniform draw to `omega`.
    #[inline]
    pub fn quantile(&self, u: f64) -> f64 {
        match &self.kind {
            DistKind::TwoPoint { p } => {
                if u < 0.5 {
                    *p
                } else {
                    1.0 - p
                }
            }
            DistKind::Uniform { eps0 } => eps0 + (1.0 - 2.0 * eps0) * u,
            DistKind::Constant { p } => *p,
            DistKind::Finite { support, .. } => {
                let k = self.cumulative.partition_point(|&c| c <= u);
                support[k.min(support.len() - 1)]
            }
        }
    }

    /// `eta(lo <= log rho_0 <= hi)`.
    pub fn prob_log_rho_in(&self, lo: f64, hi: f64) -> f64 {
        if lo > hi {
            return 0.0;
        }
        let inside = |w: f64| {
            let l = log_rho_of(w);
            l >= lo && l <= hi
        };
        match &self.kind {
            DistKind::TwoPoint { p } => {
                0.5 * (inside(*p) as u8 as f64) + 0.5 * (inside(1.0 - p) as u8 as f64)
            }
            DistKind::Constant { p } => inside(*p) as u8 as f64,
            DistKind::Finite { support, weights } => {
                let total: f64 = weights.iter().sum();
                support
                    .iter()
                    .zip(weights)
                    .filter(|(s, _)| inside(**s))
                    .map(|(_, w)| w / total)
                    .sum()
            }
            DistKind::Uniform { eps0 } => {
                let a = *eps0;
                // log rho is decreasing in omega
                let w_lo = (1.0 / (1.0 + hi.exp())).max(a);
                let w_hi = (1.0 / (1.0 + lo.exp())).min(1.0 - a);
                ((w_hi - w_lo) / (1.0 - 2.0 * a)).max(0.0)
            }
        }
    }

    /// Candidate values of `delta` scanned when maximizing
    /// `eta(-2 delta <= log rho <= -delta)`.
    fn delta_candidates(&self) -> Vec<f64> {
        let atoms: Vec<f64> = match &self.kind {
            DistKind::TwoPoint { p } => vec![*p, 1.0 - p],
            DistKind::Constant { p } => vec![*p],
            DistKind::Finite { support, weights } => support
                .iter()
                .zip(weights)
                .filter(|(_, w)| **w > 0.0)
                .map(|(s, _)| *s)
                .collect(),
            DistKind::Uniform { eps0 } => {
                let top = log_rho_of(*eps0);
                return (1..=4096).map(|k| top * k as f64 / 4096.0).collect();
            }
        };
        // the event probability is piecewise constant in delta and only
        // changes at x/2 and x for each atom x = -log rho > 0
        let mut c: Vec<f64> = atoms
            .into_iter()
            .map(|w| -log_rho_of(w))
            .filter(|x| *x > 0.0)
            .flat_map(|x| [x / 2.0, x])
            .collect();
        c.sort_by(f64::total_cmp);
        c.dedup();
        c
    }
}

/// Composite Simpson rule with `n` (even) panels.
fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
    let n = n + n % 2;
    let h = (b - a) / n as f64;
    let mut s = f(a) + f(b);
    for k in 1..n {
        let x = a + h * k as f64;
        s += if k % 2 == 1 { 4.0 * f(x) } else { 2.0 * f(x) };
    }
    s * h / 3.0
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    Recurrent,
    TransientRight,
    TransientLeft,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RegimeInfo {
    pub regime: Regime,
    pub speed_positive: bool,
    pub degenerate: bool,
}

/// Recurrence iff `E log rho = 0`; positive speed iff `E rho < 1`.
pub fn classify_regime(dist: &EnvDistribution) -> Result<RegimeInfo> {
    let m = dist.mean_log_rho();
    if dist.is_degenerate() && m == 0.0 {
        return Err(EnvError::Degenerate);
    }
    let regime = if m == 0.0 {
        Regime::Recurrent
    } else if m < 0.0 {
        Regime::TransientRight
    } else {
        Regime::TransientLeft
    };
    Ok(RegimeInfo {
        regime,
        speed_positive: dist.mean_rho() < 1.0,
        degenerate: dist.is_degenerate(),
    })
}

/// A finite window `omega_offset, ..., omega_{offset + len - 1}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "EnvironmentDoc", into = "EnvironmentDoc")]
pub struct Environment {
    offset: i64,
    omega: Vec<f64>,
    dist: EnvDistribution,
    seed: Option<u64>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct EnvironmentDoc {
    offset: i64,
    omega: Vec<f64>,
    dist: EnvDistribution,
    seed: Option<u64>,
    version: u32,
}

impl From<Environment> for EnvironmentDoc {
    fn from(e: Environment) -> Self {
        EnvironmentDoc {
            offset: e.offset,
            omega: e.omega,
            dist: e.dist,
            seed: e.seed,
            version: ENV_SCHEMA_VERSION,
        }
    }
}

impl TryFrom<EnvironmentDoc> for Environment {
    type Error = EnvError;

    fn try_from(d: EnvironmentDoc) -> Result<Self> {
        if d.version != ENV_SCHEMA_VERSION {
            return Err(EnvError::InvalidParameter(format!(
                "unsupported environment version {}",
                d.version
            )));
        }
        Environment::new(d.offset, d.omega, d.dist, d.seed)
    }
}

impl Environment {
    pub fn new(
        offset: i64,
        omega: Vec<f64>,
        dist: EnvDistribution,
        seed: Option<u64>,
    ) -> Result<Self> {
        if omega.is_empty() {
            return Err(EnvError::InvalidWindow {
                lo: offset,
                hi: offset - 1,
            });
        }
        let eps0 = dist.eps0();
        for (k, &w) in omega.iter().enumerate() {
            // tiny tolerance so that omegas rebuilt from log rho still pass
            if !(w >= eps0 * (1.0 - 1e-12) && w <= 1.0 - eps0 * (1.0 - 1e-12)) {
                return Err(EnvError::OmegaOutOfSupport {
                    index: offset + k as i64,
                    value: w,
                    eps0,
                });
            }
        }
        Ok(Environment {
            offset,
            omega,
            dist,
            seed,
        })
    }

    /// Hand-built environment from `log rho_i` values starting at `offset`.
    pub fn from_log_rho(offset: i64, log_rho: &[f64], dist: EnvDistribution) -> Result<Self> {
        let omega = log_rho.iter().map(|l| 1.0 / (1.0 + l.exp())).collect();
        Environment::new(offset, omega, dist, None)
    }

    pub fn lo(&self) -> i64 {
        self.offset
    }

    pub fn hi(&self) -> i64 {
        self.offset + self.omega.len() as i64 - 1
    }

    pub fn len(&self) -> usize {
        self.omega.len()
    }

    pub fn is_empty(&self) -> bool {
        self.omega.is_empty()
    }

    pub fn omega(&self) -> &[f64] {
        &self.omega
    }

    pub fn dist(&self) -> &EnvDistribution {
        &self.dist
    }

    pub fn seed(&self) -> Option<u64> {
        self.seed
    }

    pub fn covers(&self, lo: i64, hi: i64) -> bool {
        self.lo() <= lo && hi <= self.hi()
    }

    #[inline]
    pub fn omega_at(&self, i: i64) -> Option<f64> {
        let k = i.checked_sub(self.offset)?;
        if k < 0 {
            return None;
        }
        self.omega.get(k as usize).copied()
    }

    pub fn omega_checked(&self, i: i64) -> Result<f64> {
        self.omega_at(i).ok_or(EnvError::OutOfWindow {
            index: i,
            lo: self.lo(),
            hi: self.hi(),
        })
    }

    pub fn log_rho(&self, i: i64) -> Result<f64> {
        self.omega_checked(i).map(log_rho_of)
    }
}

/// i.i.d. sites over `[lo, hi]`. Site `i` depends only on `(seed, i)`, so
/// windows sampled with the same seed agree on their overlap.
pub fn sample_environment(
    dist: &EnvDistribution,
    lo: i64,
    hi: i64,
    seed: u64,
) -> Result<Environment> {
    if lo > hi {
        return Err(EnvError::InvalidWindow { lo, hi });
    }
    let omega = (lo..=hi).map(|i| dist.quantile(site_uniform(seed, i))).collect();
    Ok(Environment {
        offset: lo,
        omega,
        dist: dist.clone(),
        seed: Some(seed),
    })
}

/// Anything a walker can query for the right-step probability of a site.
pub trait SiteSource {
    fn omega(&mut self, i: i64) -> Option<f64>;
}

impl SiteSource for &Environment {
    #[inline]
    fn omega(&mut self, i: i64) -> Option<f64> {
        self.omega_at(i)
    }
}

/// Environment generated on demand, up to `max_extent` sites on each side
/// of the origin. Agrees site by site with [`sample_environment`] under the
/// same seed.
#[derive(Debug, Clone)]
pub struct LazyEnvironment {
    dist: EnvDistribution,
    seed: u64,
    nonneg: Vec<f64>,
    neg: Vec<f64>,
    max_extent: u64,
}

impl LazyEnvironment {
    pub fn new(dist: &EnvDistribution, seed: u64, max_extent: u64) -> Self {
        LazyEnvironment {
            dist: dist.clone(),
            seed,
            nonneg: Vec::new(),
            neg: Vec::new(),
            max_extent,
        }
    }

    /// Largest `|i|` generated so far.
    pub fn extent(&self) -> u64 {
        (self.nonneg.len().saturating_sub(1)).max(self.neg.len()) as u64
    }

    #[cold]
    fn grow(&mut self, i: i64) {
        if i >= 0 {
            let target = ((i as usize + 1).max(2 * self.nonneg.len())).min(self.max_extent as usize + 1);
            for j in self.nonneg.len()..target {
                let w = self.dist.quantile(site_uniform(self.seed, j as i64));
                self.nonneg.push(w);
            }
        } else {
            let need = (-i) as usize;
            let target = need.max(2 * self.neg.len()).min(self.max_extent as usize);
            for j in self.neg.len()..target {
                let w = self.dist.quantile(site_uniform(self.seed, -(j as i64) - 1));
                self.neg.push(w);
            }
        }
    }
}

impl SiteSource for LazyEnvironment {
    #[inline]
    fn omega(&mut self, i: i64) -> Option<f64> {
        if i.unsigned_abs() > self.max_extent {
            return None;
        }
        if i >= 0 {
            if i as usize >= self.nonneg.len() {
                self.grow(i);
            }
            Some(self.nonneg[i as usize])
        } else {
            let k = (-i - 1) as usize;
            if k >= self.neg.len() {
                self.grow(i);
            }
            Some(self.neg[k])
        }
    }
}

/// Values `V(start), V(start + 1), ...`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Potential {
    start: i64,
    values: Vec<f64>,
}

impl Potential {
    /// Potential given directly by its values; no normalization is imposed.
    pub fn from_values(start: i64, values: Vec<f64>) -> Self {
        assert!(!values.is_empty(), "a potential needs at least one value");
        Potential { start, values }
    }

    pub fn start(&self) -> i64 {
        self.start
    }

    pub fn end(&self) -> i64 {
        self.start + self.values.len() as i64 - 1
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    #[inline]
    pub fn get(&self, n: i64) -> Option<f64> {
        let k = n.checked_sub(self.start)?;
        if k < 0 {
            return None;
        }
        self.values.get(k as usize).copied()
    }

    pub fn at(&self, n: i64) -> Result<f64> {
        self.get(n).ok_or(EnvError::OutOfWindow {
            index: n,
            lo: self.start,
            hi: self.end(),
        })
    }

    pub fn covers(&self, lo: i64, hi: i64) -> bool {
        self.start <= lo && hi <= self.end()
    }

    pub(crate) fn require(&self, lo: i64, hi: i64) -> Result<()> {
        if self.start > lo {
            return Err(EnvError::OutOfWindow {
                index: lo,
                lo: self.start,
                hi: self.end(),
            });
        }
        if hi > self.end() {
            return Err(EnvError::OutOfWindow {
                index: hi,
                lo: self.start,
                hi: self.end(),
            });
        }
        Ok(())
    }
}

/// Potential of `env` on every index its window determines: `[lo - 1, hi]`
/// when the window reaches 0 from the left, `[0, hi]` when it starts at 1.
pub fn potential(env: &Environment) -> Result<Potential> {
    let (lo, hi) = (env.lo(), env.hi());
    if lo > 1 || hi < 0 {
        return Err(EnvError::MissingOrigin { lo, hi });
    }
    let start = if lo <= 0 { lo - 1 } else { 0 };
    let end = hi.max(0);
    let mut values = vec![0.0; (end - start + 1) as usize];
    let origin = (-start) as usize;
    for n in 1..=hi {
        let k = origin + n as usize;
        values[k] = values[k - 1] + log_rho_of(env.omega_at(n).expect("covered"));
    }
    for n in (start..0).rev() {
        let k = (n - start) as usize;
        values[k] = values[k + 1] - log_rho_of(env.omega_at(n + 1).expect("covered"));
    }
    Ok(Potential { start, values })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Valley {
    pub a: i64,
    pub m: i64,
    pub b: i64,
    pub depth: f64,
}

impl Valley {
    /// Checks the defining inequalities against `pot`.
    pub fn is_valley_of(&self, pot: &Potential) -> bool {
        if !(self.a < self.m && self.m < self.b) || !pot.covers(self.a, self.b) {
            return false;
        }
        let v = |i| pot.get(i).expect("covered");
        let (va, vm, vb) = (v(self.a), v(self.m), v(self.b));
        let left = (self.a..=self.m).all(|i| vm <= v(i) && v(i) <= va);
        let right = (self.m..=self.b).all(|i| vm <= v(i) && v(i) <= vb);
        let depth = (va - vm).min(vb - vm);
        left && right && (depth - self.depth).abs() <= 1e-12 * (1.0 + depth.abs())
    }
}

/// `b = inf{k > 0 : V(k) >= 0}` and `m` the first `k > 0` attaining the
/// minimum of `V` on `[0, b]`.
pub fn locate_right_valley(pot: &Potential) -> Result<Valley> {
    pot.require(0, 0)?;
    let mut b = None;
    for k in 1..=pot.end() {
        if pot.get(k).expect("in range") >= 0.0 {
            b = Some(k);
            break;
        }
    }
    let b = b.ok_or(EnvError::WindowTooShort {
        need: pot.end() + 1,
        have: pot.end(),
    })?;
    let v0 = pot.get(0).expect("in range");
    let mut m = 0;
    let mut vm = v0;
    for k in 1..=b {
        let v = pot.get(k).expect("in range");
        if v < vm {
            vm = v;
            m = k;
        }
    }
    if m == 0 || m == b {
        return Err(EnvError::DegenerateValley);
    }
    let vb = pot.get(b).expect("in range");
    let valley = Valley {
        a: 0,
        m,
        b,
        depth: (v0 - vm).min(vb - vm),
    };
    debug_assert!(valley.is_valley_of(pot));
    Ok(valley)
}

#[inline]
fn within(x: f64, lo: f64, hi: f64) -> bool {
    let s = CLOSED_SLACK * (1.0 + lo.abs().max(hi.abs()));
    x >= lo - s && x <= hi + s
}

/// Scale-dependent constants of the good-environment event.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GoodEnvParams {
    /// `log n`; the scale is carried through its logarithm.
    pub log_n: f64,
    pub eps: f64,
    pub delta: f64,
    /// `eta(-2 delta <= log rho_0 <= -delta)`.
    pub event_prob: f64,
    /// `-log event_prob`.
    pub theta_rate: f64,
    pub eps0: f64,
    pub eps_prime: f64,
    pub beta: f64,
    pub c1: i64,
    pub c2: i64,
    pub c3: f64,
    pub c4: f64,
    pub c5: f64,
    pub c6: f64,
    pub warnings: Vec<String>,
}

/// Scans `delta` over values with `10 eps delta < 1` and keeps the smallest
/// one maximizing the event probability, then derives the constants at
/// scale `n = e^{log_n}`.
pub fn good_env_params(dist: &EnvDistribution, eps: f64, log_n: f64) -> Result<GoodEnvParams> {
    let candidates = dist.delta_candidates();
    if candidates.is_empty() {
        return Err(EnvError::NoDelta);
    }
    let mut best: Option<(f64, f64)> = None;
    for &d in &candidates {
        if 10.0 * eps * d >= 1.0 {
            continue;
        }
        let p = dist.prob_log_rho_in(-2.0 * d, -d);
        if p > 0.0 && best.is_none_or(|(_, bp)| p > bp) {
            best = Some((d, p));
        }
    }
    let (delta, _) = match best {
        Some(b) => b,
        None if eps > 0.0 && candidates.iter().any(|&d| dist.prob_log_rho_in(-2.0 * d, -d) > 0.0) => {
            return Err(EnvError::EpsPrimeTooLarge {
                eps_prime: eps * candidates[0],
            })
        }
        None => return Err(EnvError::NoDelta),
    };
    GoodEnvParams::with_delta(dist, eps, log_n, delta)
}

impl GoodEnvParams {
    pub fn with_delta(dist: &EnvDistribution, eps: f64, log_n: f64, delta: f64) -> Result<Self> {
        if !(eps > 0.0) {
            return Err(EnvError::InvalidParameter(format!("eps = {eps} must be > 0")));
        }
        if !(log_n > 1.0) || !log_n.is_finite() {
            return Err(EnvError::InvalidParameter(format!(
                "log n = {log_n} must exceed 1 (n > e)"
            )));
        }
        if !(delta > 0.0) {
            return Err(EnvError::InvalidParameter(format!("delta = {delta} must be > 0")));
        }
        let event_prob = dist.prob_log_rho_in(-2.0 * delta, -delta);
        if !(event_prob > 0.0) {
            return Err(EnvError::NoDelta);
        }
        let eps_prime = eps * delta;
        if 10.0 * eps_prime >= 1.0 {
            return Err(EnvError::EpsPrimeTooLarge { eps_prime });
        }
        let mut warnings = Vec::new();
        if eps_prime > EPS_PRIME_SOFT_LIMIT {
            warnings.push(format!(
                "eps' = {eps_prime:.6} exceeds the recommended 1/20; valley bounds may fail at finite n"
            ));
        }
        let floor = |x: f64| (x + 1e-12 * x.abs().max(1.0)).floor();
        let c1 = floor(eps * log_n) as i64;
        if c1 < 1 {
            return Err(EnvError::InvalidParameter(format!(
                "c1 = floor(eps log n) = {c1} must be at least 1"
            )));
        }
        let fl = floor(log_n) as i64;
        Ok(GoodEnvParams {
            log_n,
            eps,
            delta,
            event_prob,
            theta_rate: -event_prob.ln(),
            eps0: dist.eps0(),
            eps_prime,
            beta: (1.0 - 9.0 * eps_prime) / (1.0 - 10.0 * eps_prime),
            c1,
            c2: fl * fl,
            c3: delta * c1 as f64,
            c4: (1.0 - 10.0 * eps_prime) * log_n,
            c5: 0.5 * eps_prime * log_n,
            c6: 2.0 * log_n,
            warnings,
        })
    }

    pub fn n(&self) -> f64 {
        self.log_n.exp()
    }

    /// Default sampling window `[-1, c1 + 3 c2]`.
    pub fn window(&self) -> (i64, i64) {
        (-1, self.c1 + 3 * self.c2)
    }

    /// `E_1` on `log rho_1, ..., log rho_{c1}`.
    pub fn e1_holds(&self, log_rho: &[f64]) -> bool {
        debug_assert_eq!(log_rho.len(), self.c1 as usize);
        let mut v = 0.0;
        for (k, l) in log_rho.iter().enumerate() {
            v += l;
            let i = (k + 1) as f64;
            if !within(v, -2.0 * self.delta * i, -self.delta * i) {
                return false;
            }
        }
        true
    }

    /// Endpoint and tunnel verdicts for one block of `c2` increments.
    pub fn block_verdicts(&self, increments: &[f64], end_lo: f64, end_hi: f64) -> (bool, bool) {
        debug_assert_eq!(increments.len(), self.c2 as usize);
        let total: f64 = increments.iter().sum();
        let endpoint = within(total, end_lo, end_hi);
        let c2 = self.c2 as f64;
        let mut s = 0.0;
        let mut tunnel = true;
        for (k, l) in increments.iter().enumerate() {
            s += l;
            let line = (k + 1) as f64 / c2 * total;
            if !within(s - line, -self.c5, self.c5) {
                tunnel = false;
                break;
            }
        }
        (endpoint, tunnel)
    }

    /// `(E_2, E_3)` on the descending block.
    pub fn descent_verdicts(&self, increments: &[f64]) -> (bool, bool) {
        self.block_verdicts(increments, -self.beta * self.c4, -self.c4)
    }

    /// `(E_4, E_5)` on the ascending block.
    pub fn ascent_verdicts(&self, increments: &[f64]) -> (bool, bool) {
        self.block_verdicts(increments, self.c6, 2.0 * self.c6)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GoodEnvReport {
    pub e1: bool,
    pub e2: bool,
    pub e3: bool,
    pub e4: bool,
    pub e5: bool,
    pub good: bool,
    pub b_n: Option<i64>,
    pub m_n: Option<i64>,
    pub v_mn: Option<f64>,
    /// `(1 - eps')(log n)^2 <= m_n <= (1 + eps')(log n)^2`.
    pub m_n_bounds_ok: Option<bool>,
    /// `-delta + (1 - 9 eps') log n <= -V(m_n) <= (1 - 6 eps') log n`.
    pub v_mn_bounds_ok: Option<bool>,
    /// The exact (non-asymptotic) valley bounds implied by the five events.
    pub valley_bounds_ok: Option<bool>,
}

pub fn check_good_environment(env: &Environment, params: &GoodEnvParams) -> Result<GoodEnvReport> {
    let need = params.c1 + 3 * params.c2;
    if env.lo() > 0 || env.hi() < need {
        return Err(EnvError::WindowTooShort {
            need,
            have: env.hi(),
        });
    }
    let lr = |i: i64| log_rho_of(env.omega_at(i).expect("covered"));
    let block = |from: i64, len: i64| (from..from + len).map(lr).collect::<Vec<_>>();
    let (c1, c2) = (params.c1, params.c2);
    let e1 = params.e1_holds(&block(1, c1));
    let (e2, e3) = params.descent_verdicts(&block(c1 + 1, c2));
    let (e4, e5) = params.ascent_verdicts(&block(c1 + c2 + 1, c2));
    let good = e1 && e2 && e3 && e4 && e5;
    let mut report = GoodEnvReport {
        e1,
        e2,
        e3,
        e4,
        e5,
        good,
        b_n: None,
        m_n: None,
        v_mn: None,
        m_n_bounds_ok: None,
        v_mn_bounds_ok: None,
        valley_bounds_ok: None,
    };
    if good {
        let pot = potential(env)?;
        let valley = locate_right_valley(&pot)?;
        let vm = pot.at(valley.m)?;
        let (ln, ep) = (params.log_n, params.eps_prime);
        let m = valley.m as f64;
        report.b_n = Some(valley.b);
        report.m_n = Some(valley.m);
        report.v_mn = Some(vm);
        report.m_n_bounds_ok = Some(within(m, (1.0 - ep) * ln * ln, (1.0 + ep) * ln * ln));
        report.v_mn_bounds_ok = Some(within(
            -vm,
            -params.delta + (1.0 - 9.0 * ep) * ln,
            (1.0 - 6.0 * ep) * ln,
        ));
        let (c3, c4, c5, c6) = (params.c3, params.c4, params.c5, params.c6);
        let base = (c1 + c2) as f64;
        let c2f = c2 as f64;
        report.valley_bounds_ok = Some(
            within(vm, -2.0 * c3 - params.beta * c4 - c5, -c3 - c4)
                && within(m, base - c5 * c2f / c4, base + c5 * c2f / c6),
        );
    }
    Ok(report)
}
