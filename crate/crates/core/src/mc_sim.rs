//! Monte Carlo engine for the quenched walk.

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::chain_exact::{
    expected_exit_time_bound, hit_prob_before, hit_prob_lower_first, single_excursion_escape_prob,
    ChainError,
};
use crate::env_model::{
    check_good_environment, potential, sample_environment, EnvDistribution, EnvError, Environment,
    GoodEnvParams, GoodEnvReport, LazyEnvironment, SiteSource,
};
use crate::error::ErrorClass;
use crate::rng::{replica_rng, site_uniform, substream_seed, Domain, WalkRng};
use crate::stats::{mean, ols_slope, quantile_sorted, run_replicas, Estimate, DEFAULT_CONFIDENCE};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Chain(#[from] ChainError),
    #[error("cap must be positive")]
    ZeroCap,
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("walk left the environment window at site {position} after {step} steps ({count} of {replicas} replicas)")]
    WindowExhausted {
        position: i64,
        step: u64,
        count: u64,
        replicas: u64,
    },
    #[error("environment is not good: {0}")]
    NotGood(String),
    #[error("no good environment in {tries} tries (E1 acceptance rate {e1_rate:.3e})")]
    NoGoodEnvironment { tries: u64, e1_rate: f64 },
}

impl SimError {
    pub fn class(&self) -> ErrorClass {
        match self {
            SimError::Env(e) => e.class(),
            SimError::Chain(e) => e.class(),
            SimError::WindowExhausted { .. } | SimError::NoGoodEnvironment { .. } => {
                ErrorClass::Convergence
            }
            _ => ErrorClass::Validation,
        }
    }
}

type Result<T> = std::result::Result<T, SimError>;

/// Replica count, master seed, thread count and confidence level shared by
/// every estimator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McConfig {
    pub reps: u64,
    pub seed: u64,
    pub threads: usize,
    pub confidence: f64,
}

impl McConfig {
    pub fn new(reps: u64, seed: u64) -> Self {
        McConfig {
            reps,
            seed,
            threads: 1,
            confidence: DEFAULT_CONFIDENCE,
        }
    }

    pub fn threads(mut self, threads: usize) -> Self {
        self.threads = threads.max(1);
        self
    }

    pub fn confidence(mut self, confidence: f64) -> Self {
        self.confidence = confidence;
        self
    }

    fn validate(&self) -> Result<()> {
        if self.reps < 2 {
            return Err(SimError::InvalidArgument("at least two replicas are required".into()));
        }
        if !(self.confidence > 0.0 && self.confidence < 1.0) {
            return Err(SimError::InvalidArgument(format!(
                "confidence {} outside (0, 1)",
                self.confidence
            )));
        }
        Ok(())
    }

    /// Walk generator for replica `k` of experiment `tag`.
    fn rng(&self, tag: u64, k: u64) -> WalkRng {
        replica_rng(substream_seed(self.seed, Domain::Meta, tag), Domain::Walk, k)
    }

    /// Environment seed for replica `k` of experiment `tag`.
    fn env_seed(&self, tag: u64, k: u64) -> u64 {
        substream_seed(substream_seed(self.seed, Domain::Meta, tag), Domain::Environment, k)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct HitSample {
    /// `tau` in steps, absent when the cap was reached first.
    pub value: Option<u64>,
    pub cap: u64,
}

impl HitSample {
    pub fn capped(&self) -> bool {
        self.value.is_none()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExitSample {
    pub time: Option<u64>,
    /// Site where the walk stopped (`a` or `b`), absent when capped.
    pub site: Option<i64>,
}

#[derive(Debug, Clone, Copy)]
struct Exhausted {
    position: i64,
    step: u64,
}

/// Runs the walk from `start` for at most `cap` steps, stopping at the first
/// positive time it sits at `lo` or `hi`.
#[inline]
fn walk<S: SiteSource, R: Rng>(
    sites: &mut S,
    start: i64,
    lo: i64,
    hi: i64,
    cap: u64,
    rng: &mut R,
) -> std::result::Result<Option<(u64, i64)>, Exhausted> {
    let mut x = start;
    for t in 1..=cap {
        let w = match sites.omega(x) {
            Some(w) => w,
            None => return Err(Exhausted { position: x, step: t - 1 }),
        };
        x += if rng.gen::<f64>() < w { 1 } else { -1 };
        if x == lo || x == hi {
            return Ok(Some((t, x)));
        }
    }
    Ok(None)
}

fn exhausted(e: Exhausted, count: u64, replicas: u64) -> SimError {
    SimError::WindowExhausted {
        position: e.position,
        step: e.step,
        count,
        replicas,
    }
}

/// One sample of `tau_target` under `P^start`, or capped.
pub fn simulate_hitting_time<S: SiteSource, R: Rng>(
    sites: &mut S,
    start: i64,
    target: i64,
    cap: u64,
    rng: &mut R,
) -> Result<HitSample> {
    if cap == 0 {
        return Err(SimError::ZeroCap);
    }
    walk(sites, start, target, target, cap, rng)
        .map(|r| HitSample {
            value: r.map(|(t, _)| t),
            cap,
        })
        .map_err(|e| exhausted(e, 1, 1))
}

/// One sample of `tau_a ^ tau_b` under `P^start`.
pub fn simulate_exit<S: SiteSource, R: Rng>(
    sites: &mut S,
    start: i64,
    a: i64,
    b: i64,
    cap: u64,
    rng: &mut R,
) -> Result<ExitSample> {
    if cap == 0 {
        return Err(SimError::ZeroCap);
    }
    if !(a < b) {
        return Err(SimError::InvalidArgument(format!("need a < b, got {a}, {b}")));
    }
    walk(sites, start, a, b, cap, rng)
        .map(|r| ExitSample {
            time: r.map(|(t, _)| t),
            site: r.map(|(_, s)| s),
        })
        .map_err(|e| exhausted(e, 1, 1))
}

/// Collects per-replica results, turning any window exhaustion into an error
/// that reports how many replicas were affected.
fn collect<T>(results: Vec<std::result::Result<T, Exhausted>>) -> Result<Vec<T>> {
    let n = results.len() as u64;
    let bad: Vec<Exhausted> = results
        .iter()
        .filter_map(|r| r.as_ref().err().copied())
        .collect();
    if let Some(first) = bad.first() {
        return Err(exhausted(*first, bad.len() as u64, n));
    }
    Ok(results.into_iter().map(|r| r.unwrap_or_else(|_| unreachable!())).collect())
}

const TAG_HIT: u64 = 1;
const TAG_EXIT: u64 = 2;
const TAG_INTERVAL: u64 = 3;
const TAG_DAMPED: u64 = 4;
const TAG_GOOD: u64 = 5;
const TAG_SEARCH: u64 = 6;
const TAG_L31: u64 = 7;
const TAG_L34: u64 = 8;
const TAG_L35: u64 = 9;
const TAG_L36: u64 = 10;
const TAG_SINAI: u64 = 11;

/// Proportion estimate of `P^x(tau_b < tau_a)`.
pub fn estimate_hit_before(env: &Environment, x: i64, a: i64, b: i64, cfg: &McConfig) -> Result<Estimate> {
    cfg.validate()?;
    if !(a < x && x < b) {
        return Err(SimError::InvalidArgument(format!("need a < x < b, got {a}, {x}, {b}")));
    }
    let res = run_replicas(cfg.reps, cfg.threads, |k| {
        let mut rng = cfg.rng(TAG_HIT, k);
        let mut s = env;
        walk(&mut s, x, a, b, u64::MAX, &mut rng).map(|r| r.is_some_and(|(_, s)| s == b))
    });
    let hits = collect(res)?.into_iter().filter(|h| *h).count() as u64;
    Ok(Estimate::wilson(hits, cfg.reps, cfg.confidence))
}

/// Mean estimate of `E^x(tau_a ^ tau_b)`.
pub fn estimate_exit_time(env: &Environment, x: i64, a: i64, b: i64, cfg: &McConfig) -> Result<Estimate> {
    cfg.validate()?;
    if !(a < x && x < b) {
        return Err(SimError::InvalidArgument(format!("need a < x < b, got {a}, {x}, {b}")));
    }
    let res = run_replicas(cfg.reps, cfg.threads, |k| {
        let mut rng = cfg.rng(TAG_EXIT, k);
        let mut s = env;
        walk(&mut s, x, a, b, u64::MAX, &mut rng).map(|r| r.map_or(f64::INFINITY, |(t, _)| t as f64))
    });
    Ok(Estimate::normal_mean(&collect(res)?, cfg.confidence))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntervalProb {
    /// `P(tau < lo)`.
    pub below: Estimate,
    /// `P(lo <= tau < hi)`.
    pub inside: Estimate,
    /// `P(tau >= hi)`, including walks that never hit.
    pub above: Estimate,
    pub counts: [u64; 3],
}

/// Three-way split of `tau_target` under `P^start` at `lo` and `hi`.
pub fn estimate_quenched_interval_prob(
    env: &Environment,
    start: i64,
    target: i64,
    lo_steps: u64,
    hi_steps: u64,
    cfg: &McConfig,
) -> Result<IntervalProb> {
    cfg.validate()?;
    if !(lo_steps < hi_steps) || hi_steps < 2 {
        return Err(SimError::InvalidArgument(format!(
            "need lo < hi with hi >= 2, got {lo_steps}, {hi_steps}"
        )));
    }
    let res = run_replicas(cfg.reps, cfg.threads, |k| {
        let mut rng = cfg.rng(TAG_INTERVAL, k);
        let mut s = env;
        walk(&mut s, start, target, target, hi_steps - 1, &mut rng).map(|r| match r {
            Some((t, _)) if t < lo_steps => 0usize,
            Some(_) => 1,
            None => 2,
        })
    });
    let mut counts = [0u64; 3];
    for c in collect(res)? {
        counts[c] += 1;
    }
    let e = |c: u64| Estimate::wilson(c, cfg.reps, cfg.confidence);
    Ok(IntervalProb {
        below: e(counts[0]),
        inside: e(counts[1]),
        above: e(counts[2]),
        counts,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DampedMoment {
    pub alpha: f64,
    pub r: f64,
    pub estimate: Estimate,
    /// Replicas that reached the cap and contributed `cap^alpha e^{-r cap}`.
    pub capped: u64,
    /// `M_alpha r^{-alpha}` with `M_alpha = (alpha/e)^alpha`.
    pub bound: f64,
}

/// `sup_{x > 0} x^alpha e^{-x}`.
pub fn m_alpha(alpha: f64) -> f64 {
    (alpha / std::f64::consts::E).powf(alpha)
}

/// Annealed `E[tau_1^alpha e^{-r tau_1}]`: a fresh environment and a fresh
/// walk per replica. `window` bounds the sites generated on each side.
pub fn estimate_annealed_damped_moment(
    dist: &EnvDistribution,
    alpha: f64,
    r: f64,
    window: u64,
    cap: u64,
    cfg: &McConfig,
) -> Result<DampedMoment> {
    cfg.validate()?;
    if !(alpha > 0.0 && r > 0.0) {
        return Err(SimError::InvalidArgument(format!(
            "need alpha > 0 and r > 0, got {alpha}, {r}"
        )));
    }
    if (cap as f64) < 50.0 / r {
        return Err(SimError::InvalidArgument(format!(
            "cap {cap} below 50 / r = {}",
            50.0 / r
        )));
    }
    let capped_value = (cap as f64).powf(alpha) * (-r * cap as f64).exp();
    let res = run_replicas(cfg.reps, cfg.threads, |k| {
        let mut env = LazyEnvironment::new(dist, cfg.env_seed(TAG_DAMPED, k), window);
        let mut rng = cfg.rng(TAG_DAMPED, k);
        walk(&mut env, 0, 1, 1, cap, &mut rng).map(|h| match h {
            Some((t, _)) => {
                let t = t as f64;
                (t.powf(alpha) * (-r * t).exp(), false)
            }
            None => (capped_value, true),
        })
    });
    let res = collect(res)?;
    let capped = res.iter().filter(|(_, c)| *c).count() as u64;
    let vals: Vec<f64> = res.into_iter().map(|(v, _)| v).collect();
    Ok(DampedMoment {
        alpha,
        r,
        estimate: Estimate::normal_mean(&vals, cfg.confidence),
        capped,
        bound: m_alpha(alpha) * r.powf(-alpha),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DampedTrend {
    pub points: Vec<DampedMoment>,
    /// OLS slope of `log estimate` against `log(1/r)`.
    pub slope: f64,
    pub all_below_bound: bool,
}

/// Damped moments over `r_list` (each point with its own substream) and the
/// log-log growth exponent.
pub fn damped_moment_trend(
    dist: &EnvDistribution,
    alpha: f64,
    r_list: &[f64],
    window: u64,
    cfg: &McConfig,
) -> Result<DampedTrend> {
    if r_list.len() < 2 {
        return Err(SimError::InvalidArgument("need at least two values of r".into()));
    }
    let mut points = Vec::with_capacity(r_list.len());
    for (j, &r) in r_list.iter().enumerate() {
        let sub = McConfig {
            seed: substream_seed(cfg.seed, Domain::Meta, 1000 + j as u64),
            ..*cfg
        };
        let cap = (50.0 / r).ceil() as u64;
        points.push(estimate_annealed_damped_moment(dist, alpha, r, window, cap, &sub)?);
    }
    let x: Vec<f64> = points.iter().map(|p| (1.0 / p.r).ln()).collect();
    let y: Vec<f64> = points.iter().map(|p| p.estimate.mean.ln()).collect();
    Ok(DampedTrend {
        slope: ols_slope(&x, &y),
        all_below_bound: points.iter().all(|p| p.estimate.mean <= p.bound),
        points,
    })
}

fn log_rho_block(dist: &EnvDistribution, seed: u64, from: i64, len: i64) -> Vec<f64> {
    (from..from + len)
        .map(|i| {
            let w = dist.quantile(site_uniform(seed, i));
            ((1.0 - w) / w).ln()
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GoodEnvProb {
    pub good: Estimate,
    pub e1: Estimate,
    /// `E_2 and E_3`.
    pub descent: Estimate,
    /// `E_4 and E_5`.
    pub ascent: Estimate,
    pub flags: [u64; 5],
    pub good_count: u64,
}

/// Empirical `P(E_n)` and the rates of its three independent blocks.
pub fn estimate_good_env_prob(
    dist: &EnvDistribution,
    params: &GoodEnvParams,
    cfg: &McConfig,
) -> Result<GoodEnvProb> {
    cfg.validate()?;
    let (c1, c2) = (params.c1, params.c2);
    let res = run_replicas(cfg.reps, cfg.threads, |k| {
        let seed = cfg.env_seed(TAG_GOOD, k);
        let e1 = params.e1_holds(&log_rho_block(dist, seed, 1, c1));
        let (e2, e3) = params.descent_verdicts(&log_rho_block(dist, seed, c1 + 1, c2));
        let (e4, e5) = params.ascent_verdicts(&log_rho_block(dist, seed, c1 + c2 + 1, c2));
        [e1, e2, e3, e4, e5]
    });
    let mut flags = [0u64; 5];
    let (mut desc, mut asc, mut good) = (0u64, 0u64, 0u64);
    for f in &res {
        for (c, b) in flags.iter_mut().zip(f) {
            *c += *b as u64;
        }
        desc += (f[1] && f[2]) as u64;
        asc += (f[3] && f[4]) as u64;
        good += f.iter().all(|b| *b) as u64;
    }
    let w = |c| Estimate::wilson(c, cfg.reps, cfg.confidence);
    Ok(GoodEnvProb {
        good: w(good),
        e1: w(flags[0]),
        descent: w(desc),
        ascent: w(asc),
        flags,
        good_count: good,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GoodEnvSearch {
    pub env: Environment,
    pub report: GoodEnvReport,
    /// Index of the accepted candidate.
    pub index: u64,
    pub tries: u64,
}

/// Rejection sampling over candidates `0, 1, ...`; returns the first good
/// one. The result does not depend on the thread count.
pub fn find_good_environment(
    dist: &EnvDistribution,
    params: &GoodEnvParams,
    tries: u64,
    seed: u64,
    threads: usize,
) -> Result<GoodEnvSearch> {
    let cfg = McConfig::new(2, seed).threads(threads);
    let (c1, c2) = (params.c1, params.c2);
    let (lo, hi) = params.window();
    const CHUNK: u64 = 1 << 14;
    let mut e1_passes = 0u64;
    let mut start = 0u64;
    while start < tries {
        let len = CHUNK.min(tries - start);
        let verdicts = run_replicas(len, threads, |j| {
            let seed = cfg.env_seed(TAG_SEARCH, start + j);
            if !params.e1_holds(&log_rho_block(dist, seed, 1, c1)) {
                return (false, false);
            }
            let (e2, e3) = params.descent_verdicts(&log_rho_block(dist, seed, c1 + 1, c2));
            if !(e2 && e3) {
                return (true, false);
            }
            let (e4, e5) = params.ascent_verdicts(&log_rho_block(dist, seed, c1 + c2 + 1, c2));
            (true, e4 && e5)
        });
        for (j, (e1, good)) in verdicts.into_iter().enumerate() {
            e1_passes += e1 as u64;
            if good {
                let index = start + j as u64;
                let env = sample_environment(dist, lo, hi, cfg.env_seed(TAG_SEARCH, index))?;
                let report = check_good_environment(&env, params)?;
                debug_assert!(report.good);
                return Ok(GoodEnvSearch {
                    env,
                    report,
                    index,
                    tries: index + 1,
                });
            }
        }
        start += len;
    }
    Err(SimError::NoGoodEnvironment {
        tries,
        e1_rate: e1_passes as f64 / tries.max(1) as f64,
    })
}

/// Constants of the valley lemmas, from their displayed expressions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LemmaConstants {
    pub c7: f64,
    pub c8: f64,
    pub c9: f64,
    pub two_c9: f64,
    pub c10: f64,
}

pub fn lemma_constants(eps0: f64, delta: f64) -> LemmaConstants {
    let k = (1.0 - eps0) / eps0;
    let g = 1.0 / (1.0 - (-delta).exp());
    let c7 = (1.0 / k) / (k + g + 1.0);
    let two_c9 = 1.0 / ((1.0 + g + k) * k + 1.0);
    LemmaConstants {
        c7,
        c8: c7 / 2.0,
        c9: two_c9 / 2.0,
        two_c9,
        c10: k * delta.exp(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LemmaReport {
    pub log_n: f64,
    pub eps_prime: f64,
    /// Candidate index and number of candidates tried, when searched.
    pub env_index: Option<u64>,
    pub tries: Option<u64>,
    pub good: GoodEnvReport,
    pub m_n: i64,
    pub b_n: i64,
    pub constants: LemmaConstants,
    /// `P(tau_{m_n} < tau_{-1})` vs `C7`.
    pub lemma32_exact: f64,
    pub lemma32_ok: bool,
    /// `P^{m_n}(tau_{-1} < tau_{b_n})` vs `2 C9`.
    pub eq34_exact: f64,
    pub eq34_ok: bool,
    /// Exit-time bound for `(a, x, b) = (-1, 0, m_n)` vs `n^{3 eps'}`.
    pub fact33_bound: f64,
    pub fact33_limit: f64,
    pub fact33_ok: bool,
    /// `P^{m_n - 1}(tau_{-1} < tau_{m_n})`, `P^{m_n + 1}(tau_{b_n} < tau_{m_n})`
    /// vs `C10 n^{-(1 - 9 eps')}`.
    pub escape_left: f64,
    pub escape_right: f64,
    pub escape_limit: f64,
    pub escape_ok: bool,
    /// `P(n^{1 - 10 eps'} <= tau_{-1} < n)`, floor 0.05 with CI above 0.
    pub lemma31: Estimate,
    pub lemma31_ok: bool,
    /// `P(tau_{m_n} < tau_{-1}, tau_{m_n} <= n^{4 eps'})` vs `C8`.
    pub lemma34: Estimate,
    pub lemma34_ok: bool,
    /// `P^{m_n}(tau_{-1} <= n^{1 - 5 eps'})` vs `C9`.
    pub lemma35: Estimate,
    pub lemma35_ok: bool,
    /// `P^{m_n}(tau_{-1} > n^{1 - 10 eps'})` vs `1 - C10 n^{-eps'}`.
    pub lemma36: Estimate,
    pub lemma36_floor: f64,
    pub lemma36_ok: bool,
}

/// Floor used for the unspecified constant of the interval lemma.
pub const LEMMA31_FLOOR: f64 = 0.05;

fn steps_at_most(x: f64) -> u64 {
    x.floor().max(1.0).min(u64::MAX as f64 / 2.0) as u64
}

fn steps_at_least(x: f64) -> u64 {
    x.ceil().max(1.0).min(u64::MAX as f64 / 2.0) as u64
}

/// Exact values and Monte Carlo estimates for each valley lemma on a given
/// good environment.
pub fn verify_lemma_chain_on(env: &Environment, params: &GoodEnvParams, cfg: &McConfig) -> Result<LemmaReport> {
    cfg.validate()?;
    let good = check_good_environment(env, params)?;
    if !good.good {
        return Err(SimError::NotGood(format!(
            "E1..E5 = {}, {}, {}, {}, {}",
            good.e1, good.e2, good.e3, good.e4, good.e5
        )));
    }
    let (m, b) = (good.m_n.expect("good"), good.b_n.expect("good"));
    let pot = potential(env)?;
    let k = lemma_constants(params.eps0, params.delta);
    let (ln, ep) = (params.log_n, params.eps_prime);
    let pow = |e: f64| (e * ln).exp();

    let lemma32_exact = hit_prob_before(&pot, 0, -1, m)?;
    let eq34_exact = hit_prob_lower_first(&pot, m, -1, b)?;
    let fact33_bound = expected_exit_time_bound(env, &pot, 0, -1, m)?;
    let fact33_limit = pow(3.0 * ep);
    let (escape_left, escape_right) = single_excursion_escape_prob(&pot, m, -1, b)?;
    let escape_limit = k.c10 * pow(-(1.0 - 9.0 * ep));

    let w = |c: u64| Estimate::wilson(c, cfg.reps, cfg.confidence);

    let l31 = estimate_quenched_interval_prob(
        env,
        0,
        -1,
        steps_at_least(pow(1.0 - 10.0 * ep)),
        steps_at_least(pow(1.0)),
        &McConfig {
            seed: substream_seed(cfg.seed, Domain::Meta, TAG_L31),
            ..*cfg
        },
    )?;

    let cap34 = steps_at_most(pow(4.0 * ep));
    let hits34 = collect(run_replicas(cfg.reps, cfg.threads, |i| {
        let mut rng = cfg.rng(TAG_L34, i);
        let mut s = env;
        walk(&mut s, 0, -1, m, cap34, &mut rng).map(|r| matches!(r, Some((_, x)) if x == m))
    }))?;
    let lemma34 = w(hits34.into_iter().filter(|h| *h).count() as u64);

    let cap35 = steps_at_most(pow(1.0 - 5.0 * ep));
    let hits35 = collect(run_replicas(cfg.reps, cfg.threads, |i| {
        let mut rng = cfg.rng(TAG_L35, i);
        let mut s = env;
        walk(&mut s, m, -1, -1, cap35, &mut rng).map(|r| r.is_some())
    }))?;
    let lemma35 = w(hits35.into_iter().filter(|h| *h).count() as u64);

    let cap36 = steps_at_most(pow(1.0 - 10.0 * ep));
    let stays36 = collect(run_replicas(cfg.reps, cfg.threads, |i| {
        let mut rng = cfg.rng(TAG_L36, i);
        let mut s = env;
        walk(&mut s, m, -1, -1, cap36, &mut rng).map(|r| r.is_none())
    }))?;
    let lemma36 = w(stays36.into_iter().filter(|h| *h).count() as u64);
    let lemma36_floor = 1.0 - k.c10 * pow(-ep);

    Ok(LemmaReport {
        log_n: ln,
        eps_prime: ep,
        env_index: None,
        tries: None,
        m_n: m,
        b_n: b,
        constants: k,
        lemma32_ok: lemma32_exact >= k.c7,
        lemma32_exact,
        eq34_ok: eq34_exact >= k.two_c9,
        eq34_exact,
        fact33_ok: fact33_bound <= fact33_limit,
        fact33_bound,
        fact33_limit,
        escape_ok: escape_left <= escape_limit && escape_right <= escape_limit,
        escape_left,
        escape_right,
        escape_limit,
        lemma31_ok: l31.inside.mean >= LEMMA31_FLOOR && l31.inside.ci_low > 0.0,
        lemma31: l31.inside,
        lemma34_ok: lemma34.mean >= k.c8,
        lemma34,
        lemma35_ok: lemma35.mean >= k.c9,
        lemma35,
        lemma36_ok: lemma36.mean >= lemma36_floor,
        lemma36,
        lemma36_floor,
        good,
    })
}

/// Rejection-samples a good environment, then runs [`verify_lemma_chain_on`].
pub fn verify_lemma_chain(
    dist: &EnvDistribution,
    params: &GoodEnvParams,
    env_tries: u64,
    cfg: &McConfig,
) -> Result<LemmaReport> {
    let found = find_good_environment(dist, params, env_tries, cfg.seed, cfg.threads)?;
    let mut rep = verify_lemma_chain_on(&found.env, params, cfg)?;
    rep.env_index = Some(found.index);
    rep.tries = Some(found.tries);
    Ok(rep)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SinaiSummary {
    pub n: u64,
    pub samples: u64,
    pub exhausted: u64,
    pub q25: f64,
    pub median: f64,
    pub q75: f64,
    pub iqr: f64,
    /// Median of `|sigma^2 S_n| / (log n)^2`.
    pub median_abs: f64,
    pub mean: f64,
}

/// Empirical law of `sigma^2 S_n / (log n)^2`, one fresh environment and walk
/// per replica, with windows `+-c (log n)^2`. Replicas that leave the window
/// are counted and excluded.
pub fn sinai_scaling_sample(
    dist: &EnvDistribution,
    n_list: &[u64],
    window_c: f64,
    cfg: &McConfig,
) -> Result<Vec<SinaiSummary>> {
    cfg.validate()?;
    if dist.mean_log_rho() != 0.0 || dist.var_log_rho() == 0.0 {
        return Err(SimError::InvalidArgument(
            "scaling needs a recurrent, non-degenerate law".into(),
        ));
    }
    if !(window_c > 0.0) {
        return Err(SimError::InvalidArgument(format!("window constant {window_c}")));
    }
    let sigma2 = dist.var_log_rho();
    let mut out = Vec::with_capacity(n_list.len());
    for (j, &n) in n_list.iter().enumerate() {
        if n < 3 {
            return Err(SimError::InvalidArgument(format!("n = {n} must exceed e")));
        }
        let l2 = (n as f64).ln().powi(2);
        let extent = (window_c * l2).ceil() as u64;
        let tag = TAG_SINAI * 1000 + j as u64;
        let res = run_replicas(cfg.reps, cfg.threads, |k| {
            let mut env = LazyEnvironment::new(dist, cfg.env_seed(tag, k), extent);
            let mut rng = cfg.rng(tag, k);
            let mut x = 0i64;
            for _ in 0..n {
                let w = env.omega(x)?;
                x += if rng.gen::<f64>() < w { 1 } else { -1 };
            }
            Some(sigma2 * x as f64 / l2)
        });
        let exhausted = res.iter().filter(|r| r.is_none()).count() as u64;
        let mut vals: Vec<f64> = res.into_iter().flatten().collect();
        if vals.len() < 2 {
            return Err(SimError::WindowExhausted {
                position: extent as i64,
                step: n,
                count: exhausted,
                replicas: cfg.reps,
            });
        }
        let m = mean(&vals);
        let mut abs: Vec<f64> = vals.iter().map(|v| v.abs()).collect();
        vals.sort_by(f64::total_cmp);
        abs.sort_by(f64::total_cmp);
        let (q25, q75) = (quantile_sorted(&vals, 0.25), quantile_sorted(&vals, 0.75));
        out.push(SinaiSummary {
            n,
            samples: vals.len() as u64,
            exhausted,
            q25,
            median: quantile_sorted(&vals, 0.5),
            q75,
            iqr: q75 - q25,
            median_abs: quantile_sorted(&abs, 0.5),
            mean: m,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chain_exact::expected_exit_time_exact;
    use crate::env_model::good_env_params;

    fn flat(p: f64, lo: i64, hi: i64) -> Environment {
        let d = EnvDistribution::constant(p).unwrap();
        Environment::new(lo, vec![p; (hi - lo + 1) as usize], d, None).unwrap()
    }

    #[test]
    fn one_step_law() {
        let mut w = vec![0.5; 21];
        w[10] = 0.9;
        let d = EnvDistribution::two_point(0.1).unwrap();
        let e = Environment::new(-10, w, d, None).unwrap();
        let n = 100_000u64;
        let mut hits = 0;
        for k in 0..n {
            let mut rng = replica_rng(1, Domain::Walk, k);
            let mut s = &e;
            let h = simulate_hitting_time(&mut s, 0, 1, 1, &mut rng).unwrap();
            hits += (h.value == Some(1)) as u64;
        }
        assert!(Estimate::wilson(hits, n, 0.999).contains(0.9));
    }

    #[test]
    fn symmetric_exit_time_is_one() {
        let e = flat(0.5, -3, 3);
        let est = estimate_exit_time(&e, 0, -1, 1, &McConfig::new(1000, 3)).unwrap();
        assert_eq!(est.mean, 1.0);
    }

    #[test]
    fn cap_semantics() {
        // deep valley around the origin: the walk cannot reach site 40 in 10 steps
        let mut l = vec![0.0; 101];
        for (k, v) in l.iter_mut().enumerate() {
            *v = if k < 50 { 1.0 } else { -1.0 };
        }
        let d = EnvDistribution::uniform(0.2).unwrap();
        let e = Environment::from_log_rho(-50, &l, d).unwrap();
        let mut rng = replica_rng(0, Domain::Walk, 0);
        let mut s = &e;
        let h = simulate_hitting_time(&mut s, 0, 40, 10, &mut rng).unwrap();
        assert!(h.capped());
        assert!(matches!(
            simulate_hitting_time(&mut s, 0, 40, 0, &mut rng),
            Err(SimError::ZeroCap)
        ));
    }

    #[test]
    fn window_exhaustion_is_an_error() {
        let e = flat(0.9, -2, 5);
        let err = estimate_hit_before(&e, 0, -1, 100, &McConfig::new(10, 1)).unwrap_err();
        assert!(matches!(err, SimError::WindowExhausted { count, replicas: 10, .. } if count >= 1));
        assert_eq!(err.class(), ErrorClass::Convergence);
    }

    #[test]
    fn interval_partition_sums_to_one() {
        let d = EnvDistribution::two_point(0.3).unwrap();
        let e = sample_environment(&d, -400, 400, 17).unwrap();
        let p = estimate_quenched_interval_prob(&e, 0, -1, 5, 300, &McConfig::new(4000, 2)).unwrap();
        assert_eq!(p.counts.iter().sum::<u64>(), 4000);
        assert_eq!(p.below.mean + p.inside.mean + p.above.mean, 1.0);
    }

    #[test]
    fn recurrent_walk_hits_minus_one() {
        let e = flat(0.5, -2, 100_000);
        let p = estimate_quenched_interval_prob(&e, 0, -1, 1, 5_000_000, &McConfig::new(300, 9)).unwrap();
        assert!(p.inside.mean > 0.98);
    }

    #[test]
    fn hit_prob_agrees_with_exact() {
        let d = EnvDistribution::uniform(0.1).unwrap();
        for s in 0..10 {
            let e = sample_environment(&d, -12, 12, s).unwrap();
            let v = potential(&e).unwrap();
            let exact = hit_prob_before(&v, 0, -10, 10).unwrap();
            let cfg = McConfig::new(20_000, 100 + s);
            let mc = estimate_hit_before(&e, 0, -10, 10, &cfg).unwrap();
            let sd = (exact * (1.0 - exact) / cfg.reps as f64).sqrt();
            assert!((mc.mean - exact).abs() <= 4.0 * sd + 1e-12, "{s}: {} vs {exact}", mc.mean);
            let t = expected_exit_time_exact(&e, 0, -10, 10).unwrap();
            let mt = estimate_exit_time(&e, 0, -10, 10, &cfg).unwrap();
            assert!((mt.mean - t).abs() <= 4.5 * mt.std_err, "{s}: {} vs {t}", mt.mean);
        }
    }

    #[test]
    fn estimators_are_thread_count_invariant() {
        let d = EnvDistribution::two_point(0.3).unwrap();
        let e = sample_environment(&d, -300, 300, 1).unwrap();
        let a = estimate_quenched_interval_prob(&e, 0, -1, 3, 200, &McConfig::new(3000, 4)).unwrap();
        let b = estimate_quenched_interval_prob(&e, 0, -1, 3, 200, &McConfig::new(3000, 4).threads(4)).unwrap();
        assert_eq!(a, b);
        let x = estimate_annealed_damped_moment(&d, 1.0, 0.1, 10_000, 500, &McConfig::new(2000, 8)).unwrap();
        let y = estimate_annealed_damped_moment(&d, 1.0, 0.1, 10_000, 500, &McConfig::new(2000, 8).threads(3)).unwrap();
        assert_eq!(x, y);
    }

    fn srw_damped_first_moment(r: f64) -> f64 {
        let s = (-r).exp();
        let q = (1.0 - s * s).sqrt();
        // s d/ds [(1 - sqrt(1 - s^2)) / s]
        let dg = (s * s / q - (1.0 - q)) / (s * s);
        s * dg
    }

    #[test]
    fn damped_moment_homogeneous_oracle() {
        let d = EnvDistribution::constant(0.5).unwrap();
        let r = 0.05;
        let cfg = McConfig::new(40_000, 6);
        let m = estimate_annealed_damped_moment(&d, 1.0, r, 100_000, 1000, &cfg).unwrap();
        let want = srw_damped_first_moment(r);
        assert!((m.estimate.mean - want).abs() <= 4.0 * m.estimate.std_err + 1e-3, "{} vs {want}", m.estimate.mean);
        assert!(m.estimate.mean <= m.bound);
        assert!(estimate_annealed_damped_moment(&d, 1.0, r, 100, 10, &cfg).is_err());
    }

    #[test]
    fn lemma_constant_values() {
        let k = lemma_constants(0.25, 3f64.ln() / 2.0);
        let g = 1.0 / (1.0 - (-(3f64.ln()) / 2.0).exp());
        assert!((k.c7 - (1.0 / 3.0) / (3.0 + g + 1.0)).abs() < 1e-15);
        assert!((k.two_c9 - 1.0 / ((1.0 + g + 3.0) * 3.0 + 1.0)).abs() < 1e-15);
        assert!((k.c10 - 3.0 * 3f64.sqrt()).abs() < 1e-14);
        assert!((k.c7 - 0.0524).abs() < 1e-3);
    }

    #[test]
    fn non_good_environment_is_rejected() {
        let d = EnvDistribution::two_point(0.25).unwrap();
        let p = good_env_params(&d, 0.1, 20.0).unwrap();
        let (lo, hi) = p.window();
        let e = sample_environment(&d, lo, hi, 1).unwrap();
        let err = verify_lemma_chain_on(&e, &p, &McConfig::new(10, 1)).unwrap_err();
        assert!(matches!(err, SimError::NotGood(_)));
    }

    #[test]
    fn good_env_prob_counts() {
        let d = EnvDistribution::two_point(0.25).unwrap();
        let p = good_env_params(&d, 0.1, 20.0).unwrap();
        let g = estimate_good_env_prob(&d, &p, &McConfig::new(4000, 3)).unwrap();
        // E1 needs both steps at the downward atom
        assert!(g.e1.contains(0.25));
        assert_eq!(g.good_count, 0);
        assert!(find_good_environment(&d, &p, 2000, 1, 1).is_err());
    }

    #[test]
    fn sinai_is_deterministic() {
        let d = EnvDistribution::two_point(0.25).unwrap();
        let cfg = McConfig::new(50, 7);
        let a = sinai_scaling_sample(&d, &[1000, 5000], 20.0, &cfg).unwrap();
        let b = sinai_scaling_sample(&d, &[1000, 5000], 20.0, &cfg.threads(3)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a[0].samples + a[0].exhausted, 50);
    }
}
