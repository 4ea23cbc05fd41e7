use rwre_core::chain_exact::{
    expected_exit_time_bound, expected_exit_time_exact, hit_prob_before, hit_prob_lower_first,
    quenched_laplace, Direction, LAPLACE_MAX_DEPTH,
};
use rwre_core::env_model::{
    check_good_environment, classify_regime, good_env_params, potential, sample_environment, EnvDistribution,
    Environment,
};
use rwre_core::mc_sim::{
    damped_moment_trend, estimate_exit_time, estimate_hit_before, sinai_scaling_sample, verify_lemma_chain,
    McConfig,
};
use rwre_core::rate_discrete::{self, curvature_trend, rate_function_from_points, CgfConfig};
use rwre_core::rng::{substream_seed, Domain};
use rwre_core::special_cont::{
    gamma_kappa, phi_and_a, rate_j, verify_bessel_inequalities, BESSEL_TOL,
};

use crate::config::ExperimentConfig;
use crate::output::{Cell, Table};
use crate::CliError;

/// Subcommands that write CSV tables and a manifest.
pub const COMMANDS: &[&str] = &[
    "env sample",
    "env check-good",
    "exact hit-prob",
    "exact exit-time",
    "exact laplace",
    "mc tau",
    "mc lemmas",
    "mc prop12",
    "mc sinai",
    "rate discrete",
    "rate continuous",
    "verify bessel",
];

/// Commands that consume randomness and therefore need a seed.
pub fn is_randomized(command: &str) -> bool {
    matches!(
        command,
        "env sample"
            | "env check-good"
            | "exact hit-prob"
            | "exact exit-time"
            | "exact laplace"
            | "mc tau"
            | "mc lemmas"
            | "mc prop12"
            | "mc sinai"
            | "rate discrete"
    )
}

pub struct Outcome {
    pub tables: Vec<Table>,
    pub warnings: Vec<String>,
}

fn req<T: Clone>(v: &Option<T>, name: &str) -> Result<T, CliError> {
    ExperimentConfig::require(v, name)
}

fn dist(c: &ExperimentConfig) -> Result<EnvDistribution, CliError> {
    req(&c.dist, "dist")?.build()
}

fn seed(c: &ExperimentConfig) -> Result<u64, CliError> {
    req(&c.seed, "seed")
}

fn threads(c: &ExperimentConfig) -> usize {
    c.threads.unwrap_or(1)
}

fn mc(c: &ExperimentConfig, default_reps: u64) -> Result<McConfig, CliError> {
    let conf = c.confidence.unwrap_or(0.95);
    if !(conf > 0.0 && conf < 1.0) {
        return Err(CliError::Config(format!("confidence = {conf} must lie in (0, 1)")));
    }
    Ok(McConfig::new(c.reps.unwrap_or(default_reps), seed(c)?)
        .threads(threads(c))
        .confidence(conf))
}

fn log_space(range: &[f64], points: usize, name: &str) -> Result<Vec<f64>, CliError> {
    if range.len() != 2 || !(range[0] > 0.0 && range[1] >= range[0]) || points < 1 {
        return Err(CliError::Config(format!(
            "`{name}` must be `min,max` with 0 < min <= max and at least one point"
        )));
    }
    if points == 1 {
        return Ok(vec![range[0]]);
    }
    let (a, b) = (range[0].ln(), range[1].ln());
    Ok((0..points)
        .map(|k| (a + (b - a) * k as f64 / (points - 1) as f64).exp())
        .collect())
}

/// Environment on `[a, b]` and the starting sites (default: all interior).
fn interval_setup(c: &ExperimentConfig) -> Result<(Environment, i64, i64, Vec<i64>), CliError> {
    let (a, b) = (req(&c.a, "a")?, req(&c.b, "b")?);
    if b - a < 2 {
        return Err(CliError::Config(format!("need a < x < b, got a = {a}, b = {b}")));
    }
    let sites = c.sites.clone().unwrap_or_else(|| (a + 1..b).collect());
    if let Some(x) = sites.iter().find(|x| !(a < **x && **x < b)) {
        return Err(CliError::Config(format!("site {x} outside ({a}, {b})")));
    }
    let env = sample_environment(&dist(c)?, a, b, seed(c)?)?;
    Ok((env, a, b, sites))
}

pub fn run(command: &str, c: &ExperimentConfig) -> Result<Outcome, CliError> {
    match command {
        "env sample" => env_sample(c),
        "env check-good" => env_check_good(c),
        "exact hit-prob" => exact_hit_prob(c),
        "exact exit-time" => exact_exit_time(c),
        "exact laplace" => exact_laplace(c),
        "mc tau" => mc_tau(c),
        "mc lemmas" => mc_lemmas(c),
        "mc prop12" => mc_prop12(c),
        "mc sinai" => mc_sinai(c),
        "rate discrete" => rate_discrete_cmd(c),
        "rate continuous" => rate_continuous(c),
        "verify bessel" => verify_bessel(c),
        other => Err(CliError::Config(format!("unknown command {other:?}"))),
    }
}

fn done(tables: Vec<Table>) -> Result<Outcome, CliError> {
    Ok(Outcome {
        tables,
        warnings: Vec::new(),
    })
}

fn env_sample(c: &ExperimentConfig) -> Result<Outcome, CliError> {
    let d = dist(c)?;
    let (lo, hi) = (c.lo.unwrap_or(-10), c.hi.unwrap_or(10));
    let env = sample_environment(&d, lo, hi, seed(c)?)?;
    let pot = potential(&env)?;
    let mut t = Table::new("environment", &["site", "omega", "log_rho", "potential"]);
    for i in lo..=hi {
        t.push(vec![
            i.into(),
            env.omega_checked(i)?.into(),
            env.log_rho(i)?.into(),
            pot.get(i).into(),
        ]);
    }
    let mut law = Table::new("law", &["quantity", "value"]);
    let info = classify_regime(&d);
    law.push(vec!["eps0".into(), d.eps0().into()]);
    law.push(vec!["mean_log_rho".into(), d.mean_log_rho().into()]);
    law.push(vec!["var_log_rho".into(), d.var_log_rho().into()]);
    law.push(vec!["mean_rho".into(), d.mean_rho().into()]);
    match info {
        Ok(r) => {
            law.push(vec!["regime".into(), Cell::S(format!("{:?}", r.regime))]);
            law.push(vec!["speed_positive".into(), r.speed_positive.into()]);
        }
        Err(e) => law.push(vec!["regime".into(), Cell::S(e.to_string())]),
    }
    done(vec![t, law])
}

fn env_check_good(c: &ExperimentConfig) -> Result<Outcome, CliError> {
    let d = dist(c)?;
    let p = good_env_params(&d, c.eps.unwrap_or(0.1), req(&c.log_n, "log_n")?)?;
    let mut params = Table::new("good_env_params", &["quantity", "value"]);
    for (k, v) in [
        ("log_n", p.log_n),
        ("eps", p.eps),
        ("delta", p.delta),
        ("event_prob", p.event_prob),
        ("theta_rate", p.theta_rate),
        ("eps0", p.eps0),
        ("eps_prime", p.eps_prime),
        ("beta", p.beta),
        ("c1", p.c1 as f64),
        ("c2", p.c2 as f64),
        ("c3", p.c3),
        ("c4", p.c4),
        ("c5", p.c5),
        ("c6", p.c6),
    ] {
        params.push(vec![k.into(), v.into()]);
    }
    let (lo, hi) = p.window();
    let master = seed(c)?;
    let mut t = Table::new(
        "good_env_check",
        &[
            "candidate", "env_seed", "e1", "e2", "e3", "e4", "e5", "good", "b_n", "m_n", "v_mn",
            "m_n_bounds_ok", "v_mn_bounds_ok", "valley_bounds_ok",
        ],
    );
    for k in 0..c.env_tries.unwrap_or(1) {
        let s = substream_seed(master, Domain::Environment, k);
        let env = sample_environment(&d, lo, hi, s)?;
        let r = check_good_environment(&env, &p)?;
        t.push(vec![
            k.into(),
            s.into(),
            r.e1.into(),
            r.e2.into(),
            r.e3.into(),
            r.e4.into(),
            r.e5.into(),
            r.good.into(),
            r.b_n.into(),
            r.m_n.into(),
            r.v_mn.into(),
            r.m_n_bounds_ok.into(),
            r.v_mn_bounds_ok.into(),
            r.valley_bounds_ok.into(),
        ]);
    }
    Ok(Outcome {
        tables: vec![params, t],
        warnings: p.warnings.clone(),
    })
}

fn exact_hit_prob(c: &ExperimentConfig) -> Result<Outcome, CliError> {
    let (env, a, b, sites) = interval_setup(c)?;
    let pot = potential(&env)?;
    let mut t = Table::new("hit_prob", &["x", "a", "b", "p_upper_first", "p_lower_first", "sum_is_one"]);
    for x in sites {
        let up = hit_prob_before(&pot, x, a, b)?;
        let down = hit_prob_lower_first(&pot, x, a, b)?;
        t.push(vec![
            x.into(),
            a.into(),
            b.into(),
            up.into(),
            down.into(),
            ((up + down - 1.0).abs() < 1e-12).into(),
        ]);
    }
    done(vec![t])
}

fn exact_exit_time(c: &ExperimentConfig) -> Result<Outcome, CliError> {
    let (env, a, b, sites) = interval_setup(c)?;
    let pot = potential(&env)?;
    let mut t = Table::new("exit_time", &["x", "a", "b", "exact", "bound", "bound_ge_exact"]);
    for x in sites {
        let exact = expected_exit_time_exact(&env, x, a, b)?;
        let bound = expected_exit_time_bound(&env, &pot, x, a, b)?;
        t.push(vec![
            x.into(),
            a.into(),
            b.into(),
            exact.into(),
            bound.into(),
            (bound >= exact * (1.0 - 1e-9)).into(),
        ]);
    }
    done(vec![t])
}

fn direction(c: &ExperimentConfig) -> Result<Direction, CliError> {
    match c.direction.as_deref().unwrap_or("right") {
        "right" => Ok(Direction::Right),
        "left" => Ok(Direction::Left),
        other => Err(CliError::Config(format!("direction {other:?} must be right or left"))),
    }
}

fn exact_laplace(c: &ExperimentConfig) -> Result<Outcome, CliError> {
    let d = dist(c)?;
    let rs = req(&c.r, "r")?;
    let dir = direction(c)?;
    let w = c.window.unwrap_or(1 << 16).clamp(1, LAPLACE_MAX_DEPTH as u64) as i64;
    let env = sample_environment(&d, -w, w, seed(c)?)?;
    let tol = c.tol.unwrap_or(rate_discrete::DEFAULT_TOL);
    let mut t = Table::new(
        "laplace",
        &[
            "r", "phi", "dphi", "d2phi", "phi_upper", "bracket_width", "dphi_err", "d2phi_err", "depth_used",
        ],
    );
    for r in rs {
        let l = quenched_laplace(&env, r, dir, tol)?;
        t.push(vec![
            r.into(),
            l.phi.into(),
            l.dphi.into(),
            l.d2phi.into(),
            l.phi_upper.into(),
            l.bracket_width.into(),
            l.dphi_err.into(),
            l.d2phi_err.into(),
            (l.depth_used as u64).into(),
        ]);
    }
    done(vec![t])
}

fn mc_tau(c: &ExperimentConfig) -> Result<Outcome, CliError> {
    let (env, a, b, sites) = interval_setup(c)?;
    let cfg = mc(c, 10_000)?;
    let pot = potential(&env)?;
    let mut t = Table::new(
        "mc_tau",
        &[
            "x", "a", "b", "exact_prob", "mc_prob", "prob_ci_low", "prob_ci_high", "prob_in_ci", "exact_time",
            "mc_time", "time_ci_low", "time_ci_high", "time_in_ci", "replicas",
        ],
    );
    for x in sites {
        let p = hit_prob_before(&pot, x, a, b)?;
        let tm = expected_exit_time_exact(&env, x, a, b)?;
        let pe = estimate_hit_before(&env, x, a, b, &cfg)?;
        let te = estimate_exit_time(&env, x, a, b, &cfg)?;
        t.push(vec![
            x.into(),
            a.into(),
            b.into(),
            p.into(),
            pe.mean.into(),
            pe.ci_low.into(),
            pe.ci_high.into(),
            pe.contains(p).into(),
            tm.into(),
            te.mean.into(),
            te.ci_low.into(),
            te.ci_high.into(),
            te.contains(tm).into(),
            cfg.reps.into(),
        ]);
    }
    done(vec![t])
}

fn mc_lemmas(c: &ExperimentConfig) -> Result<Outcome, CliError> {
    let d = dist(c)?;
    let p = good_env_params(&d, c.eps.unwrap_or(0.1), req(&c.log_n, "log_n")?)?;
    let cfg = mc(c, 200)?;
    let r = verify_lemma_chain(&d, &p, c.env_tries.unwrap_or(1_000_000), &cfg)?;
    let mut t = Table::new("lemmas", &["check", "value", "ci_low", "ci_high", "limit", "ok"]);
    let exact = |t: &mut Table, name: &str, v: f64, lim: f64, ok: bool| {
        t.push(vec![name.into(), v.into(), Cell::Empty, Cell::Empty, lim.into(), ok.into()]);
    };
    let k = &r.constants;
    t.push(vec![
        "good_env_index".into(),
        r.env_index.map(|i| i as f64).into(),
        Cell::Empty,
        Cell::Empty,
        Cell::Empty,
        r.good.good.into(),
    ]);
    exact(&mut t, "m_n", r.m_n as f64, p.log_n * p.log_n, r.good.m_n_bounds_ok == Some(true));
    exact(&mut t, "v_m_n", r.good.v_mn.unwrap_or(f64::NAN), -p.log_n, r.good.v_mn_bounds_ok == Some(true));
    exact(&mut t, "lemma32_hit_valley_first", r.lemma32_exact, k.c7, r.lemma32_ok);
    exact(&mut t, "eq34_return_before_b", r.eq34_exact, k.two_c9, r.eq34_ok);
    exact(&mut t, "fact33_exit_time_bound", r.fact33_bound, r.fact33_limit, r.fact33_ok);
    exact(&mut t, "escape_left", r.escape_left, r.escape_limit, r.escape_ok);
    exact(&mut t, "escape_right", r.escape_right, r.escape_limit, r.escape_ok);
    for (name, e, lim, ok) in [
        ("lemma31_interval_prob", &r.lemma31, rwre_core::mc_sim::LEMMA31_FLOOR, r.lemma31_ok),
        ("lemma34_fast_descent", &r.lemma34, k.c8, r.lemma34_ok),
        ("lemma35_fast_exit", &r.lemma35, k.c9, r.lemma35_ok),
        ("lemma36_slow_exit", &r.lemma36, r.lemma36_floor, r.lemma36_ok),
    ] {
        t.push(vec![
            name.into(),
            e.mean.into(),
            e.ci_low.into(),
            e.ci_high.into(),
            lim.into(),
            ok.into(),
        ]);
    }
    Ok(Outcome {
        tables: vec![t],
        warnings: p.warnings.clone(),
    })
}

fn mc_prop12(c: &ExperimentConfig) -> Result<Outcome, CliError> {
    let d = dist(c)?;
    let alpha = c.alpha.unwrap_or(1.0);
    let rs = c
        .r
        .clone()
        .unwrap_or_else(|| [-1.0, -1.5, -2.0, -2.5, -3.0].iter().map(|e| 10f64.powf(*e)).collect());
    if let Some(bad) = rs.iter().find(|r| !(**r > 0.0)) {
        return Err(CliError::Config(format!("damping r = {bad} must be > 0")));
    }
    let cfg = mc(c, 20_000)?;
    let r_min = rs.iter().cloned().fold(f64::INFINITY, f64::min);
    let window = c.window.unwrap_or((50.0 / r_min).ceil() as u64 + 1);
    let mut laws = vec![("rwre", d)];
    if c.control.unwrap_or(true) {
        laws.push(("homogeneous", EnvDistribution::constant(0.5)?));
    }
    let mut t = Table::new(
        "damped_moment",
        &[
            "law", "alpha", "r", "estimate", "ci_low", "ci_high", "capped", "bound", "below_bound", "slope",
        ],
    );
    let mut warnings = Vec::new();
    for (name, law) in &laws {
        let tr = damped_moment_trend(law, alpha, &rs, window, &cfg)?;
        for p in &tr.points {
            if p.capped > 0 {
                warnings.push(format!("{name}: {} of {} walks capped at r = {}", p.capped, cfg.reps, p.r));
            }
            t.push(vec![
                (*name).into(),
                alpha.into(),
                p.r.into(),
                p.estimate.mean.into(),
                p.estimate.ci_low.into(),
                p.estimate.ci_high.into(),
                p.capped.into(),
                p.bound.into(),
                (p.estimate.mean <= p.bound).into(),
                tr.slope.into(),
            ]);
        }
    }
    Ok(Outcome {
        tables: vec![t],
        warnings,
    })
}

fn mc_sinai(c: &ExperimentConfig) -> Result<Outcome, CliError> {
    let d = dist(c)?;
    let ns = c.n_list.clone().unwrap_or_else(|| vec![10_000, 100_000]);
    let cfg = mc(c, 2000)?;
    let res = sinai_scaling_sample(&d, &ns, c.window_c.unwrap_or(10.0), &cfg)?;
    let mut t = Table::new(
        "sinai",
        &["n", "samples", "exhausted", "q25", "median", "q75", "iqr", "median_abs", "mean"],
    );
    let mut warnings = Vec::new();
    for s in res {
        if s.exhausted > 0 {
            warnings.push(format!("n = {}: {} walks left the window", s.n, s.exhausted));
        }
        t.push(vec![
            s.n.into(),
            s.samples.into(),
            s.exhausted.into(),
            s.q25.into(),
            s.median.into(),
            s.q75.into(),
            s.iqr.into(),
            s.median_abs.into(),
            s.mean.into(),
        ]);
    }
    Ok(Outcome {
        tables: vec![t],
        warnings,
    })
}

fn rate_discrete_cmd(c: &ExperimentConfig) -> Result<Outcome, CliError> {
    let d = dist(c)?;
    let mut rs = c
        .r
        .clone()
        .unwrap_or_else(|| vec![-0.5, -0.2, -0.1, -0.05, -0.02, -0.01]);
    rs.sort_by(f64::total_cmp);
    rs.dedup();
    let cfg = CgfConfig {
        env_samples: c.env_samples.unwrap_or(10_000),
        window: c.window.map_or(LAPLACE_MAX_DEPTH, |w| w as usize),
        tol: c.tol.unwrap_or(rate_discrete::DEFAULT_TOL),
        seed: seed(c)?,
        threads: threads(c),
    };
    let trend = curvature_trend(&d, &rs, &cfg)?;
    let mut t = Table::new(
        "cgf",
        &[
            "r", "lambda", "d_lambda", "d2_lambda", "f", "g", "h", "mc_err", "f_err", "g_err", "h_err", "chain_ok",
            "env_samples",
        ],
    );
    for p in &trend.points {
        t.push(vec![
            p.r.into(),
            p.lambda.into(),
            p.d_lambda.into(),
            p.d2_lambda.into(),
            p.f.into(),
            p.g.into(),
            p.h.into(),
            p.mc_err.into(),
            p.f_err.into(),
            p.g_err.into(),
            p.h_err.into(),
            p.chain_holds(3.0).into(),
            p.env_samples.into(),
        ]);
    }
    let mut s = Table::new("curvature_summary", &["check", "value", "ok"]);
    s.push(vec!["f_nonnegative".into(), Cell::Empty, trend.f_nonnegative.into()]);
    s.push(vec!["f_le_g_le_h".into(), Cell::Empty, trend.chain_ok.into()]);
    s.push(vec![
        "f_end_below_start".into(),
        (trend.points[trend.points.len() - 1].f - trend.points[0].f).into(),
        trend.f_end_below_start.into(),
    ]);
    s.push(vec!["f_monotone".into(), Cell::Empty, trend.f_monotone.into()]);
    s.push(vec![
        "h_slope".into(),
        trend.h_slope.into(),
        (0.7..=1.3).contains(&trend.h_slope).into(),
    ]);
    let mut tables = vec![t, s];
    if let Some(vs) = &c.velocity {
        let rates = rate_function_from_points(&trend.points, vs)?;
        let mut rt = Table::new("rate_function", &["velocity", "i", "i_second_diff", "r_star", "inv_f_at_r_star"]);
        for p in rates {
            rt.push(vec![
                p.velocity.into(),
                p.i.into(),
                p.i_second_diff.into(),
                p.r_star.into(),
                p.inv_f_at_r_star.into(),
            ]);
        }
        tables.push(rt);
    }
    done(tables)
}

fn rate_continuous(c: &ExperimentConfig) -> Result<Outcome, CliError> {
    let kappas = req(&c.kappa, "kappa")?;
    let tol = c.tol.unwrap_or(BESSEL_TOL);
    if c.x.is_none() && c.lambda.is_none() {
        return Err(CliError::Config("missing required parameter `x` or `lambda`".into()));
    }
    let mut tables = Vec::new();
    if let Some(xs) = &c.x {
        let mut t = Table::new(
            "rate_j",
            &["kappa", "x", "v_kappa", "J_kappa", "J_B", "diff", "lambda_star", "below_benchmark"],
        );
        for &k in &kappas {
            for &x in xs {
                let p = rate_j(k, x, tol)?;
                t.push(vec![
                    k.into(),
                    x.into(),
                    p.v_kappa.into(),
                    p.j_kappa.into(),
                    p.j_b.into(),
                    (p.j_b - p.j_kappa).into(),
                    p.lambda_star.into(),
                    (p.j_kappa < p.j_b).into(),
                ]);
            }
        }
        tables.push(t);
    }
    if let Some(ls) = &c.lambda {
        let mut t = Table::new("gamma", &["kappa", "lambda", "Gamma", "phi_v", "margin"]);
        for &k in &kappas {
            for &l in ls {
                let g = gamma_kappa(k, l, tol)?;
                let (phi, _) = phi_and_a(k, l)?;
                t.push(vec![k.into(), l.into(), g.into(), phi.into(), (phi - g).into()]);
            }
        }
        tables.push(t);
    }
    done(tables)
}

fn verify_bessel(c: &ExperimentConfig) -> Result<Outcome, CliError> {
    let nu = log_space(&c.nu.clone().unwrap_or_else(|| vec![0.1, 5.0]), c.nu_points.unwrap_or(200), "nu")?;
    let y = log_space(&c.y.clone().unwrap_or_else(|| vec![0.05, 50.0]), c.y_points.unwrap_or(200), "y")?;
    let rep = verify_bessel_inequalities(&nu, &y, c.tol.unwrap_or(BESSEL_TOL))?;
    let mut t = Table::new("bessel_margins", &["nu", "y", "ratio", "upper_margin", "lower_margin", "ok"]);
    for p in &rep.points {
        t.push(vec![
            p.nu.into(),
            p.y.into(),
            p.ratio.into(),
            p.upper.into(),
            p.lower.into(),
            (p.upper > 0.0 && p.lower > 0.0).into(),
        ]);
    }
    let mut s = Table::new("bessel_summary", &["check", "value", "nu", "y", "ok"]);
    s.push(vec![
        "min_upper_margin".into(),
        rep.min_upper.into(),
        rep.min_upper_at.0.into(),
        rep.min_upper_at.1.into(),
        (rep.min_upper > 0.0).into(),
    ]);
    s.push(vec![
        "min_lower_margin".into(),
        rep.min_lower.into(),
        rep.min_lower_at.0.into(),
        rep.min_lower_at.1.into(),
        (rep.min_lower > 0.0).into(),
    ]);
    done(vec![t, s])
}
