use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_xoshiro::Xoshiro256PlusPlus;
use rwre_core::chain_exact::{
    expected_exit_time_bound, expected_exit_time_exact, hit_prob_before, hit_prob_lower_first,
};
use rwre_core::env_model::{potential, sample_environment, EnvDistribution};
use rwre_core::mc_sim::{estimate_exit_time, estimate_hit_before, McConfig};
use rwre_core::stats::Estimate;

#[test]
fn simulation_brackets_exact_values() {
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(11);
    let laws = [EnvDistribution::two_point(0.3).unwrap(), EnvDistribution::uniform(0.2).unwrap()];
    let mut misses = Vec::new();
    for k in 0..50u64 {
        let d = &laws[(k % 2) as usize];
        let (a, b) = (-rng.gen_range(1..6i64), rng.gen_range(2..12i64));
        let x = rng.gen_range(a + 1..b);
        let env = sample_environment(d, a, b, 1000 + k).unwrap();
        let pot = potential(&env).unwrap();
        let cfg = McConfig::new(100_000, k).confidence(0.999);
        let p = hit_prob_before(&pot, x, a, b).unwrap();
        let t = expected_exit_time_exact(&env, x, a, b).unwrap();
        let pe = estimate_hit_before(&env, x, a, b, &cfg).unwrap();
        let te = estimate_exit_time(&env, x, a, b, &cfg).unwrap();
        if !pe.contains(p) {
            misses.push((k, "prob", p, pe));
        }
        if !te.contains(t) {
            misses.push((k, "time", t, te));
        }
    }
    assert!(misses.is_empty(), "{misses:?}");
}

#[test]
fn wilson_interval_calibration() {
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(5);
    let mut covered = 0;
    for _ in 0..1000 {
        let hits = (0..200).filter(|_| rng.gen::<f64>() < 0.3).count() as u64;
        if Estimate::wilson(hits, 200, 0.95).contains(0.3) {
            covered += 1;
        }
    }
    assert!(covered >= 930, "coverage {covered}/1000");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn exit_bound_dominates_exact(seed in any::<u64>(), len in 2i64..120, frac in 0.0f64..1.0, uniform in any::<bool>()) {
        let d = if uniform {
            EnvDistribution::uniform(0.05).unwrap()
        } else {
            EnvDistribution::two_point(0.2).unwrap()
        };
        let env = sample_environment(&d, -1, len, seed).unwrap();
        let pot = potential(&env).unwrap();
        let x = ((len as f64 * frac) as i64).min(len - 1);
        let exact = expected_exit_time_exact(&env, x, -1, len).unwrap();
        let bound = expected_exit_time_bound(&env, &pot, x, -1, len).unwrap();
        prop_assert!(bound >= exact * (1.0 - 1e-9));
    }

    #[test]
    fn hit_probabilities_are_complementary(seed in any::<u64>(), a in -40i64..0, b in 1i64..40, frac in 0.0f64..1.0) {
        let d = EnvDistribution::uniform(0.1).unwrap();
        let env = sample_environment(&d, a, b, seed).unwrap();
        let pot = potential(&env).unwrap();
        let x = a + 1 + ((b - a - 1) as f64 * frac) as i64;
        let x = x.min(b - 1);
        let up = hit_prob_before(&pot, x, a, b).unwrap();
        let down = hit_prob_lower_first(&pot, x, a, b).unwrap();
        prop_assert!((0.0..=1.0).contains(&up) && (0.0..=1.0).contains(&down));
        prop_assert!((up + down - 1.0).abs() < 1e-12);
        if x + 1 < b {
            prop_assert!(hit_prob_before(&pot, x + 1, a, b).unwrap() >= up);
        }
    }
}
