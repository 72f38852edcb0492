use gebit_core::likelihood::{hill_climb, optimize_depth, round_largest_remainder};
use gebit_core::{
    brute_force_profile, gradient_log_likelihood, log_likelihood, maximize_profile, ContinuousProfile, DepthRange,
    LikelihoodQuery, ShellProfile,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// The tree-shape probability evaluated directly as a product, without
/// logarithms. Fine for the small `N` used here.
fn linear_probability(shells: &[u64], p: f64) -> f64 {
    let q = 1.0 - p;
    let factorial = |k: u64| (1..=k).map(|x| x as f64).product::<f64>();
    let mut value = p.powi(shells[0] as i32);
    for &d in shells {
        value /= factorial(d);
    }
    let mut prefix = 1u64;
    for i in 1..shells.len() {
        let factor = q.powi(prefix as i32) * (1.0 - q.powi(shells[i - 1] as i32));
        value *= factor.powi(shells[i] as i32);
        prefix += shells[i - 1];
    }
    value
}

fn compositions(total: u64) -> Vec<Vec<u64>> {
    if total == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for first in 1..=total {
        for mut rest in compositions(total - first) {
            rest.insert(0, first);
            out.push(rest);
        }
    }
    out
}

fn oracle_best(n: u64, p: f64) -> (f64, Vec<u64>) {
    compositions(n - 1)
        .into_iter()
        .map(|c| (linear_probability(&c, p).ln(), c))
        .fold((f64::NEG_INFINITY, vec![]), |best, cand| if cand.0 > best.0 { cand } else { best })
}

#[test]
fn log_domain_matches_the_direct_product() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..500 {
        let depth = rng.random_range(1..8);
        let shells: Vec<u64> = (0..depth).map(|_| rng.random_range(1..6)).collect();
        let p = rng.random_range(0.01..0.9);
        let profile = ShellProfile::new(shells.clone()).unwrap();
        let ours = log_likelihood(&profile, p).unwrap();
        let oracle = linear_probability(&shells, p).ln();
        assert!((ours - oracle).abs() < 1e-10 * oracle.abs().max(1.0), "{shells:?} p={p}: {ours} vs {oracle}");
    }
}

#[test]
fn gradient_matches_central_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let step = 1e-5;
    let mut worst = 0.0f64;
    for _ in 0..200 {
        let depth = rng.random_range(1..25);
        let shells: Vec<f64> = (0..depth).map(|_| rng.random_range(1.0..60.0)).collect();
        let p = 10f64.powf(rng.random_range(-6.0..-0.3));
        let analytic = gradient_log_likelihood(&ContinuousProfile::new(shells.clone()).unwrap(), p).unwrap();
        for k in 0..depth {
            let mut hi = shells.clone();
            let mut lo = shells.clone();
            hi[k] += step;
            lo[k] -= step;
            let f = |s: Vec<f64>| log_likelihood(&ContinuousProfile::new(s).unwrap(), p).unwrap();
            let numeric = (f(hi) - f(lo)) / (2.0 * step);
            let rel = (numeric - analytic[k]).abs() / analytic[k].abs().max(1.0);
            worst = worst.max(rel);
            assert!(rel < 1e-6, "k={k} p={p}: {numeric} vs {}", analytic[k]);
        }
    }
    assert!(worst < 1e-6);
}

#[test]
fn maximizer_agrees_with_enumeration() {
    for n in 2..=12u64 {
        for p in [0.05, 0.1, 0.2, 0.5] {
            let query = LikelihoodQuery::new(n, p).unwrap();
            let (oracle, argmax) = oracle_best(n, p);
            let full = DepthRange::new(1, (n - 1) as usize);
            let ours = maximize_profile(&query, full).unwrap();
            assert!((ours.log_prob - oracle).abs() < 1e-9, "N={n} p={p}: {} vs {oracle} at {argmax:?}", ours.log_prob);
            let brute = brute_force_profile(&query).unwrap();
            assert!((brute.log_prob - oracle).abs() < 1e-9);
            assert_eq!(ours.profile.total_n(), n);
        }
    }
}

#[test]
fn ten_nodes_over_all_256_compositions() {
    let all = compositions(9);
    assert_eq!(all.len(), 256);
    let query = LikelihoodQuery::new(10, 0.2).unwrap();
    let (oracle, _) = oracle_best(10, 0.2);
    let ours = maximize_profile(&query, DepthRange::new(1, 9)).unwrap();
    assert!((ours.log_prob - oracle).abs() < 1e-9);
    assert_eq!(brute_force_profile(&query).unwrap().log_prob, ours.log_prob);
}

#[test]
fn three_nodes_prefer_a_path_when_q_exceeds_half() {
    for (p, path) in [(0.1, true), (0.4, true), (0.6, false), (0.9, false)] {
        let query = LikelihoodQuery::new(3, p).unwrap();
        let best = brute_force_profile(&query).unwrap();
        let expected: &[u64] = if path { &[1, 1] } else { &[2] };
        assert_eq!(best.profile.shells(), expected, "p={p}");
    }
}

#[test]
fn refinement_never_loses() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..30 {
        let n = rng.random_range(20..400u64);
        let p = 10f64.powf(rng.random_range(-5.0..-0.5));
        let query = LikelihoodQuery::new(n, p).unwrap();
        let depth = rng.random_range(1..(n as usize).min(40));
        let opt = optimize_depth(&query, depth).unwrap();
        assert!(opt.log_prob >= opt.rounded_log_prob);
        assert_eq!(opt.refined.iter().sum::<u64>(), n - 1);
        assert!(opt.refined.iter().all(|&d| d >= 1));
    }
}

#[test]
fn large_n_profiles_are_feasible() {
    let query = LikelihoodQuery::new(800, 1e-4).unwrap();
    let best = maximize_profile(&query, DepthRange::default_for(800)).unwrap();
    assert_eq!(best.profile.total_n(), 800);
    assert!(best.profile.shells().iter().all(|&d| d >= 1));
    // no single-depth optimum in the range beats the reported one
    for depth in [2, best.depth(), 60, 120] {
        let other = optimize_depth(&query, depth).unwrap();
        assert!(other.log_prob <= best.log_prob + 1e-9);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn hill_climb_is_monotone(shells in prop::collection::vec(1u64..30, 1..15), p in 0.001f64..0.9) {
        let start = ShellProfile::new(shells.clone()).unwrap();
        let before = log_likelihood(&start, p).unwrap();
        let (after_shells, after) = hill_climb(&shells, p).unwrap();
        prop_assert!(after >= before);
        prop_assert_eq!(after_shells.iter().sum::<u64>(), shells.iter().sum::<u64>());
        prop_assert_eq!(after_shells.len(), shells.len());
    }

    #[test]
    fn rounding_keeps_total_and_floor(raw in prop::collection::vec(0.0f64..50.0, 1..20)) {
        let depth = raw.len();
        let shells: Vec<f64> = raw.iter().map(|x| 1.0 + x).collect();
        let total = shells.iter().sum::<f64>().round() as u64;
        prop_assume!(total >= depth as u64);
        let rounded = round_largest_remainder(&shells, total);
        prop_assert_eq!(rounded.iter().sum::<u64>(), total);
        prop_assert!(rounded.iter().all(|&d| d >= 1));
        for (r, s) in rounded.iter().zip(&shells) {
            prop_assert!((*r as f64 - s).abs() < 1.0 + 1e-9 * depth as f64);
        }
    }
}
