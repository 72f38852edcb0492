use gebit_core::{
    empirical_dimension, fit_dimension, fit_shells, FitOptions, Gebit, LinkGraph, Period, RootPolicy, ShellProfile,
    Weighting,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

/// `A sin^(d-1)(pi k / period)` for `k = 1..period-1`.
fn synthetic(amplitude: f64, d: f64, period: usize) -> Vec<f64> {
    (1..period)
        .map(|k| amplitude * (std::f64::consts::PI * k as f64 / period as f64).sin().powf(d - 1.0))
        .collect()
}

fn unfloored() -> FitOptions {
    FitOptions {
        floor: 0.0,
        ..FitOptions::default()
    }
}

fn torus(side: usize, dims: u32) -> LinkGraph {
    let n = side.pow(dims);
    let mut g = LinkGraph::new(n);
    for v in 0..n {
        let mut stride = 1;
        for _ in 0..dims {
            let coord = (v / stride) % side;
            let next = if coord + 1 == side { v + stride - side * stride } else { v + stride };
            g.add_edge(v, next).unwrap();
            stride *= side;
        }
    }
    g
}

#[test]
fn synthetic_profiles_are_recovered_exactly() {
    for d in [1.0, 2.0, 3.0, 4.0] {
        for amplitude in [1.0, 100.0] {
            for period in [10, 40] {
                let shells = synthetic(amplitude, d, period);
                for weighting in [Weighting::Counts, Weighting::Uniform] {
                    let options = FitOptions {
                        weighting,
                        ..unfloored()
                    };
                    let fit = fit_shells(&shells, &options).unwrap();
                    assert!((fit.d - d).abs() < 1e-9, "d={d} A={amplitude} L={period}: {fit:?}");
                    assert!((fit.log_amplitude - amplitude.ln()).abs() < 1e-9);
                }
            }
        }
    }
}

#[test]
fn explicit_period_matches_the_shell_count() {
    // with the open period the sine runs over L + 1, which is how `synthetic` builds it
    let shells = synthetic(50.0, 3.0, 30);
    let open = FitOptions {
        period: Period::Open,
        ..unfloored()
    };
    let fit = fit_shells(&shells, &open).unwrap();
    assert!((fit.d - 3.0).abs() < 1e-9);
    assert_eq!(fit.period, 30.0);
}

#[test]
fn constant_profiles_are_one_dimensional() {
    for value in [1, 2, 7] {
        for depth in [5, 50] {
            let profile = ShellProfile::new(vec![value; depth]).unwrap();
            let fit = fit_dimension(&profile, &FitOptions::default()).unwrap();
            assert!((fit.d - 1.0).abs() < 1e-12, "{fit:?}");
        }
    }
}

#[test]
fn dimension_is_scale_invariant() {
    let base = synthetic(3.0, 2.7, 33);
    let mut noisy = base.clone();
    // break exactness so invariance is tested on a real residual
    for (k, v) in noisy.iter_mut().enumerate() {
        *v *= 1.0 + 0.05 * ((k * 7 % 5) as f64 - 2.0);
    }
    for options in [unfloored(), FitOptions { weighting: Weighting::Uniform, ..unfloored() }] {
        let reference = fit_shells(&noisy, &options).unwrap();
        for scale in [1e-3, 0.5, 7.0, 1e6] {
            let scaled: Vec<f64> = noisy.iter().map(|v| v * scale).collect();
            let fit = fit_shells(&scaled, &options).unwrap();
            assert!((fit.d - reference.d).abs() < 1e-12, "scale {scale}: {} vs {}", fit.d, reference.d);
            assert!((fit.log_amplitude - reference.log_amplitude - scale.ln()).abs() < 1e-9);
        }
    }
}

#[test]
fn lognormal_noise_moves_d_only_slightly() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let noise = Normal::new(0.0f64, 0.05).unwrap();
    for d in [2.0, 3.0] {
        let clean = synthetic(100.0, d, 40);
        let mut within = 0;
        for _ in 0..1000 {
            let shells: Vec<f64> = clean.iter().map(|v| v * noise.sample(&mut rng).exp()).collect();
            let fit = fit_shells(&shells, &unfloored()).unwrap();
            if (fit.d - d).abs() < 0.1 {
                within += 1;
            }
        }
        assert!(within >= 950, "d={d}: {within}/1000 within 0.1");
    }
}

#[test]
fn lattice_dimensions() {
    let cases = [(torus(100, 1), 1.0, 0.1), (torus(30, 2), 2.0, 0.3), (torus(8, 3), 3.0, 0.3)];
    for (g, expected, tolerance) in cases {
        let gebit = Gebit::whole(&g).unwrap();
        let fit = empirical_dimension(&gebit, RootPolicy::default(), &FitOptions::default()).unwrap();
        assert!((fit.d - expected).abs() <= tolerance, "expected {expected}: {fit:?}");
    }
}

#[test]
fn every_root_of_a_torus_agrees() {
    for g in [torus(100, 1), torus(8, 3), torus(12, 2)] {
        let gebit = Gebit::whole(&g).unwrap();
        let options = FitOptions::default();
        let reference = empirical_dimension(&gebit, RootPolicy::Fixed(0), &options).unwrap();
        for root in 0..g.n() {
            let fit = empirical_dimension(&gebit, RootPolicy::Fixed(root), &options).unwrap();
            assert_eq!(fit.d.to_bits(), reference.d.to_bits());
        }
        for seed in 0..4 {
            let sampled = RootPolicy::Sampled { max_roots: 5, seed };
            assert_eq!(empirical_dimension(&gebit, sampled, &options).unwrap().d, reference.d);
        }
    }
}
