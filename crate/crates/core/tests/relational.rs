use gebit_core::relational::RecordPolicy;
use gebit_core::{
    draw_noise, init_matrix, iterate_step, run_iterator, safe_inverse, singular_values, IteratorConfig,
    NoiseMatrix, NoiseSpec, RelationalIterator, RelationalMatrix,
};
use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Singular values from the eigenvalues of `B^T B`, sorted descending.
fn eigen_singular_values(b: &RelationalMatrix) -> Vec<f64> {
    let m = b.as_dmatrix();
    let gram = m.transpose() * m;
    let mut sv: Vec<f64> = SymmetricEigen::new(gram)
        .eigenvalues
        .iter()
        .map(|e| e.max(0.0).sqrt())
        .collect();
    sv.sort_by(|a, b| b.total_cmp(a));
    sv
}

fn random_antisymmetric(n: usize, rng: &mut ChaCha8Rng) -> RelationalMatrix {
    RelationalMatrix::from_upper(n, |_, _| rng.random_range(-1.0..1.0)).unwrap()
}

/// `Q diag(l_i J) Q^T` with a random orthogonal `Q`, so the singular values
/// are exactly the given `l_i`, each twice.
fn with_spectrum(lambdas: &[f64], rng: &mut ChaCha8Rng) -> RelationalMatrix {
    let n = 2 * lambdas.len();
    let q = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0)).qr().q();
    let mut blocks = DMatrix::zeros(n, n);
    for (k, &l) in lambdas.iter().enumerate() {
        blocks[(2 * k, 2 * k + 1)] = l;
        blocks[(2 * k + 1, 2 * k)] = -l;
    }
    let full = &q * blocks * q.transpose();
    RelationalMatrix::from_upper(n, |i, j| full[(i, j)]).unwrap()
}

fn scalar_map(l: f64, alpha: f64) -> f64 {
    l - alpha * (l - 1.0 / l)
}

#[test]
fn init_singular_values_match_eigen_oracle() {
    let b = init_matrix(100, 1e-6, 42).unwrap();
    let sv = singular_values(&b).unwrap();
    let oracle = eigen_singular_values(&b);
    assert_eq!(sv.len(), 100);
    for (s, o) in sv.iter().zip(&oracle) {
        assert!(*s > 0.0 && *s <= 1e-4, "{s}");
        assert!((s - o).abs() <= 1e-9 * oracle[0], "{s} vs {o}");
    }
}

#[test]
fn singular_values_pair_up() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..20 {
        let b = random_antisymmetric(6, &mut rng);
        let sv = singular_values(&b).unwrap();
        let oracle = eigen_singular_values(&b);
        for k in 0..3 {
            assert!((sv[2 * k] - sv[2 * k + 1]).abs() < 1e-10);
            assert!((sv[2 * k] - oracle[2 * k]).abs() < 1e-7);
        }
    }
}

#[test]
fn rare_link_frequency_is_binomial() {
    let spec = NoiseSpec::default();
    let n = 1000;
    let draws = 10;
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut rare = 0u64;
    let mut total = 0u64;
    for _ in 0..draws {
        let w = draw_noise(n, &spec, &mut rng).unwrap();
        for (_, _, v) in w.upper_entries() {
            total += 1;
            if v.abs() >= spec.rare_lo {
                assert!(v.abs() <= spec.rare_hi);
                rare += 1;
            }
        }
    }
    let p = spec.rare_prob;
    let expected = p * total as f64;
    let se = (total as f64 * p * (1.0 - p)).sqrt();
    assert!((rare as f64 - expected).abs() < 3.0 * se, "{rare} rare links, expected {expected} +- {se}");
}

#[test]
fn well_conditioned_inverse_residual() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let b = with_spectrum(&[0.7, 1.3, 2.1, 3.4], &mut rng);
    let inv = safe_inverse(&b, 1e-8).unwrap();
    let residual = inv.as_dmatrix() * b.as_dmatrix() - DMatrix::identity(8, 8);
    assert!(residual.amax() < 1e-10, "{}", residual.amax());
    assert!(inv.antisymmetry_defect() < 1e-12);
}

#[test]
fn noise_off_follows_the_scalar_map() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    for alpha in [0.05, 0.1, 0.3, 0.5] {
        for _ in 0..3 {
            let lambdas: Vec<f64> = (0..5).map(|_| 10f64.powf(rng.random_range(-0.99..0.99))).collect();
            let mut b = with_spectrum(&lambdas, &mut rng);
            let w = NoiseMatrix::zeros(10);
            let mut prev = singular_values(&b).unwrap();
            for _ in 0..500 {
                b = iterate_step(&b, alpha, &w, 1e-8).unwrap();
                let mut predicted: Vec<f64> = prev.iter().map(|&l| scalar_map(l, alpha)).collect();
                predicted.sort_by(|a, b| b.total_cmp(a));
                let now = singular_values(&b).unwrap();
                for (a, e) in now.iter().zip(&predicted) {
                    assert!((a - e).abs() < 1e-9 * e.max(1.0), "alpha {alpha}: {a} vs {e}");
                }
                prev = now;
            }
            assert!(prev.iter().all(|l| (l - 1.0).abs() < 1e-6), "alpha {alpha}: {prev:?}");
        }
    }
}

#[test]
fn noise_off_distance_to_one_shrinks_monotonically() {
    // |f(l) - 1| < |l - 1| holds for l > a / (2 - a), which covers (0.1, 10)
    // once a <= 0.18
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    for alpha in [0.02, 0.1, 0.18] {
        let lambdas = [0.101, 0.5, 2.0, 9.9];
        let mut b = with_spectrum(&lambdas, &mut rng);
        let w = NoiseMatrix::zeros(8);
        let worst = |b: &RelationalMatrix| {
            singular_values(b).unwrap().iter().map(|l| (l - 1.0).abs()).fold(0.0, f64::max)
        };
        let mut gap = worst(&b);
        while gap >= 1e-6 {
            b = iterate_step(&b, alpha, &w, 1e-8).unwrap();
            let next = worst(&b);
            assert!(next < gap, "alpha {alpha}: {gap} -> {next}");
            gap = next;
        }
    }
}

#[test]
fn scalar_map_can_overshoot_for_large_alpha() {
    // outside l > a / (2 - a) the first step moves away from 1 before converging
    let l = 0.1;
    let alpha = 0.5;
    assert!((scalar_map(l, alpha) - 1.0).abs() > (l - 1.0f64).abs());
}

#[test]
fn fixed_points_stay_put() {
    let mut rng = ChaCha8Rng::seed_from_u64(29);
    let b = with_spectrum(&[1.0; 6], &mut rng);
    let w = NoiseMatrix::zeros(12);
    for alpha in [0.01, 0.1, 0.5, 1.0] {
        let next = iterate_step(&b, alpha, &w, 1e-8).unwrap();
        let diff = (next.as_dmatrix() - b.as_dmatrix()).amax();
        assert!(diff < 1e-10, "alpha {alpha}: {diff}");
    }
}

#[test]
fn antisymmetry_survives_long_noisy_runs() {
    let config = IteratorConfig {
        nodes: 50,
        seed: 99,
        ..IteratorConfig::default()
    };
    let mut driver = RelationalIterator::new(&config, &NoiseSpec::default()).unwrap();
    for _ in 0..1000 {
        let b = driver.advance().unwrap();
        assert!(b.antisymmetry_defect() < 1e-12);
    }
    assert_eq!(driver.step_index(), 1000);
}

#[test]
fn same_seed_same_history() {
    let config = IteratorConfig {
        nodes: 20,
        steps: 60,
        seed: 1234,
        record: RecordPolicy {
            every: 7,
            keep_matrices: true,
            link_threshold: 0.5,
        },
        ..IteratorConfig::default()
    };
    let noise = NoiseSpec {
        rare_prob: 0.01,
        ..NoiseSpec::default()
    };
    let a = run_iterator(&config, &noise).unwrap();
    let b = run_iterator(&config, &noise).unwrap();
    assert_eq!(a, b);
    for (x, y) in a.final_matrix.as_dmatrix().iter().zip(b.final_matrix.as_dmatrix().iter()) {
        assert_eq!(x.to_bits(), y.to_bits());
    }
    let other = run_iterator(&IteratorConfig { seed: 1235, ..config }, &noise).unwrap();
    assert_ne!(a.final_matrix, other.final_matrix);
}
