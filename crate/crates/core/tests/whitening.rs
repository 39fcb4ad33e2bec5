use hebbconv_core::linalg::EigenSolver;
use hebbconv_core::whitening::{fit_zca_with, ZcaOptions};
use hebbconv_core::{apply_zca, Dims4, Tensor4};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

/// Samples `z (I + 0.3 A)` plus a strong shared component, so every pair of
/// coordinates is correlated while the covariance stays well conditioned.
fn correlated(n: usize, d: usize, seed: u64) -> Tensor4 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mix: Vec<f64> = (0..d * d).map(|_| StandardNormal.sample(&mut rng)).collect();
    let mut data = Vec::with_capacity(n * d);
    for _ in 0..n {
        let z: Vec<f64> = (0..d).map(|_| StandardNormal.sample(&mut rng)).collect();
        let shared: f64 = StandardNormal.sample(&mut rng);
        for j in 0..d {
            let v: f64 = z[j] + 0.3 * (0..d).map(|i| z[i] * mix[i * d + j]).sum::<f64>() + 3.0 * shared + 0.5 * j as f64;
            data.push(v as f32);
        }
    }
    Tensor4::from_vec(Dims4::new(n, 1, 4, d / 4), data).unwrap()
}

fn covariance(t: &Tensor4) -> Vec<f64> {
    let d = t.dims().sample_len();
    let n = t.dims().batch;
    let mut mean = vec![0.0f64; d];
    for b in 0..n {
        mean.iter_mut().zip(t.sample(b)).for_each(|(m, &v)| *m += v as f64 / n as f64);
    }
    let mut cov = vec![0.0f64; d * d];
    for b in 0..n {
        let s = t.sample(b);
        for i in 0..d {
            for j in 0..d {
                cov[i * d + j] += (s[i] as f64 - mean[i]) * (s[j] as f64 - mean[j]) / n as f64;
            }
        }
    }
    cov
}

#[test]
fn whitened_covariance_is_identity() {
    let data = correlated(2000, 16, 31);
    let before = covariance(&data);
    assert!(before[1].abs() > 1.0);
    for solver in [EigenSolver::TridiagonalQl, EigenSolver::Jacobi] {
        let options = ZcaOptions {
            epsilon: 1e-6,
            standardize: false,
            solver,
        };
        let zca = fit_zca_with(&data, options).unwrap();
        assert!(zca.asymmetry() <= 1e-6, "asymmetry {}", zca.asymmetry());
        let cov = covariance(&apply_zca(&zca, &data).unwrap());
        for i in 0..16 {
            for j in 0..16 {
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((cov[i * 16 + j] - want).abs() <= 1e-2, "entry ({i},{j}) = {}", cov[i * 16 + j]);
            }
        }
    }
}

#[test]
fn whitening_is_symmetric_as_a_map() {
    // ZCA is the symmetric whitening map: W = Wᵀ
    let data = correlated(500, 8, 32);
    let options = ZcaOptions {
        epsilon: 1e-3,
        standardize: false,
        ..ZcaOptions::default()
    };
    let zca = fit_zca_with(&data, options).unwrap();
    let m = zca.matrix();
    for i in 0..8 {
        for j in 0..8 {
            assert_eq!(m[i * 8 + j], m[j * 8 + i]);
        }
    }
}

#[test]
fn dimension_mismatch_on_apply() {
    let data = correlated(100, 8, 33);
    let zca = fit_zca_with(&data, ZcaOptions::default()).unwrap();
    assert!(apply_zca(&zca, &Tensor4::zeros(Dims4::new(1, 1, 4, 4))).is_err());
}

