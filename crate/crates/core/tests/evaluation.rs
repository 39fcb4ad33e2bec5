use hebbconv_core::evaluation::{default_ridge, NUM_CLASSES};
use hebbconv_core::{evaluate_accuracy, fit_decoder, quadrants_features, Dims4, Features, Tensor4};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

fn random_features(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Features {
    Features::from_vec(rows, cols, (0..rows * cols).map(|_| StandardNormal.sample(rng)).collect()).unwrap()
}

fn random_labels(rng: &mut ChaCha8Rng, rows: usize) -> Vec<u8> {
    (0..rows).map(|_| rng.random_range(0..NUM_CLASSES as u8)).collect()
}

/// Gauss-Jordan with partial pivoting on the augmented normal equations.
fn normal_equations_oracle(f: &Features, labels: &[u8], k: usize, ridge: f64) -> Vec<f64> {
    let n = f.cols() + 1;
    let mut a = vec![0.0f64; n * (n + k)];
    let w = n + k;
    for r in 0..f.rows() {
        let mut x: Vec<f64> = f.row(r).iter().map(|&v| v as f64).collect();
        x.push(1.0);
        for i in 0..n {
            for j in 0..n {
                a[i * w + j] += x[i] * x[j];
            }
            a[i * w + n + labels[r] as usize] += x[i];
        }
    }
    for i in 0..n - 1 {
        a[i * w + i] += ridge;
    }
    for col in 0..n {
        let piv = (col..n).max_by(|&p, &q| a[p * w + col].abs().total_cmp(&a[q * w + col].abs())).unwrap();
        for j in 0..w {
            a.swap(col * w + j, piv * w + j);
        }
        let d = a[col * w + col];
        for j in 0..w {
            a[col * w + j] /= d;
        }
        for r in 0..n {
            if r != col {
                let m = a[r * w + col];
                for j in 0..w {
                    a[r * w + j] -= m * a[col * w + j];
                }
            }
        }
    }
    let mut out = vec![0.0; n * k];
    for i in 0..n {
        out[i * k..(i + 1) * k].copy_from_slice(&a[i * w + n..(i + 1) * w]);
    }
    out
}

#[test]
fn decoder_matches_dense_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for &(rows, cols, ridge) in &[(200, 8, 0.0), (150, 12, 0.5), (40, 5, 3.0)] {
        let f = random_features(&mut rng, rows, cols);
        let labels = random_labels(&mut rng, rows);
        let dec = fit_decoder(&f, &labels, NUM_CLASSES, ridge).unwrap();
        let oracle = normal_equations_oracle(&f, &labels, NUM_CLASSES, ridge);
        for (a, b) in dec.weights().iter().zip(&oracle) {
            assert!((a - b).abs() <= 1e-5 * (1.0 + b.abs()), "{a} vs {b}");
        }
    }
}

#[test]
fn random_labels_stay_at_chance() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let train = random_features(&mut rng, 5000, 20);
    let train_labels = random_labels(&mut rng, 5000);
    let test = random_features(&mut rng, 2000, 20);
    let test_labels = random_labels(&mut rng, 2000);
    let dec = fit_decoder(&train, &train_labels, NUM_CLASSES, default_ridge(&train)).unwrap();
    let acc = evaluate_accuracy(&dec, &test, &test_labels).unwrap();
    assert!((acc - 0.1).abs() <= 0.03, "accuracy {acc}");
}

#[test]
fn constant_plane_gives_constant_quadrants() {
    let t = Tensor4::filled(Dims4::new(2, 3, 6, 8), 0.75);
    let f = quadrants_features(&t).unwrap();
    assert!(f.data().iter().all(|&v| v == 0.75));
    let layer1 = Tensor4::zeros(Dims4::new(1, 100, 14, 14));
    assert_eq!(quadrants_features(&layer1).unwrap().cols(), 400);
}

fn separable(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> (Features, Vec<u8>) {
    let labels = random_labels(rng, rows);
    let mut data = Vec::with_capacity(rows * cols);
    for &l in &labels {
        for c in 0..cols {
            let signal = if c % NUM_CLASSES == l as usize { 1.0 } else { 0.0 };
            let noise: f32 = StandardNormal.sample(rng);
            data.push(signal + 0.8 * noise);
        }
    }
    (Features::from_vec(rows, cols, data).unwrap(), labels)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn channel_permutation_keeps_predictions(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (f, labels) = separable(&mut rng, 300, 20);
        let mut perm: Vec<usize> = (0..20).collect();
        for i in (1..20).rev() {
            perm.swap(i, rng.random_range(0..=i));
        }
        let fp = f.permute_columns(&perm).unwrap();
        let ridge = 1.0;
        let a = fit_decoder(&f, &labels, NUM_CLASSES, ridge).unwrap();
        let b = fit_decoder(&fp, &labels, NUM_CLASSES, ridge).unwrap();
        prop_assert_eq!(a.predict(&f).unwrap(), b.predict(&fp).unwrap());
    }

    #[test]
    fn rescaling_features_and_ridge_keeps_accuracy(seed in any::<u64>(), scale in 0.05f32..20.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (f, labels) = separable(&mut rng, 300, 15);
        let scaled = Features::from_vec(f.rows(), f.cols(), f.data().iter().map(|v| v * scale).collect()).unwrap();
        let ridge = 2.0;
        let a = fit_decoder(&f, &labels, NUM_CLASSES, ridge).unwrap();
        let b = fit_decoder(&scaled, &labels, NUM_CLASSES, ridge * (scale as f64).powi(2)).unwrap();
        let sa = a.scores(&f).unwrap();
        let sb = b.scores(&scaled).unwrap();
        for (p, q) in sa.iter().zip(&sb) {
            prop_assert!((p - q).abs() <= 1e-6 * (1.0 + p.abs()));
        }
        prop_assert_eq!(
            evaluate_accuracy(&a, &f, &labels).unwrap(),
            evaluate_accuracy(&b, &scaled, &labels).unwrap()
        );
    }

    #[test]
    fn accuracy_is_a_fraction(seed in any::<u64>(), rows in 1usize..60) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let f = random_features(&mut rng, rows, 4);
        let labels = random_labels(&mut rng, rows);
        let dec = fit_decoder(&f, &labels, NUM_CLASSES, 0.1).unwrap();
        let acc = evaluate_accuracy(&dec, &f, &labels).unwrap();
        prop_assert!((0.0..=1.0).contains(&acc));
    }
}
