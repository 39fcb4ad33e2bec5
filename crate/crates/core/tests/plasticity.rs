use hebbconv_core::hebbian::{oja_fixed_point_demo, surrogate_value};
use hebbconv_core::tensor::{conv2d_valid, unfold};
use hebbconv_core::{
    hebbian_update_direct, hebbian_update_via_gradient, Dims4, HebbRule, KernelDims, PlasticityBatch, Tensor4,
    WeightTensor,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

struct Case {
    x: Tensor4,
    w: WeightTensor,
    y: Tensor4,
    preact: Tensor4,
}

fn normal(rng: &mut ChaCha8Rng, n: usize) -> Vec<f32> {
    (0..n).map(|_| StandardNormal.sample(rng)).collect()
}

fn random_case(rng: &mut ChaCha8Rng) -> Case {
    let kh = rng.random_range(1..=4);
    let kw = rng.random_range(1..=4);
    let xd = Dims4::new(
        rng.random_range(1..=3),
        rng.random_range(1..=3),
        kh + rng.random_range(0..5),
        kw + rng.random_range(0..5),
    );
    let kd = KernelDims::new(rng.random_range(1..=4), xd.channels, kh, kw);
    let x = Tensor4::from_vec(xd, normal(rng, xd.len())).unwrap();
    let w = WeightTensor::from_vec(kd, normal(rng, kd.len())).unwrap();
    let preact = conv2d_valid(&x, &w).unwrap();
    let density: f64 = rng.random_range(0.1..0.9);
    let y = Tensor4::from_vec(
        preact.dims(),
        (0..preact.dims().len()).map(|_| rng.random_bool(density) as u8 as f32).collect(),
    )
    .unwrap();
    Case { x, w, y, preact }
}

fn rel_frobenius(a: &[f32], b: &[f32]) -> f64 {
    let num: f64 = a.iter().zip(b).map(|(p, q)| (*p as f64 - *q as f64).powi(2)).sum();
    let den: f64 = b.iter().map(|q| (*q as f64).powi(2)).sum();
    (num / den.max(1e-300)).sqrt()
}

#[test]
fn gradient_route_matches_unfolded_patches() {
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    for _ in 0..100 {
        let c = random_case(&mut rng);
        let batch = PlasticityBatch::new(&c.x, &c.y, &c.preact).unwrap();
        for rule in HebbRule::ALL {
            let g = hebbian_update_via_gradient(rule, &batch, &c.w).unwrap();
            let d = hebbian_update_direct(rule, &batch, &c.w).unwrap();
            if d.norm_sq() == 0.0 {
                assert_eq!(g.norm_sq(), 0.0);
                continue;
            }
            let err = rel_frobenius(g.data(), d.data());
            assert!(err < 1e-5, "{} relative error {err}", rule.name());
        }
    }
}

/// Linearized surrogate loss `sum y_real * surrogate(w)` evaluated in f64
/// with plain loops; its gradient is the update.
fn linearized_objective(rule: HebbRule, x: &Tensor4, w: &[f64], kd: KernelDims, y: &Tensor4) -> f64 {
    let xd = x.dims();
    let (oh, ow) = (xd.height - kd.height + 1, xd.width - kd.width + 1);
    let fan = kd.fan_in();
    let mut total = 0.0;
    for b in 0..xd.batch {
        for o in 0..kd.out_channels {
            let wo = &w[o * fan..(o + 1) * fan];
            let half_sq = 0.5 * wo.iter().map(|v| v * v).sum::<f64>();
            for i in 0..oh {
                for j in 0..ow {
                    let yr = y.get(b, o, i, j) as f64;
                    if yr == 0.0 {
                        continue;
                    }
                    let mut pre = 0.0;
                    for c in 0..kd.in_channels {
                        for u in 0..kd.height {
                            for v in 0..kd.width {
                                pre += wo[(c * kd.height + u) * kd.width + v] * x.get(b, c, i + u, j + v) as f64;
                            }
                        }
                    }
                    let decay = match rule {
                        HebbRule::PlainHebb => 0.0,
                        HebbRule::Instar => 1.0,
                        HebbRule::Oja => yr,
                    };
                    total += yr * (pre - decay * half_sq);
                }
            }
        }
    }
    total
}

#[test]
fn finite_differences_agree_with_update() {
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let h = 1e-4;
    for _ in 0..20 {
        let c = random_case(&mut rng);
        let batch = PlasticityBatch::new(&c.x, &c.y, &c.preact).unwrap();
        let kd = c.w.dims();
        let w64: Vec<f64> = c.w.data().iter().map(|&v| v as f64).collect();
        for rule in [HebbRule::PlainHebb, HebbRule::Instar] {
            let update = hebbian_update_via_gradient(rule, &batch, &c.w).unwrap();
            let mut fd = vec![0.0f64; w64.len()];
            for k in 0..w64.len() {
                let mut wp = w64.clone();
                let mut wm = w64.clone();
                wp[k] += h;
                wm[k] -= h;
                fd[k] = (linearized_objective(rule, &c.x, &wp, kd, &c.y)
                    - linearized_objective(rule, &c.x, &wm, kd, &c.y))
                    / (2.0 * h);
            }
            let fd32: Vec<f32> = fd.iter().map(|&v| v as f32).collect();
            if fd.iter().all(|&v| v == 0.0) {
                continue;
            }
            let err = rel_frobenius(update.data(), &fd32);
            assert!(err <= 1e-3, "{} finite-difference error {err}", rule.name());
        }
    }
}

#[test]
fn surrogate_matches_loop_objective() {
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    for _ in 0..20 {
        let c = random_case(&mut rng);
        let w64: Vec<f64> = c.w.data().iter().map(|&v| v as f64).collect();
        for rule in HebbRule::ALL {
            let s = surrogate_value(rule, &c.preact, &c.w, &c.y).unwrap();
            let got: f64 = s.data().iter().zip(c.y.data()).map(|(a, b)| *a as f64 * *b as f64).sum();
            let want = linearized_objective(rule, &c.x, &w64, c.w.dims(), &c.y);
            assert!((got - want).abs() <= 1e-4 * (1.0 + want.abs()), "{got} vs {want}");
        }
    }
}

#[test]
fn convolution_equals_unfold_contraction() {
    let mut rng = ChaCha8Rng::seed_from_u64(404);
    for _ in 0..50 {
        let c = random_case(&mut rng);
        let kd = c.w.dims();
        let cols = unfold(&c.x, kd.height, kd.width).unwrap();
        let yd = c.preact.dims();
        let positions = yd.plane_len();
        let mut oracle = vec![0.0f32; yd.len()];
        for b in 0..yd.batch {
            let s = cols.sample(b);
            for o in 0..kd.out_channels {
                for p in 0..positions {
                    let acc: f64 = (0..kd.fan_in())
                        .map(|r| c.w.filter(o)[r] as f64 * s[r * positions + p] as f64)
                        .sum();
                    oracle[(b * kd.out_channels + o) * positions + p] = acc as f32;
                }
            }
        }
        let err = rel_frobenius(c.preact.data(), &oracle);
        assert!(err <= 1e-6, "relative error {err}");
    }
}

#[test]
fn permuting_filters_permutes_update() {
    let mut rng = ChaCha8Rng::seed_from_u64(505);
    for _ in 0..20 {
        let c = random_case(&mut rng);
        let kd = c.w.dims();
        let n = kd.out_channels;
        let perm: Vec<usize> = (0..n).rev().collect();
        let mut wp = Vec::with_capacity(kd.len());
        for &p in &perm {
            wp.extend_from_slice(c.w.filter(p));
        }
        let wp = WeightTensor::from_vec(kd, wp).unwrap();
        let permute_channels = |t: &Tensor4| {
            let d = t.dims();
            let mut out = Tensor4::zeros(d);
            for b in 0..d.batch {
                for (o, &p) in perm.iter().enumerate() {
                    for i in 0..d.height {
                        for j in 0..d.width {
                            out.set(b, o, i, j, t.get(b, p, i, j));
                        }
                    }
                }
            }
            out
        };
        let yp = permute_channels(&c.y);
        let pp = permute_channels(&c.preact);
        let base = PlasticityBatch::new(&c.x, &c.y, &c.preact).unwrap();
        let permuted = PlasticityBatch::new(&c.x, &yp, &pp).unwrap();
        for rule in HebbRule::ALL {
            let a = hebbian_update_via_gradient(rule, &base, &c.w).unwrap();
            let b = hebbian_update_via_gradient(rule, &permuted, &wp).unwrap();
            for (o, &p) in perm.iter().enumerate() {
                assert_eq!(b.filter(o), a.filter(p));
            }
        }
    }
}

fn power_iteration(cov: &[f64; 4]) -> [f64; 2] {
    let mut v = [1.0, 0.3];
    for _ in 0..1000 {
        let n = [cov[0] * v[0] + cov[1] * v[1], cov[2] * v[0] + cov[3] * v[1]];
        let norm = (n[0] * n[0] + n[1] * n[1]).sqrt();
        v = [n[0] / norm, n[1] / norm];
    }
    v
}

#[test]
fn oja_unit_finds_leading_component() {
    let mut rng = ChaCha8Rng::seed_from_u64(606);
    // rotate an axis-aligned anisotropic Gaussian by 30 degrees
    let (s, c) = (30f64.to_radians().sin(), 30f64.to_radians().cos());
    let rows = 5000;
    let mut data = Vec::with_capacity(2 * rows);
    for _ in 0..rows {
        let a: f64 = StandardNormal.sample(&mut rng);
        let b: f64 = StandardNormal.sample(&mut rng);
        let (a, b) = (a * 3f64.sqrt(), b);
        data.push(c * a - s * b);
        data.push(s * a + c * b);
    }
    let mut cov = [0.0; 4];
    for r in data.chunks(2) {
        cov[0] += r[0] * r[0];
        cov[1] += r[0] * r[1];
        cov[3] += r[1] * r[1];
    }
    cov[2] = cov[1];
    cov.iter_mut().for_each(|v| *v /= rows as f64);
    let lead = power_iteration(&cov);
    let w = oja_fixed_point_demo(&data, 2, 20_000, 2e-3).unwrap();
    let norm = (w[0] * w[0] + w[1] * w[1]).sqrt();
    let cos = (w[0] * lead[0] + w[1] * lead[1]).abs() / norm;
    assert!(cos > 0.998, "|cos| = {cos}");
    assert!((norm - 1.0).abs() < 0.05, "norm = {norm}");
}

fn small_case() -> impl Strategy<Value = (u64, usize)> {
    (any::<u64>(), 0usize..3)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn update_is_additive_over_batches((seed, rule) in small_case()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let c = random_case(&mut rng);
        let rule = HebbRule::ALL[rule];
        let full = PlasticityBatch::new(&c.x, &c.y, &c.preact).unwrap();
        let total = hebbian_update_direct(rule, &full, &c.w).unwrap();
        let mut sum = vec![0.0f64; total.data().len()];
        for b in 0..c.x.dims().batch {
            let (x, y, p) = (c.x.select(&[b]).unwrap(), c.y.select(&[b]).unwrap(), c.preact.select(&[b]).unwrap());
            let part = hebbian_update_direct(rule, &PlasticityBatch::new(&x, &y, &p).unwrap(), &c.w).unwrap();
            sum.iter_mut().zip(part.data()).for_each(|(s, v)| *s += *v as f64);
        }
        for (a, b) in total.data().iter().zip(&sum) {
            prop_assert!((*a as f64 - b).abs() <= 1e-4 * (1.0 + b.abs()));
        }
    }

    #[test]
    fn silent_output_gives_zero_update((seed, rule) in small_case()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let c = random_case(&mut rng);
        let zero = Tensor4::zeros(c.y.dims());
        let batch = PlasticityBatch::new(&c.x, &zero, &c.preact).unwrap();
        let g = hebbian_update_via_gradient(HebbRule::ALL[rule], &batch, &c.w).unwrap();
        prop_assert_eq!(g.norm_sq(), 0.0);
    }

    #[test]
    fn instar_update_vanishes_at_patch((seed, _r) in small_case()) {
        // a single active position whose filter equals its patch gives no update
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let c = random_case(&mut rng);
        let kd = c.w.dims();
        let cols = unfold(&c.x, kd.height, kd.width).unwrap();
        let positions = c.y.dims().plane_len();
        let patch: Vec<f32> = (0..kd.fan_in()).map(|r| cols.sample(0)[r * positions]).collect();
        let mut w = c.w.clone();
        w.filter_mut(0).copy_from_slice(&patch);
        let mut y = Tensor4::zeros(c.y.dims());
        y.set(0, 0, 0, 0, 1.0);
        let preact = conv2d_valid(&c.x, &w).unwrap();
        let batch = PlasticityBatch::new(&c.x, &y, &preact).unwrap();
        let g = hebbian_update_via_gradient(HebbRule::Instar, &batch, &w).unwrap();
        prop_assert!(g.filter(0).iter().all(|v| v.abs() < 1e-5));
    }
}
