use hebbconv_core::layers::StepParams;
use hebbconv_core::{ActivationMode, ConvLayer, Dims4, HebbRule, LayerSpec, Network, NetworkConfig, Schedule, Tensor4};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn images(n: usize, side: usize, seed: u64) -> Tensor4 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = Dims4::new(n, 3, side, side);
    // smooth random fields: a few random sinusoids per image
    let mut data = Vec::with_capacity(d.len());
    for _ in 0..n {
        let waves: Vec<(f32, f32, f32)> = (0..3)
            .map(|_| (rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(0.0..6.3)))
            .collect();
        for &(a, b, p) in &waves {
            for i in 0..side {
                for j in 0..side {
                    let v = (a * i as f32 + b * j as f32 + p).sin() + 0.1 * rng.random_range(-1.0f32..1.0);
                    data.push(v);
                }
            }
        }
    }
    Tensor4::from_vec(d, data).unwrap()
}

fn small_config(schedule: Schedule) -> NetworkConfig {
    let mut cfg = NetworkConfig::triangle_pruned_preset();
    cfg.input = (3, 24, 24);
    for (layer, filters) in cfg.layers.iter_mut().zip([12, 16, 20]) {
        layer.filters = filters;
    }
    cfg.layers[1].prune_density = 0.1;
    cfg.layers[2].prune_density = 0.05;
    cfg.batch_size = 8;
    cfg.epochs = 2;
    cfg.seed = 77;
    cfg.schedule = schedule;
    cfg
}

#[test]
fn norms_and_masks_hold_at_every_step() {
    for schedule in [Schedule::Concurrent, Schedule::Greedy] {
        let cfg = small_config(schedule);
        let data = images(40, 24, 1);
        let mut net = Network::new(&cfg).unwrap();
        let mut steps = 0;
        net.train(&cfg, &data, |_, net| {
            steps += 1;
            for layer in net.layers() {
                for n in layer.weights().filter_norms() {
                    assert!((n - 1.0).abs() <= 1e-6, "norm {n}");
                }
                for (w, m) in layer.weights().data().iter().zip(layer.mask().data()) {
                    if *m == 0.0 {
                        assert_eq!(w.to_bits(), 0);
                    }
                }
            }
        })
        .unwrap();
        assert!(steps > 0);
    }
}

#[test]
fn firing_rates_stay_near_target() {
    let mut cfg = small_config(Schedule::Concurrent);
    cfg.epochs = 6;
    cfg.ema_horizon_epochs = 1.0;
    let data = images(64, 24, 2);
    let mut net = Network::new(&cfg).unwrap();
    net.train(&cfg, &data, |_, _| {}).unwrap();
    for layer in net.layers() {
        let n = layer.filters() as f32;
        for &r in layer.rate_ema() {
            assert!(r >= 0.1 / n && r <= 10.0 / n, "rate {r} outside bounds for {n} filters");
        }
    }
}

#[test]
fn triangle_activation_is_decoupled_from_plasticity() {
    let spec = LayerSpec {
        filters: 6,
        kernel: 3,
        activation: ActivationMode::Triangle,
        plasticity_k: 1,
        prune_density: 1.0,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut layer = ConvLayer::new(3, &spec, &mut rng).unwrap();
    let x = images(4, 10, 3);
    let params = StepParams {
        rule: HebbRule::Instar,
        learning_rate: 0.0,
        threshold_rate: 0.02,
        ema_alpha: 0.1,
    };
    let step = layer.forward_train_unpooled(&x, &params).unwrap();
    // activation is graded, plasticity picks one winner per position
    assert!(step.output.data().iter().any(|&v| v > 0.0 && v != 1.0));
    assert!(step.output.data().iter().all(|&v| v >= 0.0));
    let d = step.output.dims();
    assert_eq!(step.wins.iter().sum::<usize>(), d.batch * d.plane_len());
}

#[test]
fn identical_seeds_reproduce_both_schedules() {
    let data = images(24, 24, 4);
    for schedule in [Schedule::Concurrent, Schedule::Greedy] {
        let cfg = small_config(schedule);
        let a = hebbconv_core::network_train(&cfg, &data).unwrap();
        let b = hebbconv_core::network_train(&cfg, &data).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.epochs_done(), 2);
    }
}
