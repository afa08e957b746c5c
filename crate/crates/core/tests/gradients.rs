use msfusion::nn::{check_random_instance, grad_check, ops, CheckCase, Conv2d, GradientTape, Linear, ParamStore, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const INSTANCES: usize = 100;

fn worst(case: CheckCase, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for _ in 0..INSTANCES {
        let r = check_random_instance(case, &mut rng).unwrap();
        assert!(r.checked > 0);
        worst = worst.max(r.max_rel_error);
    }
    worst
}

#[test]
fn every_layer_kind_within_1e4() {
    for (i, case) in CheckCase::ALL.into_iter().enumerate() {
        let w = worst(case, 100 + i as u64);
        assert!(w < 1e-4, "{case:?}: max relative error {w:e}");
    }
}

fn random(shape: [usize; 4], rng: &mut ChaCha8Rng) -> Tensor<f64> {
    Tensor::from_fn(shape, |_, _, _, _| rng.random_range(-1.0..1.0))
}

#[test]
fn conv3x3_at_epsilon_1e4() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut store = ParamStore::new();
    let conv = Conv2d::register(&mut store, "c", 2, 3, 3, 1, 1, 0.3, &mut rng).unwrap();
    let x = random([1, 2, 5, 6], &mut rng);
    let probe = random([1, 3, 5, 6], &mut rng);
    let r = grad_check(&store, &x, 1e-4, |s, x| {
        let (y, cache) = conv.forward(s, x)?;
        let loss = y.data().iter().zip(probe.data()).map(|(a, b)| a * b).sum();
        let mut tape = GradientTape::for_store(s);
        let dx = conv.backward(s, &cache, &probe, &mut tape)?;
        Ok((loss, tape, dx))
    })
    .unwrap();
    assert!(r.max_rel_error < 1e-6, "{r:?}");
}

#[test]
fn fully_connected_at_epsilon_1e4() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut store = ParamStore::new();
    let fc = Linear::register(&mut store, "fc", 12, 5, 0.3, &mut rng).unwrap();
    let x = random([2, 3, 2, 2], &mut rng);
    let probe = random([2, 5, 1, 1], &mut rng);
    let r = grad_check(&store, &x, 1e-4, |s, x| {
        let y = fc.forward(s, x)?;
        let loss = y.data().iter().zip(probe.data()).map(|(a, b)| a * b).sum();
        let mut tape = GradientTape::for_store(s);
        let dx = fc.backward(s, x, &probe, &mut tape)?;
        Ok((loss, tape, dx))
    })
    .unwrap();
    assert!(r.max_rel_error < 1e-6, "{r:?}");
}

#[test]
fn concat_backward_of_sum_is_all_ones() {
    let a = Tensor::<f64>::filled([1, 2, 3, 3], 0.5);
    let b = Tensor::<f64>::filled([1, 1, 3, 3], -0.5);
    let y = ops::concat_channels(&a, &b).unwrap();
    let (da, db) = ops::concat_channels_backward(&Tensor::filled(y.shape(), 1.0), 2);
    assert_eq!(da, Tensor::filled(a.shape(), 1.0));
    assert_eq!(db, Tensor::filled(b.shape(), 1.0));
}

#[test]
fn concat_then_nin_at_epsilon_1e4() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut store = ParamStore::new();
    let nin = Conv2d::register_nin(&mut store, "nin", 5, 3, 0.3, &mut rng).unwrap();
    let x = random([1, 5, 4, 3], &mut rng);
    let probe = random([1, 3, 4, 3], &mut rng);
    let r = grad_check(&store, &x, 1e-4, |s, x| {
        let joined = ops::concat_channels(&x.channel_slice(0, 2), &x.channel_slice(2, 3))?;
        let (y, cache) = nin.forward(s, &joined)?;
        let loss = y.data().iter().zip(probe.data()).map(|(a, b)| a * b).sum();
        let mut tape = GradientTape::for_store(s);
        let dj = nin.backward(s, &cache, &probe, &mut tape)?;
        let (da, db) = ops::concat_channels_backward(&dj, 2);
        Ok((loss, tape, ops::concat_channels(&da, &db)?))
    })
    .unwrap();
    assert!(r.max_rel_error < 1e-6, "{r:?}");
}
