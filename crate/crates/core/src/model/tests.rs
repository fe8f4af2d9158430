use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::data::{ImageTensor, PairedSample};

fn tiny_config(loss: LossKind) -> ModelConfig {
    ModelConfig {
        num_layers: 2,
        hidden_channels: 4,
        kernel: 3,
        residual: true,
        loss,
    }
}

fn random_image(rng: &mut ChaCha8Rng, n: usize) -> ImageTensor {
    ImageTensor::from_fn(n, n, |_, _| rng.random_range(0.0..1.0))
}

fn random_batch(seed: u64, count: usize, n: usize) -> Vec<PairedSample> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let clean = random_image(&mut rng, n);
            let degraded = random_image(&mut rng, n);
            PairedSample::new(degraded, clean).unwrap()
        })
        .collect()
}

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-8)
}

#[test]
fn init_is_deterministic_with_zero_bias() {
    let model = Model::new(ModelConfig {
        hidden_channels: 8,
        ..ModelConfig::default()
    })
    .unwrap();
    let a = model.init_params(7);
    assert_eq!(a, model.init_params(7));
    assert_ne!(a, model.init_params(8));
    assert_eq!(a.get("conv0.weight").unwrap().shape, vec![8, 1, 3, 3]);
    assert_eq!(a.get("conv4.weight").unwrap().shape, vec![1, 8, 3, 3]);
    for p in a.iter().filter(|p| p.name.ends_with("bias")) {
        assert!(p.values.iter().all(|&v| v == 0.0));
    }
    model.check_params(&a).unwrap();
}

#[test]
fn zero_residual_branch_is_identity() {
    let model = Model::new(ModelConfig::default()).unwrap();
    let params = model.init_params(0).scale(0.0);
    let x = random_image(&mut ChaCha8Rng::seed_from_u64(1), 16);
    let out = model.forward(&params, std::slice::from_ref(&x)).unwrap();
    assert_eq!(out[0], x);
}

#[test]
fn forward_preserves_shape_and_is_finite() {
    let model = Model::new(ModelConfig {
        hidden_channels: 8,
        ..ModelConfig::default()
    })
    .unwrap();
    let params = model.init_params(3);
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let images: Vec<ImageTensor> = (0..5).map(|_| random_image(&mut rng, 128)).collect();
    let before = params.clone();
    let out = model.forward(&params, &images).unwrap();
    assert_eq!(params, before);
    assert_eq!(out.len(), 5);
    assert!(out.iter().all(|o| o.shape() == (128, 128)));
    assert_eq!(out, model.forward(&params, &images).unwrap());
}

#[test]
fn shape_errors() {
    let model = Model::new(tiny_config(LossKind::L1)).unwrap();
    let params = model.init_params(0);
    let images = vec![ImageTensor::zeros(8, 8), ImageTensor::zeros(8, 9)];
    assert!(model.forward(&params, &images).is_err());
    assert!(model.loss(&params, &[]).is_err());
    let other = Model::new(ModelConfig::default()).unwrap().init_params(0);
    assert!(model.forward(&other, &images[..1]).is_err());
    assert!(Model::new(ModelConfig {
        num_layers: 1,
        ..ModelConfig::default()
    })
    .is_err());
}

#[test]
fn loss_reference_values() {
    let model = Model::new(tiny_config(LossKind::L1)).unwrap();
    let zero = model.init_params(0).scale(0.0);
    let x = random_image(&mut ChaCha8Rng::seed_from_u64(4), 8);
    let exact = PairedSample::new(x.clone(), x.clone()).unwrap();
    assert_eq!(model.loss(&zero, &[exact]).unwrap(), 0.0);
    let shifted = PairedSample::new(x.map(|p| p + 0.1), x.clone()).unwrap();
    assert!((model.loss(&zero, std::slice::from_ref(&shifted)).unwrap() - 0.1).abs() < 1e-6);
    let l2 = Model::new(tiny_config(LossKind::SquaredL2)).unwrap();
    assert!((l2.loss(&zero, &[shifted]).unwrap() - 0.01).abs() < 1e-6);
}

fn check_gradient(loss: LossKind, seed: u64) -> usize {
    let model = Model::new(tiny_config(loss)).unwrap();
    let params = model.init_params(seed);
    let batch = random_batch(seed + 100, 3, 8);
    let (value, grad) = model.loss_and_grad(&params, &batch).unwrap();
    assert!((value - model.loss(&params, &batch).unwrap()).abs() < 1e-12);
    let h = 1e-4;
    for i in 0..params.num_elements() {
        let mut plus = params.clone();
        plus.set_flat(i, params.get_flat(i) + h);
        let mut minus = params.clone();
        minus.set_flat(i, params.get_flat(i) - h);
        let fd = (model.loss(&plus, &batch).unwrap() - model.loss(&minus, &batch).unwrap()) / (2.0 * h);
        let an = grad.get_flat(i);
        assert!(rel_err(an, fd) < 1e-4, "coord {i}: analytic {an} vs fd {fd}");
    }
    params.num_elements()
}

#[test]
fn loss_gradient_matches_central_differences() {
    let mut checked = 0;
    for seed in 0..2 {
        checked += check_gradient(LossKind::L1, seed);
        checked += check_gradient(LossKind::SquaredL2, seed);
    }
    assert!(checked >= 100);
}

#[test]
fn input_gradient_matches_central_differences() {
    let model = Model::new(tiny_config(LossKind::SquaredL2)).unwrap();
    let params = model.init_params(5);
    let batch = random_batch(9, 2, 8);
    let grads = model.loss_input_gradient(&params, &batch).unwrap();
    let h = 1e-4f32;
    for (s, pix) in [(0usize, 0usize), (0, 27), (1, 63), (1, 9)] {
        let bump = |delta: f32| {
            let mut b = batch.clone();
            let mut px = b[s].degraded.pixels().to_vec();
            px[pix] += delta;
            b[s].degraded = ImageTensor::new(8, 8, px).unwrap();
            model.loss(&params, &b).unwrap()
        };
        let fd = (bump(h) - bump(-h)) / (2.0 * h as f64);
        assert!(
            rel_err(grads[s][pix], fd) < 1e-3,
            "{s}/{pix}: {} vs {fd}",
            grads[s][pix]
        );
    }
}

#[test]
fn hessian_vector_product_matches_gradient_differences() {
    for loss in [LossKind::L1, LossKind::SquaredL2] {
        let model = Model::new(tiny_config(loss)).unwrap();
        let params = model.init_params(11);
        let batch = random_batch(12, 3, 8);
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let direction = params.map(|_| rng.random_range(-1.0..1.0));
        let (grad, hv) = model.grad_and_hvp(&params, &direction, &batch).unwrap();
        let (_, plain) = model.loss_and_grad(&params, &batch).unwrap();
        assert!(grad.max_abs_diff(&plain).unwrap() < 1e-14);
        let h = 1e-5;
        let (_, gp) = model
            .loss_and_grad(&params.axpy(h, &direction).unwrap(), &batch)
            .unwrap();
        let (_, gm) = model
            .loss_and_grad(&params.axpy(-h, &direction).unwrap(), &batch)
            .unwrap();
        let fd = gp.sub(&gm).unwrap().scale(1.0 / (2.0 * h));
        let scale = fd.l2_norm().max(1e-12);
        assert!(
            hv.sub(&fd).unwrap().l2_norm() / scale < 1e-5,
            "{loss:?}: hvp disagrees with finite differences"
        );
    }
}
