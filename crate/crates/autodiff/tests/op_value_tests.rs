use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use tdlab_autodiff::{optimizer_step, AdamConfig, AdamState, Graph, Tensor};

#[test]
fn kl_of_identical_gaussians_is_zero() {
    let mut g = Graph::new();
    let m = g.input(Tensor::vector(vec![0.0, 0.0]));
    let s = g.input(Tensor::vector(vec![1.0, 1.0]));
    let kl = g.diag_gaussian_kl(m, s, m, s);
    assert_eq!(g.value(kl).data(), &[0.0]);
}

#[test]
fn kl_unit_shift_is_half() {
    // KL(N(1,1) || N(0,1)) = 0.5, and a 10^6-sample estimate agrees within 3 SE
    let mut g = Graph::new();
    let m1 = g.input(Tensor::vector(vec![1.0]));
    let s1 = g.input(Tensor::vector(vec![1.0]));
    let m2 = g.input(Tensor::vector(vec![0.0]));
    let s2 = g.input(Tensor::vector(vec![1.0]));
    let kl = g.diag_gaussian_kl(m1, s1, m2, s2);
    let exact = g.value(kl).item();
    assert!((exact - 0.5).abs() <= 1e-12);

    let mut r = ChaCha8Rng::seed_from_u64(7);
    let n = 1_000_000usize;
    let (mut sum, mut sum_sq) = (0.0f64, 0.0f64);
    for _ in 0..n {
        // z ~ N(1,1); log-density ratio log q(z)/log p(z) sampled under q
        let z: f64 = 1.0 + standard_normal(&mut r);
        let lq = -0.5 * (z - 1.0) * (z - 1.0);
        let lp = -0.5 * z * z;
        let w = lq - lp;
        sum += w;
        sum_sq += w * w;
    }
    let mean = sum / n as f64;
    let se = ((sum_sq / n as f64 - mean * mean).max(0.0) / n as f64).sqrt();
    assert!(
        (mean - exact).abs() <= 3.0 * se,
        "MC {mean} +- {se} vs exact {exact}"
    );
}

fn standard_normal(r: &mut ChaCha8Rng) -> f64 {
    // Box-Muller
    let u1: f64 = r.gen_range(f64::MIN_POSITIVE..1.0);
    let u2: f64 = r.gen();
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

#[test]
fn kl_nonnegative_for_random_valid_parameters() {
    let mut r = ChaCha8Rng::seed_from_u64(8);
    for _ in 0..200 {
        let mut g = Graph::new();
        let m1 = g.input(Tensor::vector(vec![r.gen_range(-3.0..3.0)]));
        let s1 = g.input(Tensor::vector(vec![r.gen_range(0.05..3.0)]));
        let m2 = g.input(Tensor::vector(vec![r.gen_range(-3.0..3.0)]));
        let s2 = g.input(Tensor::vector(vec![r.gen_range(0.05..3.0)]));
        let kl = g.diag_gaussian_kl(m1, s1, m2, s2);
        assert!(g.value(kl).item() >= -1e-12);
    }
}

#[test]
fn log_softmax_uniform_logits() {
    let mut g = Graph::new();
    let x = g.input(Tensor::matrix(1, 4, vec![0.7; 4]));
    let y = g.log_softmax(x);
    for &v in g.value(y).data() {
        assert!((v - 0.25f64.ln()).abs() <= 1e-12);
    }
}

#[test]
fn gaussian_log_prob_matches_closed_form() {
    let mut g = Graph::new();
    let x = g.input(Tensor::matrix(1, 1, vec![0.3]));
    let m = g.input(Tensor::matrix(1, 1, vec![0.1]));
    let s = g.input(Tensor::matrix(1, 1, vec![0.5]));
    let lp = g.gaussian_log_prob(x, m, s);
    let expected = -0.5 * (2.0 * std::f64::consts::PI).ln() - 0.5f64.ln()
        - 0.5 * ((0.3 - 0.1) / 0.5f64) * ((0.3 - 0.1) / 0.5);
    assert!((g.value(lp).item() - expected).abs() <= 1e-12);
}

#[test]
fn adam_zero_gradient_leaves_parameters_unchanged() {
    let mut params = vec![Tensor::vector(vec![1.0, -2.0, 3.0])];
    let grads = vec![Tensor::zeros(vec![3])];
    let mut state = AdamState::new(&params);
    optimizer_step(&mut params, &grads, &mut state, &AdamConfig::default());
    assert_eq!(params[0].data(), &[1.0, -2.0, 3.0]);
}

#[test]
fn adam_first_step_matches_hand_evaluated_update() {
    // from zero state with constant gradient: step = -lr * g / (|g| + eps)
    let cfg = AdamConfig {
        lr: 1e-3,
        ..AdamConfig::default()
    };
    let g0 = 0.37;
    let mut params = vec![Tensor::scalar(0.0)];
    let grads = vec![Tensor::scalar(g0)];
    let mut state = AdamState::new(&params);
    optimizer_step(&mut params, &grads, &mut state, &cfg);
    let m_hat = ((1.0 - cfg.beta1) * g0) / (1.0 - cfg.beta1);
    let v_hat = ((1.0 - cfg.beta2) * g0 * g0) / (1.0 - cfg.beta2);
    let expected = -cfg.lr * m_hat / (v_hat.sqrt() + cfg.eps);
    assert!((params[0].item() - expected).abs() <= 1e-15);
}

#[test]
fn adam_clips_global_norm_before_update() {
    // gradient with joint norm 200 against clip 100 is halved
    let cfg = AdamConfig {
        clip_norm: 100.0,
        ..AdamConfig::default()
    };
    let mut params = vec![Tensor::vector(vec![0.0, 0.0])];
    let grads = vec![Tensor::vector(vec![120.0, 160.0])]; // norm 200
    let mut state = AdamState::new(&params);
    let norm = optimizer_step(&mut params, &grads, &mut state, &cfg);
    assert!((norm - 200.0).abs() <= 1e-12);
    // effective first-step moments correspond to the clipped gradient
    let g_eff = [60.0, 80.0];
    for (i, &ge) in g_eff.iter().enumerate() {
        let m_hat = ge;
        let v_hat = ge * ge;
        let expected = -cfg.lr * m_hat / (v_hat.sqrt() + cfg.eps);
        assert!((params[0].data()[i] - expected).abs() <= 1e-12);
    }
}

#[test]
fn adam_descends_a_quadratic() {
    let mut params = vec![Tensor::scalar(2.0)];
    let mut state = AdamState::new(&params);
    let cfg = AdamConfig::with_lr(0.05);
    for _ in 0..500 {
        let x = params[0].item();
        let grads = vec![Tensor::scalar(2.0 * x)];
        optimizer_step(&mut params, &grads, &mut state, &cfg);
    }
    assert!(params[0].item().abs() < 0.05, "got {}", params[0].item());
}
