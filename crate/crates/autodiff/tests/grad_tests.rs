use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use tdlab_autodiff::{finite_difference_check, Graph, Tensor};

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn rand_tensor(rng: &mut ChaCha8Rng, shape: Vec<usize>) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape, (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect())
}

#[test]
fn tanh_derivative_at_zero_is_one() {
    let mut g = Graph::new();
    let x = g.input(Tensor::scalar(0.0));
    let y = g.tanh(x);
    let loss = g.sum_all(y);
    let grads = g.backward(loss);
    assert_eq!(grads.get(x).unwrap().item(), 1.0);
}

#[test]
fn constant_has_zero_gradient_wrt_unused_parameter() {
    let mut g = Graph::new();
    let x = g.input(Tensor::scalar(2.0));
    let unused = g.input(Tensor::vector(vec![1.0, 2.0]));
    let y = g.affine(x, 3.0, 1.0);
    let loss = g.sum_all(y);
    let grads = g.backward(loss);
    assert!(grads.get(unused).is_none());
    let zeros = grads.get_or_zeros(unused, &[2]);
    assert_eq!(zeros.data(), &[0.0, 0.0]);
}

#[test]
fn fanout_gradients_accumulate() {
    // loss = x*x + x -> d/dx = 2x + 1
    let mut g = Graph::new();
    let x = g.input(Tensor::scalar(3.0));
    let sq = g.mul(x, x);
    let s = g.add(sq, x);
    let loss = g.sum_all(s);
    let grads = g.backward(loss);
    assert_eq!(grads.get(x).unwrap().item(), 7.0);
}

#[test]
fn three_layer_network_matches_finite_differences_over_seeds() {
    // every parameter of a random 3-layer network, 10 seeds
    for seed in 0..10 {
        let mut r = rng(40 + seed);
        let (din, dh, dout, batch) = (3, 4, 2, 2);
        let params = vec![
            rand_tensor(&mut r, vec![din, dh]),
            rand_tensor(&mut r, vec![dh]),
            rand_tensor(&mut r, vec![dh, dh]),
            rand_tensor(&mut r, vec![dh]),
            rand_tensor(&mut r, vec![dh, dout]),
            rand_tensor(&mut r, vec![dout]),
        ];
        let x = rand_tensor(&mut r, vec![batch, din]);
        let target = rand_tensor(&mut r, vec![batch, dout]);
        let report = finite_difference_check(&params, 1e-5, |g, ids| {
            let xin = g.input(x.clone());
            let t = g.input(target.clone());
            let h1 = g.matmul(xin, ids[0]);
            let h1 = g.add(h1, ids[1]);
            let h1 = g.elu(h1);
            let h2 = g.matmul(h1, ids[2]);
            let h2 = g.add(h2, ids[3]);
            let h2 = g.tanh(h2);
            let out = g.matmul(h2, ids[4]);
            let out = g.add(out, ids[5]);
            let diff = g.sub(out, t);
            let sq = g.mul(diff, diff);
            g.mean_all(sq)
        });
        assert!(
            report.max_rel_error <= 1e-4,
            "seed {seed}: max rel error {}",
            report.max_rel_error
        );
    }
}

#[test]
fn every_op_passes_finite_differences() {
    let mut r = rng(50);
    let a = rand_tensor(&mut r, vec![2, 3]);
    let b = rand_tensor(&mut r, vec![2, 3]);
    let bias = rand_tensor(&mut r, vec![3]);
    let report = finite_difference_check(&[a, b, bias], 1e-5, |g, ids| {
        let (a, b, bias) = (ids[0], ids[1], ids[2]);
        let sum = g.add(a, bias);
        let prod = g.mul(sum, b);
        let diff = g.sub(prod, a);
        let act1 = g.tanh(diff);
        let act2 = g.sigmoid(act1);
        let act3 = g.elu(act2);
        let sp = g.softplus(act3);
        let sp = g.affine(sp, 1.0, 0.25);
        let ln = g.ln(sp);
        let cl = g.clamp_min(ln, -0.8);
        let cat = g.concat(&[cl, a]);
        let sl = g.slice_cols(cat, 1, 4);
        let lsm = g.log_softmax(sl);
        g.mean_all(lsm)
    });
    assert!(report.max_rel_error <= 1e-4, "max rel {}", report.max_rel_error);
    assert!(report.coords_checked > 0);
}

#[test]
fn matmul_chain_matches_finite_differences() {
    let mut r = rng(51);
    let w1 = rand_tensor(&mut r, vec![3, 5]);
    let w2 = rand_tensor(&mut r, vec![5, 2]);
    let x = rand_tensor(&mut r, vec![4, 3]);
    let report = finite_difference_check(&[w1, w2], 1e-5, |g, ids| {
        let xin = g.input(x.clone());
        let h = g.matmul(xin, ids[0]);
        let h = g.tanh(h);
        let y = g.matmul(h, ids[1]);
        let sq = g.mul(y, y);
        g.sum_all(sq)
    });
    assert!(report.max_rel_error <= 1e-4, "max rel {}", report.max_rel_error);
}

#[test]
fn gaussian_ops_match_finite_differences() {
    let mut r = rng(52);
    let mean = rand_tensor(&mut r, vec![3, 2]);
    let raw_std = rand_tensor(&mut r, vec![3, 2]);
    let mean2 = rand_tensor(&mut r, vec![3, 2]);
    let raw_std2 = rand_tensor(&mut r, vec![3, 2]);
    let x = rand_tensor(&mut r, vec![3, 2]);
    let noise = rand_tensor(&mut r, vec![3, 2]);
    let report = finite_difference_check(&[mean, raw_std, mean2, raw_std2], 1e-5, |g, ids| {
        let xin = g.input(x.clone());
        let eps = g.input(noise.clone());
        let sp1 = g.softplus(ids[1]);
        let std1 = g.affine(sp1, 1.0, 0.1);
        let sp2 = g.softplus(ids[3]);
        let std2 = g.affine(sp2, 1.0, 0.1);
        let lp = g.gaussian_log_prob(xin, ids[0], std1);
        let kl = g.diag_gaussian_kl(ids[0], std1, ids[2], std2);
        let sample = g.reparam_sample(ids[2], std2, eps);
        let smean = g.mean_all(sample);
        let lpm = g.mean_all(lp);
        let klm = g.mean_all(kl);
        let t1 = g.add(lpm, klm);
        g.add(t1, smean)
    });
    assert!(report.max_rel_error <= 1e-4, "max rel {}", report.max_rel_error);
}

#[test]
fn stop_grad_blocks_and_identity_passes() {
    let mut g = Graph::new();
    let x = g.input(Tensor::scalar(2.0));
    let blocked = g.stop_grad(x);
    let prod = g.mul(blocked, x); // d/dx = stop(x) = 2, not 2x=4... of x*sg(x): grad is sg(x)=2
    let loss = g.sum_all(prod);
    let grads = g.backward(loss);
    assert_eq!(grads.get(x).unwrap().item(), 2.0);
}

#[test]
fn backward_requires_scalar_loss() {
    let mut g = Graph::new();
    let x = g.input(Tensor::vector(vec![1.0, 2.0]));
    let y = g.tanh(x);
    let result = std::panic::catch_unwind(std::panic::AssertUnwindSafe(|| g.backward(y)));
    assert!(result.is_err());
}

#[test]
fn non_finite_forward_is_a_hard_error() {
    let mut g = Graph::new();
    let x = g.input(Tensor::scalar(-1.0));
    let result = std::panic::catch_unwind(std::panic::AssertUnwindSafe(|| g.ln(x)));
    assert!(result.is_err(), "ln of a negative number must be a hard error");
}

#[test]
fn determinism_bitwise_across_runs() {
    let run = || {
        let mut r = rng(99);
        let w = rand_tensor(&mut r, vec![4, 4]);
        let x = rand_tensor(&mut r, vec![2, 4]);
        let mut g = Graph::new();
        let wid = g.input(w);
        let xid = g.input(x);
        let h = g.matmul(xid, wid);
        let h = g.tanh(h);
        let loss = g.mean_all(h);
        let grads = g.backward(loss);
        (
            g.value(loss).item().to_bits(),
            grads.get(wid).unwrap().data().iter().map(|x| x.to_bits()).collect::<Vec<_>>(),
        )
    };
    assert_eq!(run(), run());
}
