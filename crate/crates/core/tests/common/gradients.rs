//! Finite-difference gradient checks of every layer and of the full
//! network, in f64.
//!
//! Each layer is wrapped in a scalar objective `L = Σ out ⊙ R` with a fixed
//! random projection `R`, so the analytical input/parameter gradients come
//! from the layer's backward pass with `dout = R`.

use meniscus::attunet::{AttentionUNet, NetConfig};
use meniscus::nnkit::gradcheck::{central_difference, relative_error};
use meniscus::nnkit::{
    activation, activation_backward, attention_gate, attention_gate_backward, conv2d, conv2d_backward, dice_loss,
    dice_loss_backward, max_pool2, max_pool2_backward, transposed_conv2, transposed_conv2_backward, Activation,
    AttentionParams, LayerKind, LayerParams, Padding, Tensor,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const H: f64 = 1e-5;
/// Gradients smaller than this are compared in absolute terms.
pub const FLOOR: f64 = 1e-6;

fn random(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor<f64> {
    let n = shape.iter().product();
    Tensor::from_vec(shape, (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
}

fn project(out: &Tensor<f64>, r: &Tensor<f64>) -> f64 {
    out.data().iter().zip(r.data()).map(|(a, b)| a * b).sum()
}

fn worst(analytic: &[f64], numeric: &[f64]) -> f64 {
    analytic
        .iter()
        .zip(numeric)
        .map(|(&a, &n)| relative_error(a, n, FLOOR))
        .fold(0.0, f64::max)
}

fn all(n: usize) -> Vec<usize> {
    (0..n).collect()
}

/// Checks input, weight and bias gradients of `conv2d` for a 3×3 "same"
/// convolution and a 1×1 pointwise convolution.
pub fn conv2d_error(seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut err = 0.0f64;
    for (k, padding) in [(3usize, Padding::Same), (3, Padding::Valid), (1, Padding::Valid)] {
        let x = random(&[2, 3, 6, 5], &mut rng);
        let w = random(&[4, 3, k, k], &mut rng);
        let b = random(&[4], &mut rng);
        let kind = if k == 1 { LayerKind::Conv1x1 } else { LayerKind::Conv2d };
        let mut p = LayerParams::new(w.clone(), b.clone(), kind).unwrap();
        let out = conv2d(&x, &p, padding).unwrap();
        let r = random(out.shape(), &mut rng);
        let dx = conv2d_backward(&x, &mut p, padding, &r).unwrap();

        let loss_x = |v: &[f64]| {
            let xi = Tensor::from_vec(x.shape(), v.to_vec()).unwrap();
            project(&conv2d(&xi, &p, padding).unwrap(), &r)
        };
        let nx = central_difference(loss_x, x.data(), &all(x.len()), H);
        err = err.max(worst(dx.data(), &nx));

        let loss_w = |v: &[f64]| {
            let q = LayerParams::new(Tensor::from_vec(w.shape(), v.to_vec()).unwrap(), b.clone(), kind).unwrap();
            project(&conv2d(&x, &q, padding).unwrap(), &r)
        };
        let nw = central_difference(loss_w, w.data(), &all(w.len()), H);
        err = err.max(worst(p.weights.grad().unwrap(), &nw));

        let loss_b = |v: &[f64]| {
            let q = LayerParams::new(w.clone(), Tensor::from_vec(b.shape(), v.to_vec()).unwrap(), kind).unwrap();
            project(&conv2d(&x, &q, padding).unwrap(), &r)
        };
        let nb = central_difference(loss_b, b.data(), &all(b.len()), H);
        err = err.max(worst(p.bias.grad().unwrap(), &nb));
    }
    err
}

/// Input gradient of 2×2 max pooling (random inputs have no ties).
pub fn max_pool2_error(seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = random(&[2, 3, 6, 6], &mut rng);
    let (out, idx) = max_pool2(&x).unwrap();
    let r = random(out.shape(), &mut rng);
    let dx = max_pool2_backward(&idx, &r).unwrap();
    let loss = |v: &[f64]| {
        let xi = Tensor::from_vec(x.shape(), v.to_vec()).unwrap();
        project(&max_pool2(&xi).unwrap().0, &r)
    };
    let n = central_difference(loss, x.data(), &all(x.len()), H);
    worst(dx.data(), &n)
}

pub fn transposed_conv2_error(seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = random(&[2, 3, 3, 4], &mut rng);
    let w = random(&[3, 2, 2, 2], &mut rng);
    let b = random(&[2], &mut rng);
    let kind = LayerKind::TransposedConv;
    let mut p = LayerParams::new(w.clone(), b.clone(), kind).unwrap();
    let out = transposed_conv2(&x, &p).unwrap();
    let r = random(out.shape(), &mut rng);
    let dx = transposed_conv2_backward(&x, &mut p, &r).unwrap();
    let mut err = 0.0f64;

    let loss_x = |v: &[f64]| {
        let xi = Tensor::from_vec(x.shape(), v.to_vec()).unwrap();
        project(&transposed_conv2(&xi, &p).unwrap(), &r)
    };
    err = err.max(worst(
        dx.data(),
        &central_difference(loss_x, x.data(), &all(x.len()), H),
    ));
    let loss_w = |v: &[f64]| {
        let q = LayerParams::new(Tensor::from_vec(w.shape(), v.to_vec()).unwrap(), b.clone(), kind).unwrap();
        project(&transposed_conv2(&x, &q).unwrap(), &r)
    };
    err = err.max(worst(
        p.weights.grad().unwrap(),
        &central_difference(loss_w, w.data(), &all(w.len()), H),
    ));
    let loss_b = |v: &[f64]| {
        let q = LayerParams::new(w.clone(), Tensor::from_vec(b.shape(), v.to_vec()).unwrap(), kind).unwrap();
        project(&transposed_conv2(&x, &q).unwrap(), &r)
    };
    err.max(worst(
        p.bias.grad().unwrap(),
        &central_difference(loss_b, b.data(), &all(b.len()), H),
    ))
}

/// ReLU and sigmoid. ReLU inputs are kept away from the kink at zero.
pub fn activation_error(seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut err = 0.0f64;
    for kind in [Activation::Relu, Activation::Sigmoid] {
        let mut x = random(&[2, 2, 4, 4], &mut rng);
        for v in x.data_mut() {
            if v.abs() < 1e-2 {
                *v += 0.05;
            }
            *v *= 4.0;
        }
        let out = activation(&x, kind);
        let r = random(out.shape(), &mut rng);
        let dx = activation_backward(&out, &r, kind).unwrap();
        let loss = |v: &[f64]| {
            let xi = Tensor::from_vec(x.shape(), v.to_vec()).unwrap();
            project(&activation(&xi, kind), &r)
        };
        err = err.max(worst(dx.data(), &central_difference(loss, x.data(), &all(x.len()), H)));
    }
    err
}

/// Skip, gate and all five parameter groups of the attention gate.
pub fn attention_gate_error(seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let skip = random(&[2, 3, 4, 4], &mut rng);
    let gate = random(&[2, 2, 4, 4], &mut rng);
    let mut p = AttentionParams::<f64>::init(3, 2, seed);
    for (_, t) in p.tensors_mut() {
        let shape = t.shape().to_vec();
        *t = random(&shape, &mut rng);
    }
    let fwd = attention_gate(&skip, &gate, &p).unwrap();
    let r = random(fwd.output.shape(), &mut rng);
    let (dskip, dgate) = attention_gate_backward(&skip, &gate, &fwd, &r, &mut p).unwrap();
    let mut err = 0.0f64;

    let loss_s = |v: &[f64]| {
        let s = Tensor::from_vec(skip.shape(), v.to_vec()).unwrap();
        project(&attention_gate(&s, &gate, &p).unwrap().output, &r)
    };
    err = err.max(worst(
        dskip.data(),
        &central_difference(loss_s, skip.data(), &all(skip.len()), H),
    ));
    let loss_g = |v: &[f64]| {
        let g = Tensor::from_vec(gate.shape(), v.to_vec()).unwrap();
        project(&attention_gate(&skip, &g, &p).unwrap().output, &r)
    };
    err = err.max(worst(
        dgate.data(),
        &central_difference(loss_g, gate.data(), &all(gate.len()), H),
    ));
    for k in 0..5 {
        let (values, analytic) = {
            let t = p.tensors()[k].1;
            (t.data().to_vec(), t.grad().unwrap().to_vec())
        };
        let shape = p.tensors()[k].1.shape().to_vec();
        let loss = |v: &[f64]| {
            let mut q = p.clone();
            *q.tensors_mut()[k].1 = Tensor::from_vec(&shape, v.to_vec()).unwrap();
            project(&attention_gate(&skip, &gate, &q).unwrap().output, &r)
        };
        err = err.max(worst(
            &analytic,
            &central_difference(loss, &values, &all(values.len()), H),
        ));
    }
    err
}

/// Gradient of the soft Dice loss with respect to the prediction.
pub fn dice_loss_error(seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pred = Tensor::from_vec(&[3, 1, 5, 5], (0..75).map(|_| rng.gen_range(0.01..0.99)).collect()).unwrap();
    let target = Tensor::from_vec(
        &[3, 1, 5, 5],
        (0..75).map(|_| f64::from(u8::from(rng.gen_bool(0.4)))).collect(),
    )
    .unwrap();
    let analytic = dice_loss_backward(&pred, &target, 1.0).unwrap();
    let loss = |v: &[f64]| {
        let p = Tensor::from_vec(pred.shape(), v.to_vec()).unwrap();
        dice_loss(&p, &target, 1.0).unwrap()
    };
    worst(
        analytic.data(),
        &central_difference(loss, pred.data(), &all(pred.len()), H),
    )
}

/// Whole-network spot check: Dice loss of a w = 1/8, 32×32 network in f64,
/// `n_params` randomly chosen parameters. Returns the worst relative error.
pub fn network_error(seed: u64, n_params: usize) -> f64 {
    let cfg = NetConfig {
        input_size: 32,
        width_mult: 0.125,
        seed,
        ..NetConfig::default()
    };
    let mut net: AttentionUNet<f64> = AttentionUNet::new(cfg).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let x = random(&[2, 1, 32, 32], &mut rng);
    let target = Tensor::from_vec(
        &[2, 1, 32, 32],
        (0..2 * 32 * 32)
            .map(|i| {
                let (y, xx) = ((i % 1024) / 32, i % 32);
                f64::from(u8::from((8..24).contains(&y) && (4..20).contains(&xx)))
            })
            .collect(),
    )
    .unwrap();
    let loss_of = |net: &AttentionUNet<f64>| {
        let prob = net.infer(&x).unwrap();
        dice_loss(&prob, &target, 1.0).unwrap()
    };
    net.zero_grad();
    let tape = net.forward(&x).unwrap();
    let dprob = dice_loss_backward(tape.probability(), &target, 1.0).unwrap();
    net.backward(&tape, &dprob).unwrap();

    // Choose parameters uniformly over all scalar coordinates.
    let sizes: Vec<usize> = net.params().iter().map(|(_, t)| t.len()).collect();
    let total: usize = sizes.iter().sum();
    let mut picks = Vec::with_capacity(n_params);
    while picks.len() < n_params {
        let mut flat = rng.gen_range(0..total);
        let mut tensor = 0;
        while flat >= sizes[tensor] {
            flat -= sizes[tensor];
            tensor += 1;
        }
        if !picks.contains(&(tensor, flat)) {
            picks.push((tensor, flat));
        }
    }
    let mut err = 0.0f64;
    for (tensor, i) in picks {
        let analytic = net.params()[tensor].1.grad().unwrap()[i];
        let orig = net.params()[tensor].1.data()[i];
        net.params_mut()[tensor].1.data_mut()[i] = orig + H;
        let up = loss_of(&net);
        net.params_mut()[tensor].1.data_mut()[i] = orig - H;
        let down = loss_of(&net);
        net.params_mut()[tensor].1.data_mut()[i] = orig;
        let numeric = (up - down) / (2.0 * H);
        err = err.max(relative_error(analytic, numeric, FLOOR));
    }
    err
}
