//! Central finite differences against every backward pass, in f64.
//!
//! Each check projects the layer output onto a random direction `r`, so the
//! scalar objective is `sum(r * y)` and its input gradient is the backward
//! pass applied to `r`. Agreement is measured as
//! `|analytic - numeric| / max(|analytic|, |numeric|, 1e-3)`.

use lgcnn_core::layers::*;
use lgcnn_core::model::{preset_with, GradTape, Network, PresetOptions};
use lgcnn_core::train::softmax_cross_entropy;
use lgcnn_core::Tensor;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const H: f64 = 1e-5;
const TOL: f64 = 1e-4;
const CASES: u32 = 24;

fn random(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor<f64> {
    let n = shape.iter().product();
    Tensor::from_vec(shape, (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
}

/// Values kept at least `gap` away from zero, so ReLU kinks are never crossed.
fn away_from_zero(rng: &mut ChaCha8Rng, shape: &[usize], gap: f64) -> Tensor<f64> {
    random(rng, shape).map(|v| if v >= 0.0 { v + gap } else { v - gap })
}

/// Distinct values spaced well apart, so pooling never changes its argmax.
fn spaced(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor<f64> {
    let n: usize = shape.iter().product();
    let mut vals: Vec<f64> = (0..n).map(|i| i as f64 * 0.01).collect();
    for i in (1..n).rev() {
        vals.swap(i, rng.random_range(0..=i));
    }
    Tensor::from_vec(shape, vals).unwrap()
}

fn dot(a: &Tensor<f64>, b: &Tensor<f64>) -> f64 {
    a.data().iter().zip(b.data()).map(|(x, y)| x * y).sum()
}

fn rel_err(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(1e-3)
}

fn numeric(x: &Tensor<f64>, f: &dyn Fn(&Tensor<f64>) -> f64) -> Tensor<f64> {
    let mut g = Tensor::zeros_like(x);
    let mut xp = x.clone();
    for i in 0..x.len() {
        let orig = xp[i];
        xp[i] = orig + H;
        let up = f(&xp);
        xp[i] = orig - H;
        let down = f(&xp);
        xp[i] = orig;
        g[i] = (up - down) / (2.0 * H);
    }
    g
}

fn assert_close(what: &str, analytic: &Tensor<f64>, numeric: &Tensor<f64>) -> Result<(), TestCaseError> {
    prop_assert_eq!(analytic.shape(), numeric.shape());
    for (i, (&a, &n)) in analytic.data().iter().zip(numeric.data()).enumerate() {
        prop_assert!(rel_err(a, n) < TOL, "{}[{}]: analytic {} numeric {}", what, i, a, n);
    }
    Ok(())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(CASES))]

    #[test]
    fn conv2d_gradients(seed: u64, b in 1..3usize, ci in 1..3usize, co in 1..4usize,
              kh in 1..4usize, kw in 1..4usize, stride in 1..4usize, same: bool,
              h in 3..8usize, w in 3..8usize) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let padding = if same { Padding::Same } else { Padding::Valid };
        let mut p = ConvParams::<f64>::init(&mut rng, (kh, kw), ci, co, stride, padding).unwrap();
        let x = random(&mut rng, &[b, ci, h, w]);
        let y = conv2d(&x, &p).unwrap();
        let r = random(&mut rng, y.shape());
        let g = conv2d_backward(&x, &p, &r).unwrap();
        assert_close("dx", &g.input, &numeric(&x, &|x| dot(&conv2d(x, &p).unwrap(), &r)))?;
        let w0 = p.weights.clone();
        let dw = numeric(&w0, &|wt| {
            let mut q = p.clone();
            q.weights = wt.clone();
            dot(&conv2d(&x, &q).unwrap(), &r)
        });
        assert_close("dw", &g.weights, &dw)?;
        let b0 = p.bias.clone();
        p.bias = b0.clone();
        let db = numeric(&b0, &|bt| {
            let mut q = p.clone();
            q.bias = bt.clone();
            dot(&conv2d(&x, &q).unwrap(), &r)
        });
        assert_close("db", &g.bias, &db)?;
    }

    #[test]
    fn conv_fat_and_tall(seed: u64, b in 1..3usize, ci in 1..3usize, co in 1..4usize,
                         h in 2..7usize, w in 2..9usize) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = random(&mut rng, &[b, ci, h, w]);
        let fat = ConvParams::<f64>::init(&mut rng, (1, w), ci, co, 1, Padding::Valid).unwrap();
        let tall = ConvParams::<f64>::init(&mut rng, (h, 1), ci, co, 1, Padding::Valid).unwrap();
        for (p, f) in [(&fat, conv_fat_1d::<f64> as fn(&_, &_) -> _), (&tall, conv_tall_1d::<f64>)] {
            let y = f(&x, p).unwrap();
            let r = random(&mut rng, y.shape());
            let g = conv2d_backward(&x, p, &r).unwrap();
            assert_close("dx", &g.input, &numeric(&x, &|x| dot(&f(x, p).unwrap(), &r)))?;
            let dw = numeric(&p.weights, &|wt| {
                let mut q = p.clone();
                q.weights = wt.clone();
                dot(&f(&x, &q).unwrap(), &r)
            });
            assert_close("dw", &g.weights, &dw)?;
        }
    }

    #[test]
    fn outer_product(seed: u64, b in 1..3usize, c in 1..4usize, h in 1..6usize, w in 1..6usize) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let phi = random(&mut rng, &[b, c, h, 1]);
        let omega = random(&mut rng, &[b, c, 1, w]);
        let r = random(&mut rng, &[b, c, h, w]);
        let (dphi, domega) = outer_product_fuse_backward(&phi, &omega, &r).unwrap();
        assert_close("dphi", &dphi,
            &numeric(&phi, &|p| dot(&outer_product_fuse(p, &omega).unwrap(), &r)))?;
        assert_close("domega", &domega,
            &numeric(&omega, &|o| dot(&outer_product_fuse(&phi, o).unwrap(), &r)))?;
    }

    #[test]
    fn batch_norm(seed: u64, b in 2..4usize, c in 1..4usize, h in 1..4usize, w in 1..4usize) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut p = BatchNormParams::<f64>::new(c).unwrap();
        p.alpha = random(&mut rng, &[c]);
        p.beta = random(&mut rng, &[c]);
        let x = random(&mut rng, &[b, c, h, w]);
        for mode in [Mode::Train, Mode::Eval] {
            let run = |x: &Tensor<f64>, q: &BatchNormParams<f64>| {
                batch_norm2d(x, &mut q.clone(), mode).unwrap()
            };
            let (y, cache) = run(&x, &p);
            let r = random(&mut rng, y.shape());
            let g = batch_norm2d_backward(&p, &cache, &r).unwrap();
            assert_close("dx", &g.input, &numeric(&x, &|x| dot(&run(x, &p).0, &r)))?;
            let da = numeric(&p.alpha, &|a| {
                let mut q = p.clone();
                q.alpha = a.clone();
                dot(&run(&x, &q).0, &r)
            });
            assert_close("dalpha", &g.alpha, &da)?;
            let db = numeric(&p.beta, &|bt| {
                let mut q = p.clone();
                q.beta = bt.clone();
                dot(&run(&x, &q).0, &r)
            });
            assert_close("dbeta", &g.beta, &db)?;
        }
    }

    #[test]
    fn relu_layer(seed: u64, n in 1..40usize) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = away_from_zero(&mut rng, &[n], 1e-2);
        let r = random(&mut rng, &[n]);
        let g = relu_backward(&relu(&x), &r).unwrap();
        assert_close("dx", &g, &numeric(&x, &|x| dot(&relu(x), &r)))?;
    }

    #[test]
    fn max_pool(seed: u64, b in 1..3usize, c in 1..3usize, window in 1..4usize,
                stride in 1..4usize, h in 4..9usize, w in 4..9usize) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = spaced(&mut rng, &[b, c, h, w]);
        let (y, idx) = max_pool2d_with_indices(&x, window, stride).unwrap();
        let r = random(&mut rng, y.shape());
        let g = max_pool2d_backward(x.shape(), &idx, &r).unwrap();
        assert_close("dx", &g, &numeric(&x, &|x| dot(&max_pool2d(x, window, stride).unwrap(), &r)))?;
    }

    #[test]
    fn fully_connected_layer(seed: u64, b in 1..4usize, fin in 1..12usize, fout in 1..6usize) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = FcParams::<f64>::init(&mut rng, fin, fout).unwrap();
        let x = random(&mut rng, &[b, fin]);
        let r = random(&mut rng, &[b, fout]);
        let g = fully_connected_backward(&x, &p, &r).unwrap();
        assert_close("dx", &g.input, &numeric(&x, &|x| dot(&fully_connected(x, &p).unwrap(), &r)))?;
        let dw = numeric(&p.weights, &|wt| {
            let mut q = p.clone();
            q.weights = wt.clone();
            dot(&fully_connected(&x, &q).unwrap(), &r)
        });
        assert_close("dw", &g.weights, &dw)?;
        let db = numeric(&p.bias, &|bt| {
            let mut q = p.clone();
            q.bias = bt.clone();
            dot(&fully_connected(&x, &q).unwrap(), &r)
        });
        assert_close("db", &g.bias, &db)?;
    }

    #[test]
    fn concat_split(seed: u64, b in 1..3usize, c1 in 1..4usize, c2 in 1..4usize, h in 1..4usize, w in 1..4usize) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = random(&mut rng, &[b, c1, h, w]);
        let bb = random(&mut rng, &[b, c2, h, w]);
        let r = random(&mut rng, &[b, c1 + c2, h, w]);
        let parts = split_channels(&r, &[c1, c2]).unwrap();
        assert_close("da", &parts[0], &numeric(&a, &|a| dot(&concat_channels(&[a, &bb]).unwrap(), &r)))?;
        assert_close("db", &parts[1], &numeric(&bb, &|x| dot(&concat_channels(&[&a, x]).unwrap(), &r)))?;
    }

    #[test]
    fn softmax_cross_entropy_logits(seed: u64, b in 1..9usize, c in 2..21usize) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let z = random(&mut rng, &[b, c]).scale(3.0);
        let labels: Vec<usize> = (0..b).map(|_| rng.random_range(0..c)).collect();
        let (_, g, _) = softmax_cross_entropy(&z, &labels).unwrap();
        let num = numeric(&z, &|z| softmax_cross_entropy(z, &labels).unwrap().0);
        assert_close("dlogits", &g, &num)?;
    }

    #[test]
    fn softmax_layer(seed: u64, b in 1..4usize, c in 2..8usize) {
        // the Jacobian-vector product through softmax alone, via the fused
        // loss gradient with a one-hot target: d/dz of r . softmax(z)
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let z = random(&mut rng, &[b, c]);
        let r = random(&mut rng, &[b, c]);
        let p = softmax(&z).unwrap();
        let mut analytic = Tensor::zeros_like(&z);
        for i in 0..b {
            let row = |t: &Tensor<f64>, j: usize| t.data()[i * c + j];
            let rp: f64 = (0..c).map(|j| row(&r, j) * row(&p, j)).sum();
            for j in 0..c {
                analytic[i * c + j] = row(&p, j) * (row(&r, j) - rp);
            }
        }
        assert_close("dz", &analytic, &numeric(&z, &|z| dot(&softmax(z).unwrap(), &r)))?;
    }
}

/// End to end through a reduced local-global network: every parameter
/// gradient on the tape against finite differences of the training loss.
#[test]
fn whole_network_parameters() {
    for (name, seed) in [("lgcnn-2", 1u64), ("lgcnn-1", 2), ("cnn-3", 3)] {
        let opts = PresetOptions { classes: 3, height: 6, width: 9, channel_divisor: 16 };
        let spec = preset_with(name, opts).unwrap();
        let mut net: Network<f64> = Network::build(&spec, seed).unwrap().cast();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = random(&mut rng, &[4, 1, 6, 9]);
        let labels = [0, 2, 1, 2];

        let mut tape = GradTape::new();
        let logits = net.forward_train(&x, &mut tape).unwrap();
        let (_, g, _) = softmax_cross_entropy(&logits, &labels).unwrap();
        net.backward(&mut tape, &g).unwrap();
        let grads = tape.gradients().to_vec();

        let loss = |net: &mut Network<f64>| {
            let mut t = GradTape::new();
            let z = net.forward_train(&x, &mut t).unwrap();
            softmax_cross_entropy(&z, &labels).unwrap().0
        };
        let (mut checked, mut worst) = (0, 0.0f64);
        for (k, grad) in grads.iter().enumerate() {
            // every element of small tensors, a stride through large ones
            let step = (grad.len() / 16).max(1);
            for i in (0..grad.len()).step_by(step) {
                let orig = net.parameters()[k][i];
                net.parameters_mut()[k][i] = orig + H;
                let up = loss(&mut net);
                net.parameters_mut()[k][i] = orig - H;
                let down = loss(&mut net);
                net.parameters_mut()[k][i] = orig;
                let n = (up - down) / (2.0 * H);
                worst = worst.max(rel_err(grad[i], n));
                checked += 1;
            }
        }
        assert!(checked > 50, "{name}: {checked}");
        assert!(worst < TOL, "{name}: worst relative error {worst}");
    }
}
