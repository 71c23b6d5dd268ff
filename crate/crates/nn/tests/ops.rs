use psgan_nn::ops::{batch_stddev_feature, gated_activation, mean_pool, upsample_linear};
use psgan_nn::{grad_check, ConvGeom, Graph, NnError, Tensor, Var};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

fn randn(shape: [usize; 4], rng: &mut ChaCha8Rng) -> Tensor<f64> {
    Tensor::from_fn(shape, |_| rng.sample(StandardNormal))
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

// Random projection to a scalar so every output element gets a distinct weight.
fn project<'g>(y: Var<'g, f64>, seed: u64) -> psgan_nn::Result<Var<'g, f64>> {
    let w = randn(y.shape(), &mut rng(seed));
    let wv = y.graph().leaf(w);
    Ok(y.mul(wv)?.sum())
}

#[test]
fn pointwise_identity_kernel_is_identity() {
    let g = Graph::new();
    let x = randn([2, 3, 4, 5], &mut rng(1));
    let eye = Tensor::from_fn([3, 3, 1, 1], |[o, i, _, _]| if o == i { 1.0 } else { 0.0 });
    let y = g.leaf(x.clone()).conv2d(g.leaf(eye), ConvGeom::pointwise()).unwrap();
    assert_eq!(*y.value(), x);
}

#[test]
fn ones_window_sums_to_nine() {
    let g = Graph::new();
    let x = g.leaf(Tensor::full([1, 1, 5, 5], 1.0));
    let w = g.leaf(Tensor::full([1, 1, 3, 3], 1.0));
    let y = x.conv2d(w, ConvGeom::same(3, 3)).unwrap().value();
    assert_eq!(y.at([0, 0, 2, 2]), 9.0);
    assert_eq!(y.at([0, 0, 0, 0]), 4.0);
}

#[test]
fn conv_gradient_matches_finite_differences() {
    let mut r = rng(2);
    for geom in [ConvGeom::same(3, 7), ConvGeom::strided(3, 7, 2), ConvGeom::dilated_frames(3, 2)] {
        let x = randn([2, 2, 4, 8], &mut r);
        let w = randn([3, 2, geom.kernel.0, geom.kernel.1], &mut r);
        let b = randn([1, 3, 1, 1], &mut r);
        let err = grad_check(
            |_, p| {
                let y = p[0].conv2d_bias(p[1], p[2], geom)?;
                project(y, 9)
            },
            &[x, w, b],
            1e-5,
        )
        .unwrap();
        assert!(err < 1e-6, "{geom:?}: {err}");
    }
}

#[test]
fn gated_activation_values() {
    let g = Graph::<f64>::new();
    let z = g.leaf(Tensor::zeros([1, 1, 1, 2]));
    assert_eq!(gated_activation(z, z).unwrap().value().data(), &[0.0, 0.0]);
    let big = g.leaf(Tensor::full([1, 1, 1, 1], 40.0));
    assert!((gated_activation(big, big).unwrap().item() - 1.0).abs() < 1e-12);
}

#[test]
fn gated_activation_gradient() {
    let mut r = rng(3);
    let a = randn([2, 2, 3, 4], &mut r);
    let b = randn([2, 2, 3, 4], &mut r);
    let err = grad_check(|_, p| project(gated_activation(p[0], p[1])?, 4), &[a, b], 1e-5).unwrap();
    assert!(err < 1e-6, "{err}");
}

#[test]
fn upsample_examples() {
    let g = Graph::new();
    let ones = g.leaf(Tensor::full([1, 1, 1, 2], 1.0));
    assert_eq!(upsample_linear(ones).unwrap().value().data(), &[1.0; 4]);
    let ramp = g.leaf(Tensor::new([1, 1, 1, 2], vec![0.0, 2.0]).unwrap());
    assert_eq!(upsample_linear(ramp).unwrap().value().data(), &[0.0, 1.0, 2.0, 2.0]);
    let short = g.leaf(Tensor::full([1, 1, 1, 1], 1.0));
    assert!(upsample_linear(short).is_err());
}

#[test]
fn upsample_mean_identity() {
    // sum(out) = 2 sum(in) - (x0 - x_last)/... : with odd taps averaging
    // neighbours, sum(out) = 2*sum(in) + (x_last - x_0)/2.
    let x = randn([1, 1, 1, 9], &mut rng(5));
    let g = Graph::new();
    let y = upsample_linear(g.leaf(x.clone())).unwrap().value();
    let d = x.data();
    let expected = 2.0 * x.sum() + (d[8] - d[0]) / 2.0;
    assert!((y.sum() - expected).abs() < 1e-12);
}

#[test]
fn upsample_and_pool_gradients() {
    let x = randn([1, 2, 2, 8], &mut rng(6));
    let err = grad_check(|_, p| project(mean_pool(upsample_linear(p[0])?)?, 1), &[x], 1e-5).unwrap();
    assert!(err < 1e-8, "{err}");
}

#[test]
fn batch_stddev_examples() {
    let g = Graph::new();
    let item = randn([1, 2, 3, 4], &mut rng(7));
    let twice = Tensor::stack(&[item.clone(), item]).unwrap();
    let y = batch_stddev_feature(g.leaf(twice)).unwrap();
    assert_eq!(y.shape(), [2, 3, 3, 4]);
    let v = y.value();
    for b in 0..2 {
        for f in 0..3 {
            for s in 0..4 {
                assert_eq!(v.at([b, 2, f, s]), 0.0);
            }
        }
    }
    let pair = g.leaf(Tensor::new([2, 1, 1, 1], vec![0.0, 2.0]).unwrap());
    let y = batch_stddev_feature(pair).unwrap().value();
    assert_eq!(y.data(), &[0.0, 1.0, 2.0, 1.0]);
}

#[test]
fn batch_stddev_gradient() {
    let x = randn([3, 2, 2, 3], &mut rng(8));
    let err = grad_check(|_, p| project(batch_stddev_feature(p[0])?, 2), &[x], 1e-5).unwrap();
    assert!(err < 1e-6, "{err}");
}

#[test]
fn linear_function_checks_exactly() {
    let x = randn([1, 1, 2, 3], &mut rng(9));
    let err = grad_check(|_, p| Ok::<_, NnError>(p[0].scale(3.0).sum()), &[x], 1e-5).unwrap();
    assert!(err < 1e-10, "{err}");
}

#[test]
fn unreached_inputs_get_zero_gradient() {
    let g = Graph::new();
    let a = g.leaf(Tensor::full([1, 1, 1, 2], 2.0));
    let b = g.leaf(Tensor::full([1, 1, 1, 3], 5.0));
    let out = a.square().sum();
    let grads = g.grad(out, &[a, b]).unwrap();
    assert_eq!(grads[0].value().data(), &[4.0, 4.0]);
    assert_eq!(grads[1].value().data(), &[0.0; 3]);
}

// Penalty-style objective: the parameter gradient of a function of the
// input gradient of a small two-layer critic.
fn toy_critic<'g>(x: Var<'g, f64>, p: &[Var<'g, f64>]) -> psgan_nn::Result<Var<'g, f64>> {
    let h = x.conv2d_bias(p[0], p[1], ConvGeom::strided(3, 3, 2))?;
    let h = gated_activation(h.slice_channels(0, 2)?, h.slice_channels(2, 2)?)?;
    let h = batch_stddev_feature(h)?;
    let s = h.conv2d(p[2], ConvGeom::pointwise())?;
    Ok(s.mean())
}

#[test]
fn second_order_penalty_gradient() {
    let mut r = rng(10);
    let x = randn([2, 1, 3, 8], &mut r);
    let params = vec![
        randn([4, 1, 3, 3], &mut r),
        randn([1, 4, 1, 1], &mut r),
        randn([1, 3, 1, 1], &mut r).map(|v| v * 3.0),
    ];
    let err = grad_check(
        |g, p| {
            let xv = g.leaf(x.clone());
            let score = toy_critic(xv, p)?;
            let gx = g.grad(score, &[xv])?[0];
            let norm = gx.square().sum().sqrt();
            Ok::<_, NnError>(norm.affine(1.0, -0.01).relu().square().add(gx.square().sum())?)
        },
        &params,
        1e-5,
    )
    .unwrap();
    assert!(err < 1e-3, "{err}");
}

#[test]
fn third_order_through_convolution() {
    // d/dw of || d/dx <conv(x, w), v> ||^2 exercises grad-of-grad-input.
    let mut r = rng(11);
    let x = randn([1, 2, 3, 6], &mut r);
    let w = randn([2, 2, 3, 3], &mut r);
    let err = grad_check(
        |g, p| {
            let xv = g.leaf(x.clone());
            let y = xv.conv2d(p[0], ConvGeom::same(3, 3))?.tanh();
            let gx = g.grad(y.sum(), &[xv])?[0];
            let gw = g.grad(gx.square().sum(), &[p[0]])?[0];
            Ok::<_, NnError>(gw.square().sum())
        },
        &[w],
        1e-5,
    )
    .unwrap();
    assert!(err < 1e-5, "{err}");
}

proptest::proptest! {
    #[test]
    fn forward_is_deterministic(seed in 0u64..1000) {
        let x = randn([2, 2, 3, 8], &mut rng(seed));
        let w = randn([2, 2, 3, 7], &mut rng(seed + 1));
        let run = || {
            let g = Graph::new();
            let xv = g.leaf(x.clone());
            let wv = g.leaf(w.clone());
            let y = xv.conv2d(wv, ConvGeom::same(3, 7)).unwrap().tanh().sum();
            let gw = g.grad(y, &[wv]).unwrap()[0].value();
            (y.item(), (*gw).clone())
        };
        let a = run();
        let b = run();
        proptest::prop_assert_eq!(a.0.to_bits(), b.0.to_bits());
        proptest::prop_assert_eq!(a.1, b.1);
    }
}
