use psgan_core::dsp::LEVELS;
use psgan_core::features::{FeatureStats, DIM};
use psgan_core::model::*;
use psgan_core::Error;
use psgan_nn::{grad_check, Graph, Tensor};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

fn tiny() -> ArchConfig {
    ArchConfig { gen_channels: 4, disc_channels: 4, cond_channels: 4, cond_out: 2, ..Default::default() }
}

fn features(batch: usize, frames: usize, seed: u64) -> Tensor<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Tensor::from_fn([batch, DIM, frames, 1], |_| StandardNormal.sample(&mut rng))
}

#[test]
fn shape_contract() {
    let arch = tiny();
    let nets = Networks::<f64>::init(&arch, 1).unwrap();
    for (b, f) in [(1, 1), (2, 3), (1, 6)] {
        let g = Graph::new();
        let (cp, gp, dp) = (nets.cond.bind(&g), nets.gen.bind(&g), nets.disc.bind(&g));
        let cond = conditioning(&arch, &cp, g.leaf(features(b, f, 2))).unwrap();
        let noise = NoiseBundle::sample(&mut ChaCha8Rng::seed_from_u64(3), b, f);
        let x = generate(&arch, &gp, &cond, &noise).unwrap();
        let lens: Vec<usize> = x.iter().map(|v| v.shape()[3]).collect();
        assert_eq!(lens, vec![512, 256, 128, 64, 32]);
        for v in &x {
            assert_eq!(&v.shape()[..3], &[b, 1, f]);
            assert!(v.value().data().iter().all(|s| s.abs() < 1.0));
        }
        let score = discriminate(&arch, &dp, &x, &cond).unwrap();
        assert_eq!(score.shape(), [b, 1, 1, 1]);
    }
}

#[test]
fn wrong_feature_dim_is_rejected() {
    let arch = tiny();
    let nets = Networks::<f64>::init(&arch, 1).unwrap();
    let g = Graph::new();
    let bad = g.leaf(Tensor::zeros([1, 46, 4, 1]));
    assert!(conditioning(&arch, &nets.cond.bind(&g), bad).is_err());
}

// Frames whose output differs after perturbing input frame `at`.
fn changed_frames(diff: impl Fn(usize) -> bool, frames: usize) -> Vec<usize> {
    (0..frames).filter(|&f| diff(f)).collect()
}

#[test]
fn receptive_fields_are_exact() {
    let arch = ArchConfig { cond_channels: 16, cond_out: 4, ..tiny() };
    let nets = Networks::<f64>::init(&arch, 5).unwrap();
    let frames = 121;
    let at = 60;
    let base = features(1, frames, 6);
    let mut moved = base.clone();
    for d in 0..DIM {
        let i = moved.index([0, d, at, 0]);
        moved.data_mut()[i] += 0.5;
    }
    let noise = NoiseBundle::sample(&mut ChaCha8Rng::seed_from_u64(7), 1, frames);
    let run = |feats: &Tensor<f64>| {
        let g = Graph::new();
        let cond = conditioning(&arch, &nets.cond.bind(&g), g.leaf(feats.clone())).unwrap();
        let c: Vec<Tensor<f64>> = (0..LEVELS).map(|i| (*cond.compact(i).value()).clone()).collect();
        let x = generate(&arch, &nets.gen.bind(&g), &cond, &noise).unwrap();
        (c, (*x[0].value()).clone())
    };
    let (c0, x0) = run(&base);
    let (c1, x1) = run(&moved);

    let cond_changed = changed_frames(
        |f| (0..LEVELS).any(|i| c0[i].frames(f, 1).data() != c1[i].frames(f, 1).data()),
        frames,
    );
    assert_eq!(cond_changed.len(), cond_receptive_field());
    assert_eq!(cond_changed, (at - 30..=at + 30).collect::<Vec<_>>());

    // The generator's frame-axis kernels widen this by one frame per block.
    let gen_changed = changed_frames(|f| x0.frames(f, 1).data() != x1.frames(f, 1).data(), frames);
    assert_eq!(gen_changed, (at - 35..=at + 35).collect::<Vec<_>>());
}

#[test]
fn zero_features_and_heads_give_zero_conditioning() {
    let arch = tiny();
    let mut nets = Networks::<f64>::init(&arch, 1).unwrap();
    for i in 0..LEVELS {
        nets.cond.get_mut(&format!("cond.head{i}.w")).unwrap().data_mut().fill(0.0);
    }
    let g = Graph::new();
    let cond = conditioning(&arch, &nets.cond.bind(&g), g.leaf(Tensor::zeros([1, DIM, 5, 1]))).unwrap();
    for i in 0..LEVELS {
        assert!(cond.level(i, 512 >> i).unwrap().value().data().iter().all(|&v| v == 0.0));
    }
}

fn score_with(nets: &Networks<f64>, seed: u64) -> Vec<f64> {
    let arch = &nets.arch;
    let g = Graph::new();
    let cond = conditioning(arch, &nets.cond.bind(&g), g.leaf(features(2, 3, seed))).unwrap();
    let noise = NoiseBundle::sample(&mut ChaCha8Rng::seed_from_u64(seed), 2, 3);
    let x = generate(arch, &nets.gen.bind(&g), &cond, &noise).unwrap();
    discriminate(arch, &nets.disc.bind(&g), &x, &cond).unwrap().value().data().to_vec()
}

#[test]
fn critic_head_is_linear() {
    let mut nets = Networks::<f64>::init(&tiny(), 9).unwrap();
    nets.disc.get_mut("disc.head.b").unwrap().data_mut().fill(0.3);
    let s1 = score_with(&nets, 4);
    for name in ["disc.head.w", "disc.head.b"] {
        for v in nets.disc.get_mut(name).unwrap().data_mut() {
            *v *= 2.0;
        }
    }
    let s2 = score_with(&nets, 4);
    for (a, b) in s1.iter().zip(&s2) {
        assert!((2.0 * a - b).abs() < 1e-12 * a.abs().max(1.0));
    }
    for name in ["disc.head.w", "disc.head.b"] {
        nets.disc.get_mut(name).unwrap().data_mut().fill(0.0);
    }
    assert!(score_with(&nets, 4).iter().all(|&s| s == 0.0));
}

#[test]
fn forward_is_deterministic() {
    let nets = Networks::<f64>::init(&tiny(), 2).unwrap();
    let a: Vec<u64> = score_with(&nets, 8).iter().map(|v| v.to_bits()).collect();
    let b: Vec<u64> = score_with(&nets, 8).iter().map(|v| v.to_bits()).collect();
    assert_eq!(a, b);
}

// Sample-axis taps of a strided critic block that only ever read padding.
fn padding_only_taps(arch: &ArchConfig, input_len: usize) -> Vec<usize> {
    let (ks, pad) = (arch.kernel_samples, arch.kernel_samples / 2);
    let out_len = input_len / 2;
    (0..ks)
        .filter(|&c| (0..out_len).all(|q| {
            let i = (2 * q + c) as isize - pad as isize;
            i < 0 || i >= input_len as isize
        }))
        .collect()
}

#[test]
fn every_parameter_receives_gradient() {
    let arch = ArchConfig { cond_channels: 8, ..tiny() };
    let nets = Networks::<f64>::init(&arch, 11).unwrap();
    let frames = 20;
    let g = Graph::new();
    let (cp, gp, dp) = (nets.cond.bind(&g), nets.gen.bind(&g), nets.disc.bind(&g));
    let cond = conditioning(&arch, &cp, g.leaf(features(2, frames, 12))).unwrap();
    let noise = NoiseBundle::sample(&mut ChaCha8Rng::seed_from_u64(13), 2, frames);
    let x = generate(&arch, &gp, &cond, &noise).unwrap();
    let score = discriminate(&arch, &dp, &x, &cond).unwrap().sum();
    let wrt: Vec<_> = cp.vars().iter().chain(gp.vars()).chain(dp.vars()).copied().collect();
    let grads = g.grad(score, &wrt).unwrap();
    let names: Vec<&String> = nets.cond.names().iter().chain(nets.gen.names()).chain(nets.disc.names()).collect();
    let (mut total, mut zero) = (0usize, 0usize);
    for (name, grad) in names.iter().zip(&grads) {
        let grad = grad.value();
        let dead = match name.strip_prefix("disc.block").and_then(|r| r.strip_suffix(".w")) {
            Some(k) => padding_only_taps(&arch, 512 >> k.parse::<usize>().unwrap()),
            None => vec![],
        };
        let ks = grad.shape()[3];
        for (i, &v) in grad.data().iter().enumerate() {
            if dead.contains(&(i % ks)) {
                assert_eq!(v, 0.0);
                continue;
            }
            total += 1;
            zero += usize::from(v == 0.0);
        }
    }
    let frac = zero as f64 / total as f64;
    println!("exactly-zero gradient fraction {frac:.5} over {total} reachable parameters");
    assert!(frac < 0.01);
}

#[test]
fn critic_score_gradient_matches_finite_differences() {
    let arch = ArchConfig { gen_channels: 2, disc_channels: 2, cond_channels: 2, cond_out: 1, ..Default::default() };
    let nets = Networks::<f64>::init(&arch, 21).unwrap();
    let cond_vals: Vec<Tensor<f64>> = {
        let g = Graph::new();
        let c = conditioning(&arch, &nets.cond.bind(&g), g.leaf(features(2, 2, 22))).unwrap();
        (0..LEVELS).map(|i| (*c.compact(i).value()).clone()).collect()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    let x: Vec<Tensor<f64>> =
        (0..LEVELS).map(|i| Tensor::from_fn([2, 1, 2, 512 >> i], |_| { let z: f64 = StandardNormal.sample(&mut rng); 0.3 * z })).collect();
    let n = nets.disc.len();
    let err = grad_check(
        |g, vars| {
            let p = nets.disc.bind_vars(&vars[..n]);
            let cond = CondPyramid::from_compact(cond_vals.iter().map(|c| g.leaf(c.clone())).collect());
            let xs: Vec<_> = x.iter().map(|t| g.leaf(t.clone())).collect();
            Ok::<_, Error>(discriminate(&arch, &p, &xs, &cond)?.sum())
        },
        nets.disc.tensors(),
        1e-5,
    )
    .unwrap();
    println!("critic score max relative error {err:.2e}");
    assert!(err < 1e-4);
}

#[test]
fn checkpoint_round_trip_is_byte_exact() {
    let dir = tempfile::tempdir().unwrap();
    let nets = Networks::<f32>::init(&tiny(), 3).unwrap();
    let mut ck = Checkpoint::new(nets, FeatureStats::identity());
    ck.aux.push("adam.m.0", Tensor::full([1, 1, 1, 3], 0.25f32));
    ck.extra = serde_json::json!({ "iteration": 7 });
    let p1 = dir.path().join("a.psgc");
    write_checkpoint(&p1, &ck).unwrap();
    let back = read_checkpoint(&p1).unwrap();
    assert_eq!(back, ck);
    let p2 = dir.path().join("b.psgc");
    write_checkpoint(&p2, &back).unwrap();
    assert_eq!(std::fs::read(&p1).unwrap(), std::fs::read(&p2).unwrap());
}

#[test]
fn checkpoint_with_wrong_dims_names_the_layer() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("c.psgc");
    write_checkpoint(&path, &Checkpoint::new(Networks::<f32>::init(&tiny(), 3).unwrap(), FeatureStats::identity())).unwrap();
    let ck = read_checkpoint(&path).unwrap();
    let wider = ArchConfig { gen_channels: 6, ..tiny() };
    let mut target = Networks::<f32>::init(&wider, 0).unwrap();
    let err = ck.apply_to(&mut target).unwrap_err().to_string();
    assert!(err.contains("gen.seed.w"), "{err}");

    let mut bytes = std::fs::read(&path).unwrap();
    bytes[4] = 9;
    std::fs::write(&path, &bytes).unwrap();
    assert!(read_checkpoint(&path).unwrap_err().to_string().contains("version"));
    bytes[0] = b'Q';
    std::fs::write(&path, &bytes).unwrap();
    assert!(matches!(read_checkpoint(&path), Err(Error::Checkpoint(_))));
}

#[test]
fn parameter_count_matches_shape_arithmetic() {
    for arch in [tiny(), ArchConfig::default()] {
        let (g, d, r, o) = (arch.gen_channels, arch.disc_channels, arch.cond_channels, arch.cond_out);
        let k = arch.kernel_frames * arch.kernel_samples;
        let conv = |co: usize, ci: usize, taps: usize| co * ci * taps + co;
        let cond = conv(r, 47, 1) + 8 * conv(2 * r, r, 3) + 7 * conv(r, r, 1) + 8 * conv(r, r, 1) + conv(r, r, 1) + 5 * conv(o, r, 1);
        let gen = conv(g, o + 1, 1) + g * SEED_LEN + 5 * (conv(2 * g, g + 1 + o, k) + conv(g, g, 1) + conv(1, g, 1));
        let disc = conv(2 * d, 1 + o, k) + 4 * conv(2 * d, d + 1 + o, k) + 3 * conv(2 * d, d, k) + conv(2 * d, d + 1, k) + conv(1, d, 1);
        let nets = Networks::<f32>::init(&arch, 0).unwrap();
        assert_eq!(nets.count_parameters(), cond + gen + disc);
    }
}
