use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use ramvid::config::KeyValues;
use ramvid::container::{decode_container, encode_container};
use ramvid::data::{generate_gaussian_video, GaussianVideoConfig};
use ramvid::model::{decode_model, encode_model, AffineScoreModel, ToyVideoNet, ToyVideoNetConfig, TrainableModel};
use ramvid::oracle::ar1_conditional;
use ramvid::sampling::{sample, strided_steps, SamplerConfig};
use ramvid::{
    compose, corrupt, MaskSpec, NoiseSchedule, RandomStream, ScoreModel, VideoBatch, VideoShape,
    VideoTensor,
};

fn random_video(shape: VideoShape, rng: &mut RandomStream) -> VideoTensor {
    let mut v = VideoTensor::zeros(shape);
    rng.fill_normal(v.as_mut_slice());
    v
}

fn mask_strategy(len: usize) -> impl Strategy<Value = MaskSpec> {
    proptest::collection::btree_set(0..len, 0..len).prop_map(move |c| MaskSpec::new(len, c).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn vp_schedules_are_well_formed(steps in 1usize..2000, cosine in any::<bool>()) {
        let s = if cosine { NoiseSchedule::cosine(steps) } else { NoiseSchedule::linear(steps) }.unwrap();
        prop_assert_eq!(s.alpha_bar(0), 1.0);
        let mut product = 1.0;
        for t in 1..=steps {
            let beta = s.beta(t);
            prop_assert!(beta > 0.0 && beta < 1.0);
            if t > 1 && !cosine {
                prop_assert!(beta >= s.beta(t - 1));
            }
            product *= 1.0 - beta;
            prop_assert!((s.alpha_bar(t) - product).abs() <= 1e-12 * product.max(1e-300) + 1e-15);
            prop_assert!(s.alpha_bar(t) < s.alpha_bar(t - 1));
            let (a, sd) = s.marginal(t).unwrap();
            prop_assert!((a * a + sd * sd - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn ve_noise_scales_increase(steps in 1usize..500, lo in 0.001f64..1.0, ratio in 1.5f64..100.0) {
        let s = NoiseSchedule::variance_exploding(steps, lo, lo * ratio).unwrap();
        for t in 1..=steps {
            prop_assert!(s.sigma(t) > s.sigma(t - 1));
            let (a, sd) = s.marginal(t).unwrap();
            prop_assert_eq!(a, 1.0);
            prop_assert!((sd * sd - (s.sigma(t).powi(2) - lo * lo)).abs() < 1e-9 * s.sigma(t).powi(2));
        }
    }

    #[test]
    fn strided_steps_descend_from_t_to_one(big_t in 1usize..3000, frac in 0.0f64..1.0) {
        let n = 1 + ((big_t - 1) as f64 * frac) as usize;
        let seq = strided_steps(big_t, n).unwrap();
        prop_assert_eq!(seq.len(), n);
        prop_assert_eq!(seq[0], big_t);
        if n > 1 {
            prop_assert_eq!(*seq.last().unwrap(), 1);
        }
        prop_assert!(seq.windows(2).all(|w| w[0] > w[1]));
    }

    #[test]
    fn compose_takes_each_frame_from_its_side(mask in mask_strategy(6), seed in any::<u64>()) {
        let shape = VideoShape::new(6, 2, 1, 2).unwrap();
        let mut rng = RandomStream::from_seed(seed);
        let (u, c) = (random_video(shape, &mut rng), random_video(shape, &mut rng));
        let out = compose(&u, &c, &mask).unwrap();
        for f in 0..6 {
            let src = if mask.is_conditioning(f) { &c } else { &u };
            prop_assert_eq!(out.frame(f), src.frame(f));
        }
        prop_assert_eq!(compose(&out, &c, &mask).unwrap(), out);
    }

    #[test]
    fn corrupt_leaves_conditioning_frames_alone(mask in mask_strategy(5), t in 1usize..=100, seed in any::<u64>()) {
        let shape = VideoShape::new(5, 2, 2, 1).unwrap();
        let schedule = NoiseSchedule::linear(100).unwrap();
        let mut rng = RandomStream::from_seed(seed);
        let x0 = random_video(shape, &mut rng);
        let (xt, noise) = corrupt(&x0, &mask, t, &schedule, &mut rng).unwrap();
        let (a, sd) = schedule.marginal(t).unwrap();
        for f in 0..5 {
            if mask.is_conditioning(f) {
                prop_assert_eq!(xt.frame(f), x0.frame(f));
                prop_assert!(noise.frame(f).iter().all(|&e| e == 0.0));
            } else {
                for ((x, &c), &e) in xt.frame(f).iter().zip(x0.frame(f)).zip(noise.frame(f)) {
                    prop_assert!((x - (a * c + sd * e)).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn mask_literal_round_trips(mask in mask_strategy(12)) {
        let text = mask.to_string();
        prop_assert_eq!(MaskSpec::parse(&text, 12).unwrap(), mask);
    }

    #[test]
    fn key_values_round_trip(pairs in proptest::collection::btree_map("[a-z_][a-z0-9_]{0,8}", "[A-Za-z0-9.,_-]{0,12}", 0..8)) {
        let mut kv = KeyValues::default();
        for (k, v) in &pairs {
            kv.set(k, v);
        }
        let parsed = KeyValues::parse(&kv.to_string()).unwrap();
        prop_assert_eq!(parsed.to_string(), kv.to_string());
        for (k, v) in &pairs {
            prop_assert_eq!(parsed.get(k), Some(v.as_str()));
        }
    }

    #[test]
    fn container_round_trips_f32_values(seed in any::<u64>(), n in 1usize..4, frames in 1usize..5) {
        let shape = VideoShape::new(frames, 3, 2, 1).unwrap();
        let mut rng = RandomStream::from_seed(seed);
        let items: Vec<_> = (0..n)
            .map(|_| {
                let mut v = random_video(shape, &mut rng);
                v.as_mut_slice().iter_mut().for_each(|x| *x = *x as f32 as f64);
                v
            })
            .collect();
        let batch = VideoBatch::new(items).unwrap();
        let bytes = encode_container(&batch);
        prop_assert_eq!(decode_container(&bytes).unwrap(), batch);
    }

    #[test]
    fn model_codec_round_trips(seed in any::<u64>(), toy in any::<bool>()) {
        let shape = VideoShape::new(4, 2, 2, 1).unwrap();
        let mut rng = RandomStream::from_seed(seed);
        let mut model = if toy {
            TrainableModel::Toy(
                ToyVideoNet::new(ToyVideoNetConfig::new(shape, 30).with_hidden(3).with_dilations(vec![1, 2]), &mut rng).unwrap(),
            )
        } else {
            let mut m = AffineScoreModel::zeros(shape, 3, 30).unwrap();
            let p: Vec<f64> = m.parameters().iter().map(|_| rng.normal()).collect();
            m.set_parameters(&p).unwrap();
            TrainableModel::Affine(m)
        };
        // Weights are stored as f32.
        let stored: Vec<f64> = model.parameters().iter().map(|&p| p as f32 as f64).collect();
        model.set_parameters(&stored).unwrap();
        let bytes = encode_model(&model);
        let back = decode_model(&bytes).unwrap();
        prop_assert_eq!(encode_model(&back), bytes);
        prop_assert_eq!(back, model);
    }

    #[test]
    fn sampling_keeps_conditioning_frames(mask in mask_strategy(5), seed in any::<u64>(), steps in 1usize..8) {
        let shape = VideoShape::new(5, 2, 2, 1).unwrap();
        let mut rng = RandomStream::from_seed(seed);
        let net = ToyVideoNet::new(ToyVideoNetConfig::new(shape, 20).with_hidden(2), &mut rng).unwrap();
        let schedule = NoiseSchedule::linear(20).unwrap();
        let cond = random_video(shape, &mut rng);
        let out = sample(&net, &mask, &cond, &schedule, &SamplerConfig::new(steps), &mut rng).unwrap();
        for &f in mask.conditioning() {
            prop_assert_eq!(out.frame(f), cond.frame(f));
        }
        prop_assert!(out.as_slice().iter().all(|v| v.is_finite()));
    }

    #[test]
    fn ar1_conditional_matches_tridiagonal_precision(
        mask in mask_strategy(7),
        rho in 0.0f64..0.95,
        scale in 0.2f64..2.0,
        seed in any::<u64>(),
    ) {
        prop_assume!(!mask.unknown().is_empty());
        let shape = VideoShape::new(7, 1, 1, 1).unwrap();
        let config = GaussianVideoConfig { shape, rho, scale };
        let x0 = random_video(shape, &mut RandomStream::from_seed(seed));
        let oracle = ar1_conditional(&config, &mask, &x0).unwrap();

        // Precision of a stationary AR(1) chain is tridiagonal.
        let l = 7;
        let q = DMatrix::from_fn(l, l, |i, j| {
            let inner = if i == 0 || i == l - 1 { 1.0 } else { 1.0 + rho * rho };
            let v = if i == j { inner } else if i.abs_diff(j) == 1 { -rho } else { 0.0 };
            v / (scale * scale * (1.0 - rho * rho))
        });
        let (u, c) = (mask.unknown(), mask.conditioning());
        let q_uu = DMatrix::from_fn(u.len(), u.len(), |a, b| q[(u[a], u[b])]);
        let cov = q_uu.try_inverse().unwrap();
        let q_uc_x = DVector::from_fn(u.len(), |a, _| c.iter().map(|&j| q[(u[a], j)] * x0.frame(j)[0]).sum::<f64>());
        let mean = -(&cov * q_uc_x);
        prop_assert!((&oracle.mean - &mean).amax() < 1e-9 * scale.max(1.0));
        prop_assert!((&oracle.cov - &cov).amax() < 1e-9 * scale * scale);
    }
}

#[test]
fn oracle_draws_match_their_law() {
    let shape = VideoShape::new(6, 1, 2, 1).unwrap();
    let config = GaussianVideoConfig { shape, rho: 0.8, scale: 0.7 };
    let mask = MaskSpec::parse("0,4", 6).unwrap();
    let x0 = generate_gaussian_video(&config, 1, &mut RandomStream::from_seed(1))
        .unwrap()
        .into_items()
        .remove(0);
    let oracle = ar1_conditional(&config, &mask, &x0).unwrap();
    let mut rng = RandomStream::from_seed(2);
    let n = 50_000;
    let dim = oracle.mean.len();
    let mut sum = DVector::zeros(dim);
    let mut outer = DMatrix::zeros(dim, dim);
    for _ in 0..n {
        let draw = oracle.draw(&x0, &mut rng).unwrap();
        for &f in mask.conditioning() {
            assert_eq!(draw.frame(f), x0.frame(f));
        }
        let v = oracle.unknown_coords(&draw);
        sum += &v;
        outer += &v * v.transpose();
    }
    let nf = n as f64;
    let mean = sum / nf;
    let cov = (outer - &mean * mean.transpose() * nf) / (nf - 1.0);
    for i in 0..dim {
        let se = (oracle.cov[(i, i)] / nf).sqrt();
        assert!((mean[i] - oracle.mean[i]).abs() < 4.0 * se, "coordinate {i}");
        for j in 0..dim {
            let se = ((oracle.cov[(i, i)] * oracle.cov[(j, j)] + oracle.cov[(i, j)].powi(2)) / nf).sqrt();
            assert!((cov[(i, j)] - oracle.cov[(i, j)]).abs() < 4.0 * se, "entry ({i}, {j})");
        }
    }
}

#[test]
fn stationary_ar1_frames_have_the_stated_covariance() {
    let shape = VideoShape::new(5, 1, 1, 1).unwrap();
    let config = GaussianVideoConfig { shape, rho: 0.9, scale: 0.5 };
    let n = 40_000;
    let batch = generate_gaussian_video(&config, n, &mut RandomStream::from_seed(3)).unwrap();
    let nf = n as f64;
    for i in 0..5 {
        for j in i..5 {
            let emp = batch.iter().map(|v| v.frame(i)[0] * v.frame(j)[0]).sum::<f64>() / nf;
            let exact = config.temporal_covariance(i, j);
            let se = ((config.temporal_covariance(i, i) * config.temporal_covariance(j, j) + exact * exact) / nf).sqrt();
            assert!((emp - exact).abs() < 4.0 * se, "({i}, {j}): {emp} vs {exact}");
        }
    }
}
