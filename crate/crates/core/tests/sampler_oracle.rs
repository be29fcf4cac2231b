//! Samplers driven by exact noise predictors must reproduce the data law.

use ramvid::data::GaussianVideoConfig;
use ramvid::eval::{conditional_oracle_error, gaussian_stats};
use ramvid::oracle::{ar1_conditional, Ar1ConditionalEps, IidGaussianEps};
use ramvid::sampling::{sample_many, PosteriorVariance, SamplerConfig};
use ramvid::{MaskSpec, NoiseSchedule, RandomStream, VideoShape, VideoTensor};

#[test]
fn exact_iid_predictor_recovers_the_prior() {
    let shape = VideoShape::new(3, 2, 2, 1).unwrap();
    let scale = 0.6;
    let schedule = NoiseSchedule::linear(1000).unwrap();
    let model = IidGaussianEps::new(shape, scale, schedule.clone());
    let mask = MaskSpec::unconditional(3).unwrap();
    let n = 10_000;
    let samples = sample_many(
        &model,
        &mask,
        &VideoTensor::zeros(shape),
        &schedule,
        &SamplerConfig::unclamped(1000),
        n,
        &mut RandomStream::from_seed(1),
    )
    .unwrap();
    let features: Vec<Vec<f64>> = samples.iter().map(|v| v.as_slice().to_vec()).collect();
    let stats = gaussian_stats(&features).unwrap();
    let var = scale * scale;
    let se = (var / n as f64).sqrt();
    for i in 0..shape.len() {
        assert!(stats.mu[i].abs() < 3.0 * se, "mean {i}: {}", stats.mu[i]);
        assert!((stats.sigma[(i, i)] / var - 1.0).abs() < 0.05, "variance {i}: {}", stats.sigma[(i, i)]);
    }
    let target = nalgebra::DMatrix::<f64>::identity(shape.len(), shape.len()) * var;
    let rel = (&stats.sigma - &target).norm() / target.norm();
    assert!(rel < 0.05, "covariance relative Frobenius error {rel}");
}

#[test]
fn exact_conditional_predictor_matches_gaussian_conditional() {
    let shape = VideoShape::new(8, 1, 2, 1).unwrap();
    let process = GaussianVideoConfig { shape, rho: 0.9, scale: 0.5 };
    let schedule = NoiseSchedule::linear(1000).unwrap();
    let mut x0 = VideoTensor::filled(shape, 0.75);
    x0.frame_mut(3).iter_mut().for_each(|v| *v = -0.5);
    for literal in ["0", "0,7", "0,3,6"] {
        let mask = MaskSpec::parse(literal, 8).unwrap();
        let model = Ar1ConditionalEps::new(&process, mask.clone(), schedule.clone()).unwrap();
        let oracle = ar1_conditional(&process, &mask, &x0).unwrap();
        let cfg = SamplerConfig {
            variance: PosteriorVariance::BetaTilde,
            ..SamplerConfig::unclamped(1000)
        };
        let samples = sample_many(&model, &mask, &x0, &schedule, &cfg, 4000, &mut RandomStream::from_seed(2)).unwrap();
        let (mean_err, cov_err) = conditional_oracle_error(&samples, &mask, &oracle).unwrap();
        assert!(mean_err < 0.05, "{literal}: mean error {mean_err}");
        assert!(cov_err < 0.15, "{literal}: covariance error {cov_err}");
    }
}
