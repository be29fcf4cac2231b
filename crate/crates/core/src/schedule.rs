//! Discrete noise schedules.
//!
//! Steps run over `0..=T`; step 0 is the data itself. Variance-preserving
//! schedules are described by per-step variances `beta[1..=T]` and their
//! cumulative products `alpha_bar[0..=T]`. The variance-exploding schedule
//! is described by noise scales `sigma[0..=T]`.

use std::f64::consts::FRAC_PI_2;
use std::fmt;
use std::str::FromStr;

use crate::error::{ensure, Error, Result};

const LINEAR_BETA_START: f64 = 1e-4;
const LINEAR_BETA_END: f64 = 0.02;
const COSINE_OFFSET: f64 = 0.008;
const MAX_BETA: f64 = 0.999;

pub const DEFAULT_VE_SIGMA_MIN: f64 = 0.01;
pub const DEFAULT_VE_SIGMA_MAX: f64 = 50.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ScheduleKind {
    Linear,
    Cosine,
    VarianceExploding,
}

impl ScheduleKind {
    pub fn build(self, steps: usize) -> Result<NoiseSchedule> {
        match self {
            ScheduleKind::Linear => NoiseSchedule::linear(steps),
            ScheduleKind::Cosine => NoiseSchedule::cosine(steps),
            ScheduleKind::VarianceExploding => {
                NoiseSchedule::variance_exploding(steps, DEFAULT_VE_SIGMA_MIN, DEFAULT_VE_SIGMA_MAX)
            }
        }
    }
}

impl fmt::Display for ScheduleKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ScheduleKind::Linear => "linear",
            ScheduleKind::Cosine => "cosine",
            ScheduleKind::VarianceExploding => "ve",
        })
    }
}

impl FromStr for ScheduleKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "linear" => Ok(ScheduleKind::Linear),
            "cosine" => Ok(ScheduleKind::Cosine),
            "ve" => Ok(ScheduleKind::VarianceExploding),
            other => Err(Error::InvalidArgument(format!(
                "unknown schedule '{other}' (expected linear, cosine or ve)"
            ))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct NoiseSchedule {
    kind: ScheduleKind,
    steps: usize,
    // index 0 is unused padding so that beta[t] lines up with step t
    betas: Vec<f64>,
    alpha_bar: Vec<f64>,
    sigmas: Vec<f64>,
}

impl NoiseSchedule {
    /// Linear betas from `1e-4` to `0.02`, both rescaled by `1000 / T` so that
    /// shorter chains still reach (nearly) pure noise.
    pub fn linear(steps: usize) -> Result<Self> {
        ensure!(steps >= 1, InvalidArgument, "schedule needs T >= 1");
        let scale = 1000.0 / steps as f64;
        let (start, end) = (LINEAR_BETA_START * scale, LINEAR_BETA_END * scale);
        let mut betas = vec![0.0; steps + 1];
        for (t, beta) in betas.iter_mut().enumerate().skip(1) {
            let frac = if steps == 1 {
                0.0
            } else {
                (t - 1) as f64 / (steps - 1) as f64
            };
            *beta = (start + (end - start) * frac).min(MAX_BETA);
        }
        Ok(Self::from_betas(ScheduleKind::Linear, betas))
    }

    pub fn cosine(steps: usize) -> Result<Self> {
        ensure!(steps >= 1, InvalidArgument, "schedule needs T >= 1");
        let f = |t: usize| {
            let x = (t as f64 / steps as f64 + COSINE_OFFSET) / (1.0 + COSINE_OFFSET);
            (x * FRAC_PI_2).cos().powi(2)
        };
        let f0 = f(0);
        let mut betas = vec![0.0; steps + 1];
        for (t, beta) in betas.iter_mut().enumerate().skip(1) {
            let ratio = (f(t) / f0) / (f(t - 1) / f0);
            *beta = (1.0 - ratio).min(MAX_BETA);
        }
        Ok(Self::from_betas(ScheduleKind::Cosine, betas))
    }

    /// Geometric noise scales from `sigma_min` at step 0 to `sigma_max` at `T`.
    pub fn variance_exploding(steps: usize, sigma_min: f64, sigma_max: f64) -> Result<Self> {
        ensure!(steps >= 1, InvalidArgument, "schedule needs T >= 1");
        ensure!(
            sigma_min >= 0.0 && sigma_max > sigma_min,
            InvalidArgument,
            "need 0 <= sigma_min < sigma_max, got {sigma_min}, {sigma_max}"
        );
        let sigmas = (0..=steps)
            .map(|t| {
                let frac = t as f64 / steps as f64;
                if sigma_min == 0.0 {
                    sigma_max * frac
                } else {
                    sigma_min * (sigma_max / sigma_min).powf(frac)
                }
            })
            .collect();
        Ok(Self {
            kind: ScheduleKind::VarianceExploding,
            steps,
            betas: Vec::new(),
            alpha_bar: Vec::new(),
            sigmas,
        })
    }

    fn from_betas(kind: ScheduleKind, betas: Vec<f64>) -> Self {
        let mut alpha_bar = Vec::with_capacity(betas.len());
        let mut acc = 1.0;
        alpha_bar.push(acc);
        for &b in &betas[1..] {
            acc *= 1.0 - b;
            alpha_bar.push(acc);
        }
        Self {
            kind,
            steps: betas.len() - 1,
            betas,
            alpha_bar,
            sigmas: Vec::new(),
        }
    }

    pub fn kind(&self) -> ScheduleKind {
        self.kind
    }

    /// `T`, the number of diffusion steps.
    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn is_variance_preserving(&self) -> bool {
        self.kind != ScheduleKind::VarianceExploding
    }

    /// `beta[t]` for `t` in `1..=T` (VP only).
    pub fn beta(&self, t: usize) -> f64 {
        self.betas[t]
    }

    /// `alpha_bar[t]` for `t` in `0..=T` (VP only).
    pub fn alpha_bar(&self, t: usize) -> f64 {
        self.alpha_bar[t]
    }

    /// `sigma[t]` for `t` in `0..=T` (VE only).
    pub fn sigma(&self, t: usize) -> f64 {
        self.sigmas[t]
    }

    pub fn check_step(&self, t: usize) -> Result<()> {
        ensure!(
            t <= self.steps,
            InvalidArgument,
            "step {t} outside 0..={}",
            self.steps
        );
        Ok(())
    }

    /// Coefficients of `p(x_t | x_0) = N(mean_coeff * x_0, std^2 I)`.
    pub fn marginal(&self, t: usize) -> Result<(f64, f64)> {
        self.check_step(t)?;
        Ok(self.marginal_unchecked(t))
    }

    pub(crate) fn marginal_unchecked(&self, t: usize) -> (f64, f64) {
        if self.is_variance_preserving() {
            let ab = self.alpha_bar[t];
            (ab.sqrt(), (1.0 - ab).sqrt())
        } else {
            let s0 = self.sigmas[0];
            let st = self.sigmas[t];
            (1.0, (st * st - s0 * s0).max(0.0).sqrt())
        }
    }

    /// Forward transition from step `from` to a later step `to`:
    /// `x_to = scale * x_from + sqrt(variance) * z`.
    pub fn transition(&self, from: usize, to: usize) -> Result<(f64, f64)> {
        self.check_step(to)?;
        ensure!(
            from <= to,
            InvalidArgument,
            "transition must move forward, got {from} -> {to}"
        );
        let (a_from, s_from) = self.marginal_unchecked(from);
        let (a_to, s_to) = self.marginal_unchecked(to);
        let scale = a_to / a_from;
        let variance = (s_to * s_to - scale * scale * s_from * s_from).max(0.0);
        Ok((scale, variance))
    }

    /// Standard deviation used to initialise the unknown frames at step `T`.
    pub fn prior_std(&self) -> f64 {
        if self.is_variance_preserving() {
            1.0
        } else {
            let (_, std) = self.marginal_unchecked(self.steps);
            std
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linear_endpoints_at_thousand_steps() {
        let s = NoiseSchedule::linear(1000).unwrap();
        assert!((s.beta(1) - 1e-4).abs() < 1e-15);
        assert!((s.beta(1000) - 0.02).abs() < 1e-15);
        // interpolation formula evaluated directly at an interior point
        let mid = 1e-4 + (0.02 - 1e-4) * 499.0 / 999.0;
        assert!((s.beta(500) - mid).abs() < 1e-15);
    }

    #[test]
    fn alpha_bar_starts_at_one() {
        for s in [
            NoiseSchedule::linear(7).unwrap(),
            NoiseSchedule::cosine(7).unwrap(),
        ] {
            assert_eq!(s.alpha_bar(0), 1.0);
            assert_eq!(s.marginal(0).unwrap(), (1.0, 0.0));
        }
    }

    #[test]
    fn two_step_product_by_hand() {
        let s = NoiseSchedule::linear(2).unwrap();
        // 1000/T = 500: beta1 = 0.05, beta2 = 10 clipped to 0.999
        assert!((s.beta(1) - 0.05).abs() < 1e-15);
        assert_eq!(s.beta(2), 0.999);
        let expected = (1.0 - 0.05) * (1.0 - 0.999);
        assert!((s.alpha_bar(2) - expected).abs() < 1e-15);
    }

    #[test]
    fn zero_steps_rejected() {
        assert!(NoiseSchedule::linear(0).is_err());
        assert!(NoiseSchedule::cosine(0).is_err());
        assert!(NoiseSchedule::variance_exploding(0, 0.01, 1.0).is_err());
    }

    #[test]
    fn cosine_is_monotone_and_clipped() {
        let s = NoiseSchedule::cosine(1000).unwrap();
        for t in 1..=1000 {
            assert!(s.alpha_bar(t) < s.alpha_bar(t - 1), "t = {t}");
            assert!(s.beta(t) <= 0.999);
            assert!(s.beta(t) > 0.0);
        }
    }

    #[test]
    fn vp_invariants_hold() {
        for s in [
            NoiseSchedule::linear(1000).unwrap(),
            NoiseSchedule::linear(100).unwrap(),
            NoiseSchedule::cosine(100).unwrap(),
        ] {
            let mut prod = 1.0;
            for t in 1..=s.steps() {
                assert!(s.beta(t) > 0.0 && s.beta(t) < 1.0);
                if t > 1 && s.kind() == ScheduleKind::Linear {
                    assert!(s.beta(t) >= s.beta(t - 1));
                }
                prod *= 1.0 - s.beta(t);
                assert!((s.alpha_bar(t) - prod).abs() <= 1e-15 * prod.max(1e-300));
                let (m, sd) = s.marginal(t).unwrap();
                assert!((m * m + sd * sd - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn terminal_marginal_matches_brute_force_product() {
        let s = NoiseSchedule::linear(1000).unwrap();
        let prod: f64 = (1..=1000)
            .map(|t| 1.0 - (1e-4 + (0.02 - 1e-4) * (t - 1) as f64 / 999.0))
            .product();
        let (m, _) = s.marginal(1000).unwrap();
        assert!((m - prod.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn ve_marginal() {
        let s = NoiseSchedule::variance_exploding(10, 0.5, 8.0).unwrap();
        assert_eq!(s.marginal(0).unwrap(), (1.0, 0.0));
        let (m, sd) = s.marginal(10).unwrap();
        assert_eq!(m, 1.0);
        assert!((sd - (64.0f64 - 0.25).sqrt()).abs() < 1e-12);
        for t in 1..=10 {
            assert!(s.sigma(t) > s.sigma(t - 1));
        }
    }

    #[test]
    fn out_of_range_step() {
        let s = NoiseSchedule::linear(10).unwrap();
        assert!(s.marginal(11).is_err());
    }

    #[test]
    fn transition_composes_with_marginal() {
        let s = NoiseSchedule::linear(50).unwrap();
        let (a_p, s_p) = s.marginal(20).unwrap();
        let (a_t, s_t) = s.marginal(35).unwrap();
        let (scale, var) = s.transition(20, 35).unwrap();
        assert!((scale * a_p - a_t).abs() < 1e-12);
        assert!((scale * scale * s_p * s_p + var - s_t * s_t).abs() < 1e-12);
    }
}
