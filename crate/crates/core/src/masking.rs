//! Random-mask conditioning: which frames are observed, how clean and noisy
//! frames are stitched together, and masked forward corruption.

use std::fmt;

use crate::error::{ensure, Error, Result};
use crate::rng::RandomStream;
use crate::schedule::NoiseSchedule;
use crate::video::VideoTensor;

/// Partition of frame indices `0..len` into conditioning frames `C` and
/// unknown frames `U`. Both lists are sorted.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct MaskSpec {
    len: usize,
    conditioning: Vec<usize>,
    unknown: Vec<usize>,
}

impl MaskSpec {
    pub fn new(len: usize, conditioning: impl IntoIterator<Item = usize>) -> Result<Self> {
        ensure!(len >= 1, InvalidArgument, "mask length must be positive");
        let mut is_cond = vec![false; len];
        for i in conditioning {
            ensure!(
                i < len,
                InvalidArgument,
                "conditioning index {i} outside 0..{len}"
            );
            ensure!(
                !is_cond[i],
                InvalidArgument,
                "duplicate conditioning index {i}"
            );
            is_cond[i] = true;
        }
        let conditioning = (0..len).filter(|&i| is_cond[i]).collect();
        let unknown = (0..len).filter(|&i| !is_cond[i]).collect();
        Ok(Self {
            len,
            conditioning,
            unknown,
        })
    }

    pub fn unconditional(len: usize) -> Result<Self> {
        Self::new(len, [])
    }

    /// Parse a comma-separated index list such as `"0,5,10,15"`. An empty
    /// literal (or `none`) means no conditioning frames.
    pub fn parse(literal: &str, len: usize) -> Result<Self> {
        let trimmed = literal.trim();
        if trimmed.is_empty() || trimmed == "none" {
            return Self::unconditional(len);
        }
        let indices = trimmed
            .split(',')
            .map(|tok| {
                let tok = tok.trim();
                tok.parse::<usize>().map_err(|_| {
                    Error::InvalidArgument(format!("bad frame index '{tok}' in mask '{literal}'"))
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(len, indices)
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn conditioning(&self) -> &[usize] {
        &self.conditioning
    }

    pub fn unknown(&self) -> &[usize] {
        &self.unknown
    }

    pub fn is_conditioning(&self, frame: usize) -> bool {
        self.conditioning.binary_search(&frame).is_ok()
    }

    pub fn is_unconditional(&self) -> bool {
        self.conditioning.is_empty()
    }

    pub(crate) fn check_video(&self, v: &VideoTensor) -> Result<()> {
        ensure!(
            v.frames() == self.len,
            Shape,
            "mask over {} frames applied to a video of {} frames",
            self.len,
            v.frames()
        );
        Ok(())
    }
}

impl fmt::Display for MaskSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.conditioning.iter().map(usize::to_string).collect();
        f.write_str(&parts.join(","))
    }
}

/// Training-time mask law: with probability `p_uncond` no frame is observed,
/// otherwise `k ~ Uniform{1..=max_cond}` frames are drawn uniformly without
/// replacement.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MaskPolicy {
    pub max_cond: usize,
    pub p_uncond: f64,
}

impl MaskPolicy {
    pub fn new(max_cond: usize, p_uncond: f64) -> Result<Self> {
        let policy = Self { max_cond, p_uncond };
        ensure!(max_cond >= 1, InvalidArgument, "K must be at least 1");
        ensure!(
            (0.0..=1.0).contains(&p_uncond),
            InvalidArgument,
            "p_U must lie in [0, 1], got {p_uncond}"
        );
        Ok(policy)
    }

    pub fn validate_for(&self, len: usize) -> Result<()> {
        ensure!(
            self.max_cond >= 1 && self.max_cond < len,
            InvalidArgument,
            "K = {} must satisfy 1 <= K < L = {len}",
            self.max_cond
        );
        ensure!(
            (0.0..=1.0).contains(&self.p_uncond),
            InvalidArgument,
            "p_U must lie in [0, 1], got {}",
            self.p_uncond
        );
        Ok(())
    }
}

pub fn sample_mask(policy: &MaskPolicy, len: usize, rng: &mut RandomStream) -> Result<MaskSpec> {
    policy.validate_for(len)?;
    if rng.bernoulli(policy.p_uncond) {
        return MaskSpec::unconditional(len);
    }
    let k = rng.uniform_int(1, policy.max_cond);
    // partial Fisher-Yates: the first k slots are a uniform k-subset
    let mut perm: Vec<usize> = (0..len).collect();
    for i in 0..k {
        let j = rng.uniform_int(i, len - 1);
        perm.swap(i, j);
    }
    MaskSpec::new(len, perm[..k].iter().copied())
}

/// Frame-wise composition: frame `i` of the result is `unknown_src[i]` for
/// `i` in `U` and `cond_src[i]` for `i` in `C`.
pub fn compose(
    unknown_src: &VideoTensor,
    cond_src: &VideoTensor,
    mask: &MaskSpec,
) -> Result<VideoTensor> {
    unknown_src.ensure_same_shape(cond_src, "compose")?;
    mask.check_video(unknown_src)?;
    let mut out = unknown_src.clone();
    restore_conditioning(&mut out, cond_src, mask);
    Ok(out)
}

/// In-place form of [`compose`]: overwrite the conditioning frames of `dst`.
pub(crate) fn restore_conditioning(dst: &mut VideoTensor, cond_src: &VideoTensor, mask: &MaskSpec) {
    for &i in mask.conditioning() {
        dst.frame_mut(i).copy_from_slice(cond_src.frame(i));
    }
}

/// Masked forward corruption. Returns `(x_t, noise)` where only unknown
/// frames are diffused and `noise` is zero on conditioning frames.
pub fn corrupt(
    x0: &VideoTensor,
    mask: &MaskSpec,
    t: usize,
    schedule: &NoiseSchedule,
    rng: &mut RandomStream,
) -> Result<(VideoTensor, VideoTensor)> {
    mask.check_video(x0)?;
    let (mean_coeff, std) = schedule.marginal(t)?;
    let mut xt = x0.clone();
    let mut noise = VideoTensor::zeros(x0.shape());
    for &i in mask.unknown() {
        let eps = noise.frame_mut(i);
        rng.fill_normal(eps);
        for (x, &e) in xt.frame_mut(i).iter_mut().zip(eps.iter()) {
            *x = mean_coeff * *x + std * e;
        }
    }
    Ok((xt, noise))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::video::VideoShape;
    use proptest::prelude::*;

    fn video(frames: usize, offset: f64) -> VideoTensor {
        let shape = VideoShape::new(frames, 2, 2, 1).unwrap();
        VideoTensor::from_vec(shape, (0..shape.len()).map(|i| i as f64 + offset).collect())
            .unwrap()
    }

    #[test]
    fn parse_literal() {
        let m = MaskSpec::parse("0, 5,10,15", 16).unwrap();
        assert_eq!(m.conditioning(), &[0, 5, 10, 15]);
        assert_eq!(m.unknown().len(), 12);
        assert!(MaskSpec::parse("", 4).unwrap().is_unconditional());
        assert!(MaskSpec::parse("0,16", 16).is_err());
        assert!(MaskSpec::parse("1,1", 16).is_err());
        assert!(MaskSpec::parse("a", 16).is_err());
        assert_eq!(MaskSpec::parse("3,1", 4).unwrap().to_string(), "1,3");
    }

    #[test]
    fn pure_unconditional_policy() {
        let policy = MaskPolicy::new(3, 1.0).unwrap();
        let mut rng = RandomStream::from_seed(1);
        for _ in 0..100 {
            assert!(sample_mask(&policy, 8, &mut rng).unwrap().is_unconditional());
        }
    }

    #[test]
    fn policy_bounds() {
        let mut rng = RandomStream::from_seed(1);
        let policy = MaskPolicy::new(4, 0.5).unwrap();
        assert!(sample_mask(&policy, 4, &mut rng).is_err());
        assert!(MaskPolicy::new(0, 0.5).is_err());
        assert!(MaskPolicy::new(2, 1.5).is_err());
    }

    #[test]
    fn compose_edge_cases() {
        let a = video(4, 0.0);
        let b = video(4, 100.0);
        let none = MaskSpec::unconditional(4).unwrap();
        let all = MaskSpec::new(4, 0..4).unwrap();
        assert_eq!(compose(&a, &b, &none).unwrap(), a);
        assert_eq!(compose(&a, &b, &all).unwrap(), b);
        let m = MaskSpec::new(4, [1, 2]).unwrap();
        assert_eq!(compose(&a, &a, &m).unwrap(), a);
        let c = compose(&a, &b, &m).unwrap();
        assert_eq!(c.frame(0), a.frame(0));
        assert_eq!(c.frame(1), b.frame(1));
        assert!(compose(&a, &video(3, 0.0), &m).is_err());
    }

    #[test]
    fn corrupt_at_step_zero_is_identity() {
        let s = NoiseSchedule::linear(10).unwrap();
        let x0 = video(3, -1.0);
        let mut rng = RandomStream::from_seed(5);
        let m = MaskSpec::new(3, [1]).unwrap();
        let (xt, _) = corrupt(&x0, &m, 0, &s, &mut rng).unwrap();
        assert_eq!(xt, x0);
        assert!(corrupt(&x0, &m, 11, &s, &mut rng).is_err());
    }

    #[test]
    fn corrupt_with_everything_observed() {
        let s = NoiseSchedule::linear(10).unwrap();
        let x0 = video(3, 0.5);
        let mut rng = RandomStream::from_seed(5);
        let m = MaskSpec::new(3, 0..3).unwrap();
        let (xt, noise) = corrupt(&x0, &m, 10, &s, &mut rng).unwrap();
        assert_eq!(xt, x0);
        assert!(noise.as_slice().iter().all(|&v| v == 0.0));
    }

    proptest! {
        #[test]
        fn sampled_masks_partition_frames(
            len in 2usize..20, k_frac in 0.0f64..1.0, p in 0.0f64..=1.0, seed in any::<u64>()
        ) {
            let k = 1 + ((len - 2) as f64 * k_frac) as usize;
            let policy = MaskPolicy::new(k, p).unwrap();
            let mut rng = RandomStream::from_seed(seed);
            let m = sample_mask(&policy, len, &mut rng).unwrap();
            let mut all: Vec<usize> = m.conditioning().iter().chain(m.unknown()).copied().collect();
            all.sort();
            prop_assert_eq!(all, (0..len).collect::<Vec<_>>());
            prop_assert!(m.conditioning().len() <= k);
            prop_assert!(!m.unknown().is_empty());
        }

        #[test]
        fn corrupt_leaves_conditioning_frames_untouched(
            cond in proptest::collection::btree_set(0usize..6, 0..6),
            t in 0usize..=20,
            seed in any::<u64>(),
        ) {
            let s = NoiseSchedule::linear(20).unwrap();
            let x0 = video(6, 0.25);
            let m = MaskSpec::new(6, cond).unwrap();
            let mut rng = RandomStream::from_seed(seed);
            let (xt, noise) = corrupt(&x0, &m, t, &s, &mut rng).unwrap();
            for &i in m.conditioning() {
                prop_assert_eq!(xt.frame(i), x0.frame(i));
                prop_assert!(noise.frame(i).iter().all(|&v| v == 0.0));
            }
            let c = compose(&xt, &x0, &m).unwrap();
            prop_assert_eq!(c, xt);
        }
    }
}
