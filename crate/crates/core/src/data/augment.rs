use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{flip_horizontal, resize_bilinear, EulerPose, Image};

/// Random photometric and resolution perturbations plus mirroring.
///
/// Magnitudes are engineering defaults. Brightness is an additive shift in
/// units of the `[0, 1]` value range.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AugmentationConfig {
    pub downscale_range: [f64; 2],
    pub brightness_delta: f64,
    pub contrast_range: [f64; 2],
    pub blur_sigma_range: [f64; 2],
    pub flip_prob: f64,
    pub seed: u64,
}

impl Default for AugmentationConfig {
    fn default() -> Self {
        Self {
            downscale_range: [0.2, 1.0],
            brightness_delta: 0.25,
            contrast_range: [0.75, 1.25],
            blur_sigma_range: [0.0, 2.0],
            flip_prob: 0.5,
            seed: 0,
        }
    }
}

impl AugmentationConfig {
    /// Leaves every input unchanged.
    pub fn identity() -> Self {
        Self {
            downscale_range: [1.0, 1.0],
            brightness_delta: 0.0,
            contrast_range: [1.0, 1.0],
            blur_sigma_range: [0.0, 0.0],
            flip_prob: 0.0,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let interval = |name: &str, [lo, hi]: [f64; 2], min: f64| {
            if lo.is_finite() && hi.is_finite() && lo <= hi && lo >= min {
                Ok(())
            } else {
                Err(Error::config(format!("augment.{name} [{lo}, {hi}] must be an ordered interval with lower bound >= {min}")))
            }
        };
        interval("downscale_range", self.downscale_range, f64::MIN_POSITIVE)?;
        if self.downscale_range[1] > 1.0 {
            return Err(Error::config("augment.downscale_range must not exceed 1"));
        }
        interval("contrast_range", self.contrast_range, 0.0)?;
        interval("blur_sigma_range", self.blur_sigma_range, 0.0)?;
        if !(self.brightness_delta >= 0.0 && self.brightness_delta.is_finite()) {
            return Err(Error::config("augment.brightness_delta must be a non-negative number"));
        }
        if !(0.0..=1.0).contains(&self.flip_prob) {
            return Err(Error::config("augment.flip_prob must lie in [0, 1]"));
        }
        Ok(())
    }
}

/// Generator for one sample in one epoch, independent of processing order.
pub fn sample_rng(seed: u64, epoch: u64, index: u64) -> ChaCha8Rng {
    let mut h = seed ^ 0x9E37_79B9_7F4A_7C15;
    for v in [epoch, index] {
        h = splitmix(h ^ v.wrapping_mul(0xD1B5_4A32_D192_ED03));
    }
    ChaCha8Rng::seed_from_u64(h)
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Debug, Clone)]
pub struct Augmented {
    pub image: Image,
    pub pose: EulerPose,
    pub flipped: bool,
}

fn uniform<R: Rng + ?Sized>(rng: &mut R, [lo, hi]: [f64; 2]) -> f64 {
    if lo == hi {
        lo
    } else {
        rng.random_range(lo..hi)
    }
}

/// Resolution jitter, brightness/contrast, Gaussian blur, then a random flip.
pub fn augment<R: Rng + ?Sized>(image: &Image, pose: &EulerPose, cfg: &AugmentationConfig, rng: &mut R) -> (Image, EulerPose) {
    let a = augment_detailed(image, pose, cfg, rng);
    (a.image, a.pose)
}

pub fn augment_detailed<R: Rng + ?Sized>(image: &Image, pose: &EulerPose, cfg: &AugmentationConfig, rng: &mut R) -> Augmented {
    // every draw happens unconditionally so the stream layout is config-independent
    let scale = uniform(rng, cfg.downscale_range);
    let brightness = uniform(rng, [-cfg.brightness_delta, cfg.brightness_delta]);
    let contrast = uniform(rng, cfg.contrast_range);
    let sigma = uniform(rng, cfg.blur_sigma_range);
    let flip = rng.random::<f64>() < cfg.flip_prob;

    let (w, h) = (image.width(), image.height());
    let mut out = image.clone();
    if scale < 1.0 {
        let sw = ((scale * w as f64).floor() as usize).max(1);
        let sh = ((scale * h as f64).floor() as usize).max(1);
        out = resize_bilinear(&resize_bilinear(&out, sw, sh), w, h);
    }
    if brightness != 0.0 || contrast != 1.0 {
        let mean = out.data().iter().map(|&v| v as f64).sum::<f64>() / out.data().len().max(1) as f64;
        for v in out.data_mut() {
            *v = (((*v as f64 - mean) * contrast + mean + brightness) as f32).clamp(0.0, 1.0);
        }
    }
    if sigma > 0.0 {
        out = gaussian_blur(&out, sigma);
    }
    let mut pose = *pose;
    if flip {
        (out, pose) = flip_horizontal(&out, &pose);
    }
    Augmented { image: out, pose, flipped: flip }
}

/// Separable Gaussian blur with a `ceil(3 sigma)` radius and clamped edges.
pub(crate) fn gaussian_blur(image: &Image, sigma: f64) -> Image {
    let radius = (3.0 * sigma).ceil() as isize;
    let mut kernel: Vec<f64> = (-radius..=radius).map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp()).collect();
    let total: f64 = kernel.iter().sum();
    kernel.iter_mut().for_each(|k| *k /= total);
    let (w, h) = (image.width() as isize, image.height() as isize);
    let pass = |src: &Image, horizontal: bool| {
        let mut dst = Image::new(src.width(), src.height());
        for y in 0..h {
            for x in 0..w {
                let mut acc = [0.0f64; 3];
                for (k, weight) in kernel.iter().enumerate() {
                    let o = k as isize - radius;
                    let (sx, sy) = if horizontal { ((x + o).clamp(0, w - 1), y) } else { (x, (y + o).clamp(0, h - 1)) };
                    let p = src.pixel(sx as usize, sy as usize);
                    for c in 0..3 {
                        acc[c] += weight * p[c] as f64;
                    }
                }
                dst.set_pixel(x as usize, y as usize, acc.map(|v| v as f32));
            }
        }
        dst
    };
    pass(&pass(image, true), false)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;

    fn sample_image(seed: u64) -> Image {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data = (0..32 * 32 * 3).map(|_| rng.random::<f32>()).collect();
        Image::from_vec(32, 32, data).unwrap()
    }

    #[test]
    fn identity_config_is_identity() {
        let img = sample_image(1);
        let pose = EulerPose::new(12.0, -3.0, 40.0);
        let (out, p) = augment(&img, &pose, &AugmentationConfig::identity(), &mut sample_rng(0, 0, 0));
        assert_eq!(out, img);
        assert_eq!(p, pose);
    }

    #[test]
    fn certain_flip_negates_yaw_and_roll() {
        let cfg = AugmentationConfig {
            flip_prob: 1.0,
            ..AugmentationConfig::identity()
        };
        let (_, p) = augment(&sample_image(2), &EulerPose::new(30.0, 10.0, -5.0), &cfg, &mut sample_rng(1, 2, 3));
        assert_eq!(p, EulerPose::new(-30.0, 10.0, 5.0));
    }

    #[test]
    fn same_seed_same_output() {
        let img = sample_image(3);
        let pose = EulerPose::new(1.0, 2.0, 3.0);
        let cfg = AugmentationConfig::default();
        let a = augment(&img, &pose, &cfg, &mut sample_rng(7, 1, 42));
        let b = augment(&img, &pose, &cfg, &mut sample_rng(7, 1, 42));
        assert_eq!(a, b);
        let c = augment(&img, &pose, &cfg, &mut sample_rng(7, 2, 42));
        assert_ne!(a.0, c.0);
    }

    #[test]
    fn photometric_output_stays_in_range() {
        let cfg = AugmentationConfig {
            brightness_delta: 0.9,
            contrast_range: [2.0, 3.0],
            ..AugmentationConfig::default()
        };
        for i in 0..8 {
            let (out, _) = augment(&sample_image(i), &EulerPose::default(), &cfg, &mut sample_rng(0, 0, i));
            assert!(out.data().iter().all(|v| (0.0..=1.0).contains(v)));
        }
    }

    #[test]
    fn blur_preserves_constants() {
        let img = Image::filled(9, 7, [0.2, 0.4, 0.6]);
        let out = gaussian_blur(&img, 1.3);
        for (a, b) in out.data().iter().zip(img.data()) {
            assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn config_validation() {
        assert!(AugmentationConfig::default().validate().is_ok());
        let bad = AugmentationConfig {
            flip_prob: 1.5,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        let bad = AugmentationConfig {
            contrast_range: [1.2, 0.8],
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn pose_changes_only_by_flip(seed in any::<u64>(), yaw in -90.0f64..90.0, pitch in -90.0f64..90.0, roll in -90.0f64..90.0) {
            let pose = EulerPose::new(yaw, pitch, roll);
            let a = augment_detailed(&Image::filled(16, 16, [0.5; 3]), &pose, &AugmentationConfig::default(), &mut sample_rng(seed, 0, 0));
            prop_assert_eq!(a.pose.pitch, pitch);
            if a.flipped {
                prop_assert_eq!(a.pose, pose.mirrored());
            } else {
                prop_assert_eq!(a.pose, pose);
            }
        }
    }
}
