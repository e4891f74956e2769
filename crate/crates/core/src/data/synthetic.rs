//! Procedural images whose pose is readable from the pixels.
//!
//! Each `112 x 112` image is black with three single-channel marks:
//!
//! * red: a vertical bar, 6 px wide, spanning rows `[16, 96)`, centered at
//!   `x = 56 + 0.4 * yaw`;
//! * green: a horizontal bar, 6 px tall, spanning columns `[16, 96)`,
//!   centered at `y = 56 + 0.4 * pitch`;
//! * blue: a 40 px long, 6 px wide hand from `(56, 56)` in direction
//!   `(sin roll, -cos roll)`, so roll 0 points straight up.
//!
//! Pixel `(x, y)` covers `[x, x+1) x [y, y+1)`; values are exact area
//! coverage for the bars and 4x4 supersampled coverage for the hand.
//! Mirroring the image yields the rendering of `(-yaw, pitch, -roll)`.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{InMemoryDataset, PoseDataset, SampleRecord, Split};
use crate::error::{Error, Result};
use crate::geometry::{BoundingBox, EulerPose, Image};

pub const SYNTHETIC_SIZE: usize = 112;
pub const SYNTHETIC_CENTER: f64 = 56.0;
pub const SYNTHETIC_PIXELS_PER_DEGREE: f64 = 0.4;
pub const SYNTHETIC_BAR_HALF_WIDTH: f64 = 3.0;
pub const SYNTHETIC_HAND_LENGTH: f64 = 40.0;
pub const SYNTHETIC_ANGLE_LIMIT: f64 = 90.0;
const BAR_SPAN: (usize, usize) = (16, 96);
const SUPERSAMPLE: usize = 4;

fn overlap(a0: f64, a1: f64, b0: f64, b1: f64) -> f64 {
    (a1.min(b1) - a0.max(b0)).max(0.0)
}

pub fn render_synthetic(pose: &EulerPose) -> Image {
    let n = SYNTHETIC_SIZE;
    let mut img = Image::new(n, n);
    let hw = SYNTHETIC_BAR_HALF_WIDTH;
    let cx = SYNTHETIC_CENTER + SYNTHETIC_PIXELS_PER_DEGREE * pose.yaw;
    let cy = SYNTHETIC_CENTER + SYNTHETIC_PIXELS_PER_DEGREE * pose.pitch;
    let data = img.data_mut();
    for i in BAR_SPAN.0..BAR_SPAN.1 {
        for j in 0..n {
            // red: row i, column j
            let red = overlap(j as f64, j as f64 + 1.0, cx - hw, cx + hw);
            data[(i * n + j) * 3] = red as f32;
            // green: row j, column i
            let green = overlap(j as f64, j as f64 + 1.0, cy - hw, cy + hw);
            data[(j * n + i) * 3 + 1] = green as f32;
        }
    }

    let roll = pose.roll.to_radians();
    let (dx, dy) = (roll.sin(), -roll.cos());
    let (c0, c1) = (SYNTHETIC_CENTER, SYNTHETIC_CENTER);
    let (ex, ey) = (c0 + SYNTHETIC_HAND_LENGTH * dx, c1 + SYNTHETIC_HAND_LENGTH * dy);
    let clip = |v: f64| (v.max(0.0) as usize).min(n);
    let (x0, x1) = (clip(c0.min(ex) - hw - 1.0), clip(c0.max(ex) + hw + 2.0));
    let (y0, y1) = (clip(c1.min(ey) - hw - 1.0), clip(c1.max(ey) + hw + 2.0));
    let step = 1.0 / SUPERSAMPLE as f64;
    for y in y0..y1 {
        for x in x0..x1 {
            let mut hits = 0;
            for sy in 0..SUPERSAMPLE {
                for sx in 0..SUPERSAMPLE {
                    let px = x as f64 + (sx as f64 + 0.5) * step - c0;
                    let py = y as f64 + (sy as f64 + 0.5) * step - c1;
                    let along = px * dx + py * dy;
                    let across = px * dy - py * dx;
                    if (0.0..=SYNTHETIC_HAND_LENGTH).contains(&along) && across.abs() <= hw {
                        hits += 1;
                    }
                }
            }
            img.data_mut()[(y * n + x) * 3 + 2] = hits as f32 / (SUPERSAMPLE * SUPERSAMPLE) as f32;
        }
    }
    img
}

/// Recovers the pose from the channel centroids of a rendering.
pub fn decode_synthetic(image: &Image) -> Option<EulerPose> {
    let mut sums = [[0.0f64; 3]; 3];
    for y in 0..image.height() {
        for x in 0..image.width() {
            let p = image.pixel(x, y);
            for c in 0..3 {
                let w = p[c] as f64;
                sums[c][0] += w;
                sums[c][1] += w * (x as f64 + 0.5);
                sums[c][2] += w * (y as f64 + 0.5);
            }
        }
    }
    if sums.iter().any(|s| s[0] <= 0.0) {
        return None;
    }
    let centroid = |c: usize| (sums[c][1] / sums[c][0], sums[c][2] / sums[c][0]);
    let (rx, _) = centroid(0);
    let (_, gy) = centroid(1);
    let (bx, by) = centroid(2);
    Some(EulerPose::new(
        (rx - SYNTHETIC_CENTER) / SYNTHETIC_PIXELS_PER_DEGREE,
        (gy - SYNTHETIC_CENTER) / SYNTHETIC_PIXELS_PER_DEGREE,
        (bx - SYNTHETIC_CENTER).atan2(-(by - SYNTHETIC_CENTER)).to_degrees(),
    ))
}

/// `n` renderings with poses drawn uniformly from `[-90, 90]^3`.
pub fn make_synthetic_dataset(n: usize, seed: u64) -> Result<InMemoryDataset> {
    if n == 0 {
        return Err(Error::invalid("data", "synthetic dataset size must be positive"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let lim = SYNTHETIC_ANGLE_LIMIT;
    let poses: Vec<EulerPose> = (0..n)
        .map(|_| EulerPose::new(rng.random_range(-lim..=lim), rng.random_range(-lim..=lim), rng.random_range(-lim..=lim)))
        .collect();
    let images: Vec<Image> = {
        use rayon::prelude::*;
        poses.par_iter().map(render_synthetic).collect()
    };
    let mut ds = InMemoryDataset::new();
    for (i, (img, pose)) in images.into_iter().zip(poses).enumerate() {
        ds.push(format!("synthetic-{i:05}.png"), img, pose);
    }
    Ok(ds)
}

/// Writes PNGs plus an annotation list with whole-image boxes; the last
/// `test_count` samples are marked as the test split.
pub fn export_synthetic(dataset: &InMemoryDataset, dir: &Path, test_count: usize) -> Result<Vec<SampleRecord>> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let n = dataset.len();
    let mut records = Vec::with_capacity(n);
    for i in 0..n {
        let path = dir.join(dataset.id(i));
        dataset.image(i).save(&path)?;
        records.push(SampleRecord {
            id: dataset.id(i).to_string(),
            image_path: path,
            bbox: BoundingBox::new(0, 0, SYNTHETIC_SIZE as i64, SYNTHETIC_SIZE as i64)?,
            pose: dataset.pose(i),
            split: if i + test_count >= n { Split::Test } else { Split::Train },
            source: "synthetic".into(),
        });
    }
    Ok(records)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::flip_horizontal;

    #[test]
    fn canonical_configuration() {
        let img = render_synthetic(&EulerPose::default());
        // red bar covers columns 53..59 on rows 16..96
        assert_eq!(img.pixel(53, 16)[0], 1.0);
        assert_eq!(img.pixel(58, 95)[0], 1.0);
        assert_eq!(img.pixel(52, 50)[0], 0.0);
        assert_eq!(img.pixel(59, 50)[0], 0.0);
        assert_eq!(img.pixel(55, 15)[0], 0.0);
        // green bar covers rows 53..59 on columns 16..96
        assert_eq!(img.pixel(16, 53)[1], 1.0);
        assert_eq!(img.pixel(95, 58)[1], 1.0);
        assert_eq!(img.pixel(50, 52)[1], 0.0);
        // blue hand points up from the center
        assert_eq!(img.pixel(55, 30)[2], 1.0);
        assert_eq!(img.pixel(55, 70)[2], 0.0);
        assert_eq!(img.pixel(70, 50)[2], 0.0);
    }

    #[test]
    fn deterministic() {
        let a = make_synthetic_dataset(20, 7).unwrap();
        let b = make_synthetic_dataset(20, 7).unwrap();
        for i in 0..20 {
            assert_eq!(a.image(i), b.image(i));
            assert_eq!(a.pose(i), b.pose(i));
        }
        assert!(make_synthetic_dataset(0, 7).is_err());
    }

    #[test]
    fn rendering_is_flip_consistent() {
        let pose = EulerPose::new(33.0, -12.0, 71.0);
        let (flipped, p) = flip_horizontal(&render_synthetic(&pose), &pose);
        let direct = render_synthetic(&p);
        for (a, b) in flipped.data().iter().zip(direct.data()) {
            assert!((a - b).abs() < 1e-6);
        }
    }
}
