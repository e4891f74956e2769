//! Face-box squaring, cropping and the horizontal-flip label transform.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const MODULE: &str = "geometry";

/// Axis-aligned face box in pixel coordinates (`x` right, `y` down).
///
/// Coordinates may fall outside the image; out-of-image regions are
/// zero-filled when cropping.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BoundingBox {
    pub x1: i64,
    pub y1: i64,
    pub x2: i64,
    pub y2: i64,
}

impl BoundingBox {
    pub fn new(x1: i64, y1: i64, x2: i64, y2: i64) -> Result<Self> {
        let b = Self { x1, y1, x2, y2 };
        b.validate()?;
        Ok(b)
    }

    pub fn validate(&self) -> Result<()> {
        if self.x2 > self.x1 && self.y2 > self.y1 {
            Ok(())
        } else {
            Err(Error::invalid(
                MODULE,
                format!("degenerate box ({}, {}, {}, {}): width and height must be positive", self.x1, self.y1, self.x2, self.y2),
            ))
        }
    }

    pub fn width(&self) -> i64 {
        self.x2 - self.x1
    }

    pub fn height(&self) -> i64 {
        self.y2 - self.y1
    }

    pub fn is_square(&self) -> bool {
        self.width() == self.height()
    }

    pub fn contains(&self, other: &BoundingBox) -> bool {
        self.x1 <= other.x1 && self.y1 <= other.y1 && self.x2 >= other.x2 && self.y2 >= other.y2
    }

    /// Center in continuous pixel coordinates.
    pub fn center(&self) -> (f64, f64) {
        ((self.x1 + self.x2) as f64 / 2.0, (self.y1 + self.y2) as f64 / 2.0)
    }
}

/// Head orientation in degrees.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct EulerPose {
    pub yaw: f64,
    pub pitch: f64,
    pub roll: f64,
}

impl EulerPose {
    pub const fn new(yaw: f64, pitch: f64, roll: f64) -> Self {
        Self { yaw, pitch, roll }
    }

    pub fn from_array(a: [f64; 3]) -> Self {
        Self::new(a[0], a[1], a[2])
    }

    /// `[yaw, pitch, roll]`.
    pub fn to_array(self) -> [f64; 3] {
        [self.yaw, self.pitch, self.roll]
    }

    pub fn is_finite(&self) -> bool {
        self.to_array().iter().all(|v| v.is_finite())
    }

    /// Largest absolute component.
    pub fn max_abs(&self) -> f64 {
        self.to_array().iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Pose label of the horizontally mirrored image.
    pub fn mirrored(self) -> Self {
        Self::new(-self.yaw, self.pitch, -self.roll)
    }
}

/// Interleaved RGB image with `f32` samples, row-major, `y` down.
///
/// Images loaded from disk hold values in `[0, 1]`; the operations in this
/// module never rescale values.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    width: usize,
    height: usize,
    data: Vec<f32>,
}

impl Image {
    pub fn new(width: usize, height: usize) -> Self {
        Self::filled(width, height, [0.0; 3])
    }

    pub fn filled(width: usize, height: usize, rgb: [f32; 3]) -> Self {
        let mut data = Vec::with_capacity(width * height * 3);
        for _ in 0..width * height {
            data.extend_from_slice(&rgb);
        }
        Self { width, height, data }
    }

    pub fn from_vec(width: usize, height: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != width * height * 3 {
            return Err(Error::invalid(
                MODULE,
                format!("{} samples do not form a {width}x{height} RGB image", data.len()),
            ));
        }
        Ok(Self { width, height, data })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn pixel(&self, x: usize, y: usize) -> [f32; 3] {
        let i = (y * self.width + x) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    pub fn set_pixel(&mut self, x: usize, y: usize, rgb: [f32; 3]) {
        let i = (y * self.width + x) * 3;
        self.data[i..i + 3].copy_from_slice(&rgb);
    }

    /// Pixel value, or zeros outside the image.
    fn pixel_or_zero(&self, x: i64, y: i64) -> [f32; 3] {
        if x < 0 || y < 0 || x >= self.width as i64 || y >= self.height as i64 {
            [0.0; 3]
        } else {
            self.pixel(x as usize, y as usize)
        }
    }

    pub fn open(path: &Path) -> Result<Self> {
        let img = image::open(path).map_err(|source| Error::Image {
            path: path.to_path_buf(),
            source,
        })?;
        Ok(Self::from_rgb8(&img.to_rgb8()))
    }

    pub fn from_rgb8(img: &image::RgbImage) -> Self {
        let data = img.as_raw().iter().map(|&v| v as f32 / 255.0).collect();
        Self {
            width: img.width() as usize,
            height: img.height() as usize,
            data,
        }
    }

    /// Quantizes to 8 bits, clamping to `[0, 1]`.
    pub fn to_rgb8(&self) -> image::RgbImage {
        let raw = self.data.iter().map(|&v| (v.clamp(0.0, 1.0) * 255.0).round() as u8).collect();
        image::RgbImage::from_raw(self.width as u32, self.height as u32, raw).expect("buffer matches dimensions")
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.to_rgb8().save(path).map_err(|source| Error::Image {
            path: path.to_path_buf(),
            source,
        })
    }
}

/// Pads the shorter side of `b` so the box becomes square.
///
/// With `k = |w - h|`, the short axis grows by `floor(k/2)` on its low side and
/// `k - floor(k/2)` on its high side; the long axis is untouched.
pub fn square_box(b: &BoundingBox) -> Result<BoundingBox> {
    b.validate()?;
    let (w, h) = (b.width(), b.height());
    let k = (w - h).abs();
    let low = k / 2;
    let high = k - low;
    Ok(if w > h {
        BoundingBox {
            y1: b.y1 - low,
            y2: b.y2 + high,
            ..*b
        }
    } else {
        BoundingBox {
            x1: b.x1 - low,
            x2: b.x2 + high,
            ..*b
        }
    })
}

/// Result of [`crop_and_resize`].
#[derive(Debug, Clone)]
pub struct Crop {
    pub image: Image,
    /// The box did not overlap the image at all; the crop is all zeros.
    pub empty_intersection: bool,
}

/// Extracts the square region under `b` (zero outside the image) and
/// bilinearly resamples it to `size x size`.
pub fn crop_and_resize(image: &Image, b: &BoundingBox, size: usize) -> Result<Crop> {
    b.validate()?;
    if !b.is_square() {
        return Err(Error::invalid(MODULE, format!("crop box {b:?} is not square; call square_box first")));
    }
    if size == 0 {
        return Err(Error::invalid(MODULE, "crop size must be positive"));
    }
    let empty = b.x2 <= 0 || b.y2 <= 0 || b.x1 >= image.width as i64 || b.y1 >= image.height as i64;
    if empty {
        log::warn!("crop box {b:?} does not intersect the {}x{} image", image.width, image.height);
        return Ok(Crop {
            image: Image::new(size, size),
            empty_intersection: true,
        });
    }
    let side = b.width() as usize;
    let mut region = Image::new(side, side);
    for y in 0..side {
        for x in 0..side {
            region.set_pixel(x, y, image.pixel_or_zero(b.x1 + x as i64, b.y1 + y as i64));
        }
    }
    Ok(Crop {
        image: resize_bilinear(&region, size, size),
        empty_intersection: false,
    })
}

/// Bilinear resampling with pixel-center alignment and edge clamping.
pub fn resize_bilinear(src: &Image, out_w: usize, out_h: usize) -> Image {
    if src.width == out_w && src.height == out_h {
        return src.clone();
    }
    let taps = |out: usize, inp: usize| -> Vec<(usize, usize, f32)> {
        let scale = inp as f64 / out as f64;
        (0..out)
            .map(|o| {
                let s = ((o as f64 + 0.5) * scale - 0.5).clamp(0.0, (inp - 1) as f64);
                let i0 = s.floor() as usize;
                let i1 = (i0 + 1).min(inp - 1);
                (i0, i1, (s - i0 as f64) as f32)
            })
            .collect()
    };
    let xs = taps(out_w, src.width);
    let ys = taps(out_h, src.height);
    let mut out = Image::new(out_w, out_h);
    for (oy, &(y0, y1, fy)) in ys.iter().enumerate() {
        for (ox, &(x0, x1, fx)) in xs.iter().enumerate() {
            let (a, b, c, d) = (src.pixel(x0, y0), src.pixel(x1, y0), src.pixel(x0, y1), src.pixel(x1, y1));
            let mut px = [0.0f32; 3];
            for ch in 0..3 {
                let top = a[ch] + (b[ch] - a[ch]) * fx;
                let bottom = c[ch] + (d[ch] - c[ch]) * fx;
                px[ch] = top + (bottom - top) * fy;
            }
            out.set_pixel(ox, oy, px);
        }
    }
    out
}

/// Mirrors the image about its vertical axis and relabels `(yaw, pitch, roll)`
/// as `(-yaw, pitch, -roll)`.
pub fn flip_horizontal(image: &Image, pose: &EulerPose) -> (Image, EulerPose) {
    let mut out = Image::new(image.width, image.height);
    for y in 0..image.height {
        for x in 0..image.width {
            out.set_pixel(image.width - 1 - x, y, image.pixel(x, y));
        }
    }
    (out, pose.mirrored())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn bb(x1: i64, y1: i64, x2: i64, y2: i64) -> BoundingBox {
        BoundingBox::new(x1, y1, x2, y2).unwrap()
    }

    #[test]
    fn square_box_examples() {
        assert_eq!(square_box(&bb(10, 20, 110, 60)).unwrap(), bb(10, -10, 110, 90));
        assert_eq!(square_box(&bb(5, 5, 55, 55)).unwrap(), bb(5, 5, 55, 55));
        assert_eq!(square_box(&bb(0, 0, 5, 2)).unwrap(), bb(0, -1, 5, 4));
        // tall box pads horizontally
        assert_eq!(square_box(&bb(0, 0, 2, 5)).unwrap(), bb(-1, 0, 4, 5));
    }

    #[test]
    fn degenerate_boxes_are_rejected() {
        let flat = BoundingBox { x1: 0, y1: 3, x2: 10, y2: 3 };
        assert!(matches!(square_box(&flat), Err(Error::InvalidInput { .. })));
        assert!(BoundingBox::new(4, 0, 4, 9).is_err());
    }

    #[test]
    fn identity_crop_when_side_equals_size() {
        let mut img = Image::new(20, 16);
        for (i, v) in img.data_mut().iter_mut().enumerate() {
            *v = (i % 251) as f32 / 251.0;
        }
        let crop = crop_and_resize(&img, &bb(3, 2, 15, 14), 12).unwrap();
        for y in 0..12 {
            for x in 0..12 {
                assert_eq!(crop.image.pixel(x, y), img.pixel(x + 3, y + 2));
            }
        }
    }

    #[test]
    fn constant_image_stays_constant_when_downsampled() {
        let img = Image::filled(300, 300, [0.25, 0.5, 0.75]);
        let crop = crop_and_resize(&img, &bb(10, 10, 234, 234), 112).unwrap();
        assert!(crop.image.data().chunks(3).all(|p| p == [0.25, 0.5, 0.75]));
    }

    #[test]
    fn half_outside_box_gives_half_white_half_zero() {
        let img = Image::filled(100, 100, [1.0; 3]);
        // left half of the box lies left of the image
        let size = 32;
        let crop = crop_and_resize(&img, &bb(-20, 30, 20, 70), size).unwrap();
        let mut expected = Image::new(size, size);
        for y in 0..size {
            for x in size / 2..size {
                expected.set_pixel(x, y, [1.0; 3]);
            }
        }
        for y in 0..size {
            for x in 0..size {
                let got = crop.image.pixel(x, y)[0];
                let want = expected.pixel(x, y)[0];
                // only the column pair straddling the seam may differ
                if !(size / 2 - 1..=size / 2).contains(&x) {
                    assert_eq!(got, want, "pixel ({x}, {y})");
                }
            }
        }
    }

    #[test]
    fn box_outside_image_is_flagged() {
        let img = Image::filled(10, 10, [1.0; 3]);
        let crop = crop_and_resize(&img, &bb(20, 20, 30, 30), 8).unwrap();
        assert!(crop.empty_intersection);
        assert!(crop.image.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn non_square_crop_is_rejected() {
        let img = Image::new(10, 10);
        assert!(crop_and_resize(&img, &bb(0, 0, 4, 5), 8).is_err());
    }

    #[test]
    fn flip_examples() {
        let img = Image::new(4, 4);
        assert_eq!(flip_horizontal(&img, &EulerPose::new(30.0, 10.0, -5.0)).1, EulerPose::new(-30.0, 10.0, 5.0));
        assert_eq!(flip_horizontal(&img, &EulerPose::new(0.0, 20.0, 0.0)).1, EulerPose::new(0.0, 20.0, 0.0));
    }

    proptest! {
        #[test]
        fn square_box_properties(x1 in -500i64..500, y1 in -500i64..500, w in 1i64..400, h in 1i64..400) {
            let b = bb(x1, y1, x1 + w, y1 + h);
            let s = square_box(&b).unwrap();
            prop_assert!(s.is_square());
            prop_assert_eq!(s.width(), w.max(h));
            prop_assert!(s.contains(&b));
            prop_assert_eq!(square_box(&s).unwrap(), s);
            if w >= h {
                prop_assert_eq!((s.x1, s.x2), (b.x1, b.x2));
            } else {
                prop_assert_eq!((s.y1, s.y2), (b.y1, b.y2));
            }
        }

        #[test]
        fn flip_is_an_involution(w in 1usize..12, h in 1usize..12, seed in any::<u64>(), yaw in -180.0f64..180.0, pitch in -180.0f64..180.0, roll in -180.0f64..180.0) {
            let data: Vec<f32> = (0..w * h * 3).map(|i| ((i as u64).wrapping_mul(seed | 1) % 1000) as f32 / 1000.0).collect();
            let img = Image::from_vec(w, h, data).unwrap();
            let pose = EulerPose::new(yaw, pitch, roll);
            let (fi, fp) = flip_horizontal(&img, &pose);
            let (bi, bp) = flip_horizontal(&fi, &fp);
            prop_assert_eq!(bi, img);
            prop_assert_eq!(bp, pose);
        }
    }
}
