//! Head-axis overlay.
//!
//! Camera frame: `x` right, `y` down, `z` away from the viewer. A frontal
//! face has its side axis along `+x`, its down axis along `+y` and its front
//! axis along `-z` (towards the camera). The head rotation is
//!
//! ```text
//! R = Ry(yaw) * Rx(pitch) * Rz(roll)
//!
//! Ry(a) = [ cos a  0  sin a ]   Rx(b) = [ 1    0       0   ]   Rz(c) = [ cos c  -sin c  0 ]
//!         [   0    1    0   ]           [ 0  cos b  -sin b ]           [ sin c   cos c  0 ]
//!         [-sin a  0  cos a ]           [ 0  sin b   cos b ]           [   0       0    1 ]
//! ```
//!
//! i.e. intrinsic yaw, then pitch, then roll. Rotated axes are projected
//! orthographically onto the image plane from the box center, scaled to half
//! the box side.

use crate::geometry::{BoundingBox, EulerPose, Image};

pub const SIDE_COLOR: [f32; 3] = [1.0, 0.0, 0.0];
pub const DOWN_COLOR: [f32; 3] = [0.0, 1.0, 0.0];
pub const FRONT_COLOR: [f32; 3] = [0.0, 0.0, 1.0];

pub fn rotation_matrix(pose: &EulerPose) -> [[f64; 3]; 3] {
    let (sa, ca) = pose.yaw.to_radians().sin_cos();
    let (sb, cb) = pose.pitch.to_radians().sin_cos();
    let (sc, cc) = pose.roll.to_radians().sin_cos();
    let ry = [[ca, 0.0, sa], [0.0, 1.0, 0.0], [-sa, 0.0, ca]];
    let rx = [[1.0, 0.0, 0.0], [0.0, cb, -sb], [0.0, sb, cb]];
    let rz = [[cc, -sc, 0.0], [sc, cc, 0.0], [0.0, 0.0, 1.0]];
    matmul(&matmul(&ry, &rx), &rz)
}

fn matmul(a: &[[f64; 3]; 3], b: &[[f64; 3]; 3]) -> [[f64; 3]; 3] {
    std::array::from_fn(|i| std::array::from_fn(|j| (0..3).map(|k| a[i][k] * b[k][j]).sum()))
}

/// Projected axis segments in pixel coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AxisLines {
    pub origin: (f64, f64),
    pub side: (f64, f64),
    pub down: (f64, f64),
    pub front: (f64, f64),
}

pub fn axis_lines(bbox: &BoundingBox, pose: &EulerPose) -> AxisLines {
    let r = rotation_matrix(pose);
    let origin = bbox.center();
    let len = 0.5 * bbox.width().max(bbox.height()) as f64;
    let tip = |v: [f64; 3]| {
        let x = r[0][0] * v[0] + r[0][1] * v[1] + r[0][2] * v[2];
        let y = r[1][0] * v[0] + r[1][1] * v[1] + r[1][2] * v[2];
        (origin.0 + len * x, origin.1 + len * y)
    };
    AxisLines {
        origin,
        side: tip([1.0, 0.0, 0.0]),
        down: tip([0.0, 1.0, 0.0]),
        front: tip([0.0, 0.0, -1.0]),
    }
}

/// Copy of `image` with the side (red), down (green) and front (blue) axes drawn.
pub fn draw_axes(image: &Image, bbox: &BoundingBox, pose: &EulerPose) -> Image {
    let lines = axis_lines(bbox, pose);
    let thickness = (bbox.width().max(bbox.height()) as f64 / 100.0).ceil().max(1.0) as i64;
    let mut out = image.clone();
    for (end, color) in [(lines.side, SIDE_COLOR), (lines.down, DOWN_COLOR), (lines.front, FRONT_COLOR)] {
        draw_line(&mut out, lines.origin, end, thickness, color);
    }
    out
}

fn draw_line(img: &mut Image, a: (f64, f64), b: (f64, f64), thickness: i64, color: [f32; 3]) {
    let steps = ((b.0 - a.0).abs().max((b.1 - a.1).abs()) * 2.0).ceil().max(1.0) as usize;
    let half = thickness / 2;
    for i in 0..=steps {
        let t = i as f64 / steps as f64;
        let x = (a.0 + t * (b.0 - a.0)).floor() as i64;
        let y = (a.1 + t * (b.1 - a.1)).floor() as i64;
        for dy in -half..thickness - half {
            for dx in -half..thickness - half {
                let (px, py) = (x + dx, y + dy);
                if px >= 0 && py >= 0 && (px as usize) < img.width() && (py as usize) < img.height() {
                    img.set_pixel(px as usize, py as usize, color);
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bb() -> BoundingBox {
        BoundingBox::new(0, 0, 100, 100).unwrap()
    }

    #[test]
    fn identity_pose_axes() {
        let l = axis_lines(&bb(), &EulerPose::default());
        assert_eq!(l.origin, (50.0, 50.0));
        assert_eq!(l.side, (100.0, 50.0));
        assert_eq!(l.down, (50.0, 100.0));
        assert_eq!(l.front, (50.0, 50.0));
    }

    #[test]
    fn opposite_yaws_mirror_the_front_axis() {
        let a = axis_lines(&bb(), &EulerPose::new(90.0, 0.0, 0.0));
        let b = axis_lines(&bb(), &EulerPose::new(-90.0, 0.0, 0.0));
        assert!((a.front.0 - 50.0 + (b.front.0 - 50.0)).abs() < 1e-9);
        assert!((a.front.1 - b.front.1).abs() < 1e-9);
        assert!((a.front.0 - 0.0).abs() < 1e-9);
    }

    #[test]
    fn drawing_colours_the_endpoints() {
        let img = draw_axes(&Image::new(120, 120), &bb(), &EulerPose::default());
        assert_eq!(img.pixel(90, 50), SIDE_COLOR);
        assert_eq!(img.pixel(50, 90), DOWN_COLOR);
        assert_eq!(img.pixel(10, 10), [0.0; 3]);
    }

    #[test]
    fn composite_pose_matches_frozen_projection() {
        let l = axis_lines(&bb(), &EulerPose::new(30.0, 20.0, -10.0));
        let close = |a: (f64, f64), b: (f64, f64)| (a.0 - b.0).abs() < 1e-9 && (a.1 - b.1).abs() < 1e-9;
        assert!(close(l.side, (91.15864723227504, 41.841204441673256)));
        assert!(close(l.down, (65.93978887985838, 96.27082891991617)));
        assert!(close(l.front, (26.507684480352292, 67.10100716628344)));
    }

    #[test]
    fn rotation_is_orthonormal() {
        let r = rotation_matrix(&EulerPose::new(33.0, -71.0, 12.0));
        for i in 0..3 {
            for j in 0..3 {
                let d: f64 = (0..3).map(|k| r[i][k] * r[j][k]).sum();
                assert!((d - f64::from(i == j)).abs() < 1e-12);
            }
        }
    }
}
