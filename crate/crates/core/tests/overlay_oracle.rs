use headpose::eval::{axis_lines, draw_axes, rotation_matrix};
use headpose::geometry::{BoundingBox, EulerPose, Image};
use nalgebra::{Rotation3, Vector3};
use proptest::prelude::*;

fn nalgebra_rotation(p: &EulerPose) -> Rotation3<f64> {
    Rotation3::from_axis_angle(&Vector3::y_axis(), p.yaw.to_radians())
        * Rotation3::from_axis_angle(&Vector3::x_axis(), p.pitch.to_radians())
        * Rotation3::from_axis_angle(&Vector3::z_axis(), p.roll.to_radians())
}

proptest! {
    #[test]
    fn rotation_matches_nalgebra(yaw in -93.0f64..93.0, pitch in -93.0f64..93.0, roll in -93.0f64..93.0) {
        let p = EulerPose::new(yaw, pitch, roll);
        let ours = rotation_matrix(&p);
        let theirs = nalgebra_rotation(&p);
        for i in 0..3 {
            for j in 0..3 {
                prop_assert!((ours[i][j] - theirs[(i, j)]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn endpoints_match_nalgebra_projection(
        yaw in -93.0f64..93.0, pitch in -93.0f64..93.0, roll in -93.0f64..93.0,
        x1 in -50i64..200, y1 in -50i64..200, side in 2i64..300,
    ) {
        let p = EulerPose::new(yaw, pitch, roll);
        let b = BoundingBox::new(x1, y1, x1 + side, y1 + side).unwrap();
        let l = axis_lines(&b, &p);
        let r = nalgebra_rotation(&p);
        let c = (x1 as f64 + side as f64 / 2.0, y1 as f64 + side as f64 / 2.0);
        let len = side as f64 / 2.0;
        for (axis, got) in [(Vector3::x(), l.side), (Vector3::y(), l.down), (-Vector3::z(), l.front)] {
            let v = r * axis;
            prop_assert!((got.0 - (c.0 + len * v.x)).abs() < 1e-9);
            prop_assert!((got.1 - (c.1 + len * v.y)).abs() < 1e-9);
        }
    }
}

#[test]
fn overlay_leaves_the_input_untouched_and_stays_in_bounds() {
    let img = Image::filled(64, 48, [0.5; 3]);
    let b = BoundingBox::new(40, 20, 100, 80).unwrap();
    let out = draw_axes(&img, &b, &EulerPose::new(45.0, -30.0, 60.0));
    assert_eq!((out.width(), out.height()), (64, 48));
    assert!(img.data().iter().all(|v| *v == 0.5));
    assert!(out.data() != img.data());
}
