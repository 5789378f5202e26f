//! Rotated 3D IoU for a few box pairs, with the bird's-eye overlap polygon area.

use std::f64::consts::FRAC_PI_4;

use ffam::geometry::{bev_intersection_area, iou_3d, OrientedBox};

fn main() -> ffam::Result<()> {
    let car = OrientedBox::new([10.0, 0.0, -0.9], [3.9, 1.6, 1.56], 0.0)?;
    let pairs = [
        ("same box", car),
        ("shifted 1 m", OrientedBox::new([11.0, 0.0, -0.9], [3.9, 1.6, 1.56], 0.0)?),
        ("turned 45 deg", OrientedBox::new([10.0, 0.0, -0.9], [3.9, 1.6, 1.56], FRAC_PI_4)?),
        ("raised 1 m", OrientedBox::new([10.0, 0.0, 0.1], [3.9, 1.6, 1.56], 0.0)?),
        ("far away", OrientedBox::new([30.0, 5.0, -0.9], [3.9, 1.6, 1.56], 0.3)?),
    ];
    for (name, other) in pairs {
        println!(
            "{name:<14} bev overlap {:5.2} m2, iou {:.4}",
            bev_intersection_area(&car, &other),
            iou_3d(&car, &other)
        );
    }
    Ok(())
}
