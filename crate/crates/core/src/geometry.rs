//! Yaw-rotated 3D boxes: membership, diagonal length, rotated IoU and the
//! canonical object frame used for averaging saliency across objects.

use crate::cloud::Point;
use crate::error::{Error, Result};

/// Intersections with a bird's-eye area below this (m²) count as empty.
pub const SLIVER_AREA: f64 = 1e-12;

/// Box rotated about the vertical axis. `size` is (length, width, height);
/// length runs along the heading.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OrientedBox {
    pub center: [f64; 3],
    pub size: [f64; 3],
    pub yaw: f64,
}

impl OrientedBox {
    pub fn new(center: [f64; 3], size: [f64; 3], yaw: f64) -> Result<Self> {
        let b = Self { center, size, yaw };
        b.validate()?;
        Ok(b)
    }

    pub fn validate(&self) -> Result<()> {
        if self.size.iter().all(|s| *s > 0.0 && s.is_finite()) {
            Ok(())
        } else {
            Err(Error::DegenerateBox)
        }
    }

    pub fn volume(&self) -> f64 {
        self.size.iter().product()
    }

    /// Position relative to the center, rotated into the box's heading frame.
    pub fn to_local(&self, p: [f64; 3]) -> [f64; 3] {
        let (s, c) = self.yaw.sin_cos();
        let dx = p[0] - self.center[0];
        let dy = p[1] - self.center[1];
        [c * dx + s * dy, -s * dx + c * dy, p[2] - self.center[2]]
    }

    pub fn from_local(&self, q: [f64; 3]) -> [f64; 3] {
        let (s, c) = self.yaw.sin_cos();
        [
            self.center[0] + c * q[0] - s * q[1],
            self.center[1] + s * q[0] + c * q[1],
            self.center[2] + q[2],
        ]
    }

    /// Bird's-eye corners, counter-clockwise.
    pub fn bev_corners(&self) -> [[f64; 2]; 4] {
        let (hl, hw) = (self.size[0] / 2.0, self.size[1] / 2.0);
        [[hl, hw], [-hl, hw], [-hl, -hw], [hl, -hw]].map(|[x, y]| {
            let p = self.from_local([x, y, 0.0]);
            [p[0], p[1]]
        })
    }

    fn z_bounds(&self) -> (f64, f64) {
        (
            self.center[2] - self.size[2] / 2.0,
            self.center[2] + self.size[2] / 2.0,
        )
    }
}

/// Closed-box membership test.
pub fn point_in_box(p: [f64; 3], b: &OrientedBox) -> bool {
    let q = b.to_local(p);
    q.iter().zip(b.size).all(|(v, s)| v.abs() <= s / 2.0)
}

pub fn box_diagonal(b: &OrientedBox) -> f64 {
    b.size.iter().map(|s| s * s).sum::<f64>().sqrt()
}

/// Signed area of a polygon (positive when counter-clockwise).
pub fn shoelace_area(poly: &[[f64; 2]]) -> f64 {
    let n = poly.len();
    if n < 3 {
        return 0.0;
    }
    let twice: f64 = (0..n)
        .map(|i| {
            let (a, b) = (poly[i], poly[(i + 1) % n]);
            a[0] * b[1] - b[0] * a[1]
        })
        .sum();
    twice / 2.0
}

/// Sutherland–Hodgman clip of `subject` against a convex counter-clockwise `clip` polygon.
pub fn clip_convex(subject: &[[f64; 2]], clip: &[[f64; 2]]) -> Vec<[f64; 2]> {
    let mut out = subject.to_vec();
    for i in 0..clip.len() {
        if out.is_empty() {
            break;
        }
        let (a, b) = (clip[i], clip[(i + 1) % clip.len()]);
        let side = |p: [f64; 2]| (b[0] - a[0]) * (p[1] - a[1]) - (b[1] - a[1]) * (p[0] - a[0]);
        let input = std::mem::take(&mut out);
        for j in 0..input.len() {
            let cur = input[j];
            let prev = input[(j + input.len() - 1) % input.len()];
            let (sc, sp) = (side(cur), side(prev));
            if sc >= 0.0 {
                if sp < 0.0 {
                    out.push(intersect(prev, cur, sp, sc));
                }
                out.push(cur);
            } else if sp >= 0.0 {
                out.push(intersect(prev, cur, sp, sc));
            }
        }
    }
    out
}

fn intersect(p: [f64; 2], q: [f64; 2], sp: f64, sq: f64) -> [f64; 2] {
    let t = sp / (sp - sq);
    [p[0] + t * (q[0] - p[0]), p[1] + t * (q[1] - p[1])]
}

/// Bird's-eye intersection area of two boxes.
pub fn bev_intersection_area(a: &OrientedBox, b: &OrientedBox) -> f64 {
    let poly = clip_convex(&a.bev_corners(), &b.bev_corners());
    let area = shoelace_area(&poly).abs();
    if area < SLIVER_AREA {
        0.0
    } else {
        area
    }
}

/// Volumetric IoU of two yaw-rotated boxes.
pub fn iou_3d(a: &OrientedBox, b: &OrientedBox) -> f64 {
    let (a_lo, a_hi) = a.z_bounds();
    let (b_lo, b_hi) = b.z_bounds();
    let dz = a_hi.min(b_hi) - a_lo.max(b_lo);
    if dz <= 0.0 {
        return 0.0;
    }
    let inter = bev_intersection_area(a, b) * dz;
    if inter == 0.0 {
        return 0.0;
    }
    let union = a.volume() + b.volume() - inter;
    (inter / union).clamp(0.0, 1.0)
}

/// A point expressed in a box's normalized frame, where the box is `[-0.5, 0.5]³`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CanonicalSample {
    pub position: [f64; 3],
    pub saliency: f64,
}

pub fn to_canonical(p: [f64; 3], b: &OrientedBox) -> [f64; 3] {
    let q = b.to_local(p);
    [q[0] / b.size[0], q[1] / b.size[1], q[2] / b.size[2]]
}

pub fn from_canonical(q: [f64; 3], b: &OrientedBox) -> [f64; 3] {
    b.from_local([q[0] * b.size[0], q[1] * b.size[1], q[2] * b.size[2]])
}

/// Maps points into the box's canonical frame, carrying saliency along unchanged.
pub fn canonicalize(
    points: &[Point],
    saliency: &[f64],
    b: &OrientedBox,
) -> Result<Vec<CanonicalSample>> {
    b.validate()?;
    if points.len() != saliency.len() {
        return Err(Error::LengthMismatch {
            expected: points.len(),
            actual: saliency.len(),
        });
    }
    Ok(points
        .iter()
        .zip(saliency)
        .map(|(p, &s)| CanonicalSample {
            position: to_canonical(p.xyz(), b),
            saliency: s,
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{FRAC_PI_2, FRAC_PI_4};

    fn unit() -> OrientedBox {
        OrientedBox::new([0.0; 3], [1.0; 3], 0.0).unwrap()
    }

    #[test]
    fn membership_basics() {
        let b = OrientedBox::new([1.0, 2.0, 0.5], [4.0, 2.0, 1.5], 0.3).unwrap();
        assert!(point_in_box(b.center, &b));
        let just_out = b.from_local([2.0 + 1e-9, 0.0, 0.0]);
        assert!(!point_in_box(just_out, &b));
        let on_face = b.from_local([0.0, 0.0, 0.75]);
        assert!(point_in_box(on_face, &b));
    }

    #[test]
    fn rotated_unit_box_contains_point_inside_its_diamond() {
        // In the box frame (0.7, 0, 0) maps to (0.495, -0.495), inside the half-widths.
        let b = OrientedBox::new([0.0; 3], [1.0; 3], FRAC_PI_4).unwrap();
        assert!(point_in_box([0.7, 0.0, 0.0], &b));
        assert!(!point_in_box([0.72, 0.0, 0.0], &b));
    }

    #[test]
    fn diagonal_examples() {
        assert!((box_diagonal(&unit()) - 3f64.sqrt()).abs() < 1e-15);
        let b = OrientedBox::new([0.0; 3], [3.0, 4.0, 1e-4], 1.0).unwrap();
        assert!((box_diagonal(&b) - 5.0).abs() < 1e-8);
        assert!(matches!(
            OrientedBox::new([0.0; 3], [1.0, 0.0, 1.0], 0.0),
            Err(Error::DegenerateBox)
        ));
    }

    #[test]
    fn iou_identical_and_disjoint() {
        let a = OrientedBox::new([3.0, -1.0, 0.2], [4.2, 1.8, 1.5], 0.7).unwrap();
        assert!((iou_3d(&a, &a) - 1.0).abs() < 1e-12);
        let far = OrientedBox {
            center: [103.0, -1.0, 0.2],
            ..a
        };
        assert_eq!(iou_3d(&a, &far), 0.0);
    }

    #[test]
    fn square_footprint_quarter_turn_is_identity() {
        let a = OrientedBox::new([1.0, 1.0, 0.0], [2.0, 2.0, 1.0], 0.4).unwrap();
        let b = OrientedBox {
            yaw: a.yaw + FRAC_PI_2,
            ..a
        };
        assert!((iou_3d(&a, &b) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn axis_aligned_half_overlap() {
        let a = unit();
        let b = OrientedBox {
            center: [0.5, 0.0, 0.0],
            ..a
        };
        // Overlap 0.5, union 1.5.
        assert!((iou_3d(&a, &b) - 1.0 / 3.0).abs() < 1e-12);
        let c = OrientedBox {
            center: [0.0, 0.0, 0.5],
            ..a
        };
        assert!((iou_3d(&a, &c) - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn canonical_frame_examples() {
        let b = OrientedBox::new([5.0, -2.0, 1.0], [4.0, 2.0, 1.6], 1.1).unwrap();
        let corner = b.from_local([2.0, -1.0, 0.8]);
        let q = to_canonical(corner, &b);
        for (v, e) in q.iter().zip([0.5, -0.5, 0.5]) {
            assert!((v - e).abs() < 1e-12);
        }
        assert!(to_canonical(b.center, &b).iter().all(|v| v.abs() < 1e-12));
        let p = [7.3, 0.4, -0.9];
        let back = from_canonical(to_canonical(p, &b), &b);
        for (x, y) in back.iter().zip(p) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn canonicalize_carries_saliency() {
        let b = unit();
        let pts = [Point::new(0.1, 0.2, 0.3, 0.0)];
        let out = canonicalize(&pts, &[0.42], &b).unwrap();
        assert_eq!(out[0].saliency, 0.42);
        assert!(canonicalize(&pts, &[], &b).is_err());
        let flat = OrientedBox {
            size: [1.0, 1.0, 0.0],
            ..b
        };
        assert!(matches!(canonicalize(&pts, &[1.0], &flat), Err(Error::DegenerateBox)));
    }

    #[test]
    fn clipping_disjoint_polygons_is_empty() {
        let sq = [[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]];
        let far = sq.map(|[x, y]| [x + 5.0, y]);
        assert!(clip_convex(&sq, &far).is_empty());
        assert!((shoelace_area(&clip_convex(&sq, &sq)) - 1.0).abs() < 1e-15);
    }
}
