//! Ray intersections and distance queries for the scene primitives.

use crate::geometry::Vec3;

use super::{Capsule, Shape, SubjectPose};

pub(crate) const T_MIN: f64 = 1e-6;

/// Nearest hit distance and outward normal.
pub(crate) type HitInfo = (f64, Vec3);

pub(crate) fn ray_sphere(o: &Vec3, d: &Vec3, center: &Vec3, radius: f64) -> Option<HitInfo> {
    if radius <= 0.0 {
        return None;
    }
    let oc = o - center;
    let b = oc.dot(d);
    let c = oc.norm_squared() - radius * radius;
    let disc = b * b - c;
    if disc < 0.0 {
        return None;
    }
    let sq = disc.sqrt();
    let mut t = -b - sq;
    if t < T_MIN {
        t = -b + sq;
        if t < T_MIN {
            return None;
        }
    }
    let p = o + d * t;
    Some((t, (p - center) / radius))
}

pub(crate) fn ray_box(o: &Vec3, d: &Vec3, center: &Vec3, half: &Vec3) -> Option<HitInfo> {
    let mut t_near = f64::NEG_INFINITY;
    let mut t_far = f64::INFINITY;
    let mut near_axis = 0;
    let mut far_axis = 0;
    for axis in 0..3 {
        let lo = center[axis] - half[axis];
        let hi = center[axis] + half[axis];
        if d[axis].abs() < 1e-300 {
            if o[axis] < lo || o[axis] > hi {
                return None;
            }
            continue;
        }
        let inv = 1.0 / d[axis];
        let mut t0 = (lo - o[axis]) * inv;
        let mut t1 = (hi - o[axis]) * inv;
        if t0 > t1 {
            std::mem::swap(&mut t0, &mut t1);
        }
        if t0 > t_near {
            t_near = t0;
            near_axis = axis;
        }
        if t1 < t_far {
            t_far = t1;
            far_axis = axis;
        }
        if t_near > t_far {
            return None;
        }
    }
    let (t, axis) = if t_near >= T_MIN {
        (t_near, near_axis)
    } else if t_far >= T_MIN {
        (t_far, far_axis)
    } else {
        return None;
    };
    let p = o + d * t;
    let mut n = Vec3::zeros();
    n[axis] = if p[axis] > center[axis] { 1.0 } else { -1.0 };
    Some((t, n))
}

pub(crate) fn ray_capsule(o: &Vec3, d: &Vec3, cap: &Capsule) -> Option<HitInfo> {
    if cap.radius <= 0.0 {
        return None;
    }
    let ba = cap.b - cap.a;
    let baba = ba.norm_squared();
    if baba < 1e-18 {
        return ray_sphere(o, d, &cap.a, cap.radius);
    }
    let oa = o - cap.a;
    let bard = ba.dot(d);
    let baoa = ba.dot(&oa);
    let rdoa = d.dot(&oa);
    let oaoa = oa.norm_squared();
    let a = baba - bard * bard;
    let b = baba * rdoa - baoa * bard;
    let c = baba * oaoa - baoa * baoa - cap.radius * cap.radius * baba;
    let mut best: Option<HitInfo> = None;
    if a.abs() > 1e-14 {
        let h = b * b - a * c;
        if h >= 0.0 {
            let sq = h.sqrt();
            for t in [(-b - sq) / a, (-b + sq) / a] {
                if t >= T_MIN {
                    let y = baoa + t * bard;
                    if y > 0.0 && y < baba {
                        let p = o + d * t;
                        let axis_pt = cap.a + ba * (y / baba);
                        best = Some((t, (p - axis_pt) / cap.radius));
                        break;
                    }
                }
            }
        }
    }
    for end in [cap.a, cap.b] {
        if let Some(h) = ray_sphere(o, d, &end, cap.radius) {
            if best.is_none_or(|b| h.0 < b.0) {
                best = Some(h);
            }
        }
    }
    best
}

pub(crate) fn ray_shape(o: &Vec3, d: &Vec3, shape: &Shape) -> Option<HitInfo> {
    match shape {
        Shape::Sphere { center, radius } => ray_sphere(o, d, center, *radius),
        Shape::Box { center, half_extents } => ray_box(o, d, center, half_extents),
    }
}

/// Distance from `p` to the segment `a`–`b`.
pub fn segment_point_distance(a: &Vec3, b: &Vec3, p: &Vec3) -> f64 {
    let ab = b - a;
    let len2 = ab.norm_squared();
    let s = if len2 > 0.0 { ((p - a).dot(&ab) / len2).clamp(0.0, 1.0) } else { 0.0 };
    (a + ab * s - p).norm()
}

fn point_aabb_distance(p: &Vec3, center: &Vec3, half: &Vec3) -> f64 {
    let d = (p - center).abs() - half;
    Vec3::new(d.x.max(0.0), d.y.max(0.0), d.z.max(0.0)).norm()
}

/// Distance from the segment `a`–`b` to an axis-aligned box (zero when they
/// touch). The point-to-box distance is convex along the segment, so a
/// golden-section search converges to the minimum.
pub fn segment_aabb_distance(a: &Vec3, b: &Vec3, center: &Vec3, half: &Vec3) -> f64 {
    let f = |s: f64| point_aabb_distance(&(a + (b - a) * s), center, half);
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    let mut x1 = hi - g * (hi - lo);
    let mut x2 = lo + g * (hi - lo);
    let (mut f1, mut f2) = (f(x1), f(x2));
    for _ in 0..80 {
        if f1 <= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - g * (hi - lo);
            f1 = f(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + g * (hi - lo);
            f2 = f(x2);
        }
    }
    f(0.0).min(f(1.0)).min(f(0.5 * (lo + hi)))
}

fn capsule_shape_distance(cap: &Capsule, shape: &Shape) -> f64 {
    match shape {
        Shape::Sphere { center, radius } => segment_point_distance(&cap.a, &cap.b, center) - cap.radius - radius,
        Shape::Box { center, half_extents } => segment_aabb_distance(&cap.a, &cap.b, center, half_extents) - cap.radius,
    }
}

/// Signed clearance between the posed subject and a static shape (negative
/// when they overlap).
pub(crate) fn subject_object_distance(pose: &SubjectPose, shape: &Shape) -> f64 {
    let head = Capsule {
        a: pose.head_center,
        b: pose.head_center,
        radius: pose.head_radius,
    };
    [pose.legs, pose.torso, head]
        .iter()
        .filter(|c| c.radius > 0.0)
        .map(|c| capsule_shape_distance(c, shape))
        .fold(f64::INFINITY, f64::min)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sphere_hit_distance() {
        let (t, n) = ray_sphere(&Vec3::new(0.0, 0.0, 5.0), &Vec3::new(0.0, 0.0, -1.0), &Vec3::zeros(), 1.0).unwrap();
        assert!((t - 4.0).abs() < 1e-12);
        assert!((n - Vec3::z()).norm() < 1e-12);
        assert!(ray_sphere(&Vec3::new(0.0, 2.0, 5.0), &Vec3::new(0.0, 0.0, -1.0), &Vec3::zeros(), 1.0).is_none());
    }

    #[test]
    fn box_hit_distance_and_normal() {
        let o = Vec3::new(5.0, 0.2, 0.1);
        let (t, n) = ray_box(&o, &Vec3::new(-1.0, 0.0, 0.0), &Vec3::zeros(), &Vec3::new(1.0, 1.0, 1.0)).unwrap();
        assert!((t - 4.0).abs() < 1e-12);
        assert_eq!(n, Vec3::x());
        assert!(ray_box(&o, &Vec3::new(1.0, 0.0, 0.0), &Vec3::zeros(), &Vec3::new(1.0, 1.0, 1.0)).is_none());
    }

    #[test]
    fn capsule_side_and_cap_hits() {
        let cap = Capsule {
            a: Vec3::zeros(),
            b: Vec3::new(0.0, 2.0, 0.0),
            radius: 0.5,
        };
        let (t, _) = ray_capsule(&Vec3::new(0.0, 1.0, 5.0), &Vec3::new(0.0, 0.0, -1.0), &cap).unwrap();
        assert!((t - 4.5).abs() < 1e-12);
        let (t, _) = ray_capsule(&Vec3::new(0.0, 5.0, 0.0), &Vec3::new(0.0, -1.0, 0.0), &cap).unwrap();
        assert!((t - 2.5).abs() < 1e-12);
        assert!(ray_capsule(&Vec3::new(1.0, 1.0, 5.0), &Vec3::new(0.0, 0.0, -1.0), &cap).is_none());
    }

    #[test]
    fn segment_box_distance_matches_brute_force() {
        let c = Vec3::new(1.0, 2.0, -1.0);
        let h = Vec3::new(0.5, 1.0, 0.7);
        let segs = [
            (Vec3::new(4.0, 0.0, 0.0), Vec3::new(4.0, 5.0, 3.0)),
            (Vec3::new(-3.0, 2.0, -1.0), Vec3::new(5.0, 2.0, -1.0)),
            (Vec3::new(-2.0, -2.0, 2.0), Vec3::new(-1.0, 6.0, 2.5)),
        ];
        for (a, b) in segs {
            let brute = (0..=100_000)
                .map(|i| point_aabb_distance(&(a + (b - a) * (i as f64 / 100_000.0)), &c, &h))
                .fold(f64::INFINITY, f64::min);
            let fast = segment_aabb_distance(&a, &b, &c, &h);
            assert!((fast - brute).abs() < 1e-6, "{fast} vs {brute}");
        }
    }
}
