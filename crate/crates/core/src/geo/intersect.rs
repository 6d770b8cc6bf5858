//! Ray, segment and triangle intersection primitives.

use crate::scene::{Aabb, Vec3};

const PARALLEL_EPS: f64 = 1e-14;
/// Ray hits closer than this are treated as the origin touching the surface.
pub const MIN_HIT_T: f64 = 1e-12;

/// Möller–Trumbore. Returns the ray parameter of the hit, if `t > MIN_HIT_T`.
#[inline]
pub fn ray_triangle(origin: Vec3, dir: Vec3, v0: Vec3, v1: Vec3, v2: Vec3) -> Option<f64> {
    let e1 = v1 - v0;
    let e2 = v2 - v0;
    let p = dir.cross(e2);
    let det = e1.dot(p);
    if det.abs() < PARALLEL_EPS {
        return None;
    }
    let inv = 1.0 / det;
    let s = origin - v0;
    let u = s.dot(p) * inv;
    if !(0.0..=1.0).contains(&u) {
        return None;
    }
    let q = s.cross(e1);
    let v = dir.dot(q) * inv;
    if v < 0.0 || u + v > 1.0 {
        return None;
    }
    let t = e2.dot(q) * inv;
    (t > MIN_HIT_T).then_some(t)
}

/// Slab test; returns the entry parameter when the ray meets the box before `t_max`.
#[inline]
pub fn ray_aabb(origin: Vec3, inv_dir: Vec3, b: &Aabb, t_max: f64) -> Option<f64> {
    let mut t0 = 0.0f64;
    let mut t1 = t_max;
    for i in 0..3 {
        let (lo, hi) = ((b.min[i] - origin[i]) * inv_dir[i], (b.max[i] - origin[i]) * inv_dir[i]);
        let (lo, hi) = if lo <= hi { (lo, hi) } else { (hi, lo) };
        // NaN from 0 * inf means the origin lies on the slab plane; keep going
        if !lo.is_nan() {
            t0 = t0.max(lo);
        }
        if !hi.is_nan() {
            t1 = t1.min(hi);
        }
        if t0 > t1 {
            return None;
        }
    }
    Some(t0)
}

/// Whether the open segment `p..q` crosses the open interior of the triangle.
/// Segments in the triangle's plane and hits on its boundary are contact, not crossing.
#[inline]
fn segment_crosses(p: Vec3, q: Vec3, v0: Vec3, v1: Vec3, v2: Vec3) -> bool {
    const EPS: f64 = 1e-10;
    let d = q - p;
    let e1 = v1 - v0;
    let e2 = v2 - v0;
    let h = d.cross(e2);
    let det = e1.dot(h);
    if det.abs() < PARALLEL_EPS * d.length().max(1.0) {
        return false;
    }
    let inv = 1.0 / det;
    let s = p - v0;
    let u = s.dot(h) * inv;
    if u <= EPS || u >= 1.0 - EPS {
        return false;
    }
    let qv = s.cross(e1);
    let v = d.dot(qv) * inv;
    if v <= EPS || u + v >= 1.0 - EPS {
        return false;
    }
    let t = e2.dot(qv) * inv;
    t > EPS && t < 1.0 - EPS
}

/// Triangle-triangle intersection for closed, outward-wound meshes.
///
/// Non-coplanar triangles intersect iff an edge of one crosses the interior of
/// the other. Coplanar triangles count only when they face the same way and
/// overlap with positive area (the solids behind them overlap); opposite-facing
/// coplanar triangles are surfaces in contact.
pub fn triangles_intersect(a: [Vec3; 3], b: [Vec3; 3]) -> bool {
    (0..3).any(|i| segment_crosses(a[i], a[(i + 1) % 3], b[0], b[1], b[2]))
        || (0..3).any(|i| segment_crosses(b[i], b[(i + 1) % 3], a[0], a[1], a[2]))
        || coplanar_same_facing_overlap(a, b)
}

fn coplanar_same_facing_overlap(a: [Vec3; 3], b: [Vec3; 3]) -> bool {
    const EPS: f64 = 1e-10;
    let na = (a[1] - a[0]).cross(a[2] - a[0]);
    let nb = (b[1] - b[0]).cross(b[2] - b[0]);
    let (la, lb) = (na.length(), nb.length());
    if la == 0.0 || lb == 0.0 || na.dot(nb) <= 0.0 || na.cross(nb).length() > 1e-9 * la * lb {
        return false;
    }
    let n = na / la;
    if b.iter().any(|&p| (p - a[0]).dot(n).abs() > EPS) {
        return false;
    }
    // drop the dominant normal axis and run a 2D separating-axis test
    let (i, j) = if n.x.abs() >= n.y.abs() && n.x.abs() >= n.z.abs() {
        (1, 2)
    } else if n.y.abs() >= n.z.abs() {
        (2, 0)
    } else {
        (0, 1)
    };
    let pa = a.map(|p| (p[i], p[j]));
    let pb = b.map(|p| (p[i], p[j]));
    for tri in [pa, pb] {
        for k in 0..3 {
            let (x0, y0) = tri[k];
            let (x1, y1) = tri[(k + 1) % 3];
            let axis = (y0 - y1, x1 - x0);
            let project = |t: [(f64, f64); 3]| {
                t.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &(x, y)| {
                    let d = x * axis.0 + y * axis.1;
                    (lo.min(d), hi.max(d))
                })
            };
            let (alo, ahi) = project(pa);
            let (blo, bhi) = project(pb);
            let scale = (axis.0.abs() + axis.1.abs()).max(f64::MIN_POSITIVE);
            if ahi.min(bhi) - alo.max(blo) <= EPS * scale {
                return false;
            }
        }
    }
    true
}

pub fn triangle_aabb(t: [Vec3; 3]) -> Aabb {
    Aabb::new(t[0].min(t[1]).min(t[2]), t[0].max(t[1]).max(t[2]))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ray_hits_triangle_interior() {
        let (a, b, c) = (
            Vec3::new(-1.0, -1.0, 0.0),
            Vec3::new(1.0, -1.0, 0.0),
            Vec3::new(0.0, 1.0, 0.0),
        );
        assert_eq!(ray_triangle(Vec3::new(0.0, 0.0, 2.0), -Vec3::Z, a, b, c), Some(2.0));
        assert_eq!(ray_triangle(Vec3::new(0.0, 0.0, 2.0), Vec3::Z, a, b, c), None);
        assert_eq!(ray_triangle(Vec3::new(5.0, 0.0, 2.0), -Vec3::Z, a, b, c), None);
        assert_eq!(ray_triangle(Vec3::new(0.0, 0.0, 2.0), Vec3::X, a, b, c), None);
    }

    #[test]
    fn slab_test() {
        let b = Aabb::new(Vec3::splat(-0.5), Vec3::splat(0.5));
        let o = Vec3::new(0.0, 0.0, 2.0);
        let inv = Vec3::new(f64::INFINITY, f64::INFINITY, -1.0);
        assert_eq!(ray_aabb(o, inv, &b, f64::INFINITY), Some(1.5));
        assert_eq!(ray_aabb(o, inv, &b, 1.0), None);
        let side = Vec3::new(2.0, 0.0, 2.0);
        assert_eq!(ray_aabb(side, inv, &b, f64::INFINITY), None);
    }

    #[test]
    fn crossing_and_touching_triangles() {
        let flat = [
            Vec3::new(-1.0, 0.0, -1.0),
            Vec3::new(1.0, 0.0, -1.0),
            Vec3::new(0.0, 0.0, 1.0),
        ];
        let upright = [
            Vec3::new(0.0, -1.0, 0.0),
            Vec3::new(0.0, 1.0, 0.0),
            Vec3::new(0.0, 1.0, 0.5),
        ];
        assert!(triangles_intersect(flat, upright));
        let resting = [
            Vec3::new(0.0, 0.0, 0.0),
            Vec3::new(0.0, 1.0, 0.0),
            Vec3::new(0.0, 1.0, 0.5),
        ];
        assert!(!triangles_intersect(flat, resting));
        let lifted = [
            Vec3::new(0.0, 0.1, 0.0),
            Vec3::new(0.0, 1.0, 0.0),
            Vec3::new(0.0, 1.0, 0.5),
        ];
        assert!(!triangles_intersect(flat, lifted));
        // flat faces -y; an overlapping copy facing +y is contact, facing -y is overlap
        let facing_up = [
            Vec3::new(0.0, 0.0, 0.0),
            Vec3::new(0.0, 0.0, 2.0),
            Vec3::new(2.0, 0.0, 0.0),
        ];
        assert!(!triangles_intersect(flat, facing_up));
        let facing_down = [
            Vec3::new(0.0, 0.0, 0.0),
            Vec3::new(2.0, 0.0, 0.0),
            Vec3::new(0.0, 0.0, 2.0),
        ];
        assert!(triangles_intersect(flat, facing_down));
        let beside = [
            Vec3::new(1.0, 0.0, -1.0),
            Vec3::new(0.0, 0.0, 1.0),
            Vec3::new(3.0, 0.0, 1.0),
        ];
        assert!(!triangles_intersect(flat, beside));
    }
}
