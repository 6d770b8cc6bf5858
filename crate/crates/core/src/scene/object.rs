use serde::{Deserialize, Serialize};

use super::math::{Axis, Rotation, Vec3};
use super::SceneError;

/// Default dead zone for [`relative_direction`], in meters.
pub const DEFAULT_DEAD_ZONE: f64 = 0.005;

/// An oriented, box-modeled object.
///
/// `position` is the centroid of the object's bounding box and `half_size`
/// is measured along the object's local axes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneObject {
    pub id: String,
    pub label: String,
    pub half_size: Vec3,
    pub position: Vec3,
    #[serde(default)]
    pub rotation: Rotation,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub asset_id: Option<String>,
}

impl SceneObject {
    /// A new object at the origin with identity rotation, as the DSL `create` does.
    pub fn new(id: impl Into<String>, label: impl Into<String>, half_size: Vec3) -> Self {
        SceneObject {
            id: id.into(),
            label: label.into(),
            half_size,
            position: Vec3::ZERO,
            rotation: Rotation::IDENTITY,
            asset_id: None,
        }
    }

    pub fn at(mut self, position: Vec3) -> Self {
        self.position = position;
        self
    }

    pub fn with_rotation(mut self, rotation: Rotation) -> Self {
        self.rotation = rotation;
        self
    }

    pub fn validate(&self) -> Result<(), SceneError> {
        let h = self.half_size;
        if !(h.is_finite() && h.x > 0.0 && h.y > 0.0 && h.z > 0.0) {
            return Err(SceneError::InvalidArgument(format!(
                "object `{}` has non-positive half size {h}",
                self.id
            )));
        }
        if !self.position.is_finite() {
            return Err(SceneError::InvalidArgument(format!(
                "object `{}` has non-finite position",
                self.id
            )));
        }
        if !self.rotation.is_valid() {
            return Err(SceneError::InvalidArgument(format!(
                "object `{}` has a rotation that is not orthonormal",
                self.id
            )));
        }
        Ok(())
    }

    /// The eight box corners in world coordinates.
    pub fn world_corners(&self) -> [Vec3; 8] {
        let h = self.half_size;
        let mut out = [Vec3::ZERO; 8];
        for (i, c) in out.iter_mut().enumerate() {
            let local = Vec3::new(
                if i & 1 == 0 { -h.x } else { h.x },
                if i & 2 == 0 { -h.y } else { h.y },
                if i & 4 == 0 { -h.z } else { h.z },
            );
            *c = self.position + self.rotation.apply(local);
        }
        out
    }
}

pub fn apply_move(obj: &SceneObject, target: Vec3) -> Result<SceneObject, SceneError> {
    if !target.is_finite() {
        return Err(SceneError::InvalidArgument(format!(
            "move target for `{}` is not finite",
            obj.id
        )));
    }
    let mut out = obj.clone();
    out.position = target;
    Ok(out)
}

/// Rotate about the object's current local `axis` (post-multiplication), pivoting on the centroid.
pub fn apply_rotate(obj: &SceneObject, axis: Axis, angle_deg: f64) -> SceneObject {
    let mut out = obj.clone();
    let mut r = obj.rotation.mul(&Rotation::about_axis(axis, angle_deg));
    if r.orthonormality_error() > Rotation::ORTHO_TOL * 0.5 {
        r = r.orthonormalized();
    }
    out.rotation = r;
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Aabb {
    pub min: Vec3,
    pub max: Vec3,
}

impl Aabb {
    pub fn new(min: Vec3, max: Vec3) -> Self {
        Aabb { min, max }
    }

    pub fn from_center_half(center: Vec3, half: Vec3) -> Self {
        Aabb::new(center - half, center + half)
    }

    pub fn from_points<I: IntoIterator<Item = Vec3>>(points: I) -> Option<Self> {
        let mut iter = points.into_iter();
        let first = iter.next()?;
        Some(iter.fold(Aabb::new(first, first), |b, p| Aabb::new(b.min.min(p), b.max.max(p))))
    }

    pub fn extents(&self) -> Vec3 {
        self.max - self.min
    }

    pub fn center(&self) -> Vec3 {
        (self.min + self.max) * 0.5
    }

    pub fn volume(&self) -> f64 {
        let e = self.extents();
        e.x.max(0.0) * e.y.max(0.0) * e.z.max(0.0)
    }

    pub fn union(&self, o: &Aabb) -> Aabb {
        Aabb::new(self.min.min(o.min), self.max.max(o.max))
    }

    pub fn intersection(&self, o: &Aabb) -> Option<Aabb> {
        let min = self.min.max(o.min);
        let max = self.max.min(o.max);
        (min.x <= max.x && min.y <= max.y && min.z <= max.z).then_some(Aabb::new(min, max))
    }

    pub fn overlaps(&self, o: &Aabb) -> bool {
        self.intersection(o).is_some()
    }

    pub fn contains(&self, p: Vec3, tol: f64) -> bool {
        p.x >= self.min.x - tol
            && p.y >= self.min.y - tol
            && p.z >= self.min.z - tol
            && p.x <= self.max.x + tol
            && p.y <= self.max.y + tol
            && p.z <= self.max.z + tol
    }

    pub fn translated(&self, d: Vec3) -> Aabb {
        Aabb::new(self.min + d, self.max + d)
    }

    pub fn grown(&self, margin: f64) -> Aabb {
        Aabb::new(self.min - Vec3::splat(margin), self.max + Vec3::splat(margin))
    }
}

/// Tight axis-aligned hull of the object's rotated box.
pub fn world_aabb(obj: &SceneObject) -> Aabb {
    // |R| · h gives the world half extents of a rotated box
    let r = &obj.rotation.m;
    let h = obj.half_size;
    let half = Vec3::new(
        r[0][0].abs() * h.x + r[0][1].abs() * h.y + r[0][2].abs() * h.z,
        r[1][0].abs() * h.x + r[1][1].abs() * h.y + r[1][2].abs() * h.z,
        r[2][0].abs() * h.x + r[2][1].abs() * h.y + r[2][2].abs() * h.z,
    );
    Aabb::from_center_half(obj.position, half)
}

/// Volumetric intersection-over-union of two axis-aligned boxes.
///
/// Zero-volume boxes score 0, unless the two boxes are identical.
pub fn aabb_iou(a: &Aabb, b: &Aabb) -> f64 {
    let va = a.volume();
    let vb = b.volume();
    if va <= 0.0 || vb <= 0.0 {
        return if a == b { 1.0 } else { 0.0 };
    }
    let inter = a.intersection(b).map_or(0.0, |i| i.volume());
    let union = va + vb - inter;
    if union <= 0.0 {
        return 0.0;
    }
    (inter / union).clamp(0.0, 1.0)
}

/// Per-axis sign of a displacement, with a dead zone around zero.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct DirectionSignature {
    pub sx: i8,
    pub sy: i8,
    pub sz: i8,
}

impl DirectionSignature {
    pub const fn new(sx: i8, sy: i8, sz: i8) -> Self {
        DirectionSignature { sx, sy, sz }
    }

    pub fn negated(self) -> Self {
        DirectionSignature::new(-self.sx, -self.sy, -self.sz)
    }
}

impl std::fmt::Display for DirectionSignature {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "({}, {}, {})", self.sx, self.sy, self.sz)
    }
}

fn dead_zone_sign(d: f64, dead_zone: f64) -> i8 {
    if d.abs() <= dead_zone {
        0
    } else if d > 0.0 {
        1
    } else {
        -1
    }
}

/// Direction from `a` to `b`: sign of `b.position − a.position` per axis.
pub fn relative_direction(a: &SceneObject, b: &SceneObject, dead_zone: f64) -> DirectionSignature {
    let dead_zone = dead_zone.max(0.0);
    let d = b.position - a.position;
    DirectionSignature::new(
        dead_zone_sign(d.x, dead_zone),
        dead_zone_sign(d.y, dead_zone),
        dead_zone_sign(d.z, dead_zone),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn cube(half: f64) -> SceneObject {
        SceneObject::new("a", "cube", Vec3::splat(half))
    }

    #[test]
    fn move_sets_position_only() {
        let obj = cube(1.0).with_rotation(Rotation::about_axis(Axis::X, 10.0));
        let moved = apply_move(&obj, Vec3::new(0.0, -0.00757, 0.0)).unwrap();
        assert_eq!(moved.position, Vec3::new(0.0, -0.00757, 0.0));
        assert_eq!(moved.rotation, obj.rotation);
        assert_eq!(moved.half_size, obj.half_size);

        assert_eq!(apply_move(&obj, obj.position).unwrap(), obj);

        let twice = apply_move(&moved, Vec3::new(1.0, 2.0, 3.0)).unwrap();
        assert_eq!(twice.position, Vec3::new(1.0, 2.0, 3.0));

        assert!(apply_move(&obj, Vec3::new(f64::NAN, 0.0, 0.0)).is_err());
        assert!(apply_move(&obj, Vec3::new(0.0, f64::INFINITY, 0.0)).is_err());
    }

    #[test]
    fn rotate_zero_is_identity() {
        let obj = cube(1.0);
        assert_eq!(apply_rotate(&obj, Axis::Z, 0.0).rotation, Rotation::IDENTITY);
    }

    #[test]
    fn rotate_y_90_maps_x_to_minus_z() {
        let r = apply_rotate(&cube(1.0), Axis::Y, 90.0).rotation;
        let mapped = r.apply(Vec3::X);
        assert_relative_eq!(mapped.x, 0.0, epsilon = 1e-12);
        assert_relative_eq!(mapped.y, 0.0, epsilon = 1e-12);
        assert_relative_eq!(mapped.z, -1.0, epsilon = 1e-12);
    }

    #[test]
    fn rotate_180_twice_is_identity() {
        let once = apply_rotate(&cube(1.0), Axis::Y, 180.0);
        let twice = apply_rotate(&once, Axis::Y, 180.0);
        assert!(twice.rotation.is_identity(1e-9));
    }

    #[test]
    fn rotate_is_post_multiplied() {
        // z-rotation about the *local* axis after turning the object onto its side
        let obj = apply_rotate(&cube(1.0), Axis::X, 90.0);
        let local = apply_rotate(&obj, Axis::Z, 90.0);
        let expected = Rotation::about_axis(Axis::X, 90.0).mul(&Rotation::about_axis(Axis::Z, 90.0));
        assert!(local.rotation.max_abs_diff(&expected) < 1e-12);
        assert_eq!(local.position, obj.position);
    }

    #[test]
    fn rotation_drift_stays_bounded() {
        let mut obj = cube(1.0);
        let axes = [Axis::X, Axis::Y, Axis::Z];
        for i in 0..10_000 {
            obj = apply_rotate(&obj, axes[i % 3], 37.3 + (i % 7) as f64);
        }
        assert!(obj.rotation.orthonormality_error() <= 1e-6);
        assert!((obj.rotation.determinant() - 1.0).abs() <= 1e-6);
    }

    #[test]
    fn world_aabb_examples() {
        let b = world_aabb(&cube(1.0));
        assert_eq!(b.min, Vec3::splat(-1.0));
        assert_eq!(b.max, Vec3::splat(1.0));

        let plate = SceneObject::new("p", "plate", Vec3::new(0.08909, 0.0143, 0.08853));
        let e = world_aabb(&plate).extents();
        assert_relative_eq!(e.x, 0.17818, epsilon = 1e-12);
        assert_relative_eq!(e.y, 0.0286, epsilon = 1e-12);
        assert_relative_eq!(e.z, 0.17706, epsilon = 1e-12);
    }

    #[test]
    fn world_aabb_rotated_45_matches_corner_oracle() {
        let obj = apply_rotate(&cube(0.5), Axis::Y, 45.0);
        let oracle = Aabb::from_points(obj.world_corners()).unwrap();
        let b = world_aabb(&obj);
        let expected = 2.0 * 2f64.sqrt() * 0.5;
        assert_relative_eq!(b.extents().x, expected, epsilon = 1e-12);
        assert_relative_eq!(b.extents().z, expected, epsilon = 1e-12);
        assert_relative_eq!(b.extents().y, 1.0, epsilon = 1e-12);
        assert!((b.min - oracle.min).length() < 1e-12);
        assert!((b.max - oracle.max).length() < 1e-12);
    }

    fn unit_box(offset: Vec3) -> Aabb {
        Aabb::from_center_half(offset, Vec3::splat(0.5))
    }

    #[test]
    fn iou_examples() {
        let a = unit_box(Vec3::ZERO);
        assert_eq!(aabb_iou(&a, &a), 1.0);
        assert_eq!(aabb_iou(&a, &unit_box(Vec3::new(3.0, 0.0, 0.0))), 0.0);
        // overlap 0.5, union 1.5
        let b = unit_box(Vec3::new(0.5, 0.0, 0.0));
        assert!((aabb_iou(&a, &b) - 1.0 / 3.0).abs() < 1e-9);
    }

    #[test]
    fn iou_degenerate() {
        let flat = Aabb::new(Vec3::ZERO, Vec3::new(1.0, 0.0, 1.0));
        assert_eq!(aabb_iou(&flat, &flat), 1.0);
        assert_eq!(aabb_iou(&flat, &unit_box(Vec3::ZERO)), 0.0);
    }

    #[test]
    fn direction_examples() {
        let p1 = SceneObject::new("1", "plate", Vec3::splat(0.1));
        let p2 = p1.clone().at(Vec3::new(0.0, -0.00757, 0.0));
        assert_eq!(
            relative_direction(&p1, &p2, DEFAULT_DEAD_ZONE),
            DirectionSignature::new(0, -1, 0)
        );
        assert_eq!(
            relative_direction(&p1, &p1, DEFAULT_DEAD_ZONE),
            DirectionSignature::new(0, 0, 0)
        );
    }

    fn arb_vec(range: f64) -> impl Strategy<Value = Vec3> {
        (-range..range, -range..range, -range..range).prop_map(|(x, y, z)| Vec3::new(x, y, z))
    }

    fn arb_object() -> impl Strategy<Value = SceneObject> {
        (
            arb_vec(5.0),
            (0.01f64..2.0, 0.01f64..2.0, 0.01f64..2.0),
            -180.0f64..180.0,
            -180.0f64..180.0,
        )
            .prop_map(|(p, (hx, hy, hz), a, b)| {
                let obj = SceneObject::new("o", "thing", Vec3::new(hx, hy, hz)).at(p);
                apply_rotate(&apply_rotate(&obj, Axis::Y, a), Axis::X, b)
            })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(100))]

        #[test]
        fn direction_antisymmetric(a in arb_object(), b in arb_object(), shift in arb_vec(10.0)) {
            let ab = relative_direction(&a, &b, DEFAULT_DEAD_ZONE);
            let ba = relative_direction(&b, &a, DEFAULT_DEAD_ZONE);
            prop_assert_eq!(ab, ba.negated());
            // translation by a power-of-two grid keeps differences exact enough for the dead zone
            let shift = Vec3::new(shift.x.round(), shift.y.round(), shift.z.round());
            let a2 = apply_move(&a, a.position + shift).unwrap();
            let b2 = apply_move(&b, b.position + shift).unwrap();
            prop_assert_eq!(relative_direction(&a2, &b2, DEFAULT_DEAD_ZONE), ab);
        }

        #[test]
        fn world_aabb_contains_corners(obj in arb_object()) {
            let b = world_aabb(&obj);
            for c in obj.world_corners() {
                prop_assert!(b.contains(c, 1e-9));
            }
        }

        #[test]
        fn iou_bounded_and_symmetric(a in arb_object(), b in arb_object()) {
            let (ba, bb) = (world_aabb(&a), world_aabb(&b));
            let iou = aabb_iou(&ba, &bb);
            prop_assert!((0.0..=1.0).contains(&iou));
            prop_assert_eq!(iou, aabb_iou(&bb, &ba));
            prop_assert!((aabb_iou(&ba, &ba) - 1.0).abs() < 1e-12);
            if ba != bb {
                prop_assert!(iou < 1.0);
            }
        }
    }
}
