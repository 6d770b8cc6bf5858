use std::sync::Arc;

use super::bvh::Bvh;
use super::GeoError;
use crate::scene::{Aabb, Rotation, SceneObject, Vec3};

/// Triangles smaller than this (m²) are dropped at construction.
pub const MIN_TRIANGLE_AREA: f64 = 1e-12;

/// Indexed triangle mesh in its local frame, with a BVH for ray queries.
#[derive(Clone, Debug)]
pub struct TriMesh {
    vertices: Vec<Vec3>,
    triangles: Vec<[u32; 3]>,
    tris: Vec<[Vec3; 3]>,
    bvh: Bvh,
    bounds: Aabb,
}

impl TriMesh {
    /// Validates indices and drops degenerate triangles.
    pub fn new(vertices: Vec<Vec3>, triangles: Vec<[u32; 3]>) -> Result<Self, GeoError> {
        if let Some(v) = vertices.iter().find(|v| !v.is_finite()) {
            return Err(GeoError::InvalidMesh(format!("non-finite vertex {v}")));
        }
        let n = vertices.len() as u32;
        if let Some(t) = triangles.iter().find(|t| t.iter().any(|&i| i >= n)) {
            return Err(GeoError::InvalidMesh(format!(
                "triangle {t:?} indexes past {} vertices",
                vertices.len()
            )));
        }
        let triangles: Vec<[u32; 3]> = triangles
            .into_iter()
            .filter(|t| {
                let [a, b, c] = t.map(|i| vertices[i as usize]);
                (b - a).cross(c - a).length() * 0.5 > MIN_TRIANGLE_AREA
            })
            .collect();
        if triangles.is_empty() {
            return Err(GeoError::InvalidMesh("mesh has no non-degenerate triangles".into()));
        }
        let tris: Vec<[Vec3; 3]> = triangles.iter().map(|t| t.map(|i| vertices[i as usize])).collect();
        let bounds = Aabb::from_points(tris.iter().flatten().copied()).expect("non-empty");
        let bvh = Bvh::build(&tris);
        Ok(TriMesh {
            vertices,
            triangles,
            tris,
            bvh,
            bounds,
        })
    }

    /// Closed box centered at the origin with outward-facing (counter-clockwise) triangles.
    pub fn cuboid(half: Vec3) -> Self {
        let (x, y, z) = (half.x, half.y, half.z);
        let vertices = vec![
            Vec3::new(-x, -y, -z),
            Vec3::new(x, -y, -z),
            Vec3::new(x, y, -z),
            Vec3::new(-x, y, -z),
            Vec3::new(-x, -y, z),
            Vec3::new(x, -y, z),
            Vec3::new(x, y, z),
            Vec3::new(-x, y, z),
        ];
        let triangles = vec![
            [0, 3, 2],
            [0, 2, 1],
            [4, 5, 6],
            [4, 6, 7],
            [0, 4, 7],
            [0, 7, 3],
            [1, 2, 6],
            [1, 6, 5],
            [0, 1, 5],
            [0, 5, 4],
            [3, 7, 6],
            [3, 6, 2],
        ];
        TriMesh::new(vertices, triangles).expect("cuboid with positive extents")
    }

    pub fn vertices(&self) -> &[Vec3] {
        &self.vertices
    }

    pub fn triangles(&self) -> &[[u32; 3]] {
        &self.triangles
    }

    /// Triangle corner positions, parallel to [`TriMesh::triangles`].
    pub fn triangle_corners(&self) -> &[[Vec3; 3]] {
        &self.tris
    }

    pub fn bounds(&self) -> Aabb {
        self.bounds
    }

    pub fn bvh(&self) -> &Bvh {
        &self.bvh
    }

    /// Copy translated so its bounding box is centered at the origin.
    pub fn centered(&self) -> TriMesh {
        let c = self.bounds.center();
        self.mapped(|v| v - c)
    }

    pub fn scaled(&self, factor: f64) -> TriMesh {
        self.mapped(|v| v * factor)
    }

    /// Copy with vertices mapped through `f` (used to re-orient canonical meshes).
    pub fn mapped(&self, f: impl Fn(Vec3) -> Vec3) -> TriMesh {
        let vertices = self.vertices.iter().map(|&v| f(v)).collect();
        TriMesh::new(vertices, self.triangles.clone()).expect("mapping keeps a valid mesh")
    }

    pub fn rotated(&self, r: &Rotation) -> TriMesh {
        self.mapped(|v| r.apply(v))
    }

    /// Outward unit normal of triangle `i` (counter-clockwise winding).
    pub fn normal(&self, i: usize) -> Vec3 {
        let [a, b, c] = self.tris[i];
        (b - a).cross(c - a).normalized().unwrap_or(Vec3::Y)
    }

    pub fn area(&self, i: usize) -> f64 {
        let [a, b, c] = self.tris[i];
        (b - a).cross(c - a).length() * 0.5
    }
}

/// A mesh posed in the world by a scene object: `world = R · local + position`.
#[derive(Clone, Debug)]
pub struct PlacedMesh {
    pub object: SceneObject,
    pub mesh: Arc<TriMesh>,
}

impl PlacedMesh {
    pub fn new(object: SceneObject, mesh: Arc<TriMesh>) -> Self {
        PlacedMesh { object, mesh }
    }

    /// A box mesh matching the object's own half size.
    pub fn boxed(object: SceneObject) -> Self {
        let mesh = Arc::new(TriMesh::cuboid(object.half_size));
        PlacedMesh { object, mesh }
    }

    pub fn to_world(&self, v: Vec3) -> Vec3 {
        self.object.rotation.apply(v) + self.object.position
    }

    pub fn to_local(&self, v: Vec3) -> Vec3 {
        self.object.rotation.transpose().apply(v - self.object.position)
    }

    pub fn dir_to_local(&self, d: Vec3) -> Vec3 {
        self.object.rotation.transpose().apply(d)
    }

    pub fn dir_to_world(&self, d: Vec3) -> Vec3 {
        self.object.rotation.apply(d)
    }

    pub fn world_vertices(&self) -> impl Iterator<Item = Vec3> + '_ {
        self.mesh.vertices().iter().map(|&v| self.to_world(v))
    }

    pub fn world_triangle(&self, i: usize) -> [Vec3; 3] {
        self.mesh.triangle_corners()[i].map(|v| self.to_world(v))
    }

    /// Bounding box of the posed vertices.
    pub fn world_bounds(&self) -> Aabb {
        Aabb::from_points(self.world_vertices()).expect("mesh has vertices")
    }

    pub fn translated(&self, d: Vec3) -> PlacedMesh {
        let mut out = self.clone();
        out.object.position += d;
        out
    }

    /// Nearest hit of a world-space ray on this mesh.
    pub fn ray_hit(&self, origin: Vec3, dir: Vec3) -> Option<f64> {
        let o = self.to_local(origin);
        let d = self.dir_to_local(dir);
        self.mesh.bvh().nearest_hit(self.mesh.triangle_corners(), o, d)
    }

    /// Inside test by ray parity along a fixed off-axis direction.
    pub fn contains_point(&self, p: Vec3) -> bool {
        if !self.world_bounds().contains(p, 0.0) {
            return false;
        }
        let dir = Vec3::new(0.5773, 0.5779, 0.5768).normalized().expect("non-zero");
        let o = self.to_local(p);
        self.mesh.bvh().count_hits(self.mesh.triangle_corners(), o, dir) % 2 == 1
    }
}
