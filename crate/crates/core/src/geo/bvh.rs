use super::intersect::{ray_aabb, ray_triangle, triangle_aabb};
use crate::scene::{Aabb, Vec3};

const LEAF_SIZE: usize = 4;

#[derive(Clone, Debug)]
struct Node {
    bounds: Aabb,
    /// Leaf: `first..first + count` into `order`. Inner: children at `first`, `first + 1`.
    first: u32,
    count: u32,
}

/// Bounding-volume hierarchy over a triangle list (median split on the
/// longest centroid axis).
#[derive(Clone, Debug, Default)]
pub struct Bvh {
    nodes: Vec<Node>,
    order: Vec<u32>,
}

impl Bvh {
    pub fn build(tris: &[[Vec3; 3]]) -> Self {
        if tris.is_empty() {
            return Bvh::default();
        }
        let boxes: Vec<Aabb> = tris.iter().map(|t| triangle_aabb(*t)).collect();
        let centers: Vec<Vec3> = boxes.iter().map(Aabb::center).collect();
        let mut bvh = Bvh {
            nodes: Vec::with_capacity(2 * tris.len() / LEAF_SIZE + 1),
            order: (0..tris.len() as u32).collect(),
        };
        bvh.nodes.push(Node {
            bounds: boxes[0],
            first: 0,
            count: tris.len() as u32,
        });
        let mut stack = vec![0usize];
        while let Some(ni) = stack.pop() {
            let (first, count) = (bvh.nodes[ni].first as usize, bvh.nodes[ni].count as usize);
            let items = &mut bvh.order[first..first + count];
            let bounds = items
                .iter()
                .map(|&i| boxes[i as usize])
                .reduce(|a, b| a.union(&b))
                .expect("non-empty node");
            bvh.nodes[ni].bounds = bounds;
            if count <= LEAF_SIZE {
                continue;
            }
            let cb = Aabb::from_points(items.iter().map(|&i| centers[i as usize])).expect("non-empty node");
            let ext = cb.extents();
            let axis = if ext.x >= ext.y && ext.x >= ext.z {
                0
            } else if ext.y >= ext.z {
                1
            } else {
                2
            };
            let mid = count / 2;
            items.select_nth_unstable_by(mid, |&a, &b| {
                centers[a as usize][axis]
                    .total_cmp(&centers[b as usize][axis])
                    .then(a.cmp(&b))
            });
            let left = bvh.nodes.len();
            bvh.nodes.push(Node {
                bounds,
                first: first as u32,
                count: mid as u32,
            });
            bvh.nodes.push(Node {
                bounds,
                first: (first + mid) as u32,
                count: (count - mid) as u32,
            });
            bvh.nodes[ni].first = left as u32;
            bvh.nodes[ni].count = 0;
            stack.push(left);
            stack.push(left + 1);
        }
        bvh
    }

    pub fn bounds(&self) -> Option<Aabb> {
        self.nodes.first().map(|n| n.bounds)
    }

    /// Nearest hit parameter along the ray, if any.
    pub fn nearest_hit(&self, tris: &[[Vec3; 3]], origin: Vec3, dir: Vec3) -> Option<f64> {
        let inv = Vec3::new(1.0 / dir.x, 1.0 / dir.y, 1.0 / dir.z);
        let mut best = f64::INFINITY;
        self.walk_ray(origin, inv, &mut best, |i, best| {
            let [a, b, c] = tris[i];
            if let Some(t) = ray_triangle(origin, dir, a, b, c) {
                if t < *best {
                    *best = t;
                }
            }
        });
        best.is_finite().then_some(best)
    }

    /// Number of triangles the ray crosses (for inside/outside parity).
    pub fn count_hits(&self, tris: &[[Vec3; 3]], origin: Vec3, dir: Vec3) -> usize {
        let inv = Vec3::new(1.0 / dir.x, 1.0 / dir.y, 1.0 / dir.z);
        let mut n = 0;
        let mut unbounded = f64::INFINITY;
        self.walk_ray(origin, inv, &mut unbounded, |i, _| {
            let [a, b, c] = tris[i];
            if ray_triangle(origin, dir, a, b, c).is_some() {
                n += 1;
            }
        });
        n
    }

    fn walk_ray(&self, origin: Vec3, inv: Vec3, best: &mut f64, mut visit: impl FnMut(usize, &mut f64)) {
        if self.nodes.is_empty() {
            return;
        }
        let mut stack = vec![0usize];
        while let Some(ni) = stack.pop() {
            let node = &self.nodes[ni];
            if ray_aabb(origin, inv, &node.bounds, *best).is_none() {
                continue;
            }
            if node.count > 0 {
                let first = node.first as usize;
                for &ti in &self.order[first..first + node.count as usize] {
                    visit(ti as usize, best);
                }
            } else {
                stack.push(node.first as usize);
                stack.push(node.first as usize + 1);
            }
        }
    }

    /// Calls `visit` for every triangle whose bounds overlap `query`.
    pub fn for_each_overlapping(&self, query: &Aabb, mut visit: impl FnMut(usize) -> bool) {
        if self.nodes.is_empty() {
            return;
        }
        let mut stack = vec![0usize];
        while let Some(ni) = stack.pop() {
            let node = &self.nodes[ni];
            if !node.bounds.overlaps(query) {
                continue;
            }
            if node.count > 0 {
                let first = node.first as usize;
                for &ti in &self.order[first..first + node.count as usize] {
                    if !visit(ti as usize) {
                        return;
                    }
                }
            } else {
                stack.push(node.first as usize);
                stack.push(node.first as usize + 1);
            }
        }
    }
}
