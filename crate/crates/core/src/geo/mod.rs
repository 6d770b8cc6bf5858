//! Mesh-level arrangement optimization: penetration resolution, damped
//! approach to contact, and support settling.

mod bvh;
pub mod intersect;
mod mesh;
mod obj;
mod sampling;

use serde::{Deserialize, Serialize};

pub use bvh::Bvh;
pub use mesh::{PlacedMesh, TriMesh, MIN_TRIANGLE_AREA};
pub use obj::{load_obj, merged_obj, mesh_to_obj, parse_obj};
pub use sampling::{r2, surface_samples};

use crate::scene::{Aabb, SceneObject, Vec3};
use intersect::{triangle_aabb, triangles_intersect};

/// Bound on translate-and-recheck steps when separating one object.
pub const MAX_RESOLVE_STEPS: usize = 32;
const BISECTION_STEPS: usize = 24;
const SUPPORT_PASSES: usize = 4;
const UNIT_TOL: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GeoConfig {
    pub contact_eps: f64,
    pub margin: f64,
    pub max_contact_iters: u32,
    pub n_surface_rays: usize,
    pub n_support_rays: usize,
    pub ground_y: f64,
}

impl Default for GeoConfig {
    fn default() -> Self {
        GeoConfig {
            contact_eps: 0.002,
            margin: 0.002,
            max_contact_iters: 10,
            n_surface_rays: 64,
            n_support_rays: 16,
            ground_y: 0.0,
        }
    }
}

impl GeoConfig {
    pub fn validate(&self) -> Result<(), GeoError> {
        let positive = self.contact_eps > 0.0
            && self.margin > 0.0
            && self.max_contact_iters > 0
            && self.n_surface_rays > 0
            && self.n_support_rays > 0;
        if !positive || !self.contact_eps.is_finite() || !self.margin.is_finite() || !self.ground_y.is_finite() {
            return Err(GeoError::InvalidArgument(format!("invalid geometry config {self:?}")));
        }
        Ok(())
    }

    /// Clearance kept when closing a gap, so contact never becomes overlap.
    pub fn skin(&self) -> f64 {
        self.contact_eps / 4.0
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum GeoError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("invalid mesh: {0}")]
    InvalidMesh(String),
    #[error("io error: {0}")]
    Io(String),
    #[error("optimization failed for {object}: {reason}")]
    OptimizationFailed { object: String, reason: String },
}

/// Nearest positive hit of a world ray over all targets.
pub fn ray_mesh_intersect(origin: Vec3, dir: Vec3, targets: &[PlacedMesh]) -> Result<Option<f64>, GeoError> {
    if (dir.length() - 1.0).abs() > UNIT_TOL {
        return Err(GeoError::InvalidArgument(format!(
            "ray direction {dir} is not unit length"
        )));
    }
    Ok(targets
        .iter()
        .filter_map(|t| t.ray_hit(origin, dir))
        .min_by(f64::total_cmp))
}

/// Whether any triangle pair crosses, or one mesh encloses the other.
pub fn meshes_intersect(a: &PlacedMesh, b: &PlacedMesh) -> bool {
    let (ab, bb) = (a.world_bounds(), b.world_bounds());
    let Some(common) = ab.intersection(&bb) else {
        return false;
    };
    let btris = b.mesh.triangle_corners();
    for i in 0..a.mesh.triangles().len() {
        let tw = a.world_triangle(i);
        if !triangle_aabb(tw).overlaps(&common) {
            continue;
        }
        let tl = tw.map(|v| b.to_local(v));
        let mut hit = false;
        b.mesh.bvh().for_each_overlapping(&triangle_aabb(tl), |j| {
            hit = triangles_intersect(tl, btris[j]);
            !hit
        });
        if hit {
            return true;
        }
    }
    // no crossings: either one surface lies wholly inside the other or they are apart
    encloses(b, &bb, a, &ab) || encloses(a, &ab, b, &bb)
}

fn encloses(outer: &PlacedMesh, outer_bounds: &Aabb, inner: &PlacedMesh, inner_bounds: &Aabb) -> bool {
    let inside_box =
        (0..3).all(|i| inner_bounds.min[i] > outer_bounds.min[i] && inner_bounds.max[i] < outer_bounds.max[i]);
    inside_box && outer.contains_point(inner.to_world(inner.mesh.vertices()[inner.mesh.triangles()[0][0] as usize]))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Penetration {
    pub depth: f64,
    /// Unit direction in which `a` should move to separate from `b`.
    pub direction: Vec3,
}

/// Support half-width of a box along `d`.
fn projected_radius(b: &Aabb, d: Vec3) -> f64 {
    let h = b.extents() * 0.5;
    d.x.abs() * h.x + d.y.abs() * h.y + d.z.abs() * h.z
}

/// Translation of `a` along `dir` that separates the projections of the two boxes.
fn separation_along(a: &Aabb, b: &Aabb, dir: Vec3) -> f64 {
    let b_max = b.center().dot(dir) + projected_radius(b, dir);
    let a_min = a.center().dot(dir) - projected_radius(a, dir);
    (b_max - a_min).max(0.0)
}

/// Penetration of `a` into `b`: `None` unless triangles intersect. Direction is
/// from `b`'s centroid to `a`'s (falling back to +y when they coincide); depth is
/// the world-AABB overlap along that direction.
pub fn mesh_penetration(a: &PlacedMesh, b: &PlacedMesh) -> Option<Penetration> {
    if !meshes_intersect(a, b) {
        return None;
    }
    let direction = (a.object.position - b.object.position).normalized().unwrap_or(Vec3::Y);
    let depth = separation_along(&a.world_bounds(), &b.world_bounds(), direction);
    Some(Penetration { depth, direction })
}

fn intersects_any(m: &PlacedMesh, others: &[PlacedMesh]) -> bool {
    others.iter().any(|o| meshes_intersect(m, o))
}

/// Translate `moving` out of every fixed mesh it penetrates, deepest first,
/// by depth + margin per step. A push that would sink the object below the
/// ground is replaced by an upward push.
pub fn resolve_intersection(
    moving: &PlacedMesh,
    fixed: &[PlacedMesh],
    cfg: &GeoConfig,
) -> Result<SceneObject, GeoError> {
    let mut cur = moving.clone();
    for _ in 0..MAX_RESOLVE_STEPS {
        let mut deepest: Option<(Penetration, &PlacedMesh)> = None;
        for f in fixed {
            if let Some(p) = mesh_penetration(&cur, f) {
                if deepest.is_none_or(|(d, _)| p.depth > d.depth) {
                    deepest = Some((p, f));
                }
            }
        }
        let Some((pen, other)) = deepest else {
            return Ok(cur.object);
        };
        let mut step = pen.direction * (pen.depth + cfg.margin);
        if step.y < 0.0 && cur.world_bounds().min.y + step.y < cfg.ground_y - UNIT_TOL {
            let up = separation_along(&cur.world_bounds(), &other.world_bounds(), Vec3::Y);
            step = Vec3::Y * (up + cfg.margin);
        }
        cur = cur.translated(step);
    }
    if intersects_any(&cur, fixed) {
        return Err(GeoError::OptimizationFailed {
            object: moving.object.id.clone(),
            reason: format!("still intersecting after {MAX_RESOLVE_STEPS} separation steps"),
        });
    }
    Ok(cur.object)
}

/// Binary search on the segment from a non-intersecting pose `safe` toward
/// `target` for the furthest pose that stays clear of `others`.
fn backoff(safe: &PlacedMesh, target: &PlacedMesh, others: &[PlacedMesh]) -> PlacedMesh {
    let delta = target.object.position - safe.object.position;
    let (mut lo, mut hi) = (0.0, 1.0);
    for _ in 0..BISECTION_STEPS {
        let mid = 0.5 * (lo + hi);
        if intersects_any(&safe.translated(delta * mid), others) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    safe.translated(delta * lo)
}

/// Gap between `a` and `b` along `dir`, measured by rays from `a`'s facing
/// samples toward `b` and from `b`'s facing samples back toward `a`.
fn directional_gap(a: &PlacedMesh, a_samples: &[Vec3], b: &PlacedMesh, b_samples: &[Vec3], dir: Vec3) -> Option<f64> {
    let forward = a_samples.iter().filter_map(|&p| b.ray_hit(a.to_world(p), dir));
    let backward = b_samples.iter().filter_map(|&p| a.ray_hit(b.to_world(p), -dir));
    forward.chain(backward).min_by(f64::total_cmp)
}

fn facing_samples(m: &PlacedMesh, n: usize, toward: Vec3) -> Vec<Vec3> {
    let mesh = &m.mesh;
    surface_samples(mesh, n, |i| m.dir_to_world(mesh.normal(i)).dot(toward) > 0.0)
        .into_iter()
        .map(|(p, _)| p)
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct Approach {
    pub object: SceneObject,
    /// Ray-casting rounds performed.
    pub iterations: u32,
    /// Translation length applied in each round.
    pub steps: Vec<f64>,
}

/// Close the gap to `neighbor` along the centroid-to-centroid direction with
/// harmonically damped steps `(d - skin) / (1 + k)` until within `contact_eps`.
pub fn approach_until_contact(moving: &PlacedMesh, neighbor: &PlacedMesh, cfg: &GeoConfig) -> Approach {
    let unchanged = Approach {
        object: moving.object.clone(),
        iterations: 0,
        steps: Vec::new(),
    };
    let Some(dir) = (neighbor.object.position - moving.object.position).normalized() else {
        return unchanged;
    };
    let mine = facing_samples(moving, cfg.n_surface_rays, dir);
    if mine.is_empty() {
        tracing::warn!(object = %moving.object.id, "no surface faces the neighbor; not moving");
        return unchanged;
    }
    let theirs = facing_samples(neighbor, cfg.n_surface_rays, -dir);
    let others = std::slice::from_ref(neighbor);

    let mut cur = moving.clone();
    let mut out = unchanged;
    for k in 0..cfg.max_contact_iters {
        let Some(d) = directional_gap(&cur, &mine, neighbor, &theirs, dir) else {
            break;
        };
        out.iterations += 1;
        if d <= cfg.contact_eps {
            break;
        }
        let step = (d - cfg.skin()) / (1.0 + k as f64);
        let next = cur.translated(dir * step);
        if intersects_any(&next, others) {
            let safe = backoff(&cur, &next, others);
            out.steps.push((safe.object.position - cur.object.position).length());
            cur = safe;
            break;
        }
        out.steps.push(step);
        cur = next;
    }
    out.object = cur.object;
    out
}

fn bottom(m: &PlacedMesh) -> f64 {
    m.world_bounds().min.y
}

/// Downward clearance from `m` to the nearest mesh below it, if any.
fn support_gap(m: &PlacedMesh, others: &[PlacedMesh], cfg: &GeoConfig) -> Option<f64> {
    let down = -Vec3::Y;
    let b = m.world_bounds();
    let mut origins: Vec<Vec3> = facing_samples(m, cfg.n_support_rays, down)
        .into_iter()
        .map(|p| m.to_world(p))
        .collect();
    let mut verts: Vec<Vec3> = m.world_vertices().collect();
    verts.sort_by(|a, b| a.y.total_cmp(&b.y).then(a.x.total_cmp(&b.x)).then(a.z.total_cmp(&b.z)));
    origins.extend(verts.into_iter().take(cfg.n_support_rays));
    let from_above = origins
        .iter()
        .filter_map(|&o| others.iter().filter_map(|t| t.ray_hit(o, down)).min_by(f64::total_cmp));
    // points of meshes below, inside this object's footprint, looking up
    let from_below = others.iter().flat_map(|t| {
        t.world_vertices()
            .filter(move |v| {
                v.x >= b.min.x && v.x <= b.max.x && v.z >= b.min.z && v.z <= b.max.z && v.y <= b.min.y + 1e-9
            })
            .filter_map(|v| m.ray_hit(v, Vec3::Y))
            .collect::<Vec<_>>()
    });
    from_above.chain(from_below).min_by(f64::total_cmp)
}

/// Drop `moving` onto whatever lies below it, or onto the ground, unless it
/// is already supported within `contact_eps` less the skin.
pub fn settle_support(moving: &PlacedMesh, others: &[PlacedMesh], cfg: &GeoConfig) -> SceneObject {
    let mut cur = moving.clone();
    let rest = cfg.contact_eps - cfg.skin();
    for _ in 0..SUPPORT_PASSES {
        let ground_gap = bottom(&cur) - cfg.ground_y;
        let gap = support_gap(&cur, others, cfg);
        if ground_gap <= rest || gap.is_some_and(|g| g <= rest) {
            break;
        }
        let drop = match gap {
            Some(g) if g < ground_gap => g - cfg.skin(),
            _ => ground_gap,
        };
        let next = cur.translated(-Vec3::Y * drop);
        if intersects_any(&next, others) {
            cur = backoff(&cur, &next, others);
        } else {
            cur = next;
        }
    }
    cur.object
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObjectFailure {
    pub object_id: String,
    pub message: String,
}

#[derive(Clone, Debug)]
pub struct Optimized {
    pub placed: Vec<PlacedMesh>,
    pub failures: Vec<ObjectFailure>,
}

impl Optimized {
    pub fn objects(&self) -> Vec<SceneObject> {
        self.placed.iter().map(|p| p.object.clone()).collect()
    }
}

/// Place objects one at a time in order; each new object is separated from,
/// optionally brought into contact with, and settled onto those before it.
/// Earlier objects never move.
pub fn optimize_arrangement(placed: Vec<PlacedMesh>, touch: bool, cfg: &GeoConfig) -> Result<Optimized, GeoError> {
    cfg.validate()?;
    let mut settled: Vec<PlacedMesh> = Vec::with_capacity(placed.len());
    let mut failures = Vec::new();
    for pm in placed {
        let mut cur = pm;
        let sunk = cfg.ground_y - bottom(&cur);
        if sunk > 0.0 {
            cur = cur.translated(Vec3::Y * sunk);
        }
        if !settled.is_empty() {
            match resolve_intersection(&cur, &settled, cfg) {
                Ok(obj) => cur.object = obj,
                Err(e) => {
                    failures.push(ObjectFailure {
                        object_id: cur.object.id.clone(),
                        message: format!("{e}; lifted above the settled objects"),
                    });
                    let top = settled.iter().map(|s| s.world_bounds().max.y).fold(f64::MIN, f64::max);
                    cur = cur.translated(Vec3::Y * (top - bottom(&cur) + cfg.margin));
                }
            }
            if touch {
                let nearest = settled
                    .iter()
                    .enumerate()
                    .min_by(|(i, a), (j, b)| {
                        let da = a.object.position.distance(cur.object.position);
                        let db = b.object.position.distance(cur.object.position);
                        da.total_cmp(&db).then(i.cmp(j))
                    })
                    .map(|(_, s)| s)
                    .expect("settled is non-empty");
                let moved = PlacedMesh::new(approach_until_contact(&cur, nearest, cfg).object, cur.mesh.clone());
                if !intersects_any(&moved, &settled) && bottom(&moved) >= cfg.ground_y - UNIT_TOL {
                    cur = moved;
                }
            }
        }
        cur.object = settle_support(&cur, &settled, cfg);
        settled.push(cur);
    }
    Ok(Optimized {
        placed: settled,
        failures,
    })
}
