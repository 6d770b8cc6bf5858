use super::mesh::TriMesh;
use crate::scene::Vec3;

// R2 sequence constants (1/g and 1/g² for the plastic number g)
const R2_A1: f64 = 0.754_877_666_246_692_7;
const R2_A2: f64 = 0.569_840_290_998_053_2;

/// The `i`-th point of the R2 low-discrepancy sequence in the unit square.
pub fn r2(i: usize) -> (f64, f64) {
    let n = i as f64;
    ((0.5 + R2_A1 * n).fract(), (0.5 + R2_A2 * n).fract())
}

/// Deterministic area-weighted surface samples (local frame) over the
/// triangles accepted by `keep`. Returns `(point, triangle index)` pairs.
pub fn surface_samples(mesh: &TriMesh, n: usize, keep: impl Fn(usize) -> bool) -> Vec<(Vec3, usize)> {
    let chosen: Vec<usize> = (0..mesh.triangles().len()).filter(|&i| keep(i)).collect();
    if chosen.is_empty() || n == 0 {
        return Vec::new();
    }
    let mut cdf = Vec::with_capacity(chosen.len());
    let mut total = 0.0;
    for &i in &chosen {
        total += mesh.area(i);
        cdf.push(total);
    }
    (0..n)
        .map(|k| {
            let (u1, u2) = r2(k);
            let target = u1 * total;
            let slot = cdf.partition_point(|&c| c < target).min(chosen.len() - 1);
            let lo = if slot == 0 { 0.0 } else { cdf[slot - 1] };
            let width = (cdf[slot] - lo).max(f64::MIN_POSITIVE);
            let r1 = ((target - lo) / width).clamp(0.0, 1.0);
            let [a, b, c] = mesh.triangle_corners()[chosen[slot]];
            let s = r1.sqrt();
            (a * (1.0 - s) + b * (s * (1.0 - u2)) + c * (s * u2), chosen[slot])
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn samples_lie_on_the_selected_faces() {
        let m = TriMesh::cuboid(Vec3::new(1.0, 0.5, 2.0));
        let top = surface_samples(&m, 64, |i| m.normal(i).y > 0.9);
        assert_eq!(top.len(), 64);
        for (p, _) in &top {
            assert!((p.y - 0.5).abs() < 1e-12);
            assert!(p.x.abs() <= 1.0 + 1e-12 && p.z.abs() <= 2.0 + 1e-12);
        }
        let again = surface_samples(&m, 64, |i| m.normal(i).y > 0.9);
        assert_eq!(top, again);
        assert!(surface_samples(&m, 8, |_| false).is_empty());
    }

    #[test]
    fn samples_spread_over_the_face() {
        let m = TriMesh::cuboid(Vec3::splat(1.0));
        let pts = surface_samples(&m, 256, |i| m.normal(i).y > 0.9);
        let quadrants = pts.iter().fold([0; 4], |mut q, (p, _)| {
            q[(p.x > 0.0) as usize * 2 + (p.z > 0.0) as usize] += 1;
            q
        });
        assert!(quadrants.iter().all(|&c| c > 40), "{quadrants:?}");
    }
}
