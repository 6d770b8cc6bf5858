use std::time::Instant;

use motifsmith_core::geo::{meshes_intersect, optimize_arrangement, GeoConfig, PlacedMesh};
use motifsmith_core::scene::{Axis, Rotation, SceneObject, Vec3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_scene(seed: u64) -> Vec<PlacedMesh> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n: usize = rng.gen_range(3..=6);
    let mut out: Vec<PlacedMesh> = Vec::new();
    for i in 0..n {
        let half = Vec3::new(
            rng.gen_range(0.05..0.3),
            rng.gen_range(0.02..0.2),
            rng.gen_range(0.05..0.3),
        );
        let rot = Rotation::about_axis(Axis::Y, rng.gen_range(0.0..360.0));
        // every other object is dropped onto a previous one to force overlaps
        let pos = match out.last() {
            Some(prev) if i % 2 == 1 => {
                prev.object.position
                    + Vec3::new(
                        rng.gen_range(-0.1..0.1),
                        rng.gen_range(-0.05..0.1),
                        rng.gen_range(-0.1..0.1),
                    )
            }
            _ => Vec3::new(
                rng.gen_range(-0.6..0.6),
                rng.gen_range(0.0..0.8),
                rng.gen_range(-0.6..0.6),
            ),
        };
        let obj = SceneObject::new(format!("obj_{}", i + 1), "box", half)
            .at(pos)
            .with_rotation(rot);
        out.push(PlacedMesh::boxed(obj));
    }
    out
}

/// Independent support oracle for boxes spun about y: the bottom face is flat,
/// so an object is supported if it sits on the ground or on the top of another
/// object whose footprint overlaps its own.
fn supported(i: usize, placed: &[PlacedMesh], tol: f64) -> bool {
    let b = placed[i].world_bounds();
    if b.min.y.abs() <= tol {
        return true;
    }
    placed.iter().enumerate().any(|(j, o)| {
        let ob = o.world_bounds();
        j != i
            && (b.min.y - ob.max.y) >= -1e-9
            && (b.min.y - ob.max.y) <= tol
            && ob.min.x < b.max.x
            && ob.max.x > b.min.x
            && ob.min.z < b.max.z
            && ob.max.z > b.min.z
    })
}

#[test]
fn seeded_scenes_end_clean_and_supported() {
    let cfg = GeoConfig::default();
    for seed in 0..100u64 {
        for touch in [false, true] {
            let start = Instant::now();
            let out = optimize_arrangement(random_scene(seed), touch, &cfg).unwrap();
            assert!(start.elapsed().as_secs_f64() < 1.0, "seed {seed} too slow");
            let p = &out.placed;
            for i in 0..p.len() {
                for j in i + 1..p.len() {
                    assert!(
                        !meshes_intersect(&p[i], &p[j]),
                        "seed {seed} touch {touch}: {i} and {j} intersect"
                    );
                }
                assert!(
                    supported(i, p, cfg.contact_eps + 1e-9),
                    "seed {seed} touch {touch}: {i} unsupported"
                );
            }
            let again = optimize_arrangement(random_scene(seed), touch, &cfg).unwrap();
            assert_eq!(out.objects(), again.objects());
        }
    }
}

#[test]
fn earlier_objects_never_move() {
    let cfg = GeoConfig::default();
    let scene = random_scene(42);
    let first = optimize_arrangement(scene[..2].to_vec(), true, &cfg).unwrap();
    let full = optimize_arrangement(scene, true, &cfg).unwrap();
    assert_eq!(first.objects()[..], full.objects()[..2]);
}

#[test]
fn wedged_object_is_resolved_or_reported() {
    let cfg = GeoConfig::default();
    let wall = |id: &str, x: f64| {
        PlacedMesh::boxed(SceneObject::new(id, "box", Vec3::new(0.2, 0.5, 0.5)).at(Vec3::new(x, 0.5, 0.0)))
    };
    let wedge = PlacedMesh::boxed(SceneObject::new("w", "box", Vec3::new(0.15, 0.1, 0.1)).at(Vec3::new(0.0, 0.3, 0.0)));
    let out = optimize_arrangement(vec![wall("l", -0.25), wall("r", 0.25), wedge], false, &cfg).unwrap();
    let p = &out.placed;
    let clean = (0..3).all(|i| (i + 1..3).all(|j| !meshes_intersect(&p[i], &p[j])));
    assert!(clean || !out.failures.is_empty());
}
