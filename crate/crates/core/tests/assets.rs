use std::fs;
use std::sync::Arc;

use motifsmith_core::assets::{
    build_index, pick_asset, rank_assets, relative_l1, AssetError, AssetIndex, AssetRecord, TOP_K,
};
use motifsmith_core::geo::{mesh_to_obj, TriMesh};
use motifsmith_core::scene::Vec3;
use tempfile::TempDir;

fn write_box(dir: &std::path::Path, name: &str, full: [f64; 3]) {
    let mesh = TriMesh::cuboid(Vec3::from(full) * 0.5).mapped(|v| v + Vec3::new(1.0, 2.0, 3.0));
    fs::write(dir.join(name), mesh_to_obj(&mesh)).unwrap();
}

#[test]
fn manifest_rows_are_indexed_with_warnings() {
    let dir = TempDir::new().unwrap();
    fs::create_dir(dir.path().join("meshes")).unwrap();
    write_box(&dir.path().join("meshes"), "a.obj", [0.2, 0.1, 0.3]);
    write_box(&dir.path().join("meshes"), "b.obj", [0.3, 0.1, 0.2]);
    let manifest = dir.path().join("assets.jsonl");
    fs::write(
        &manifest,
        [
            r#"{"asset_id": "a", "label": "book", "full_size": [0.2, 0.1, 0.3], "mesh_path": "meshes/a.obj"}"#,
            r#"{"asset_id": "b", "label": "Book", "wnsynset": "book.n.01", "full_size": [0.9, 0.9, 0.9], "mesh_path": "meshes/b.obj"}"#,
            r#"not json"#,
            r#"{"asset_id": "c", "label": "book", "full_size": [0.0, 0.1, 0.1], "mesh_path": "meshes/a.obj"}"#,
            r#"{"asset_id": "d", "label": "book", "full_size": [0.1, 0.1, 0.1], "mesh_path": "meshes/missing.obj"}"#,
            "",
            r#"{"asset_id": "b", "label": "Book", "wnsynset": "book.n.01", "full_size": [0.3, 0.1, 0.2], "mesh_path": "meshes/b.obj"}"#,
        ]
        .join("\n"),
    )
    .unwrap();
    let idx = build_index(&manifest).unwrap();
    assert_eq!(idx.len(), 2);
    assert_eq!(idx.warnings().len(), 4, "{:?}", idx.warnings());
    assert!(idx.warnings().iter().any(|w| w.contains("duplicate asset_id `b`")));
    assert_eq!(idx.get("b").unwrap().full_size, Vec3::new(0.3, 0.1, 0.2));

    let ranked = rank_assets(&idx, "book", Vec3::new(0.2, 0.1, 0.3), true).unwrap();
    assert_eq!(ranked.len(), 2);
    assert!(ranked.iter().all(|c| c.score < 1e-12));
    // tie on score, broken by id
    assert_eq!(ranked[0].record.asset_id, "a");
    assert!(ranked[0].orientation.is_identity(0.0));
    assert!(!ranked[1].orientation.is_identity(0.0));

    let rec = idx.get("a").unwrap();
    let m1 = idx.mesh(rec).unwrap();
    let m2 = idx.mesh(rec).unwrap();
    assert!(Arc::ptr_eq(&m1, &m2));
    assert!(m1.bounds().center().length() < 1e-9);
    assert!((m1.bounds().extents() - Vec3::new(0.2, 0.1, 0.3)).length() < 1e-5);
}

#[test]
fn missing_manifest_is_an_io_error() {
    assert!(matches!(
        build_index(std::path::Path::new("/nonexistent/assets.jsonl")),
        Err(AssetError::Io(_))
    ));
    let dir = TempDir::new().unwrap();
    let empty = dir.path().join("empty.jsonl");
    fs::write(&empty, "").unwrap();
    assert!(build_index(&empty).unwrap().is_empty());
}

#[test]
fn every_indexed_row_can_be_looked_up() {
    let records: Vec<AssetRecord> = (0..40)
        .map(|i| AssetRecord {
            asset_id: format!("asset_{i:03}"),
            label: format!("label_{}", i % 7),
            wnsynset: None,
            full_size: Vec3::new(0.1 + i as f64 * 0.01, 0.2, 0.3),
            mesh_path: format!("{i}.obj").into(),
        })
        .collect();
    let idx = AssetIndex::from_records(records.clone());
    for r in &records {
        assert!(idx
            .lookup(&r.label.to_uppercase(), None)
            .iter()
            .any(|x| x.asset_id == r.asset_id));
    }
}

/// Any axis permutation of the extents is reachable by a proper axis-aligned
/// rotation (a sign flip fixes the determinant), so the best score is the
/// minimum over the six permutations.
fn permutation_oracle(size: Vec3, target: Vec3) -> f64 {
    let s = size.to_array();
    [[0, 1, 2], [0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]]
        .iter()
        .map(|p| relative_l1(Vec3::new(s[p[0]], s[p[1]], s[p[2]]), target))
        .fold(f64::INFINITY, f64::min)
}

#[test]
fn rotation_search_matches_permutation_oracle() {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
    let records: Vec<AssetRecord> = (0..50)
        .map(|i| AssetRecord {
            asset_id: format!("a{i:02}"),
            label: "thing".into(),
            wnsynset: None,
            full_size: Vec3::new(
                rng.gen_range(0.05..1.0),
                rng.gen_range(0.05..1.0),
                rng.gen_range(0.05..1.0),
            ),
            mesh_path: "x.obj".into(),
        })
        .collect();
    let idx = AssetIndex::from_records(records);
    let target = Vec3::new(0.2, 0.1, 0.3);
    let ranked = rank_assets(&idx, "thing", target, true).unwrap();
    for c in &ranked {
        assert!((c.score - permutation_oracle(c.record.full_size, target)).abs() < 1e-12);
    }
    assert!(ranked.windows(2).all(|w| w[0].score <= w[1].score));

    let single = AssetIndex::from_records([AssetRecord {
        asset_id: "s".into(),
        label: "thing".into(),
        wnsynset: None,
        full_size: Vec3::new(0.3, 0.1, 0.2),
        mesh_path: "x.obj".into(),
    }]);
    let best = &rank_assets(&single, "thing", target, true).unwrap()[0];
    assert_eq!(best.score, 0.0);
    // a quarter turn about y swaps the x and z extents
    let m = best.orientation.to_row_major();
    assert_eq!(m[4], 1.0);
    assert_eq!(m[0], 0.0);
}

#[test]
fn larger_mismatch_ranks_later() {
    let make = |id: &str, f: f64| AssetRecord {
        asset_id: id.into(),
        label: "cup".into(),
        wnsynset: None,
        full_size: Vec3::new(0.1, 0.2, 0.1) * f,
        mesh_path: "x.obj".into(),
    };
    let idx = AssetIndex::from_records([make("a_big", 1.3), make("z_close", 1.1)]);
    let ranked = rank_assets(&idx, "cup", Vec3::new(0.1, 0.2, 0.1), false).unwrap();
    assert_eq!(ranked[0].record.asset_id, "z_close");
}

#[test]
fn top_five_picks_are_uniform() {
    let idx = AssetIndex::from_records((0..10).map(|i| AssetRecord {
        asset_id: format!("a{i}"),
        label: "x".into(),
        wnsynset: None,
        full_size: Vec3::new(1.0 + i as f64 * 0.1, 1.0, 1.0),
        mesh_path: "x.obj".into(),
    }));
    let ranked = rank_assets(&idx, "x", Vec3::splat(1.0), false).unwrap();
    let mut counts = [0usize; 10];
    let n = 10_000;
    for seed in 0..n {
        let p = pick_asset(&ranked, TOP_K, seed).unwrap();
        counts[ranked
            .iter()
            .position(|c| c.record.asset_id == p.record.asset_id)
            .unwrap()] += 1;
    }
    for (i, &c) in counts.iter().enumerate() {
        let f = c as f64 / n as f64;
        if i < TOP_K {
            assert!((f - 0.2).abs() <= 0.02, "slot {i}: {f}");
        } else {
            assert_eq!(c, 0);
        }
    }
}
