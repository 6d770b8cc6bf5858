//! Minimal Wavefront OBJ reading and writing.
//!
//! Reading accepts exactly:
//! - `v x y z [w]`: a vertex position; `w` is ignored.
//! - `f i j k ...`: a polygon of three or more corners. Each corner is
//!   `i`, `i/t`, `i//n` or `i/t/n`; only the position index `i` is used.
//!   Positive indices are 1-based; negative indices count back from the most
//!   recently declared vertex (`-1` is the last one). Polygons are
//!   triangulated as a fan around their first corner.
//! - Everything else (`vt`, `vn`, `o`, `g`, `s`, `usemtl`, `mtllib`,
//!   comments starting with `#`, blank lines) is ignored.
//!
//! Writing emits `o <name>` per object, `v` lines with six decimals, and
//! 1-based triangle `f` lines whose indices run across the whole file.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::mesh::{PlacedMesh, TriMesh};
use super::GeoError;
use crate::scene::Vec3;

pub fn parse_obj(text: &str) -> Result<TriMesh, GeoError> {
    let mut vertices = Vec::new();
    let mut triangles = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        let mut parts = line.split_whitespace();
        let bad = |msg: &str| GeoError::InvalidMesh(format!("line {}: {msg}: `{}`", n + 1, raw.trim()));
        match parts.next() {
            Some("v") => {
                let xyz: Vec<f64> = parts
                    .take(3)
                    .map(|p| p.parse::<f64>().map_err(|_| bad("bad coordinate")))
                    .collect::<Result<_, _>>()?;
                if xyz.len() != 3 {
                    return Err(bad("vertex needs three coordinates"));
                }
                vertices.push(Vec3::new(xyz[0], xyz[1], xyz[2]));
            }
            Some("f") => {
                let corners: Vec<u32> = parts
                    .map(|c| {
                        let idx: i64 = c
                            .split('/')
                            .next()
                            .and_then(|i| i.parse().ok())
                            .ok_or_else(|| bad("bad face index"))?;
                        let resolved = match idx {
                            0 => return Err(bad("face index 0")),
                            i if i > 0 => i - 1,
                            i => vertices.len() as i64 + i,
                        };
                        if resolved < 0 || resolved >= vertices.len() as i64 {
                            return Err(bad("face index out of range"));
                        }
                        Ok(resolved as u32)
                    })
                    .collect::<Result<_, _>>()?;
                if corners.len() < 3 {
                    return Err(bad("face needs three corners"));
                }
                for k in 1..corners.len() - 1 {
                    triangles.push([corners[0], corners[k], corners[k + 1]]);
                }
            }
            _ => {}
        }
    }
    TriMesh::new(vertices, triangles)
}

pub fn load_obj(path: &Path) -> Result<TriMesh, GeoError> {
    let text = fs::read_to_string(path).map_err(|e| GeoError::Io(format!("{}: {e}", path.display())))?;
    parse_obj(&text).map_err(|e| match e {
        GeoError::InvalidMesh(m) => GeoError::InvalidMesh(format!("{}: {m}", path.display())),
        other => other,
    })
}

pub fn mesh_to_obj(mesh: &TriMesh) -> String {
    let mut out = String::new();
    for v in mesh.vertices() {
        let _ = writeln!(out, "v {:.6} {:.6} {:.6}", v.x, v.y, v.z);
    }
    for t in mesh.triangles() {
        let _ = writeln!(out, "f {} {} {}", t[0] + 1, t[1] + 1, t[2] + 1);
    }
    out
}

/// All posed meshes in world coordinates as one OBJ document.
pub fn merged_obj(placed: &[PlacedMesh]) -> String {
    let mut out = String::from("# merged scene\n");
    let mut offset = 1u32;
    for p in placed {
        let name = match &p.object.asset_id {
            Some(asset) => format!("{}_{}", p.object.id, asset),
            None => p.object.id.clone(),
        };
        let _ = writeln!(out, "o {name}");
        for v in p.world_vertices() {
            let _ = writeln!(out, "v {:.6} {:.6} {:.6}", v.x, v.y, v.z);
        }
        for t in p.mesh.triangles() {
            let _ = writeln!(out, "f {} {} {}", t[0] + offset, t[1] + offset, t[2] + offset);
        }
        offset += p.mesh.vertices().len() as u32;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::SceneObject;

    #[test]
    fn reads_polygons_and_index_forms() {
        let text = "# quad\nv 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nvt 0 0\nvn 0 0 1\ng quad\nf 1/1/1 2//1 3 -1\n";
        let m = parse_obj(text).unwrap();
        assert_eq!(m.vertices().len(), 4);
        assert_eq!(m.triangles(), &[[0, 1, 2], [0, 2, 3]]);
    }

    #[test]
    fn rejects_bad_indices() {
        assert!(parse_obj("v 0 0 0\nv 1 0 0\nf 1 2 3\n").is_err());
        assert!(parse_obj("v 0 0 0\nf 0 1 1\n").is_err());
        assert!(parse_obj("v 0 0\n").is_err());
    }

    #[test]
    fn round_trip_preserves_geometry() {
        let cube = TriMesh::cuboid(Vec3::new(0.5, 0.25, 0.125));
        let back = parse_obj(&mesh_to_obj(&cube)).unwrap();
        assert_eq!(back.triangles(), cube.triangles());
        assert_eq!(back.vertices(), cube.vertices());
    }

    #[test]
    fn merged_indices_are_offset() {
        let a = PlacedMesh::boxed(SceneObject::new("obj_1", "box", Vec3::splat(0.5)));
        let b = PlacedMesh::boxed(SceneObject::new("obj_2", "box", Vec3::splat(0.5)).at(Vec3::new(2.0, 0.0, 0.0)));
        let text = merged_obj(&[a, b]);
        let m = parse_obj(&text).unwrap();
        assert_eq!(m.vertices().len(), 16);
        assert_eq!(m.triangles().len(), 24);
        assert!((m.bounds().max.x - 2.5).abs() < 1e-9);
        assert!(text.contains("o obj_2\n"));
    }
}
