//! Asset manifest indexing and dimension-based mesh retrieval.
//!
//! The manifest is JSON Lines, one record per line:
//!
//! ```text
//! {"asset_id": "plate_01", "label": "plate", "wnsynset": "plate.n.04", "full_size": [0.18, 0.03, 0.18], "mesh_path": "meshes/plate_01.obj"}
//! ```
//!
//! `mesh_path` is resolved relative to the manifest's directory. Meshes are
//! Wavefront OBJ files (see [`crate::geo::parse_obj`] for the accepted subset).

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::geo::{load_obj, GeoError, TriMesh};
use crate::scene::{Rotation, Vec3};

/// Candidates considered by [`pick_asset`] by default.
pub const TOP_K: usize = 5;

#[derive(Debug, thiserror::Error)]
pub enum AssetError {
    #[error("io error: {0}")]
    Io(String),
    #[error("no asset found for `{0}`")]
    NoAssetFound(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error(transparent)]
    Mesh(#[from] GeoError),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AssetRecord {
    pub asset_id: String,
    pub label: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wnsynset: Option<String>,
    /// Axis-aligned extents in the canonical pose, meters.
    pub full_size: Vec3,
    pub mesh_path: PathBuf,
}

#[derive(Debug, Deserialize)]
struct ManifestRow {
    asset_id: String,
    label: String,
    #[serde(default)]
    wnsynset: Option<String>,
    full_size: [f64; 3],
    mesh_path: PathBuf,
}

/// Immutable asset index grouped by lowercase label and by synset.
#[derive(Debug, Default)]
pub struct AssetIndex {
    records: BTreeMap<String, AssetRecord>,
    by_label: BTreeMap<String, Vec<String>>,
    by_synset: BTreeMap<String, Vec<String>>,
    warnings: Vec<String>,
    meshes: Mutex<HashMap<PathBuf, Arc<TriMesh>>>,
}

/// Read a manifest. Malformed rows and rows whose mesh file does not exist are
/// skipped with a warning; a repeated `asset_id` replaces the earlier row.
pub fn build_index(manifest: &Path) -> Result<AssetIndex, AssetError> {
    let text = fs::read_to_string(manifest).map_err(|e| AssetError::Io(format!("{}: {e}", manifest.display())))?;
    let base = manifest.parent().unwrap_or(Path::new("."));
    let mut rows = Vec::new();
    let mut warnings = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let row: ManifestRow = match serde_json::from_str(line) {
            Ok(r) => r,
            Err(e) => {
                warnings.push(format!("line {}: {e}", n + 1));
                continue;
            }
        };
        let size = Vec3::from(row.full_size);
        if !size.is_finite() || size.min_elem() <= 0.0 {
            warnings.push(format!(
                "line {}: `{}` has non-positive full_size {size}",
                n + 1,
                row.asset_id
            ));
            continue;
        }
        let mesh_path = base.join(&row.mesh_path);
        if !mesh_path.is_file() {
            warnings.push(format!(
                "line {}: `{}` mesh {} not found",
                n + 1,
                row.asset_id,
                mesh_path.display()
            ));
            continue;
        }
        rows.push(AssetRecord {
            asset_id: row.asset_id,
            label: row.label,
            wnsynset: row.wnsynset.filter(|s| !s.is_empty()),
            full_size: size,
            mesh_path,
        });
    }
    let mut index = AssetIndex::from_records(rows);
    warnings.append(&mut index.warnings);
    index.warnings = warnings;
    Ok(index)
}

impl AssetIndex {
    pub fn from_records(rows: impl IntoIterator<Item = AssetRecord>) -> Self {
        let mut index = AssetIndex::default();
        for r in rows {
            if index.records.contains_key(&r.asset_id) {
                index
                    .warnings
                    .push(format!("duplicate asset_id `{}`; keeping the later row", r.asset_id));
            }
            index.records.insert(r.asset_id.clone(), r);
        }
        for r in index.records.values() {
            index
                .by_label
                .entry(r.label.to_lowercase())
                .or_default()
                .push(r.asset_id.clone());
            if let Some(s) = &r.wnsynset {
                index.by_synset.entry(s.clone()).or_default().push(r.asset_id.clone());
            }
        }
        index
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn warnings(&self) -> &[String] {
        &self.warnings
    }

    pub fn get(&self, asset_id: &str) -> Option<&AssetRecord> {
        self.records.get(asset_id)
    }

    pub fn records(&self) -> impl Iterator<Item = &AssetRecord> {
        self.records.values()
    }

    pub fn labels(&self) -> impl Iterator<Item = &str> {
        self.by_label.keys().map(String::as_str)
    }

    /// Records for a synset when any are indexed under it, otherwise records
    /// whose label matches case-insensitively. Unknown keys give nothing.
    pub fn lookup(&self, label: &str, wnsynset: Option<&str>) -> Vec<&AssetRecord> {
        let ids = wnsynset
            .and_then(|s| self.by_synset.get(s))
            .or_else(|| self.by_label.get(&label.to_lowercase()));
        ids.map(|ids| ids.iter().map(|id| &self.records[id]).collect())
            .unwrap_or_default()
    }

    /// The record's mesh, centered on its bounding box, loaded once per path.
    pub fn mesh(&self, record: &AssetRecord) -> Result<Arc<TriMesh>, AssetError> {
        let mut cache = self.meshes.lock().unwrap_or_else(|p| p.into_inner());
        if let Some(m) = cache.get(&record.mesh_path) {
            return Ok(m.clone());
        }
        let mesh = Arc::new(load_obj(&record.mesh_path)?.centered());
        cache.insert(record.mesh_path.clone(), mesh.clone());
        Ok(mesh)
    }
}

/// The 24 proper axis-aligned rotations, identity first.
pub fn axis_rotations() -> Vec<Rotation> {
    const PERMS: [[usize; 3]; 6] = [[0, 1, 2], [0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]];
    let mut out = Vec::with_capacity(24);
    for p in PERMS {
        for signs in 0..8u8 {
            let mut m = [[0.0; 3]; 3];
            for (row, &col) in p.iter().enumerate() {
                m[row][col] = if signs & (1 << row) == 0 { 1.0 } else { -1.0 };
            }
            let r = Rotation::from_rows(m);
            if r.determinant() > 0.0 {
                out.push(r);
            }
        }
    }
    out
}

/// Extents of a box with canonical extents `size` after rotation `r`.
pub fn oriented_size(r: &Rotation, size: Vec3) -> Vec3 {
    let m = r.to_row_major();
    Vec3::new(
        m[0].abs() * size.x + m[1].abs() * size.y + m[2].abs() * size.z,
        m[3].abs() * size.x + m[4].abs() * size.y + m[5].abs() * size.z,
        m[6].abs() * size.x + m[7].abs() * size.y + m[8].abs() * size.z,
    )
}

/// Sum over axes of `|size - target| / target`.
pub fn relative_l1(size: Vec3, target: Vec3) -> f64 {
    (0..3).map(|i| (size[i] - target[i]).abs() / target[i]).sum()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RankedCandidate {
    pub record: AssetRecord,
    /// Maps the canonical mesh into the target's frame.
    pub orientation: Rotation,
    /// Lower is better; 0 is an exact fit.
    pub score: f64,
}

/// Score every record for `label` against `target_full_size` and sort
/// ascending, ties broken by asset id.
pub fn rank_assets(
    index: &AssetIndex,
    label: &str,
    target_full_size: Vec3,
    allow_rotation: bool,
) -> Result<Vec<RankedCandidate>, AssetError> {
    rank_records(index.lookup(label, None), target_full_size, allow_rotation)
}

pub fn rank_records<'a>(
    records: impl IntoIterator<Item = &'a AssetRecord>,
    target: Vec3,
    allow_rotation: bool,
) -> Result<Vec<RankedCandidate>, AssetError> {
    if !target.is_finite() || target.min_elem() <= 0.0 {
        return Err(AssetError::InvalidArgument(format!(
            "target size {target} must be positive"
        )));
    }
    let orientations = if allow_rotation {
        axis_rotations()
    } else {
        vec![Rotation::IDENTITY]
    };
    let mut ranked: Vec<RankedCandidate> = records
        .into_iter()
        .map(|record| {
            // first orientation wins ties, so identity is kept when it fits as well
            let (orientation, score) = orientations
                .iter()
                .map(|r| (*r, relative_l1(oriented_size(r, record.full_size), target)))
                .fold((Rotation::IDENTITY, f64::INFINITY), |best, cur| {
                    if cur.1 < best.1 {
                        cur
                    } else {
                        best
                    }
                });
            RankedCandidate {
                record: record.clone(),
                orientation,
                score,
            }
        })
        .collect();
    ranked.sort_by(|a, b| {
        a.score
            .total_cmp(&b.score)
            .then_with(|| a.record.asset_id.cmp(&b.record.asset_id))
    });
    Ok(ranked)
}

/// Uniform seeded pick among the first `min(k, len)` candidates.
pub fn pick_asset(ranked: &[RankedCandidate], k: usize, rng_seed: u64) -> Result<RankedCandidate, AssetError> {
    if ranked.is_empty() {
        return Err(AssetError::NoAssetFound("empty candidate list".into()));
    }
    let n = k.clamp(1, ranked.len());
    let i = ChaCha8Rng::seed_from_u64(rng_seed).gen_range(0..n);
    Ok(ranked[i].clone())
}
