//! Regenerates the offline fixtures under `fixtures/`: replay fixtures for
//! every LLM exchange, recorded executor traces, and a small box-mesh asset
//! set. Replies come from `fixtures/golden/replies/<template>.txt`; traces
//! are computed here for the handful of programs those replies contain.
//!
//! ```text
//! cargo run -p motifsmith-core --example record_golden
//! ```

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use motifsmith_core::assets::build_index;
use motifsmith_core::exec::{
    Entry, ExecError, ExecErrorKind, ExecRequest, ObjectTrace, RecordingExecutor, ScriptedExecutor, TracedObject,
};
use motifsmith_core::geo::{mesh_to_obj, TriMesh};
use motifsmith_core::llm::{LlmError, RecordingBackend, ScriptedBackend};
use motifsmith_core::pipeline::{Orchestrator, PipelineConfig};
use motifsmith_core::program::ProgramLibrary;
use motifsmith_core::scene::{Arrangement, Rotation, Vec3};

const ASSETS: &[(&str, &str, [f64; 3])] = &[
    ("book_01", "book", [0.20, 0.04, 0.28]),
    ("book_02", "book", [0.21, 0.035, 0.27]),
    ("book_03", "book", [0.19, 0.045, 0.29]),
    ("book_04", "book", [0.15, 0.03, 0.23]),
    ("book_05", "book", [0.24, 0.05, 0.32]),
    ("book_06", "book", [0.30, 0.06, 0.40]),
    ("plate_01", "plate", [0.18, 0.03, 0.18]),
    ("plate_02", "plate", [0.26, 0.025, 0.26]),
];

fn stack(label: &str, n: usize, start: [f64; 3], dy: f64, half: [f64; 3]) -> ObjectTrace {
    let objects = (0..n)
        .map(|i| TracedObject {
            label: label.to_string(),
            half_size: Vec3::new(half[0], half[1], half[2]),
            position: Vec3::new(start[0], start[1] + i as f64 * dy, start[2]),
            rotation: Rotation::IDENTITY,
        })
        .collect();
    ObjectTrace {
        objects,
        events: Vec::new(),
    }
}

/// `create_stack(...)` arguments read as a JSON array.
fn stack_call(call: &str) -> Result<ObjectTrace, ExecError> {
    let bad = |m: String| ExecError::new(ExecErrorKind::Runtime, m);
    let inner = call
        .strip_prefix("create_stack(")
        .and_then(|s| s.strip_suffix(')'))
        .ok_or_else(|| bad(format!("name is not defined: {call}")))?;
    let json = format!("[{}]", inner.replace('\'', "\"").replace("None", "null"));
    let args: Vec<serde_json::Value> = serde_json::from_str(&json).map_err(|e| bad(e.to_string()))?;
    let triple = |v: &serde_json::Value| -> Option<[f64; 3]> {
        let a = v.as_array()?;
        Some([a.first()?.as_f64()?, a.get(1)?.as_f64()?, a.get(2)?.as_f64()?])
    };
    match args.as_slice() {
        [label, n, start, dy, half] | [label, n, start, dy, half, serde_json::Value::Null] => Ok(stack(
            label.as_str().ok_or_else(|| bad("label must be a string".into()))?,
            n.as_u64().ok_or_else(|| bad("num_objects must be an int".into()))? as usize,
            triple(start).ok_or_else(|| bad("bad initial_position".into()))?,
            dy.as_f64().ok_or_else(|| bad("bad displacement_y".into()))?,
            triple(half).ok_or_else(|| bad("bad half_size".into()))?,
        )),
        _ => Err(bad(format!("unsupported call {call}"))),
    }
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures");
    let root = root.canonicalize()?;
    let golden = root.join("golden");

    let mut replies = HashMap::new();
    for entry in fs::read_dir(golden.join("replies"))? {
        let path = entry?.path();
        let name = path.file_stem().unwrap().to_string_lossy().into_owned();
        replies.insert(name, fs::read_to_string(&path)?);
    }
    let motif_source = {
        let r = &replies["optimize_lowlevel"];
        motifsmith_core::llm::parse::extract_code(r)
    };

    let llm_dir = root.join("llm");
    let trace_dir = root.join("traces");
    for d in [&llm_dir, &trace_dir] {
        if d.exists() {
            fs::remove_dir_all(d)?;
        }
    }

    let backend = ScriptedBackend::from_fn(move |req| {
        let template = req.template.clone().unwrap_or_default();
        replies.get(&template).cloned().ok_or(LlmError::MissingFixture {
            digest: req.digest.clone(),
            template: Some(template),
        })
    });
    let executor = ScriptedExecutor::from_fn(move |req: &ExecRequest| match req.entry {
        Entry::Program if req.source.trim() == motif_source.trim() => {
            Ok(stack("plate", 7, [0.0, 0.0, 0.0], -0.00757, [0.08909, 0.0143, 0.08853]))
        }
        Entry::Program => Err(ExecError::new(ExecErrorKind::Runtime, "unknown program")),
        Entry::Call => stack_call(req.call_source.as_deref().unwrap_or_default().trim()),
    });

    let assets = root.join("assets");
    write_assets(&assets)?;
    let index = build_index(&assets.join("manifest.jsonl"))?;

    let orch = Orchestrator::new(
        Arc::new(RecordingBackend::new(backend, &llm_dir)?),
        Arc::new(RecordingExecutor::new(executor, &trace_dir)?),
        PipelineConfig::default(),
    );
    let lib_dir = tempfile_dir()?;
    let lib = ProgramLibrary::open(&lib_dir)?;
    let arrangement = Arrangement::load(&golden.join("seven_plates.json"))?;
    let learned = orch.learn(&arrangement.description, &arrangement, &lib)?;
    println!(
        "learned {} (rewrite {}, meta {})",
        learned.meta.function_name, learned.rewrite_iterations, learned.meta_iterations
    );
    let out = orch.generate("a stack of four books", &lib, Some(&index))?;
    println!(
        "generated {} objects via {}",
        out.arrangement.objects.len(),
        out.function_call
    );
    fs::remove_dir_all(&lib_dir)?;
    println!(
        "{} llm fixtures, {} trace fixtures",
        fs::read_dir(&llm_dir)?.count(),
        fs::read_dir(&trace_dir)?.count()
    );
    Ok(())
}

fn write_assets(dir: &Path) -> std::io::Result<()> {
    fs::create_dir_all(dir.join("meshes"))?;
    let mut manifest = String::new();
    for (id, label, size) in ASSETS {
        let half = Vec3::new(size[0], size[1], size[2]) * 0.5;
        fs::write(
            dir.join(format!("meshes/{id}.obj")),
            mesh_to_obj(&TriMesh::cuboid(half)),
        )?;
        let row = serde_json::json!({
            "asset_id": id,
            "label": label,
            "full_size": size,
            "mesh_path": format!("meshes/{id}.obj"),
        });
        manifest.push_str(&row.to_string());
        manifest.push('\n');
    }
    fs::write(dir.join("manifest.jsonl"), manifest)
}

fn tempfile_dir() -> std::io::Result<PathBuf> {
    let dir = std::env::temp_dir().join(format!("record-golden-{}", std::process::id()));
    fs::create_dir_all(&dir)?;
    Ok(dir)
}
