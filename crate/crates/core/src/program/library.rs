//! On-disk program and meta-program library.
//!
//! Layout under the library root:
//!
//! ```text
//! manifest.json            motif type -> program files + meta-program metadata
//! .lock                    advisory lock, exclusive for writers
//! <motif_type>/program_001.py
//! <motif_type>/program_002.py
//! <motif_type>/meta.py
//! ```
//!
//! Program files are plain DSL source and may be edited by hand.

use std::collections::BTreeMap;
use std::fs::{self, File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use fs2::FileExt;
use serde::{Deserialize, Serialize};

use super::{MetaProgram, MotifType, ProgramError, ProgramText, Provenance};

const MANIFEST: &str = "manifest.json";
const LOCK: &str = ".lock";
const META_FILE: &str = "meta.py";

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
struct Manifest {
    #[serde(default)]
    types: BTreeMap<String, TypeEntry>,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
struct TypeEntry {
    #[serde(default)]
    programs: Vec<ProgramEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    meta: Option<MetaEntry>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct ProgramEntry {
    file: String,
    description: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    created_from: Option<String>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct MetaEntry {
    file: String,
    function_name: String,
    #[serde(default)]
    example_calls: Vec<String>,
    #[serde(default)]
    validated_against: Vec<String>,
}

/// Motif programs grouped by type, plus at most one meta-program per type.
#[derive(Clone, Debug)]
pub struct ProgramLibrary {
    root: PathBuf,
}

enum LockKind {
    Shared,
    Exclusive,
}

struct LockGuard(File);

impl Drop for LockGuard {
    fn drop(&mut self) {
        let _ = FileExt::unlock(&self.0);
    }
}

impl ProgramLibrary {
    /// Open (creating if needed) the library rooted at `root`.
    pub fn open(root: impl Into<PathBuf>) -> Result<Self, ProgramError> {
        let root = root.into();
        fs::create_dir_all(&root).map_err(|e| io_err(&root, e))?;
        let lib = ProgramLibrary { root };
        let manifest = lib.root.join(MANIFEST);
        if !manifest.exists() {
            let _g = lib.lock(LockKind::Exclusive)?;
            if !manifest.exists() {
                lib.write_manifest(&Manifest::default())?;
            }
        }
        Ok(lib)
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn lock(&self, kind: LockKind) -> Result<LockGuard, ProgramError> {
        let path = self.root.join(LOCK);
        let file = OpenOptions::new()
            .create(true)
            .truncate(false)
            .write(true)
            .read(true)
            .open(&path)
            .map_err(|e| io_err(&path, e))?;
        match kind {
            LockKind::Shared => FileExt::lock_shared(&file),
            LockKind::Exclusive => FileExt::lock_exclusive(&file),
        }
        .map_err(|e| io_err(&path, e))?;
        Ok(LockGuard(file))
    }

    fn read_manifest(&self) -> Result<Manifest, ProgramError> {
        let path = self.root.join(MANIFEST);
        let text = fs::read_to_string(&path).map_err(|e| io_err(&path, e))?;
        serde_json::from_str(&text).map_err(|e| ProgramError::Corrupt(format!("{}: {e}", path.display())))
    }

    fn write_manifest(&self, m: &Manifest) -> Result<(), ProgramError> {
        let mut text = serde_json::to_string_pretty(m).expect("manifest serializes");
        text.push('\n');
        write_durably(&self.root.join(MANIFEST), text.as_bytes())
    }

    /// Append a validated motif program under its motif type; returns the entry id.
    pub fn store_motif_program(&self, p: &ProgramText) -> Result<String, ProgramError> {
        if p.provenance != Provenance::Motif {
            return Err(ProgramError::InvalidArgument(
                "only motif programs can be stored".into(),
            ));
        }
        let motif = p
            .motif_type
            .ok_or_else(|| ProgramError::InvalidArgument("motif program has no motif type".into()))?;
        if p.source.trim().is_empty() {
            return Err(ProgramError::InvalidArgument("program source is empty".into()));
        }
        let _g = self.lock(LockKind::Exclusive)?;
        let mut manifest = self.read_manifest()?;
        let key = motif.to_string();
        let dir = self.root.join(&key);
        fs::create_dir_all(&dir).map_err(|e| io_err(&dir, e))?;
        let entry = manifest.types.entry(key.clone()).or_default();
        let mut n = entry.programs.len() + 1;
        let file = loop {
            let candidate = format!("program_{n:03}.py");
            if !dir.join(&candidate).exists() {
                break candidate;
            }
            n += 1;
        };
        write_durably(&dir.join(&file), p.source.as_bytes())?;
        entry.programs.push(ProgramEntry {
            file: file.clone(),
            description: p.description.clone(),
            created_from: p.created_from.clone(),
        });
        self.write_manifest(&manifest)?;
        Ok(format!("{key}/{file}"))
    }

    /// All motif programs of type `t`, in insertion order.
    pub fn list_motif_programs(&self, t: MotifType) -> Result<Vec<(String, ProgramText)>, ProgramError> {
        let _g = self.lock(LockKind::Shared)?;
        let manifest = self.read_manifest()?;
        let key = t.to_string();
        let Some(entry) = manifest.types.get(&key) else {
            return Ok(Vec::new());
        };
        entry
            .programs
            .iter()
            .map(|pe| {
                let path = self.root.join(&key).join(&pe.file);
                let source = fs::read_to_string(&path).map_err(|e| io_err(&path, e))?;
                Ok((
                    format!("{key}/{}", pe.file),
                    ProgramText {
                        source,
                        motif_type: Some(t),
                        description: pe.description.clone(),
                        provenance: Provenance::Motif,
                        created_from: pe.created_from.clone(),
                    },
                ))
            })
            .collect()
    }

    /// Store `m`, replacing any prior meta-program of the same motif type.
    pub fn store_meta_program(&self, m: &MetaProgram) -> Result<PathBuf, ProgramError> {
        let _g = self.lock(LockKind::Exclusive)?;
        let mut manifest = self.read_manifest()?;
        let key = m.motif_type.to_string();
        let dir = self.root.join(&key);
        fs::create_dir_all(&dir).map_err(|e| io_err(&dir, e))?;
        let path = dir.join(META_FILE);
        write_durably(&path, m.source.as_bytes())?;
        manifest.types.entry(key).or_default().meta = Some(MetaEntry {
            file: META_FILE.to_string(),
            function_name: m.function_name.clone(),
            example_calls: m.example_calls.clone(),
            validated_against: m.validated_against.clone(),
        });
        self.write_manifest(&manifest)?;
        Ok(path)
    }

    pub fn fetch_meta_program(&self, t: MotifType) -> Result<Option<MetaProgram>, ProgramError> {
        let _g = self.lock(LockKind::Shared)?;
        let manifest = self.read_manifest()?;
        let key = t.to_string();
        let Some(meta) = manifest.types.get(&key).and_then(|e| e.meta.clone()) else {
            return Ok(None);
        };
        let path = self.root.join(&key).join(&meta.file);
        let source = fs::read_to_string(&path).map_err(|e| io_err(&path, e))?;
        Ok(Some(MetaProgram {
            source,
            function_name: meta.function_name,
            motif_type: t,
            example_calls: meta.example_calls,
            validated_against: meta.validated_against,
        }))
    }

    /// Motif types that have a stored meta-program.
    pub fn learned_types(&self) -> Result<Vec<MotifType>, ProgramError> {
        let _g = self.lock(LockKind::Shared)?;
        let manifest = self.read_manifest()?;
        Ok(manifest
            .types
            .iter()
            .filter(|(_, e)| e.meta.is_some())
            .filter_map(|(k, _)| k.parse().ok())
            .collect())
    }
}

fn io_err(path: &Path, e: std::io::Error) -> ProgramError {
    ProgramError::Io(format!("{}: {e}", path.display()))
}

/// Write to a sibling temp file, fsync, then rename over `path`.
fn write_durably(path: &Path, bytes: &[u8]) -> Result<(), ProgramError> {
    let tmp = path.with_extension("tmp");
    let mut f = File::create(&tmp).map_err(|e| io_err(&tmp, e))?;
    f.write_all(bytes).map_err(|e| io_err(&tmp, e))?;
    f.sync_all().map_err(|e| io_err(&tmp, e))?;
    drop(f);
    fs::rename(&tmp, path).map_err(|e| io_err(path, e))?;
    if let Some(dir) = path.parent() {
        if let Ok(d) = File::open(dir) {
            let _ = d.sync_all();
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::program::MotifKind;

    fn motif(src: &str, t: MotifKind) -> ProgramText {
        ProgramText {
            source: src.to_string(),
            motif_type: Some(t.into()),
            description: format!("a {}", t.as_str()),
            provenance: Provenance::Motif,
            created_from: None,
        }
    }

    fn meta(src_tag: &str) -> MetaProgram {
        let source =
            format!("def create_stack(n):\n    \"\"\"{src_tag}\n    create_stack(3)\n    \"\"\"\n    return []\n");
        MetaProgram::new(source, MotifKind::Stack.into(), vec!["create_stack(3)".into()], vec![]).unwrap()
    }

    #[test]
    fn empty_library_lists_nothing() {
        let dir = tempfile::tempdir().unwrap();
        let lib = ProgramLibrary::open(dir.path()).unwrap();
        assert!(lib.list_motif_programs(MotifKind::Stack.into()).unwrap().is_empty());
        assert!(lib.fetch_meta_program(MotifKind::Stack.into()).unwrap().is_none());
    }

    #[test]
    fn programs_keep_insertion_order_and_survive_reload() {
        let dir = tempfile::tempdir().unwrap();
        let lib = ProgramLibrary::open(dir.path()).unwrap();
        let id1 = lib
            .store_motif_program(&motif("objs = []\n# one\n", MotifKind::Stack))
            .unwrap();
        assert_eq!(lib.list_motif_programs(MotifKind::Stack.into()).unwrap().len(), 1);
        let id2 = lib
            .store_motif_program(&motif("objs = []\n# two\n", MotifKind::Stack))
            .unwrap();
        lib.store_motif_program(&motif("objs = []\n# row\n", MotifKind::Row))
            .unwrap();
        assert_eq!(id1, "stack/program_001.py");
        assert_eq!(id2, "stack/program_002.py");

        let reopened = ProgramLibrary::open(dir.path()).unwrap();
        let listed = reopened.list_motif_programs(MotifKind::Stack.into()).unwrap();
        assert_eq!(listed.len(), 2);
        assert_eq!(listed[0].1.source, "objs = []\n# one\n");
        assert_eq!(listed[1].1.source, "objs = []\n# two\n");
        assert_eq!(listed[1].0, id2);
    }

    #[test]
    fn naive_programs_are_refused() {
        let dir = tempfile::tempdir().unwrap();
        let lib = ProgramLibrary::open(dir.path()).unwrap();
        let mut p = motif("objs = []", MotifKind::Row);
        p.provenance = Provenance::Naive;
        assert!(lib.store_motif_program(&p).is_err());
    }

    #[test]
    fn meta_program_replaced_on_write() {
        let dir = tempfile::tempdir().unwrap();
        let lib = ProgramLibrary::open(dir.path()).unwrap();
        let first = meta("first");
        lib.store_meta_program(&first).unwrap();
        assert_eq!(lib.fetch_meta_program(MotifKind::Stack.into()).unwrap(), Some(first));
        let second = meta("second");
        lib.store_meta_program(&second).unwrap();
        let reopened = ProgramLibrary::open(dir.path()).unwrap();
        assert_eq!(
            reopened.fetch_meta_program(MotifKind::Stack.into()).unwrap(),
            Some(second)
        );
        assert_eq!(reopened.learned_types().unwrap(), vec![MotifKind::Stack.into()]);
        assert!(reopened.fetch_meta_program(MotifKind::Row.into()).unwrap().is_none());
    }
}
