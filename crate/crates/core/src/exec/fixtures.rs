use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{ExecError, ExecErrorKind, ExecRequest, Executor, ObjectTrace, WorkerResponse};

/// One recorded execution: the request (for audit) and the worker's response.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FixtureRecord {
    pub digest: String,
    pub request: ExecRequest,
    pub response: WorkerResponse,
}

/// Answers requests from recorded responses in a directory of `<digest>.json` files.
#[derive(Clone, Debug, Default)]
pub struct TraceFixtureExecutor {
    records: HashMap<String, WorkerResponse>,
}

impl TraceFixtureExecutor {
    pub fn load(dir: &Path) -> Result<Self, ExecError> {
        let protocol = |msg: String| ExecError::new(ExecErrorKind::Protocol, msg);
        let mut records = HashMap::new();
        let entries = fs::read_dir(dir).map_err(|e| protocol(format!("{}: {e}", dir.display())))?;
        let mut paths: Vec<PathBuf> = entries
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "json"))
            .collect();
        paths.sort();
        for path in paths {
            let text = fs::read_to_string(&path).map_err(|e| protocol(format!("{}: {e}", path.display())))?;
            let rec: FixtureRecord =
                serde_json::from_str(&text).map_err(|e| protocol(format!("{}: {e}", path.display())))?;
            records.insert(rec.digest, rec.response);
        }
        Ok(TraceFixtureExecutor { records })
    }

    pub fn from_records(records: impl IntoIterator<Item = FixtureRecord>) -> Self {
        TraceFixtureExecutor {
            records: records.into_iter().map(|r| (r.digest, r.response)).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }
}

impl Executor for TraceFixtureExecutor {
    fn execute(&self, req: &ExecRequest) -> Result<ObjectTrace, ExecError> {
        req.check()?;
        let digest = req.digest();
        match self.records.get(&digest) {
            Some(resp) => resp.clone().into_result(),
            None => Err(ExecError::new(
                ExecErrorKind::Protocol,
                format!("no recorded trace for request digest {digest}"),
            )),
        }
    }
}

type Handler = Box<dyn Fn(&ExecRequest) -> Result<ObjectTrace, ExecError> + Send + Sync>;

/// Executor backed by a function of the request, for tests and fixture authoring.
pub struct ScriptedExecutor {
    handler: Handler,
}

impl ScriptedExecutor {
    pub fn from_fn(f: impl Fn(&ExecRequest) -> Result<ObjectTrace, ExecError> + Send + Sync + 'static) -> Self {
        ScriptedExecutor { handler: Box::new(f) }
    }
}

impl Executor for ScriptedExecutor {
    fn execute(&self, req: &ExecRequest) -> Result<ObjectTrace, ExecError> {
        req.check()?;
        (self.handler)(req)
    }
}

/// Forwards to an inner executor and writes every exchange as a fixture file.
pub struct RecordingExecutor<E> {
    inner: E,
    dir: PathBuf,
}

impl<E: Executor> RecordingExecutor<E> {
    pub fn new(inner: E, dir: impl Into<PathBuf>) -> std::io::Result<Self> {
        let dir = dir.into();
        fs::create_dir_all(&dir)?;
        Ok(RecordingExecutor { inner, dir })
    }
}

impl<E: Executor> Executor for RecordingExecutor<E> {
    fn execute(&self, req: &ExecRequest) -> Result<ObjectTrace, ExecError> {
        let result = self.inner.execute(req);
        let response = match &result {
            Ok(trace) => WorkerResponse::success(trace.clone()),
            Err(e) if e.is_infrastructure() => return result,
            Err(e) => WorkerResponse::failure(e.clone()),
        };
        let rec = FixtureRecord {
            digest: req.digest(),
            request: req.clone(),
            response,
        };
        let path = self.dir.join(format!("{}.json", rec.digest));
        let mut text = serde_json::to_string_pretty(&rec).expect("fixture serializes");
        text.push('\n');
        if let Err(e) = fs::write(&path, text) {
            tracing::warn!("could not record trace fixture {}: {e}", path.display());
        }
        result
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exec::{ExecLimits, TracedObject};
    use crate::scene::{Rotation, Vec3};

    struct Constant;

    impl Executor for Constant {
        fn execute(&self, req: &ExecRequest) -> Result<ObjectTrace, ExecError> {
            if req.source.contains("import os") {
                return Err(ExecError::new(ExecErrorKind::ForbiddenImport, "os is not allowed"));
            }
            Ok(ObjectTrace {
                objects: vec![TracedObject {
                    label: "cup".into(),
                    half_size: Vec3::splat(0.05),
                    position: Vec3::ZERO,
                    rotation: Rotation::IDENTITY,
                }],
                events: vec![],
            })
        }
    }

    #[test]
    fn record_then_replay() {
        let dir = tempfile::tempdir().unwrap();
        let rec = RecordingExecutor::new(Constant, dir.path()).unwrap();
        let ok = rec.execute_program("objs = []", ExecLimits::default()).unwrap();
        let bad = rec.execute_program("import os", ExecLimits::default()).unwrap_err();

        let replay = TraceFixtureExecutor::load(dir.path()).unwrap();
        assert_eq!(replay.len(), 2);
        assert_eq!(replay.execute_program("objs = []", ExecLimits::default()).unwrap(), ok);
        assert_eq!(
            replay.execute_program("import os", ExecLimits::default()).unwrap_err(),
            bad
        );

        let missing = replay.execute_program("other", ExecLimits::default()).unwrap_err();
        assert_eq!(missing.kind, ExecErrorKind::Protocol);
        assert!(missing.message.contains("no recorded trace"));
    }
}
