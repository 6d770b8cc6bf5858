//! Host side of program execution.
//!
//! Programs are executed out of process by a worker speaking a
//! line-delimited protocol: one JSON request object on stdin, one JSON
//! response object (`{ok, trace?, error?}`) on stdout. [`WorkerExecutor`]
//! drives such a worker; [`TraceFixtureExecutor`] answers from recorded
//! responses keyed by request digest, for offline runs.

mod fixtures;
mod worker;

use std::fmt;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub use fixtures::{FixtureRecord, RecordingExecutor, ScriptedExecutor, TraceFixtureExecutor};
pub use worker::WorkerExecutor;

use crate::scene::{Rotation, SceneObject, Vec3};

pub const DEFAULT_TIMEOUT_S: f64 = 10.0;
pub const DEFAULT_MAX_OBJECTS: u32 = 256;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Entry {
    Program,
    Call,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExecLimits {
    pub timeout_s: f64,
    pub max_objects: u32,
    pub rng_seed: u64,
}

impl Default for ExecLimits {
    fn default() -> Self {
        ExecLimits {
            timeout_s: DEFAULT_TIMEOUT_S,
            max_objects: DEFAULT_MAX_OBJECTS,
            rng_seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExecRequest {
    pub source: String,
    pub entry: Entry,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub call_source: Option<String>,
    pub limits: ExecLimits,
}

impl ExecRequest {
    pub fn program(source: impl Into<String>, limits: ExecLimits) -> Self {
        ExecRequest {
            source: source.into(),
            entry: Entry::Program,
            call_source: None,
            limits,
        }
    }

    pub fn call(source: impl Into<String>, call: impl Into<String>, limits: ExecLimits) -> Self {
        ExecRequest {
            source: source.into(),
            entry: Entry::Call,
            call_source: Some(call.into()),
            limits,
        }
    }

    pub fn check(&self) -> Result<(), ExecError> {
        if !(self.limits.timeout_s > 0.0 && self.limits.timeout_s.is_finite()) {
            return Err(ExecError::new(ExecErrorKind::Protocol, "timeout_s must be positive"));
        }
        if self.limits.max_objects < 1 {
            return Err(ExecError::new(
                ExecErrorKind::Protocol,
                "max_objects must be at least 1",
            ));
        }
        if (self.entry == Entry::Call) != self.call_source.is_some() {
            return Err(ExecError::new(
                ExecErrorKind::Protocol,
                "call_source is required exactly when entry = call",
            ));
        }
        Ok(())
    }

    /// Hex SHA-256 over the fields that determine the trace
    /// (source, entry, call text, seed), independent of the other limits.
    pub fn digest(&self) -> String {
        let key = serde_json::json!({
            "source": self.source,
            "entry": self.entry,
            "call_source": self.call_source,
            "rng_seed": self.limits.rng_seed,
        });
        hex::encode(Sha256::digest(key.to_string().as_bytes()))
    }
}

/// Final state of one created object.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TracedObject {
    pub label: String,
    pub half_size: Vec3,
    pub position: Vec3,
    #[serde(default)]
    pub rotation: Rotation,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceEvent {
    pub op: String,
    #[serde(default)]
    pub args: Vec<serde_json::Value>,
}

/// Ordered final object states produced by running a program.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ObjectTrace {
    pub objects: Vec<TracedObject>,
    #[serde(default)]
    pub events: Vec<TraceEvent>,
}

impl ObjectTrace {
    /// Objects as scene objects with ids `obj_1`, `obj_2`, ... in creation order.
    pub fn scene_objects(&self) -> Vec<SceneObject> {
        self.objects
            .iter()
            .enumerate()
            .map(|(i, o)| SceneObject {
                id: format!("obj_{}", i + 1),
                label: o.label.clone(),
                half_size: o.half_size,
                position: o.position,
                rotation: o.rotation,
                asset_id: None,
            })
            .collect()
    }

    pub fn from_objects<'a>(objects: impl IntoIterator<Item = &'a SceneObject>) -> Self {
        ObjectTrace {
            objects: objects
                .into_iter()
                .map(|o| TracedObject {
                    label: o.label.clone(),
                    half_size: o.half_size,
                    position: o.position,
                    rotation: o.rotation,
                })
                .collect(),
            events: Vec::new(),
        }
    }

    /// Rotations are orthonormal and all values finite.
    pub fn is_well_formed(&self) -> bool {
        self.objects
            .iter()
            .all(|o| o.rotation.is_valid() && o.position.is_finite() && o.half_size.is_finite())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExecErrorKind {
    Syntax,
    Runtime,
    ForbiddenImport,
    Timeout,
    ObjectLimit,
    Protocol,
}

impl ExecErrorKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ExecErrorKind::Syntax => "syntax",
            ExecErrorKind::Runtime => "runtime",
            ExecErrorKind::ForbiddenImport => "forbidden-import",
            ExecErrorKind::Timeout => "timeout",
            ExecErrorKind::ObjectLimit => "object-limit",
            ExecErrorKind::Protocol => "protocol",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, thiserror::Error)]
pub struct ExecError {
    pub kind: ExecErrorKind,
    pub message: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub location: Option<u32>,
}

impl ExecError {
    pub fn new(kind: ExecErrorKind, message: impl Into<String>) -> Self {
        let mut message = message.into();
        if message.trim().is_empty() {
            message = format!("{} error", kind.as_str());
        }
        ExecError {
            kind,
            message,
            location: None,
        }
    }

    pub fn at_line(mut self, line: u32) -> Self {
        self.location = Some(line);
        self
    }

    /// Protocol failures are infrastructure problems, not program faults.
    pub fn is_infrastructure(&self) -> bool {
        self.kind == ExecErrorKind::Protocol
    }
}

impl fmt::Display for ExecError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} error", self.kind.as_str())?;
        if let Some(line) = self.location {
            write!(f, " at line {line}")?;
        }
        write!(f, ": {}", self.message)
    }
}

/// One response line from a worker.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WorkerResponse {
    pub ok: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trace: Option<ObjectTrace>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<ExecError>,
}

impl WorkerResponse {
    pub fn success(trace: ObjectTrace) -> Self {
        WorkerResponse {
            ok: true,
            trace: Some(trace),
            error: None,
        }
    }

    pub fn failure(error: ExecError) -> Self {
        WorkerResponse {
            ok: false,
            trace: None,
            error: Some(error),
        }
    }

    pub fn into_result(self) -> Result<ObjectTrace, ExecError> {
        match (self.ok, self.trace, self.error) {
            (true, Some(trace), _) => {
                if trace.is_well_formed() {
                    Ok(trace)
                } else {
                    Err(ExecError::new(
                        ExecErrorKind::Protocol,
                        "worker returned a malformed trace",
                    ))
                }
            }
            (false, _, Some(err)) => Err(err),
            _ => Err(ExecError::new(
                ExecErrorKind::Protocol,
                "response is missing trace or error",
            )),
        }
    }
}

/// Runs DSL programs and meta-program calls.
pub trait Executor: Send + Sync {
    fn execute(&self, req: &ExecRequest) -> Result<ObjectTrace, ExecError>;

    fn execute_program(&self, source: &str, limits: ExecLimits) -> Result<ObjectTrace, ExecError> {
        self.execute(&ExecRequest::program(source, limits))
    }

    fn execute_meta_call(&self, source: &str, call: &str, limits: ExecLimits) -> Result<ObjectTrace, ExecError> {
        self.execute(&ExecRequest::call(source, call, limits))
    }
}

impl<E: Executor + ?Sized> Executor for std::sync::Arc<E> {
    fn execute(&self, req: &ExecRequest) -> Result<ObjectTrace, ExecError> {
        (**self).execute(req)
    }
}

impl<E: Executor + ?Sized> Executor for Box<E> {
    fn execute(&self, req: &ExecRequest) -> Result<ObjectTrace, ExecError> {
        (**self).execute(req)
    }
}
