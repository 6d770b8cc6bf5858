//! Request and response bodies of the HTTP API, shared by the service and
//! its client.

use std::collections::BTreeMap;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::exec::ObjectTrace;
use crate::pipeline::{GenerateOutcome, LearnOutcome, PipelineError, RunReport, TouchMode};
use crate::program::MotifType;
use crate::scene::Arrangement;
use crate::validate::ValidationReport;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LearnRequest {
    pub arrangement: Arrangement,
    /// Defaults to the arrangement's own description.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub description: Option<String>,
    /// Program library directory; the service default when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub library: Option<PathBuf>,
}

pub type LearnResponse = LearnOutcome;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GenerateRequest {
    pub description: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub library: Option<PathBuf>,
    /// Asset manifest; objects stay boxes when neither this nor a service
    /// default is set.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub assets: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub touch: Option<TouchMode>,
    /// Also return the merged scene mesh as OBJ text.
    #[serde(default)]
    pub merged_mesh: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GenerateResponse {
    #[serde(flatten)]
    pub outcome: GenerateOutcome,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub merged_obj: Option<String>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ClassifyRequest {
    pub description: String,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ClassifyResponse {
    pub motif_type: MotifType,
    pub report: RunReport,
}

/// Check a motif program (or an already computed trace) against a reference
/// arrangement. The hard-coded-list criterion is taken from `listing_valid`
/// rather than asked of the LLM.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ValidateRequest {
    pub arrangement: Arrangement,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub program: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trace: Option<ObjectTrace>,
    #[serde(default = "yes")]
    pub listing_valid: bool,
    #[serde(default)]
    pub listing_variables: Vec<String>,
}

fn yes() -> bool {
    true
}

pub type ValidateResponse = ValidationReport;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AssetsIndexRequest {
    pub manifest: PathBuf,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AssetsIndexResponse {
    pub count: usize,
    /// Records per lowercase label.
    pub labels: BTreeMap<String, usize>,
    pub warnings: Vec<String>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ExportRequest {
    pub arrangement: Arrangement,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub assets: Option<PathBuf>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ExportResponse {
    pub obj: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Health {
    pub status: String,
    pub version: String,
    pub backend: String,
}

/// Error body: `{"error": {"kind", "stage", "message"}}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub error: ErrorDetail,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErrorDetail {
    pub kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stage: Option<String>,
    pub message: String,
}

impl ErrorBody {
    pub fn new(kind: impl Into<String>, stage: Option<String>, message: impl Into<String>) -> Self {
        ErrorBody {
            error: ErrorDetail {
                kind: kind.into(),
                stage,
                message: message.into(),
            },
        }
    }
}

impl From<&PipelineError> for ErrorBody {
    fn from(e: &PipelineError) -> Self {
        ErrorBody::new(e.kind(), e.stage().map(|s| s.to_string()), e.to_string())
    }
}
