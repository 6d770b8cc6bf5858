//! The learning and generation pipelines: prompt sequencing over chat
//! sessions, execution of candidate programs, validation feedback loops and
//! the commonsense queries that steer retrieval and placement.

mod generate;
mod learn;
mod verdict;

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::assets::{AssetError, TOP_K};
use crate::exec::{ExecError, ExecLimits, Executor, DEFAULT_MAX_OBJECTS, DEFAULT_TIMEOUT_S};
use crate::geo::{GeoConfig, GeoError};
use crate::llm::{ChatSession, LlmBackend, LlmError, PromptCatalog, RetryPolicy, Usage};
use crate::program::{MotifType, ProgramError};
use crate::validate::ValidationReport;

pub use generate::{export_merged, AssetChoice, GenerateOutcome};
pub use learn::{LearnOutcome, MetaResult, Observations};
pub use verdict::CommonsenseVerdict;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TouchMode {
    /// Ask the LLM whether objects should touch.
    #[default]
    Auto,
    On,
    Off,
}

impl FromStr for TouchMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "auto" => Ok(TouchMode::Auto),
            "on" => Ok(TouchMode::On),
            "off" => Ok(TouchMode::Off),
            other => Err(format!("unknown touch mode `{other}` (expected auto, on or off)")),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub max_rewrite_iters: u32,
    pub max_meta_iters: u32,
    pub max_call_iters: u32,
    pub retry: RetryPolicy,
    /// Spend limit per learn or generate run.
    pub budget_usd: Option<f64>,
    pub exec_timeout_s: f64,
    pub max_objects: u32,
    pub rng_seed: u64,
    pub touch: TouchMode,
    pub top_k: usize,
    /// Uniformly rescale retrieved meshes toward the target size.
    pub rescale_assets: bool,
    pub geo: GeoConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            max_rewrite_iters: 5,
            max_meta_iters: 5,
            max_call_iters: 3,
            retry: RetryPolicy::default(),
            budget_usd: None,
            exec_timeout_s: DEFAULT_TIMEOUT_S,
            max_objects: DEFAULT_MAX_OBJECTS,
            rng_seed: 0,
            touch: TouchMode::Auto,
            top_k: TOP_K,
            rescale_assets: false,
            geo: GeoConfig::default(),
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<(), PipelineError> {
        let bad = |m: String| Err(PipelineError::InvalidArgument(m));
        if self.max_rewrite_iters == 0 || self.max_meta_iters == 0 || self.max_call_iters == 0 {
            return bad("iteration limits must be at least 1".into());
        }
        if !(self.exec_timeout_s > 0.0 && self.exec_timeout_s.is_finite()) {
            return bad(format!("exec timeout {} must be positive", self.exec_timeout_s));
        }
        if self.top_k == 0 {
            return bad("top_k must be at least 1".into());
        }
        if self.budget_usd.is_some_and(|b| b.is_nan() || b <= 0.0) {
            return bad("budget must be positive".into());
        }
        self.geo
            .validate()
            .map_err(|e| PipelineError::InvalidArgument(e.to_string()))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Extract,
    Observe,
    Classify,
    Rewrite,
    Store,
    Generalize,
    Retrieve,
    Synthesize,
    Orientation,
    Assets,
    Touch,
    Optimize,
}

impl Stage {
    pub fn as_str(self) -> &'static str {
        match self {
            Stage::Extract => "extract",
            Stage::Observe => "observe",
            Stage::Classify => "classify",
            Stage::Rewrite => "rewrite",
            Stage::Store => "store",
            Stage::Generalize => "generalize",
            Stage::Retrieve => "retrieve",
            Stage::Synthesize => "synthesize",
            Stage::Orientation => "orientation",
            Stage::Assets => "assets",
            Stage::Touch => "touch",
            Stage::Optimize => "optimize",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("{stage}: {source}")]
    Llm {
        stage: Stage,
        #[source]
        source: LlmError,
    },
    #[error("{stage}: executor failure: {source}")]
    Executor {
        stage: Stage,
        #[source]
        source: ExecError,
    },
    #[error("{stage}: unparseable reply: {message}")]
    Parse { stage: Stage, message: String },
    #[error("{stage}: no passing candidate after {iterations} iteration(s): {message}")]
    Exhausted {
        stage: Stage,
        iterations: u32,
        message: String,
        report: Option<Box<ValidationReport>>,
    },
    #[error("no meta-program learned for motif type `{0}`")]
    NoMetaProgram(MotifType),
    #[error("{stage}: {source}")]
    Library {
        stage: Stage,
        #[source]
        source: ProgramError,
    },
    #[error("{stage}: {source}")]
    Assets {
        stage: Stage,
        #[source]
        source: AssetError,
    },
    #[error("{stage}: {source}")]
    Geometry {
        stage: Stage,
        #[source]
        source: GeoError,
    },
}

impl PipelineError {
    pub fn stage(&self) -> Option<Stage> {
        match self {
            PipelineError::Llm { stage, .. }
            | PipelineError::Executor { stage, .. }
            | PipelineError::Parse { stage, .. }
            | PipelineError::Exhausted { stage, .. }
            | PipelineError::Library { stage, .. }
            | PipelineError::Assets { stage, .. }
            | PipelineError::Geometry { stage, .. } => Some(*stage),
            PipelineError::NoMetaProgram(_) => Some(Stage::Retrieve),
            PipelineError::InvalidArgument(_) => None,
        }
    }

    /// Stable machine-readable error kind.
    pub fn kind(&self) -> &'static str {
        match self {
            PipelineError::InvalidArgument(_) => "invalid_argument",
            PipelineError::Llm {
                source: LlmError::MissingFixture { .. },
                ..
            } => "missing_fixture",
            PipelineError::Llm {
                source: LlmError::BudgetExceeded { .. },
                ..
            } => "budget_exceeded",
            PipelineError::Llm {
                source: LlmError::Config(_),
                ..
            } => "backend_config",
            PipelineError::Llm { .. } => "llm",
            PipelineError::Executor { .. } => "executor",
            PipelineError::Parse { .. } => "parse",
            PipelineError::Exhausted { .. } => "exhausted",
            PipelineError::NoMetaProgram(_) => "no_meta_program",
            PipelineError::Library { .. } => "library",
            PipelineError::Assets { .. } => "assets",
            PipelineError::Geometry { .. } => "geometry",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageTiming {
    pub stage: Stage,
    pub millis: f64,
}

/// Accounting and transcripts for one pipeline run.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct RunReport {
    pub timings: Vec<StageTiming>,
    pub llm_calls: usize,
    pub usage: Usage,
    pub cost_usd: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub transcript_dir: Option<PathBuf>,
    #[serde(default)]
    pub sessions: Vec<ChatSession>,
}

/// Sessions and timings accumulated while a pipeline runs.
pub struct Run<'a> {
    orch: &'a Orchestrator,
    name: String,
    sessions: Vec<ChatSession>,
    timings: Vec<StageTiming>,
}

/// Handle to a session owned by a [`Run`].
#[derive(Clone, Copy, Debug)]
pub struct SessionId(usize);

impl<'a> Run<'a> {
    pub fn new(orch: &'a Orchestrator, name: impl Into<String>) -> Self {
        Run {
            orch,
            name: name.into(),
            sessions: Vec::new(),
            timings: Vec::new(),
        }
    }

    /// Start a fresh conversation with the system prompt.
    pub fn open(&mut self, label: &str) -> SessionId {
        let n = self.sessions.iter().filter(|s| s.id.starts_with(label)).count();
        let id = if n == 0 {
            label.to_string()
        } else {
            format!("{label}-{}", n + 1)
        };
        let id = format!("{:02}-{id}", self.sessions.len() + 1);
        self.sessions.push(ChatSession::new(id, self.orch.catalog.system()));
        SessionId(self.sessions.len() - 1)
    }

    pub fn session(&self, id: SessionId) -> &ChatSession {
        &self.sessions[id.0]
    }

    fn spent(&self) -> f64 {
        self.sessions.iter().map(|s| s.cost_usd).sum()
    }

    /// Render `template` and send it in session `id`.
    pub fn ask(
        &mut self,
        id: SessionId,
        stage: Stage,
        template: &str,
        values: &[(&str, &str)],
    ) -> Result<String, PipelineError> {
        let llm = |source| PipelineError::Llm { stage, source };
        let prompt = self.orch.catalog.render(template, values).map_err(llm)?;
        let others = self.spent() - self.sessions[id.0].cost_usd;
        let session = &mut self.sessions[id.0];
        session.budget_usd = self.orch.config.budget_usd.map(|b| b - others);
        session
            .complete(self.orch.backend.as_ref(), &prompt, self.orch.config.retry)
            .map_err(llm)
    }

    /// Ask `invalid_response` with `feedback` once and parse again.
    pub fn reask<T>(
        &mut self,
        id: SessionId,
        stage: Stage,
        feedback: &str,
        parse: impl Fn(&str) -> Option<T>,
    ) -> Result<T, PipelineError> {
        let reply = self.ask(id, stage, "invalid_response", &[("FEEDBACK", feedback)])?;
        parse(&reply).ok_or_else(|| PipelineError::Parse {
            stage,
            message: format!("{feedback} (reply after re-ask: {})", excerpt(&reply)),
        })
    }

    fn timed(&mut self, stage: Stage, started: Instant) {
        self.timings.push(StageTiming {
            stage,
            millis: started.elapsed().as_secs_f64() * 1e3,
        });
    }

    /// Close the run, writing transcripts when the orchestrator has a directory.
    pub fn finish(self) -> RunReport {
        let mut usage = Usage::default();
        for s in &self.sessions {
            usage += s.usage;
        }
        let transcript_dir = self.orch.transcripts.as_ref().and_then(|dir| {
            let dir = dir.join(&self.name);
            let mut ok = true;
            for s in &self.sessions {
                if let Err(e) = s.save_transcript(&dir) {
                    tracing::warn!(session = %s.id, "could not write transcript: {e}");
                    ok = false;
                }
            }
            ok.then_some(dir)
        });
        RunReport {
            llm_calls: self.sessions.iter().map(ChatSession::calls).sum(),
            cost_usd: self.spent(),
            usage,
            timings: self.timings,
            transcript_dir,
            sessions: self.sessions,
        }
    }
}

fn excerpt(text: &str) -> String {
    const MAX: usize = 200;
    let t = text.trim();
    match t.char_indices().nth(MAX) {
        Some((i, _)) => format!("{}...", &t[..i]),
        None => t.to_string(),
    }
}

/// Stable run name from its kind and inputs, used for transcript directories.
fn run_name(kind: &str, parts: &[&str]) -> String {
    let mut h = Sha256::new();
    for p in parts {
        h.update(p.as_bytes());
        h.update([0]);
    }
    format!("{kind}-{}", &hex::encode(h.finalize())[..12])
}

/// Runs the pipelines against one backend and executor.
pub struct Orchestrator {
    backend: Arc<dyn LlmBackend>,
    executor: Arc<dyn Executor>,
    catalog: PromptCatalog,
    config: PipelineConfig,
    transcripts: Option<PathBuf>,
}

impl Orchestrator {
    pub fn new(backend: Arc<dyn LlmBackend>, executor: Arc<dyn Executor>, config: PipelineConfig) -> Self {
        Orchestrator {
            backend,
            executor,
            catalog: PromptCatalog::bundled(),
            config,
            transcripts: None,
        }
    }

    pub fn with_catalog(mut self, catalog: PromptCatalog) -> Self {
        self.catalog = catalog;
        self
    }

    /// Write one transcript file per session under `dir/<run name>/`.
    pub fn with_transcripts(mut self, dir: impl Into<PathBuf>) -> Self {
        self.transcripts = Some(dir.into());
        self
    }

    /// Same backend, executor and catalog with a different configuration.
    pub fn reconfigured(&self, config: PipelineConfig) -> Orchestrator {
        Orchestrator {
            backend: self.backend.clone(),
            executor: self.executor.clone(),
            catalog: self.catalog.clone(),
            config,
            transcripts: self.transcripts.clone(),
        }
    }

    pub fn backend_name(&self) -> String {
        self.backend.name()
    }

    pub fn executor(&self) -> &Arc<dyn Executor> {
        &self.executor
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.config
    }

    pub fn catalog(&self) -> &PromptCatalog {
        &self.catalog
    }

    pub fn transcripts(&self) -> Option<&Path> {
        self.transcripts.as_deref()
    }

    fn limits(&self, rng_seed: u64) -> ExecLimits {
        ExecLimits {
            timeout_s: self.config.exec_timeout_s,
            max_objects: self.config.max_objects,
            rng_seed,
        }
    }
}
