use std::path::PathBuf;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use motifsmith_core::exec::{Executor, TraceFixtureExecutor, WorkerExecutor};
use motifsmith_core::llm::{HttpBackend, HttpConfig, LlmBackend, ReplayBackend};
use motifsmith_core::pipeline::{Orchestrator, PipelineConfig};

use crate::ServiceError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum BackendConfig {
    /// OpenAI-compatible chat-completions endpoint.
    Live(HttpConfig),
    /// Recorded replies keyed by conversation digest.
    Replay { fixtures: PathBuf },
}

impl Default for BackendConfig {
    fn default() -> Self {
        BackendConfig::Replay {
            fixtures: PathBuf::from("fixtures/llm"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ExecutorConfig {
    /// External worker process speaking the line protocol.
    Worker {
        command: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        scratch_dir: Option<PathBuf>,
    },
    /// Recorded traces keyed by request digest.
    Fixtures { dir: PathBuf },
}

impl Default for ExecutorConfig {
    fn default() -> Self {
        ExecutorConfig::Fixtures {
            dir: PathBuf::from("fixtures/traces"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ServiceConfig {
    /// Default program library directory.
    pub library: PathBuf,
    /// Default asset manifest.
    pub assets: Option<PathBuf>,
    pub backend: BackendConfig,
    pub executor: ExecutorConfig,
    pub pipeline: PipelineConfig,
    /// Write per-session transcripts under this directory.
    pub transcripts: Option<PathBuf>,
    /// Pipelines allowed to run at once.
    pub jobs: usize,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        ServiceConfig {
            library: PathBuf::from("library"),
            assets: None,
            backend: BackendConfig::default(),
            executor: ExecutorConfig::default(),
            pipeline: PipelineConfig::default(),
            transcripts: None,
            jobs: 1,
        }
    }
}

impl ServiceConfig {
    pub fn orchestrator(&self) -> Result<Orchestrator, ServiceError> {
        let config = |m: String| ServiceError::Config(m);
        self.pipeline.validate().map_err(|e| config(e.to_string()))?;
        if self.jobs == 0 {
            return Err(config("jobs must be at least 1".into()));
        }
        let backend: Arc<dyn LlmBackend> = match &self.backend {
            BackendConfig::Live(http) => Arc::new(HttpBackend::new(http.clone()).map_err(|e| config(e.to_string()))?),
            BackendConfig::Replay { fixtures } => {
                Arc::new(ReplayBackend::load(fixtures).map_err(|e| config(e.to_string()))?)
            }
        };
        let executor: Arc<dyn Executor> = match &self.executor {
            ExecutorConfig::Worker { command, scratch_dir } => {
                let mut w = WorkerExecutor::from_command_line(command)
                    .ok_or_else(|| config("executor command is empty".into()))?;
                if let Some(dir) = scratch_dir {
                    w = w.with_scratch_dir(dir);
                }
                Arc::new(w)
            }
            ExecutorConfig::Fixtures { dir } => {
                Arc::new(TraceFixtureExecutor::load(dir).map_err(|e| config(format!("trace fixtures: {}", e.message)))?)
            }
        };
        let mut orch = Orchestrator::new(backend, executor, self.pipeline.clone());
        if let Some(dir) = &self.transcripts {
            orch = orch.with_transcripts(dir);
        }
        Ok(orch)
    }
}
