use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};

use motifsmith_core::llm::HttpConfig;
use motifsmith_service::{BackendConfig, ExecutorConfig, ServiceConfig};

use crate::CliError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum BackendKind {
    Live,
    Replay,
}

/// Options shared by every subcommand. Each flag falls back to its `SMC_*`
/// environment variable, then to the config file.
#[derive(Args, Debug, Default)]
pub struct Global {
    /// TOML configuration file
    #[arg(long, global = true, env = "SMC_CONFIG")]
    pub config: Option<PathBuf>,
    /// Use a running service instead of starting one in-process
    #[arg(long, global = true, env = "SMC_SERVER")]
    pub server: Option<String>,
    /// Program library directory
    #[arg(long, global = true, env = "SMC_LIBRARY")]
    pub library: Option<PathBuf>,
    /// Asset manifest (JSON Lines)
    #[arg(long, global = true, env = "SMC_ASSETS")]
    pub assets: Option<PathBuf>,
    #[arg(long, global = true, value_enum, env = "SMC_BACKEND")]
    pub backend: Option<BackendKind>,
    /// Fixture root holding `llm/` replies and `traces/` executions
    #[arg(long, global = true, env = "SMC_FIXTURES")]
    pub fixtures: Option<PathBuf>,
    /// Chat-completions endpoint for the live backend
    #[arg(long, global = true, env = "SMC_ENDPOINT")]
    pub endpoint: Option<String>,
    #[arg(long, global = true, env = "SMC_MODEL")]
    pub model: Option<String>,
    #[arg(long, global = true, env = "SMC_API_KEY", hide_env_values = true)]
    pub api_key: Option<String>,
    /// Worker command used to execute programs
    #[arg(long, global = true, env = "SMC_EXECUTOR")]
    pub executor: Option<String>,
    /// Spend limit per run, USD
    #[arg(long, global = true, env = "SMC_BUDGET_USD")]
    pub budget_usd: Option<f64>,
    /// Write per-session transcripts under this directory
    #[arg(long, global = true, env = "SMC_TRANSCRIPTS")]
    pub transcripts: Option<PathBuf>,
    /// Pipelines run at once
    #[arg(long, global = true, env = "SMC_JOBS")]
    pub jobs: Option<usize>,
    /// More log output (-v, -vv)
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
}

fn absolute(p: &Path) -> PathBuf {
    std::path::absolute(p).unwrap_or_else(|_| p.to_path_buf())
}

/// Relative paths in the config file are taken relative to the file.
fn rebase(p: &mut PathBuf, base: &Path) {
    if p.is_relative() {
        *p = base.join(&*p);
    }
}

pub fn load_file(path: &Path) -> Result<ServiceConfig, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    let mut cfg: ServiceConfig =
        toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    let base = path.parent().unwrap_or(Path::new("."));
    rebase(&mut cfg.library, base);
    if let Some(a) = cfg.assets.as_mut() {
        rebase(a, base);
    }
    if let Some(t) = cfg.transcripts.as_mut() {
        rebase(t, base);
    }
    match &mut cfg.backend {
        BackendConfig::Replay { fixtures } => rebase(fixtures, base),
        BackendConfig::Live(_) => {}
    }
    match &mut cfg.executor {
        ExecutorConfig::Fixtures { dir } => rebase(dir, base),
        ExecutorConfig::Worker { scratch_dir, .. } => {
            if let Some(d) = scratch_dir.as_mut() {
                rebase(d, base);
            }
        }
    }
    Ok(cfg)
}

impl Global {
    /// Config file, then flags/env on top.
    pub fn resolve(&self) -> Result<ServiceConfig, CliError> {
        let mut cfg = match &self.config {
            Some(path) => load_file(path)?,
            None => ServiceConfig::default(),
        };
        if let Some(l) = &self.library {
            cfg.library = l.clone();
        }
        if let Some(a) = &self.assets {
            cfg.assets = Some(a.clone());
        }
        if let Some(t) = &self.transcripts {
            cfg.transcripts = Some(t.clone());
        }
        if let Some(j) = self.jobs {
            cfg.jobs = j;
        }
        if let Some(b) = self.budget_usd {
            cfg.pipeline.budget_usd = Some(b);
        }
        if let Some(root) = &self.fixtures {
            cfg.backend = BackendConfig::Replay {
                fixtures: root.join("llm"),
            };
            cfg.executor = ExecutorConfig::Fixtures {
                dir: root.join("traces"),
            };
        }
        match self.backend {
            Some(BackendKind::Replay) if !matches!(cfg.backend, BackendConfig::Replay { .. }) => {
                cfg.backend = BackendConfig::default();
            }
            Some(BackendKind::Live) => {
                let mut http = match &cfg.backend {
                    BackendConfig::Live(h) => h.clone(),
                    BackendConfig::Replay { .. } => HttpConfig {
                        endpoint: String::new(),
                        model: String::new(),
                        api_key: None,
                        timeout_s: 120.0,
                        prompt_price_per_mtok: 0.0,
                        completion_price_per_mtok: 0.0,
                    },
                };
                if let Some(e) = &self.endpoint {
                    http.endpoint = e.clone();
                }
                if let Some(m) = &self.model {
                    http.model = m.clone();
                }
                if http.endpoint.is_empty() || http.model.is_empty() {
                    return Err(CliError::Config(
                        "the live backend needs an endpoint and a model (--endpoint/--model or SMC_ENDPOINT/SMC_MODEL)"
                            .into(),
                    ));
                }
                cfg.backend = BackendConfig::Live(http);
            }
            _ => {}
        }
        if let BackendConfig::Live(http) = &mut cfg.backend {
            if self.api_key.is_some() {
                http.api_key = self.api_key.clone();
            }
        }
        if let Some(cmd) = &self.executor {
            cfg.executor = ExecutorConfig::Worker {
                command: cmd.clone(),
                scratch_dir: None,
            };
        }
        // the service may run with a different working directory
        cfg.library = absolute(&cfg.library);
        cfg.assets = cfg.assets.as_deref().map(absolute);
        Ok(cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_override_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("smc.toml");
        std::fs::write(
            &path,
            "library = \"lib\"\njobs = 3\n[backend]\nkind = \"replay\"\nfixtures = \"fx/llm\"\n[pipeline]\nrng_seed = 4\n",
        )
        .unwrap();
        let g = Global {
            config: Some(path.clone()),
            ..Global::default()
        };
        let cfg = g.resolve().unwrap();
        assert_eq!(cfg.library, dir.path().join("lib"));
        assert_eq!(cfg.jobs, 3);
        assert_eq!(cfg.pipeline.rng_seed, 4);
        assert_eq!(
            cfg.backend,
            BackendConfig::Replay {
                fixtures: dir.path().join("fx/llm")
            }
        );

        let g = Global {
            config: Some(path),
            library: Some(dir.path().join("other")),
            jobs: Some(1),
            fixtures: Some(dir.path().join("root")),
            ..Global::default()
        };
        let cfg = g.resolve().unwrap();
        assert_eq!(cfg.library, dir.path().join("other"));
        assert_eq!(cfg.jobs, 1);
        assert_eq!(
            cfg.executor,
            ExecutorConfig::Fixtures {
                dir: dir.path().join("root/traces")
            }
        );
    }

    #[test]
    fn live_backend_needs_endpoint_and_model() {
        let g = Global {
            backend: Some(BackendKind::Live),
            ..Global::default()
        };
        assert!(matches!(g.resolve(), Err(CliError::Config(_))));
        let g = Global {
            backend: Some(BackendKind::Live),
            endpoint: Some("http://localhost:1/v1".into()),
            model: Some("m".into()),
            api_key: Some("k".into()),
            ..Global::default()
        };
        match g.resolve().unwrap().backend {
            BackendConfig::Live(h) => assert_eq!(h.api_key.as_deref(), Some("k")),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn bad_file_is_a_config_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("smc.toml");
        std::fs::write(&path, "jobs = \"many\"").unwrap();
        assert!(matches!(load_file(&path), Err(CliError::Config(_))));
        assert!(matches!(
            load_file(&dir.path().join("missing.toml")),
            Err(CliError::Config(_))
        ));
    }
}
