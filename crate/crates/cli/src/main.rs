//! `motifsmith`: learn arrangement programs from example scenes and generate
//! new arrangements from text.
//!
//! Exit codes: 0 ok, 2 configuration, 3 unreadable input, 4 pipeline failure,
//! 5 I/O, 6 no meta-program for the motif type.

mod settings;

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Parser, Subcommand, ValueEnum};
use tokio::sync::Semaphore;
use tokio::task::JoinSet;

use motifsmith_client::{Client, ClientError};
use motifsmith_core::api::{AssetsIndexRequest, ExportRequest, GenerateRequest, LearnRequest, ValidateRequest};
use motifsmith_core::exec::ObjectTrace;
use motifsmith_core::pipeline::TouchMode;
use motifsmith_core::scene::Arrangement;
use motifsmith_service::{AppState, ServiceConfig};

use settings::Global;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Input(String),
    #[error("{0}")]
    Io(String),
    /// The command ran but its check did not pass.
    #[error("{0}")]
    Failed(String),
    #[error(transparent)]
    Client(#[from] ClientError),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Input(_) => 3,
            CliError::Io(_) => 5,
            CliError::Failed(_) => 4,
            CliError::Client(e) => match e.kind() {
                Some("no_meta_program") => 6,
                Some("invalid_request" | "invalid_argument") => 3,
                Some("library" | "assets") => 5,
                Some(_) => 4,
                None => 5,
            },
        }
    }
}

#[derive(Parser, Debug)]
#[command(name = "motifsmith", version, about = "Learn and generate 3D object arrangements")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum ExportKind {
    /// Arrangement JSON
    Layout,
    /// One OBJ with every object's mesh posed in world space
    MergedMesh,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Learn a motif and meta-program from an example arrangement
    Learn {
        arrangement: PathBuf,
        /// Defaults to the arrangement's description
        #[arg(long)]
        description: Option<String>,
        /// Write the full outcome (programs, reports, transcripts) as JSON
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Generate arrangements from descriptions
    Generate {
        #[arg(required = true)]
        descriptions: Vec<String>,
        #[arg(long, env = "SMC_SEED")]
        seed: Option<u64>,
        #[arg(long, value_enum)]
        touch: Option<TouchArg>,
        /// Output file; with several descriptions, a directory
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "layout")]
        export: ExportKind,
    },
    /// Print the motif type of a description
    Classify { description: String },
    /// Check a motif program or trace against an arrangement
    Validate {
        arrangement: PathBuf,
        /// Program source to execute
        #[arg(long, conflicts_with = "trace")]
        program: Option<PathBuf>,
        /// Precomputed trace JSON
        #[arg(long)]
        trace: Option<PathBuf>,
        /// Variables judged to be hard-coded per-object lists
        #[arg(long = "listing-variable")]
        listing_variables: Vec<String>,
    },
    /// Asset manifest operations
    Assets {
        #[command(subcommand)]
        command: AssetsCommand,
    },
    /// Convert a layout into a merged OBJ mesh
    Export {
        layout: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the HTTP service
    Serve {
        #[arg(long, default_value = "127.0.0.1:8080", env = "SMC_BIND")]
        bind: std::net::SocketAddr,
    },
}

#[derive(Subcommand, Debug)]
enum AssetsCommand {
    /// Index a manifest and report labels and problems
    Index { manifest: Option<PathBuf> },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum TouchArg {
    Auto,
    On,
    Off,
}

impl From<TouchArg> for TouchMode {
    fn from(t: TouchArg) -> Self {
        match t {
            TouchArg::Auto => TouchMode::Auto,
            TouchArg::On => TouchMode::On,
            TouchArg::Off => TouchMode::Off,
        }
    }
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
}

fn read_arrangement(path: &Path) -> Result<Arrangement, CliError> {
    let a: Arrangement = read_json(path)?;
    a.validate()
        .map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
    Ok(a)
}

fn emit(out: Option<&Path>, text: &str) -> Result<(), CliError> {
    match out {
        Some(p) => {
            if let Some(dir) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
                std::fs::create_dir_all(dir).map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))?;
            }
            std::fs::write(p, text).map_err(|e| CliError::Io(format!("{}: {e}", p.display())))
        }
        None => {
            print!("{text}");
            if !text.ends_with('\n') {
                println!();
            }
            Ok(())
        }
    }
}

fn slug(s: &str) -> String {
    let s: String = s
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() {
                c.to_ascii_lowercase()
            } else {
                '_'
            }
        })
        .collect();
    s.trim_matches('_').to_string()
}

async fn connect(global: &Global, cfg: &ServiceConfig) -> Result<Client, CliError> {
    if let Some(url) = &global.server {
        return Client::new(url).map_err(|e| CliError::Config(e.to_string()));
    }
    let state = AppState::new(cfg.clone()).map_err(|e| CliError::Config(e.to_string()))?;
    let (addr, _server) = motifsmith_service::spawn("127.0.0.1:0".parse().expect("loopback address"), state)
        .await
        .map_err(|e| CliError::Io(format!("could not start the in-process service: {e}")))?;
    tracing::debug!(%addr, "in-process service started");
    Client::new(&format!("http://{addr}")).map_err(|e| CliError::Config(e.to_string()))
}

async fn run(cli: Cli) -> Result<(), CliError> {
    let cfg = cli.global.resolve()?;
    if let Command::Serve { bind } = cli.command {
        let state = AppState::new(cfg).map_err(|e| CliError::Config(e.to_string()))?;
        let listener = tokio::net::TcpListener::bind(bind)
            .await
            .map_err(|e| CliError::Io(format!("{bind}: {e}")))?;
        eprintln!(
            "listening on http://{}",
            listener.local_addr().map_err(|e| CliError::Io(e.to_string()))?
        );
        return motifsmith_service::serve(listener, state)
            .await
            .map_err(|e| CliError::Io(e.to_string()));
    }
    // inputs are checked before any service is started
    let client = match &cli.command {
        Command::Learn { arrangement, .. } | Command::Validate { arrangement, .. } => {
            read_arrangement(arrangement)?;
            connect(&cli.global, &cfg).await?
        }
        Command::Export { layout, .. } => {
            read_arrangement(layout)?;
            connect(&cli.global, &cfg).await?
        }
        _ => connect(&cli.global, &cfg).await?,
    };
    let library = Some(cfg.library.clone());
    match cli.command {
        Command::Learn {
            arrangement,
            description,
            out,
        } => {
            let arrangement = read_arrangement(&arrangement)?;
            let o = client
                .learn(&LearnRequest {
                    arrangement,
                    description,
                    library,
                })
                .await?;
            eprintln!(
                "learned `{}` for motif type {} (motif program {}, rewrite iterations {}, meta iterations {})",
                o.meta.function_name, o.motif_type, o.motif_program_id, o.rewrite_iterations, o.meta_iterations
            );
            eprintln!(
                "meta-program stored at {}; {} LLM calls, ${:.4}",
                o.meta_path.display(),
                o.report.llm_calls,
                o.report.cost_usd
            );
            if let Some(out) = out {
                let text = serde_json::to_string_pretty(&o).expect("outcome serializes");
                emit(Some(&out), &text)?;
            }
        }
        Command::Generate {
            descriptions,
            seed,
            touch,
            out,
            export,
        } => {
            let many = descriptions.len() > 1;
            let permits = Arc::new(Semaphore::new(cfg.jobs.max(1)));
            let mut tasks = JoinSet::new();
            for (i, description) in descriptions.into_iter().enumerate() {
                let req = GenerateRequest {
                    description,
                    library: library.clone(),
                    assets: cfg.assets.clone(),
                    seed,
                    touch: touch.map(Into::into),
                    merged_mesh: export == ExportKind::MergedMesh,
                };
                let client = client.clone();
                let permits = permits.clone();
                tasks.spawn(async move {
                    let _p = permits.acquire_owned().await.expect("semaphore open");
                    (i, client.generate(&req).await, req.description)
                });
            }
            let mut results = Vec::new();
            while let Some(done) = tasks.join_next().await {
                results.push(done.map_err(|e| CliError::Io(e.to_string()))?);
            }
            results.sort_by_key(|r| r.0);
            let mut first_err = None;
            for (_, res, description) in results {
                let resp = match res {
                    Ok(r) => r,
                    Err(e) => {
                        if many {
                            eprintln!("{description}: {e}");
                        }
                        first_err.get_or_insert(CliError::from(e));
                        continue;
                    }
                };
                let o = &resp.outcome;
                eprintln!(
                    "{description}: {} objects via {} (touch {}, {} warnings)",
                    o.arrangement.objects.len(),
                    o.function_call,
                    if o.touch { "on" } else { "off" },
                    o.warnings.len()
                );
                for w in &o.warnings {
                    eprintln!("  warning: {w}");
                }
                let (text, ext) = match export {
                    ExportKind::Layout => (o.arrangement.to_json(), "json"),
                    ExportKind::MergedMesh => (resp.merged_obj.clone().unwrap_or_default(), "obj"),
                };
                let target = match (&out, many) {
                    (Some(dir), true) => Some(dir.join(format!("{}.{ext}", slug(&description)))),
                    (Some(file), false) => Some(file.clone()),
                    (None, _) => None,
                };
                emit(target.as_deref(), &text)?;
            }
            if let Some(e) = first_err {
                return Err(e);
            }
        }
        Command::Classify { description } => {
            let r = client.classify(&description).await?;
            println!("{}", r.motif_type);
        }
        Command::Validate {
            arrangement,
            program,
            trace,
            listing_variables,
        } => {
            let arrangement = read_arrangement(&arrangement)?;
            let program = program
                .map(|p| std::fs::read_to_string(&p).map_err(|e| CliError::Input(format!("{}: {e}", p.display()))))
                .transpose()?;
            let trace: Option<ObjectTrace> = trace.map(|p| read_json(&p)).transpose()?;
            if program.is_none() && trace.is_none() {
                return Err(CliError::Input("pass --program or --trace".into()));
            }
            let report = client
                .validate(&ValidateRequest {
                    arrangement,
                    program,
                    trace,
                    listing_valid: listing_variables.is_empty(),
                    listing_variables,
                })
                .await?;
            for r in &report.results {
                let mark = if r.passed { "ok  " } else { "FAIL" };
                println!("{mark} {}", r.criterion.as_str());
                if !r.passed {
                    println!("     {}", r.feedback);
                }
            }
            if !report.passed {
                let failed = report.results.iter().filter(|r| !r.passed).count();
                return Err(CliError::Failed(format!("{failed} criteria failed")));
            }
        }
        Command::Assets {
            command: AssetsCommand::Index { manifest },
        } => {
            let manifest = manifest
                .or_else(|| cfg.assets.clone())
                .ok_or_else(|| CliError::Config("no manifest given (argument, --assets or SMC_ASSETS)".into()))?;
            let manifest = std::path::absolute(&manifest).unwrap_or(manifest);
            let r = client.index_assets(&AssetsIndexRequest { manifest }).await?;
            println!("{} assets", r.count);
            for (label, n) in &r.labels {
                println!("  {label}: {n}");
            }
            for w in &r.warnings {
                eprintln!("warning: {w}");
            }
        }
        Command::Export { layout, out } => {
            let arrangement = read_arrangement(&layout)?;
            let r = client
                .export(&ExportRequest {
                    arrangement,
                    assets: cfg.assets.clone(),
                })
                .await?;
            emit(out.as_deref(), &r.obj)?;
        }
        Command::Serve { .. } => unreachable!("handled above"),
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.global.verbose {
        0 => tracing::Level::WARN,
        1 => tracing::Level::INFO,
        _ => tracing::Level::DEBUG,
    };
    tracing_subscriber::fmt()
        .with_max_level(level)
        .with_writer(std::io::stderr)
        .init();
    let rt = match tokio::runtime::Runtime::new() {
        Ok(rt) => rt,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(5);
        }
    };
    match rt.block_on(run(cli)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
