//! Async client for the motifsmith HTTP service.
//!
//! ```no_run
//! # async fn demo() -> Result<(), motifsmith_client::ClientError> {
//! let client = motifsmith_client::Client::new("http://127.0.0.1:8080")?;
//! let motif = client.classify("a stack of four books").await?.motif_type;
//! println!("{motif}");
//! # Ok(())
//! # }
//! ```

use std::time::Duration;

use reqwest::StatusCode;
use serde::de::DeserializeOwned;
use serde::Serialize;

use motifsmith_core::api::{
    AssetsIndexRequest, AssetsIndexResponse, ClassifyRequest, ClassifyResponse, ErrorBody, ExportRequest,
    ExportResponse, GenerateRequest, GenerateResponse, Health, LearnRequest, LearnResponse, ValidateRequest,
    ValidateResponse,
};

#[derive(Debug, thiserror::Error)]
pub enum ClientError {
    #[error("invalid base url `{0}`")]
    BaseUrl(String),
    #[error("transport error: {0}")]
    Transport(#[from] reqwest::Error),
    /// The service answered with an error body.
    #[error("{} ({status}): {}", body.error.kind, body.error.message)]
    Api { status: StatusCode, body: ErrorBody },
    #[error("unexpected response ({status}): {message}")]
    Decode { status: StatusCode, message: String },
}

impl ClientError {
    /// The service's error kind, when the service produced the error.
    pub fn kind(&self) -> Option<&str> {
        match self {
            ClientError::Api { body, .. } => Some(&body.error.kind),
            _ => None,
        }
    }
}

#[derive(Clone, Debug)]
pub struct Client {
    http: reqwest::Client,
    base: String,
}

impl Client {
    pub fn new(base_url: &str) -> Result<Self, ClientError> {
        let base = base_url.trim_end_matches('/').to_string();
        if !(base.starts_with("http://") || base.starts_with("https://")) {
            return Err(ClientError::BaseUrl(base_url.to_string()));
        }
        // learn runs many model calls; no overall timeout, only on connect
        let http = reqwest::Client::builder()
            .connect_timeout(Duration::from_secs(10))
            .build()?;
        Ok(Client { http, base })
    }

    pub fn base_url(&self) -> &str {
        &self.base
    }

    async fn decode<T: DeserializeOwned>(resp: reqwest::Response) -> Result<T, ClientError> {
        let status = resp.status();
        let bytes = resp.bytes().await?;
        if status.is_success() {
            return serde_json::from_slice(&bytes).map_err(|e| ClientError::Decode {
                status,
                message: e.to_string(),
            });
        }
        match serde_json::from_slice::<ErrorBody>(&bytes) {
            Ok(body) => Err(ClientError::Api { status, body }),
            Err(_) => Err(ClientError::Decode {
                status,
                message: String::from_utf8_lossy(&bytes).chars().take(300).collect(),
            }),
        }
    }

    async fn post<B: Serialize, T: DeserializeOwned>(&self, path: &str, body: &B) -> Result<T, ClientError> {
        let resp = self.http.post(format!("{}{path}", self.base)).json(body).send().await?;
        Self::decode(resp).await
    }

    pub async fn health(&self) -> Result<Health, ClientError> {
        let resp = self.http.get(format!("{}/health", self.base)).send().await?;
        Self::decode(resp).await
    }

    pub async fn learn(&self, req: &LearnRequest) -> Result<LearnResponse, ClientError> {
        self.post("/v1/learn", req).await
    }

    pub async fn generate(&self, req: &GenerateRequest) -> Result<GenerateResponse, ClientError> {
        self.post("/v1/generate", req).await
    }

    pub async fn classify(&self, description: &str) -> Result<ClassifyResponse, ClientError> {
        let req = ClassifyRequest {
            description: description.to_string(),
        };
        self.post("/v1/classify", &req).await
    }

    pub async fn validate(&self, req: &ValidateRequest) -> Result<ValidateResponse, ClientError> {
        self.post("/v1/validate", req).await
    }

    pub async fn index_assets(&self, req: &AssetsIndexRequest) -> Result<AssetsIndexResponse, ClientError> {
        self.post("/v1/assets/index", req).await
    }

    pub async fn export(&self, req: &ExportRequest) -> Result<ExportResponse, ClientError> {
        self.post("/v1/export", req).await
    }
}
