//! HTTP inference API over one loaded network and marginaliser.
//!
//! The state is immutable after start-up and every request seeds its own
//! random streams, so concurrent requests cannot influence each other.

use std::sync::Arc;
use std::time::Instant;

use axum::body::Bytes;
use axum::extract::State;
use axum::http::{header, HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use rand::Rng;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use umis_core::bn::{BayesNet, BnError};
use umis_core::encoding::encode;
use umis_core::eval::{self, Pca};
use umis_core::infer::{self, InferError, Method, MethodSpec, ResultRecord};
use umis_core::rng;
use umis_core::umnet::Marginaliser;

use crate::error::AppError;
use crate::evidence::parse_evidence;

pub const DEFAULT_MAX_M: usize = 1_000_000;
pub const DEFAULT_M: usize = 1000;
/// Response header carrying the inference time in seconds.
pub const WALL_TIME_HEADER: &str = "x-wall-time";

#[derive(Debug, Clone, PartialEq)]
pub struct ServiceConfig {
    pub max_m: usize,
    pub basis_cases: usize,
    pub basis_seed: u64,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        ServiceConfig {
            max_m: DEFAULT_MAX_M,
            basis_cases: 256,
            basis_seed: 0,
        }
    }
}

#[derive(Debug)]
pub struct ServiceState {
    pub net: BayesNet,
    pub model: Marginaliser,
    pub net_digest: String,
    pub checkpoint_digest: String,
    pub max_m: usize,
    /// Projection basis for `/api/embed`, fitted on embeddings of seeded
    /// prior-sample evidence.
    pub basis: Pca,
}

impl ServiceState {
    pub fn new(
        net: BayesNet,
        model: Marginaliser,
        net_digest: String,
        checkpoint_digest: String,
        config: &ServiceConfig,
    ) -> Result<Self, AppError> {
        model.check_net(&net)?;
        if config.basis_cases < 2 {
            return Err(AppError::validation("the projection basis needs at least two evidence sets"));
        }
        if config.max_m < 1 {
            return Err(AppError::validation("max_m must be positive"));
        }
        let n = net.len();
        let base = rng::derive_seed(config.basis_seed, "embedding-basis");
        let embeddings = (0..config.basis_cases as u64)
            .map(|k| {
                let mut r = rng::stream(base, k);
                let size = r.gen_range(0..=n);
                let ev = eval::sample_evidence(&net, size, &mut r);
                model.extract_embedding(&encode(&ev, n))
            })
            .collect::<Result<Vec<_>, _>>()?;
        let basis = eval::pca_2d(&embeddings)?;
        Ok(ServiceState {
            net,
            model,
            net_digest,
            checkpoint_digest,
            max_m: config.max_m,
            basis,
        })
    }
}

pub fn router(state: Arc<ServiceState>) -> Router {
    Router::new()
        .route("/api/graph", get(graph))
        .route("/api/infer", post(infer_handler))
        .route("/api/embed", post(embed))
        .route("/api/health", get(health))
        .with_state(state)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub error: String,
}

#[derive(Debug)]
pub struct ApiError {
    pub status: StatusCode,
    pub message: String,
}

impl ApiError {
    fn new(status: StatusCode, message: impl std::fmt::Display) -> Self {
        ApiError {
            status,
            message: message.to_string(),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(ErrorBody { error: self.message })).into_response()
    }
}

fn bad_request(e: impl std::fmt::Display) -> ApiError {
    ApiError::new(StatusCode::BAD_REQUEST, e)
}

fn unprocessable(e: impl std::fmt::Display) -> ApiError {
    ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, e)
}

fn from_infer_error(e: InferError) -> ApiError {
    let status = match &e {
        InferError::AllWeightsZero | InferError::Network(BnError::ZeroProbabilityEvidence) => StatusCode::CONFLICT,
        InferError::Network(BnError::UnknownNode { .. }) => StatusCode::BAD_REQUEST,
        InferError::InvalidBeta(_) | InferError::NoSamples => StatusCode::UNPROCESSABLE_ENTITY,
        _ => StatusCode::INTERNAL_SERVER_ERROR,
    };
    ApiError::new(status, e)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphNode {
    pub id: usize,
    pub name: String,
    pub parents: Vec<usize>,
    pub depth_type: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphResponse {
    pub name: String,
    pub type_cap: usize,
    pub nodes: Vec<GraphNode>,
}

async fn graph(State(s): State<Arc<ServiceState>>) -> Json<GraphResponse> {
    Json(GraphResponse {
        name: s.net.name().to_string(),
        type_cap: s.net.type_cap(),
        nodes: s
            .net
            .nodes()
            .iter()
            .map(|n| GraphNode {
                id: n.id.index(),
                name: n.name.clone(),
                parents: n.parents.iter().map(|p| p.index()).collect(),
                depth_type: n.depth_type,
            })
            .collect(),
    })
}

fn empty_object() -> Value {
    Value::Object(Default::default())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InferRequest {
    #[serde(default = "empty_object")]
    pub evidence: Value,
    #[serde(default)]
    pub method: Option<String>,
    #[serde(default)]
    pub beta: Option<f64>,
    #[serde(default)]
    pub m: Option<usize>,
    #[serde(default)]
    pub seed: Option<u64>,
}

async fn infer_handler(State(s): State<Arc<ServiceState>>, body: Bytes) -> Result<Response, ApiError> {
    let req: InferRequest = serde_json::from_slice(&body).map_err(bad_request)?;
    let evidence = parse_evidence(&req.evidence, s.net.len()).map_err(bad_request)?;
    let method = match req.method.as_deref() {
        None => Method::Um,
        Some(name) => Method::parse(name).ok_or_else(|| {
            unprocessable(format!("unknown method {name:?} (expected prior, um, um-naive or um-seq)"))
        })?,
    };
    let beta = req.beta.unwrap_or(0.0);
    if !(0.0..=1.0).contains(&beta) {
        return Err(unprocessable(format!("beta must lie in [0, 1], got {beta}")));
    }
    let m = req.m.unwrap_or(DEFAULT_M);
    if method != Method::Um && !(1..=s.max_m).contains(&m) {
        return Err(unprocessable(format!("m must lie in [1, {}], got {m}", s.max_m)));
    }
    let seed = req.seed.unwrap_or(0);
    let spec = MethodSpec { method, beta };

    let started = Instant::now();
    let state = Arc::clone(&s);
    let result = tokio::task::spawn_blocking(move || {
        infer::run_method(&state.net, Some(&state.model), &evidence, spec, m, seed)
    })
    .await
    .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e))?
    .map_err(from_infer_error)?;
    let elapsed = started.elapsed().as_secs_f64();

    let record = ResultRecord::new(&result, spec, seed);
    let mut response = Json(record).into_response();
    response.headers_mut().insert(
        WALL_TIME_HEADER,
        HeaderValue::from_str(&format!("{elapsed:.6}")).expect("ascii header"),
    );
    Ok(response)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EmbedRequest {
    #[serde(default = "empty_object")]
    pub evidence: Value,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbedResponse {
    pub embedding: Vec<f64>,
    pub projection: [f64; 2],
    pub explained_variance: [f64; 2],
}

async fn embed(State(s): State<Arc<ServiceState>>, body: Bytes) -> Result<Json<EmbedResponse>, ApiError> {
    let req: EmbedRequest = serde_json::from_slice(&body).map_err(bad_request)?;
    let evidence = parse_evidence(&req.evidence, s.net.len()).map_err(bad_request)?;
    let embedding = s
        .model
        .extract_embedding(&encode(&evidence, s.net.len()))
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e))?;
    Ok(Json(EmbedResponse {
        projection: s.basis.project(&embedding),
        explained_variance: s.basis.explained_variance,
        embedding,
    }))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HealthResponse {
    pub status: String,
    pub version: String,
    pub network: String,
    pub nodes: usize,
    pub net_digest: String,
    pub checkpoint_digest: String,
}

async fn health(State(s): State<Arc<ServiceState>>) -> impl IntoResponse {
    let body = HealthResponse {
        status: "ok".into(),
        version: crate::VERSION.into(),
        network: s.net.name().to_string(),
        nodes: s.net.len(),
        net_digest: s.net_digest.clone(),
        checkpoint_digest: s.checkpoint_digest.clone(),
    };
    ([(header::CACHE_CONTROL, "no-store")], Json(body))
}
