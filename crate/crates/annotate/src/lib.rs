//! Labeling service: serves cluster samples over HTTP and records labels in
//! the append-only annotation log.
//!
//! Routes:
//!
//! | method | path | |
//! |---|---|---|
//! | GET | `/health` | liveness |
//! | GET | `/v1/clusters` | k, inertia and cluster sizes |
//! | GET | `/v1/clusters/{i}/sample?n=100&seed=S` | seeded sample with texts |
//! | GET | `/v1/posts/{id}` | one cleaned post |
//! | POST | `/v1/annotations` | submit a label; 201 or 422 |
//! | GET | `/v1/prevalence?dataset=TAG` | per-label tally |
//! | GET | `/v1/taxonomy` | label list |
//!
//! A submission is acknowledged only after its log line is fsynced.

use std::collections::HashMap;
use std::future::Future;
use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::{Arc, Mutex};

use axum::extract::{Path, Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use hesitancy_core::cluster::{sample_cluster, ClusterModel};
use hesitancy_core::ingest::CleanPost;
use hesitancy_core::labels::{
    AnnotationStore, LabelTaxonomy, NewAnnotation, PrevalenceTable, NONE_LABEL,
};
use serde::{Deserialize, Serialize};
use tokio::net::TcpListener;
use tower_http::cors::CorsLayer;

#[derive(Debug, thiserror::Error)]
pub enum ServeError {
    #[error("{missing} clustered post ids are not in the corpus (first: {first:?})")]
    MismatchedIds { missing: usize, first: String },
    #[error("annotation store: {0}")]
    Store(hesitancy_core::Error),
    #[error("cannot listen on {addr}: {error}")]
    Bind { addr: SocketAddr, error: std::io::Error },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// What the service needs to start.
pub struct ServeConfig {
    pub model: ClusterModel,
    pub posts: Vec<CleanPost>,
    pub dataset_tag: String,
    pub taxonomy: LabelTaxonomy,
    pub store_path: PathBuf,
    pub addr: SocketAddr,
}

struct AppState {
    model: ClusterModel,
    posts: HashMap<String, CleanPost>,
    dataset_tag: String,
    store: Mutex<AnnotationStore>,
}

type Shared = Arc<AppState>;

/// A bound, not yet running server.
pub struct Server {
    listener: TcpListener,
    router: Router,
}

impl Server {
    /// Check ids, open the store and bind the port.
    pub async fn bind(cfg: ServeConfig) -> Result<Self, ServeError> {
        let posts: HashMap<String, CleanPost> =
            cfg.posts.into_iter().map(|p| (p.id.clone(), p)).collect();
        let mut missing = cfg.model.assignments.keys().filter(|id| !posts.contains_key(*id));
        if let Some(first) = missing.next() {
            return Err(ServeError::MismatchedIds {
                missing: missing.count() + 1,
                first: first.clone(),
            });
        }
        let store = AnnotationStore::open(&cfg.store_path, cfg.taxonomy).map_err(ServeError::Store)?;
        let listener = TcpListener::bind(cfg.addr)
            .await
            .map_err(|error| ServeError::Bind { addr: cfg.addr, error })?;
        let state = Arc::new(AppState {
            model: cfg.model,
            posts,
            dataset_tag: cfg.dataset_tag,
            store: Mutex::new(store),
        });
        Ok(Self {
            listener,
            router: router(state),
        })
    }

    pub fn local_addr(&self) -> std::io::Result<SocketAddr> {
        self.listener.local_addr()
    }

    /// Serve until `shutdown` resolves.
    pub async fn run(self, shutdown: impl Future<Output = ()> + Send + 'static) -> Result<(), ServeError> {
        axum::serve(self.listener, self.router)
            .with_graceful_shutdown(shutdown)
            .await?;
        Ok(())
    }
}

fn router(state: Shared) -> Router {
    Router::new()
        .route("/health", get(health))
        .route("/v1/clusters", get(clusters))
        .route("/v1/clusters/{i}/sample", get(cluster_sample))
        .route("/v1/posts/{id}", get(post_by_id))
        .route("/v1/annotations", post(submit))
        .route("/v1/prevalence", get(prevalence))
        .route("/v1/taxonomy", get(taxonomy))
        .layer(CorsLayer::permissive())
        .with_state(state)
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ErrorBody {
    pub error: String,
}

fn reject(status: StatusCode, message: impl Into<String>) -> Response {
    (status, Json(ErrorBody { error: message.into() })).into_response()
}

async fn health() -> Json<serde_json::Value> {
    Json(serde_json::json!({ "status": "ok" }))
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ClustersView {
    pub dataset: String,
    pub k: usize,
    pub inertia: f64,
    pub sizes: Vec<usize>,
}

async fn clusters(State(s): State<Shared>) -> Json<ClustersView> {
    Json(ClustersView {
        dataset: s.dataset_tag.clone(),
        k: s.model.k,
        inertia: s.model.inertia,
        sizes: s.model.sizes(),
    })
}

#[derive(Debug, Deserialize)]
struct SampleQuery {
    n: Option<usize>,
    seed: Option<u64>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct SampledPost {
    pub post_id: String,
    pub text: String,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct SampleView {
    pub cluster: usize,
    pub seed: u64,
    pub posts: Vec<SampledPost>,
}

async fn cluster_sample(
    State(s): State<Shared>,
    Path(i): Path<usize>,
    Query(q): Query<SampleQuery>,
) -> Response {
    let seed = q.seed.unwrap_or(0);
    match sample_cluster(&s.model, i, q.n.unwrap_or(100), seed) {
        Ok(sample) => Json(SampleView {
            cluster: i,
            seed,
            posts: sample
                .post_ids
                .into_iter()
                .map(|id| SampledPost {
                    text: s.posts[&id].normalized_text.clone(),
                    post_id: id,
                })
                .collect(),
        })
        .into_response(),
        Err(e) => reject(StatusCode::NOT_FOUND, e.to_string()),
    }
}

#[derive(Debug, Serialize, Deserialize)]
pub struct PostView {
    #[serde(flatten)]
    pub post: CleanPost,
    pub cluster: Option<usize>,
}

async fn post_by_id(State(s): State<Shared>, Path(id): Path<String>) -> Response {
    match s.posts.get(&id) {
        Some(p) => Json(PostView {
            post: p.clone(),
            cluster: s.model.assignments.get(&id).copied(),
        })
        .into_response(),
        None => reject(StatusCode::NOT_FOUND, format!("unknown post {id:?}")),
    }
}

#[derive(Debug, Serialize, Deserialize)]
pub struct SubmitBody {
    pub post_id: String,
    pub cluster: usize,
    pub label: String,
    pub annotator: String,
    /// Defaults to the served dataset.
    #[serde(default)]
    pub dataset: Option<String>,
}

async fn submit(State(s): State<Shared>, Json(body): Json<SubmitBody>) -> Response {
    if !s.posts.contains_key(&body.post_id) {
        return reject(
            StatusCode::UNPROCESSABLE_ENTITY,
            format!("unknown post {:?}", body.post_id),
        );
    }
    if body.cluster >= s.model.k {
        return reject(
            StatusCode::UNPROCESSABLE_ENTITY,
            format!("cluster {} out of range for k = {}", body.cluster, s.model.k),
        );
    }
    let new = NewAnnotation {
        post_id: body.post_id,
        dataset_tag: body.dataset.unwrap_or_else(|| s.dataset_tag.clone()),
        cluster: body.cluster,
        label: body.label,
        annotator: body.annotator,
    };
    let state = Arc::clone(&s);
    let result = tokio::task::spawn_blocking(move || {
        let mut store = state.store.lock().unwrap_or_else(|p| p.into_inner());
        store.submit(new, chrono::Utc::now())
    })
    .await;
    match result {
        Ok(Ok(ann)) => (StatusCode::CREATED, Json(ann)).into_response(),
        Ok(Err(e @ (hesitancy_core::Error::UnknownLabel(_) | hesitancy_core::Error::InvalidArgument(_)))) => {
            reject(StatusCode::UNPROCESSABLE_ENTITY, e.to_string())
        }
        Ok(Err(e)) => {
            tracing::error!(error = %e, "annotation write failed");
            reject(StatusCode::INTERNAL_SERVER_ERROR, e.to_string())
        }
        Err(e) => reject(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()),
    }
}

#[derive(Debug, Deserialize)]
struct PrevalenceQuery {
    dataset: Option<String>,
}

async fn prevalence(State(s): State<Shared>, Query(q): Query<PrevalenceQuery>) -> Json<PrevalenceTable> {
    let dataset = q.dataset.unwrap_or_else(|| s.dataset_tag.clone());
    let store = s.store.lock().unwrap_or_else(|p| p.into_inner());
    Json(store.prevalence(&dataset))
}

#[derive(Debug, Serialize, Deserialize)]
pub struct TaxonomyView {
    /// Positive labels followed by the sentinel.
    pub labels: Vec<String>,
    pub sentinel: String,
}

async fn taxonomy(State(s): State<Shared>) -> Json<TaxonomyView> {
    let store = s.store.lock().unwrap_or_else(|p| p.into_inner());
    Json(TaxonomyView {
        labels: store.taxonomy().all().into_iter().map(String::from).collect(),
        sentinel: NONE_LABEL.to_string(),
    })
}
