//! Local HTTP service over traces, labels, trees and experiments.
//!
//! Reads run concurrently; writes go through the [`Store`] write lock.
//! Tree fitting and sweeps run as background jobs whose state is polled at
//! `GET /jobs/{id}`.

mod error;
mod routes;
mod store;

use std::sync::{Arc, RwLock, RwLockReadGuard, RwLockWriteGuard};

use axum::routing::{get, post};
use axum::Router;

pub use error::{ApiError, ApiResult};
pub use routes::{EnvDescriptor, LabelPost, SweepRequest, TrainTreeRequest, TreeView};
pub use store::{JobKind, JobRecord, JobStatus, LabelSet, Store, TreeEntry};

#[derive(Clone, Default)]
pub struct AppState {
    store: Arc<RwLock<Store>>,
}

impl AppState {
    pub fn new(store: Store) -> Self {
        AppState {
            store: Arc::new(RwLock::new(store)),
        }
    }

    /// A panicking job cannot leave the store half-written in a way that
    /// matters more than losing the service, so poisoning is ignored.
    pub fn read(&self) -> RwLockReadGuard<'_, Store> {
        self.store.read().unwrap_or_else(|e| e.into_inner())
    }

    pub fn write(&self) -> RwLockWriteGuard<'_, Store> {
        self.store.write().unwrap_or_else(|e| e.into_inner())
    }
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/envs", get(routes::envs))
        .route("/traces", get(routes::traces))
        .route("/labels", get(routes::get_labels).post(routes::post_labels))
        .route("/trees/train", post(routes::train_tree))
        .route("/trees/{id}", get(routes::get_tree))
        .route("/trees/{id}/edits", post(routes::edit_tree))
        .route("/experiments/sweep", post(routes::sweep))
        .route("/experiments/{id}", get(routes::get_experiment))
        .route("/jobs/{id}", get(routes::get_job))
        .with_state(state)
}

/// Serves until the process is stopped.
pub async fn serve(state: AppState, addr: std::net::SocketAddr) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    tracing::info!("listening on {}", listener.local_addr()?);
    axum::serve(listener, router(state)).await
}
