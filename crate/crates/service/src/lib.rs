//! HTTP service around the preset engine. Each session owns a generation
//! chain, a favorites list and an optional example matrix; generation 0 is
//! shared read-only.

pub mod config;
pub mod error;
pub mod routes;
pub mod session;
pub mod state;
pub mod store;

use std::sync::Arc;

pub use config::Config;
pub use error::{ApiError, ErrorRecord};
pub use state::AppState;

pub fn app(state: Arc<AppState>) -> axum::Router {
    routes::router(state)
}
