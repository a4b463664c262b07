//! Runs the HTTP service with canned completions instead of a model, for
//! poking at the API offline.
//!
//!     cargo run -p tokenlattice-service --example fixture_server
//!     curl -X POST localhost:8080/sessions
//!     curl -X POST localhost:8080/sessions/$ID/prompts -d '{"prompt_id":"p","prompt_text":"hi","n_generations":4}'
//!     curl "localhost:8080/sessions/$ID/graph?threshold=0.4&lambda=1"

use std::sync::Arc;
use tokenlattice::client::{CompletionProvider, FixtureProvider, Sampler};
use tokenlattice::session::LatticeEngine;
use tokenlattice_service::api::{router, AppState};

#[tokio::main]
async fn main() {
    let provider: Arc<dyn CompletionProvider> = Arc::new(FixtureProvider::new([
        "Hello! How can I help you today?",
        "Hi there! How can I help?",
        "Hello! What can I do for you today?",
        "Hey! How may I assist you?",
    ]));
    let state = AppState::new(
        Arc::new(LatticeEngine::default()),
        Arc::new(Sampler::new(provider)),
        "fixture",
    );
    let app = router(Arc::new(state), None).expect("router");
    let listener = tokio::net::TcpListener::bind("127.0.0.1:8080")
        .await
        .expect("bind 8080");
    println!("listening on http://127.0.0.1:8080");
    axum::serve(listener, app).await.expect("serve");
}
