use std::sync::atomic::{AtomicU32, Ordering};
use std::sync::Arc;
use std::time::Duration;

use axum::extract::State;
use axum::http::{HeaderMap, StatusCode};
use axum::routing::post;
use axum::{Json, Router};
use serde_json::{json, Value};
use souschef_core::llm::{LiveConfig, LiveProvider, LlmProvider, LlmRequest, RetryPolicy};
use souschef_core::{LanguageTag, LlmError, TemplateId};

#[derive(Clone)]
struct Stub {
    hits: Arc<AtomicU32>,
    status: StatusCode,
}

async fn handler(State(stub): State<Stub>, headers: HeaderMap, Json(body): Json<Value>) -> (StatusCode, Json<Value>) {
    stub.hits.fetch_add(1, Ordering::SeqCst);
    if stub.status != StatusCode::OK {
        return (stub.status, Json(json!({ "error": "nope" })));
    }
    let key = headers
        .get("x-goog-api-key")
        .and_then(|v| v.to_str().ok())
        .unwrap_or("none")
        .to_string();
    let echoed = body["contents"][0]["parts"][0]["text"].as_str().unwrap_or("").to_string();
    let system = body["systemInstruction"]["parts"][0]["text"].as_str().unwrap_or("").to_string();
    (
        StatusCode::OK,
        Json(json!({
            "candidates": [{ "content": { "parts": [
                { "text": format!("{key}|") },
                { "text": format!("{system}|{echoed}") }
            ]}}]
        })),
    )
}

async fn serve(status: StatusCode) -> (String, Arc<AtomicU32>) {
    let hits = Arc::new(AtomicU32::new(0));
    let app = Router::new()
        .route("/models/{model}", post(handler))
        .with_state(Stub {
            hits: hits.clone(),
            status,
        });
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = listener.local_addr().unwrap();
    tokio::spawn(async move { axum::serve(listener, app).await.unwrap() });
    (format!("http://{addr}"), hits)
}

fn config(endpoint: String) -> LiveConfig {
    let mut cfg = LiveConfig::new(endpoint);
    cfg.api_key = Some("k123".into());
    cfg.request_timeout = Duration::from_secs(2);
    cfg.retry = RetryPolicy {
        max_attempts: 3,
        backoff: vec![Duration::from_millis(5)],
    };
    cfg
}

fn request() -> LlmRequest {
    LlmRequest::new(TemplateId::Translate, "hello", LanguageTag::Es).with_system_instruction("be brief")
}

#[tokio::test]
async fn success_path() {
    let (url, hits) = serve(StatusCode::OK).await;
    let provider = LiveProvider::new(config(url)).unwrap();
    let resp = provider.complete(&request()).await.unwrap();
    assert_eq!(resp.raw_text, "k123|be brief|hello");
    assert_eq!(hits.load(Ordering::SeqCst), 1);
}

#[tokio::test]
async fn rate_limit_exhausts_after_three_attempts() {
    let (url, hits) = serve(StatusCode::TOO_MANY_REQUESTS).await;
    let err = LiveProvider::new(config(url)).unwrap().complete(&request()).await.unwrap_err();
    assert!(matches!(err, LlmError::RateLimitExhausted { attempts: 3 }), "{err:?}");
    assert_eq!(hits.load(Ordering::SeqCst), 3);
}

#[tokio::test]
async fn server_errors_are_retried() {
    let (url, hits) = serve(StatusCode::SERVICE_UNAVAILABLE).await;
    let err = LiveProvider::new(config(url)).unwrap().complete(&request()).await.unwrap_err();
    assert!(matches!(err, LlmError::ProviderRejection { attempts: 3, .. }), "{err:?}");
    assert_eq!(hits.load(Ordering::SeqCst), 3);
}

#[tokio::test]
async fn client_errors_fail_fast() {
    let (url, hits) = serve(StatusCode::BAD_REQUEST).await;
    let err = LiveProvider::new(config(url)).unwrap().complete(&request()).await.unwrap_err();
    assert!(matches!(err, LlmError::ProviderRejection { attempts: 1, .. }), "{err:?}");
    assert_eq!(hits.load(Ordering::SeqCst), 1);
}

#[tokio::test]
async fn unreachable_endpoint_times_out() {
    // Bind then drop to get a port nobody listens on.
    let port = std::net::TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
    let err = LiveProvider::new(config(format!("http://127.0.0.1:{port}")))
        .unwrap()
        .complete(&request())
        .await
        .unwrap_err();
    assert!(matches!(err, LlmError::Timeout { attempts: 3 }), "{err:?}");
    assert_eq!(err.attempts(), 3);
}
