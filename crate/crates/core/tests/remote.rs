//! Remote chat backend against a local mock endpoint: retries, cost
//! accounting, budget skipping and cache replay.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use axum::extract::State;
use axum::http::{HeaderMap, StatusCode};
use axum::response::IntoResponse;
use axum::routing::post;
use axum::{Json, Router};
use serde_json::json;

use gibberlex::lexicon::{ConceptId, PartOfSpeech};
use gibberlex::runner::{
    run, write_predictions, PredictionStatus, RemoteChat, RemoteChatConfig, ReplayCache,
};
use gibberlex::tasks::{Gold, Payload, TaskInstance, TaskKind, Variant};

#[derive(Default)]
struct MockState {
    requests: AtomicUsize,
    fail_first: usize,
    expect_bearer: Option<String>,
}

async fn completions(
    State(state): State<Arc<MockState>>,
    headers: HeaderMap,
    Json(_body): Json<serde_json::Value>,
) -> impl IntoResponse {
    let n = state.requests.fetch_add(1, Ordering::SeqCst);
    if let Some(expected) = &state.expect_bearer {
        let authorized = headers
            .get("authorization")
            .and_then(|v| v.to_str().ok())
            .map(|v| v == format!("Bearer {expected}"))
            .unwrap_or(false);
        if !authorized {
            return (StatusCode::UNAUTHORIZED, Json(json!({"error": "no key"})));
        }
    }
    if n < state.fail_first {
        return (
            StatusCode::INTERNAL_SERVER_ERROR,
            Json(json!({"error": "flaky"})),
        );
    }
    (
        StatusCode::OK,
        Json(json!({
            "id": "mock",
            "object": "chat.completion",
            "choices": [{
                "index": 0,
                "message": {"role": "assistant", "content": "True"},
                "finish_reason": "stop"
            }],
            "usage": {"prompt_tokens": 1000, "completion_tokens": 1000, "total_tokens": 2000}
        })),
    )
}

async fn spawn_mock(state: Arc<MockState>) -> String {
    let app = Router::new()
        .route("/v1/chat/completions", post(completions))
        .with_state(state);
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = listener.local_addr().unwrap();
    tokio::spawn(async move {
        axum::serve(listener, app).await.unwrap();
    });
    format!("http://{addr}/v1/chat/completions")
}

fn instances(count: usize) -> Vec<TaskInstance> {
    (0..count)
        .map(|i| TaskInstance {
            id: format!("td-en-{i:05}"),
            kind: TaskKind::TaxonomyDiscovery,
            variant: Variant::En,
            alignment_key: format!("td-{i}"),
            payload: Payload::Pair {
                a_id: ConceptId::from("a"),
                a_form: "alpha".into(),
                a_pos: PartOfSpeech::Noun,
                a_definition: "first".into(),
                b_id: ConceptId::from("b"),
                b_form: "beta".into(),
                b_pos: PartOfSpeech::Noun,
                b_definition: "second".into(),
            },
            gold: Gold::Label(true),
            prompt: format!("pair {i}"),
        })
        .collect()
}

fn fast_config(endpoint: String) -> RemoteChatConfig {
    let mut config = RemoteChatConfig::new(endpoint, "mock-model");
    config.backoff_ms = 1;
    config.timeout_s = 5;
    config
}

#[tokio::test]
async fn answers_parse_and_cost_follows_usage() {
    let endpoint = spawn_mock(Arc::new(MockState::default())).await;
    let mut config = fast_config(endpoint);
    config.input_price_per_1k = 0.5;
    config.output_price_per_1k = 1.5;
    let backend = RemoteChat::new(config).unwrap();
    let predictions = run(&instances(3), &backend, 2, None).await.unwrap();
    for p in &predictions {
        assert_eq!(p.status, PredictionStatus::Ok);
        assert_eq!(p.raw, "True");
        assert_eq!(p.prompt_tokens, 1000);
        assert_eq!(p.completion_tokens, 1000);
        assert!((p.cost - 2.0).abs() < 1e-12);
        assert_eq!(p.backend_id, "remote-chat:mock-model");
    }
}

#[tokio::test]
async fn transient_errors_are_retried() {
    let state = Arc::new(MockState {
        fail_first: 2,
        ..MockState::default()
    });
    let endpoint = spawn_mock(Arc::clone(&state)).await;
    let backend = RemoteChat::new(fast_config(endpoint)).unwrap();
    let predictions = run(&instances(1), &backend, 1, None).await.unwrap();
    assert_eq!(predictions[0].status, PredictionStatus::Ok);
    assert_eq!(state.requests.load(Ordering::SeqCst), 3);
}

#[tokio::test]
async fn persistent_failure_marks_the_instance_failed() {
    let state = Arc::new(MockState {
        fail_first: usize::MAX,
        ..MockState::default()
    });
    let endpoint = spawn_mock(Arc::clone(&state)).await;
    let backend = RemoteChat::new(fast_config(endpoint)).unwrap();
    let predictions = run(&instances(1), &backend, 1, None).await.unwrap();
    assert_eq!(predictions[0].status, PredictionStatus::Failed);
    assert!(predictions[0].error.as_deref().unwrap().contains("500"));
    // 1 initial attempt + 3 retries
    assert_eq!(state.requests.load(Ordering::SeqCst), 4);
}

#[tokio::test]
async fn budget_halts_new_requests() {
    let endpoint = spawn_mock(Arc::new(MockState::default())).await;
    let mut config = fast_config(endpoint);
    config.input_price_per_1k = 1.0;
    config.output_price_per_1k = 1.0;
    let backend = RemoteChat::new(config).unwrap();
    // each request costs 2.0; with a 3.0 ceiling the third is never issued
    let predictions = run(&instances(5), &backend, 1, Some(3.0)).await.unwrap();
    let ok = predictions
        .iter()
        .filter(|p| p.status == PredictionStatus::Ok)
        .count();
    let skipped = predictions
        .iter()
        .filter(|p| p.status == PredictionStatus::Skipped)
        .count();
    assert_eq!(ok, 2);
    assert_eq!(skipped, 3);
}

#[tokio::test]
async fn api_key_travels_as_bearer() {
    let state = Arc::new(MockState {
        expect_bearer: Some("sekrit".into()),
        ..MockState::default()
    });
    let endpoint = spawn_mock(Arc::clone(&state)).await;

    let mut with_key = fast_config(endpoint.clone());
    with_key.api_key = Some("sekrit".into());
    let backend = RemoteChat::new(with_key).unwrap();
    let predictions = run(&instances(1), &backend, 1, None).await.unwrap();
    assert_eq!(predictions[0].status, PredictionStatus::Ok);

    let without_key = RemoteChat::new(fast_config(endpoint)).unwrap();
    let predictions = run(&instances(1), &without_key, 1, None).await.unwrap();
    assert_eq!(predictions[0].status, PredictionStatus::Failed);
}

#[tokio::test]
async fn replay_reproduces_a_remote_run_byte_for_byte() {
    let state = Arc::new(MockState::default());
    let endpoint = spawn_mock(Arc::clone(&state)).await;
    let mut config = fast_config(endpoint);
    config.input_price_per_1k = 0.25;
    let backend = RemoteChat::new(config).unwrap();
    let set = instances(4);
    let first = run(&set, &backend, 2, None).await.unwrap();
    let issued = state.requests.load(Ordering::SeqCst);

    let replay = ReplayCache::from_predictions(&first);
    let second = run(&set, &replay, 2, None).await.unwrap();
    assert_eq!(
        state.requests.load(Ordering::SeqCst),
        issued,
        "replay must not touch the network"
    );
    let mut bytes_first = Vec::new();
    let mut bytes_second = Vec::new();
    write_predictions(&mut bytes_first, &first).unwrap();
    write_predictions(&mut bytes_second, &second).unwrap();
    assert_eq!(bytes_first, bytes_second);
}
