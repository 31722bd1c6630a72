mod common;

use std::sync::atomic::Ordering;
use std::sync::Arc;
use std::time::Duration;

use common::stub::{dead_url, serve, Script};
use common::toy_corpus;
use contrast_core::gateway::{CompletionRequest, GatewayError, RemoteConfig, RetryPolicy};
use contrast_core::{CompletionBackend, DeterministicBackend, Gateway, GatewayConfig, PipelineConfig, RemoteBackend, StageTag};

fn config(url: String) -> RemoteConfig {
    RemoteConfig {
        endpoint_url: url,
        timeout_ms: 2_000,
        retry: RetryPolicy {
            attempts: 3,
            base_delay_ms: 1,
            factor: 2.0,
            jitter: 0.2,
        },
        ..RemoteConfig::default()
    }
}

fn request() -> CompletionRequest {
    let prompt = contrast_core::gateway::Templates::bundled().render(StageTag::Usefulness, "ROW\tR0\tweight\tHIGH\t1");
    CompletionRequest {
        stage_tag: StageTag::Usefulness,
        prompt,
        temperature: 0.0,
        max_output_tokens: 64,
    }
}

#[test]
fn server_errors_are_retried_until_success() {
    let stub = serve(Script::FailFirst(2, 500));
    let backend = RemoteBackend::new(config(stub.url.clone())).unwrap();
    let got = backend.complete(&request()).unwrap();
    assert_eq!(stub.hits.load(Ordering::SeqCst), 3);
    assert!(got.backend_id.starts_with("remote:"));
}

#[test]
fn rate_limit_answers_are_retried() {
    let stub = serve(Script::FailFirst(1, 429));
    let backend = RemoteBackend::new(config(stub.url.clone())).unwrap();
    assert!(backend.complete(&request()).is_ok());
    assert_eq!(stub.hits.load(Ordering::SeqCst), 2);
}

#[test]
fn persistent_server_errors_give_up_after_the_attempt_budget() {
    let stub = serve(Script::Always(503));
    let backend = RemoteBackend::new(config(stub.url.clone())).unwrap();
    match backend.complete(&request()) {
        Err(GatewayError::Status { status: 503, attempts: 3, .. }) => {}
        other => panic!("{other:?}"),
    }
    assert_eq!(stub.hits.load(Ordering::SeqCst), 3);
}

#[test]
fn client_errors_are_not_retried() {
    let stub = serve(Script::Always(400));
    let backend = RemoteBackend::new(config(stub.url.clone())).unwrap();
    assert!(matches!(backend.complete(&request()), Err(GatewayError::Status { status: 400, attempts: 1, .. })));
    assert_eq!(stub.hits.load(Ordering::SeqCst), 1);
}

#[test]
fn malformed_envelope_is_reported() {
    let stub = serve(Script::Garbage);
    let backend = RemoteBackend::new(config(stub.url.clone())).unwrap();
    assert!(matches!(backend.complete(&request()), Err(GatewayError::MalformedEnvelope(_))));
}

#[test]
fn slow_server_times_out() {
    let stub = serve(Script::Slow(Duration::from_millis(800)));
    let mut c = config(stub.url.clone());
    c.timeout_ms = 100;
    c.retry.attempts = 2;
    let backend = RemoteBackend::new(c).unwrap();
    assert!(matches!(backend.complete(&request()), Err(GatewayError::Timeout { attempts: 2 })));
}

#[test]
fn unreachable_endpoint_is_a_transport_error() {
    let backend = RemoteBackend::new(config(dead_url())).unwrap();
    match backend.complete(&request()) {
        Err(GatewayError::Transport { attempts: 3, .. }) => {}
        other => panic!("{other:?}"),
    }
}

#[test]
fn api_key_is_sent_as_bearer_token() {
    let stub = serve(Script::FailFirst(0, 500));
    let backend = RemoteBackend::new(config(stub.url.clone())).unwrap().with_api_key("s3cret");
    backend.complete(&request()).unwrap();
    assert_eq!(stub.auth.lock().unwrap()[0].as_deref(), Some("Bearer s3cret"));
}

#[test]
fn rate_limit_paces_requests() {
    let stub = serve(Script::FailFirst(0, 500));
    let mut c = config(stub.url.clone());
    c.requests_per_second = 20.0;
    c.burst = 1;
    let backend = RemoteBackend::new(c).unwrap();
    let started = std::time::Instant::now();
    for _ in 0..4 {
        backend.complete(&request()).unwrap();
    }
    // one token up front, three refills at 50 ms each
    assert!(started.elapsed() >= Duration::from_millis(140), "{:?}", started.elapsed());
}

#[test]
fn pipeline_over_http_matches_the_offline_golden_rows() {
    let stub = serve(Script::FailFirst(2, 500));
    let backend = RemoteBackend::new(config(stub.url.clone())).unwrap();
    let gateway = Gateway::new(Arc::new(backend), GatewayConfig::default());
    let out = contrast_core::run_pipeline(&toy_corpus(), "SpeakerX", "SpeakerY", &gateway, &PipelineConfig::default())
        .unwrap();
    let offline = Gateway::new(Arc::new(DeterministicBackend), GatewayConfig::default());
    let expected =
        contrast_core::run_pipeline(&toy_corpus(), "SpeakerX", "SpeakerY", &offline, &PipelineConfig::default()).unwrap();
    assert_eq!(out.summary.rows, expected.summary.rows);
    assert_ne!(out.summary.run_metadata.backend_id, expected.summary.run_metadata.backend_id);
}

#[test]
fn pipeline_fails_when_no_extract_tile_answers() {
    let backend = RemoteBackend::new(config(dead_url())).unwrap();
    let gateway = Gateway::new(Arc::new(backend), GatewayConfig::default());
    match contrast_core::run_pipeline(&toy_corpus(), "SpeakerX", "SpeakerY", &gateway, &PipelineConfig::default()) {
        Err(contrast_core::PipelineError::Stage {
            stage: StageTag::Extract,
            source: GatewayError::Transport { .. },
        }) => {}
        other => panic!("{:?}", other.map(|o| o.summary.rows.len())),
    }
}
