mod common;

use std::sync::Arc;
use std::time::{Duration, Instant};

use chrono::Utc;
use repolens_core::dispatch::{ApiErrorCode, ChatRequest, FeatureRequest};
use repolens_core::inference::{MockEndpoint, MockFailure};
use repolens_core::metrics::Confidence;
use repolens_core::prompt::{Role, TaskKind};
use repolens_core::repo::SelectionSpan;
use serde_json::Value;

use common::{dispatcher, WIDGET_URL};

const REPO: &str = "https://github.com/acme/widget";

fn feature(task: TaskKind, path: &str) -> FeatureRequest {
    FeatureRequest { task, repo_url: REPO.into(), file_path: Some(path.into()), selection: None, session_id: None }
}

fn chat(session_id: &str, message: &str) -> ChatRequest {
    ChatRequest { session_id: session_id.into(), message: message.into() }
}

const EXPLANATION: &str = "## Overview\nAdds numbers.\n## Attributes\nNone.\n## Methods\n`add`\n## Context in Project\nEntry point.";

#[tokio::test]
async fn explain_file_returns_scripted_text() {
    let mock = Arc::new(MockEndpoint::new().with_task_reply(TaskKind::ExplainFile, EXPLANATION));
    let d = dispatcher(mock.clone());
    let r = d.handle_feature(feature(TaskKind::ExplainFile, "src/main.c")).await.unwrap();
    assert_eq!(r.body_markdown, EXPLANATION);
    assert!(r.warnings.is_empty());
    let id = r.session_id.unwrap();
    assert_eq!(id.len(), 64);
    let s = d.sessions().snapshot(&id).await.unwrap();
    assert_eq!(s.last_feature.unwrap().text, EXPLANATION);
    assert!(s.turns.is_empty());
    assert_eq!(mock.calls(), 1);
}

#[tokio::test]
async fn blob_url_supplies_the_path() {
    let d = dispatcher(Arc::new(MockEndpoint::new().with_fallback("x")));
    let req = FeatureRequest { file_path: None, repo_url: WIDGET_URL.into(), ..feature(TaskKind::ExplainFile, "") };
    let r = d.handle_feature(req).await.unwrap();
    assert_eq!(r.warnings.len(), 4);
}

#[tokio::test]
async fn selection_validation() {
    let d = dispatcher(Arc::new(MockEndpoint::new()));
    let mut req = feature(TaskKind::ExplainSelection, "src/main.c");
    req.selection = Some(SelectionSpan { start_line: 0, end_line: 3, text: "x".into() });
    assert_eq!(d.handle_feature(req.clone()).await.unwrap_err().code, ApiErrorCode::MalformedRequest);
    req.selection = Some(SelectionSpan { start_line: 10, end_line: 999, text: "x".into() });
    assert_eq!(d.handle_feature(req).await.unwrap_err().code, ApiErrorCode::SelectionOutOfRange);
}

#[tokio::test]
async fn quality_metrics_come_from_the_analyzer() {
    let manifest: Vec<Value> = serde_json::from_str(
        &std::fs::read_to_string(common::manifest_dir().join("fixtures/metrics/manifest.json")).unwrap(),
    )
    .unwrap();
    let expected = manifest.iter().find(|e| e["file"] == "quality_a.c").unwrap();
    for reply in [
        "not json at all",
        r#"{"findings":[{"category":"Overflow","location_hint":{"start_line":3,"end_line":4},"rationale":"r","confidence":"high"}],"maintainability_index":1,"maintainability_narrative":"ok"}"#,
    ] {
        let mock = Arc::new(MockEndpoint::new().with_fallback(reply));
        let r = dispatcher(mock.clone()).handle_feature(feature(TaskKind::QualityAttributes, "src/quality_a.c")).await.unwrap();
        let q = r.quality.unwrap();
        assert_eq!(q.sloc as u64, expected["sloc"].as_u64().unwrap());
        assert_eq!(q.cyclomatic_complexity as u64, expected["cyclomatic_complexity"].as_u64().unwrap());
        assert_eq!(serde_json::to_value(q.halstead).unwrap(), expected["halstead"]);
        let mi = expected["maintainability_index"].as_f64().unwrap();
        assert!(((q.maintainability_index - mi) / mi).abs() <= 1e-9);
        if reply.starts_with('{') {
            assert_eq!(q.vulnerability_findings.len(), 1);
            assert_eq!(q.vulnerability_findings[0].confidence, Confidence::High);
            assert_eq!(mock.calls(), 1);
        } else {
            assert!(q.vulnerability_findings.is_empty());
            assert_eq!(r.warnings.len(), 1);
            // One corrective retry, then degrade.
            assert_eq!(mock.calls(), 2);
        }
    }
}

#[tokio::test]
async fn quality_on_empty_and_unknown_files() {
    let d = dispatcher(Arc::new(MockEndpoint::new().with_fallback(r#"{"findings":[]}"#)));
    let q = d.handle_feature(feature(TaskKind::QualityAttributes, "src/empty.c")).await.unwrap().quality.unwrap();
    assert_eq!((q.sloc, q.cyclomatic_complexity), (0, 1));
    let q = d.handle_feature(feature(TaskKind::QualityAttributes, "docs/design.txt")).await.unwrap().quality.unwrap();
    assert!(q.unsupported_language);
}

#[tokio::test]
async fn refactor_retries_once_for_a_fence() {
    let fenced = "```c\nint add(int a, int b) { return a + b; } // Refactor: one line\n```\n## Changes\n- Collapsed add.";
    let mock = Arc::new(
        MockEndpoint::new()
            .with_contains_reply("did not contain a fenced code block", fenced)
            .with_task_reply(TaskKind::Refactor, "I would rename things."),
    );
    let r = dispatcher(mock.clone()).handle_feature(feature(TaskKind::Refactor, "src/main.c")).await.unwrap();
    let code = r.refactored_code.unwrap();
    assert_eq!(code.code, "int add(int a, int b) { return a + b; } // Refactor: one line\n");
    assert_eq!(code.change_notes, ["Collapsed add."]);
    assert_eq!(mock.calls(), 2);

    let mock = Arc::new(MockEndpoint::new().with_task_reply(TaskKind::Refactor, "no code here"));
    let e = dispatcher(mock.clone()).handle_feature(feature(TaskKind::Refactor, "src/main.c")).await.unwrap_err();
    assert_eq!(e.code, ApiErrorCode::RetriesExhausted);
    assert_eq!(mock.calls(), 2);
}

#[tokio::test]
async fn repo_errors_map_to_codes() {
    let d = dispatcher(Arc::new(MockEndpoint::new()));
    let cases = [
        ("https://github.com/acme/widget", "src/missing.c", ApiErrorCode::FileNotFound),
        ("https://github.com/acme/nope", "a.c", ApiErrorCode::RepoNotFound),
        ("https://gitlab.com/acme/widget", "a.c", ApiErrorCode::UrlNotRecognized),
        ("https://github.com/acme/widget", "data/huge.bin", ApiErrorCode::FileTooLarge),
        ("https://github.com/acme/widget", "../../etc/passwd", ApiErrorCode::MalformedRequest),
    ];
    for (url, path, code) in cases {
        let req = FeatureRequest { repo_url: url.into(), ..feature(TaskKind::ExplainFile, path) };
        assert_eq!(d.handle_feature(req).await.unwrap_err().code, code, "{url} {path}");
    }
}

#[tokio::test]
async fn provider_errors_are_summarized() {
    let mock = Arc::new(MockEndpoint::new().failing_always(MockFailure::BadRequest));
    let e = dispatcher(mock).handle_feature(feature(TaskKind::ExplainFile, "src/main.c")).await.unwrap_err();
    assert_eq!(e.code, ApiErrorCode::UpstreamUnavailable);
    assert_eq!(e.message, "the inference provider rejected the request (HTTP 400)");
    let mock = Arc::new(MockEndpoint::new().failing_always(MockFailure::ServerError));
    let e = dispatcher(mock).handle_feature(feature(TaskKind::ExplainFile, "src/main.c")).await.unwrap_err();
    assert_eq!((e.code, e.retryable), (ApiErrorCode::RetriesExhausted, true));
}

#[tokio::test]
async fn chat_turns_and_eviction() {
    let mock = Arc::new(MockEndpoint::new().with_task_reply(TaskKind::ChatTurn, "answer").with_fallback(EXPLANATION));
    let d = dispatcher(mock);
    let id = d.handle_feature(feature(TaskKind::ExplainFile, "src/main.c")).await.unwrap().session_id.unwrap();
    let r = d.handle_chat(chat(&id, "what does add do?")).await.unwrap();
    assert_eq!((r.task, r.body_markdown.as_str()), (TaskKind::ChatTurn, "answer"));
    assert_eq!(r.session_id.as_deref(), Some(id.as_str()));
    assert_eq!(d.sessions().snapshot(&id).await.unwrap().turns.len(), 2);
    for i in 1..30 {
        d.handle_chat(chat(&id, &format!("q{i}"))).await.unwrap();
    }
    let s = d.sessions().snapshot(&id).await.unwrap();
    assert_eq!(s.turns.len(), 40);
    assert_eq!(s.turns[0].text, "q10");
    assert_eq!(s.turns[38].text, "q29");

    assert_eq!(d.handle_chat(chat("feedface", "hi")).await.unwrap_err().code, ApiErrorCode::SessionNotFound);
    assert_eq!(d.handle_chat(chat(&id, "  \n")).await.unwrap_err().code, ApiErrorCode::MalformedRequest);
    let mut req = feature(TaskKind::ExplainFile, "src/main.c");
    req.session_id = Some("feedface".into());
    assert_eq!(d.handle_feature(req).await.unwrap_err().code, ApiErrorCode::SessionNotFound);
}

#[tokio::test]
async fn feature_updates_a_supplied_session() {
    let mock = Arc::new(
        MockEndpoint::new()
            .with_task_reply(TaskKind::ExplainFile, EXPLANATION)
            .with_task_reply(TaskKind::QualityAttributes, r#"{"findings":[]}"#)
            .with_contains_reply("Most recent analysis (quality_attributes", "about quality"),
    );
    let d = dispatcher(mock);
    let id = d.handle_feature(feature(TaskKind::ExplainFile, "src/main.c")).await.unwrap().session_id.unwrap();
    let mut req = feature(TaskKind::QualityAttributes, "src/quality_a.c");
    req.session_id = Some(id.clone());
    assert_eq!(d.handle_feature(req).await.unwrap().session_id.unwrap(), id);
    let s = d.sessions().snapshot(&id).await.unwrap();
    assert_eq!(s.last_feature.as_ref().unwrap().path, "src/quality_a.c");
    assert_eq!(d.sessions().len(), 1);
}

#[tokio::test]
async fn gc_then_chat_is_not_found() {
    let d = dispatcher(Arc::new(MockEndpoint::new().with_fallback(EXPLANATION)));
    let id = d.handle_feature(feature(TaskKind::ExplainFile, "src/main.c")).await.unwrap().session_id.unwrap();
    assert_eq!(d.session_gc(Utc::now()), 0);
    assert_eq!(d.session_gc(Utc::now() + chrono::Duration::minutes(31)), 1);
    assert_eq!(d.handle_chat(chat(&id, "still there?")).await.unwrap_err().code, ApiErrorCode::SessionNotFound);
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn concurrent_chats_on_one_session_alternate() {
    let mock = Arc::new(MockEndpoint::new().with_fallback(EXPLANATION).with_delay(Duration::from_millis(5)));
    let d = Arc::new(dispatcher(mock));
    let id = d.handle_feature(feature(TaskKind::ExplainFile, "src/main.c")).await.unwrap().session_id.unwrap();
    let tasks: Vec<_> = (0..16)
        .map(|i| {
            let (d, id) = (d.clone(), id.clone());
            tokio::spawn(async move { d.handle_chat(chat(&id, &format!("m{i}"))).await.unwrap() })
        })
        .collect();
    for t in tasks {
        t.await.unwrap();
    }
    let s = d.sessions().snapshot(&id).await.unwrap();
    assert_eq!(s.turns.len(), 32);
    for (i, t) in s.turns.iter().enumerate() {
        assert_eq!(t.role, if i % 2 == 0 { Role::User } else { Role::Assistant });
    }
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn parallel_features_do_not_cross() {
    let mut mock = MockEndpoint::new().with_delay(Duration::from_millis(50));
    for i in 0..32 {
        mock = mock.with_contains_reply(format!("def step_{i:02}("), format!("reply for f{i:02}"));
    }
    let d = Arc::new(dispatcher(Arc::new(mock)));
    // Warm the repository cache so the timing covers dispatch only.
    d.handle_feature(feature(TaskKind::ExplainFile, "gen/f00.py")).await.unwrap();
    let started = Instant::now();
    let tasks: Vec<_> = (0..32)
        .map(|i| {
            let d = d.clone();
            tokio::spawn(async move { d.handle_feature(feature(TaskKind::ExplainFile, &format!("gen/f{i:02}.py"))).await.unwrap() })
        })
        .collect();
    for (i, t) in tasks.into_iter().enumerate() {
        assert_eq!(t.await.unwrap().body_markdown, format!("reply for f{i:02}"));
    }
    assert!(started.elapsed() < Duration::from_millis(1000), "{:?}", started.elapsed());
}
