#![allow(dead_code)]

use std::path::PathBuf;
use std::sync::Arc;

use repolens_core::repo::{CodeFile, FixtureTransport, RepoConfig, RepoContext, RepoRef, RepoService};

pub fn manifest_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
}

pub fn github_fixtures() -> PathBuf {
    manifest_dir().join("fixtures/github")
}

pub fn widget() -> RepoRef {
    RepoRef::new("acme", "widget", Some("main".into())).unwrap()
}

pub fn fixture_service() -> RepoService {
    RepoService::new(Arc::new(FixtureTransport::new(github_fixtures())), RepoConfig::default())
}

/// Context and file of the widget fixture repository at `main`.
pub async fn widget_file(path: &str) -> (RepoContext, CodeFile) {
    let svc = fixture_service();
    let ctx = svc.fetch_repo_context(&widget()).await.unwrap();
    let file = svc.fetch_file(&widget(), path).await.unwrap();
    ((*ctx).clone(), (*file).clone())
}

pub const WIDGET_URL: &str = "https://github.com/acme/widget/blob/main/src/main.c";

/// Dispatcher over the fixture repositories with the given mock endpoint.
pub fn dispatcher(mock: Arc<repolens_core::inference::MockEndpoint>) -> repolens_core::dispatch::Dispatcher {
    let mut config = repolens_core::dispatch::ServiceConfig {
        fixtures_dir: Some(github_fixtures()),
        mock_inference: true,
        max_in_flight: 64,
        ..Default::default()
    };
    config.model.retry_base_delay = std::time::Duration::from_millis(5);
    config.model.request_timeout = std::time::Duration::from_secs(5);
    config.build_with(mock).unwrap()
}
