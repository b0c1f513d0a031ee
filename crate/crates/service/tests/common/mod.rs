#![allow(dead_code)]

use std::path::Path;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use serde_json::Value;
use tower::ServiceExt;

use smsl_core::smsl::parse;
use smsl_service::{Service, ServiceConfig};

pub fn service(text: &str, log: &Path) -> Service {
    service_with(text, ServiceConfig::new(log))
}

pub fn service_with(text: &str, config: ServiceConfig) -> Service {
    Service::new(parse(text).unwrap(), config).unwrap()
}

pub async fn get(app: &Router, uri: &str) -> (StatusCode, Value) {
    call(app, Request::get(uri).body(Body::empty()).unwrap()).await
}

pub async fn post(app: &Router, uri: &str, body: Value) -> (StatusCode, Value) {
    let req = Request::post(uri).header("content-type", "application/json").body(Body::from(body.to_string())).unwrap();
    call(app, req).await
}

async fn call(app: &Router, req: Request<Body>) -> (StatusCode, Value) {
    let res = app.clone().oneshot(req).await.unwrap();
    let status = res.status();
    let bytes = res.into_body().collect().await.unwrap().to_bytes();
    let value = if bytes.is_empty() { Value::Null } else { serde_json::from_slice(&bytes).unwrap() };
    (status, value)
}

/// Creates a session and returns its id.
pub async fn start(app: &Router, body: Value) -> String {
    let (status, value) = post(app, "/sessions", body).await;
    assert_eq!(status, StatusCode::CREATED, "{value}");
    value["id"].as_str().unwrap().to_string()
}

/// Lines of the event log file.
pub fn log_lines(path: &Path) -> Vec<String> {
    std::fs::read_to_string(path).unwrap_or_default().lines().map(str::to_string).collect()
}

/// Operation and target of each out-edge in a view, sorted.
pub fn out_edges(view: &Value) -> Vec<(String, String)> {
    let mut out: Vec<_> = view["out_edges"]
        .as_array()
        .unwrap()
        .iter()
        .map(|e| (e["operation"].as_str().unwrap().to_string(), e["target"].as_str().unwrap().to_string()))
        .collect();
    out.sort();
    out
}
