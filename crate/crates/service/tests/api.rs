mod common;

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use axum::http::StatusCode;
use serde_json::{json, Value};

use common::{get, out_edges, post, service, start};
use smsl_core::corpus;
use smsl_core::graph::{parse_dot, FsmGraph};
use smsl_core::smsl::parse;
use smsl_service::{load_document, ServiceError};

fn hops_by_bfs(graph: &FsmGraph, from: &str, to: &str, removed: &BTreeSet<(String, String)>) -> Option<usize> {
    let mut dist = BTreeMap::from([(from.to_string(), 0usize)]);
    let mut queue = VecDeque::from([from.to_string()]);
    while let Some(s) = queue.pop_front() {
        for e in graph.edges() {
            if e.src() != s || removed.contains(&(e.src().to_string(), e.op().to_string())) {
                continue;
            }
            if !dist.contains_key(&e.dst) {
                dist.insert(e.dst.clone(), dist[&s] + 1);
                queue.push_back(e.dst.clone());
            }
        }
    }
    dist.get(to).copied()
}

#[tokio::test]
async fn branches_of_the_corpus() {
    let dir = tempfile::tempdir().unwrap();
    let app = service(corpus::HANOI, &dir.path().join("a.jsonl")).router();
    assert_eq!(get(&app, "/branches").await, (StatusCode::OK, json!(["SB1"])));
    let app = service(corpus::HIERARCHICAL, &dir.path().join("c.jsonl")).router();
    assert_eq!(get(&app, "/branches").await, (StatusCode::OK, json!(["SB1", "SB2"])));
}

#[test]
fn malformed_document_is_refused() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.smsl");
    std::fs::write(&path, "{ \"SB1\": { \"State_a\": ").unwrap();
    assert!(matches!(load_document(&path), Err(ServiceError::InvalidDocument(_))));

    let dangling = parse(r#"{"SB1": {"State_a": {"Op": "State_nowhere"}}}"#).unwrap();
    let config = smsl_service::ServiceConfig::new(dir.path().join("log.jsonl"));
    assert!(matches!(smsl_service::Service::new(dangling, config), Err(ServiceError::InvalidDocument(_))));
}

#[tokio::test]
async fn bind_failure_is_reported() {
    let held = smsl_service::bind("127.0.0.1:0".parse().unwrap()).await.unwrap();
    let addr = held.local_addr().unwrap();
    assert!(matches!(smsl_service::bind(addr).await, Err(ServiceError::BindFailure { .. })));
}

#[tokio::test]
async fn registration_view_and_pruning() {
    let dir = tempfile::tempdir().unwrap();
    let app = service(corpus::REGISTRATION, &dir.path().join("log.jsonl")).router();
    let id = start(&app, json!({"branch": "REGISTRATION", "initial": "State_1101"})).await;

    let (status, view) = get(&app, &format!("/sessions/{id}/view")).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(view["current"], "State_1101");
    assert_eq!(
        out_edges(&view),
        [
            ("Op_ClearLandmarks".to_string(), "State_0000".to_string()),
            ("Op_ClearReg".into(), "State_1100".into()),
            ("Op_PlanToolPose".into(), "State_1111".into()),
            ("Op_UsePrevReg".into(), "State_1101".into()),
        ]
    );
    assert!(view.get("in_edges").is_none());
    let (_, with_in) = get(&app, &format!("/sessions/{id}/view?incoming=true")).await;
    assert!(with_in["in_edges"].as_array().is_some_and(|v| !v.is_empty()));

    let (status, _) =
        post(&app, &format!("/sessions/{id}/risky"), json!({"edge": "State_1101:Op_ClearReg", "on": true})).await;
    assert_eq!(status, StatusCode::OK);
    let (_, view) = get(&app, &format!("/sessions/{id}/view")).await;
    let edges = view["out_edges"].as_array().unwrap();
    assert_eq!(edges.len(), 4);
    for e in edges {
        assert_eq!(e["pruned"].as_bool().unwrap(), e["operation"] == "Op_ClearReg", "{e}");
    }
}

#[tokio::test]
async fn terminal_state_has_no_out_edges() {
    let dir = tempfile::tempdir().unwrap();
    let app = service(corpus::HIERARCHICAL, &dir.path().join("log.jsonl")).router();
    let id = start(&app, json!({"branch": "SB1", "initial": "State111"})).await;
    let (_, view) = get(&app, &format!("/sessions/{id}/view")).await;
    assert_eq!(view["out_edges"], json!([]));
}

#[tokio::test]
async fn approve_and_veto() {
    let dir = tempfile::tempdir().unwrap();
    let app = service(corpus::HANOI, &dir.path().join("log.jsonl")).router();
    let id = start(&app, json!({"branch": "SB1", "mode": "supervised"})).await;

    let (status, ack) = post(&app, &format!("/sessions/{id}/propose"), json!({"edge": "State_aaa:Op_1c"})).await;
    assert_eq!(status, StatusCode::OK, "{ack}");
    let (_, view) = get(&app, &format!("/sessions/{id}/view")).await;
    let proposal = view["pending"]["id"].as_u64().unwrap();
    assert_eq!(view["current"], "State_aaa");

    let (status, ack) = post(
        &app,
        &format!("/sessions/{id}/decide"),
        json!({"proposal": proposal, "verdict": "approved", "actor": "alice"}),
    )
    .await;
    assert_eq!(status, StatusCode::OK, "{ack}");
    assert_eq!(ack["current"], "State_caa");
    let (_, view) = get(&app, &format!("/sessions/{id}/view")).await;
    assert_eq!(view["current"], "State_caa");
    assert_eq!(view["pending"], Value::Null);

    let (status, err) = post(
        &app,
        &format!("/sessions/{id}/decide"),
        json!({"proposal": proposal, "verdict": "vetoed"}),
    )
    .await;
    assert_eq!(status, StatusCode::CONFLICT, "{err}");
    assert_eq!(err["error"], "AlreadyDecided");

    post(&app, &format!("/sessions/{id}/propose"), json!({"edge": {"src": "State_caa", "op": "Op_2b"}})).await;
    let (_, view) = get(&app, &format!("/sessions/{id}/view")).await;
    let proposal = view["pending"]["id"].as_u64().unwrap();
    let (status, _) =
        post(&app, &format!("/sessions/{id}/decide"), json!({"proposal": proposal, "verdict": "vetoed"})).await;
    assert_eq!(status, StatusCode::OK);
    let (_, view) = get(&app, &format!("/sessions/{id}/view")).await;
    assert_eq!(view["pending"], Value::Null);
    assert_eq!(view["current"], "State_caa");

    let (status, err) =
        post(&app, &format!("/sessions/{id}/decide"), json!({"proposal": 99, "verdict": "approved"})).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    assert_eq!(err["error"], "UnknownProposal");

    let (status, err) = get(&app, "/sessions/nope/view").await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    assert_eq!(err["error"], "UnknownSession");
    let (status, err) =
        post(&app, &format!("/sessions/{id}/decide"), json!({"proposal": 1, "verdict": "maybe"})).await;
    assert_eq!(status, StatusCode::BAD_REQUEST, "{err}");
}

#[tokio::test]
async fn risky_marks_replan() {
    let dir = tempfile::tempdir().unwrap();
    let app = service(corpus::REGISTRATION, &dir.path().join("log.jsonl")).router();
    let doc = parse(corpus::REGISTRATION).unwrap();
    let graph = FsmGraph::build(doc.branch("REGISTRATION").unwrap());
    let id = start(&app, json!({"branch": "REGISTRATION"})).await;
    let plan_uri = format!("/inspect/REGISTRATION/plan?from=State_0000&to=State_1111&session={id}");
    let plan_len = |v: &Value| v["hops"].as_array().unwrap().len();

    let (_, plan) = get(&app, &plan_uri).await;
    assert_eq!(Some(plan_len(&plan)), hops_by_bfs(&graph, "State_0000", "State_1111", &BTreeSet::new()));
    assert_eq!(plan_len(&plan), 2);

    let mut removed = BTreeSet::new();
    for step in [true, false] {
        let targets: Vec<_> = if step {
            vec![graph.edges().iter().find(|e| e.src() == "State_0000" && e.op() == "Op_UsePrevReg").unwrap()]
        } else {
            graph.edges().iter().filter(|e| e.op() == "Op_UsePrevReg").collect()
        };
        for e in targets {
            let (status, _) = post(
                &app,
                &format!("/sessions/{id}/risky"),
                json!({"edge": {"src": e.src(), "op": e.op()}, "on": true, "actor": "bob"}),
            )
            .await;
            assert_eq!(status, StatusCode::OK);
            removed.insert((e.src().to_string(), e.op().to_string()));
        }
        let (_, plan) = get(&app, &plan_uri).await;
        assert_eq!(Some(plan_len(&plan)), hops_by_bfs(&graph, "State_0000", "State_1111", &removed));
        for h in plan["hops"].as_array().unwrap() {
            let used = (h["source"].as_str().unwrap().to_string(), h["operation"].as_str().unwrap().to_string());
            assert!(!removed.contains(&used), "{h}");
        }
    }
    let (_, plan) = get(&app, &plan_uri).await;
    assert_eq!(plan_len(&plan), 4);

    for (src, op) in &removed {
        post(&app, &format!("/sessions/{id}/risky"), json!({"edge": format!("{src}:{op}"), "on": false})).await;
    }
    let (_, plan) = get(&app, &plan_uri).await;
    assert_eq!(plan_len(&plan), 2);

    let (status, err) =
        post(&app, &format!("/sessions/{id}/risky"), json!({"edge": "State_0000:Op_Teleport", "on": true})).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    assert_eq!(err["error"], "UnknownEdge");

    let (status, err) = get(&app, "/inspect/REGISTRATION/plan?to=State_9999").await;
    assert_eq!(status, StatusCode::NOT_FOUND, "{err}");
}

#[tokio::test]
async fn full_view_dot_matches_graph() {
    let dir = tempfile::tempdir().unwrap();
    for (text, branches) in
        [(corpus::HANOI, &["SB1"][..]), (corpus::REGISTRATION, &["REGISTRATION"]), (corpus::HIERARCHICAL, &["SB1", "SB2"])]
    {
        let app = service(text, &dir.path().join("log.jsonl")).router();
        let doc = parse(text).unwrap();
        for b in branches {
            let (status, full) = get(&app, &format!("/inspect/{b}")).await;
            assert_eq!(status, StatusCode::OK);
            let reparsed = parse_dot(full["dot"].as_str().unwrap()).unwrap();
            let graph = FsmGraph::build(doc.branch(b).unwrap());
            assert_eq!(reparsed, graph);
            assert_eq!(serde_json::to_value(&graph).unwrap(), full["graph"]);
            assert_eq!(parse(full["document"].as_str().unwrap()).unwrap(), doc);
        }
        let (status, _) = get(&app, "/inspect/NOPE").await;
        assert_eq!(status, StatusCode::NOT_FOUND);
    }
}

#[tokio::test]
async fn goal_drives_autonomous_session() {
    let dir = tempfile::tempdir().unwrap();
    let app = service(corpus::HANOI, &dir.path().join("log.jsonl")).router();
    let id = start(&app, json!({"branch": "SB1", "mode": "autonomous", "goal": "State_ccc"})).await;
    let (_, view) = get(&app, &format!("/sessions/{id}/view")).await;
    assert_eq!(view["current"], "State_ccc");

    let (_, ack) = post(&app, &format!("/sessions/{id}/goal"), json!({"goal": "State_aaa"})).await;
    assert_eq!(ack["current"], "State_aaa");
    let (_, sessions) = get(&app, "/sessions").await;
    assert_eq!(sessions[0]["goal"], "State_aaa");
}

#[tokio::test]
async fn takeover_switches_to_manual() {
    let dir = tempfile::tempdir().unwrap();
    let app = service(corpus::HANOI, &dir.path().join("log.jsonl")).router();
    let id = start(&app, json!({"branch": "SB1", "mode": "supervised"})).await;
    let (status, _) = post(&app, &format!("/sessions/{id}/flags"), json!({"name": "takeover", "value": true})).await;
    assert_eq!(status, StatusCode::OK);
    let (_, view) = get(&app, &format!("/sessions/{id}/view")).await;
    assert_eq!(view["mode"], "manual");
    assert_eq!(view["flags"]["takeover"], true);
    let (_, ack) =
        post(&app, &format!("/sessions/{id}/propose"), json!({"edge": "State_aaa:Op_1b", "actor": "surgeon"})).await;
    assert_eq!(ack["current"], "State_baa");
}
