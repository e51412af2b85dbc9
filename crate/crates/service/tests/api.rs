use axum::body::Body;
use axum::http::{header, Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use serde_json::{json, Value};
use smartdrill_service::{router, state, AppState, ServiceConfig};
use tower::ServiceExt;

const CSV: &str = "A,B,C\nx,p,1\nx,p,2\nx,q,1\ny,p,1\nx,p,1\ny,q,2\nx,p,2\nz,q,1\n";

struct Api {
    app: AppState,
    router: Router,
}

impl Api {
    fn new() -> Api {
        let app = state(ServiceConfig {
            memory: 100,
            min_ss: 10,
            ..ServiceConfig::default()
        });
        Api {
            router: router(app.clone()),
            app,
        }
    }

    async fn call(&self, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
        let (status, bytes) = self.raw(method, uri, body.map(|b| b.to_string()), None).await;
        let v = if bytes.is_empty() {
            Value::Null
        } else {
            serde_json::from_slice(&bytes).unwrap_or_else(|_| panic!("not json: {}", String::from_utf8_lossy(&bytes)))
        };
        (status, v)
    }

    async fn raw(&self, method: &str, uri: &str, body: Option<String>, accept: Option<&str>) -> (StatusCode, Vec<u8>) {
        let mut req = Request::builder().method(method).uri(uri);
        if body.is_some() {
            req = req.header(header::CONTENT_TYPE, "application/json");
        }
        if let Some(a) = accept {
            req = req.header(header::ACCEPT, a);
        }
        let req = req.body(body.map(Body::from).unwrap_or_else(Body::empty)).unwrap();
        let resp = self.router.clone().oneshot(req).await.unwrap();
        let status = resp.status();
        let bytes = resp.into_body().collect().await.unwrap().to_bytes().to_vec();
        (status, bytes)
    }

    async fn session(&self, config: Value) -> String {
        let (s, ds) = self.call("POST", "/datasets", Some(json!({"name": "t", "csv": CSV}))).await;
        assert_eq!(s, StatusCode::CREATED, "{ds}");
        let (s, v) = self
            .call("POST", "/sessions", Some(json!({"dataset_id": ds["id"], "config": config})))
            .await;
        assert_eq!(s, StatusCode::CREATED, "{v}");
        v["id"].as_str().unwrap().to_string()
    }
}

fn no_prefetch() -> Value {
    json!({"prefetch": false, "k": 3})
}

#[tokio::test]
async fn health_is_ok() {
    let api = Api::new();
    assert_eq!(api.call("GET", "/health", None).await, (StatusCode::OK, json!({"status": "ok"})));
}

#[tokio::test]
async fn datasets_register_and_list() {
    let api = Api::new();
    let (s, rec) = api
        .call("POST", "/datasets", Some(json!({"csv": CSV, "columns": 2, "options": {"na_policy": "drop-row"}})))
        .await;
    assert_eq!(s, StatusCode::CREATED);
    assert_eq!(rec["rows"], 8);
    assert_eq!(rec["columns"].as_array().unwrap().len(), 2);
    assert_eq!(rec["options"]["na_policy"], "drop-row");
    let (_, list) = api.call("GET", "/datasets", None).await;
    assert_eq!(list.as_array().unwrap().len(), 1);
    assert_eq!(list[0]["id"], rec["id"]);

    let (s, e) = api.call("POST", "/datasets", Some(json!({"path": "/no/such/file.csv"}))).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    assert_eq!(e["code"], "invalid_dataset");
    let (s, _) = api.call("POST", "/datasets", Some(json!({}))).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
}

#[tokio::test]
async fn survey_format_is_accepted_inline() {
    let api = Api::new();
    let rows = "9 2 1 5 4 5 5 3 3 0 1 1 7 NA\n1 1 5 2 NA 6 5 1 4 2 3 1 7 1\n";
    let (s, rec) = api
        .call("POST", "/datasets", Some(json!({"csv": rows, "format": "marketing", "columns": 7})))
        .await;
    assert_eq!(s, StatusCode::CREATED, "{rec}");
    assert_eq!(rec["columns"][1]["name"], "Sex");
}

#[tokio::test]
async fn expand_returns_the_full_tree_and_collapse_restores_it() {
    let api = Api::new();
    let id = api.session(no_prefetch()).await;
    let (s, before) = api.call("GET", &format!("/sessions/{id}/tree"), None).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(before["tree"]["count"], 8.0);
    assert_eq!(before["tree"]["rule"], json!(["*", "*", "*"]));

    let (s, out) = api.call("POST", &format!("/sessions/{id}/expand"), Some(json!({"path": []}))).await;
    assert_eq!(s, StatusCode::OK, "{out}");
    let kids = out["tree"]["children"].as_array().unwrap();
    assert_eq!(kids.len(), 3);
    assert_eq!(out["tree"]["expansion"], "rule");
    assert_eq!(out["source"], "find");
    for (i, k) in kids.iter().enumerate() {
        assert_eq!(k["path"], json!([i]));
        assert_eq!(k["count_is_exact"], true);
    }

    let (s, out) = api.call("POST", &format!("/sessions/{id}/collapse"), Some(json!({"path": []}))).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(out["tree"], before["tree"]);
}

#[tokio::test]
async fn star_and_drilldown_accept_rule_text() {
    let api = Api::new();
    let id = api.session(no_prefetch()).await;
    let (s, out) = api
        .call("POST", &format!("/sessions/{id}/drilldown"), Some(json!({"path": [], "column": "A"})))
        .await;
    assert_eq!(s, StatusCode::OK, "{out}");
    let counts: Vec<f64> = out["tree"]["children"].as_array().unwrap().iter().map(|c| c["count"].as_f64().unwrap()).collect();
    assert_eq!(counts.len(), 3);
    assert_eq!(counts.iter().sum::<f64>(), 8.0);

    let (s, out) = api
        .call("POST", &format!("/sessions/{id}/star"), Some(json!({"path": "x,*,*", "column": "B"})))
        .await;
    assert_eq!(s, StatusCode::OK, "{out}");
    let x = out["tree"]["children"].as_array().unwrap().iter().find(|c| c["text"] == "x,*,*").unwrap();
    assert_eq!(x["expansion"], json!({"star": "B"}));
    for c in x["children"].as_array().unwrap() {
        assert_eq!(c["rule"][0], "x");
        assert_ne!(c["rule"][1], "*");
    }
}

#[tokio::test]
async fn bad_gestures_get_structured_errors() {
    let api = Api::new();
    let id = api.session(no_prefetch()).await;
    let post = |path: &'static str, body: Value| {
        let uri = format!("/sessions/{id}/{path}");
        let api = &api;
        async move { api.call("POST", &uri, Some(body)).await }
    };
    let (s, e) = post("expand", json!({"path": [5]})).await;
    assert_eq!((s, e["code"].as_str()), (StatusCode::BAD_REQUEST, Some("unknown_node")));
    let (s, e) = post("expand", json!({"path": "nope,*,*"})).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    assert!(e["message"].is_string());
    let (s, e) = post("star", json!({"path": [], "column": "Z"})).await;
    assert_eq!((s, e["code"].as_str()), (StatusCode::BAD_REQUEST, Some("unknown_column")));
    let (s, e) = post("star", json!({"path": []})).await;
    assert_eq!((s, e["code"].as_str()), (StatusCode::BAD_REQUEST, Some("bad_request")));
    let (s, e) = post("collapse", json!({"path": []})).await;
    assert_eq!((s, e["code"].as_str()), (StatusCode::BAD_REQUEST, Some("not_expanded")));
    let (s, e) = post("expand", json!({"path": [], "bogus": 1})).await;
    assert_eq!((s, e["code"].as_str()), (StatusCode::BAD_REQUEST, Some("bad_request")));

    let (s, raw) = api.raw("POST", &format!("/sessions/{id}/expand"), Some("{not json".into()), None).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    let e: Value = serde_json::from_slice(&raw).unwrap();
    assert_eq!(e["code"], "bad_request");
}

#[tokio::test]
async fn unknown_ids_are_404() {
    let api = Api::new();
    let (s, e) = api.call("GET", "/sessions/nope/tree", None).await;
    assert_eq!((s, e["code"].as_str()), (StatusCode::NOT_FOUND, Some("not_found")));
    let (s, _) = api.call("POST", "/sessions/nope/expand", Some(json!({"path": []}))).await;
    assert_eq!(s, StatusCode::NOT_FOUND);
    let (s, _) = api.call("POST", "/sessions", Some(json!({"dataset_id": "ds-9"}))).await;
    assert_eq!(s, StatusCode::NOT_FOUND);
    let (s, _) = api.call("GET", "/nowhere", None).await;
    assert_eq!(s, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn a_second_mutation_in_flight_gets_409() {
    let api = Api::new();
    let id = api.session(no_prefetch()).await;
    let slot = api.app.sessions.get(&id).unwrap();
    let claim = slot.claim(&id).unwrap();
    let (s, e) = api.call("POST", &format!("/sessions/{id}/expand"), Some(json!({"path": []}))).await;
    assert_eq!((s, e["code"].as_str()), (StatusCode::CONFLICT, Some("session_busy")));
    let (s, _) = api.call("PUT", &format!("/sessions/{id}/config"), Some(json!({"k": 2}))).await;
    assert_eq!(s, StatusCode::CONFLICT);
    // reads still go through
    let (s, _) = api.call("GET", &format!("/sessions/{id}/tree"), None).await;
    assert_eq!(s, StatusCode::OK);
    drop(claim);
    let (s, _) = api.call("POST", &format!("/sessions/{id}/expand"), Some(json!({"path": []}))).await;
    assert_eq!(s, StatusCode::OK);
}

#[tokio::test]
async fn concurrent_expands_on_one_session_serialize_or_conflict() {
    let api = Api::new();
    let id = api.session(no_prefetch()).await;
    let uri = format!("/sessions/{id}/expand");
    let reqs = (0..8).map(|_| api.call("POST", &uri, Some(json!({"path": []}))));
    let results = futures::future::join_all(reqs).await;
    let ok = results.iter().filter(|(s, _)| *s == StatusCode::OK).count();
    assert_eq!(ok, 1);
    for (s, e) in &results {
        assert!(
            *s == StatusCode::OK
                || (*s == StatusCode::CONFLICT && e["code"] == "session_busy")
                || (*s == StatusCode::BAD_REQUEST && e["code"] == "already_expanded"),
            "{s} {e}"
        );
    }
}

#[tokio::test]
async fn reads_do_not_change_the_tree() {
    let api = Api::new();
    let id = api.session(json!({"k": 2})).await;
    api.call("POST", &format!("/sessions/{id}/expand"), Some(json!({"path": []}))).await;
    let (_, settled) = api.call("GET", &format!("/sessions/{id}/tree?wait=true"), None).await;
    let (_, stats) = api.call("GET", &format!("/sessions/{id}/stats"), None).await;
    assert_eq!(stats["prefetch_idle"], true);
    assert!(stats["counters"]["finds"].as_u64().unwrap() >= 1);
    assert_eq!(stats["dataset_id"], "ds-1");
    for _ in 0..3 {
        let (_, again) = api.call("GET", &format!("/sessions/{id}/tree"), None).await;
        assert_eq!(again, settled);
        api.call("GET", &format!("/sessions/{id}/stats"), None).await;
        api.call("GET", "/datasets", None).await;
    }
}

#[tokio::test]
async fn config_updates_merge_and_validate() {
    let api = Api::new();
    let id = api.session(no_prefetch()).await;
    let uri = format!("/sessions/{id}/config");
    let (s, out) = api
        .call("PUT", &uri, Some(json!({"k": 1, "weight": {"kind": "size", "favored": {"B": 3.0}, "ignored": ["C"]}})))
        .await;
    assert_eq!(s, StatusCode::OK, "{out}");
    assert_eq!(out["config"]["k"], 1);
    assert_eq!(out["config"]["prefetch"], false);
    assert_eq!(out["config"]["weight"]["ignored"], json!(["C"]));
    let (_, out) = api.call("POST", &format!("/sessions/{id}/expand"), Some(json!({"path": []}))).await;
    let kids = out["tree"]["children"].as_array().unwrap();
    assert_eq!(kids.len(), 1);
    assert_ne!(kids[0]["rule"][1], "*");

    let (s, e) = api.call("PUT", &uri, Some(json!({"k": 0}))).await;
    assert_eq!((s, e["code"].as_str()), (StatusCode::BAD_REQUEST, Some("invalid_config")));
    let (s, e) = api.call("PUT", &uri, Some(json!({"weight": {"kind": "size", "ignored": ["nope"]}}))).await;
    assert_eq!(s, StatusCode::BAD_REQUEST, "{e}");
}

#[tokio::test]
async fn expansions_stream_as_ndjson_on_request() {
    let api = Api::new();
    let id = api.session(no_prefetch()).await;
    let (s, raw) = api
        .raw(
            "POST",
            &format!("/sessions/{id}/expand"),
            Some(json!({"path": []}).to_string()),
            Some("application/x-ndjson"),
        )
        .await;
    assert_eq!(s, StatusCode::OK);
    let events: Vec<Value> = String::from_utf8(raw)
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert_eq!(events.len(), 4);
    assert!(events[..3].iter().all(|e| e["event"] == "rule"));
    let done = &events[3];
    assert_eq!(done["event"], "done");
    let texts: Vec<&Value> = done["tree"]["children"].as_array().unwrap().iter().map(|c| &c["text"]).collect();
    for e in &events[..3] {
        assert!(texts.contains(&&e["text"]));
    }

    // errors arrive as a final event
    let (_, raw) = api
        .raw("POST", &format!("/sessions/{id}/expand"), Some(json!({"path": [], "stream": true}).to_string()), None)
        .await;
    let last: Value = serde_json::from_str(String::from_utf8(raw).unwrap().lines().last().unwrap()).unwrap();
    assert_eq!(last["event"], "error");
    assert_eq!(last["code"], "already_expanded");
}

#[tokio::test]
async fn idle_sessions_expire_and_deleted_ones_vanish() {
    let api = Api::new();
    let a = api.session(no_prefetch()).await;
    let b = api.session(no_prefetch()).await;
    let (s, _) = api.call("DELETE", &format!("/sessions/{b}"), None).await;
    assert_eq!(s, StatusCode::NO_CONTENT);
    let (s, _) = api.call("GET", &format!("/sessions/{b}/tree"), None).await;
    assert_eq!(s, StatusCode::NOT_FOUND);

    assert!(api.app.sessions.expire(std::time::Duration::from_secs(60)).is_empty());
    tokio::time::sleep(std::time::Duration::from_millis(20)).await;
    let gone = api.app.sessions.expire(std::time::Duration::from_millis(5));
    assert_eq!(gone.len(), 1);
    let (s, _) = api.call("GET", &format!("/sessions/{a}/tree"), None).await;
    assert_eq!(s, StatusCode::NOT_FOUND);
}
