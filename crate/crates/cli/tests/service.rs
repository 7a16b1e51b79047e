use axum::body::Body;
use axum::http::{header, Method, Request, StatusCode};
use axum::Router;
use base64::engine::general_purpose::STANDARD as BASE64;
use base64::Engine;
use formcast_cli::pipeline::export_files;
use formcast_cli::service::{router, Session};
use formcast_core::analysis::compute_stretch;
use formcast_core::fixtures;
use formcast_core::geometry::{parse_stl, write_stl, MoldMesh, StlFormat};
use formcast_core::project::Project;
use formcast_core::simulator::{simulate, SheetParams, SimConfig};
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

const N: usize = 15;

fn box_stl() -> Vec<u8> {
    write_stl(&fixtures::box_mold(30.0, 30.0, 10.0).to_stl("box"), StlFormat::Binary).unwrap()
}

fn new_project() -> Project {
    Project::new("demo", SheetParams::square(N, 130.0), 2).unwrap()
}

struct Client {
    app: Router,
}

impl Client {
    fn new() -> Self {
        Self {
            app: router(Session::new(new_project())),
        }
    }

    async fn send(&self, method: Method, uri: &str, body: Body, if_match: Option<u64>) -> (StatusCode, Value) {
        let mut req = Request::builder().method(method).uri(uri);
        if let Some(rev) = if_match {
            req = req.header(header::IF_MATCH, rev.to_string());
        }
        let resp = self.app.clone().oneshot(req.body(body).unwrap()).await.unwrap();
        let status = resp.status();
        let bytes = resp.into_body().collect().await.unwrap().to_bytes();
        let value = if bytes.is_empty() { Value::Null } else { serde_json::from_slice(&bytes).unwrap() };
        (status, value)
    }

    async fn post(&self, uri: &str, body: Value) -> (StatusCode, Value) {
        self.send(Method::POST, uri, Body::from(body.to_string()), None).await
    }

    async fn get(&self, uri: &str) -> (StatusCode, Value) {
        self.send(Method::GET, uri, Body::empty(), None).await
    }

    async fn formed(&self) {
        let (s, _) = self.send(Method::POST, "/mold", Body::from(box_stl()), None).await;
        assert_eq!(s, StatusCode::OK);
        let (s, body) = self.post("/simulate", json!({})).await;
        assert_eq!(s, StatusCode::OK, "{body}");
    }
}

#[tokio::test]
async fn mold_then_simulate_gives_mesh_revision_one() {
    let c = Client::new();
    let (s, body) = c.send(Method::POST, "/mold", Body::from(box_stl()), None).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(body["revision"], 1);
    let (s, body) = c.send(Method::POST, "/simulate", Body::empty(), None).await;
    assert_eq!(s, StatusCode::OK, "{body}");
    assert_eq!(body["mesh_revision"], 1);
    assert_eq!(body["revision"], 2);
    assert_eq!(body["converged"], true);
    let stages: Vec<&str> = body["stage_log"].as_array().unwrap().iter().map(|r| r["stage"].as_str().unwrap()).collect();
    assert_eq!(stages, ["heat", "press", "vacuum"]);

    let (s, mesh) = c.get("/mesh").await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(mesh["mesh_revision"], 1);
    assert_eq!(mesh["positions"].as_array().unwrap().len(), N * N * 3);
    assert_eq!(mesh["quads"].as_array().unwrap().len(), (N - 1) * (N - 1) * 4);
    assert_eq!(mesh["face_stretch"].as_array().unwrap().len(), (N - 1) * (N - 1));
}

#[tokio::test]
async fn simulate_without_mold_conflicts() {
    let c = Client::new();
    let (s, body) = c.post("/simulate", json!({})).await;
    assert_eq!(s, StatusCode::CONFLICT);
    assert_eq!(body["error"], "no mold");
}

#[tokio::test]
async fn flatten_and_mesh_before_simulation_conflict() {
    let c = Client::new();
    let (s, body) = c.get("/flatten").await;
    assert_eq!(s, StatusCode::CONFLICT);
    assert_eq!(body["error"], "no formed sheet");
    let (s, _) = c.get("/mesh").await;
    assert_eq!(s, StatusCode::CONFLICT);
}

#[tokio::test]
async fn trace_picks_are_completed() {
    let c = Client::new();
    let picks = [2 * N + 2, 2 * N + 6, 6 * N + 6];
    let (s, body) = c.post("/traces", json!({ "picks": picks, "layer": 0, "width_mm": 1.5 })).await;
    assert_eq!(s, StatusCode::OK, "{body}");
    let mut oracle = new_project();
    let expected = oracle.design_mut().add_trace(&picks, 0, 1.5).unwrap().path.clone();
    let path: Vec<usize> = serde_json::from_value(body["trace"]["path"].clone()).unwrap();
    assert_eq!(path, expected);
    assert_eq!(path.len(), 9);
    assert_eq!(body["revision"], 1);
}

#[tokio::test]
async fn stale_revision_conflicts() {
    let c = Client::new();
    let (s, body) = c.post("/traces", json!({ "picks": [2 * N + 2, 2 * N + 6] })).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(body["revision"], 1);
    let pad = Body::from(json!({ "faces": [40], "layer": 0 }).to_string());
    let (s, body) = c.send(Method::POST, "/pads", pad, Some(0)).await;
    assert_eq!(s, StatusCode::CONFLICT);
    assert_eq!(body["revision"], 1);
    let pad = Body::from(json!({ "faces": [40], "layer": 0 }).to_string());
    let (s, body) = c.send(Method::POST, "/pads", pad, Some(1)).await;
    assert_eq!(s, StatusCode::OK, "{body}");
    assert_eq!(body["revision"], 2);
}

#[tokio::test]
async fn invalid_payloads_are_rejected() {
    let c = Client::new();
    for (uri, body) in [
        ("/traces", json!({ "picks": "nope" })),
        ("/traces", json!({ "picks": [0, 1], "colour": 3 })),
        ("/traces", json!({ "picks": [0, 100000] })),
        ("/traces", json!({ "picks": [2 * N + 2, 2 * N + 6], "width_mm": 0.2 })),
        ("/pads", json!({ "faces": [] })),
        ("/vias", json!({ "vertex": 50, "radius_mm": 0.5, "layer_span": [1, 0] })),
        ("/simulate", json!({ "config": { "damping": 2.0 } })),
    ] {
        let (s, resp) = c.post(uri, body.clone()).await;
        assert_eq!(s, StatusCode::BAD_REQUEST, "{uri} {body} -> {resp}");
        assert!(resp["error"].is_string());
    }
    let (s, _) = c.send(Method::POST, "/traces", Body::from("{"), None).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    let (s, _) = c.send(Method::POST, "/mold", Body::from("solid nothing"), None).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    let (_, project) = c.get("/project").await;
    assert!(project["design"]["traces"].as_array().unwrap().is_empty());
}

#[tokio::test]
async fn delete_feature() {
    let c = Client::new();
    let (_, body) = c.post("/traces", json!({ "picks": [2 * N + 2, 2 * N + 6] })).await;
    let id = body["trace"]["id"].as_u64().unwrap();
    let (s, body) = c.send(Method::DELETE, &format!("/feature/{id}"), Body::empty(), None).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(body["removed"]["kind"], "trace");
    let (s, _) = c.send(Method::DELETE, &format!("/feature/{id}"), Body::empty(), None).await;
    assert_eq!(s, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn check_reports_violations_without_simulation() {
    let c = Client::new();
    c.post("/traces", json!({ "picks": [7 * N + 2, 7 * N + 12] })).await;
    let (s, body) = c.post("/check", json!({})).await;
    assert_eq!(s, StatusCode::OK);
    assert!(body["violations"].as_array().unwrap().is_empty());
    c.post("/traces", json!({ "picks": [2 * N + 7, 12 * N + 7] })).await;
    let (_, body) = c.post("/check", json!({})).await;
    assert_eq!(body["violations"][0]["kind"], "clearance");
}

#[tokio::test]
async fn export_with_violations_is_unprocessable() {
    let c = Client::new();
    c.formed().await;
    c.post("/traces", json!({ "picks": [7 * N + 2, 7 * N + 12] })).await;
    c.post("/traces", json!({ "picks": [2 * N + 7, 12 * N + 7] })).await;
    let (s, body) = c.post("/export", json!({})).await;
    assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY);
    assert!(!body["violations"].as_array().unwrap().is_empty());
    let (s, _) = c.get("/flatten").await;
    assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY);
}

#[tokio::test]
async fn requests_replay_against_the_library() {
    let c = Client::new();
    c.formed().await;
    let row = 7 * N;
    let requests = [
        ("/traces", json!({ "picks": [row + 2, row + 6], "layer": 0, "width_mm": 1.5 })),
        ("/traces", json!({ "picks": [row + 6, 2 * N + 6], "layer": 1, "width_mm": 2.0 })),
        ("/vias", json!({ "vertex": row + 6, "radius_mm": 0.5, "layer_span": [0, 1] })),
        ("/pads", json!({ "faces": [10 * (N - 1) + 9, 10 * (N - 1) + 10], "layer": 1, "exposed": true })),
        ("/traces", json!({ "picks": [11 * N + 3, 11 * N + 5], "layer": 0 })),
    ];
    for (uri, body) in &requests {
        let (s, resp) = c.post(uri, body.clone()).await;
        assert_eq!(s, StatusCode::OK, "{uri} {resp}");
    }
    let (_, body) = c.post("/traces", json!({ "picks": [3 * N + 3, 3 * N + 5] })).await;
    let id = body["trace"]["id"].as_u64().unwrap();
    c.send(Method::DELETE, &format!("/feature/{id}"), Body::empty(), None).await;

    let mut lib = new_project();
    lib.set_mold_stl(&box_stl()).unwrap();
    let formed = simulate(&lib.mold_mesh(".".as_ref()).unwrap(), &SimConfig::default(), &lib.grid()).unwrap();
    lib.set_formed(&formed);
    let d = lib.design_mut();
    d.add_trace(&[row + 2, row + 6], 0, 1.5).unwrap();
    d.add_trace(&[row + 6, 2 * N + 6], 1, 2.0).unwrap();
    d.add_via(row + 6, 0.5, (0, 1)).unwrap();
    d.add_pad(&[10 * (N - 1) + 9, 10 * (N - 1) + 10], 1, true).unwrap();
    d.add_trace(&[11 * N + 3, 11 * N + 5], 0, 1.5).unwrap();
    let extra = d.add_trace(&[3 * N + 3, 3 * N + 5], 0, 1.5).unwrap().id;
    d.remove_feature(extra).unwrap();

    let resp = c.app.clone().oneshot(Request::get("/project").body(Body::empty()).unwrap()).await.unwrap();
    let served = String::from_utf8(resp.into_body().collect().await.unwrap().to_bytes().to_vec()).unwrap();
    assert_eq!(served, lib.to_json());

    let (s, body) = c.post("/export", json!({})).await;
    assert_eq!(s, StatusCode::OK, "{body}");
    let expected = export_files(&mut lib, ".".as_ref()).unwrap();
    let files = body["files"].as_array().unwrap();
    assert_eq!(files.len(), expected.files.len());
    for (served, (name, bytes)) in files.iter().zip(&expected.files) {
        assert_eq!(served["name"], name.as_str());
        assert_eq!(&BASE64.decode(served["stl_base64"].as_str().unwrap()).unwrap(), bytes);
    }
    assert_eq!(body["manifest"], serde_json::to_value(&expected.manifest).unwrap());
}

#[tokio::test]
async fn project_round_trips_through_put() {
    let c = Client::new();
    c.post("/traces", json!({ "picks": [2 * N + 2, 2 * N + 6] })).await;
    let (_, project) = c.get("/project").await;
    let other = Client::new();
    let (s, body) = other.send(Method::PUT, "/project", Body::from(project.to_string()), Some(0)).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(body["revision"], 1);
    let (_, copy) = other.get("/project").await;
    assert_eq!(copy, project);
    let (s, _) = other.send(Method::PUT, "/project", Body::from("{\"schema_version\": 99}"), None).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
}

#[tokio::test]
async fn heatmap_ranks_match_library_stretch_on_hemisphere() {
    let mold = fixtures::hemisphere_mold(30.0, 32, 12);
    let stl = write_stl(&mold.to_stl("hemisphere"), StlFormat::Binary).unwrap();
    let c = Client::new();
    c.send(Method::POST, "/mold", Body::from(stl.clone()), None).await;
    let (s, body) = c.post("/simulate", json!({})).await;
    assert_eq!(s, StatusCode::OK, "{body}");
    let (_, mesh) = c.get("/mesh").await;
    let served: Vec<f64> = serde_json::from_value(mesh["face_stretch"].clone()).unwrap();

    let served_mold = MoldMesh::from_stl(&parse_stl(&stl).unwrap()).unwrap().placed_on_bed();
    let formed = simulate(&served_mold, &SimConfig::default(), &SheetParams::square(N, 130.0)).unwrap();
    let expected = compute_stretch(&formed).face_mean_stretch();
    let rank = |v: &[f64]| {
        let mut idx: Vec<usize> = (0..v.len()).collect();
        idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]).then(a.cmp(&b)));
        idx
    };
    assert_eq!(rank(&served), rank(&expected));
    let spread = expected.iter().cloned().fold(f64::MIN, f64::max) - expected.iter().cloned().fold(f64::MAX, f64::min);
    assert!(spread > 0.01, "hemisphere should stretch unevenly: {spread}");
}
