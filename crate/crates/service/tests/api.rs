use axum::body::Body;
use axum::http::{Method, Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use semindex_service::{router, AppState};
use semindex_store::Store;
use serde_json::{json, Value};
use tower::ServiceExt;

const ANAMNESIS: &str = "axis A \"anamnesis\"
anamnesis
  pain pattern
    localization ?single
      spine
      head
      shoulder/arm/hand
    quality
    intensity ?single
      strong
      very strong
  feeling
";

const DCONCEPTS: &str = "dconcept \"complaint\":
dconcept \"pain\" parent \"complaint\":
  requires [(A[0,0])]
dconcept \"headache\" parent \"pain\":
  requires [(A[0,0,0,1])]
dconcept \"mood\" parent \"complaint\":
  requires [(A[0,1])]
";

async fn call(app: &Router, method: Method, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
    let req = Request::builder().method(method).uri(uri);
    let req = match body {
        Some(b) => req.header("content-type", "application/json").body(Body::from(b.to_string())).unwrap(),
        None => req.body(Body::empty()).unwrap(),
    };
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    let value = if bytes.is_empty() {
        Value::Null
    } else {
        // extractor rejections come back as plain text
        serde_json::from_slice(&bytes).unwrap_or_else(|_| Value::String(String::from_utf8_lossy(&bytes).into()))
    };
    (status, value)
}

async fn app_with_axis() -> Router {
    let app = router(AppState::new(Store::in_memory().unwrap()));
    let (st, body) = call(&app, Method::POST, "/axes", Some(json!({ "hierarchy": ANAMNESIS }))).await;
    assert_eq!(st, StatusCode::CREATED, "{body}");
    let (st, _) = call(&app, Method::POST, "/dconcepts", Some(json!({ "source": DCONCEPTS }))).await;
    assert_eq!(st, StatusCode::CREATED);
    app
}

fn option<'a>(view: &'a Value, concept: &str) -> &'a Value {
    view["question"]["options"].as_array().unwrap().iter().find(|o| o["concept"] == concept).unwrap()
}

/// Answers the current question with the named options.
async fn choose(app: &Router, id: &str, concepts: &[&str]) -> (StatusCode, Value) {
    let (_, view) = call(app, Method::GET, &format!("/sessions/{id}/question"), None).await;
    let node = view["question"]["node"].clone();
    let affirmed: Vec<Value> = concepts.iter().map(|c| option(&view, c)["node"].clone()).collect();
    call(app, Method::POST, &format!("/sessions/{id}/answer"), Some(json!({ "node": node, "affirmed": affirmed }))).await
}

#[tokio::test]
async fn axis_upload_and_index() {
    let app = app_with_axis().await;
    let (st, body) = call(&app, Method::GET, "/axes/A/index", None).await;
    assert_eq!(st, StatusCode::OK);
    assert!(body["index"].as_str().unwrap().contains("([0,0,0] \"localization\""), "{body}");
    let (st, _) = call(&app, Method::POST, "/axes", Some(json!({ "hierarchy": ANAMNESIS }))).await;
    assert_eq!(st, StatusCode::CONFLICT);
    let (st, _) = call(&app, Method::GET, "/axes/Z/index", None).await;
    assert_eq!(st, StatusCode::NOT_FOUND);
    let cyclic = "axis C \"c\"\na\n  b\n    a\n";
    let (st, body) = call(&app, Method::POST, "/axes", Some(json!({ "hierarchy": cyclic }))).await;
    assert_eq!(st, StatusCode::UNPROCESSABLE_ENTITY, "{body}");
    assert!(body["error"].as_str().unwrap().contains("cycle"), "{body}");
}

#[tokio::test]
async fn dialog_commit_and_query() {
    let app = app_with_axis().await;
    let (st, view) = call(&app, Method::POST, "/sessions", Some(json!({ "axis": "A" }))).await;
    assert_eq!(st, StatusCode::CREATED);
    let id = view["id"].as_str().unwrap().to_string();
    let names: Vec<&str> = view["question"]["options"].as_array().unwrap().iter().map(|o| o["concept"].as_str().unwrap()).collect();
    assert_eq!(names, ["pain pattern", "feeling"]);

    // committing early is refused
    let (st, _) = call(&app, Method::POST, &format!("/sessions/{id}/commit"), None).await;
    assert_eq!(st, StatusCode::CONFLICT);

    assert_eq!(choose(&app, &id, &["pain pattern"]).await.0, StatusCode::OK);
    let (_, before) = call(&app, Method::GET, &format!("/sessions/{id}/question"), None).await;
    assert_eq!(choose(&app, &id, &["localization", "quality"]).await.0, StatusCode::OK);
    let (st, back) = call(&app, Method::POST, &format!("/sessions/{id}/back"), None).await;
    assert_eq!(st, StatusCode::OK);
    assert_eq!(back, before);
    assert_eq!(choose(&app, &id, &["localization"]).await.0, StatusCode::OK);
    let (st, body) = choose(&app, &id, &["head", "spine"]).await;
    assert_eq!(st, StatusCode::UNPROCESSABLE_ENTITY, "{body}");
    let (st, done) = choose(&app, &id, &["head"]).await;
    assert_eq!((st, done["status"].as_str()), (StatusCode::OK, Some("complete")));

    let ts = "2026-01-02T03:04:05Z";
    let (st, committed) = call(
        &app,
        Method::POST,
        &format!("/sessions/{id}/commit?infer=true"),
        Some(json!({ "id": "patient-1", "timestamp": ts })),
    )
    .await;
    assert_eq!(st, StatusCode::CREATED, "{committed}");
    assert_eq!(committed["most_specific"], json!(["headache"]));
    assert_eq!(committed["instances"][0]["node_key"], "[0,0,0,1]");
    let (st, _) = call(&app, Method::POST, &format!("/sessions/{id}/commit"), None).await;
    assert_eq!(st, StatusCode::CONFLICT);
    let (st, _) = call(&app, Method::POST, &format!("/sessions/{id}/back"), None).await;
    assert_eq!(st, StatusCode::CONFLICT);

    let (st, hits) = call(&app, Method::GET, "/query?axis=A&key=%5B0%5D", None).await;
    assert_eq!(st, StatusCode::OK);
    assert_eq!(hits.as_array().unwrap().len(), 1);
    assert_eq!(hits[0]["episode"]["id"], "patient-1");
    let (st, hits) = call(&app, Method::GET, "/query?axis=A&key=%5B0,1%5D", None).await;
    assert_eq!((st, hits), (StatusCode::OK, json!([])));
    let (st, _) = call(&app, Method::GET, "/query?axis=A&key=oops", None).await;
    assert_eq!(st, StatusCode::BAD_REQUEST);
    let (st, _) = call(&app, Method::GET, "/sessions/nope/question", None).await;
    assert_eq!(st, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn wrong_node_and_consistency() {
    let app = router(AppState::new(Store::in_memory().unwrap()));
    let text = ANAMNESIS.replace("anamnesis\n", "anamnesis ?negatable\n");
    call(&app, Method::POST, "/axes", Some(json!({ "hierarchy": text }))).await;
    let (_, view) = call(&app, Method::POST, "/sessions", Some(json!({ "axis": "A" }))).await;
    let id = view["id"].as_str().unwrap();
    let pain = option(&view, "pain pattern")["node"].clone();
    let feeling = option(&view, "feeling")["node"].clone();
    let (st, _) = call(&app, Method::POST, &format!("/sessions/{id}/answer"), Some(json!({ "node": feeling, "affirmed": [] }))).await;
    assert_eq!(st, StatusCode::CONFLICT);
    let body = json!({ "node": view["question"]["node"], "affirmed": [feeling], "negated": [pain] });
    let (st, done) = call(&app, Method::POST, &format!("/sessions/{id}/answer"), Some(body)).await;
    assert_eq!((st, done["status"].as_str()), (StatusCode::OK, Some("complete")));
    // pain pattern's first child; it lies below the negated node
    let (st, err) =
        call(&app, Method::POST, &format!("/sessions/{id}/answer"), Some(json!({ "node": 2, "affirmed": [] }))).await;
    assert_eq!(st, StatusCode::CONFLICT);
    assert!(err["error"].as_str().unwrap().contains("negated"), "{err}");
}

#[tokio::test]
async fn single_node_axis_session() {
    let app = router(AppState::new(Store::in_memory().unwrap()));
    let (st, body) = call(&app, Method::POST, "/axes", Some(json!({ "hierarchy": "axis S \"solo\"\nalone\n" }))).await;
    assert_eq!(st, StatusCode::CREATED, "{body}");
    let (st, view) = call(&app, Method::POST, "/sessions", Some(json!({ "axis": "S" }))).await;
    assert_eq!((st, view["status"].as_str(), view["question"].clone()), (StatusCode::CREATED, Some("complete"), Value::Null));
    let (st, _) = call(&app, Method::POST, "/sessions", Some(json!({ "axis": "nope" }))).await;
    assert_eq!(st, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn infer_and_retrieve() {
    let app = app_with_axis().await;
    let (st, body) = call(&app, Method::POST, "/infer", Some(json!({ "situation": "(A[0,1])" }))).await;
    assert_eq!((st, body), (StatusCode::OK, json!({ "most_specific": ["mood"] })));
    let (st, _) = call(&app, Method::POST, "/infer", Some(json!({ "situation": "(A[0,1])", "dconcepts": "other" }))).await;
    assert_eq!(st, StatusCode::NOT_FOUND);
    let (st, _) = call(&app, Method::POST, "/infer", Some(json!({ "situation": "(A[0,1" }))).await;
    assert!(st.is_client_error());

    let (st, body) = call(&app, Method::POST, "/cbr/retrieve", Some(json!({ "situation": "(A[0,1])", "k": 3 }))).await;
    assert_eq!((st, body), (StatusCode::OK, json!([])));
    let (st, _) = call(&app, Method::POST, "/cbr/retrieve", Some(json!({ "situation": "(A[0,1])", "k": 0 }))).await;
    assert_eq!(st, StatusCode::BAD_REQUEST);
    let (st, _) =
        call(&app, Method::POST, "/dconcepts", Some(json!({ "name": "bad", "source": "dconcept \"x\":\n  requires [(Q[0])]\n" }))).await;
    assert_eq!(st, StatusCode::NOT_FOUND);
}
