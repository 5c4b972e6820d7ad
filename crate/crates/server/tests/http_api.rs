use std::fs;
use std::sync::Arc;

use axum::body::Body;
use axum::http::{Method, Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use quizcram_core::service::ManualClock;
use quizcram_core::{convert_course, Course, InVideoQuizCourse, MemoryLog, SchedulerConfig, StudyService};
use quizcram_server::{build_service, router, ServerConfig};
use serde_json::{json, Value};
use tower::ServiceExt;

fn source() -> Value {
    json!({
        "course_id": "ml",
        "videos": [
            { "video_id": "v1", "title": "Intro", "duration_s": 100, "unit_id": "u1", "order_index": 0 },
            { "video_id": "v2", "title": "Trees", "duration_s": 60, "unit_id": "u1", "order_index": 1 }
        ],
        "quizzes": [
            { "video_id": "v1", "position_s": 40, "prompt": "Pick the even numbers",
              "options": [ { "text": "2", "correct": true }, { "text": "3", "correct": false } ] },
            { "video_id": "v2", "position_s": 60, "prompt": "Is a leaf a tree?",
              "options": [ { "text": "yes", "correct": true }, { "text": "no", "correct": false } ] }
        ]
    })
}

fn app() -> Router {
    let src: InVideoQuizCourse = serde_json::from_value(source()).unwrap();
    let course = Course::new(convert_course(&src).unwrap()).unwrap();
    let mut svc = StudyService::new(SchedulerConfig::default(), Arc::new(ManualClock::new(1_000)));
    svc.add_course(course, Box::new(MemoryLog::default())).unwrap();
    router(Arc::new(svc))
}

async fn call(app: &Router, method: Method, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
    let req = Request::builder().method(method).uri(uri);
    let req = match body {
        Some(b) => req.header("content-type", "application/json").body(Body::from(b.to_string())),
        None => req.body(Body::empty()),
    }
    .unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    let value = if bytes.is_empty() { Value::Null } else { serde_json::from_slice(&bytes).unwrap() };
    (status, value)
}

async fn start(app: &Router, user: &str) -> String {
    let (status, body) =
        call(app, Method::POST, "/sessions", Some(json!({ "user_id": user, "course_id": "ml" }))).await;
    assert_eq!(status, StatusCode::CREATED, "{body}");
    body["session_id"].as_str().unwrap().to_string()
}

#[tokio::test]
async fn course_manifest_and_unknown_course() {
    let app = app();
    let (status, body) = call(&app, Method::GET, "/courses/ml", None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body["segments"].as_array().unwrap().len(), 3);
    assert_eq!(body["questions"].as_array().unwrap().len(), 3);

    let (status, body) = call(&app, Method::GET, "/courses/nope", None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    assert_eq!(body["error"], "course_not_found");

    let (status, _) = call(&app, Method::POST, "/sessions", Some(json!({ "user_id": "u", "course_id": "nope" }))).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn question_view_hides_the_answer_key() {
    let app = app();
    let sid = start(&app, "ann").await;
    let (status, body) = call(&app, Method::GET, &format!("/sessions/{sid}/question"), None).await;
    assert_eq!(status, StatusCode::OK);
    let q = &body["question"];
    assert_eq!(q["question_id"], "q:v1@0");
    assert_eq!(q["options"], json!(["2", "3"]));
    assert!(!body.to_string().contains("correct"));
    assert_eq!(q["regions"]["v1"].as_array().unwrap().last().unwrap()["tag"], "relevant");
}

#[tokio::test]
async fn answers_advance_and_stale_ids_conflict() {
    let app = app();
    let sid = start(&app, "ben").await;
    let answers = format!("/sessions/{sid}/answers");

    let (status, body) =
        call(&app, Method::POST, &answers, Some(json!({ "question_id": "q:v1@0", "selected": [true, true] }))).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body["score"], 0.5);
    assert_eq!(body["advanced"], false);

    let (_, body) =
        call(&app, Method::POST, &answers, Some(json!({ "question_id": "q:v1@0", "selected": [true, false] }))).await;
    assert_eq!(body["advanced"], true);
    assert_eq!(body["session"]["current_question_id"], "q:v1@40");

    let (status, body) =
        call(&app, Method::POST, &answers, Some(json!({ "question_id": "q:v1@0", "selected": [true, false] }))).await;
    assert_eq!(status, StatusCode::CONFLICT);
    assert_eq!(body["error"], "stale_question");
    assert_eq!(body["current"]["question"]["question_id"], "q:v1@40");

    let (status, body) =
        call(&app, Method::POST, &answers, Some(json!({ "question_id": "q:v1@40", "selected": [true] }))).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(body["error"], "invalid_answer");
}

#[tokio::test]
async fn watch_progress_and_skip_target() {
    let app = app();
    let sid = start(&app, "cat").await;
    let watch = format!("/sessions/{sid}/watch");

    let (status, _) =
        call(&app, Method::POST, &watch, Some(json!({ "video_id": "v1", "action": "play", "from_s": 0 }))).await;
    assert_eq!(status, StatusCode::OK);
    let (status, body) = call(
        &app,
        Method::POST,
        &watch,
        Some(json!({ "video_id": "v1", "action": "heartbeat", "from_s": 0, "to_s": 5 })),
    )
    .await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body["regions"][0], json!({ "start_s": 0, "end_s": 5, "tag": "seen_current_part" }));

    let (status, body) = call(
        &app,
        Method::POST,
        &watch,
        Some(json!({ "video_id": "v1", "action": "heartbeat", "from_s": 5, "to_s": 12 })),
    )
    .await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(body["error"], "heartbeat_too_long");

    let (status, body) = call(
        &app,
        Method::POST,
        &watch,
        Some(json!({ "video_id": "v1", "action": "pause", "from_s": 5, "to_s": 101 })),
    )
    .await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(body["error"], "position_out_of_bounds");

    let (status, body) =
        call(&app, Method::GET, &format!("/sessions/{sid}/skip-target?video_id=v1&position_s=2"), None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body["target_s"], 5);

    let (status, _) = call(
        &app,
        Method::POST,
        &format!("/sessions/{sid}/skip"),
        Some(json!({ "video_id": "v1", "from_s": 2, "to_s": 5 })),
    )
    .await;
    assert_eq!(status, StatusCode::NO_CONTENT);

    let (status, body) =
        call(&app, Method::GET, &format!("/sessions/{sid}/skip-target?video_id=v9&position_s=0"), None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    assert_eq!(body["error"], "video_not_found");
}

#[tokio::test]
async fn timeline_and_review_gate() {
    let app = app();
    let sid = start(&app, "dan").await;
    let answers = format!("/sessions/{sid}/answers");

    let (status, body) = call(&app, Method::GET, &format!("/sessions/{sid}/review"), None).await;
    assert_eq!(status, StatusCode::CONFLICT);
    assert_eq!(body["error"], "initial_pass_incomplete");
    assert_eq!(body["remaining"], 3);

    for (qid, sel) in [("q:v1@0", json!([true, false])), ("q:v1@40", json!([false, false, true, false, false]))] {
        let (status, _) =
            call(&app, Method::POST, &answers, Some(json!({ "question_id": qid, "selected": sel }))).await;
        assert_eq!(status, StatusCode::OK);
    }
    let (_, timeline) = call(&app, Method::GET, &format!("/sessions/{sid}/timeline"), None).await;
    let ids: Vec<&str> = timeline.as_array().unwrap().iter().map(|e| e["question_id"].as_str().unwrap()).collect();
    assert_eq!(ids, ["q:v1@40", "q:v1@0"]);

    let (status, _) = call(&app, Method::POST, &format!("/sessions/{sid}/timeline/q:v1@0/expand"), None).await;
    assert_eq!(status, StatusCode::NO_CONTENT);
    let (status, _) = call(&app, Method::POST, &format!("/sessions/{sid}/timeline/q:zz/expand"), None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);

    let (_, body) =
        call(&app, Method::POST, &answers, Some(json!({ "question_id": "q:v2@0", "selected": [true, false] }))).await;
    assert_eq!(body["session"]["mode"], "review");
    let (status, review) = call(&app, Method::GET, &format!("/sessions/{sid}/review"), None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(review.as_array().unwrap().len(), 3);
    let combined: Vec<f64> = review.as_array().unwrap().iter().map(|m| m["combined"].as_f64().unwrap()).collect();
    assert!(combined.windows(2).all(|w| w[0] <= w[1]));
}

#[tokio::test]
async fn unknown_session_and_unsafe_user() {
    let app = app();
    let (status, body) = call(&app, Method::GET, "/sessions/ml.nobody.1/question", None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    assert_eq!(body["error"], "session_not_found");

    let (status, body) =
        call(&app, Method::POST, "/sessions", Some(json!({ "user_id": "../etc", "course_id": "ml" }))).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(body["error"], "invalid_id");
}

#[tokio::test]
async fn config_file_drives_storage_and_courses() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("ml.json"), source().to_string()).unwrap();
    fs::write(
        dir.path().join("quizcram.toml"),
        "listen = \"127.0.0.1:0\"\nstorage_dir = \"logs\"\ncourses = [\"ml.json\"]\n\n[scheduler]\nreview_list_length = 2\nperformance_weight = 5\nwatched_weight = 3\nrecency_weight = 2\n",
    )
    .unwrap();
    let cfg = ServerConfig::load(&dir.path().join("quizcram.toml")).unwrap();
    assert_eq!(cfg.scheduler.review_list_length, 2);
    assert!((cfg.scheduler.performance_weight - 0.5).abs() < 1e-12);
    assert!((cfg.scheduler.recency_weight - 0.2).abs() < 1e-12);

    let sid = {
        let svc = build_service(&cfg, Arc::new(ManualClock::new(5))).unwrap();
        let app = router(Arc::new(svc));
        let sid = start(&app, "eve").await;
        let (status, _) = call(
            &app,
            Method::POST,
            &format!("/sessions/{sid}/answers"),
            Some(json!({ "question_id": "q:v1@0", "selected": [true, false] })),
        )
        .await;
        assert_eq!(status, StatusCode::OK);
        sid
    };
    assert_eq!(sid, "ml.eve.1");
    assert!(dir.path().join("logs/ml/eve").is_dir());

    // A restarted server resumes from the log.
    let svc = build_service(&cfg, Arc::new(ManualClock::new(10))).unwrap();
    let app = router(Arc::new(svc));
    let sid = start(&app, "eve").await;
    assert_eq!(sid, "ml.eve.2");
    let (_, body) = call(&app, Method::GET, &format!("/sessions/{sid}"), None).await;
    assert_eq!(body["current_question_id"], "q:v1@40");
}
