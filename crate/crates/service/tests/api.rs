use std::sync::{Arc, Mutex};

use ausc_core::dataset::encode_wav_pcm16;
use ausc_core::{AudioClip, ClassLabel, Classification, Classifier, ModelConfig, ModelMeta, Organ, ParameterSet};
use ausc_service::{router, AppState, ClassifyResponse, Mailer, ReportStore, SmtpConfig, TlsMode};
use axum::body::{to_bytes, Body};
use axum::http::{Request, StatusCode};
use axum::Router;
use serde_json::{json, Value};
use tokio::io::{AsyncBufReadExt, AsyncWriteExt, BufReader};
use tokio::net::TcpListener;
use tower::ServiceExt;

fn classifier() -> Classifier<f32> {
    let cfg = ModelConfig { input_len: 52, ..ModelConfig::reduced() };
    Classifier::new(cfg.clone(), ParameterSet::init(&cfg, 3), ModelMeta::with_version("test-model-7")).unwrap()
}

fn wav(freq: f64, fs: u32, secs: f64) -> Vec<u8> {
    let n = (fs as f64 * secs) as usize;
    let samples = (0..n).map(|i| 0.4 * (std::f64::consts::TAU * freq * i as f64 / fs as f64).sin() + 0.1 * ((i * 7919 % 101) as f64 / 50.0 - 1.0));
    encode_wav_pcm16(&AudioClip::<f64>::new(samples.collect(), fs))
}

struct Harness {
    _dir: tempfile::TempDir,
    state: Arc<AppState>,
    app: Router,
}

fn harness(mailer: Option<Mailer>, with_model: bool) -> Harness {
    let dir = tempfile::tempdir().unwrap();
    let state = Arc::new(AppState::new(ReportStore::open(dir.path().join("reports")).unwrap(), mailer));
    if with_model {
        state.set_classifier(Some(classifier()));
    }
    let app = router(state.clone());
    Harness { _dir: dir, state, app }
}

async fn call(app: &Router, method: &str, uri: &str, body: impl Into<Body>) -> (StatusCode, Vec<u8>) {
    let req = Request::builder().method(method).uri(uri).body(body.into()).unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    (status, to_bytes(resp.into_body(), usize::MAX).await.unwrap().to_vec())
}

fn json_of(bytes: &[u8]) -> Value {
    serde_json::from_slice(bytes).unwrap_or_else(|e| panic!("{e}: {}", String::from_utf8_lossy(bytes)))
}

/// Minimal SMTP server that accepts everything and records the dialogue.
async fn smtp_stub() -> (u16, Arc<Mutex<String>>) {
    let listener = TcpListener::bind("127.0.0.1:0").await.unwrap();
    let port = listener.local_addr().unwrap().port();
    let transcript = Arc::new(Mutex::new(String::new()));
    let log = transcript.clone();
    tokio::spawn(async move {
        while let Ok((sock, _)) = listener.accept().await {
            let log = log.clone();
            tokio::spawn(async move {
                let (rd, mut wr) = sock.into_split();
                let mut lines = BufReader::new(rd).lines();
                wr.write_all(b"220 stub ESMTP\r\n").await.unwrap();
                let mut in_data = false;
                while let Ok(Some(line)) = lines.next_line().await {
                    log.lock().unwrap().push_str(&format!("{line}\n"));
                    let reply: &[u8] = if in_data {
                        if line == "." {
                            in_data = false;
                            b"250 queued\r\n"
                        } else {
                            continue;
                        }
                    } else {
                        match line.get(..4).unwrap_or("").to_ascii_uppercase().as_str() {
                            "EHLO" => b"250-stub\r\n250 8BITMIME\r\n",
                            "DATA" => {
                                in_data = true;
                                b"354 go ahead\r\n"
                            }
                            "QUIT" => {
                                let _ = wr.write_all(b"221 bye\r\n").await;
                                break;
                            }
                            _ => b"250 ok\r\n",
                        }
                    };
                    wr.write_all(reply).await.unwrap();
                }
            });
        }
    });
    (port, transcript)
}

fn mailer(port: u16) -> Mailer {
    Mailer::new(&SmtpConfig {
        host: "127.0.0.1".into(),
        port,
        username: None,
        password: None,
        from_address: "clinic@example.org".into(),
        tls: TlsMode::Off,
    })
    .unwrap()
}

async fn classify(app: &Router, body: Vec<u8>, organ: &str) -> ClassifyResponse {
    let (status, bytes) = call(app, "POST", &format!("/api/v1/classify?organ={organ}"), body).await;
    assert_eq!(status, StatusCode::OK, "{}", String::from_utf8_lossy(&bytes));
    serde_json::from_slice(&bytes).unwrap()
}

async fn create_report(app: &Router, c: &ClassifyResponse) -> String {
    let mut payload = serde_json::to_value(c).unwrap();
    payload["patient_meta"] = json!({"name": "Jane Roe", "age": "54", "notes": "follow-up"});
    let (status, bytes) = call(app, "POST", "/api/v1/reports", serde_json::to_vec(&payload).unwrap()).await;
    assert_eq!(status, StatusCode::CREATED, "{}", String::from_utf8_lossy(&bytes));
    json_of(&bytes)["report_id"].as_str().unwrap().to_string()
}

#[tokio::test]
async fn health_and_classify_without_model() {
    let h = harness(None, false);
    let (status, body) = call(&h.app, "GET", "/api/v1/health", Body::empty()).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(json_of(&body), json!({"status": "degraded", "model_version": null}));
    let (status, body) = call(&h.app, "POST", "/api/v1/classify", wav(100.0, 4000, 1.0)).await;
    assert_eq!(status, StatusCode::SERVICE_UNAVAILABLE);
    assert_eq!(json_of(&body)["error"], "model_not_loaded");

    h.state.set_classifier(Some(classifier()));
    let (_, body) = call(&h.app, "GET", "/api/v1/health", Body::empty()).await;
    assert_eq!(json_of(&body), json!({"status": "ok", "model_version": "test-model-7"}));
}

#[tokio::test]
async fn classes_are_in_canonical_order() {
    let h = harness(None, false);
    let (status, body) = call(&h.app, "GET", "/api/v1/classes", Body::empty()).await;
    assert_eq!(status, StatusCode::OK);
    let list = json_of(&body);
    let list = list.as_array().unwrap();
    assert_eq!(list.len(), 11);
    assert_eq!(list[0]["label"], "AS");
    assert_eq!(list[10]["label"], "URTI");
    for (i, c) in ClassLabel::ALL.iter().enumerate() {
        assert_eq!(list[i]["organ"], c.organ().as_str());
    }
}

#[tokio::test]
async fn classify_matches_the_library_exactly() {
    let h = harness(None, true);
    let lib = classifier();
    for (k, fs) in [(0, 4000), (1, 8000), (2, 22050), (3, 44100)] {
        let body = wav(60.0 + 40.0 * k as f64, fs, 1.2);
        let expected: Classification = lib.classify_wav_bytes(&body, None).unwrap();
        let got = classify(&h.app, body.clone(), "auto").await;
        assert_eq!(got.classification, expected);
        assert_eq!(got.audio_digest.len(), 64);
        // Deterministic: same bytes, same JSON.
        let again = classify(&h.app, body.clone(), "auto").await;
        assert_eq!(serde_json::to_string(&again).unwrap(), serde_json::to_string(&got).unwrap());

        let heart = classify(&h.app, body.clone(), "heart").await;
        assert_eq!(heart.classification.label.organ(), Organ::Heart);
        assert_eq!(heart.classification.probabilities, expected.probabilities);
        let lung = classify(&h.app, body, "lung").await;
        assert_eq!(lung.classification.label.organ(), Organ::Lung);
    }
}

#[tokio::test]
async fn concurrent_classification_equals_serial() {
    let h = harness(None, true);
    let bodies: Vec<Vec<u8>> = (0..8).map(|k| wav(50.0 + 25.0 * k as f64, 4000, 1.0)).collect();
    let mut serial = Vec::new();
    for b in &bodies {
        serial.push(classify(&h.app, b.clone(), "auto").await);
    }
    let tasks: Vec<_> = bodies.iter().map(|b| tokio::spawn(classify_owned(h.app.clone(), b.clone()))).collect();
    for (t, s) in tasks.into_iter().zip(serial) {
        assert_eq!(t.await.unwrap(), s);
    }
}

async fn classify_owned(app: Router, body: Vec<u8>) -> ClassifyResponse {
    classify(&app, body, "auto").await
}

#[tokio::test]
async fn classify_error_codes() {
    let h = harness(None, true);
    let (status, body) = call(&h.app, "POST", "/api/v1/classify", "this is not audio").await;
    assert_eq!(status, StatusCode::UNSUPPORTED_MEDIA_TYPE);
    assert_eq!(json_of(&body)["error"], "undecodable_audio");

    let (status, body) = call(&h.app, "POST", "/api/v1/classify", wav(100.0, 4000, 0.3)).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(json_of(&body)["error"], "too_short");

    let (status, body) = call(&h.app, "POST", "/api/v1/classify", wav(100.0, 800, 1.0)).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(json_of(&body)["error"], "unsupported_sample_rate");

    let (status, _) = call(&h.app, "POST", "/api/v1/classify?organ=kidney", wav(100.0, 4000, 1.0)).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
}

#[tokio::test]
async fn reports_round_trip_and_validation() {
    let h = harness(None, true);
    let c = classify(&h.app, wav(90.0, 4000, 1.0), "heart").await;
    let id = create_report(&h.app, &c).await;

    let (status, body) = call(&h.app, "GET", &format!("/api/v1/reports/{id}"), Body::empty()).await;
    assert_eq!(status, StatusCode::OK);
    let on_disk = std::fs::read(h.state.store().dir().join(format!("{id}.json"))).unwrap();
    assert_eq!(body, on_disk, "served verbatim");
    let doc = json_of(&body);
    assert_eq!(doc["predicted_label"], c.classification.label.token());
    assert_eq!(doc["organ_hint"], "heart");
    assert_eq!(doc["audio_digest"], c.audio_digest);
    assert_eq!(doc["patient_meta"]["name"], "Jane Roe");

    // Survives a restart: a fresh state over the same directory.
    let fresh = Arc::new(AppState::new(ReportStore::open(h.state.store().dir()).unwrap(), None));
    let (status, again) = call(&router(fresh), "GET", &format!("/api/v1/reports/{id}"), Body::empty()).await;
    assert_eq!((status, again), (StatusCode::OK, body));

    let mut bad = serde_json::to_value(&c).unwrap();
    bad["probabilities"][0] = json!(bad["probabilities"][0].as_f64().unwrap() + 1e-3);
    let (status, body) = call(&h.app, "POST", "/api/v1/reports", serde_json::to_vec(&bad).unwrap()).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert!(json_of(&body)["fields"]["probabilities"].is_string());

    let (status, _) = call(&h.app, "POST", "/api/v1/reports", "{not json").await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    let (status, _) = call(&h.app, "GET", &format!("/api/v1/reports/{}", uuid::Uuid::new_v4()), Body::empty()).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    let (status, _) = call(&h.app, "GET", "/api/v1/reports/../../etc/passwd", Body::empty()).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn email_goes_through_the_smtp_stub() {
    let (port, transcript) = smtp_stub().await;
    let h = harness(Some(mailer(port)), true);
    let c = classify(&h.app, wav(120.0, 4000, 1.0), "auto").await;
    let id = create_report(&h.app, &c).await;

    let (status, body) = call(&h.app, "POST", &format!("/api/v1/reports/{id}/email"), r#"{"to": "dr.who@example.org"}"#).await;
    assert_eq!(status, StatusCode::ACCEPTED, "{}", String::from_utf8_lossy(&body));
    let t = transcript.lock().unwrap().clone();
    assert!(t.contains("RCPT TO:<dr.who@example.org>"), "{t}");
    assert!(t.contains("MAIL FROM:<clinic@example.org>"), "{t}");
    assert!(t.contains(&id), "report id missing from message:\n{t}");
    assert!(t.contains("text/plain") && t.contains("text/html"));

    let (status, _) = call(&h.app, "POST", &format!("/api/v1/reports/{}/email", uuid::Uuid::new_v4()), r#"{"to": "a@b.org"}"#).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    let (status, body) = call(&h.app, "POST", &format!("/api/v1/reports/{id}/email"), r#"{"to": "not an address"}"#).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert!(json_of(&body)["fields"]["to"].is_string());
    let (status, _) = call(&h.app, "POST", &format!("/api/v1/reports/{id}/email"), r#"{"recipient": "a@b.org"}"#).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
}

#[tokio::test]
async fn unreachable_smtp_is_502_and_the_report_stays() {
    // Reserve a port, then close it so connections are refused.
    let port = TcpListener::bind("127.0.0.1:0").await.unwrap().local_addr().unwrap().port();
    let h = harness(Some(mailer(port)), true);
    let c = classify(&h.app, wav(120.0, 4000, 1.0), "auto").await;
    let id = create_report(&h.app, &c).await;
    let (status, body) = call(&h.app, "POST", &format!("/api/v1/reports/{id}/email"), r#"{"to": "dr@example.org"}"#).await;
    assert_eq!(status, StatusCode::BAD_GATEWAY);
    assert_eq!(json_of(&body)["error"], "smtp_failed");
    let (status, _) = call(&h.app, "GET", &format!("/api/v1/reports/{id}"), Body::empty()).await;
    assert_eq!(status, StatusCode::OK);
}

#[tokio::test]
async fn email_without_smtp_is_503() {
    let h = harness(None, true);
    let c = classify(&h.app, wav(120.0, 4000, 1.0), "auto").await;
    let id = create_report(&h.app, &c).await;
    let (status, body) = call(&h.app, "POST", &format!("/api/v1/reports/{id}/email"), r#"{"to": "dr@example.org"}"#).await;
    assert_eq!(status, StatusCode::SERVICE_UNAVAILABLE);
    assert_eq!(json_of(&body)["error"], "smtp_not_configured");
}

#[tokio::test]
async fn model_hot_swap_and_reload() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = ModelConfig { input_len: 52, ..ModelConfig::reduced() };
    let path = dir.path().join("m.ausc");
    ausc_core::save_model(&path, &ParameterSet::<f32>::init(&cfg, 9), &cfg, &ModelMeta::with_version("from-disk")).unwrap();
    let svc = ausc_service::ServiceConfig {
        model_path: Some(path.clone()),
        data_dir: dir.path().join("data"),
        bind_addr: "127.0.0.1:0".parse().unwrap(),
        smtp: None,
    };
    let state = Arc::new(AppState::from_config(&svc).unwrap());
    assert_eq!(state.classifier().unwrap().model_version(), "from-disk");
    ausc_core::save_model(&path, &ParameterSet::<f32>::init(&cfg, 10), &cfg, &ModelMeta::with_version("second")).unwrap();
    assert_eq!(state.reload().unwrap().unwrap(), "second");
    std::fs::write(&path, b"garbage").unwrap();
    assert!(state.reload().unwrap().is_err());
    assert_eq!(state.classifier().unwrap().model_version(), "second", "a failed reload keeps the current model");
}
