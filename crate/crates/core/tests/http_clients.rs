//! HTTP clients against a small in-process server.

use std::io::{BufRead, BufReader, Read, Write};
use std::net::{TcpListener, TcpStream};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::thread;
use std::time::Duration;

use promptlab_core::metrics::scorer::{score_images, HttpScorer, ScoringOptions};
use promptlab_core::presample::{
    generate, Backend, BackendError, GenRequest, HttpBackend, HttpBackendConfig,
};

type Handler =
    dyn Fn(usize, &serde_json::Value, &[(String, String)]) -> (u16, String) + Send + Sync;

struct Server {
    url: String,
    calls: Arc<AtomicUsize>,
    peak: Arc<AtomicUsize>,
}

type Request = (Vec<(String, String)>, Vec<u8>);

fn read_request(stream: &mut TcpStream) -> Option<Request> {
    let mut reader = BufReader::new(stream);
    let mut line = String::new();
    reader.read_line(&mut line).ok()?;
    if line.is_empty() {
        return None;
    }
    let mut headers = Vec::new();
    loop {
        line.clear();
        reader.read_line(&mut line).ok()?;
        let l = line.trim_end();
        if l.is_empty() {
            break;
        }
        if let Some((k, v)) = l.split_once(':') {
            headers.push((k.trim().to_ascii_lowercase(), v.trim().to_string()));
        }
    }
    let len = headers
        .iter()
        .find(|(k, _)| k == "content-length")
        .and_then(|(_, v)| v.parse().ok())
        .unwrap_or(0);
    let mut body = vec![0; len];
    reader.read_exact(&mut body).ok()?;
    Some((headers, body))
}

fn serve(delay: Duration, handler: Arc<Handler>) -> Server {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}/completion", listener.local_addr().unwrap());
    let calls = Arc::new(AtomicUsize::new(0));
    let peak = Arc::new(AtomicUsize::new(0));
    let active = Arc::new(AtomicUsize::new(0));
    {
        let (calls, peak) = (calls.clone(), peak.clone());
        thread::spawn(move || {
            for stream in listener.incoming() {
                let Ok(mut stream) = stream else { continue };
                let (calls, peak, active, handler) =
                    (calls.clone(), peak.clone(), active.clone(), handler.clone());
                thread::spawn(move || {
                    let Some((headers, body)) = read_request(&mut stream) else {
                        return;
                    };
                    let now = active.fetch_add(1, Ordering::SeqCst) + 1;
                    peak.fetch_max(now, Ordering::SeqCst);
                    let idx = calls.fetch_add(1, Ordering::SeqCst);
                    thread::sleep(delay);
                    let json = serde_json::from_slice(&body).unwrap_or(serde_json::Value::Null);
                    let (status, reply) = handler(idx, &json, &headers);
                    active.fetch_sub(1, Ordering::SeqCst);
                    let _ = write!(
                        stream,
                        "HTTP/1.1 {status} X\r\ncontent-type: application/json\r\ncontent-length: {}\r\nconnection: close\r\n\r\n{reply}",
                        reply.len()
                    );
                });
            }
        });
    }
    Server { url, calls, peak }
}

fn fast_cfg(url: &str) -> HttpBackendConfig {
    HttpBackendConfig {
        backoff_base: Duration::from_millis(5),
        timeout: Duration::from_secs(5),
        ..HttpBackendConfig::new(url)
    }
}

#[test]
fn completion_round_trip_sends_expected_fields() {
    let server = serve(
        Duration::ZERO,
        Arc::new(|_, body, headers| {
            assert_eq!(
                body["prompt"],
                "<|empty|>\n<|short|> <|short_to_tag|> 1girl\n"
            );
            assert_eq!(body["n_predict"], 256);
            assert_eq!(body["seed"], 7);
            assert_eq!(body["stop"].as_array().unwrap().len(), 13);
            let auth = headers.iter().find(|(k, _)| k == "authorization");
            assert_eq!(auth.map(|(_, v)| v.as_str()), Some("Bearer sekrit"));
            (
                200,
                r#"{"content":"solo, smile<|empty|>junk","stop":true}"#.into(),
            )
        }),
    );
    let backend = HttpBackend::new(HttpBackendConfig {
        token: Some("sekrit".into()),
        ..fast_cfg(&server.url)
    });
    let req = GenRequest::new("<|empty|>\n<|short|> <|short_to_tag|> 1girl\n", 7);
    let resp = generate(&backend, &req).unwrap();
    assert_eq!(resp.text, "solo, smile");
    assert!(resp.finished);
}

#[test]
fn server_errors_are_retried() {
    let server = serve(
        Duration::ZERO,
        Arc::new(|i, _, _| {
            if i < 2 {
                (500, "busy".into())
            } else {
                (200, r#"{"content":"ok"}"#.into())
            }
        }),
    );
    let backend = HttpBackend::new(fast_cfg(&server.url));
    let resp = backend.complete(&GenRequest::new("x", 1)).unwrap();
    assert_eq!(resp.text, "ok");
    assert_eq!(server.calls.load(Ordering::SeqCst), 3);
}

#[test]
fn persistent_failure_surfaces_status() {
    let server = serve(Duration::ZERO, Arc::new(|_, _, _| (503, "down".into())));
    let backend = HttpBackend::new(fast_cfg(&server.url));
    let err = backend.complete(&GenRequest::new("x", 1)).unwrap_err();
    assert_eq!(
        err,
        BackendError::Status {
            code: 503,
            body: "down".into()
        }
    );
    assert_eq!(server.calls.load(Ordering::SeqCst), 3);
}

#[test]
fn client_errors_and_malformed_replies_not_retried() {
    let server = serve(Duration::ZERO, Arc::new(|_, _, _| (400, "bad".into())));
    let backend = HttpBackend::new(fast_cfg(&server.url));
    assert!(matches!(
        backend.complete(&GenRequest::new("x", 1)),
        Err(BackendError::Status { code: 400, .. })
    ));
    assert_eq!(server.calls.load(Ordering::SeqCst), 1);

    let server = serve(
        Duration::ZERO,
        Arc::new(|_, _, _| (200, r#"{"text":"?"}"#.into())),
    );
    let backend = HttpBackend::new(fast_cfg(&server.url));
    assert!(matches!(
        backend.complete(&GenRequest::new("x", 1)),
        Err(BackendError::Malformed(_))
    ));
    assert_eq!(server.calls.load(Ordering::SeqCst), 1);
}

#[test]
fn unreachable_endpoint_is_transport_error() {
    let port = TcpListener::bind("127.0.0.1:0")
        .unwrap()
        .local_addr()
        .unwrap()
        .port();
    let backend = HttpBackend::new(fast_cfg(&format!("http://127.0.0.1:{port}/completion")));
    assert!(matches!(
        backend.complete(&GenRequest::new("x", 1)),
        Err(BackendError::Transport(_))
    ));
}

#[test]
fn in_flight_requests_are_bounded() {
    let server = serve(
        Duration::from_millis(40),
        Arc::new(|_, _, _| (200, r#"{"content":"a"}"#.into())),
    );
    let backend = HttpBackend::new(HttpBackendConfig {
        max_in_flight: 2,
        ..fast_cfg(&server.url)
    });
    thread::scope(|s| {
        for i in 0..8 {
            let backend = &backend;
            s.spawn(move || backend.complete(&GenRequest::new("x", i)).unwrap());
        }
    });
    assert_eq!(server.calls.load(Ordering::SeqCst), 8);
    assert!(server.peak.load(Ordering::SeqCst) <= 2);
}

#[test]
fn scorer_keeps_order_and_partial_failures() {
    let server = serve(
        Duration::ZERO,
        Arc::new(|_, body, _| {
            let results: Vec<String> = body["images"]
                .as_array()
                .unwrap()
                .iter()
                .map(|r| {
                    let r = r.as_str().unwrap();
                    if r.contains("broken") {
                        r#"{"error":"decode failed"}"#.to_string()
                    } else {
                        format!(r#"{{"score":{}}}"#, r.len())
                    }
                })
                .collect();
            (200, format!(r#"{{"results":[{}]}}"#, results.join(",")))
        }),
    );
    let scorer = HttpScorer::new(&server.url, Duration::from_secs(5));
    let refs: Vec<String> = ["a.png", "broken.png", "ccc.png", "dd.png", "e.png"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    let opts = ScoringOptions {
        batch_size: 2,
        ..ScoringOptions::default()
    };
    let out = score_images(&scorer, &refs, &opts).unwrap();
    let scores: Vec<Option<f64>> = out.iter().map(|o| o.score()).collect();
    assert_eq!(
        scores,
        vec![Some(5.0), None, Some(7.0), Some(6.0), Some(5.0)]
    );
    assert_eq!(server.calls.load(Ordering::SeqCst), 3);
}
