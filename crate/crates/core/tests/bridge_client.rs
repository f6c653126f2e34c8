//! Bridge client against an in-process HTTP stub.

use std::io::{BufRead, BufReader, Read, Write};
use std::net::{TcpListener, TcpStream};
use std::sync::mpsc;
use std::thread;
use std::time::Duration;

use boostpfn::learners::{BridgeConfig, BridgeError, BridgePredictor, Context, ContextPredictor};
use boostpfn::Error;
use ndarray::array;
use serde_json::{json, Value};

struct Request {
    method: String,
    path: String,
    body: Value,
}

fn read_request(stream: &mut TcpStream) -> Request {
    let mut reader = BufReader::new(stream.try_clone().unwrap());
    let mut line = String::new();
    reader.read_line(&mut line).unwrap();
    let mut parts = line.split_whitespace();
    let method = parts.next().unwrap_or_default().to_string();
    let path = parts.next().unwrap_or_default().to_string();
    let mut length = 0;
    loop {
        let mut header = String::new();
        reader.read_line(&mut header).unwrap();
        if header.trim().is_empty() {
            break;
        }
        if let Some((name, value)) = header.split_once(':') {
            if name.eq_ignore_ascii_case("content-length") {
                length = value.trim().parse().unwrap();
            }
        }
    }
    let mut body = vec![0u8; length];
    reader.read_exact(&mut body).unwrap();
    let body = if body.is_empty() {
        Value::Null
    } else {
        serde_json::from_slice(&body).unwrap()
    };
    Request { method, path, body }
}

fn respond(stream: &mut TcpStream, status: u16, body: &Value) {
    let text = body.to_string();
    let reason = if status == 200 { "OK" } else { "Error" };
    let msg = format!(
        "HTTP/1.1 {status} {reason}\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{text}",
        text.len()
    );
    stream.write_all(msg.as_bytes()).unwrap();
}

/// Serves `count` connections with `handler`, forwarding each request.
fn serve<F>(count: usize, handler: F) -> (String, mpsc::Receiver<(String, String, Value)>)
where
    F: Fn(&Request) -> (u16, Value, Duration) + Send + 'static,
{
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let endpoint = format!("http://{}", listener.local_addr().unwrap());
    let (tx, rx) = mpsc::channel();
    thread::spawn(move || {
        for stream in listener.incoming().take(count) {
            let mut stream = stream.unwrap();
            let req = read_request(&mut stream);
            let (status, body, delay) = handler(&req);
            thread::sleep(delay);
            let _ = tx.send((req.method.clone(), req.path.clone(), req.body.clone()));
            respond(&mut stream, status, &body);
        }
    });
    (endpoint, rx)
}

fn context() -> Context {
    Context::new(array![[0.0, 1.0], [1.0, 0.0]], vec![0, 1]).unwrap()
}

#[test]
fn health_check() {
    let (endpoint, rx) = serve(1, |_| {
        (
            200,
            json!({"status": "ok", "max_context": 1024, "max_classes": 10, "device": "cpu"}),
            Duration::ZERO,
        )
    });
    let health = BridgePredictor::new(BridgeConfig::new(endpoint)).health().unwrap();
    assert_eq!(health.status, "ok");
    assert!(health.max_context >= 1024);
    let (method, path, _) = rx.recv().unwrap();
    assert_eq!((method.as_str(), path.as_str()), ("GET", "/v1/health"));
}

#[test]
fn predict_sends_protocol_fields_and_renormalizes() {
    let (endpoint, rx) = serve(1, |req| {
        let m = req.body["test_x"].as_array().map_or(0, Vec::len);
        let rows: Vec<Value> = (0..m).map(|_| json!([0.25, 0.7500001])).collect();
        (200, json!({ "probs": rows }), Duration::ZERO)
    });
    let p = BridgePredictor::new(BridgeConfig::new(format!("{endpoint}/")));
    let out = p
        .predict(&context(), array![[0.5, 0.5], [2.0, 2.0], [3.0, -1.0]].view(), 2)
        .unwrap();
    assert_eq!(out.nrows(), 3);
    for row in out.view().rows() {
        assert!((row.sum() - 1.0).abs() < 1e-15);
    }
    let (method, path, body) = rx.recv().unwrap();
    assert_eq!((method.as_str(), path.as_str()), ("POST", "/v1/predict"));
    assert_eq!(body["train_x"], json!([[0.0, 1.0], [1.0, 0.0]]));
    assert_eq!(body["train_y"], json!([0, 1]));
    assert_eq!(body["test_x"].as_array().unwrap().len(), 3);
    assert_eq!(body["k"], json!(2));
}

#[test]
fn remote_error_passes_through() {
    let (endpoint, _rx) = serve(1, |_| (413, json!({"error": "context too large"}), Duration::ZERO));
    let p = BridgePredictor::new(BridgeConfig::new(endpoint));
    let err = p.predict(&context(), array![[0.0, 0.0]].view(), 2).unwrap_err();
    match err {
        Error::Bridge(BridgeError::Remote { status, message }) => {
            assert_eq!(status, 413);
            assert_eq!(message, "context too large");
        }
        other => panic!("unexpected error {other:?}"),
    }
}

#[test]
fn non_stochastic_rows_are_rejected() {
    let (endpoint, _rx) = serve(1, |_| (200, json!({"probs": [[0.3, 0.3]]}), Duration::ZERO));
    let p = BridgePredictor::new(BridgeConfig::new(endpoint));
    let err = p.predict(&context(), array![[0.0, 0.0]].view(), 2).unwrap_err();
    assert!(
        matches!(err, Error::Bridge(BridgeError::NotStochastic { row: 0, .. })),
        "{err:?}"
    );
}

#[test]
fn slow_server_times_out() {
    let (endpoint, _rx) = serve(1, |_| {
        (200, json!({"probs": [[0.5, 0.5]]}), Duration::from_millis(1500))
    });
    let mut cfg = BridgeConfig::new(endpoint);
    cfg.timeout = Duration::from_millis(200);
    let err = BridgePredictor::new(cfg)
        .predict(&context(), array![[0.0, 0.0]].view(), 2)
        .unwrap_err();
    match err {
        Error::Bridge(e) => {
            assert_eq!(e, BridgeError::Timeout);
            assert!(e.is_retryable());
        }
        other => panic!("unexpected error {other:?}"),
    }
}

#[test]
fn unreachable_server_is_a_transport_error() {
    let port = TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
    let p = BridgePredictor::new(BridgeConfig::new(format!("http://127.0.0.1:{port}")));
    let err = p.health().unwrap_err();
    assert!(matches!(err, BridgeError::Transport(_)), "{err:?}");
}
