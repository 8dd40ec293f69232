//! Exercises the provider client against a minimal scripted HTTP server.

use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};

use serde_json::{json, Value};

use stylekit::genkit::provider::{
    ProviderClient, ProviderConfig, RetryConfig, PAIR_GENERATION_PARAMS,
};
use stylekit::Error;

type Responder = Box<dyn Fn(usize, &Value) -> (u16, Value) + Send + Sync>;

struct MockServer {
    url: String,
    hits: Arc<AtomicUsize>,
    bodies: Arc<Mutex<Vec<Value>>>,
    auth_headers: Arc<Mutex<Vec<Option<String>>>>,
}

/// One-request-per-connection HTTP server; `respond` sees the 0-based
/// request index and parsed JSON body.
fn mock_server(respond: Responder) -> MockServer {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}/", listener.local_addr().unwrap());
    let hits = Arc::new(AtomicUsize::new(0));
    let bodies = Arc::new(Mutex::new(Vec::new()));
    let auth_headers = Arc::new(Mutex::new(Vec::new()));
    let thread_hits = hits.clone();
    let thread_bodies = bodies.clone();
    let thread_auth = auth_headers.clone();
    std::thread::spawn(move || {
        for stream in listener.incoming() {
            let Ok(stream) = stream else { break };
            let mut reader = BufReader::new(stream);
            let mut content_length = 0usize;
            let mut auth = None;
            loop {
                let mut line = String::new();
                if reader.read_line(&mut line).is_err() || line.trim_end().is_empty() {
                    break;
                }
                let lower = line.to_ascii_lowercase();
                if let Some(rest) = lower.strip_prefix("content-length:") {
                    content_length = rest.trim().parse().unwrap_or(0);
                }
                if lower.starts_with("authorization:") {
                    auth = Some(line.split_once(':').unwrap().1.trim().to_string());
                }
            }
            thread_auth.lock().unwrap().push(auth);
            let mut body = vec![0u8; content_length];
            if reader.read_exact(&mut body).is_err() {
                continue;
            }
            let parsed: Value = serde_json::from_slice(&body).unwrap_or(Value::Null);
            let index = thread_hits.fetch_add(1, Ordering::SeqCst);
            thread_bodies.lock().unwrap().push(parsed.clone());
            let (status, reply) = respond(index, &parsed);
            let reply = reply.to_string();
            let reason = if status == 200 { "OK" } else { "Error" };
            let response = format!(
                "HTTP/1.1 {status} {reason}\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{reply}",
                reply.len()
            );
            let mut stream = reader.into_inner();
            let _ = stream.write_all(response.as_bytes());
            let _ = stream.flush();
        }
    });
    MockServer { url, hits, bodies, auth_headers }
}

fn chat_ok(text: &str) -> Value {
    json!({"choices": [{"message": {"role": "assistant", "content": text}}]})
}

fn config(url: &str) -> ProviderConfig {
    ProviderConfig {
        base_url: url.to_string(),
        retry: RetryConfig { max_attempts: 3, backoff_ms: 1 },
        ..ProviderConfig::default()
    }
}

#[test]
fn retries_transient_failure_then_succeeds() {
    let server = mock_server(Box::new(|index, _| {
        if index == 0 {
            (500, json!({"error": "overloaded"}))
        } else {
            (200, chat_ok("recovered"))
        }
    }));
    let client = ProviderClient::new(config(&server.url)).unwrap();
    let text = client.llm_generate("hello", PAIR_GENERATION_PARAMS).unwrap();
    assert_eq!(text, "recovered");
    assert_eq!(server.hits.load(Ordering::SeqCst), 2);
    let telemetry = client.telemetry();
    assert_eq!(telemetry.requests, 2);
    assert_eq!(telemetry.retries, 1);
    assert_eq!(telemetry.cache_hits, 0);
}

#[test]
fn gives_up_after_max_attempts() {
    let server = mock_server(Box::new(|_, _| (500, json!({"error": "down"}))));
    let client = ProviderClient::new(config(&server.url)).unwrap();
    let err = client.llm_generate("hello", PAIR_GENERATION_PARAMS).unwrap_err();
    match err {
        Error::Transport { attempts, message } => {
            assert_eq!(attempts, 3);
            assert!(message.contains("500"), "message: {message}");
        }
        other => panic!("unexpected error: {other}"),
    }
    assert_eq!(server.hits.load(Ordering::SeqCst), 3);
}

#[test]
fn embeds_in_config_sized_batches() {
    let server = mock_server(Box::new(|_, body| {
        let n = body["input"].as_array().map(|a| a.len()).unwrap_or(0);
        let data: Vec<Value> = (0..n)
            .map(|i| json!({"embedding": [i as f64, 1.0, 2.0]}))
            .collect();
        (200, json!({"data": data}))
    }));
    let client = ProviderClient::new(ProviderConfig {
        embed_batch_size: 2,
        ..config(&server.url)
    })
    .unwrap();
    let inputs: Vec<(String, String)> =
        (0..5).map(|i| (format!("k{i}"), format!("text {i}"))).collect();
    let embeddings = client.embed_texts(&inputs).unwrap();
    assert_eq!(embeddings.len(), 5);
    assert_eq!(server.hits.load(Ordering::SeqCst), 3);
    let sizes: Vec<usize> = server
        .bodies
        .lock()
        .unwrap()
        .iter()
        .map(|b| b["input"].as_array().unwrap().len())
        .collect();
    assert_eq!(sizes, vec![2, 2, 1]);
}

#[test]
fn warm_cache_makes_no_network_requests() {
    let dir = tempfile::tempdir().unwrap();
    let cache_path = dir.path().join("cache.jsonl");
    let server = mock_server(Box::new(|_, _| (200, chat_ok("from network"))));
    let with_cache = || ProviderConfig {
        cache_path: Some(cache_path.clone()),
        ..config(&server.url)
    };

    let client = ProviderClient::new(with_cache()).unwrap();
    assert_eq!(client.llm_generate("q", PAIR_GENERATION_PARAMS).unwrap(), "from network");
    assert_eq!(server.hits.load(Ordering::SeqCst), 1);

    // A fresh client over the same cache file must not touch the server.
    let client = ProviderClient::new(with_cache()).unwrap();
    assert_eq!(client.llm_generate("q", PAIR_GENERATION_PARAMS).unwrap(), "from network");
    assert_eq!(server.hits.load(Ordering::SeqCst), 1);
    assert_eq!(client.telemetry().cache_hits, 1);
    assert_eq!(client.telemetry().requests, 0);

    // A different prompt misses the cache and goes out once.
    assert_eq!(client.llm_generate("q2", PAIR_GENERATION_PARAMS).unwrap(), "from network");
    assert_eq!(server.hits.load(Ordering::SeqCst), 2);
}

#[test]
fn bearer_token_read_from_configured_env_var() {
    let server = mock_server(Box::new(|_, _| (200, chat_ok("ok"))));
    // A configured but unset env var means no Authorization header.
    let client = ProviderClient::new(ProviderConfig {
        api_key_env: Some("STYLEKIT_TEST_KEY_THAT_IS_UNSET".into()),
        ..config(&server.url)
    })
    .unwrap();
    assert_eq!(client.llm_generate("q", PAIR_GENERATION_PARAMS).unwrap(), "ok");
    assert_eq!(server.auth_headers.lock().unwrap().as_slice(), &[None]);

    std::env::set_var("STYLEKIT_TEST_KEY_SET", "sekrit");
    let client = ProviderClient::new(ProviderConfig {
        api_key_env: Some("STYLEKIT_TEST_KEY_SET".into()),
        ..config(&server.url)
    })
    .unwrap();
    assert_eq!(client.llm_generate("q2", PAIR_GENERATION_PARAMS).unwrap(), "ok");
    assert_eq!(
        server.auth_headers.lock().unwrap()[1].as_deref(),
        Some("Bearer sekrit")
    );
}
