//! Test helpers: fixture paths and a tiny HTTP/1.1 mock endpoint.
#![allow(dead_code)]

use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, Read, Write};
use std::net::{TcpListener, TcpStream};
use std::path::PathBuf;
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::thread;

use serde_json::{json, Value};

pub fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

#[derive(Debug, Clone)]
pub struct Request {
    /// Lower-cased header names.
    pub headers: BTreeMap<String, String>,
    pub body: Value,
}

impl Request {
    /// The prompt text of a completion- or chat-style request.
    pub fn prompt(&self) -> String {
        if let Some(p) = self.body["prompt"].as_str() {
            return p.into();
        }
        self.body["messages"]
            .as_array()
            .and_then(|m| m.last())
            .and_then(|m| m["content"].as_str())
            .unwrap_or_default()
            .into()
    }
}

type Handler = dyn Fn(&Request, usize) -> (u16, String) + Send + Sync;

pub struct MockServer {
    pub url: String,
    hits: Arc<AtomicUsize>,
    log: Arc<Mutex<Vec<Request>>>,
    stop: Arc<AtomicBool>,
    addr: std::net::SocketAddr,
}

impl MockServer {
    /// `handler(request, hit_index)` returns (status, body).
    pub fn start(handler: impl Fn(&Request, usize) -> (u16, String) + Send + Sync + 'static) -> Self {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap();
        let hits = Arc::new(AtomicUsize::new(0));
        let log = Arc::new(Mutex::new(Vec::new()));
        let stop = Arc::new(AtomicBool::new(false));
        let handler: Arc<Handler> = Arc::new(handler);
        {
            let (hits, log, stop) = (hits.clone(), log.clone(), stop.clone());
            thread::spawn(move || {
                for stream in listener.incoming() {
                    if stop.load(Ordering::SeqCst) {
                        break;
                    }
                    let Ok(stream) = stream else { continue };
                    let (hits, log, handler) = (hits.clone(), log.clone(), handler.clone());
                    thread::spawn(move || serve(stream, &hits, &log, &*handler));
                }
            });
        }
        Self { url: format!("http://{addr}/v1/completions"), hits, log, stop, addr }
    }

    /// Always answers `{"choices": [{"text": completion}]}`.
    pub fn constant(completion: &str) -> Self {
        let body = completion_body(completion);
        Self::start(move |_, _| (200, body.clone()))
    }

    /// Deterministic answers derived from the prompt alone.
    pub fn deterministic() -> Self {
        Self::start(|req, _| (200, completion_body(&deterministic_answer(&req.prompt()))))
    }

    pub fn hits(&self) -> usize {
        self.hits.load(Ordering::SeqCst)
    }

    pub fn requests(&self) -> Vec<Request> {
        self.log.lock().unwrap().clone()
    }
}

impl Drop for MockServer {
    fn drop(&mut self) {
        self.stop.store(true, Ordering::SeqCst);
        let _ = TcpStream::connect(self.addr);
    }
}

pub fn completion_body(text: &str) -> String {
    json!({"choices": [{"text": text}]}).to_string()
}

/// A fixed function of the prompt: "yes" or "no" for yes/no prompts, else an
/// echo of the question's last word.
pub fn deterministic_answer(prompt: &str) -> String {
    let h = prompt.bytes().fold(0u32, |h, b| h.wrapping_mul(31).wrapping_add(u32::from(b)));
    if prompt.contains("yes or no") {
        return if h % 3 == 0 { "No.".into() } else { "Yes".into() };
    }
    let question = prompt.lines().next().unwrap_or_default();
    let last = question.split_whitespace().last().unwrap_or_default();
    format!("{} {}", last.trim_end_matches('?'), h % 97)
}

/// Free local port with nothing listening on it.
pub fn dead_endpoint() -> String {
    let l = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = l.local_addr().unwrap();
    drop(l);
    format!("http://{addr}/v1/completions")
}

fn serve(stream: TcpStream, hits: &AtomicUsize, log: &Mutex<Vec<Request>>, handler: &Handler) {
    let mut reader = BufReader::new(stream.try_clone().unwrap());
    let mut writer = stream;
    loop {
        let mut request_line = String::new();
        if reader.read_line(&mut request_line).unwrap_or(0) == 0 {
            return;
        }
        let mut headers = BTreeMap::new();
        loop {
            let mut line = String::new();
            if reader.read_line(&mut line).unwrap_or(0) == 0 {
                return;
            }
            let line = line.trim_end();
            if line.is_empty() {
                break;
            }
            if let Some((k, v)) = line.split_once(':') {
                headers.insert(k.trim().to_ascii_lowercase(), v.trim().to_owned());
            }
        }
        let len: usize = headers.get("content-length").and_then(|v| v.parse().ok()).unwrap_or(0);
        let mut body = vec![0; len];
        if reader.read_exact(&mut body).is_err() {
            return;
        }
        let request = Request { headers, body: serde_json::from_slice(&body).unwrap_or(Value::Null) };
        let index = hits.fetch_add(1, Ordering::SeqCst);
        log.lock().unwrap().push(request.clone());
        let (status, text) = handler(&request, index);
        let response = format!(
            "HTTP/1.1 {status} Mock\r\nContent-Type: application/json\r\nContent-Length: {}\r\n\r\n{text}",
            text.len()
        );
        if writer.write_all(response.as_bytes()).and_then(|_| writer.flush()).is_err() {
            return;
        }
    }
}
