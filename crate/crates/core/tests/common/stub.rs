//! A minimal HTTP completion server answering with the offline backend.

use std::io::{BufRead, BufReader, Read, Write};
use std::net::{TcpListener, TcpStream};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use contrast_core::gateway::deterministic::respond;
use contrast_core::StageTag;

#[derive(Debug, Clone, Copy)]
pub enum Script {
    /// The first `n` requests get `status`, the rest succeed.
    FailFirst(usize, u16),
    /// Every request gets `status`.
    Always(u16),
    /// 200 with a body that is not the reply envelope.
    Garbage,
    /// Succeed after sleeping this long.
    Slow(Duration),
}

pub struct Stub {
    pub url: String,
    pub hits: Arc<AtomicUsize>,
    /// Authorization header of each request, in arrival order.
    pub auth: Arc<Mutex<Vec<Option<String>>>>,
}

fn stage_of(prompt: &str) -> Option<StageTag> {
    let first = prompt.lines().next()?;
    let name = first.strip_prefix("# template: ")?.split_whitespace().next()?;
    StageTag::parse(&name.to_ascii_uppercase())
}

fn handle(mut stream: TcpStream, script: Script, n: usize, auth: &Mutex<Vec<Option<String>>>) {
    let mut reader = BufReader::new(stream.try_clone().unwrap());
    let mut length = 0;
    let mut authorization = None;
    loop {
        let mut line = String::new();
        if reader.read_line(&mut line).unwrap_or(0) == 0 || line == "\r\n" {
            break;
        }
        let lower = line.to_ascii_lowercase();
        if let Some(v) = lower.strip_prefix("content-length:") {
            length = v.trim().parse().unwrap_or(0);
        }
        if lower.starts_with("authorization:") {
            authorization = Some(line["authorization:".len()..].trim().to_string());
        }
    }
    auth.lock().unwrap().push(authorization);
    let mut body = vec![0; length];
    reader.read_exact(&mut body).unwrap();
    let envelope: serde_json::Value = serde_json::from_slice(&body).unwrap();
    let prompt = envelope["prompt"].as_str().unwrap_or_default();
    let ok = || {
        let text = stage_of(prompt).map(|s| respond(s, prompt)).unwrap_or_default();
        (200, serde_json::json!({ "text": text }).to_string())
    };
    let (status, reply) = match script {
        Script::FailFirst(k, status) if n < k => (status, "try again".to_string()),
        Script::Always(status) => (status, "no".to_string()),
        Script::Garbage => (200, "<html>oops</html>".to_string()),
        Script::Slow(d) => {
            std::thread::sleep(d);
            ok()
        }
        _ => ok(),
    };
    let _ = write!(
        stream,
        "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{reply}",
        reply.len()
    );
}

pub fn serve(script: Script) -> Stub {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}/v1/complete", listener.local_addr().unwrap());
    let hits = Arc::new(AtomicUsize::new(0));
    let auth = Arc::new(Mutex::new(Vec::new()));
    let (h, a) = (hits.clone(), auth.clone());
    std::thread::spawn(move || {
        for stream in listener.incoming().flatten() {
            let n = h.fetch_add(1, Ordering::SeqCst);
            let a = a.clone();
            std::thread::spawn(move || handle(stream, script, n, &a));
        }
    });
    Stub { url, hits, auth }
}

/// A local URL nothing listens on.
pub fn dead_url() -> String {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    drop(listener);
    format!("http://{addr}/v1/complete")
}
