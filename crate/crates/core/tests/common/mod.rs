#![allow(dead_code)]

use std::io::{BufRead, BufReader, Read, Write};
use std::net::{TcpListener, TcpStream};
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::thread::{self, JoinHandle};

use relact::catalog::WorldConfig;
use relact::config::{DataSource, RunConfig};

/// A world small enough for multi-round engine tests in a few seconds.
pub fn tiny_world() -> WorldConfig {
    WorldConfig {
        broad_categories: 2,
        fine_per_broad: 3,
        items_per_fine: 8,
        tags_per_fine: 2,
        id_pairs: 120,
        ood_pairs: 60,
        ..WorldConfig::default()
    }
}

pub fn tiny_config(rounds: u32, seed: u64) -> RunConfig {
    let mut cfg = RunConfig::default();
    cfg.run.rounds = rounds;
    cfg.run.seed = seed;
    cfg.run.ensemble_size = 4;
    cfg.run.outer_folds = 3;
    cfg.sampling.per_category_queries = 4;
    cfg.sampling.per_query_candidates = 10;
    cfg.classifier.l2_grid = vec![1e-3, 1e-1];
    cfg.classifier.max_iters = 80;
    cfg.data = DataSource::Synthetic {
        seed: 7,
        world: tiny_world(),
    };
    cfg
}

pub struct Reply {
    pub status: u16,
    pub body: String,
}

impl Reply {
    pub fn completion(content: &str) -> Reply {
        Reply {
            status: 200,
            body: serde_json::json!({
                "choices": [{"message": {"role": "assistant", "content": content}}]
            })
            .to_string(),
        }
    }

    pub fn status(status: u16) -> Reply {
        Reply {
            status,
            body: "{\"error\":\"stub\"}".into(),
        }
    }
}

type Handler = dyn Fn(usize, &serde_json::Value) -> Reply + Send + Sync;

/// Minimal HTTP/1.1 chat-completion stub. Each connection carries one
/// request; the handler sees the request index and the JSON body.
pub struct StubServer {
    pub endpoint: String,
    hits: Arc<AtomicUsize>,
    bodies: Arc<Mutex<Vec<serde_json::Value>>>,
    stop: Arc<AtomicBool>,
    addr: std::net::SocketAddr,
    worker: Option<JoinHandle<()>>,
}

impl StubServer {
    pub fn start(handler: impl Fn(usize, &serde_json::Value) -> Reply + Send + Sync + 'static) -> StubServer {
        let listener = TcpListener::bind("127.0.0.1:0").expect("bind stub");
        let addr = listener.local_addr().unwrap();
        let hits = Arc::new(AtomicUsize::new(0));
        let bodies = Arc::new(Mutex::new(Vec::new()));
        let stop = Arc::new(AtomicBool::new(false));
        let handler: Arc<Handler> = Arc::new(handler);
        let worker = {
            let (hits, bodies, stop) = (hits.clone(), bodies.clone(), stop.clone());
            thread::spawn(move || {
                for conn in listener.incoming() {
                    if stop.load(Ordering::SeqCst) {
                        break;
                    }
                    let Ok(conn) = conn else { continue };
                    serve(conn, &hits, &bodies, handler.as_ref());
                }
            })
        };
        StubServer {
            endpoint: format!("http://{addr}/v1/chat/completions"),
            hits,
            bodies,
            stop,
            addr,
            worker: Some(worker),
        }
    }

    pub fn hits(&self) -> usize {
        self.hits.load(Ordering::SeqCst)
    }

    pub fn bodies(&self) -> Vec<serde_json::Value> {
        self.bodies.lock().unwrap().clone()
    }
}

impl Drop for StubServer {
    fn drop(&mut self) {
        self.stop.store(true, Ordering::SeqCst);
        let _ = TcpStream::connect(self.addr);
        if let Some(w) = self.worker.take() {
            let _ = w.join();
        }
    }
}

fn serve(conn: TcpStream, hits: &AtomicUsize, bodies: &Mutex<Vec<serde_json::Value>>, handler: &Handler) {
    let mut reader = BufReader::new(conn.try_clone().unwrap());
    let mut len = 0usize;
    let mut line = String::new();
    loop {
        line.clear();
        if reader.read_line(&mut line).unwrap_or(0) == 0 {
            return;
        }
        let l = line.trim_end();
        if l.is_empty() {
            break;
        }
        if let Some((k, v)) = l.split_once(':') {
            if k.eq_ignore_ascii_case("content-length") {
                len = v.trim().parse().unwrap_or(0);
            }
        }
    }
    let mut body = vec![0u8; len];
    if reader.read_exact(&mut body).is_err() {
        return;
    }
    let json: serde_json::Value = serde_json::from_slice(&body).unwrap_or(serde_json::Value::Null);
    let index = hits.fetch_add(1, Ordering::SeqCst);
    let reply = handler(index, &json);
    bodies.lock().unwrap().push(json);
    let mut conn = conn;
    let _ = write!(
        conn,
        "HTTP/1.1 {} Stub\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{}",
        reply.status,
        reply.body.len(),
        reply.body
    );
    let _ = conn.flush();
}

/// The user prompt of a captured chat-completion request body.
pub fn user_prompt(body: &serde_json::Value) -> &str {
    body.pointer("/messages/1/content").and_then(|v| v.as_str()).unwrap_or("")
}
