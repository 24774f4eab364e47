//! In-process chat-completions endpoint for tests and offline demos.
//!
//! The server runs on its own thread and runtime, records every request and
//! tracks how many were in flight at once.

use std::collections::HashMap;
use std::net::TcpListener;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;
use std::time::Duration;

use axum::extract::State;
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::post;
use axum::Router;
use serde_json::{json, Value};
use tokio::sync::oneshot;

use super::prompt::PromptTemplate;
use crate::dataset::PuzzleInstance;

pub const CHAT_PATH: &str = "/v1/chat/completions";

#[derive(Debug, Clone, PartialEq)]
pub struct MockRequest {
    /// Arrival order, from 0.
    pub index: usize,
    pub body: Value,
    pub authorization: Option<String>,
}

impl MockRequest {
    pub fn messages(&self) -> &[Value] {
        self.body["messages"].as_array().map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn prompt(&self) -> &str {
        self.messages().first().and_then(|m| m["content"].as_str()).unwrap_or("")
    }

    pub fn temperature(&self) -> Option<f64> {
        self.body["temperature"].as_f64()
    }

    pub fn model(&self) -> &str {
        self.body["model"].as_str().unwrap_or("")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum MockReply {
    /// 200 with this text as `choices[0].message.content`.
    Content(String),
    /// Error status, optionally with a Retry-After header in seconds.
    Status { status: u16, retry_after: Option<u64> },
    /// 200 with an arbitrary body.
    RawBody(String),
}

type Handler = dyn Fn(&MockRequest) -> MockReply + Send + Sync;

struct Shared {
    handler: Box<Handler>,
    latency: Duration,
    calls: Mutex<Vec<MockRequest>>,
    in_flight: AtomicUsize,
    max_in_flight: AtomicUsize,
}

pub struct MockServer {
    addr: std::net::SocketAddr,
    shared: Arc<Shared>,
    shutdown: Option<oneshot::Sender<()>>,
    thread: Option<JoinHandle<()>>,
}

impl MockServer {
    pub fn start(handler: impl Fn(&MockRequest) -> MockReply + Send + Sync + 'static) -> std::io::Result<Self> {
        MockServer::start_with_latency(handler, Duration::ZERO)
    }

    /// Every reply is delayed by `latency`, which makes request overlap
    /// observable.
    pub fn start_with_latency(
        handler: impl Fn(&MockRequest) -> MockReply + Send + Sync + 'static,
        latency: Duration,
    ) -> std::io::Result<Self> {
        let listener = TcpListener::bind("127.0.0.1:0")?;
        listener.set_nonblocking(true)?;
        let addr = listener.local_addr()?;
        let shared = Arc::new(Shared {
            handler: Box::new(handler),
            latency,
            calls: Mutex::new(Vec::new()),
            in_flight: AtomicUsize::new(0),
            max_in_flight: AtomicUsize::new(0),
        });
        let (tx, rx) = oneshot::channel::<()>();
        let runtime = tokio::runtime::Builder::new_multi_thread()
            .worker_threads(2)
            .enable_all()
            .build()?;
        let app = Router::new().route(CHAT_PATH, post(handle)).with_state(shared.clone());
        let thread = std::thread::spawn(move || {
            runtime.block_on(async move {
                let listener = tokio::net::TcpListener::from_std(listener).expect("listener registers with runtime");
                axum::serve(listener, app)
                    .with_graceful_shutdown(async {
                        let _ = rx.await;
                    })
                    .await
                    .expect("mock server runs");
            });
        });
        Ok(MockServer {
            addr,
            shared,
            shutdown: Some(tx),
            thread: Some(thread),
        })
    }

    /// Full chat-completions URL.
    pub fn url(&self) -> String {
        format!("http://{}{CHAT_PATH}", self.addr)
    }

    pub fn calls(&self) -> Vec<MockRequest> {
        self.shared.calls.lock().unwrap().clone()
    }

    pub fn request_count(&self) -> usize {
        self.shared.calls.lock().unwrap().len()
    }

    pub fn max_in_flight(&self) -> usize {
        self.shared.max_in_flight.load(Ordering::SeqCst)
    }
}

impl Drop for MockServer {
    fn drop(&mut self) {
        if let Some(tx) = self.shutdown.take() {
            let _ = tx.send(());
        }
        if let Some(thread) = self.thread.take() {
            let _ = thread.join();
        }
    }
}

async fn handle(State(shared): State<Arc<Shared>>, headers: axum::http::HeaderMap, body: String) -> Response {
    let now = shared.in_flight.fetch_add(1, Ordering::SeqCst) + 1;
    shared.max_in_flight.fetch_max(now, Ordering::SeqCst);

    let body = serde_json::from_str(&body).unwrap_or(Value::Null);
    let request = {
        let mut calls = shared.calls.lock().unwrap();
        let request = MockRequest {
            index: calls.len(),
            body,
            authorization: headers
                .get(header::AUTHORIZATION)
                .and_then(|v| v.to_str().ok())
                .map(str::to_string),
        };
        calls.push(request.clone());
        request
    };
    if !shared.latency.is_zero() {
        tokio::time::sleep(shared.latency).await;
    }
    let reply = (shared.handler)(&request);
    shared.in_flight.fetch_sub(1, Ordering::SeqCst);

    match reply {
        MockReply::Content(content) => {
            let body = json!({
                "id": format!("mock-{}", request.index),
                "object": "chat.completion",
                "model": request.model(),
                "choices": [{
                    "index": 0,
                    "message": {"role": "assistant", "content": content},
                    "finish_reason": "stop"
                }]
            });
            (StatusCode::OK, [(header::CONTENT_TYPE, "application/json")], body.to_string()).into_response()
        }
        MockReply::RawBody(body) => (StatusCode::OK, body).into_response(),
        MockReply::Status { status, retry_after } => {
            let status = StatusCode::from_u16(status).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR);
            let mut response = (status, "mock error").into_response();
            if let Some(secs) = retry_after {
                response.headers_mut().insert(header::RETRY_AFTER, secs.into());
            }
            response
        }
    }
}

/// Maps rendered prompts back to their instances so a handler can answer
/// with knowledge of the gold label.
#[derive(Debug, Clone)]
pub struct AnswerKey {
    by_prompt: HashMap<String, PuzzleInstance>,
}

impl AnswerKey {
    pub fn new(instances: &[PuzzleInstance], template: &PromptTemplate) -> Self {
        AnswerKey {
            by_prompt: instances
                .iter()
                .map(|i| (template.render(&i.question, &i.choices), i.clone()))
                .collect(),
        }
    }

    pub fn instance_for(&self, request: &MockRequest) -> Option<&PuzzleInstance> {
        self.by_prompt.get(request.prompt())
    }

    /// A handler that always answers with the gold choice.
    pub fn gold_responder(self) -> impl Fn(&MockRequest) -> MockReply + Send + Sync + 'static {
        move |request| match self.instance_for(request) {
            Some(instance) => MockReply::Content(format!("{{\"answer\": {}}}", instance.gold_index + 1)),
            None => MockReply::Content("I do not recognise this question.".into()),
        }
    }
}
