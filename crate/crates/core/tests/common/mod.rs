#![allow(dead_code)]

use std::net::TcpListener as StdListener;
use std::sync::Arc;

use axum::extract::{Path, State};
use axum::http::StatusCode;
use axum::routing::post;
use axum::{Json, Router};
use parking_lot::Mutex;
use serde::Deserialize;
use serde_json::Value;

/// 2025-10-09T...Z; later than every demo document.
pub const NOW: i64 = 1_760_000_000;

#[derive(Debug, Clone, Deserialize)]
pub struct Trilingual {
    pub id: String,
    pub zh: String,
    pub en: String,
    pub fr: String,
}

pub fn trilingual() -> Vec<Trilingual> {
    include_str!("../fixtures/trilingual.jsonl")
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).unwrap())
        .collect()
}

pub fn trilingual_query(id: &str, lang: &str) -> String {
    let t = trilingual().into_iter().find(|t| t.id == id).unwrap();
    match lang {
        "zh" => t.zh,
        "en" => t.en,
        "fr" => t.fr,
        _ => panic!("no {lang} column"),
    }
}

/// A URL nothing listens on.
pub fn dead_url() -> String {
    let l = StdListener::bind("127.0.0.1:0").unwrap();
    let port = l.local_addr().unwrap().port();
    drop(l);
    format!("http://127.0.0.1:{port}")
}

type Responder = dyn Fn(&str, &Value) -> (u16, Value) + Send + Sync;

/// HTTP provider stub: every `POST /{verb}` is recorded and answered by
/// the responder.
pub struct MockProvider {
    pub url: String,
    pub calls: Arc<Mutex<Vec<(String, Value)>>>,
}

#[derive(Clone)]
struct MockState {
    calls: Arc<Mutex<Vec<(String, Value)>>>,
    respond: Arc<Responder>,
}

async fn handle(
    State(s): State<MockState>,
    Path(verb): Path<String>,
    Json(body): Json<Value>,
) -> (StatusCode, Json<Value>) {
    s.calls.lock().push((verb.clone(), body.clone()));
    let (code, v) = (s.respond)(&verb, &body);
    (StatusCode::from_u16(code).unwrap(), Json(v))
}

impl MockProvider {
    pub fn start(respond: impl Fn(&str, &Value) -> (u16, Value) + Send + Sync + 'static) -> Self {
        let calls = Arc::new(Mutex::new(Vec::new()));
        let state = MockState {
            calls: calls.clone(),
            respond: Arc::new(respond),
        };
        let listener = StdListener::bind("127.0.0.1:0").unwrap();
        listener.set_nonblocking(true).unwrap();
        let url = format!("http://{}", listener.local_addr().unwrap());
        std::thread::spawn(move || {
            let rt = tokio::runtime::Builder::new_current_thread()
                .enable_all()
                .build()
                .unwrap();
            rt.block_on(async move {
                let app = Router::new()
                    .route("/{verb}", post(handle))
                    .with_state(state);
                let l = tokio::net::TcpListener::from_std(listener).unwrap();
                axum::serve(l, app).await.unwrap();
            });
        });
        Self { url, calls }
    }

    pub fn calls_to(&self, verb: &str) -> Vec<Value> {
        self.calls
            .lock()
            .iter()
            .filter(|(v, _)| v == verb)
            .map(|(_, b)| b.clone())
            .collect()
    }
}

/// Synthetic filler that shares vocabulary with the demo corpus, so that
/// every dense stage sees more lexical candidates than the top-n cut.
pub fn crowd_jsonl() -> String {
    let topics = [
        "图书馆",
        "食堂",
        "宿舍",
        "校园卡",
        "网络",
        "寒假",
        "报销",
        "教室",
    ];
    let asks = ["开放时间", "在哪里", "怎么办理", "什么时候", "需要什么材料"];
    let mut out = String::new();
    for i in 0..40 {
        let (t, a) = (topics[i % topics.len()], asks[i % asks.len()]);
        let qa = serde_json::json!({
            "id": format!("crowd-qa-{i:02}"), "kind": "qa_pair",
            "title": format!("{t}{a}？"), "body": format!("关于{t}{a}的说明第{i}条，请以学校通知为准。"),
            "timestamp": "2024-03-01",
        });
        let web = serde_json::json!({
            "id": format!("crowd-web-{i:02}"), "kind": "web_page",
            "title": format!("{t}通知（{i}）"), "body": format!("{t}相关安排：{a}请咨询服务中心，编号{i}。"),
            "timestamp": "2024-05-01",
        });
        out.push_str(&format!("{qa}\n{web}\n"));
    }
    for i in 0..12 {
        for (j, (class, t)) in [
            ("Inter-City Transportation Expense", "火车票"),
            ("Opening Schedule of Buildings", "图书馆"),
        ]
        .into_iter()
        .enumerate()
        {
            let tab = serde_json::json!({
                "id": format!("crowd-tab-{j}-{i:02}"), "kind": "tabular", "intent_tag": class,
                "table": {"caption": format!("{t}明细{i}"), "header": ["项目", "说明"], "rows": [[format!("{t}{i}"), "以通知为准"]]},
                "timestamp": "2024-06-01",
            });
            out.push_str(&format!("{tab}\n"));
        }
    }
    out
}

/// Demo corpus plus [`crowd_jsonl`].
pub fn crowded_engine() -> orient_core::service::Engine {
    let cfg = orient_core::service::Config {
        admin_token: Some("crowd".into()),
        ..Default::default()
    };
    let e = orient_core::service::Engine::from_config(cfg, NOW).unwrap();
    e.handle_ingest(&crowd_jsonl(), Some("crowd"), NOW).unwrap();
    e
}
