//! Workloads shared by the benches.

use orient_core::docstore::{parse_records, CorpusRecord};

pub const NOW: i64 = 1_760_000_000;

const TOPICS: [&str; 12] = [
    "图书馆",
    "食堂",
    "宿舍",
    "校园卡",
    "网络",
    "寒假",
    "报销",
    "教室",
    "体育馆",
    "医院",
    "选课",
    "奖学金",
];
const ASKS: [&str; 6] = [
    "开放时间",
    "在哪里",
    "怎么办理",
    "什么时候",
    "需要什么材料",
    "联系电话",
];

/// The bundled demo corpus followed by `n` generated QA pairs and pages.
pub fn corpus(n: usize) -> Vec<CorpusRecord> {
    let mut text = orient_core::assets::DEMO_CORPUS.to_string();
    for i in 0..n {
        let (t, a) = (
            TOPICS[i % TOPICS.len()],
            ASKS[(i / TOPICS.len()) % ASKS.len()],
        );
        let (kind, id) = if i % 2 == 0 {
            ("qa_pair", "qa")
        } else {
            ("web_page", "web")
        };
        let rec = serde_json::json!({
            "id": format!("gen-{id}-{i:05}"),
            "kind": kind,
            "title": format!("{t}{a}（{i}）"),
            "body": format!("关于{t}{a}：请在工作日到服务中心咨询，第{i}号说明，以学校最新通知为准。"),
            "timestamp": 1_700_000_000 + i as i64 * 3_600,
        });
        text.push('\n');
        text.push_str(&rec.to_string());
    }
    parse_records(&text).expect("generated records are valid")
}

/// Queries mixing hits, near misses and out-of-domain text.
pub fn queries() -> Vec<String> {
    let mut q: Vec<String> = TOPICS
        .iter()
        .zip(ASKS.iter().cycle())
        .map(|(t, a)| format!("{t}{a}？"))
        .collect();
    q.extend(
        [
            "新园食堂在哪里？",
            "一等座火车票可以报销吗？",
            "火星殖民计划的推进",
        ]
        .map(String::from),
    );
    q
}
