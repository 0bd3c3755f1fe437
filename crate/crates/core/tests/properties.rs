//! Property tests for the invariants of every stage.

mod common;

use std::collections::{BTreeMap, BTreeSet};
use std::sync::OnceLock;

use common::NOW;
use orient_core::assets::INTENT_TRAIN;
use orient_core::docstore::{ingest, refresh, subset, CorpusRecord, Selector};
use orient_core::error::ProviderError;
use orient_core::generation::{
    generate, render_prompt, render_time, select_block, EvidenceBlock, Generator, PromptBundle,
    INSTRUCTIONS, RECENCY_TIER,
};
use orient_core::intent::{
    build_intent_index, classify_intent, hic_candidates, read_labeled_jsonl, IntentIndex,
    IntentParams,
};
use orient_core::lang::{FrontDoor, LanguageDetector, NgramDetector};
use orient_core::lexical::{tokenize, Bm25Params, InvertedIndex};
use orient_core::providers::RequestContext;
use orient_core::queryparse::{
    annotate, match_concept, normalize_concept_key, reduce_to_command, Arc, CommandForm,
    CommandShape, CommandVariant, LexiconAnnotator, ParseResult, Pos, Relation, Token,
};
use orient_core::retrieval::{run_cascade, CascadeProviders, Reranker, RetrievalParams};
use orient_core::service::{ChatRequest, Engine};
use orient_core::toolplanner::{
    decode_component, plan_tools, render_links, Gazetteer, PlanInput, Planner, ProposedInvocation,
    ToolRegistry, ToolSpec,
};
use orient_core::{
    cosine_similarity, CorpusSnapshot, DocKind, Embedder, HashEmbedder, IntentClass, LanguageTag,
    Stage,
};
use proptest::prelude::*;
use proptest::sample::select;

fn crowded() -> &'static Engine {
    static E: OnceLock<Engine> = OnceLock::new();
    E.get_or_init(common::crowded_engine)
}

fn demo() -> &'static Engine {
    static E: OnceLock<Engine> = OnceLock::new();
    E.get_or_init(|| Engine::demo(NOW))
}

fn fixture_index() -> &'static IntentIndex {
    static I: OnceLock<IntentIndex> = OnceLock::new();
    I.get_or_init(|| {
        build_intent_index(
            &read_labeled_jsonl(INTENT_TRAIN).unwrap(),
            &HashEmbedder::default(),
        )
        .unwrap()
    })
}

// ---------------------------------------------------------------- lexical

/// Definitional BM25 over whitespace-split lowercase terms.
fn bm25_oracle(
    docs: &[Vec<String>],
    view: &[usize],
    query: &[String],
    k1: f64,
    b: f64,
) -> BTreeMap<usize, f64> {
    let n = view.len() as f64;
    let avgdl = view.iter().map(|&d| docs[d].len() as f64).sum::<f64>() / n;
    let mut out = BTreeMap::new();
    for &d in view {
        let dl = docs[d].len() as f64;
        let mut s = 0.0;
        for t in query {
            let df = view.iter().filter(|&&o| docs[o].contains(t)).count() as f64;
            if df == 0.0 {
                continue;
            }
            let tf = docs[d].iter().filter(|w| *w == t).count() as f64;
            let idf = (1.0 + (n - df + 0.5) / (df + 0.5)).ln();
            s += idf * (tf * (k1 + 1.0)) / (tf + k1 * (1.0 - b + b * dl / avgdl));
        }
        out.insert(d, s);
    }
    out
}

fn term() -> impl Strategy<Value = String> {
    (0..50usize).prop_map(|i| format!("w{i}"))
}

prop_compose! {
    fn corpus()(docs in prop::collection::vec(prop::collection::vec(term(), 1..30), 1..=20))
        (mask in prop::collection::vec(any::<bool>(), docs.len()), docs in Just(docs)) -> (Vec<Vec<String>>, Vec<usize>) {
        let mut view: Vec<usize> = (0..docs.len()).filter(|i| mask[*i]).collect();
        if view.is_empty() {
            view.push(0);
        }
        (docs, view)
    }
}

proptest! {
    #[test]
    fn bm25_matches_the_oracle(
        (docs, view) in corpus(),
        query in prop::collection::vec(term(), 1..6),
        n in 1usize..25,
        k1 in 0.5f64..2.0,
        b in 0.0f64..=1.0,
    ) {
        let ids: Vec<String> = (0..docs.len()).map(|i| format!("d{i:02}")).collect();
        let idx = InvertedIndex::build(ids.iter().map(String::as_str).zip(docs.iter().map(|d| d.join(" "))));
        let ords: Vec<u32> = view.iter().map(|&v| v as u32).collect();
        let got = idx.bm25(&query.join(" "), &ords, n, Bm25Params { k1, b }).unwrap();
        let want = bm25_oracle(&docs, &view, &query, k1, b);

        prop_assert_eq!(got.len(), n.min(view.len()));
        for (ord, score) in &got {
            let w = want[&(*ord as usize)];
            prop_assert!((score - w).abs() <= 1e-9, "doc {} got {} want {}", ord, score, w);
        }
        // the returned prefix is the oracle's ranking
        let mut ranked: Vec<(usize, f64)> = want.into_iter().collect();
        ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then(ids[a.0].cmp(&ids[b.0])));
        for (g, r) in got.iter().zip(&ranked) {
            prop_assert!((g.1 - r.1).abs() <= 1e-9);
        }
    }

    #[test]
    fn cosine_matches_long_hand(
        pair in (1usize..128).prop_flat_map(|n| (
            prop::collection::vec(-100.0f32..100.0, n),
            prop::collection::vec(-100.0f32..100.0, n),
        ))
    ) {
        let (a, b) = pair;
        let na: f64 = a.iter().map(|x| f64::from(*x).powi(2)).sum::<f64>().sqrt();
        let nb: f64 = b.iter().map(|x| f64::from(*x).powi(2)).sum::<f64>().sqrt();
        prop_assume!(na > 0.0 && nb > 0.0);
        let dot: f64 = a.iter().zip(&b).map(|(x, y)| f64::from(*x) * f64::from(*y)).sum();
        let got = cosine_similarity(&a, &b).unwrap();
        prop_assert!((got - dot / (na * nb)).abs() <= 1e-12);
    }

    #[test]
    fn tokenizer_is_lowercase_and_deterministic(s in "\\PC{0,40}") {
        let t = tokenize(&s);
        prop_assert_eq!(&t, &tokenize(&s));
        prop_assert!(t.iter().all(|w| !w.is_empty() && *w == w.to_lowercase()));
    }
}

// ---------------------------------------------------------------- cascade

fn query_pieces() -> Vec<String> {
    let mut v: Vec<String> = demo()
        .snapshot()
        .documents()
        .iter()
        .map(|d| d.title.clone())
        .collect();
    v.extend(
        [
            "在哪里",
            "怎么",
            "什么时候",
            "开放时间",
            "报销",
            "标准",
            "图书馆",
            "食堂",
            "宿舍",
            "网络",
            "介绍一下",
            "如果",
            "寒假",
            "xyzzy",
            "library",
            "火星",
            "的",
            "可以吗",
            "多少钱",
            "校园卡",
            "人最少",
        ]
        .map(String::from),
    );
    v
}

fn cascade_query() -> impl Strategy<Value = String> {
    prop::collection::vec(select(query_pieces()), 1..4).prop_map(|p| p.concat())
}

/// Deterministic scores spread over [-1, 1], with exact hits on the cutoff.
struct SpreadReranker;

impl Reranker for SpreadReranker {
    fn rerank(&self, query: &str, documents: &[&str]) -> Result<Vec<f64>, ProviderError> {
        Ok(documents
            .iter()
            .map(|d| {
                let h = query
                    .bytes()
                    .chain(d.bytes())
                    .fold(0xcbf29ce484222325u64, |h, b| {
                        (h ^ u64::from(b)).wrapping_mul(0x100000001b3)
                    });
                match h % 7 {
                    0 => 0.1,
                    1 => 0.1 - 1e-12,
                    _ => (h % 2001) as f64 / 1000.0 - 1.0,
                }
            })
            .collect())
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn served_evidence_respects_cutoff_and_width(q in cascade_query(), remote in any::<bool>()) {
        let snapshot = crowded().snapshot();
        let front = FrontDoor::builtin();
        let mut ctx = RequestContext::default();
        let nq = front.normalize_query(&q, NOW, None, None, &mut ctx).unwrap();
        let e = HashEmbedder::default();
        let v = e.embed_one(&nq.pivot_text).unwrap();
        let intent = classify_intent(&nq.pivot_text, &v, crowded().intent_index(), &IntentParams::default(), None, &mut ctx).unwrap();
        let annotator = LexiconAnnotator::bundled();
        let providers = CascadeProviders {
            reranker: if remote { Some(&SpreadReranker) } else { None },
            parser: None,
            annotator: &annotator,
        };
        let params = RetrievalParams::default();
        let (ev, trace) = run_cascade(&nq, &v, &intent, &snapshot, &providers, &params, "t", &mut ctx).unwrap();

        for rec in trace.stages.iter().filter(|r| r.executed && r.stage != Stage::ConceptMatch) {
            prop_assert!(rec.candidates_considered <= 10, "{:?}", rec);
        }
        if ev.stage != Stage::ConceptMatch {
            for item in &ev.items {
                prop_assert!(item.rerank_score.unwrap() >= 0.1, "{} {:?}", item.doc.id, item.rerank_score);
            }
        }
        // complex parses never short-circuit
        if let Some(c) = trace.stage(Stage::ConceptMatch) {
            if c.command.as_ref().is_some_and(|f| !f.is_simple()) {
                prop_assert_eq!(c.survivors, 0);
                prop_assert_ne!(ev.stage, Stage::ConceptMatch);
            }
        }
        // skip discipline
        if let Some(hit) = Stage::ORDER.iter().position(|s| *s == ev.stage) {
            for s in &Stage::ORDER[hit + 1..] {
                let r = trace.stage(*s).unwrap();
                prop_assert!(!r.executed);
                prop_assert!(r.provider_calls.is_empty());
            }
        }
        // determinism
        let mut ctx2 = RequestContext::default();
        let (ev2, trace2) = run_cascade(&nq, &v, &intent, &snapshot, &providers, &params, "t", &mut ctx2).unwrap();
        prop_assert_eq!(trace, trace2);
        let scores = |e: &orient_core::EvidenceSet<'_>| e.items.iter().map(|s| (s.doc.id.clone(), s.rerank_score)).collect::<Vec<_>>();
        prop_assert_eq!(scores(&ev), scores(&ev2));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn chats_keep_language_defaults_and_phase_order(q in cascade_query()) {
        let e = demo();
        let r = e.handle_chat(&ChatRequest { message: q.clone(), ..Default::default() }, NOW).unwrap();
        let t = e.get_trace(&r.response.trace_id).unwrap();
        prop_assert_eq!(&r.response.language, &t.language);
        let phases: Vec<&str> = t.phases.iter().map(|p| p.name.as_str()).collect();
        prop_assert_eq!(phases, ["preliminary", "retrieval", "post_processing"]);
        prop_assert_eq!((t.params.k, t.params.top_n, t.params.threshold), (50, 10, 0.1));
        for link in &r.response.tool_links {
            prop_assert!(ToolRegistry::bundled().get(&link.tool_name).is_some());
        }
        let again = e.handle_chat(&ChatRequest { message: q, ..Default::default() }, NOW).unwrap();
        prop_assert_eq!(&again.response.text, &r.response.text);
        prop_assert_eq!(&again.response.references, &r.response.references);
        prop_assert_eq!(again.stage, r.stage);
    }
}

// ---------------------------------------------------------------- intent

fn fixture_query() -> impl Strategy<Value = String> {
    let texts: Vec<String> = fixture_index()
        .examples()
        .iter()
        .map(|e| e.query_text.clone())
        .collect();
    prop_oneof![
        select(texts.clone()),
        (select(texts), "\\PC{0,8}").prop_map(|(t, s)| format!("{s}{t}")),
        "\\PC{1,20}",
    ]
}

proptest! {
    #[test]
    fn hic_candidates_are_contained_and_monotone(q in fixture_query(), k1 in 1usize..300, k2 in 1usize..300) {
        let index = fixture_index();
        let Ok(v) = HashEmbedder::default().embed_one(&q) else { return Ok(()) };
        let labels = index.labels();
        let (lo, hi) = (k1.min(k2), k1.max(k2));
        let a = hic_candidates(index, &v, lo).unwrap();
        let b = hic_candidates(index, &v, hi).unwrap();
        prop_assert!(a.classes.is_subset(&labels));
        prop_assert!(a.classes.is_subset(&b.classes));
        let from_neighbors: BTreeSet<IntentClass> = a.neighbors.iter().map(|n| n.label).collect();
        prop_assert_eq!(&a.classes, &from_neighbors);
        prop_assert!(a.neighbors.windows(2).all(|w| w[0].score > w[1].score || (w[0].score == w[1].score && w[0].id < w[1].id)));
        prop_assert_eq!(hic_candidates(index, &v, index.len()).unwrap().classes, labels);
    }

    #[test]
    fn training_examples_recall_themselves(i in 0usize..286, k in 1usize..60) {
        let index = fixture_index();
        let ex = &index.examples()[i % index.len()];
        let c = hic_candidates(index, &ex.embedding, k).unwrap();
        prop_assert!(c.classes.contains(&ex.label));
    }

    #[test]
    fn prediction_stays_inside_candidates(q in fixture_query(), k in 1usize..100, k_vote in 1usize..9) {
        let index = fixture_index();
        let Ok(v) = HashEmbedder::default().embed_one(&q) else { return Ok(()) };
        let p = IntentParams { k, k_vote, gate: 0.35 };
        let pred = classify_intent(&q, &v, index, &p, None, &mut RequestContext::default()).unwrap();
        prop_assert!(pred.label.is_general() || pred.candidates.classes.contains(&pred.label));
        prop_assert!((0.0..=1.0).contains(&pred.confidence));
    }
}

// ---------------------------------------------------------------- docstore

fn class_name() -> impl Strategy<Value = Option<String>> {
    prop_oneof![
        Just(None),
        Just(Some("General".to_string())),
        select(IntentClass::TABULAR.to_vec()).prop_map(|c| Some(c.name().to_string())),
    ]
}

fn record(id: usize) -> impl Strategy<Value = serde_json::Value> {
    (
        select(vec!["concept", "qa_pair", "web_page", "tabular"]),
        class_name(),
        "[a-z食堂图书馆 ]{1,30}",
        any::<bool>(),
        prop::option::of(select(vec!["https://a.example/1", "https://a.example/2"])),
        prop::option::of(1_600_000_000i64..1_760_000_000),
    )
        .prop_map(move |(kind, tag, body, as_table, url, ts)| {
            let mut r = serde_json::json!({"id": format!("r{id:03}"), "kind": kind, "title": format!("标题{id}")});
            if kind == "tabular" && as_table {
                r["table"] = serde_json::json!({"caption": "表", "header": ["a", "b"], "rows": [[body.clone(), "x"]]});
            } else {
                r["body"] = serde_json::Value::String(body);
            }
            if let Some(t) = tag {
                r["intent_tag"] = t.into();
            }
            if let Some(u) = url {
                r["source_url"] = u.into();
            }
            if let Some(t) = ts {
                r["timestamp"] = t.into();
            }
            r
        })
}

fn records() -> impl Strategy<Value = Vec<serde_json::Value>> {
    (1usize..16).prop_flat_map(|n| (0..n).map(record).collect::<Vec<_>>())
}

fn accepted(values: &[serde_json::Value]) -> Vec<CorpusRecord> {
    values
        .iter()
        .map(|v| serde_json::from_value::<CorpusRecord>(v.clone()).unwrap())
        .filter(|r| r.clone().into_document(NOW).is_ok())
        .collect()
}

fn fingerprint(s: &CorpusSnapshot) -> String {
    let docs: Vec<(String, Vec<f32>)> = s
        .documents()
        .iter()
        .map(|d| {
            (
                serde_json::to_string(d).unwrap(),
                d.embedding.as_ref().unwrap().values().to_vec(),
            )
        })
        .collect();
    format!("{docs:?}{}{}", s.built_at(), s.embedder_id())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn documents_couple_kind_and_intent(values in records()) {
        for v in &values {
            let r: CorpusRecord = serde_json::from_value(v.clone()).unwrap();
            if let Ok(d) = r.into_document(NOW) {
                match d.kind {
                    DocKind::Tabular => prop_assert!(d.intent_tag.is_some_and(|t| !t.is_general())),
                    _ => prop_assert!(d.intent_tag.is_none()),
                }
                prop_assert!(d.timestamp > 0);
            }
        }
    }

    #[test]
    fn views_are_sound_and_complete(values in records()) {
        let snap = ingest(accepted(&values), &HashEmbedder::default(), NOW).unwrap();
        let mut selectors: Vec<Selector> = DocKind::ALL.iter().map(|k| Selector::Kind(*k)).collect();
        selectors.extend(IntentClass::TABULAR.iter().map(|c| Selector::Intent(*c)));
        for sel in selectors {
            let view = subset(&snap, sel);
            let want: Vec<u32> = snap
                .documents()
                .iter()
                .enumerate()
                .filter(|(_, d)| match sel {
                    Selector::Kind(k) => d.kind == k,
                    Selector::Intent(c) => d.kind == DocKind::Tabular && d.intent_tag == Some(c),
                })
                .map(|(i, _)| i as u32)
                .collect();
            prop_assert_eq!(view.ordinals(), want.as_slice());
        }
    }

    #[test]
    fn refresh_leaves_the_old_snapshot_alone(a in records(), b in records()) {
        let e = HashEmbedder::default();
        let old = ingest(accepted(&a), &e, NOW).unwrap();
        let before = fingerprint(&old);
        let out = refresh(&old, accepted(&b), &e, NOW + 60).unwrap();
        prop_assert_eq!(fingerprint(&old), before);
        prop_assert!(out.snapshot.len() <= old.len() + out.added);
        // byte-identical recrawls of one url collapse to one copy
        let mut seen = BTreeSet::new();
        for d in out.snapshot.documents() {
            if let Some(u) = &d.source_url {
                prop_assert!(seen.insert((u.clone(), d.body.clone())), "duplicate {} {}", u, d.id);
            }
        }
    }
}

// ---------------------------------------------------------------- query parse

fn pos() -> impl Strategy<Value = Pos> {
    select(vec![Pos::Noun, Pos::Verb, Pos::Other])
}

fn relation() -> impl Strategy<Value = Relation> {
    select(vec![
        Relation::Subject,
        Relation::Predicate,
        Relation::Object,
        Relation::Clause,
        Relation::OtherConstituent,
    ])
}

fn parse() -> impl Strategy<Value = ParseResult> {
    (1usize..7)
        .prop_flat_map(|n| {
            (
                prop::collection::vec(("[a-z]{1,6}", pos()), n),
                prop::collection::vec((0..n, 0..n, relation()), 0..n + 2),
            )
        })
        .prop_map(|(toks, arcs)| {
            let tokens: Vec<Token> = toks
                .into_iter()
                .enumerate()
                .map(|(index, (surface, pos))| Token {
                    surface,
                    pos,
                    index,
                })
                .collect();
            let mut kept: Vec<Arc> = Vec::new();
            for (head, dep, rel) in arcs {
                let a = Arc { head, dep, rel };
                let mut trial = kept.clone();
                trial.push(a);
                if ParseResult::new(tokens.clone(), trial, "prop").is_ok() {
                    kept.push(a);
                }
            }
            ParseResult::new(tokens, kept, "prop").unwrap()
        })
}

fn concept_key() -> impl Strategy<Value = String> {
    let titles: Vec<String> = demo()
        .snapshot()
        .documents()
        .iter()
        .filter(|d| d.kind == DocKind::Concept)
        .map(|d| d.title.clone())
        .collect();
    prop_oneof![
        (
            select(titles.clone()),
            select(vec!["", "？", "?", " ", "。", "!!"]),
            any::<bool>()
        )
            .prop_map(|(t, p, up)| format!("  {}{p}", if up { t.to_uppercase() } else { t })),
        select(titles).prop_map(|t| t.chars().skip(1).collect()),
        "\\PC{1,12}",
    ]
}

proptest! {
    #[test]
    fn annotation_is_deterministic(s in "\\PC{1,40}") {
        prop_assume!(!s.trim().is_empty());
        let a = LexiconAnnotator::bundled();
        let p1 = annotate(&s, None, &a, &mut RequestContext::default()).unwrap();
        let p2 = annotate(&s, None, &a, &mut RequestContext::default()).unwrap();
        prop_assert_eq!(reduce_to_command(&p1), reduce_to_command(&p2));
        prop_assert_eq!(p1, p2);
    }

    #[test]
    fn a_clause_arc_forces_complex(p in parse(), head in 0usize..7, dep in 0usize..7) {
        let n = p.tokens().len();
        let q = p.with_arc(Arc { head: head % n, dep: dep % n, rel: Relation::Clause }).unwrap();
        prop_assert_eq!(reduce_to_command(&q).variant, CommandVariant::Complex);
    }

    #[test]
    fn concept_matches_are_sound(key in concept_key(), nouns in any::<bool>()) {
        let snap = demo().snapshot();
        let view = subset(&snap, Selector::Kind(DocKind::Concept));
        let parts: Vec<String> = if nouns { key.split_whitespace().map(String::from).collect() } else { Vec::new() };
        let form = CommandForm {
            variant: CommandVariant::Simple,
            key: Some(key.clone()),
            shape: Some(if nouns { CommandShape::NounsOnly } else { CommandShape::VO }),
            nouns: parts.clone(),
        };
        if let Some(d) = match_concept(&form, &view) {
            let t = normalize_concept_key(&d.title);
            let k = normalize_concept_key(&key);
            prop_assert!(t == k || parts.iter().any(|p| normalize_concept_key(p) == t), "{:?} vs {:?}", d.title, key);
            prop_assert_eq!(d.kind, DocKind::Concept);
        }
        prop_assert!(match_concept(&CommandForm::complex(), &view).is_none());
    }
}

// ---------------------------------------------------------------- generation

prop_compose! {
    fn blocks()(n in 1usize..8)
        (scores in prop::collection::vec(select(vec![0.1, 0.5, 0.52, 0.55, 0.56, 0.8, 0.83, 0.9]), n),
         stamps in prop::collection::vec(select(vec![1_700_000_000i64, 1_710_000_000, 1_720_000_000, 1_730_000_000]), n),
         order in Just((0..n).collect::<Vec<_>>()).prop_shuffle())
        -> Vec<EvidenceBlock> {
        order
            .into_iter()
            .map(|i| EvidenceBlock {
                doc_id: format!("doc-{}", (b'a' + i as u8) as char),
                kind: DocKind::WebPage,
                title: "通知".into(),
                timestamp: render_time(stamps[i]),
                timestamp_inferred: false,
                content: "内容".into(),
                score: scores[i],
                timestamp_secs: stamps[i],
            })
            .collect()
    }
}

fn bundle(blocks: Vec<EvidenceBlock>) -> PromptBundle {
    PromptBundle {
        current_time: render_time(NOW),
        query_pivot: "寒假什么时候开始".into(),
        evidence_blocks: blocks,
        instructions: INSTRUCTIONS.into(),
    }
}

struct ClaimsIds(Vec<String>);

impl Generator for ClaimsIds {
    fn generate(&self, _: &PromptBundle) -> Result<(String, Vec<String>), ProviderError> {
        Ok(("回答".into(), self.0.clone()))
    }
}

proptest! {
    #[test]
    fn recency_rule_picks_the_newest_in_the_top_tier(bs in blocks()) {
        let got = select_block(&bs).unwrap();
        let best = bs.iter().map(|b| b.score).fold(f64::MIN, f64::max);
        let mut want = None::<&EvidenceBlock>;
        for b in &bs {
            if b.score < best - RECENCY_TIER {
                continue;
            }
            want = match want {
                Some(w) if w.timestamp_secs > b.timestamp_secs => Some(w),
                Some(w) if w.timestamp_secs == b.timestamp_secs && w.doc_id < b.doc_id => Some(w),
                _ => Some(b),
            };
        }
        prop_assert_eq!(&bs[got].doc_id, &want.unwrap().doc_id);
    }

    #[test]
    fn every_timestamp_is_rendered_once(n in 1usize..8, content in "[a-z食堂 ]{0,30}") {
        let stamps: Vec<i64> = (0..n as i64).map(|i| 1_600_000_000 + i * 86_400 * 40).collect();
        let bs: Vec<EvidenceBlock> = stamps
            .iter()
            .enumerate()
            .map(|(i, t)| EvidenceBlock {
                doc_id: format!("doc-{}", (b'a' + i as u8) as char),
                kind: DocKind::QaPair,
                title: content.clone(),
                timestamp: render_time(*t),
                timestamp_inferred: i % 2 == 0,
                content: content.clone(),
                score: 0.5,
                timestamp_secs: *t,
            })
            .collect();
        let b = bundle(bs);
        let text = render_prompt(&b);
        for t in &stamps {
            prop_assert_eq!(text.matches(&render_time(*t)).count(), 1);
        }
        prop_assert_eq!(text.matches(&b.current_time).count(), 1);
    }

    #[test]
    fn claimed_references_are_always_evidence(bs in blocks(), claims in prop::collection::vec("doc-[a-k]", 0..6)) {
        let b = bundle(bs);
        let d = generate(&b, Some(&ClaimsIds(claims)), &mut RequestContext::default());
        let ids: BTreeSet<&str> = b.evidence_blocks.iter().map(|x| x.doc_id.as_str()).collect();
        prop_assert!(d.used_doc_ids.iter().all(|u| ids.contains(u.as_str())));
        let uniq: BTreeSet<&String> = d.used_doc_ids.iter().collect();
        prop_assert_eq!(uniq.len(), d.used_doc_ids.len());
    }
}

// ---------------------------------------------------------------- tools

fn query_args(url: &str) -> BTreeMap<String, String> {
    url.split_once('?')
        .map(|(_, q)| {
            q.split('&')
                .filter_map(|kv| kv.split_once('='))
                .map(|(k, v)| (k.to_string(), decode_component(v)))
                .collect()
        })
        .unwrap_or_default()
}

struct Proposes(Vec<ProposedInvocation>);

impl Planner for Proposes {
    fn plan(&self, _: &str, _: &[ToolSpec]) -> Result<Vec<ProposedInvocation>, ProviderError> {
        Ok(self.0.clone())
    }
}

fn proposal() -> impl Strategy<Value = ProposedInvocation> {
    (
        select(vec![
            "Navigation",
            "Busy Index of Canteen",
            "Available Classrooms",
            "Teleport",
            "navigation",
        ]),
        prop::collection::btree_map(select(vec!["location_name", "q", "x"]), "\\PC{0,8}", 0..3),
    )
        .prop_map(|(tool, args)| ProposedInvocation {
            tool: tool.into(),
            args: args.into_iter().map(|(k, v)| (k.to_string(), v)).collect(),
        })
}

proptest! {
    #[test]
    fn place_names_survive_the_url(place in "\\PC{1,16}", filler in "[a-z ]{0,10}") {
        prop_assume!(!place.trim().is_empty());
        let place = place.trim().to_string();
        let registry = ToolRegistry::bundled();
        let gaz = Gazetteer::new([place.clone()]);
        let draft = format!("{filler}{place}{filler}");
        let input = PlanInput { draft: &draft, query_pivot: "", evidence_titles: &[] };
        let inv = plan_tools(&input, &registry, &gaz, None, &mut RequestContext::default());
        prop_assert_eq!(&inv, &plan_tools(&input, &registry, &gaz, None, &mut RequestContext::default()));
        let links = render_links(&inv, &registry);
        let nav: Vec<_> = links.iter().filter(|l| l.tool_name == "Navigation").collect();
        prop_assert_eq!(nav.len(), 1);
        let args = query_args(&nav[0].url);
        prop_assert_eq!(args.get("q"), Some(&place));
    }

    #[test]
    fn only_registered_valid_invocations_render(ps in prop::collection::vec(proposal(), 0..6)) {
        let registry = ToolRegistry::bundled();
        let inv = plan_tools(
            &PlanInput { draft: "", query_pivot: "", evidence_titles: &[] },
            &registry,
            &Gazetteer::default(),
            Some(&Proposes(ps.clone())),
            &mut RequestContext::default(),
        );
        let links = render_links(&inv, &registry);
        for l in &links {
            let spec = registry.get(&l.tool_name);
            prop_assert!(spec.is_some());
            let origin = ps.iter().find(|p| p.tool == l.tool_name && {
                let want: BTreeSet<&str> = spec.unwrap().invocation.params.iter().map(|x| x.name.as_str()).collect();
                p.args.keys().map(String::as_str).collect::<BTreeSet<_>>() == want
                    && p.args.values().all(|v| !v.trim().is_empty())
            });
            prop_assert!(origin.is_some(), "{:?} has no valid proposal", l);
        }
        let distinct: BTreeSet<(&str, &str)> = links.iter().map(|l| (l.tool_name.as_str(), l.url.as_str())).collect();
        prop_assert_eq!(distinct.len(), links.len());
    }
}

// ---------------------------------------------------------------- language

proptest! {
    #[test]
    fn detection_is_deterministic_and_well_formed(s in "\\PC{0,60}") {
        let d = NgramDetector::bundled();
        match (d.detect(&s), d.detect(&s)) {
            (Ok(a), Ok(b)) => {
                prop_assert_eq!(&a, &b);
                let tag = a.tag.as_str();
                prop_assert!((2..=3).contains(&tag.len()) && tag.bytes().all(|c| c.is_ascii_lowercase()));
                if let Some((_, c)) = a.runner_up {
                    prop_assert!(a.confidence >= c);
                }
            }
            (Err(_), Err(_)) => prop_assert!(s.trim().is_empty()),
            _ => prop_assert!(false, "detector disagreed with itself"),
        }
    }

    #[test]
    fn pivot_language_text_is_untouched(s in "[\\u4e00-\\u9fa5]{4,20}[，。？ a-z0-9]{0,3}", any_text in "\\PC{1,30}") {
        let front = FrontDoor::builtin();
        let q = front.normalize_query(&s, NOW, None, None, &mut RequestContext::default()).unwrap();
        prop_assert_eq!(&q.user_lang, &LanguageTag::zh());
        prop_assert_eq!(q.pivot_text.as_bytes(), s.as_bytes());
        prop_assume!(!any_text.trim().is_empty());
        let forced = front
            .normalize_query(&any_text, NOW, Some(&LanguageTag::zh()), None, &mut RequestContext::default())
            .unwrap();
        prop_assert_eq!(forced.pivot_text, any_text);
    }
}
