//! The retrieval cascade: intent-routed tables, exact concept match, QA
//! pairs, then web pages. Each dense stage is BM25 top-n, rerank, cutoff;
//! the first stage with evidence ends the cascade.

use serde::{Deserialize, Serialize};

use crate::docstore::{subset, CorpusSnapshot, DocKind, DocView, Document, Selector};
use crate::embed::{cosine_similarity, EmbeddingVector};
use crate::error::{Error, ProviderError, Result};
use crate::intent::IntentPrediction;
use crate::lang::NormalizedQuery;
use crate::lexical::Bm25Params;
use crate::providers::{CallCounts, RequestContext};
use crate::queryparse::{
    annotate, match_concept, reduce_to_command, CommandForm, LexiconAnnotator, ParseProvider,
};

pub const DEFAULT_TOP_N: usize = 10;
pub const DEFAULT_THRESHOLD: f64 = 0.1;

#[derive(Debug, Clone, Copy)]
pub struct ScoredDocument<'a> {
    pub doc: &'a Document,
    pub ordinal: u32,
    pub lexical_score: f64,
    /// Set by `rerank`.
    pub rerank_score: Option<f64>,
    /// Query/document cosine, also set by `rerank`.
    pub embed_score: Option<f64>,
}

impl ScoredDocument<'_> {
    pub fn score(&self) -> f64 {
        self.rerank_score.unwrap_or(f64::NEG_INFINITY)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Stage {
    TabularByIntent,
    ConceptMatch,
    QAPairs,
    WebPages,
    None,
}

impl Stage {
    /// Stages in cascade order (`None` is an outcome, not a stage).
    pub const ORDER: [Stage; 4] = [
        Stage::TabularByIntent,
        Stage::ConceptMatch,
        Stage::QAPairs,
        Stage::WebPages,
    ];
}

#[derive(Debug, Clone)]
pub struct EvidenceSet<'a> {
    pub items: Vec<ScoredDocument<'a>>,
    pub stage: Stage,
}

impl EvidenceSet<'_> {
    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn ids(&self) -> Vec<&str> {
        self.items.iter().map(|s| s.doc.id.as_str()).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub stage: Stage,
    pub executed: bool,
    pub candidates_considered: usize,
    pub survivors: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub skip_reason: Option<String>,
    #[serde(default)]
    pub provider_calls: CallCounts,
    /// Parse outcome of the concept stage.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub command: Option<CommandForm>,
}

impl StageRecord {
    fn skipped(stage: Stage, reason: impl Into<String>) -> Self {
        Self {
            stage,
            executed: false,
            candidates_considered: 0,
            survivors: 0,
            skip_reason: Some(reason.into()),
            provider_calls: CallCounts::default(),
            command: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CascadeTrace {
    pub trace_id: String,
    pub stages: Vec<StageRecord>,
    pub provider_call_counts: CallCounts,
}

impl CascadeTrace {
    pub fn stage(&self, s: Stage) -> Option<&StageRecord> {
        self.stages.iter().find(|r| r.stage == s)
    }
}

pub trait Reranker: Send + Sync {
    /// One score in [-1, 1] per document, in input order.
    fn rerank(
        &self,
        query: &str,
        documents: &[&str],
    ) -> std::result::Result<Vec<f64>, ProviderError>;
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThresholdOn {
    #[default]
    Rerank,
    Embed,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RetrievalParams {
    pub top_n: usize,
    pub threshold: f64,
    pub threshold_on: ThresholdOn,
    pub bm25: Bm25ParamsWire,
}

/// Serializable mirror of [`Bm25Params`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bm25ParamsWire {
    pub k1: f64,
    pub b: f64,
}

impl From<Bm25ParamsWire> for Bm25Params {
    fn from(w: Bm25ParamsWire) -> Self {
        Bm25Params { k1: w.k1, b: w.b }
    }
}

impl Default for RetrievalParams {
    fn default() -> Self {
        let d = Bm25Params::default();
        Self {
            top_n: DEFAULT_TOP_N,
            threshold: DEFAULT_THRESHOLD,
            threshold_on: ThresholdOn::Rerank,
            bm25: Bm25ParamsWire { k1: d.k1, b: d.b },
        }
    }
}

/// BM25 top-`n` over a view (statistics from the view itself).
pub fn lexical_retrieve<'a>(
    query: &str,
    view: &DocView<'a>,
    n: usize,
) -> Result<Vec<ScoredDocument<'a>>> {
    lexical_retrieve_with(query, view, n, Bm25Params::default())
}

pub fn lexical_retrieve_with<'a>(
    query: &str,
    view: &DocView<'a>,
    n: usize,
    params: Bm25Params,
) -> Result<Vec<ScoredDocument<'a>>> {
    let snap = view.snapshot();
    Ok(snap
        .lexical()
        .bm25(query, view.ordinals(), n, params)?
        .into_iter()
        .map(|(ordinal, score)| ScoredDocument {
            doc: snap.document(ordinal),
            ordinal,
            lexical_score: score,
            rerank_score: None,
            embed_score: None,
        })
        .collect())
}

fn sort_by_rerank(docs: &mut [ScoredDocument<'_>]) {
    docs.sort_by(|a, b| {
        b.score()
            .total_cmp(&a.score())
            .then_with(|| a.doc.id.cmp(&b.doc.id))
    });
}

fn valid_scores(scores: &[f64], n: usize) -> std::result::Result<(), String> {
    if scores.len() != n {
        return Err(format!("expected {n} scores, got {}", scores.len()));
    }
    match scores
        .iter()
        .find(|s| !s.is_finite() || **s < -1.0 || **s > 1.0)
    {
        Some(s) => Err(format!("score {s} outside [-1, 1]")),
        None => Ok(()),
    }
}

/// Scores candidates against the query. The default scorer is the cosine
/// between the query embedding and each stored document embedding.
pub fn rerank<'a>(
    query: &str,
    query_vec: &EmbeddingVector,
    mut docs: Vec<ScoredDocument<'a>>,
    reranker: Option<&dyn Reranker>,
    ctx: &mut RequestContext,
) -> Result<Vec<ScoredDocument<'a>>> {
    if docs.is_empty() {
        return Ok(docs);
    }
    ctx.call("rerank");
    for d in docs.iter_mut() {
        let emb = d.doc.embedding.as_ref().ok_or_else(|| {
            Error::CorruptStore(format!("document {} has no embedding", d.doc.id))
        })?;
        d.embed_score = Some(cosine_similarity(query_vec.values(), emb.values())?);
    }
    let remote = reranker.and_then(|r| {
        let texts: Vec<String> = docs.iter().map(|d| d.doc.indexed_text()).collect();
        let refs: Vec<&str> = texts.iter().map(String::as_str).collect();
        match r.rerank(query, &refs).and_then(|s| {
            valid_scores(&s, docs.len())
                .map(|_| s)
                .map_err(|m| ProviderError::new("rerank", m))
        }) {
            Ok(s) => Some(s),
            Err(e) => {
                ctx.fell_back(&e);
                None
            }
        }
    });
    match remote {
        Some(scores) => docs
            .iter_mut()
            .zip(scores)
            .for_each(|(d, s)| d.rerank_score = Some(s)),
        None => docs.iter_mut().for_each(|d| d.rerank_score = d.embed_score),
    }
    sort_by_rerank(&mut docs);
    Ok(docs)
}

/// Keeps documents scoring at least `tau` (inclusive).
pub fn apply_threshold<'a>(docs: Vec<ScoredDocument<'a>>, tau: f64) -> Vec<ScoredDocument<'a>> {
    apply_threshold_on(docs, tau, ThresholdOn::Rerank)
}

pub fn apply_threshold_on<'a>(
    docs: Vec<ScoredDocument<'a>>,
    tau: f64,
    on: ThresholdOn,
) -> Vec<ScoredDocument<'a>> {
    docs.into_iter()
        .filter(|d| {
            let s = match on {
                ThresholdOn::Rerank => d.rerank_score,
                ThresholdOn::Embed => d.embed_score,
            };
            s.is_some_and(|s| s >= tau)
        })
        .collect()
}

pub struct CascadeProviders<'p> {
    pub reranker: Option<&'p dyn Reranker>,
    pub parser: Option<&'p dyn ParseProvider>,
    pub annotator: &'p LexiconAnnotator,
}

fn dense_stage<'a>(
    stage: Stage,
    query: &str,
    query_vec: &EmbeddingVector,
    view: &DocView<'a>,
    providers: &CascadeProviders<'_>,
    params: &RetrievalParams,
    outer: &mut RequestContext,
) -> Result<(Vec<ScoredDocument<'a>>, StageRecord)> {
    let mut ctx = RequestContext::default();
    let (candidates, note) =
        match lexical_retrieve_with(query, view, params.top_n, params.bm25.into()) {
            Ok(c) => (c, None),
            Err(Error::EmptyQuery) => {
                (Vec::new(), Some("query has no indexable terms".to_string()))
            }
            Err(e) => return Err(e),
        };
    let considered = candidates.len();
    let reranked = rerank(query, query_vec, candidates, providers.reranker, &mut ctx)?;
    let survivors = apply_threshold_on(reranked, params.threshold, params.threshold_on);
    outer.fallbacks.extend(ctx.fallbacks);
    let record = StageRecord {
        stage,
        executed: true,
        candidates_considered: considered,
        survivors: survivors.len(),
        skip_reason: note,
        provider_calls: ctx.calls,
        command: None,
    };
    Ok((survivors, record))
}

/// Runs the cascade for one query. `ctx` receives the calls and fallbacks
/// of every executed stage.
#[allow(clippy::too_many_arguments)]
pub fn run_cascade<'a>(
    q: &NormalizedQuery,
    query_vec: &EmbeddingVector,
    intent: &IntentPrediction,
    snapshot: &'a CorpusSnapshot,
    providers: &CascadeProviders<'_>,
    params: &RetrievalParams,
    trace_id: &str,
    ctx: &mut RequestContext,
) -> Result<(EvidenceSet<'a>, CascadeTrace)> {
    let mut records: Vec<StageRecord> = Vec::with_capacity(4);
    let mut found: Option<EvidenceSet<'a>> = None;
    let query = q.pivot_text.as_str();

    for stage in Stage::ORDER {
        if let Some(ev) = &found {
            records.push(StageRecord::skipped(
                stage,
                format!("evidence found at {:?}", ev.stage),
            ));
            continue;
        }
        let (items, record) = match stage {
            Stage::TabularByIntent => {
                if intent.label.is_general() {
                    records.push(StageRecord::skipped(stage, "intent is General"));
                    continue;
                }
                let view = subset(snapshot, Selector::Intent(intent.label));
                dense_stage(stage, query, query_vec, &view, providers, params, ctx)?
            }
            Stage::ConceptMatch => {
                let mut local = RequestContext::default();
                let view = subset(snapshot, Selector::Kind(DocKind::Concept));
                let parse = annotate(query, providers.parser, providers.annotator, &mut local)?;
                let form = reduce_to_command(&parse);
                let hit = match_concept(&form, &view);
                let items: Vec<ScoredDocument<'a>> = hit
                    .map(|doc| ScoredDocument {
                        ordinal: snapshot
                            .documents()
                            .iter()
                            .position(|d| std::ptr::eq(d, doc))
                            .expect("view document belongs to snapshot")
                            as u32,
                        doc,
                        lexical_score: 0.0,
                        rerank_score: Some(1.0),
                        embed_score: None,
                    })
                    .into_iter()
                    .collect();
                let record = StageRecord {
                    stage,
                    executed: true,
                    candidates_considered: if form.is_simple() { view.len() } else { 0 },
                    survivors: items.len(),
                    skip_reason: (!form.is_simple())
                        .then(|| "query is not a simple command".to_string()),
                    provider_calls: local.calls.clone(),
                    command: Some(form),
                };
                ctx.fallbacks.extend(local.fallbacks);
                (items, record)
            }
            Stage::QAPairs | Stage::WebPages => {
                let kind = if stage == Stage::QAPairs {
                    DocKind::QaPair
                } else {
                    DocKind::WebPage
                };
                let view = subset(snapshot, Selector::Kind(kind));
                dense_stage(stage, query, query_vec, &view, providers, params, ctx)?
            }
            Stage::None => unreachable!("not a cascade stage"),
        };
        ctx.calls.merge(&record.provider_calls);
        if !items.is_empty() {
            found = Some(EvidenceSet { items, stage });
        }
        records.push(record);
    }
    let mut totals = CallCounts::default();
    for r in &records {
        totals.merge(&r.provider_calls);
    }
    let evidence = found.unwrap_or(EvidenceSet {
        items: Vec::new(),
        stage: Stage::None,
    });
    Ok((
        evidence,
        CascadeTrace {
            trace_id: trace_id.to_string(),
            stages: records,
            provider_call_counts: totals,
        },
    ))
}
