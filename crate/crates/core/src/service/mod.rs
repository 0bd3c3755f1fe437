//! Pipeline orchestration behind the HTTP API and the CLI.

mod config;
pub mod http;
mod trace;

use std::collections::{BTreeMap, HashSet};
use std::path::Path;
use std::sync::Arc;
use std::time::{Duration, Instant};

use arc_swap::ArcSwap;
use parking_lot::Mutex;
use serde::{Deserialize, Serialize};

pub use config::{Config, ENV_PREFIX};
pub use trace::{IntentSummary, ObservedParams, PhaseRecord, RequestTrace, TraceStore};

use crate::docstore::{self, CorpusRecord, CorpusSnapshot, DocKind, KindCounts, LineError};
use crate::embed::{Embedder, HashEmbedder};
use crate::error::Error;
use crate::generation::{
    assemble_prompt, fallback_response, finalize, generate, FinalResponse, Generator,
};
use crate::intent::{
    build_intent_index, classify_intent, read_labeled_jsonl, IntentClassifier, IntentIndex,
};
use crate::lang::{FrontDoor, LanguageTag, NgramDetector, PhraseTable, Translator};
use crate::providers::{
    HttpEmbedder, HttpEndpoint, HttpGenerator, HttpIntentClassifier, HttpParser, HttpPlanner,
    HttpReranker, HttpTranslator, RequestContext,
};
use crate::queryparse::{LexiconAnnotator, ParseProvider};
use crate::retrieval::{run_cascade, CascadeProviders, Reranker, Stage};
use crate::toolplanner::{plan_tools, render_links, Gazetteer, PlanInput, Planner, ToolRegistry};

pub const MAX_MESSAGE_CHARS: usize = 8192;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub message: String,
    #[serde(default)]
    pub session_id: Option<String>,
    /// Used when detection is undetermined.
    #[serde(default)]
    pub client_locale_hint: Option<String>,
    /// Skips detection entirely.
    #[serde(default)]
    pub lang: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatResponseWire {
    #[serde(flatten)]
    pub response: FinalResponse,
    pub stage: Stage,
    pub latency_ms: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestSummary {
    pub added: usize,
    pub deduplicated: usize,
    pub replaced: usize,
    pub total: usize,
    pub counts: KindCounts,
    pub built_at: i64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProviderState {
    Up,
    Down,
    Builtin,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Health {
    pub status: String,
    pub snapshot_counts: KindCounts,
    pub providers: BTreeMap<String, ProviderState>,
    pub embedder_id: String,
}

#[derive(Debug, thiserror::Error)]
pub enum ServiceError {
    #[error("{0}")]
    BadRequest(String),
    #[error("missing or wrong admin token")]
    Unauthorized,
    #[error("ingest is disabled")]
    Forbidden,
    #[error("{0}")]
    NotFound(String),
    #[error("{} invalid line(s)", .0.len())]
    Unprocessable(Vec<LineError>),
    #[error("{0}")]
    Unavailable(String),
    #[error("{0}")]
    Internal(String),
}

impl ServiceError {
    pub fn status(&self) -> u16 {
        match self {
            Self::BadRequest(_) => 400,
            Self::Unauthorized => 401,
            Self::Forbidden => 403,
            Self::NotFound(_) => 404,
            Self::Unprocessable(_) => 422,
            Self::Unavailable(_) => 503,
            Self::Internal(_) => 500,
        }
    }
}

impl From<Error> for ServiceError {
    fn from(e: Error) -> Self {
        match e {
            Error::EmptyText | Error::InvalidRequest(_) | Error::InvalidLanguageTag(_) => {
                Self::BadRequest(e.to_string())
            }
            Error::ProviderUnavailable(_) | Error::DimensionMismatch { .. } | Error::ZeroVector => {
                Self::Unavailable(e.to_string())
            }
            other => Self::Internal(other.to_string()),
        }
    }
}

/// Everything that changes together on ingest.
struct Serving {
    snapshot: CorpusSnapshot,
    annotator: LexiconAnnotator,
    gazetteer: Gazetteer,
}

impl Serving {
    fn new(
        snapshot: CorpusSnapshot,
        base_lexicon: &LexiconAnnotator,
        base_gazetteer: &Gazetteer,
    ) -> Self {
        let mut annotator = base_lexicon.clone();
        for d in snapshot
            .documents()
            .iter()
            .filter(|d| d.kind == DocKind::Concept)
        {
            annotator.add_noun(&d.title);
        }
        let mut gazetteer = base_gazetteer.clone();
        gazetteer.extend(snapshot.location_names());
        Self {
            snapshot,
            annotator,
            gazetteer,
        }
    }
}

#[derive(Default)]
struct Remotes {
    classifier: Option<Box<dyn IntentClassifier>>,
    reranker: Option<Box<dyn Reranker>>,
    parser: Option<Box<dyn ParseProvider>>,
    generator: Option<Box<dyn Generator>>,
    planner: Option<Box<dyn Planner>>,
}

pub struct Engine {
    config: Config,
    front: FrontDoor,
    embedder: Arc<dyn Embedder>,
    intent_index: IntentIndex,
    remotes: Remotes,
    registry: ToolRegistry,
    base_lexicon: LexiconAnnotator,
    base_gazetteer: Gazetteer,
    serving: ArcSwap<Serving>,
    ingest_lock: Mutex<()>,
    traces: Mutex<TraceStore>,
    health: Mutex<BTreeMap<String, ProviderState>>,
    /// The configured remote embedder was replaced by the built-in at startup.
    embed_degraded: bool,
}

fn read(path: &Path) -> crate::error::Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

/// The remote embedder if `embed_url` is set, else the hash embedder.
pub fn configured_embedder(config: &Config) -> crate::error::Result<Arc<dyn Embedder>> {
    Ok(match &config.embed_url {
        Some(u) => {
            let e =
                HttpEndpoint::new(u.clone(), Duration::from_millis(config.provider_timeout_ms))?;
            Arc::new(HttpEmbedder::new(e))
        }
        None => Arc::new(HashEmbedder::default()),
    })
}

impl Engine {
    /// Builds every component named by `config`; unset providers use their
    /// built-ins. `now` stamps the demo corpus when no store is configured.
    pub fn from_config(config: Config, now: i64) -> crate::error::Result<Self> {
        config.validate()?;
        let timeout = Duration::from_millis(config.provider_timeout_ms);
        let endpoint = |url: &Option<String>| -> crate::error::Result<Option<HttpEndpoint>> {
            url.as_ref()
                .map(|u| HttpEndpoint::new(u.clone(), timeout).map_err(Error::from))
                .transpose()
        };
        let builtin_embedder: Arc<dyn Embedder> = Arc::new(HashEmbedder::default());
        let mut embedder = configured_embedder(&config)?;
        let translator: Arc<dyn Translator> = match endpoint(&config.translate_url)? {
            Some(e) => Arc::new(HttpTranslator(e)),
            None => Arc::new(PhraseTable::bundled()),
        };
        let front = FrontDoor::new(
            config.pivot(),
            Arc::new(NgramDetector::bundled()),
            translator,
        )
        .with_fallback(Arc::new(PhraseTable::bundled()));
        let remotes = Remotes {
            classifier: endpoint(&config.classify_url)?
                .map(|e| Box::new(HttpIntentClassifier(e)) as _),
            reranker: endpoint(&config.rerank_url)?.map(|e| Box::new(HttpReranker(e)) as _),
            parser: endpoint(&config.parse_url)?.map(|e| Box::new(HttpParser(e)) as _),
            generator: endpoint(&config.generate_url)?.map(|e| Box::new(HttpGenerator(e)) as _),
            planner: endpoint(&config.plan_url)?.map(|e| Box::new(HttpPlanner(e)) as _),
        };

        let train = match &config.intent_train_path {
            Some(p) => read_labeled_jsonl(&read(p)?)?,
            None => read_labeled_jsonl(crate::assets::INTENT_TRAIN)?,
        };
        // A remote embedder that is down at startup is replaced for the
        // engine's lifetime: query and document vectors must share a space.
        let mut embed_degraded = false;
        let intent_index = match build_intent_index(&train, embedder.as_ref()) {
            Ok(i) => i,
            Err(Error::ProviderUnavailable(e)) if config.embed_url.is_some() => {
                tracing::warn!(reason = %e, "remote embedder unavailable at startup, using the built-in");
                embedder = builtin_embedder;
                embed_degraded = true;
                build_intent_index(&train, embedder.as_ref())?
            }
            Err(e) => return Err(e),
        };

        let snapshot = match &config.store_path {
            Some(dir) => {
                let snap = docstore::store::load(dir)?;
                if !snap.is_empty() && snap.embedder_id() != embedder.id() {
                    return Err(Error::Config(format!(
                        "store was built with embedder {:?} but the service embeds with {:?}",
                        snap.embedder_id(),
                        embedder.id()
                    )));
                }
                snap
            }
            None if config.empty_corpus => CorpusSnapshot::empty(now, embedder.id()),
            None => {
                let records = docstore::parse_records(crate::assets::DEMO_CORPUS)
                    .map_err(|errs| Error::Config(format!("bundled corpus: {errs:?}")))?;
                docstore::ingest(records, embedder.as_ref(), now)?
            }
        };
        let registry = match &config.tools_path {
            Some(p) => ToolRegistry::from_jsonl(&read(p)?)?,
            None => ToolRegistry::bundled(),
        };
        let base_gazetteer = match &config.gazetteer_path {
            Some(p) => Gazetteer::parse(&read(p)?),
            None => Gazetteer::parse(crate::assets::GAZETTEER),
        };
        let base_lexicon = LexiconAnnotator::bundled();
        let mut health: BTreeMap<String, ProviderState> = config
            .provider_urls()
            .iter()
            .map(|(name, url)| {
                (
                    name.to_string(),
                    if url.is_some() {
                        ProviderState::Up
                    } else {
                        ProviderState::Builtin
                    },
                )
            })
            .collect();
        if embed_degraded {
            health.insert("embed".into(), ProviderState::Down);
        }
        Ok(Self {
            serving: ArcSwap::from_pointee(Serving::new(snapshot, &base_lexicon, &base_gazetteer)),
            traces: Mutex::new(TraceStore::new(config.trace_retention)),
            config,
            front,
            embedder,
            intent_index,
            remotes,
            registry,
            base_lexicon,
            base_gazetteer,
            ingest_lock: Mutex::new(()),
            health: Mutex::new(health),
            embed_degraded,
        })
    }

    /// Default configuration over the bundled demo corpus.
    pub fn demo(now: i64) -> Self {
        Self::from_config(Config::default(), now).expect("bundled assets are valid")
    }

    pub fn config(&self) -> &Config {
        &self.config
    }

    pub fn snapshot(&self) -> CorpusSnapshot {
        self.serving.load().snapshot.clone()
    }

    pub fn intent_index(&self) -> &IntentIndex {
        &self.intent_index
    }

    pub fn handle_chat(
        &self,
        req: &ChatRequest,
        now: i64,
    ) -> Result<ChatResponseWire, ServiceError> {
        let started = Instant::now();
        let n = req.message.chars().count();
        if n == 0 || n > MAX_MESSAGE_CHARS {
            return Err(ServiceError::BadRequest(format!(
                "message must be 1..={MAX_MESSAGE_CHARS} characters, got {n}"
            )));
        }
        let tag = |s: &Option<String>| -> Result<Option<LanguageTag>, ServiceError> {
            match s.as_deref().map(str::trim) {
                None | Some("") | Some("auto") => Ok(None),
                Some(code) => Ok(Some(LanguageTag::new(code)?)),
            }
        };
        let forced = tag(&req.lang)?;
        let hint = tag(&req.client_locale_hint)?;
        let trace_id = uuid::Uuid::new_v4().to_string();
        let serving = self.serving.load_full();
        let mut ctx = RequestContext::default();
        let mut phases = Vec::with_capacity(3);
        let mut phase_start = Instant::now();
        let mut end_phase = |name: &str, start: &mut Instant| {
            phases.push(PhaseRecord {
                name: name.to_string(),
                elapsed_us: start.elapsed().as_micros() as u64,
            });
            *start = Instant::now();
        };

        let result = (|| -> Result<_, ServiceError> {
            // preliminary analysis
            let q = self.front.normalize_query(
                &req.message,
                now,
                forced.as_ref(),
                hint.as_ref(),
                &mut ctx,
            )?;
            ctx.call("embed");
            if self.embed_degraded {
                ctx.fell_back(&crate::error::ProviderError::new(
                    "embed",
                    "remote embedder was unavailable at startup",
                ));
            }
            let qv = self.embedder.embed_one(&q.pivot_text).map_err(|e| {
                ctx.fell_back(&e);
                ServiceError::Unavailable(format!(
                    "{e}; the built-in embedder cannot serve this store"
                ))
            })?;
            let intent = classify_intent(
                &q.pivot_text,
                &qv,
                &self.intent_index,
                &self.config.intent_params(),
                self.remotes.classifier.as_deref(),
                &mut ctx,
            )?;
            end_phase("preliminary", &mut phase_start);

            let providers = CascadeProviders {
                reranker: self.remotes.reranker.as_deref(),
                parser: self.remotes.parser.as_deref(),
                annotator: &serving.annotator,
            };
            let (evidence, cascade) = run_cascade(
                &q,
                &qv,
                &intent,
                &serving.snapshot,
                &providers,
                &self.config.retrieval_params(),
                &trace_id,
                &mut ctx,
            )?;
            end_phase("retrieval", &mut phase_start);

            let (draft, links) = if evidence.is_empty() {
                (fallback_response(&q), Vec::new())
            } else {
                let bundle = assemble_prompt(&q, &evidence, now);
                let draft = generate(&bundle, self.remotes.generator.as_deref(), &mut ctx);
                let titles: Vec<&str> = evidence
                    .items
                    .iter()
                    .map(|s| s.doc.title.as_str())
                    .collect();
                let input = PlanInput {
                    draft: &draft.text,
                    query_pivot: &q.pivot_text,
                    evidence_titles: &titles,
                };
                let inv = plan_tools(
                    &input,
                    &self.registry,
                    &serving.gazetteer,
                    self.remotes.planner.as_deref(),
                    &mut ctx,
                );
                (draft, render_links(&inv, &self.registry))
            };
            let response = finalize(
                &draft,
                &evidence,
                &q,
                links,
                &self.front,
                &trace_id,
                &mut ctx,
            )?;
            end_phase("post_processing", &mut phase_start);
            Ok((q, intent, evidence.stage, cascade, response))
        })();

        self.record_health(&ctx);
        let (q, intent, stage, cascade, response) = result?;
        tracing::info!(trace_id = %trace_id, lang = %response.language, stage = ?stage, "chat");
        let c = &self.config;
        self.traces.lock().insert(RequestTrace {
            cascade,
            received_at: now,
            session_id: req.session_id.clone(),
            language: response.language.clone(),
            query_pivot: q.pivot_text.clone(),
            stage,
            intent: IntentSummary {
                label: intent.label,
                method: intent.method,
                confidence: intent.confidence,
                top_score: intent.candidates.top_score(),
                candidate_classes: intent.candidates.classes.iter().copied().collect(),
            },
            params: ObservedParams {
                k: c.k,
                k_vote: c.k_vote,
                intent_gate: c.intent_gate,
                top_n: c.top_n,
                threshold: c.threshold,
                threshold_on: c.threshold_on,
            },
            phases,
            request_call_counts: ctx.calls.clone(),
            fallbacks: ctx.fallbacks.iter().cloned().collect(),
        });
        Ok(ChatResponseWire {
            response,
            stage,
            latency_ms: started.elapsed().as_millis() as u64,
        })
    }

    fn record_health(&self, ctx: &RequestContext) {
        let mut h = self.health.lock();
        for (name, state) in h.iter_mut() {
            if *state == ProviderState::Builtin {
                continue;
            }
            if ctx.fallbacks.contains(name) {
                *state = ProviderState::Down;
            } else if ctx.calls.get(name) > 0 {
                *state = ProviderState::Up;
            }
        }
    }

    /// Parses a JSONL body, merges it into the current snapshot and swaps
    /// the result in. `token` must equal the configured admin token.
    pub fn handle_ingest(
        &self,
        body: &str,
        token: Option<&str>,
        now: i64,
    ) -> Result<IngestSummary, ServiceError> {
        let Some(expected) = self.config.admin_token.as_deref() else {
            return Err(ServiceError::Forbidden);
        };
        if token != Some(expected) {
            return Err(ServiceError::Unauthorized);
        }
        let records = validate_lines(body, now)?;
        let _guard = self.ingest_lock.lock();
        let current = self.serving.load_full();
        let outcome = docstore::refresh(&current.snapshot, records, self.embedder.as_ref(), now)
            .map_err(|e| match e {
                Error::ProviderUnavailable(_) => ServiceError::Unavailable(e.to_string()),
                other => ServiceError::Unprocessable(vec![LineError {
                    line: 0,
                    message: other.to_string(),
                }]),
            })?;
        if let Some(dir) = &self.config.store_path {
            docstore::store::save_atomic(&outcome.snapshot, dir)
                .map_err(|e| ServiceError::Internal(e.to_string()))?;
        }
        let snap = outcome.snapshot;
        let summary = IngestSummary {
            added: outcome.added,
            deduplicated: outcome.deduplicated,
            replaced: outcome.replaced,
            total: snap.len(),
            counts: snap.counts(),
            built_at: snap.built_at(),
        };
        self.serving.store(Arc::new(Serving::new(
            snap,
            &self.base_lexicon,
            &self.base_gazetteer,
        )));
        tracing::info!(added = summary.added, total = summary.total, "ingest");
        Ok(summary)
    }

    pub fn get_trace(&self, id: &str) -> Result<Arc<RequestTrace>, ServiceError> {
        self.traces
            .lock()
            .get(id)
            .ok_or_else(|| ServiceError::NotFound(format!("trace {id} not found or expired")))
    }

    pub fn health(&self) -> Health {
        let serving = self.serving.load();
        Health {
            status: "ok".into(),
            snapshot_counts: serving.snapshot.counts(),
            providers: self.health.lock().clone(),
            embedder_id: self.embedder.id().to_string(),
        }
    }
}

/// Schema and document checks per line, so errors carry line numbers.
fn validate_lines(body: &str, now: i64) -> Result<Vec<CorpusRecord>, ServiceError> {
    let mut records = Vec::new();
    let mut errors = Vec::new();
    let mut ids = HashSet::new();
    for (i, line) in body.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let mut fail = |message: String| {
            errors.push(LineError {
                line: i + 1,
                message,
            })
        };
        match serde_json::from_str::<CorpusRecord>(line) {
            Err(e) => fail(e.to_string()),
            Ok(r) => {
                if !ids.insert(r.id.clone()) {
                    fail(format!("duplicate id {:?}", r.id));
                } else if let Err(e) = r.clone().into_document(now) {
                    fail(match e {
                        Error::Schema { message, .. } => message,
                        other => other.to_string(),
                    });
                } else {
                    records.push(r);
                }
            }
        }
    }
    if errors.is_empty() {
        Ok(records)
    } else {
        Err(ServiceError::Unprocessable(errors))
    }
}
