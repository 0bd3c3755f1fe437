//! HTTP JSON clients for externally hosted capabilities, plus per-request
//! call accounting.
//!
//! Every client speaks one fixed wire contract (`POST <base>/<verb>`) and is
//! paired with a deterministic built-in used when no endpoint is configured
//! or the endpoint fails.

use std::collections::BTreeMap;
use std::time::Duration;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::embed::{Embedder, EmbeddingVector};
use crate::error::ProviderError;
use crate::generation::{render_prompt, Generator, PromptBundle};
use crate::intent::{IntentClass, IntentClassifier, Paraphraser, RuleId};
use crate::lang::{LanguageTag, Translator};
use crate::queryparse::{Arc as ParseArc, ParseProvider, ParseResult, Pos, Relation, Token};
use crate::retrieval::Reranker;
use crate::toolplanner::{Planner, ProposedInvocation, ToolSpec};

/// Number of calls made to each capability, keyed by capability name
/// (`embed`, `rerank`, `parse`, ...). Built-in and remote calls both count.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CallCounts(BTreeMap<String, u32>);

impl CallCounts {
    pub fn bump(&mut self, capability: &str) {
        *self.0.entry(capability.to_string()).or_insert(0) += 1;
    }

    pub fn get(&self, capability: &str) -> u32 {
        self.0.get(capability).copied().unwrap_or(0)
    }

    pub fn total(&self) -> u32 {
        self.0.values().sum()
    }

    pub fn is_empty(&self) -> bool {
        self.total() == 0
    }

    pub fn merge(&mut self, other: &CallCounts) {
        for (k, v) in &other.0 {
            *self.0.entry(k.clone()).or_insert(0) += v;
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, u32)> {
        self.0.iter().map(|(k, v)| (k.as_str(), *v))
    }
}

/// Per-request accounting: capability calls and which remote providers
/// failed over to their built-in.
#[derive(Debug, Clone, Default)]
pub struct RequestContext {
    pub calls: CallCounts,
    pub fallbacks: std::collections::BTreeSet<String>,
}

impl RequestContext {
    pub fn call(&mut self, capability: &str) {
        self.calls.bump(capability);
    }

    pub fn fell_back(&mut self, err: &ProviderError) {
        tracing::warn!(provider = %err.provider, reason = %err.reason, "provider fallback");
        self.fallbacks.insert(err.provider.clone());
    }

    pub fn absorb(&mut self, other: RequestContext) {
        self.calls.merge(&other.calls);
        self.fallbacks.extend(other.fallbacks);
    }
}

pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(10);

/// Blocking JSON-over-HTTP endpoint. `base` is the provider root URL; the
/// verb path (`/embed`, `/translate`, ...) is appended per call.
#[derive(Debug, Clone)]
pub struct HttpEndpoint {
    base: String,
    client: reqwest::blocking::Client,
}

impl HttpEndpoint {
    pub fn new(base: impl Into<String>, timeout: Duration) -> Result<Self, ProviderError> {
        let base = base.into().trim_end_matches('/').to_string();
        let client = reqwest::blocking::Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| ProviderError::new(&base, e.to_string()))?;
        Ok(Self { base, client })
    }

    pub fn base(&self) -> &str {
        &self.base
    }

    pub fn post<B: Serialize, R: DeserializeOwned>(
        &self,
        verb: &str,
        body: &B,
    ) -> Result<R, ProviderError> {
        let url = format!("{}/{}", self.base, verb);
        let resp = self
            .client
            .post(&url)
            .json(body)
            .send()
            .map_err(|e| ProviderError::new(verb, e.to_string()))?;
        let status = resp.status();
        if !status.is_success() {
            return Err(ProviderError::new(verb, format!("{url} returned {status}")));
        }
        resp.json::<R>()
            .map_err(|e| ProviderError::new(verb, format!("bad response body: {e}")))
    }
}

// ---- embed -----------------------------------------------------------------

#[derive(Serialize)]
struct EmbedRequest<'a> {
    texts: &'a [&'a str],
}

#[derive(Deserialize)]
struct EmbedResponse {
    vectors: Vec<Vec<f32>>,
}

pub struct HttpEmbedder {
    endpoint: HttpEndpoint,
    id: String,
}

impl HttpEmbedder {
    pub fn new(endpoint: HttpEndpoint) -> Self {
        let id = format!("http:{}", endpoint.base());
        Self { endpoint, id }
    }
}

impl Embedder for HttpEmbedder {
    fn id(&self) -> &str {
        &self.id
    }

    fn embed(&self, texts: &[&str]) -> Result<Vec<EmbeddingVector>, ProviderError> {
        let resp: EmbedResponse = self.endpoint.post("embed", &EmbedRequest { texts })?;
        if resp.vectors.len() != texts.len() {
            return Err(ProviderError::new(
                "embed",
                format!(
                    "expected {} vectors, got {}",
                    texts.len(),
                    resp.vectors.len()
                ),
            ));
        }
        resp.vectors
            .into_iter()
            .map(|v| {
                EmbeddingVector::normalized(v)
                    .map_err(|e| ProviderError::new("embed", e.to_string()))
            })
            .collect()
    }
}

// ---- translate -------------------------------------------------------------

#[derive(Serialize)]
struct TranslateRequest<'a> {
    text: &'a str,
    source: &'a str,
    target: &'a str,
}

#[derive(Deserialize)]
struct TextResponse {
    text: String,
}

pub struct HttpTranslator(pub HttpEndpoint);

impl Translator for HttpTranslator {
    fn id(&self) -> &str {
        "http-translate"
    }

    fn translate(
        &self,
        text: &str,
        source: &LanguageTag,
        target: &LanguageTag,
    ) -> Result<String, ProviderError> {
        let resp: TextResponse = self.0.post(
            "translate",
            &TranslateRequest {
                text,
                source: source.as_str(),
                target: target.as_str(),
            },
        )?;
        Ok(resp.text)
    }
}

// ---- classify --------------------------------------------------------------

#[derive(Serialize)]
struct ClassifyRequest<'a> {
    query: &'a str,
    candidates: Vec<&'static str>,
}

#[derive(Deserialize)]
struct ClassifyResponse {
    label: String,
    confidence: f64,
}

pub struct HttpIntentClassifier(pub HttpEndpoint);

impl IntentClassifier for HttpIntentClassifier {
    fn classify(
        &self,
        query: &str,
        candidates: &[IntentClass],
    ) -> Result<(String, f64), ProviderError> {
        let resp: ClassifyResponse = self.0.post(
            "classify",
            &ClassifyRequest {
                query,
                candidates: candidates.iter().map(|c| c.name()).collect(),
            },
        )?;
        Ok((resp.label, resp.confidence))
    }
}

// ---- rerank ----------------------------------------------------------------

#[derive(Serialize)]
struct RerankRequest<'a> {
    query: &'a str,
    documents: &'a [&'a str],
}

#[derive(Deserialize)]
struct RerankResponse {
    scores: Vec<f64>,
}

pub struct HttpReranker(pub HttpEndpoint);

impl Reranker for HttpReranker {
    fn rerank(&self, query: &str, documents: &[&str]) -> Result<Vec<f64>, ProviderError> {
        let resp: RerankResponse = self.0.post("rerank", &RerankRequest { query, documents })?;
        Ok(resp.scores)
    }
}

// ---- parse -----------------------------------------------------------------

#[derive(Serialize)]
struct ParseRequest<'a> {
    text: &'a str,
}

#[derive(Deserialize)]
struct WireToken {
    surface: String,
    pos: String,
}

#[derive(Deserialize)]
struct WireArc {
    head: usize,
    dep: usize,
    rel: String,
}

#[derive(Deserialize)]
struct ParseResponse {
    tokens: Vec<WireToken>,
    arcs: Vec<WireArc>,
}

pub struct HttpParser(pub HttpEndpoint);

impl ParseProvider for HttpParser {
    fn id(&self) -> &str {
        "http-parse"
    }

    fn parse(&self, text: &str) -> Result<ParseResult, ProviderError> {
        let resp: ParseResponse = self.0.post("parse", &ParseRequest { text })?;
        let tokens = resp
            .tokens
            .into_iter()
            .enumerate()
            .map(|(index, t)| Token {
                surface: t.surface,
                pos: Pos::from_wire(&t.pos),
                index,
            })
            .collect::<Vec<_>>();
        let arcs = resp
            .arcs
            .into_iter()
            .map(|a| {
                Ok(ParseArc {
                    head: a.head,
                    dep: a.dep,
                    rel: Relation::from_wire(&a.rel).ok_or_else(|| {
                        ProviderError::new("parse", format!("unknown relation {:?}", a.rel))
                    })?,
                })
            })
            .collect::<Result<Vec<_>, ProviderError>>()?;
        ParseResult::new(tokens, arcs, self.id())
            .map_err(|e| ProviderError::new("parse", e.to_string()))
    }
}

// ---- generate --------------------------------------------------------------

#[derive(Serialize)]
struct GenerateRequest<'a> {
    prompt: &'a str,
    evidence_ids: Vec<&'a str>,
}

#[derive(Deserialize)]
struct GenerateResponse {
    text: String,
    #[serde(default)]
    used_ids: Vec<String>,
}

pub struct HttpGenerator(pub HttpEndpoint);

impl Generator for HttpGenerator {
    fn generate(&self, bundle: &PromptBundle) -> Result<(String, Vec<String>), ProviderError> {
        let prompt = render_prompt(bundle);
        let resp: GenerateResponse = self.0.post(
            "generate",
            &GenerateRequest {
                prompt: &prompt,
                evidence_ids: bundle
                    .evidence_blocks
                    .iter()
                    .map(|b| b.doc_id.as_str())
                    .collect(),
            },
        )?;
        Ok((resp.text, resp.used_ids))
    }
}

/// Paraphrasing over the generation contract (no evidence attached).
pub struct HttpParaphraser(pub HttpEndpoint);

impl Paraphraser for HttpParaphraser {
    fn paraphrase(&self, question: &str, rule: RuleId) -> Result<String, ProviderError> {
        let prompt = format!(
            "Rewrite the question below without changing its intent. Rule: {}.\nQuestion: {question}",
            rule.instruction()
        );
        let resp: GenerateResponse = self.0.post(
            "generate",
            &GenerateRequest {
                prompt: &prompt,
                evidence_ids: Vec::new(),
            },
        )?;
        Ok(resp.text)
    }
}

// ---- plan ------------------------------------------------------------------

#[derive(Serialize)]
struct PlanRequest<'a> {
    response: &'a str,
    tools: &'a [ToolSpec],
}

#[derive(Deserialize)]
struct PlanResponse {
    invocations: Vec<ProposedInvocation>,
}

pub struct HttpPlanner(pub HttpEndpoint);

impl Planner for HttpPlanner {
    fn plan(
        &self,
        response: &str,
        tools: &[ToolSpec],
    ) -> Result<Vec<ProposedInvocation>, ProviderError> {
        let resp: PlanResponse = self.0.post("plan", &PlanRequest { response, tools })?;
        Ok(resp.invocations)
    }
}
