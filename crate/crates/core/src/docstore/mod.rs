//! Typed, timestamped corpus with immutable snapshots.

mod markdown;
pub mod store;

use std::collections::{BTreeMap, HashMap, HashSet};
use std::io::BufRead;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub use markdown::{parse_markdown_table, table_to_markdown, RawTable};

use crate::embed::{Embedder, EmbeddingVector};
use crate::error::{Error, Result};
use crate::intent::IntentClass;
use crate::lexical::InvertedIndex;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DocKind {
    #[serde(alias = "Concept")]
    Concept,
    #[serde(alias = "QAPair", alias = "qa")]
    QaPair,
    #[serde(alias = "WebPage", alias = "web")]
    WebPage,
    #[serde(alias = "Tabular")]
    Tabular,
}

impl DocKind {
    pub const ALL: [DocKind; 4] = [
        DocKind::Concept,
        DocKind::QaPair,
        DocKind::WebPage,
        DocKind::Tabular,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            DocKind::Concept => "concept",
            DocKind::QaPair => "qa_pair",
            DocKind::WebPage => "web_page",
            DocKind::Tabular => "tabular",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Document {
    pub id: String,
    pub kind: DocKind,
    /// Concept name, QA question, page title or table caption.
    pub title: String,
    /// Concept description, QA answer, page text or Markdown table.
    pub body: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source_url: Option<String>,
    /// UTC seconds.
    pub timestamp: i64,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub timestamp_inferred: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub intent_tag: Option<IntentClass>,
    /// Concept names a place (feeds the tool planner's gazetteer).
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub is_location: bool,
    #[serde(skip)]
    pub embedding: Option<EmbeddingVector>,
}

impl Document {
    /// Text that is embedded and lexically indexed.
    pub fn indexed_text(&self) -> String {
        format!("{}\n{}", self.title, self.body)
    }

    pub fn body_hash(&self) -> [u8; 32] {
        Sha256::digest(self.body.as_bytes()).into()
    }

    fn check(&self) -> Result<()> {
        if self.timestamp <= 0 {
            return Err(Error::Schema {
                line: 0,
                message: format!("document {}: timestamp must be positive", self.id),
            });
        }
        match (self.kind, self.intent_tag) {
            (DocKind::Tabular, None) | (DocKind::Tabular, Some(IntentClass::General)) => {
                return Err(Error::MissingIntentTag(self.id.clone()))
            }
            (DocKind::Tabular, Some(_)) => {
                let t = parse_markdown_table(&self.body).map_err(|reason| Error::InvalidTable {
                    id: self.id.clone(),
                    reason,
                })?;
                if t.rows.is_empty() {
                    return Err(Error::InvalidTable {
                        id: self.id.clone(),
                        reason: "table has no data rows".into(),
                    });
                }
            }
            (_, Some(_)) => return Err(Error::UnexpectedIntentTag(self.id.clone())),
            (_, None) => {}
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(untagged)]
pub enum TimestampInput {
    Seconds(i64),
    Text(String),
}

impl TimestampInput {
    pub fn to_seconds(&self) -> std::result::Result<i64, String> {
        match self {
            TimestampInput::Seconds(s) => Ok(*s),
            TimestampInput::Text(t) => {
                if let Ok(dt) = chrono::DateTime::parse_from_rfc3339(t) {
                    return Ok(dt.timestamp());
                }
                chrono::NaiveDate::parse_from_str(t, "%Y-%m-%d")
                    .map(|d| {
                        d.and_hms_opt(0, 0, 0)
                            .expect("midnight")
                            .and_utc()
                            .timestamp()
                    })
                    .map_err(|_| format!("unparseable timestamp {t:?}"))
            }
        }
    }
}

/// One line of corpus JSONL.
#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct CorpusRecord {
    pub id: String,
    pub kind: DocKind,
    #[serde(default)]
    pub title: Option<String>,
    #[serde(default)]
    pub body: Option<String>,
    #[serde(default)]
    pub table: Option<RawTable>,
    #[serde(default)]
    pub source_url: Option<String>,
    #[serde(default)]
    pub timestamp: Option<TimestampInput>,
    #[serde(default)]
    pub timestamp_inferred: bool,
    #[serde(default)]
    pub intent_tag: Option<String>,
    #[serde(default)]
    pub is_location: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LineError {
    pub line: usize,
    pub message: String,
}

/// Parses corpus JSONL, collecting every bad line.
pub fn parse_records(text: &str) -> std::result::Result<Vec<CorpusRecord>, Vec<LineError>> {
    let mut ok = Vec::new();
    let mut errs = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str::<CorpusRecord>(line) {
            Ok(r) => ok.push(r),
            Err(e) => errs.push(LineError {
                line: i + 1,
                message: e.to_string(),
            }),
        }
    }
    if errs.is_empty() {
        Ok(ok)
    } else {
        Err(errs)
    }
}

/// Reads corpus JSONL, failing on the first malformed line.
pub fn read_records(reader: impl BufRead) -> Result<Vec<CorpusRecord>> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| Error::Schema {
            line: i + 1,
            message: e.to_string(),
        })?);
    }
    Ok(out)
}

impl CorpusRecord {
    /// Validates and converts; `now` stands in for a missing timestamp.
    pub fn into_document(self, now: i64) -> Result<Document> {
        let intent_tag = self
            .intent_tag
            .as_deref()
            .map(str::parse::<IntentClass>)
            .transpose()?;
        let (title, body) = match (self.body, self.table) {
            (Some(_), Some(_)) => {
                return Err(Error::InvalidTable {
                    id: self.id,
                    reason: "record has both body and table".into(),
                })
            }
            (Some(body), None) => (self.title, body),
            (None, Some(table)) => {
                if self.kind != DocKind::Tabular {
                    return Err(Error::InvalidTable {
                        id: self.id,
                        reason: "only tabular records may carry a table".into(),
                    });
                }
                let md = table_to_markdown(&table).map_err(|e| Error::InvalidTable {
                    id: self.id.clone(),
                    reason: e.to_string(),
                })?;
                (self.title.or(Some(table.caption)), md)
            }
            (None, None) => {
                return Err(Error::Schema {
                    line: 0,
                    message: format!("document {}: needs body or table", self.id),
                })
            }
        };
        let title = match (title, self.kind) {
            (Some(t), _) => t,
            (None, DocKind::Tabular) => parse_markdown_table(&body)
                .map(|t| t.caption)
                .unwrap_or_default(),
            (None, _) => {
                return Err(Error::Schema {
                    line: 0,
                    message: format!("document {}: missing title", self.id),
                })
            }
        };
        let (timestamp, inferred) = match self.timestamp {
            Some(t) => (
                t.to_seconds()
                    .map_err(|message| Error::Schema { line: 0, message })?,
                self.timestamp_inferred,
            ),
            None => (now, true),
        };
        let doc = Document {
            id: self.id,
            kind: self.kind,
            title,
            body,
            source_url: self.source_url,
            timestamp,
            timestamp_inferred: inferred,
            intent_tag,
            is_location: self.is_location && self.kind == DocKind::Concept,
            embedding: None,
        };
        doc.check()?;
        Ok(doc)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct KindCounts {
    pub concept: usize,
    pub qa_pair: usize,
    pub web_page: usize,
    pub tabular: usize,
}

impl KindCounts {
    fn of(docs: &[Document]) -> Self {
        let mut c = Self::default();
        for d in docs {
            match d.kind {
                DocKind::Concept => c.concept += 1,
                DocKind::QaPair => c.qa_pair += 1,
                DocKind::WebPage => c.web_page += 1,
                DocKind::Tabular => c.tabular += 1,
            }
        }
        c
    }

    pub fn total(&self) -> usize {
        self.concept + self.qa_pair + self.web_page + self.tabular
    }

    pub fn get(&self, kind: DocKind) -> usize {
        match kind {
            DocKind::Concept => self.concept,
            DocKind::QaPair => self.qa_pair,
            DocKind::WebPage => self.web_page,
            DocKind::Tabular => self.tabular,
        }
    }
}

/// Immutable corpus state plus its lexical index.
#[derive(Debug, Clone)]
pub struct CorpusSnapshot {
    documents: Arc<Vec<Document>>,
    built_at: i64,
    counts: KindCounts,
    lexical: Arc<InvertedIndex>,
    embedder_id: String,
    dimension: usize,
}

impl CorpusSnapshot {
    /// Every document must already carry an embedding of one dimensionality.
    pub fn from_documents(
        documents: Vec<Document>,
        built_at: i64,
        embedder_id: &str,
    ) -> Result<Self> {
        let lexical =
            InvertedIndex::build(documents.iter().map(|d| (d.id.as_str(), d.indexed_text())));
        Self::with_index(documents, built_at, embedder_id, lexical)
    }

    pub(crate) fn with_index(
        documents: Vec<Document>,
        built_at: i64,
        embedder_id: &str,
        lexical: InvertedIndex,
    ) -> Result<Self> {
        let mut ids = HashSet::new();
        let mut dimension = None;
        for d in &documents {
            if !ids.insert(d.id.as_str()) {
                return Err(Error::DuplicateId(d.id.clone()));
            }
            d.check()?;
            let dim = d
                .embedding
                .as_ref()
                .map(EmbeddingVector::dimension)
                .ok_or_else(|| {
                    Error::CorruptStore(format!("document {} has no embedding", d.id))
                })?;
            match dimension {
                None => dimension = Some(dim),
                Some(expected) if expected != dim => {
                    return Err(Error::DimensionMismatch { expected, got: dim })
                }
                Some(_) => {}
            }
        }
        if lexical.doc_count() != documents.len()
            || documents
                .iter()
                .enumerate()
                .any(|(i, d)| lexical.doc_id(i as u32) != d.id)
        {
            return Err(Error::CorruptStore(
                "lexical index does not match documents".into(),
            ));
        }
        Ok(Self {
            counts: KindCounts::of(&documents),
            documents: Arc::new(documents),
            built_at,
            lexical: Arc::new(lexical),
            embedder_id: embedder_id.to_string(),
            dimension: dimension.unwrap_or(0),
        })
    }

    pub fn empty(built_at: i64, embedder_id: &str) -> Self {
        Self::from_documents(Vec::new(), built_at, embedder_id).expect("empty snapshot is valid")
    }

    pub fn documents(&self) -> &[Document] {
        &self.documents
    }

    pub fn document(&self, ord: u32) -> &Document {
        &self.documents[ord as usize]
    }

    pub fn get(&self, id: &str) -> Option<&Document> {
        self.documents.iter().find(|d| d.id == id)
    }

    pub fn len(&self) -> usize {
        self.documents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.documents.is_empty()
    }

    pub fn built_at(&self) -> i64 {
        self.built_at
    }

    pub fn counts(&self) -> KindCounts {
        self.counts
    }

    pub fn lexical(&self) -> &InvertedIndex {
        &self.lexical
    }

    pub fn embedder_id(&self) -> &str {
        &self.embedder_id
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    /// Concept titles flagged as places.
    pub fn location_names(&self) -> Vec<String> {
        self.documents
            .iter()
            .filter(|d| d.kind == DocKind::Concept && d.is_location)
            .map(|d| d.title.clone())
            .collect()
    }
}

fn embed_documents(docs: &mut [Document], embedder: &dyn Embedder) -> Result<()> {
    if docs.is_empty() {
        return Ok(());
    }
    let texts: Vec<String> = docs.iter().map(Document::indexed_text).collect();
    let refs: Vec<&str> = texts.iter().map(String::as_str).collect();
    let vectors = embedder.embed(&refs)?;
    if vectors.len() != docs.len() {
        return Err(
            crate::error::ProviderError::new(embedder.id(), "embedding count mismatch").into(),
        );
    }
    for (d, v) in docs.iter_mut().zip(vectors) {
        d.embedding = Some(v);
    }
    Ok(())
}

fn to_documents(records: Vec<CorpusRecord>, now: i64) -> Result<Vec<Document>> {
    let mut seen = HashSet::new();
    let mut docs = Vec::with_capacity(records.len());
    for r in records {
        let d = r.into_document(now)?;
        if !seen.insert(d.id.clone()) {
            return Err(Error::DuplicateId(d.id));
        }
        docs.push(d);
    }
    Ok(docs)
}

/// Validates, embeds and indexes a batch of records.
pub fn ingest(
    records: Vec<CorpusRecord>,
    embedder: &dyn Embedder,
    now: i64,
) -> Result<CorpusSnapshot> {
    let mut docs = to_documents(records, now)?;
    embed_documents(&mut docs, embedder)?;
    CorpusSnapshot::from_documents(docs, now, embedder.id())
}

#[derive(Debug, Clone)]
pub struct RefreshOutcome {
    pub snapshot: CorpusSnapshot,
    /// Records with ids not seen before, counted before deduplication.
    pub added: usize,
    /// Byte-identical re-crawls collapsed into one copy.
    pub deduplicated: usize,
    /// Existing ids whose content was replaced.
    pub replaced: usize,
}

/// New snapshot = old ∪ new. Pages sharing a `source_url` are all kept
/// unless their bodies are identical, in which case only the newest
/// timestamp survives. A new record reusing an existing id replaces it.
pub fn refresh(
    old: &CorpusSnapshot,
    records: Vec<CorpusRecord>,
    embedder: &dyn Embedder,
    now: i64,
) -> Result<RefreshOutcome> {
    if records.is_empty() {
        return Ok(RefreshOutcome {
            snapshot: old.clone(),
            added: 0,
            deduplicated: 0,
            replaced: 0,
        });
    }
    if !old.is_empty() && old.embedder_id() != embedder.id() {
        return Err(Error::Config(format!(
            "snapshot was embedded by {:?}, refresh uses {:?}",
            old.embedder_id(),
            embedder.id()
        )));
    }
    let mut fresh = to_documents(records, now)?;
    embed_documents(&mut fresh, embedder)?;

    let mut merged: Vec<Document> = old.documents().to_vec();
    let mut by_id: HashMap<String, usize> = merged
        .iter()
        .enumerate()
        .map(|(i, d)| (d.id.clone(), i))
        .collect();
    let (mut added, mut replaced) = (0, 0);
    for d in fresh {
        match by_id.get(&d.id) {
            Some(&i) => {
                merged[i] = d;
                replaced += 1;
            }
            None => {
                by_id.insert(d.id.clone(), merged.len());
                merged.push(d);
                added += 1;
            }
        }
    }

    // (source_url, body hash) -> index of the copy to keep
    let mut keep: BTreeMap<(String, [u8; 32]), usize> = BTreeMap::new();
    for (i, d) in merged.iter().enumerate() {
        let Some(url) = &d.source_url else { continue };
        let key = (url.clone(), d.body_hash());
        match keep.get(&key) {
            Some(&j) if merged[j].timestamp >= d.timestamp => {}
            _ => {
                keep.insert(key, i);
            }
        }
    }
    let survivors: HashSet<usize> = keep.values().copied().collect();
    let before = merged.len();
    let merged: Vec<Document> = merged
        .into_iter()
        .enumerate()
        .filter(|(i, d)| d.source_url.is_none() || survivors.contains(i))
        .map(|(_, d)| d)
        .collect();
    let deduplicated = before - merged.len();
    Ok(RefreshOutcome {
        snapshot: CorpusSnapshot::from_documents(merged, now, embedder.id())?,
        added,
        deduplicated,
        replaced,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "by", content = "value")]
pub enum Selector {
    Kind(DocKind),
    Intent(IntentClass),
}

impl Selector {
    pub fn matches(&self, d: &Document) -> bool {
        match self {
            Selector::Kind(k) => d.kind == *k,
            Selector::Intent(c) => d.kind == DocKind::Tabular && d.intent_tag == Some(*c),
        }
    }
}

/// Documents of a snapshot satisfying one selector.
#[derive(Debug, Clone)]
pub struct DocView<'a> {
    snapshot: &'a CorpusSnapshot,
    ordinals: Vec<u32>,
}

impl<'a> DocView<'a> {
    pub fn snapshot(&self) -> &'a CorpusSnapshot {
        self.snapshot
    }

    pub fn ordinals(&self) -> &[u32] {
        &self.ordinals
    }

    pub fn len(&self) -> usize {
        self.ordinals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ordinals.is_empty()
    }

    pub fn docs(&self) -> impl Iterator<Item = &'a Document> + '_ {
        self.ordinals.iter().map(|o| self.snapshot.document(*o))
    }
}

pub fn subset(snapshot: &CorpusSnapshot, selector: Selector) -> DocView<'_> {
    let ordinals = snapshot
        .documents()
        .iter()
        .enumerate()
        .filter(|(_, d)| selector.matches(d))
        .map(|(i, _)| i as u32)
        .collect();
    DocView { snapshot, ordinals }
}
