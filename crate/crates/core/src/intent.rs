//! Intent classification with heuristic candidate filtering.
//!
//! The query is compared against every training question; the labels of the
//! `k` most similar ones form the candidate set, and the classifier may only
//! answer from that set (or `General`). The default classifier is a
//! similarity-gated k-nearest-neighbor vote.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::embed::{Embedder, EmbeddingVector};
use crate::error::{Error, ProviderError, Result};
use crate::providers::RequestContext;
use crate::text::{fnv1a, is_cjk};

macro_rules! intent_classes {
    ($($variant:ident => $name:literal,)+) => {
        /// The eleven tabular intents plus `General` (no tabular intent).
        #[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
        pub enum IntentClass {
            $($variant,)+
            General,
        }

        impl IntentClass {
            /// The eleven tabular classes, in canonical order.
            pub const TABULAR: [IntentClass; 11] = [$(IntentClass::$variant,)+];

            pub fn name(self) -> &'static str {
                match self {
                    $(IntentClass::$variant => $name,)+
                    IntentClass::General => "General",
                }
            }
        }

        impl FromStr for IntentClass {
            type Err = Error;
            fn from_str(s: &str) -> Result<Self> {
                match s.trim() {
                    $($name => Ok(IntentClass::$variant),)+
                    "General" => Ok(IntentClass::General),
                    other => Err(Error::UnknownIntent(other.to_string())),
                }
            }
        }
    };
}

intent_classes! {
    RoutineReimbursement => "Routine Reimbursement",
    SoftwareReimbursement => "Reimbursement for Software Development or Purchase",
    InterCityTransportation => "Inter-City Transportation Expense",
    InternationalTransportation => "International Transportation Expense",
    Accommodation => "Accommodation Expense",
    FieldInvestigation => "Field Investigation Expense",
    Conference => "Conference Expense",
    ExpertConsultation => "Expert Consultation Expense",
    OffCampusPersonnel => "Service Expense for Off-Campus Personnel",
    BuildingOpeningSchedule => "Opening Schedule of Buildings",
    HolidayServiceSchedule => "Service Schedule of Buildings during Holiday Period",
}

impl IntentClass {
    pub fn is_general(self) -> bool {
        self == IntentClass::General
    }
}

impl fmt::Display for IntentClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl Serialize for IntentClass {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(self.name())
    }
}

impl<'de> Deserialize<'de> for IntentClass {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledQuery {
    pub id: String,
    pub text: String,
    pub label: IntentClass,
}

/// Parses `{"id","text","label"}` JSONL.
pub fn read_labeled_jsonl(text: &str) -> Result<Vec<LabeledQuery>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| Error::Schema {
                line: i + 1,
                message: e.to_string(),
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingExample {
    pub id: String,
    pub query_text: String,
    pub label: IntentClass,
    pub embedding: EmbeddingVector,
}

/// Immutable similarity index over the training questions.
#[derive(Debug, Clone)]
pub struct IntentIndex {
    examples: Vec<TrainingExample>,
    embedder_id: String,
    dimension: usize,
}

impl IntentIndex {
    pub fn examples(&self) -> &[TrainingExample] {
        &self.examples
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    pub fn embedder_id(&self) -> &str {
        &self.embedder_id
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn labels(&self) -> BTreeSet<IntentClass> {
        self.examples.iter().map(|e| e.label).collect()
    }
}

pub fn build_intent_index(
    examples: &[LabeledQuery],
    embedder: &dyn Embedder,
) -> Result<IntentIndex> {
    if examples.is_empty() {
        return Err(Error::EmptyTrainingSet);
    }
    let mut seen = HashSet::new();
    for e in examples {
        if !seen.insert(e.id.as_str()) {
            return Err(Error::DuplicateId(e.id.clone()));
        }
    }
    let texts: Vec<&str> = examples.iter().map(|e| e.text.as_str()).collect();
    let vectors = embedder.embed(&texts)?;
    if vectors.len() != examples.len() {
        return Err(ProviderError::new(embedder.id(), "embedding count mismatch").into());
    }
    let dimension = vectors[0].dimension();
    let mut out = Vec::with_capacity(examples.len());
    for (e, v) in examples.iter().zip(vectors) {
        if v.dimension() != dimension {
            return Err(Error::EmbeddingDimensionMismatch {
                expected: dimension,
                got: v.dimension(),
            });
        }
        out.push(TrainingExample {
            id: e.id.clone(),
            query_text: e.text.clone(),
            label: e.label,
            embedding: v,
        });
    }
    Ok(IntentIndex {
        examples: out,
        embedder_id: embedder.id().to_string(),
        dimension,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Neighbor {
    pub id: String,
    pub label: IntentClass,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct CandidateSet {
    pub classes: BTreeSet<IntentClass>,
    /// Score descending, ties by ascending example id.
    pub neighbors: Vec<Neighbor>,
}

impl CandidateSet {
    pub fn is_empty(&self) -> bool {
        self.neighbors.is_empty()
    }

    pub fn top_score(&self) -> Option<f64> {
        self.neighbors.first().map(|n| n.score)
    }
}

/// The `k` training examples most similar to `query`, and their labels.
pub fn hic_candidates(
    index: &IntentIndex,
    query: &EmbeddingVector,
    k: usize,
) -> Result<CandidateSet> {
    if query.dimension() != index.dimension {
        return Err(Error::DimensionMismatch {
            expected: index.dimension,
            got: query.dimension(),
        });
    }
    let k = k.max(1);
    let ex = &index.examples;
    let mut order = ex
        .iter()
        .enumerate()
        .map(|(i, e)| Ok((e.embedding.dot(query)?, i)))
        .collect::<Result<Vec<(f64, usize)>>>()?;
    order.sort_unstable_by(|a, b| {
        b.0.total_cmp(&a.0)
            .then_with(|| ex[a.1].id.cmp(&ex[b.1].id))
    });
    let scored: Vec<Neighbor> = order
        .into_iter()
        .take(k)
        .map(|(score, i)| Neighbor {
            id: ex[i].id.clone(),
            label: ex[i].label,
            score,
        })
        .collect();
    Ok(CandidateSet {
        classes: scored.iter().map(|n| n.label).collect(),
        neighbors: scored,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PredictionMethod {
    KnnVote,
    Provider,
    Gate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntentPrediction {
    pub label: IntentClass,
    pub candidates: CandidateSet,
    pub method: PredictionMethod,
    pub confidence: f64,
}

/// Majority vote among the top `k_vote` neighbors of the candidate set.
/// Tied classes are resolved in favor of the one whose best neighbor ranks
/// highest.
pub fn knn_vote(candidates: &CandidateSet, k_vote: usize) -> IntentPrediction {
    let voters = &candidates.neighbors[..candidates.neighbors.len().min(k_vote.max(1))];
    if voters.is_empty() {
        return IntentPrediction {
            label: IntentClass::General,
            candidates: candidates.clone(),
            method: PredictionMethod::KnnVote,
            confidence: 0.0,
        };
    }
    // class -> (votes, rank of best neighbor)
    let mut tally: BTreeMap<IntentClass, (usize, usize)> = BTreeMap::new();
    for (rank, n) in voters.iter().enumerate() {
        let e = tally.entry(n.label).or_insert((0, rank));
        e.0 += 1;
    }
    let (label, (votes, _)) = tally
        .into_iter()
        .max_by(|a, b| a.1 .0.cmp(&b.1 .0).then_with(|| b.1 .1.cmp(&a.1 .1)))
        .expect("non-empty tally");
    IntentPrediction {
        label,
        candidates: candidates.clone(),
        method: PredictionMethod::KnnVote,
        confidence: votes as f64 / voters.len() as f64,
    }
}

/// External classifier that chooses among the candidate class names.
pub trait IntentClassifier: Send + Sync {
    /// Returns a label name and a confidence.
    fn classify(
        &self,
        query: &str,
        candidates: &[IntentClass],
    ) -> std::result::Result<(String, f64), ProviderError>;
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntentParams {
    /// Candidate-filter width.
    pub k: usize,
    pub k_vote: usize,
    /// Top-1 similarity below which a query is `General`.
    pub gate: f64,
}

impl Default for IntentParams {
    fn default() -> Self {
        Self {
            k: 50,
            k_vote: 5,
            gate: 0.35,
        }
    }
}

/// Gate, filter, then classify within the candidates.
pub fn classify_intent(
    query_text: &str,
    query_vec: &EmbeddingVector,
    index: &IntentIndex,
    params: &IntentParams,
    classifier: Option<&dyn IntentClassifier>,
    ctx: &mut RequestContext,
) -> Result<IntentPrediction> {
    let candidates = hic_candidates(index, query_vec, params.k)?;
    predict_within(query_text, candidates, params, classifier, ctx)
}

fn predict_within(
    query_text: &str,
    candidates: CandidateSet,
    params: &IntentParams,
    classifier: Option<&dyn IntentClassifier>,
    ctx: &mut RequestContext,
) -> Result<IntentPrediction> {
    let top = candidates.top_score().unwrap_or(f64::NEG_INFINITY);
    if candidates.is_empty() || top < params.gate {
        return Ok(IntentPrediction {
            label: IntentClass::General,
            confidence: (1.0 - top.max(0.0)).clamp(0.0, 1.0),
            candidates,
            method: PredictionMethod::Gate,
        });
    }
    if let Some(c) = classifier {
        ctx.call("classify");
        let names: Vec<IntentClass> = candidates.classes.iter().copied().collect();
        match c.classify(query_text, &names) {
            Ok((label, confidence)) => match label.parse::<IntentClass>() {
                Ok(l) if l.is_general() || candidates.classes.contains(&l) => {
                    return Ok(IntentPrediction {
                        label: l,
                        candidates,
                        method: PredictionMethod::Provider,
                        confidence: if confidence.is_finite() {
                            confidence.clamp(0.0, 1.0)
                        } else {
                            0.0
                        },
                    });
                }
                _ => ctx.fell_back(&ProviderError::new(
                    "classify",
                    format!("label {label:?} outside the candidate set"),
                )),
            },
            Err(e) => ctx.fell_back(&e),
        }
    }
    Ok(knn_vote(&candidates, params.k_vote))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub accuracy: f64,
    pub recall_at_k: f64,
    pub n: usize,
}

/// Accuracy of the default classifier on `testset`, and how often the gold
/// class survives filtering at `k`. Without HIC the classifier sees every
/// training example as a candidate.
pub fn evaluate_intent(
    index: &IntentIndex,
    testset: &[LabeledQuery],
    embedder: &dyn Embedder,
    params: &IntentParams,
    with_hic: bool,
) -> Result<EvalReport> {
    if testset.is_empty() {
        return Err(Error::EmptyTrainingSet);
    }
    let texts: Vec<&str> = testset.iter().map(|t| t.text.as_str()).collect();
    let vectors = embedder.embed(&texts)?;
    let mut correct = 0usize;
    let mut recalled = 0usize;
    let mut ctx = RequestContext::default();
    for (item, v) in testset.iter().zip(&vectors) {
        let all = hic_candidates(index, v, index.len())?;
        let filtered = CandidateSet {
            neighbors: all.neighbors[..all.neighbors.len().min(params.k.max(1))].to_vec(),
            classes: all
                .neighbors
                .iter()
                .take(params.k.max(1))
                .map(|n| n.label)
                .collect(),
        };
        if filtered.classes.contains(&item.label) {
            recalled += 1;
        }
        let cands = if with_hic { filtered } else { all };
        let pred = predict_within(&item.text, cands, params, None, &mut ctx)?;
        if pred.label == item.label {
            correct += 1;
        }
    }
    let n = testset.len();
    Ok(EvalReport {
        accuracy: correct as f64 / n as f64,
        recall_at_k: recalled as f64 / n as f64,
        n,
    })
}

/// Train/test sizes for a hold-out of 20%, rounding the test share up.
pub fn holdout_sizes(n: usize) -> (usize, usize) {
    let test = (n * 2).div_ceil(10);
    (n - test, test)
}

/// Paraphrase rules used to augment seed questions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RuleId {
    Simplify,
    AddIdentity,
    Reorder,
    Synonym,
}

impl RuleId {
    pub const ALL: [RuleId; 4] = [
        RuleId::Simplify,
        RuleId::AddIdentity,
        RuleId::Reorder,
        RuleId::Synonym,
    ];

    pub fn instruction(self) -> &'static str {
        match self {
            RuleId::Simplify => "make the question shorter and simpler",
            RuleId::AddIdentity => "prefix a sentence stating who the asker is (a faculty member, staff member or student)",
            RuleId::Reorder => "change the word order while keeping the meaning",
            RuleId::Synonym => "rewrite it as an equivalent question using synonyms",
        }
    }
}

pub trait Paraphraser: Send + Sync {
    fn paraphrase(
        &self,
        question: &str,
        rule: RuleId,
    ) -> std::result::Result<String, ProviderError>;
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ParaphraseOutcome {
    pub paraphrases: Vec<(RuleId, String)>,
    pub skipped: Vec<RuleId>,
}

const EN_FILLERS: &[&str] = &[
    "could you please tell me ",
    "can you tell me ",
    "i would like to know ",
    "i want to know ",
    "excuse me, ",
    "please ",
];
const ZH_FILLERS: &[&str] = &[
    "请问一下，",
    "请问一下",
    "请问，",
    "请问",
    "我想问一下，",
    "我想问一下",
    "麻烦问一下，",
    "麻烦问一下",
    "你好，",
];

const EN_PERSONAS: &[&str] = &[
    "I am a full professor.",
    "I am a first-year graduate student.",
    "I am an administrative staff member.",
    "I am an undergraduate student.",
    "I am a postdoctoral researcher.",
];
const ZH_PERSONAS: &[&str] = &[
    "我是一名正教授。",
    "我是研一新生。",
    "我是学院的行政人员。",
    "我是一名本科生。",
    "我是博士后。",
];

const SYNONYMS: &[(&str, &str)] = &[
    ("reimburse", "get a refund for"),
    ("opening hours", "open times"),
    ("tickets", "fares"),
    ("gym", "gymnasium"),
    ("accommodation", "lodging"),
    ("报销", "报账"),
    ("开放时间", "开门时间"),
    ("几点开门", "什么时候开门"),
    ("住宿", "住宾馆"),
    ("标准", "规定"),
    ("可以", "能"),
];

const EN_STOPWORDS: &[&str] = &["of", "the", "a", "an"];

fn has_han(s: &str) -> bool {
    s.chars().any(is_cjk)
}

/// Deterministic template paraphrases. `None` means the rule does not apply.
#[derive(Debug, Clone, Copy, Default)]
pub struct TemplateParaphraser;

impl TemplateParaphraser {
    pub fn apply(&self, question: &str, rule: RuleId) -> Option<String> {
        let q = question.trim();
        if q.is_empty() {
            return None;
        }
        match rule {
            RuleId::Simplify => {
                let fillers = if has_han(q) { ZH_FILLERS } else { EN_FILLERS };
                let lower = q.to_lowercase();
                for f in fillers {
                    if lower.starts_with(f) {
                        let rest = q[f.len()..].trim_start();
                        if rest.is_empty() {
                            return None;
                        }
                        let mut chars = rest.chars();
                        let first = chars.next()?;
                        return Some(first.to_uppercase().chain(chars).collect());
                    }
                }
                None
            }
            RuleId::AddIdentity => {
                let personas = if has_han(q) { ZH_PERSONAS } else { EN_PERSONAS };
                let p = personas[(fnv1a(q.as_bytes()) % personas.len() as u64) as usize];
                let sep = if has_han(q) { "" } else { " " };
                Some(format!("{p}{sep}{q}"))
            }
            RuleId::Reorder => {
                if has_han(q) {
                    let (left, right) = q.split_once('的')?;
                    if left.is_empty() || right.is_empty() {
                        return None;
                    }
                    let (right, tail) = split_terminal(right);
                    Some(format!("{right}，{left}{tail}"))
                } else {
                    let (body, tail) = split_terminal(q);
                    if let Some((left, right)) = body.split_once(" of ") {
                        Some(format!("{right} {left}{tail}"))
                    } else {
                        let mut words: Vec<&str> = body.split_whitespace().collect();
                        if words.len() < 2 {
                            return None;
                        }
                        let last = words.pop()?;
                        words.insert(0, last);
                        Some(format!("{}{tail}", words.join(" ")))
                    }
                }
            }
            RuleId::Synonym => {
                let lower = q.to_lowercase();
                SYNONYMS.iter().find_map(|(from, to)| {
                    lower
                        .find(from)
                        .map(|at| format!("{}{}{}", &q[..at], to, &q[at + from.len()..]))
                })
            }
        }
    }
}

fn split_terminal(s: &str) -> (&str, &str) {
    let trimmed = s.trim_end_matches(['?', '？', '.', '。', '!', '！']);
    (trimmed, &s[trimmed.len()..])
}

/// Content words (stopwords removed, lowercased) of an English question.
pub fn content_words(s: &str) -> Vec<String> {
    let mut w: Vec<String> = s
        .split(|c: char| !c.is_alphanumeric())
        .filter(|w| !w.is_empty())
        .map(str::to_lowercase)
        .filter(|w| !EN_STOPWORDS.contains(&w.as_str()))
        .collect();
    w.sort();
    w
}

/// One paraphrase per requested rule: the provider first when present, the
/// template rules otherwise. Rules neither can serve are reported as skipped.
pub fn paraphrase_seed(
    question: &str,
    rules: &[RuleId],
    provider: Option<&dyn Paraphraser>,
) -> ParaphraseOutcome {
    let mut out = ParaphraseOutcome::default();
    for &rule in rules {
        let remote = provider
            .and_then(|p| p.paraphrase(question, rule).ok())
            .filter(|s| !s.trim().is_empty());
        match remote.or_else(|| TemplateParaphraser.apply(question, rule)) {
            Some(p) => out.paraphrases.push((rule, p)),
            None => out.skipped.push(rule),
        }
    }
    out
}
