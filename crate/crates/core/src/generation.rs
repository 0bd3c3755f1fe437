//! Timestamp-aware prompt assembly, grounded drafting and response
//! finalization.

use chrono::{DateTime, SecondsFormat, Utc};
use serde::{Deserialize, Serialize};

use crate::docstore::DocKind;
use crate::error::{ProviderError, Result};
use crate::lang::{FrontDoor, LanguageTag, NormalizedQuery};
use crate::providers::RequestContext;
use crate::retrieval::{EvidenceSet, Stage};
use crate::toolplanner::ToolLink;

/// Width of the top score tier inside which newer evidence wins.
pub const RECENCY_TIER: f64 = 0.05;

pub const INSTRUCTIONS: &str =
    "请只根据下面列出的资料回答用户的问题。每份资料都标有发布或更新时间；\
请对照当前时间判断资料是否仍然有效，资料之间有冲突时以较新的为准，不要采用已经过期的内容。\
资料中没有的信息不要自行补充，无法回答时请直接说明。";

pub const REFUSAL: &str =
    "抱歉，我暂时没有查到能够回答这个问题的可靠资料。建议您换个问法，或者联系相关部门进一步确认。";

/// RFC 3339 UTC rendering used everywhere in prompts.
pub fn render_time(ts: i64) -> String {
    DateTime::<Utc>::from_timestamp(ts, 0)
        .map(|t| t.to_rfc3339_opts(SecondsFormat::Secs, true))
        .unwrap_or_else(|| ts.to_string())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvidenceBlock {
    pub doc_id: String,
    pub kind: DocKind,
    pub title: String,
    /// Rendered timestamp.
    pub timestamp: String,
    pub timestamp_inferred: bool,
    pub content: String,
    pub score: f64,
    #[serde(skip)]
    pub timestamp_secs: i64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptBundle {
    pub current_time: String,
    pub query_pivot: String,
    pub evidence_blocks: Vec<EvidenceBlock>,
    pub instructions: String,
}

pub fn assemble_prompt(q: &NormalizedQuery, evidence: &EvidenceSet<'_>, now: i64) -> PromptBundle {
    PromptBundle {
        current_time: render_time(now),
        query_pivot: q.pivot_text.clone(),
        evidence_blocks: evidence
            .items
            .iter()
            .map(|s| EvidenceBlock {
                doc_id: s.doc.id.clone(),
                kind: s.doc.kind,
                title: s.doc.title.clone(),
                timestamp: render_time(s.doc.timestamp),
                timestamp_inferred: s.doc.timestamp_inferred,
                content: s.doc.body.clone(),
                score: s.score(),
                timestamp_secs: s.doc.timestamp,
            })
            .collect(),
        instructions: INSTRUCTIONS.to_string(),
    }
}

fn render_block(i: usize, b: &EvidenceBlock) -> String {
    let inferred = if b.timestamp_inferred {
        "（时间为入库时间）"
    } else {
        ""
    };
    format!(
        "[资料{}] 编号：{}；类别：{}；时间：{}{}\n标题：{}\n{}\n",
        i + 1,
        b.doc_id,
        b.kind.as_str(),
        b.timestamp,
        inferred,
        b.title,
        b.content
    )
}

/// Fills the bundled template.
pub fn render_prompt(bundle: &PromptBundle) -> String {
    let evidence: String = bundle
        .evidence_blocks
        .iter()
        .enumerate()
        .map(|(i, b)| render_block(i, b))
        .collect::<Vec<_>>()
        .join("\n");
    fill_template(crate::assets::PROMPT_TEMPLATE, |name| match name {
        "current_time" => Some(bundle.current_time.as_str()),
        "instructions" => Some(bundle.instructions.as_str()),
        "evidence" => Some(evidence.as_str()),
        "query" => Some(bundle.query_pivot.as_str()),
        _ => None,
    })
}

// One left-to-right pass, so braces inside substituted values stay literal.
fn fill_template<'a>(template: &str, lookup: impl Fn(&str) -> Option<&'a str>) -> String {
    let mut out = String::with_capacity(template.len());
    let mut rest = template;
    while let Some(open) = rest.find('{') {
        out.push_str(&rest[..open]);
        let after = &rest[open + 1..];
        match after
            .find('}')
            .and_then(|close| lookup(&after[..close]).map(|v| (close, v)))
        {
            Some((close, v)) => {
                out.push_str(v);
                rest = &after[close + 1..];
            }
            None => {
                out.push('{');
                rest = after;
            }
        }
    }
    out.push_str(rest);
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DraftResponse {
    /// Pivot-language text.
    pub text: String,
    pub used_doc_ids: Vec<String>,
}

pub trait Generator: Send + Sync {
    /// Free text plus the evidence ids it claims to use.
    fn generate(
        &self,
        bundle: &PromptBundle,
    ) -> std::result::Result<(String, Vec<String>), ProviderError>;
}

/// Index of the block the extractive generator quotes: newest timestamp in
/// the top score tier, ties by ascending id.
pub fn select_block(blocks: &[EvidenceBlock]) -> Option<usize> {
    let max = blocks
        .iter()
        .map(|b| b.score)
        .fold(f64::NEG_INFINITY, f64::max);
    blocks
        .iter()
        .enumerate()
        .filter(|(_, b)| b.score >= max - RECENCY_TIER)
        .max_by(|(_, a), (_, b)| {
            a.timestamp_secs
                .cmp(&b.timestamp_secs)
                .then_with(|| b.doc_id.cmp(&a.doc_id))
        })
        .map(|(i, _)| i)
}

pub fn extractive_answer(b: &EvidenceBlock) -> String {
    format!("以下信息摘自《{}》：\n{}", b.title, b.content)
}

/// Deterministic built-in generator.
#[derive(Debug, Clone, Copy, Default)]
pub struct ExtractiveGenerator;

impl ExtractiveGenerator {
    pub fn draft(&self, bundle: &PromptBundle) -> DraftResponse {
        match select_block(&bundle.evidence_blocks) {
            Some(i) => {
                let b = &bundle.evidence_blocks[i];
                DraftResponse {
                    text: extractive_answer(b),
                    used_doc_ids: vec![b.doc_id.clone()],
                }
            }
            None => DraftResponse {
                text: REFUSAL.to_string(),
                used_doc_ids: Vec::new(),
            },
        }
    }
}

impl Generator for ExtractiveGenerator {
    fn generate(
        &self,
        bundle: &PromptBundle,
    ) -> std::result::Result<(String, Vec<String>), ProviderError> {
        let d = self.draft(bundle);
        Ok((d.text, d.used_doc_ids))
    }
}

/// Provider draft with ids outside the evidence stripped; any failure (or
/// an empty answer) falls back to the extractive generator.
pub fn generate(
    bundle: &PromptBundle,
    provider: Option<&dyn Generator>,
    ctx: &mut RequestContext,
) -> DraftResponse {
    ctx.call("generate");
    if let Some(p) = provider {
        match p.generate(bundle) {
            Ok((text, used)) if !text.trim().is_empty() => {
                let mut used_doc_ids: Vec<String> = Vec::new();
                for id in used {
                    if bundle.evidence_blocks.iter().any(|b| b.doc_id == id)
                        && !used_doc_ids.contains(&id)
                    {
                        used_doc_ids.push(id);
                    }
                }
                return DraftResponse { text, used_doc_ids };
            }
            Ok(_) => ctx.fell_back(&ProviderError::new("generate", "empty answer")),
            Err(e) => ctx.fell_back(&e),
        }
    }
    ExtractiveGenerator.draft(bundle)
}

pub fn fallback_response(_q: &NormalizedQuery) -> DraftResponse {
    DraftResponse {
        text: REFUSAL.to_string(),
        used_doc_ids: Vec::new(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Warning {
    TranslationDegraded,
    NoEvidence,
    /// A configured provider failed and its built-in answered instead.
    ProviderFallback,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Reference {
    pub doc_id: String,
    pub title: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source_url: Option<String>,
    pub timestamp: i64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FinalResponse {
    pub text: String,
    pub language: LanguageTag,
    pub references: Vec<Reference>,
    pub tool_links: Vec<ToolLink>,
    pub trace_id: String,
    pub warnings: Vec<Warning>,
}

/// References, localization and warnings. Warnings also reflect any
/// provider fallback recorded on `ctx` so far.
pub fn finalize(
    draft: &DraftResponse,
    evidence: &EvidenceSet<'_>,
    q: &NormalizedQuery,
    tool_links: Vec<ToolLink>,
    front: &FrontDoor,
    trace_id: &str,
    ctx: &mut RequestContext,
) -> Result<FinalResponse> {
    let references = draft
        .used_doc_ids
        .iter()
        .filter_map(|id| evidence.items.iter().find(|s| &s.doc.id == id))
        .map(|s| Reference {
            doc_id: s.doc.id.clone(),
            title: s.doc.title.clone(),
            source_url: s.doc.source_url.clone(),
            timestamp: s.doc.timestamp,
        })
        .collect();
    let localized = front.localize_response(&draft.text, &q.user_lang, ctx)?;
    let mut warnings = Vec::new();
    if q.translation_degraded || localized.degraded {
        warnings.push(Warning::TranslationDegraded);
    }
    if evidence.stage == Stage::None {
        warnings.push(Warning::NoEvidence);
    }
    if ctx.fallbacks.iter().any(|p| p != "translate") {
        warnings.push(Warning::ProviderFallback);
    }
    Ok(FinalResponse {
        text: localized.text,
        language: q.user_lang.clone(),
        references,
        tool_links,
        trace_id: trace_id.to_string(),
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use sha2::{Digest, Sha256};

    fn block(id: &str, score: f64, ts: i64) -> EvidenceBlock {
        EvidenceBlock {
            doc_id: id.into(),
            kind: DocKind::WebPage,
            title: format!("t-{id}"),
            timestamp: render_time(ts),
            timestamp_inferred: false,
            content: format!("c-{id}"),
            score,
            timestamp_secs: ts,
        }
    }

    fn bundle(blocks: Vec<EvidenceBlock>) -> PromptBundle {
        PromptBundle {
            current_time: render_time(1_736_000_000),
            query_pivot: "寒假什么时候开始".into(),
            evidence_blocks: blocks,
            instructions: INSTRUCTIONS.into(),
        }
    }

    #[test]
    fn template_hash_is_pinned() {
        let h = Sha256::digest(crate::assets::PROMPT_TEMPLATE.as_bytes());
        let hex: String = h.iter().map(|b| format!("{b:02x}")).collect();
        assert_eq!(hex, crate::assets::PROMPT_TEMPLATE_SHA256);
    }

    #[test]
    fn render_time_is_rfc3339() {
        assert_eq!(render_time(0), "1970-01-01T00:00:00Z");
        assert_eq!(render_time(1_735_689_600), "2025-01-01T00:00:00Z");
    }

    #[test]
    fn rendered_prompt_has_each_time_once() {
        let b = bundle(vec![
            block("w2024", 0.8, 1_701_388_800),
            block("w2025", 0.8, 1_733_011_200),
        ]);
        let p = render_prompt(&b);
        assert_eq!(p.matches(&b.current_time).count(), 1);
        for blk in &b.evidence_blocks {
            assert_eq!(p.matches(&format!("时间：{}", blk.timestamp)).count(), 1);
            assert_eq!(p.matches(&blk.content).count(), 1);
        }
        assert!(p.contains(INSTRUCTIONS));
        assert!(p.find("w2024").unwrap() < p.find("w2025").unwrap());
    }

    #[test]
    fn placeholders_in_evidence_stay_literal() {
        let mut blk = block("a", 0.5, 1);
        blk.content = "see {query} and {current_time}".into();
        let p = render_prompt(&bundle(vec![blk]));
        assert!(p.contains("see {query} and {current_time}"));
        assert_eq!(p.matches("寒假什么时候开始").count(), 1);
    }

    #[test]
    fn one_block_is_quoted() {
        let d = ExtractiveGenerator.draft(&bundle(vec![block("a", 0.3, 5)]));
        assert_eq!(d.used_doc_ids, vec!["a"]);
        assert!(d.text.contains("c-a"));
    }

    #[test]
    fn newer_block_wins_within_tier() {
        let d = ExtractiveGenerator.draft(&bundle(vec![
            block("w2024", 0.7, 1_701_388_800),
            block("w2025", 0.7, 1_733_011_200),
        ]));
        assert_eq!(d.used_doc_ids, vec!["w2025"]);
        let d = ExtractiveGenerator.draft(&bundle(vec![
            block("w2024", 0.72, 1_701_388_800),
            block("w2025", 0.68, 1_733_011_200),
        ]));
        assert_eq!(d.used_doc_ids, vec!["w2025"]);
    }

    #[test]
    fn score_gap_beats_recency() {
        let d = ExtractiveGenerator.draft(&bundle(vec![
            block("a", 0.9, 1),
            block("b", 0.8, 3),
            block("c", 0.7, 2),
        ]));
        assert_eq!(d.used_doc_ids, vec!["a"]);
    }

    #[test]
    fn timestamp_ties_go_to_smaller_id() {
        let d = ExtractiveGenerator.draft(&bundle(vec![block("b", 0.5, 7), block("a", 0.5, 7)]));
        assert_eq!(d.used_doc_ids, vec!["a"]);
    }

    struct Liar;
    impl Generator for Liar {
        fn generate(
            &self,
            _: &PromptBundle,
        ) -> std::result::Result<(String, Vec<String>), ProviderError> {
            Ok((
                "answer".into(),
                vec!["a".into(), "ghost".into(), "a".into()],
            ))
        }
    }

    #[test]
    fn unverifiable_ids_are_stripped() {
        let mut ctx = RequestContext::default();
        let d = generate(&bundle(vec![block("a", 0.5, 1)]), Some(&Liar), &mut ctx);
        assert_eq!(d.used_doc_ids, vec!["a"]);
    }

    struct Down;
    impl Generator for Down {
        fn generate(
            &self,
            _: &PromptBundle,
        ) -> std::result::Result<(String, Vec<String>), ProviderError> {
            Err(ProviderError::new("generate", "connection refused"))
        }
    }

    #[test]
    fn provider_failure_uses_extractive() {
        let mut ctx = RequestContext::default();
        let d = generate(&bundle(vec![block("a", 0.5, 1)]), Some(&Down), &mut ctx);
        assert_eq!(d.used_doc_ids, vec!["a"]);
        assert!(ctx.fallbacks.contains("generate"));
    }
}
