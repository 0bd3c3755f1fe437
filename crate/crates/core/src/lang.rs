//! Language front door: detect the query language, pivot it into the corpus
//! language for retrieval, and bring the answer back into the user's language.

use std::collections::HashMap;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, ProviderError, Result};
use crate::providers::RequestContext;
use crate::text::{collapse_whitespace, is_cjk};

/// Lowercase ASCII primary language subtag (2-3 letters). `und` marks an
/// undetermined language.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct LanguageTag(String);

impl LanguageTag {
    pub fn new(code: &str) -> Result<Self> {
        let code = code.trim().to_ascii_lowercase();
        if (2..=3).contains(&code.len()) && code.bytes().all(|b| b.is_ascii_lowercase()) {
            Ok(Self(code))
        } else {
            Err(Error::InvalidLanguageTag(code))
        }
    }

    pub fn und() -> Self {
        Self("und".into())
    }

    pub fn zh() -> Self {
        Self("zh".into())
    }

    pub fn is_und(&self) -> bool {
        self.0 == "und"
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for LanguageTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl TryFrom<String> for LanguageTag {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        Self::new(&s)
    }
}

impl From<LanguageTag> for String {
    fn from(t: LanguageTag) -> String {
        t.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionResult {
    pub tag: LanguageTag,
    pub confidence: f64,
    pub runner_up: Option<(LanguageTag, f64)>,
}

pub trait LanguageDetector: Send + Sync {
    fn detect(&self, text: &str) -> Result<DetectionResult>;
}

/// Share of alphabetic codepoints that must be Han for the script shortcut.
pub const CJK_SHORTCUT_RATIO: f64 = 0.3;

const MAX_ORDER: usize = 3;

#[derive(Debug, Clone, Default)]
struct Profile {
    counts: [HashMap<String, u32>; MAX_ORDER],
    totals: [u64; MAX_ORDER],
}

/// Character 1-3-gram language identifier with a Han-script shortcut.
///
/// Profiles are add-one smoothed per n-gram order; a text is scored by the
/// summed log-probability of its n-grams, and confidences are the softmax
/// of those scores across languages.
#[derive(Debug, Clone)]
pub struct NgramDetector {
    langs: Vec<(LanguageTag, Profile)>,
    vocab: [usize; MAX_ORDER],
}

/// Lowercase, keep letters and apostrophes, one space between words, and a
/// padding space on both ends so boundary n-grams exist.
fn ngram_source(text: &str) -> Vec<char> {
    let mut out = vec![' '];
    for c in text.chars().flat_map(char::to_lowercase) {
        if c.is_alphabetic() {
            out.push(c);
        } else if out.last() != Some(&' ') {
            out.push(' ');
        }
    }
    if out.last() != Some(&' ') {
        out.push(' ');
    }
    out
}

/// All n-grams (orders 1..=3) of `text`, skipping space-only unigrams.
pub(crate) fn char_ngrams(text: &str) -> Vec<(usize, String)> {
    let chars = ngram_source(text);
    let mut grams = Vec::new();
    for n in 1..=MAX_ORDER {
        for w in chars.windows(n) {
            if n == 1 && w[0] == ' ' {
                continue;
            }
            if w.iter().all(|c| *c == ' ') {
                continue;
            }
            grams.push((n, w.iter().collect()));
        }
    }
    grams
}

impl NgramDetector {
    pub fn from_corpora(corpora: &[(LanguageTag, &str)]) -> Self {
        let mut langs = Vec::new();
        let mut vocab: [std::collections::HashSet<String>; MAX_ORDER] = Default::default();
        for (tag, text) in corpora {
            let mut p = Profile::default();
            for (n, g) in char_ngrams(text) {
                *p.counts[n - 1].entry(g.clone()).or_insert(0) += 1;
                p.totals[n - 1] += 1;
                vocab[n - 1].insert(g);
            }
            langs.push((tag.clone(), p));
        }
        let vocab = [vocab[0].len() + 1, vocab[1].len() + 1, vocab[2].len() + 1];
        Self { langs, vocab }
    }

    /// Detector over the bundled en/fr/zh seed corpora.
    pub fn bundled() -> Self {
        Self::from_corpora(&crate::assets::seed_corpora())
    }

    pub fn languages(&self) -> impl Iterator<Item = &LanguageTag> {
        self.langs.iter().map(|(t, _)| t)
    }

    fn han_ratio(text: &str) -> Option<f64> {
        let (mut alpha, mut han) = (0usize, 0usize);
        for c in text.chars().filter(|c| c.is_alphabetic()) {
            alpha += 1;
            if is_cjk(c) {
                han += 1;
            }
        }
        (alpha > 0).then(|| han as f64 / alpha as f64)
    }

    /// Per-language log-likelihood of `text`.
    pub fn scores(&self, text: &str) -> Vec<(LanguageTag, f64)> {
        let grams = char_ngrams(text);
        self.langs
            .iter()
            .map(|(tag, p)| {
                let ll = grams
                    .iter()
                    .map(|(n, g)| {
                        let c = p.counts[n - 1].get(g).copied().unwrap_or(0) as f64;
                        ((c + 1.0) / (p.totals[n - 1] as f64 + self.vocab[n - 1] as f64)).ln()
                    })
                    .sum::<f64>();
                (tag.clone(), ll)
            })
            .collect()
    }
}

impl LanguageDetector for NgramDetector {
    fn detect(&self, text: &str) -> Result<DetectionResult> {
        if text.trim().is_empty() {
            return Err(Error::EmptyText);
        }
        let und = DetectionResult {
            tag: LanguageTag::und(),
            confidence: 0.0,
            runner_up: None,
        };
        let Some(ratio) = Self::han_ratio(text) else {
            return Ok(und);
        };
        if ratio >= CJK_SHORTCUT_RATIO {
            return Ok(DetectionResult {
                tag: LanguageTag::zh(),
                confidence: ratio,
                runner_up: None,
            });
        }
        // Nothing in the text was ever seen in any profile: unknown script.
        let known = char_ngrams(text)
            .iter()
            .any(|(n, g)| *n == 1 && self.langs.iter().any(|(_, p)| p.counts[0].contains_key(g)));
        if !known || self.langs.is_empty() {
            return Ok(und);
        }
        let mut scores = self.scores(text);
        scores.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        let max = scores[0].1;
        let z: f64 = scores.iter().map(|(_, s)| (s - max).exp()).sum();
        let conf = |s: f64| (s - max).exp() / z;
        Ok(DetectionResult {
            tag: scores[0].0.clone(),
            confidence: conf(scores[0].1),
            runner_up: scores.get(1).map(|(t, s)| (t.clone(), conf(*s))),
        })
    }
}

/// Text translation capability.
pub trait Translator: Send + Sync {
    fn id(&self) -> &str;
    fn translate(
        &self,
        text: &str,
        source: &LanguageTag,
        target: &LanguageTag,
    ) -> std::result::Result<String, ProviderError>;
}

#[derive(Debug, Clone, Deserialize, Serialize)]
pub struct PhrasePair {
    pub src_lang: LanguageTag,
    pub tgt_lang: LanguageTag,
    pub src: String,
    pub tgt: String,
}

/// Built-in translator: exact lookup over fixture phrase pairs, then
/// line-by-line lookup, then `"[target]text"` passthrough.
#[derive(Debug, Clone, Default)]
pub struct PhraseTable {
    pairs: HashMap<(LanguageTag, LanguageTag, String), String>,
}

/// Lookup key: lowercase, single spaces, no space before `? ! : ;`.
fn phrase_key(s: &str) -> String {
    let collapsed = collapse_whitespace(&s.to_lowercase());
    let mut out = String::with_capacity(collapsed.len());
    for c in collapsed.chars() {
        if matches!(c, '?' | '!' | ':' | ';') && out.ends_with(' ') {
            out.pop();
        }
        out.push(c);
    }
    out
}

impl PhraseTable {
    pub fn from_pairs(pairs: impl IntoIterator<Item = PhrasePair>) -> Self {
        let mut t = Self::default();
        for p in pairs {
            t.insert(p);
        }
        t
    }

    pub fn from_jsonl(text: &str) -> Result<Self> {
        let mut pairs = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let p: PhrasePair = serde_json::from_str(line).map_err(|e| Error::Schema {
                line: i + 1,
                message: e.to_string(),
            })?;
            pairs.push(p);
        }
        Ok(Self::from_pairs(pairs))
    }

    pub fn bundled() -> Self {
        Self::from_jsonl(crate::assets::PHRASE_TABLE).expect("bundled phrase table is valid")
    }

    pub fn insert(&mut self, p: PhrasePair) {
        self.pairs
            .insert((p.src_lang, p.tgt_lang, phrase_key(&p.src)), p.tgt);
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn lookup(&self, text: &str, source: &LanguageTag, target: &LanguageTag) -> Option<&str> {
        self.pairs
            .get(&(source.clone(), target.clone(), phrase_key(text)))
            .map(String::as_str)
    }

    fn lookup_lines(
        &self,
        text: &str,
        source: &LanguageTag,
        target: &LanguageTag,
    ) -> Option<String> {
        if !text.contains('\n') {
            return None;
        }
        let mut out = Vec::new();
        for line in text.lines() {
            if line.trim().is_empty() {
                out.push(String::new());
            } else {
                out.push(self.lookup(line, source, target)?.to_string());
            }
        }
        Some(out.join("\n"))
    }
}

impl Translator for PhraseTable {
    fn id(&self) -> &str {
        "builtin-phrase-table"
    }

    fn translate(
        &self,
        text: &str,
        source: &LanguageTag,
        target: &LanguageTag,
    ) -> std::result::Result<String, ProviderError> {
        if let Some(hit) = self.lookup(text, source, target) {
            return Ok(hit.to_string());
        }
        if let Some(lines) = self.lookup_lines(text, source, target) {
            return Ok(lines);
        }
        Ok(format!("[{target}]{text}"))
    }
}

/// `translate` with the identity case excluded by the caller.
pub fn translate(
    text: &str,
    source: &LanguageTag,
    target: &LanguageTag,
    provider: &dyn Translator,
) -> Result<String> {
    if text.trim().is_empty() {
        return Err(Error::EmptyText);
    }
    debug_assert_ne!(
        source, target,
        "identity translation is handled by the caller"
    );
    Ok(provider.translate(text, source, target)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalizedQuery {
    pub raw_text: String,
    pub user_lang: LanguageTag,
    /// Pivot-language form used for all retrieval.
    pub pivot_text: String,
    /// UTC seconds.
    pub received_at: i64,
    pub detection: Option<DetectionResult>,
    /// Query translation failed; `pivot_text` is the raw text.
    pub translation_degraded: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Localized {
    pub text: String,
    pub degraded: bool,
}

/// Detection plus pivot translation in both directions.
#[derive(Clone)]
pub struct FrontDoor {
    pivot: LanguageTag,
    detector: Arc<dyn LanguageDetector>,
    translator: Arc<dyn Translator>,
    /// Tried when `translator` fails; output is still flagged degraded.
    fallback: Option<Arc<dyn Translator>>,
}

impl FrontDoor {
    pub fn new(
        pivot: LanguageTag,
        detector: Arc<dyn LanguageDetector>,
        translator: Arc<dyn Translator>,
    ) -> Self {
        Self {
            pivot,
            detector,
            translator,
            fallback: None,
        }
    }

    pub fn with_fallback(mut self, fallback: Arc<dyn Translator>) -> Self {
        self.fallback = Some(fallback);
        self
    }

    fn degraded_text(
        &self,
        text: &str,
        source: &LanguageTag,
        target: &LanguageTag,
        original: &str,
    ) -> String {
        self.fallback
            .as_ref()
            .and_then(|f| translate(text, source, target, f.as_ref()).ok())
            .filter(|t| !t.trim().is_empty() && *t != format!("[{target}]{text}"))
            .unwrap_or_else(|| original.to_string())
    }

    /// Bundled detector and phrase table, pivot `zh`.
    pub fn builtin() -> Self {
        Self::new(
            LanguageTag::zh(),
            Arc::new(NgramDetector::bundled()),
            Arc::new(PhraseTable::bundled()),
        )
    }

    pub fn pivot(&self) -> &LanguageTag {
        &self.pivot
    }

    pub fn detect_language(&self, text: &str, ctx: &mut RequestContext) -> Result<DetectionResult> {
        ctx.call("detect");
        self.detector.detect(text)
    }

    /// `forced` skips detection; `hint` resolves undetermined detections
    /// (which otherwise fall back to the pivot language).
    pub fn normalize_query(
        &self,
        raw: &str,
        now: i64,
        forced: Option<&LanguageTag>,
        hint: Option<&LanguageTag>,
        ctx: &mut RequestContext,
    ) -> Result<NormalizedQuery> {
        if raw.trim().is_empty() {
            return Err(Error::EmptyText);
        }
        let (user_lang, detection) = match forced {
            Some(tag) => (tag.clone(), None),
            None => {
                let det = self.detect_language(raw, ctx)?;
                let lang = if det.tag.is_und() {
                    hint.cloned().unwrap_or_else(|| self.pivot.clone())
                } else {
                    det.tag.clone()
                };
                (lang, Some(det))
            }
        };
        let mut degraded = false;
        let pivot_text = if user_lang == self.pivot {
            raw.to_string()
        } else {
            ctx.call("translate");
            match translate(raw, &user_lang, &self.pivot, self.translator.as_ref()) {
                Ok(t) if !t.trim().is_empty() => t,
                Ok(_) => raw.to_string(),
                Err(Error::ProviderUnavailable(e)) => {
                    ctx.fell_back(&e);
                    degraded = true;
                    self.degraded_text(raw, &user_lang, &self.pivot, raw)
                }
                Err(e) => return Err(e),
            }
        };
        Ok(NormalizedQuery {
            raw_text: raw.to_string(),
            user_lang,
            pivot_text,
            received_at: now,
            detection,
            translation_degraded: degraded,
        })
    }

    /// Translate a pivot-language answer into `target`. Provider failure
    /// returns the pivot text with `degraded` set.
    pub fn localize_response(
        &self,
        pivot_response: &str,
        target: &LanguageTag,
        ctx: &mut RequestContext,
    ) -> Result<Localized> {
        if pivot_response.trim().is_empty() {
            return Err(Error::EmptyText);
        }
        if target == &self.pivot {
            return Ok(Localized {
                text: pivot_response.to_string(),
                degraded: false,
            });
        }
        ctx.call("translate");
        match translate(
            pivot_response,
            &self.pivot,
            target,
            self.translator.as_ref(),
        ) {
            Ok(text) => Ok(Localized {
                text,
                degraded: false,
            }),
            Err(Error::ProviderUnavailable(e)) => {
                ctx.fell_back(&e);
                Ok(Localized {
                    text: self.degraded_text(pivot_response, &self.pivot, target, pivot_response),
                    degraded: true,
                })
            }
            Err(e) => Err(e),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tag(s: &str) -> LanguageTag {
        LanguageTag::new(s).unwrap()
    }

    struct Down;
    impl Translator for Down {
        fn id(&self) -> &str {
            "down"
        }
        fn translate(
            &self,
            _: &str,
            _: &LanguageTag,
            _: &LanguageTag,
        ) -> std::result::Result<String, ProviderError> {
            Err(ProviderError::new("translate", "connection refused"))
        }
    }

    #[test]
    fn tag_validation() {
        assert_eq!(tag("FR").as_str(), "fr");
        assert!(LanguageTag::new("e").is_err());
        assert!(LanguageTag::new("engl").is_err());
        assert!(LanguageTag::new("e1").is_err());
        assert!(LanguageTag::und().is_und());
    }

    #[test]
    fn detects_fig2_french_query() {
        let d = NgramDetector::bundled();
        let r = d.detect("Où se trouve la Cantine Xinyuan?").unwrap();
        assert_eq!(r.tag, tag("fr"));
        let (_, second) = r.runner_up.unwrap();
        assert!(r.confidence >= second);
    }

    #[test]
    fn all_han_takes_script_shortcut() {
        let r = NgramDetector::bundled().detect("食堂在哪里").unwrap();
        assert_eq!(r.tag, LanguageTag::zh());
        assert_eq!(r.confidence, 1.0);
        assert!(r.runner_up.is_none());
    }

    #[test]
    fn whitespace_only_is_empty_text() {
        assert!(matches!(
            NgramDetector::bundled().detect(" \t\n"),
            Err(Error::EmptyText)
        ));
    }

    #[test]
    fn no_letters_or_unknown_script_is_und() {
        let d = NgramDetector::bundled();
        assert!(d.detect("12345 ???").unwrap().tag.is_und());
        assert!(d.detect("Привет").unwrap().tag.is_und());
    }

    #[test]
    fn detection_is_deterministic() {
        let d = NgramDetector::bundled();
        let text = "Where is the library open?";
        assert_eq!(d.detect(text).unwrap(), d.detect(text).unwrap());
    }

    #[test]
    fn phrase_table_fallback_tags_unknown_text() {
        let t = PhraseTable::bundled();
        let out = translate("unknown-sentence", &tag("en"), &LanguageTag::zh(), &t).unwrap();
        assert_eq!(out, "[zh]unknown-sentence");
    }

    #[test]
    fn phrase_key_ignores_french_spacing_and_case() {
        assert_eq!(
            phrase_key("Où se trouve  la Cantine Xinyuan ?"),
            phrase_key("où se trouve la cantine xinyuan?")
        );
    }

    #[test]
    fn phrase_table_translates_line_by_line() {
        let t = PhraseTable::from_pairs([
            PhrasePair {
                src_lang: tag("zh"),
                tgt_lang: tag("en"),
                src: "一".into(),
                tgt: "one".into(),
            },
            PhrasePair {
                src_lang: tag("zh"),
                tgt_lang: tag("en"),
                src: "二".into(),
                tgt: "two".into(),
            },
        ]);
        assert_eq!(
            t.translate("一\n\n二", &tag("zh"), &tag("en")).unwrap(),
            "one\n\ntwo"
        );
        assert_eq!(
            t.translate("一\n三", &tag("zh"), &tag("en")).unwrap(),
            "[en]一\n三"
        );
    }

    #[test]
    fn pivot_identity_is_byte_exact() {
        let fd = FrontDoor::builtin();
        let mut ctx = RequestContext::default();
        let raw = "食堂在哪里 ";
        let q = fd.normalize_query(raw, 1, None, None, &mut ctx).unwrap();
        assert_eq!(q.user_lang, LanguageTag::zh());
        assert_eq!(q.pivot_text, raw);
        assert_eq!(ctx.calls.get("translate"), 0);
    }

    #[test]
    fn english_query_is_pivoted_through_phrase_table() {
        let fd = FrontDoor::builtin();
        let mut ctx = RequestContext::default();
        let q = fd
            .normalize_query("Where is Canteen Xinyuan?", 1, None, None, &mut ctx)
            .unwrap();
        assert_eq!(q.user_lang, tag("en"));
        assert_ne!(q.pivot_text, q.raw_text);
        assert!(q.pivot_text.contains("新园食堂"));
    }

    #[test]
    fn french_fig2_query_is_pivoted() {
        let fd = FrontDoor::builtin();
        let mut ctx = RequestContext::default();
        let q = fd
            .normalize_query("Où se trouve la Cantine Xinyuan?", 1, None, None, &mut ctx)
            .unwrap();
        assert_eq!(q.user_lang, tag("fr"));
        assert_eq!(q.pivot_text, "新园食堂在哪里？");
    }

    #[test]
    fn failed_query_translation_serves_raw_text() {
        let fd = FrontDoor::new(
            LanguageTag::zh(),
            Arc::new(NgramDetector::bundled()),
            Arc::new(Down),
        );
        let mut ctx = RequestContext::default();
        let q = fd
            .normalize_query("Where is the library?", 1, None, None, &mut ctx)
            .unwrap();
        assert!(q.translation_degraded);
        assert_eq!(q.pivot_text, q.raw_text);
        assert!(ctx.fallbacks.contains("translate"));
    }

    #[test]
    fn fallback_table_serves_known_phrases() {
        let fd = FrontDoor::new(
            LanguageTag::zh(),
            Arc::new(NgramDetector::bundled()),
            Arc::new(Down),
        )
        .with_fallback(Arc::new(PhraseTable::bundled()));
        let mut ctx = RequestContext::default();
        let q = fd
            .normalize_query("Where is Canteen Xinyuan?", 1, None, None, &mut ctx)
            .unwrap();
        assert!(q.translation_degraded);
        assert_eq!(q.pivot_text, "新园食堂在哪里？");
        let q = fd
            .normalize_query("Where is the moon?", 1, None, None, &mut ctx)
            .unwrap();
        assert_eq!(q.pivot_text, "Where is the moon?");
    }

    #[test]
    fn localize_identity_and_degradation() {
        let fd = FrontDoor::new(
            LanguageTag::zh(),
            Arc::new(NgramDetector::bundled()),
            Arc::new(Down),
        );
        let mut ctx = RequestContext::default();
        let same = fd
            .localize_response("你好", &LanguageTag::zh(), &mut ctx)
            .unwrap();
        assert_eq!(
            same,
            Localized {
                text: "你好".into(),
                degraded: false
            }
        );
        let down = fd.localize_response("你好", &tag("fr"), &mut ctx).unwrap();
        assert_eq!(
            down,
            Localized {
                text: "你好".into(),
                degraded: true
            }
        );
    }

    #[test]
    fn und_falls_back_to_hint_then_pivot() {
        let fd = FrontDoor::builtin();
        let mut ctx = RequestContext::default();
        let q = fd
            .normalize_query("12345", 1, None, None, &mut ctx)
            .unwrap();
        assert_eq!(q.user_lang, LanguageTag::zh());
        let q = fd
            .normalize_query("12345", 1, None, Some(&tag("en")), &mut ctx)
            .unwrap();
        assert_eq!(q.user_lang, tag("en"));
    }
}
