//! Simple-command detection over a shallow dependency parse, and exact
//! concept matching on the extracted key.

use std::collections::{BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use crate::docstore::{DocKind, DocView, Document};
use crate::error::{Error, ProviderError, Result};
use crate::providers::RequestContext;
use crate::text::{collapse_whitespace, is_cjk, script_runs};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Pos {
    Noun,
    Verb,
    Other,
}

impl Pos {
    /// Lenient mapping of external tag names; anything unknown is `Other`.
    pub fn from_wire(s: &str) -> Self {
        match s.trim().to_ascii_lowercase().as_str() {
            "noun" | "n" | "nn" | "nr" | "ns" | "nt" | "nz" | "propn" => Pos::Noun,
            "verb" | "v" | "vv" => Pos::Verb,
            _ => Pos::Other,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Relation {
    Subject,
    Predicate,
    Object,
    Clause,
    OtherConstituent,
}

impl Relation {
    pub fn from_wire(s: &str) -> Option<Self> {
        Some(
            match s
                .trim()
                .to_ascii_lowercase()
                .replace(['-', ' '], "_")
                .as_str()
            {
                "subject" | "sbv" | "nsubj" => Relation::Subject,
                "predicate" | "hed" | "root" => Relation::Predicate,
                "object" | "vob" | "obj" | "dobj" => Relation::Object,
                "clause" | "ccomp" | "advcl" | "acl" => Relation::Clause,
                "other_constituent" | "other" => Relation::OtherConstituent,
                _ => return None,
            },
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Token {
    pub surface: String,
    pub pos: Pos,
    pub index: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Arc {
    pub head: usize,
    pub dep: usize,
    pub rel: Relation,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParseResult {
    tokens: Vec<Token>,
    arcs: Vec<Arc>,
    annotator_id: String,
}

impl ParseResult {
    /// Checks index contiguity, arc bounds and the one-subject/one-object
    /// per head rule.
    pub fn new(tokens: Vec<Token>, arcs: Vec<Arc>, annotator_id: &str) -> Result<Self> {
        let bad = |m: String| Error::InvalidRequest(format!("parse: {m}"));
        for (i, t) in tokens.iter().enumerate() {
            if t.index != i {
                return Err(bad(format!("token {i} has index {}", t.index)));
            }
        }
        let mut seen: BTreeSet<(usize, bool)> = BTreeSet::new();
        for a in &arcs {
            if a.head >= tokens.len() || a.dep >= tokens.len() {
                return Err(bad(format!("arc {}->{} out of range", a.head, a.dep)));
            }
            let slot = match a.rel {
                Relation::Subject => Some(true),
                Relation::Object => Some(false),
                _ => None,
            };
            if let Some(s) = slot {
                if !seen.insert((a.head, s)) {
                    return Err(bad(format!("head {} has two {:?} arcs", a.head, a.rel)));
                }
            }
        }
        Ok(Self {
            tokens,
            arcs,
            annotator_id: annotator_id.to_string(),
        })
    }

    pub fn tokens(&self) -> &[Token] {
        &self.tokens
    }

    pub fn arcs(&self) -> &[Arc] {
        &self.arcs
    }

    pub fn annotator_id(&self) -> &str {
        &self.annotator_id
    }

    /// Same tokens with one more arc (used to probe rejection rules).
    pub fn with_arc(&self, arc: Arc) -> Result<Self> {
        let mut arcs = self.arcs.clone();
        arcs.push(arc);
        Self::new(self.tokens.clone(), arcs, &self.annotator_id)
    }
}

pub trait ParseProvider: Send + Sync {
    fn id(&self) -> &str;
    fn parse(&self, text: &str) -> std::result::Result<ParseResult, ProviderError>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Entry {
    Word(Pos),
    ClauseMarker,
}

#[derive(Deserialize)]
struct LexiconLine {
    surface: String,
    #[serde(default)]
    pos: Option<String>,
    #[serde(default)]
    role: Option<String>,
}

/// Longest-match lexicon tagger with positional S/V/O heuristics.
#[derive(Debug, Clone, Default)]
pub struct LexiconAnnotator {
    entries: HashMap<String, Entry>,
    /// Longest entry, in segmentation units.
    max_units: usize,
}

/// Smallest segmentation piece: a Han character or a Latin word.
struct Unit {
    start: usize,
    end: usize,
    cjk: bool,
}

fn units(text: &str) -> Vec<Unit> {
    let base = text.as_ptr() as usize;
    let mut out = Vec::new();
    for (cjk, run) in script_runs(text) {
        let off = run.as_ptr() as usize - base;
        if cjk {
            for (i, c) in run.char_indices() {
                out.push(Unit {
                    start: off + i,
                    end: off + i + c.len_utf8(),
                    cjk: true,
                });
            }
        } else {
            out.push(Unit {
                start: off,
                end: off + run.len(),
                cjk: false,
            });
        }
    }
    out
}

/// Lookup key of a span of units: Han characters join directly, anything
/// touching a Latin word joins with one space.
fn span_key(text: &str, us: &[Unit]) -> String {
    let mut key = String::new();
    for (i, u) in us.iter().enumerate() {
        if i > 0 && !(us[i - 1].cjk && u.cjk) {
            key.push(' ');
        }
        key.push_str(&text[u.start..u.end].to_lowercase());
    }
    key
}

fn lexicon_key(surface: &str) -> String {
    let us = units(surface);
    span_key(surface, &us)
}

pub const BUILTIN_ANNOTATOR_ID: &str = "lexicon-v1";

impl LexiconAnnotator {
    pub fn from_jsonl(text: &str) -> Result<Self> {
        let mut lex = Self::default();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let l: LexiconLine = serde_json::from_str(line).map_err(|e| Error::Schema {
                line: i + 1,
                message: e.to_string(),
            })?;
            let entry = match (l.pos.as_deref(), l.role.as_deref()) {
                (_, Some("clause_marker")) => Entry::ClauseMarker,
                (Some(p), None) => Entry::Word(Pos::from_wire(p)),
                _ => {
                    return Err(Error::Schema {
                        line: i + 1,
                        message: "lexicon entry needs pos or role=clause_marker".into(),
                    })
                }
            };
            lex.insert(&l.surface, entry);
        }
        Ok(lex)
    }

    pub fn bundled() -> Self {
        Self::from_jsonl(crate::assets::LEXICON).expect("bundled lexicon is valid")
    }

    fn insert(&mut self, surface: &str, entry: Entry) {
        let n = units(surface).len();
        if n == 0 {
            return;
        }
        self.max_units = self.max_units.max(n);
        self.entries.insert(lexicon_key(surface), entry);
    }

    pub fn add_noun(&mut self, surface: &str) {
        self.insert(surface, Entry::Word(Pos::Noun));
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Segments `text`; unknown Han characters in a row merge into one
    /// `Other` token, unknown Latin words stay separate.
    fn segment(&self, text: &str) -> Vec<(String, Option<Entry>)> {
        let us = units(text);
        let mut out: Vec<(String, Option<Entry>)> = Vec::new();
        let mut pending: Option<(usize, usize)> = None; // unmatched Han span
        let flush = |pending: &mut Option<(usize, usize)>,
                     out: &mut Vec<(String, Option<Entry>)>| {
            if let Some((s, e)) = pending.take() {
                out.push((text[s..e].to_string(), None));
            }
        };
        let mut i = 0;
        while i < us.len() {
            let longest = (1..=self.max_units.min(us.len() - i)).rev().find_map(|n| {
                self.entries
                    .get(&span_key(text, &us[i..i + n]))
                    .map(|e| (n, *e))
            });
            match longest {
                Some((n, entry)) => {
                    flush(&mut pending, &mut out);
                    let surface = collapse_whitespace(&text[us[i].start..us[i + n - 1].end]);
                    out.push((surface, Some(entry)));
                    i += n;
                }
                None if us[i].cjk => {
                    pending = match pending {
                        Some((s, e)) if e == us[i].start => Some((s, us[i].end)),
                        other => {
                            let mut p = other;
                            flush(&mut p, &mut out);
                            Some((us[i].start, us[i].end))
                        }
                    };
                    i += 1;
                }
                None => {
                    flush(&mut pending, &mut out);
                    out.push((text[us[i].start..us[i].end].to_string(), None));
                    i += 1;
                }
            }
        }
        flush(&mut pending, &mut out);
        out
    }

    pub fn annotate(&self, text: &str) -> ParseResult {
        let segs = self.segment(text);
        let tokens: Vec<Token> = segs
            .iter()
            .enumerate()
            .map(|(index, (surface, e))| Token {
                surface: surface.clone(),
                pos: match e {
                    Some(Entry::Word(p)) => *p,
                    _ => Pos::Other,
                },
                index,
            })
            .collect();
        let mut arcs = Vec::new();
        let verb = tokens.iter().position(|t| t.pos == Pos::Verb);
        let markers: Vec<usize> = segs
            .iter()
            .enumerate()
            .filter(|(_, (_, e))| *e == Some(Entry::ClauseMarker))
            .map(|(i, _)| i)
            .collect();
        if let Some(v) = verb {
            arcs.push(Arc {
                head: v,
                dep: v,
                rel: Relation::Predicate,
            });
            let subj = tokens[..v].iter().rposition(|t| t.pos == Pos::Noun);
            let obj = tokens[v + 1..]
                .iter()
                .position(|t| t.pos == Pos::Noun)
                .map(|p| p + v + 1);
            for (slot, rel) in [(subj, Relation::Subject), (obj, Relation::Object)] {
                if let Some(dep) = slot {
                    arcs.push(Arc { head: v, dep, rel });
                }
            }
            for t in &tokens {
                let taken = Some(t.index) == subj || Some(t.index) == obj || t.index == v;
                if !taken && matches!(t.pos, Pos::Noun | Pos::Verb) {
                    arcs.push(Arc {
                        head: v,
                        dep: t.index,
                        rel: Relation::OtherConstituent,
                    });
                }
            }
        }
        for m in markers {
            arcs.push(Arc {
                head: verb.unwrap_or(m),
                dep: m,
                rel: Relation::Clause,
            });
        }
        ParseResult::new(tokens, arcs, BUILTIN_ANNOTATOR_ID).expect("built-in parse is well formed")
    }
}

/// Provider parse with fallback to the lexicon annotator.
pub fn annotate(
    text: &str,
    provider: Option<&dyn ParseProvider>,
    builtin: &LexiconAnnotator,
    ctx: &mut RequestContext,
) -> Result<ParseResult> {
    if text.trim().is_empty() {
        return Err(Error::EmptyText);
    }
    ctx.call("parse");
    if let Some(p) = provider {
        match p.parse(text) {
            Ok(r) => return Ok(r),
            Err(e) => ctx.fell_back(&e),
        }
    }
    Ok(builtin.annotate(text))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CommandVariant {
    Simple,
    Complex,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CommandShape {
    SV,
    VO,
    NounsOnly,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CommandForm {
    pub variant: CommandVariant,
    pub key: Option<String>,
    pub shape: Option<CommandShape>,
    /// Nouns of a `NounsOnly` key, in order.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub nouns: Vec<String>,
}

impl CommandForm {
    pub fn complex() -> Self {
        Self {
            variant: CommandVariant::Complex,
            key: None,
            shape: None,
            nouns: Vec::new(),
        }
    }

    fn simple(shape: CommandShape, key: String, nouns: Vec<String>) -> Self {
        if key.trim().is_empty() {
            return Self::complex();
        }
        Self {
            variant: CommandVariant::Simple,
            key: Some(key),
            shape: Some(shape),
            nouns,
        }
    }

    pub fn is_simple(&self) -> bool {
        self.variant == CommandVariant::Simple
    }
}

fn join_surfaces<'a>(parts: impl IntoIterator<Item = &'a str>) -> String {
    let mut out = String::new();
    for p in parts {
        let glue = match (out.chars().last(), p.chars().next()) {
            (Some(a), Some(b)) => !(is_cjk(a) && is_cjk(b)),
            _ => false,
        };
        if glue {
            out.push(' ');
        }
        out.push_str(p);
    }
    out
}

pub fn reduce_to_command(parse: &ParseResult) -> CommandForm {
    if parse
        .arcs()
        .iter()
        .any(|a| matches!(a.rel, Relation::Clause | Relation::OtherConstituent))
    {
        return CommandForm::complex();
    }
    let kept: Vec<&Token> = parse
        .tokens()
        .iter()
        .filter(|t| t.pos != Pos::Other)
        .collect();
    let verbs: Vec<&Token> = kept
        .iter()
        .copied()
        .filter(|t| t.pos == Pos::Verb)
        .collect();
    let nouns: Vec<&Token> = kept
        .iter()
        .copied()
        .filter(|t| t.pos == Pos::Noun)
        .collect();
    if verbs.is_empty() {
        if nouns.is_empty() {
            return CommandForm::complex();
        }
        let names: Vec<String> = nouns.iter().map(|t| t.surface.clone()).collect();
        let key = join_surfaces(names.iter().map(String::as_str));
        return CommandForm::simple(CommandShape::NounsOnly, key, names);
    }
    if verbs.len() > 1 {
        return CommandForm::complex();
    }
    let v = verbs[0].index;
    let linked = |rel| {
        parse
            .arcs()
            .iter()
            .find(|a| a.head == v && a.rel == rel && parse.tokens()[a.dep].pos == Pos::Noun)
            .map(|a| a.dep)
    };
    let (subj, obj) = (linked(Relation::Subject), linked(Relation::Object));
    // every remaining noun must be the subject or the object
    if nouns
        .iter()
        .any(|t| Some(t.index) != subj && Some(t.index) != obj)
    {
        return CommandForm::complex();
    }
    match (subj, obj) {
        // SVO keys on the object
        (_, Some(o)) => CommandForm::simple(
            CommandShape::VO,
            parse.tokens()[o].surface.clone(),
            Vec::new(),
        ),
        (Some(s), None) => CommandForm::simple(
            CommandShape::SV,
            parse.tokens()[s].surface.clone(),
            Vec::new(),
        ),
        (None, None) => CommandForm::complex(),
    }
}

fn is_terminal_punct(c: char) -> bool {
    c.is_ascii_punctuation()
        || matches!(
            c,
            '。' | '？'
                | '！'
                | '，'
                | '、'
                | '；'
                | '：'
                | '…'
                | '．'
                | '」'
                | '』'
                | '”'
                | '’'
                | '）'
                | '》'
        )
}

/// Trim, casefold, collapse internal whitespace, strip trailing punctuation.
pub fn normalize_concept_key(s: &str) -> String {
    let folded = collapse_whitespace(&s.to_lowercase());
    folded
        .trim_end_matches(|c: char| is_terminal_punct(c) || c.is_whitespace())
        .to_string()
}

/// Unique concept whose normalized title equals the key. For multi-noun
/// keys, a single constituent noun may match instead. Two or more distinct
/// matches count as no match.
pub fn match_concept<'a>(form: &CommandForm, concepts: &DocView<'a>) -> Option<&'a Document> {
    let key = form.key.as_deref()?;
    let unique = |targets: &[String]| -> Option<&'a Document> {
        let mut hits = concepts
            .docs()
            .filter(|d| d.kind == DocKind::Concept)
            .filter(|d| {
                let t = normalize_concept_key(&d.title);
                !t.is_empty() && targets.contains(&t)
            });
        let first = hits.next()?;
        match hits.next() {
            None => Some(first),
            Some(_) => None,
        }
    };
    let whole = normalize_concept_key(key);
    let all_titles = concepts
        .docs()
        .filter(|d| normalize_concept_key(&d.title) == whole)
        .count();
    if all_titles > 0 {
        return unique(&[whole]);
    }
    if form.shape == Some(CommandShape::NounsOnly) && form.nouns.len() > 1 {
        let parts: Vec<String> = form
            .nouns
            .iter()
            .map(|n| normalize_concept_key(n))
            .collect();
        return unique(&parts);
    }
    None
}
